pub mod ablate;
pub mod commands;
pub mod corpus;
pub mod distill;
pub mod domains;
pub mod embed_io;
mod error;
pub mod eval;
pub mod fixture;
pub mod fragments;
pub mod losses;
pub mod metrics;
pub mod numeric;
pub mod report;
pub mod seed;
pub mod taskgen;
pub mod verify;

pub use error::{Error, Result};

/// `f64` instantiations of the generic numeric core.
pub type MatrixF64 = numeric::Matrix<f64>;
pub type LossConfigF64 = losses::LossConfig<f64>;
pub type PairGradF64 = losses::PairGrad<f64>;
pub type TripletGradF64 = losses::TripletGrad<f64>;
pub type SoftmaxGradF64 = losses::SoftmaxGrad<f64>;
pub type ProjectionMatrixF64 = distill::ProjectionMatrix<f64>;
pub type KMeansResultF64 = metrics::KMeansResult<f64>;
pub type ClusteringScoreF64 = metrics::ClusteringScore<f64>;
pub type RetrievalScoreF64 = metrics::RetrievalScore<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
