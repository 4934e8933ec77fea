use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use patenteb::ablate::AblationGrid;
use patenteb::commands::{cmd_ablate, cmd_build, cmd_eval, cmd_verify, leaderboard_path, EmbeddingSource};
use patenteb::corpus::{write_corpus_jsonl, CorpusFormat, StructuralVariant};
use patenteb::embed_io::{EmbedOptions, EmbeddingCache, PromptMode, DEFAULT_BATCH_SIZE};
use patenteb::eval::EvalOptions;
use patenteb::fixture::{generate_corpus, FixtureConfig};
use patenteb::taskgen::BuildConfig;
use patenteb::verify::{all_passed, render, Mutation, VerifyOptions};
use patenteb::Error;

#[derive(Parser)]
#[command(name = "patenteb", version, about = "Patent text embedding benchmark toolkit")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = default_jobs())]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Build the 15 tasks from a patent-family corpus.
    Build {
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        format: Option<CorpusFormat>,
        /// Target sizes: `full` or the scaled-down `desk` preset.
        #[arg(long, value_enum, default_value_t = Preset::Full)]
        preset: Preset,
        /// JSON build configuration; overrides --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<StructuralVariant>,
    },
    /// Evaluate an embedding source on a built task directory.
    Eval {
        task_dir: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        /// JSON report path; the leaderboard CSV goes next to it.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        truncate_dim: Option<usize>,
    },
    /// Run truncation, layer and structural ablation grids.
    Ablate {
        task_dir: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        /// Grid JSON; the full preset grid when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the oracle and soundness checks.
    Verify {
        #[arg(long)]
        families: Option<usize>,
        #[arg(long, hide = true)]
        mutate: Option<MutationArg>,
    },
    /// Write the synthetic fixture corpus as JSONL.
    Fixture {
        out: PathBuf,
        #[arg(long, default_value_t = FixtureConfig::default().families)]
        families: usize,
        #[arg(long, default_value_t = FixtureConfig::default().domains)]
        domains: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    Ndcg,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Base URL of an embedding provider service.
    #[arg(long)]
    provider_url: Option<String>,
    /// Precomputed embedding file keyed by text hash.
    #[arg(long)]
    embeddings_file: Option<PathBuf>,
    /// Offline feature-hashing baseline of this dimension.
    #[arg(long)]
    hashing_dim: Option<usize>,
}

impl SourceArgs {
    fn source(&self) -> EmbeddingSource {
        match (&self.provider_url, &self.embeddings_file, self.hashing_dim) {
            (Some(u), _, _) => EmbeddingSource::Url(u.clone()),
            (_, Some(p), _) => EmbeddingSource::File(p.clone()),
            (_, _, Some(d)) => EmbeddingSource::Hashing(d),
            _ => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long, default_value = "table")]
    prompt_mode: PromptMode,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
}

impl EmbedArgs {
    fn options(&self, jobs: usize) -> EvalOptions {
        EvalOptions {
            prompt_mode: self.prompt_mode,
            embed: EmbedOptions {
                batch_size: self.batch_size.max(1),
                ..EmbedOptions::default()
            },
            jobs,
            cache: EmbeddingCache::from_env(),
            ..EvalOptions::default()
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let jobs = cli.jobs.max(1);
    // Rayon's global pool serves the build; evaluation uses its own pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    match cli.command {
        Command::Build {
            corpus,
            out,
            format,
            preset,
            config,
            seed,
            variant,
        } => {
            let mut cfg = match (config, preset) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text)?
                }
                (None, Preset::Full) => BuildConfig::default(),
                (None, Preset::Desk) => BuildConfig::desk(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(v) = variant {
                cfg.variant = v;
            }
            let m = cmd_build(&corpus, format, cfg, &out)?;
            println!(
                "built {} task files from {} families ({} retained) into {}",
                m.counts.values().map(|s| s.len()).sum::<usize>(),
                m.corpus.families_ingested,
                m.corpus.families_retained,
                out.display()
            );
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Eval {
            task_dir,
            source,
            embed,
            out,
            truncate_dim,
        } => {
            let opts = EvalOptions {
                truncate_dim,
                ..embed.options(jobs)
            };
            let report = cmd_eval(&task_dir, &source.source(), &opts, &out)?;
            let mut stdout = std::io::stdout();
            report
                .render_table(&mut stdout)
                .map_err(|e| Error::Config(e.to_string()))?;
            println!("wrote {} and {}", out.display(), leaderboard_path(&out).display());
        }
        Command::Ablate {
            task_dir,
            source,
            embed,
            grid,
            out,
        } => {
            let grid = match grid {
                Some(p) => AblationGrid::read(&p)?,
                None => AblationGrid::preset(),
            };
            let (csv, rows) = cmd_ablate(&task_dir, &source.source(), &grid, &embed.options(jobs), &out)?;
            println!("wrote {rows} rows to {}", csv.display());
        }
        Command::Verify { families, mutate } => {
            let mut opts = VerifyOptions {
                mutation: mutate.map(|MutationArg::Ndcg| Mutation::Ndcg),
                ..VerifyOptions::default()
            };
            if let Some(n) = families {
                opts.fixture.families = n;
            }
            let rows = cmd_verify(&opts);
            render(&rows, &mut std::io::stdout()).map_err(|e| Error::Config(e.to_string()))?;
            if !all_passed(&rows) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Fixture { out, families, domains } => {
            let cfg = FixtureConfig {
                families,
                domains,
                ..FixtureConfig::default()
            };
            let corpus = generate_corpus(&cfg);
            write_corpus_jsonl(&corpus, &out)?;
            println!("wrote {} families to {}", corpus.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
