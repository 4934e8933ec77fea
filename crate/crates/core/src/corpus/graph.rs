use std::collections::BTreeSet;

use super::Corpus;

/// Symmetrized citation graph over corpus indices.
///
/// Edge `(a, b)` exists iff `a` cites `b` or `b` cites `a` and both are in the
/// corpus. Self-citations are dropped; citations to absent families are
/// counted in [`CitationGraph::dangling`].
#[derive(Clone, Debug)]
pub struct CitationGraph {
    adjacency: Vec<BTreeSet<usize>>,
    directed: Vec<(usize, usize)>,
    edge_count: usize,
    dangling: usize,
    self_loops: usize,
}

impl CitationGraph {
    pub fn build(corpus: &Corpus) -> Self {
        let n = corpus.len();
        let mut adjacency = vec![BTreeSet::new(); n];
        let mut directed = BTreeSet::new();
        let mut dangling = 0;
        let mut self_loops = 0;
        for (a, fam) in corpus.families().iter().enumerate() {
            for cited in &fam.cites {
                match corpus.index_of(cited) {
                    None => dangling += 1,
                    Some(b) if b == a => self_loops += 1,
                    Some(b) => {
                        directed.insert((a, b));
                        adjacency[a].insert(b);
                        adjacency[b].insert(a);
                    }
                }
            }
        }
        let edge_count = adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2;
        Self {
            adjacency,
            directed: directed.into_iter().collect(),
            edge_count,
            dangling,
            self_loops,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Citations pointing outside the corpus.
    pub fn dangling(&self) -> usize {
        self.dangling
    }

    pub fn self_loops(&self) -> usize {
        self.self_loops
    }

    pub fn neighbors(&self, idx: usize) -> &BTreeSet<usize> {
        &self.adjacency[idx]
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    /// Resolved, de-duplicated `(citing, cited)` pairs sorted by index.
    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    pub fn cites(&self, citing: usize, cited: usize) -> bool {
        self.directed.binary_search(&(citing, cited)).is_ok()
    }
}
