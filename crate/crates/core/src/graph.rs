//! Weighted, directed kNN graphs over documents.
//!
//! Every node stores at most `k` out-edges sorted by descending weight, with
//! ties broken by ascending neighbour id. A pair without an edge has affinity
//! zero. The same structure holds both the heuristic corpus graph and the
//! affinity graph obtained by re-weighting its edges.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::affinity::AffinityFn;
use crate::error::{invalid, Error, Result};
use crate::ids::DocId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub target: DocId,
    pub weight: f32,
}

impl Edge {
    pub fn new(target: DocId, weight: f32) -> Self {
        Self { target, weight }
    }
}

/// Canonical edge order: weight descending, then target id ascending.
#[inline]
pub fn edge_order(a: &Edge, b: &Edge) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| a.target.cmp(&b.target))
}

/// Immutable weighted kNN graph in compressed sparse row layout.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusGraph {
    k: u32,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
}

impl CorpusGraph {
    /// A graph with `num_docs` nodes and no edges.
    pub fn empty(num_docs: usize, k: u32) -> Self {
        Self {
            k,
            offsets: alloc::vec![0; num_docs + 1],
            edges: Vec::new(),
        }
    }

    /// Builds a graph from per-node edge lists in any order.
    ///
    /// Lists are sorted into canonical order; every structural invariant is
    /// checked and reported as an [`Error::Data`].
    pub fn from_adjacency(k: u32, lists: Vec<Vec<Edge>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut edges = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for mut list in lists {
            for e in &mut list {
                // -0.0 and 0.0 compare differently under total_cmp.
                if e.weight == 0.0 {
                    e.weight = 0.0;
                }
            }
            list.sort_by(edge_order);
            edges.extend(list);
            offsets.push(edges.len());
        }
        let graph = Self { k, offsets, edges };
        graph.validate()?;
        Ok(graph)
    }

    /// Checks every structural invariant: no self loops, bounded degree,
    /// ids in range, finite non-negative weights and strictly sorted lists.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_docs();
        for node in 0..n {
            let list = &self.edges[self.offsets[node]..self.offsets[node + 1]];
            if list.len() > self.k as usize {
                return Err(Error::Data(format!(
                    "node {node} has degree {} > k = {}",
                    list.len(),
                    self.k
                )));
            }
            for (i, e) in list.iter().enumerate() {
                if e.target.index() >= n {
                    return Err(Error::Data(format!(
                        "edge {node}->{} points outside 0..{n}",
                        e.target.0
                    )));
                }
                if e.target.index() == node {
                    return Err(Error::Data(format!("self loop on node {node}")));
                }
                if !e.weight.is_finite() || e.weight < 0.0 {
                    return Err(Error::Data(format!(
                        "edge {node}->{} has invalid weight {}",
                        e.target.0, e.weight
                    )));
                }
                if i > 0 && edge_order(&list[i - 1], e) != Ordering::Less {
                    return Err(Error::Data(format!(
                        "neighbours of node {node} are not strictly sorted at position {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_docs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Full sorted out-edge list of `doc`; empty for out-of-range ids.
    #[inline]
    pub fn adjacency(&self, doc: DocId) -> &[Edge] {
        let i = doc.index();
        if i >= self.num_docs() {
            return &[];
        }
        &self.edges[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, doc: DocId) -> usize {
        self.adjacency(doc).len()
    }

    /// The first `min(limit, degree)` entries of `doc`'s neighbour list.
    pub fn neighbors(&self, doc: DocId, limit: usize) -> Result<&[Edge]> {
        if doc.index() >= self.num_docs() {
            return Err(invalid!(
                "document {} out of range for graph with {} nodes",
                doc.0,
                self.num_docs()
            ));
        }
        let list = self.adjacency(doc);
        Ok(&list[..limit.min(list.len())])
    }

    /// Weight of the edge `source -> target`, if present.
    pub fn edge_weight(&self, source: DocId, target: DocId) -> Option<f32> {
        self.adjacency(source)
            .iter()
            .find(|e| e.target == target)
            .map(|e| e.weight)
    }

    /// All edges as `(source, edge)` in node order.
    pub fn edges(&self) -> impl Iterator<Item = (DocId, &Edge)> + '_ {
        (0..self.num_docs()).flat_map(move |n| {
            let src = DocId(n as u32);
            self.adjacency(src).iter().map(move |e| (src, e))
        })
    }

    pub fn to_adjacency(&self) -> Vec<Vec<Edge>> {
        (0..self.num_docs())
            .map(|n| self.adjacency(DocId(n as u32)).to_vec())
            .collect()
    }
}

/// Anything that can answer "which documents resemble this one".
pub trait SimilaritySource {
    fn num_docs(&self) -> usize;

    /// Scored candidates for `doc`, in any order. May include `doc` itself.
    fn similar(&self, doc: DocId) -> Result<Vec<(DocId, f64)>>;
}

/// Builds the kNN graph by querying `source` with every document.
///
/// Self matches and negative similarities are discarded; non-finite scores
/// are a data error.
pub fn build_knn_graph<S: SimilaritySource + ?Sized>(source: &S, k: u32) -> Result<CorpusGraph> {
    let n = source.num_docs();
    if n == 0 {
        return Err(invalid!("cannot build a graph over an empty corpus"));
    }
    if k == 0 {
        return Err(invalid!("k must be at least 1"));
    }
    let mut lists = Vec::with_capacity(n);
    for node in 0..n {
        let doc = DocId(node as u32);
        let mut cands = source.similar(doc)?;
        if let Some((d, s)) = cands.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite similarity {s} between {} and {}",
                node, d.0
            )));
        }
        cands.retain(|&(d, s)| d != doc && s >= 0.0);
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        cands.dedup_by_key(|c| c.0);
        cands.truncate(k as usize);
        lists.push(
            cands
                .into_iter()
                .map(|(d, s)| Edge::new(d, s as f32))
                .collect(),
        );
    }
    CorpusGraph::from_adjacency(k, lists)
}

/// Replaces each edge weight by `aff(source, target)` and re-sorts.
pub fn reweight_graph<A: AffinityFn + ?Sized>(graph: &CorpusGraph, aff: &A) -> Result<CorpusGraph> {
    let mut lists = Vec::with_capacity(graph.num_docs());
    for node in 0..graph.num_docs() {
        let src = DocId(node as u32);
        let mut list = Vec::with_capacity(graph.degree(src));
        for e in graph.adjacency(src) {
            let w = aff.affinity(src, e.target)?;
            if !w.is_finite() {
                return Err(Error::Data(format!(
                    "affinity for edge {}->{} is not finite ({w})",
                    src.0, e.target.0
                )));
            }
            if w < 0.0 {
                return Err(Error::Data(format!(
                    "affinity for edge {}->{} is negative ({w})",
                    src.0, e.target.0
                )));
            }
            list.push(Edge::new(e.target, w as f32));
        }
        lists.push(list);
    }
    CorpusGraph::from_adjacency(graph.k(), lists)
}

/// Keeps the `k_new` best neighbours of every node.
pub fn prune_graph(graph: &CorpusGraph, k_new: u32) -> Result<CorpusGraph> {
    if k_new == 0 || k_new > graph.k() {
        return Err(invalid!(
            "pruned depth {k_new} must lie in 1..={}",
            graph.k()
        ));
    }
    let mut offsets = Vec::with_capacity(graph.offsets.len());
    let mut edges = Vec::new();
    offsets.push(0);
    for node in 0..graph.num_docs() {
        let list = graph.adjacency(DocId(node as u32));
        edges.extend_from_slice(&list[..list.len().min(k_new as usize)]);
        offsets.push(edges.len());
    }
    Ok(CorpusGraph {
        k: k_new,
        offsets,
        edges,
    })
}

/// Similarity between dense document vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorSimilarity {
    Dot,
    Cosine,
}

/// Exhaustive similarity over in-memory embeddings.
#[derive(Clone, Debug)]
pub struct DenseEmbeddings {
    vectors: Vec<Vec<f32>>,
    metric: VectorSimilarity,
}

impl DenseEmbeddings {
    pub fn new(vectors: Vec<Vec<f32>>, metric: VectorSimilarity) -> Result<Self> {
        if let Some(first) = vectors.first() {
            if vectors.iter().any(|v| v.len() != first.len()) {
                return Err(invalid!("embeddings have inconsistent dimensions"));
            }
        }
        Ok(Self { vectors, metric })
    }

    fn score(&self, a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| f64::from(*x) * f64::from(*y))
            .sum();
        match self.metric {
            VectorSimilarity::Dot => dot,
            VectorSimilarity::Cosine => {
                let na = libm::sqrt(a.iter().map(|x| f64::from(*x) * f64::from(*x)).sum());
                let nb = libm::sqrt(b.iter().map(|x| f64::from(*x) * f64::from(*x)).sum());
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na * nb)
                }
            }
        }
    }
}

impl SimilaritySource for DenseEmbeddings {
    fn num_docs(&self) -> usize {
        self.vectors.len()
    }

    fn similar(&self, doc: DocId) -> Result<Vec<(DocId, f64)>> {
        let q = self
            .vectors
            .get(doc.index())
            .ok_or_else(|| invalid!("document {} out of range", doc.0))?;
        Ok(self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (DocId(i as u32), self.score(q, v)))
            .collect())
    }
}

/// Similarities given as an explicit symmetric table; mainly for tests and
/// small hand-built corpora.
#[derive(Clone, Debug)]
pub struct PairwiseTable {
    n: usize,
    sims: Vec<f64>,
}

impl PairwiseTable {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            sims: alloc::vec![0.0; n * n],
        }
    }

    pub fn set(&mut self, a: DocId, b: DocId, sim: f64) {
        self.sims[a.index() * self.n + b.index()] = sim;
        self.sims[b.index() * self.n + a.index()] = sim;
    }
}

impl SimilaritySource for PairwiseTable {
    fn num_docs(&self) -> usize {
        self.n
    }

    fn similar(&self, doc: DocId) -> Result<Vec<(DocId, f64)>> {
        if doc.index() >= self.n {
            return Err(invalid!("document {} out of range", doc.0));
        }
        let row = &self.sims[doc.index() * self.n..(doc.index() + 1) * self.n];
        Ok(row
            .iter()
            .enumerate()
            .map(|(i, &s)| (DocId(i as u32), s))
            .collect())
    }
}
