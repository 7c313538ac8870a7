//! Synthetic clustered corpora with planted relevance.
//!
//! Documents are partitioned into clusters. The first `num_queries` clusters
//! are the relevant sets of the judged queries; the rest are background
//! topics. The initial pool of each query holds a controlled fraction of its
//! relevant documents, and each graph edge joins two members of the same
//! cluster with a controlled, optionally rank-decaying, probability.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::affinity::CoRelevanceOracle;
use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::graph::{CorpusGraph, Edge};
use crate::ids::{DocId, DocIndex};
use crate::relevance::{Origin, Query, Ranking};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_docs: usize,
    pub num_queries: usize,
    /// Inclusive range of relevant documents per query.
    pub relevant_per_query: (usize, usize),
    /// Inclusive range of background cluster sizes.
    pub cluster_size: (usize, usize),
    /// Length of each initial ranking.
    pub pool_depth: usize,
    /// Expected fraction of a query's relevant documents in its initial pool.
    pub first_stage_recall: f64,
    /// Mean retrieval-score advantage of relevant documents in the pool.
    pub retriever_separation: f64,
    /// Probability that a graph edge joins two members of one cluster.
    pub edge_precision: f64,
    /// Per-rank multiplicative decay of `edge_precision` (1 keeps it flat).
    pub precision_decay: f64,
    /// Out-degree `k` of the generated graph.
    pub graph_depth: u32,
    /// Also generate token bags for lexical scorers.
    pub with_text: bool,
    pub doc_length: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_docs: 2000,
            num_queries: 50,
            relevant_per_query: (8, 24),
            cluster_size: (8, 24),
            pool_depth: 50,
            first_stage_recall: 0.5,
            retriever_separation: 1.0,
            edge_precision: 0.8,
            precision_decay: 1.0,
            graph_depth: 16,
            with_text: false,
            doc_length: 24,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let (rlo, rhi) = self.relevant_per_query;
        let (clo, chi) = self.cluster_size;
        if self.num_docs == 0
            || self.num_queries == 0
            || self.pool_depth == 0
            || self.graph_depth == 0
        {
            return bad(String::from(
                "document, query, pool and graph counts must be at least 1",
            ));
        }
        if rlo == 0 || rlo > rhi || clo == 0 || clo > chi {
            return bad(String::from("size ranges must satisfy 1 <= min <= max"));
        }
        for (name, p) in [
            ("first-stage recall", self.first_stage_recall),
            ("edge precision", self.edge_precision),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(self.precision_decay > 0.0 && self.precision_decay <= 1.0) {
            return bad(format!(
                "precision decay {} outside (0, 1]",
                self.precision_decay
            ));
        }
        if !self.retriever_separation.is_finite() {
            return bad(String::from("retriever separation must be finite"));
        }
        if self.num_queries * rhi > self.num_docs {
            return bad(format!(
                "{} queries with up to {rhi} relevant documents need more than {} documents",
                self.num_queries, self.num_docs
            ));
        }
        let needed = libm::ceil(self.first_stage_recall * rhi as f64) as usize;
        if needed > self.pool_depth {
            return bad(format!(
                "recall target {} needs up to {needed} relevant documents in a pool of {}",
                self.first_stage_recall, self.pool_depth
            ));
        }
        if self.pool_depth > self.num_docs {
            return bad(format!(
                "pool depth {} exceeds the corpus size {}",
                self.pool_depth, self.num_docs
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub docs: DocIndex,
    /// Token bags; empty when text generation is off.
    pub doc_tokens: Vec<Vec<String>>,
    pub clusters: Vec<Vec<DocId>>,
    pub cluster_of: Vec<u32>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub initial: Vec<Ranking>,
    pub graph: CorpusGraph,
}

impl SynthDataset {
    /// Mean fraction of relevant documents present in the initial pools.
    pub fn first_stage_recall(&self) -> f64 {
        let total: f64 = self
            .initial
            .iter()
            .map(|r| {
                let rel = self.qrels.relevant(&r.query_id, 1).count();
                let hit = r
                    .docs()
                    .filter(|&d| self.qrels.grade(&r.query_id, d) >= 1)
                    .count();
                hit as f64 / rel as f64
            })
            .sum();
        total / self.initial.len() as f64
    }

    /// Fraction of edges leaving judged-relevant documents that stay in the
    /// same relevant set.
    pub fn edge_precision(&self) -> f64 {
        let judged = self.queries.len() as u32;
        let (mut hit, mut all) = (0usize, 0usize);
        for (src, e) in self.graph.edges() {
            let c = self.cluster_of[src.index()];
            if c < judged {
                all += 1;
                hit += usize::from(self.cluster_of[e.target.index()] == c);
            }
        }
        if all == 0 {
            0.0
        } else {
            hit as f64 / all as f64
        }
    }

    /// Co-relevance oracle over the planted judgments.
    pub fn affinity_oracle(&self, noise: f64, seed: u64) -> CoRelevanceOracle {
        CoRelevanceOracle::from_qrels(&self.qrels, 1, self.docs.len()).with_noise(noise, seed)
    }
}

/// Name of synthetic query `i`.
pub fn query_name(i: usize) -> String {
    format!("q{i}")
}

/// Name of synthetic document `i`.
pub fn doc_name(i: usize) -> String {
    format!("d{i}")
}

const GLOBAL_VOCAB: usize = 200;
const CLUSTER_VOCAB: usize = 8;

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = rng::rng(spec.seed);
    let n = spec.num_docs;

    let mut order: Vec<DocId> = (0..n as u32).map(DocId).collect();
    order.shuffle(&mut rng);
    let mut clusters: Vec<Vec<DocId>> = Vec::new();
    let mut next = 0;
    for _ in 0..spec.num_queries {
        let size = rng.random_range(spec.relevant_per_query.0..=spec.relevant_per_query.1);
        clusters.push(order[next..next + size].to_vec());
        next += size;
    }
    while next < n {
        let size = rng
            .random_range(spec.cluster_size.0..=spec.cluster_size.1)
            .min(n - next);
        clusters.push(order[next..next + size].to_vec());
        next += size;
    }
    let mut cluster_of = vec![0u32; n];
    for (c, members) in clusters.iter().enumerate() {
        for d in members {
            cluster_of[d.index()] = c as u32;
        }
    }

    let docs = DocIndex::from_names((0..n).map(doc_name))?;
    let mut qrels = Qrels::new();
    for (q, members) in clusters.iter().take(spec.num_queries).enumerate() {
        let name = query_name(q);
        for &d in members {
            qrels.insert(&name, d, rng.random_range(2..=3))?;
        }
    }

    let initial = (0..spec.num_queries)
        .map(|q| initial_pool(spec, &mut rng, q, &clusters[q], &cluster_of))
        .collect::<Result<Vec<_>>>()?;

    let graph = planted_graph(spec, &mut rng, &clusters, &cluster_of)?;

    let (doc_tokens, queries) = if spec.with_text {
        text(spec, &mut rng, &clusters, &cluster_of)
    } else {
        (
            vec![Vec::new(); n],
            (0..spec.num_queries)
                .map(|q| Query::id_only(query_name(q)))
                .collect(),
        )
    };

    Ok(SynthDataset {
        docs,
        doc_tokens,
        clusters,
        cluster_of,
        queries,
        qrels,
        initial,
        graph,
    })
}

fn initial_pool(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    q: usize,
    relevant: &[DocId],
    cluster_of: &[u32],
) -> Result<Ranking> {
    // floor plus a Bernoulli remainder keeps the expected recall exact
    let exact = spec.first_stage_recall * relevant.len() as f64;
    let mut take = libm::floor(exact) as usize;
    if rng.random::<f64>() < exact - take as f64 {
        take += 1;
    }
    let mut rel = relevant.to_vec();
    rel.shuffle(rng);
    rel.truncate(take.min(spec.pool_depth));

    let mut chosen = vec![false; spec.num_docs];
    let mut scored = Vec::with_capacity(spec.pool_depth);
    for &d in &rel {
        chosen[d.index()] = true;
        let noise: f64 = StandardNormal.sample(rng);
        scored.push((d, spec.retriever_separation + noise));
    }
    let non_relevant = spec.num_docs - relevant.len();
    let fill = (spec.pool_depth - rel.len()).min(non_relevant);
    while scored.len() < rel.len() + fill {
        let d = DocId(rng.random_range(0..spec.num_docs as u32));
        if chosen[d.index()] || cluster_of[d.index()] as usize == q {
            continue;
        }
        chosen[d.index()] = true;
        let noise: f64 = StandardNormal.sample(rng);
        scored.push((d, noise));
    }
    Ranking::from_scores(query_name(q), scored, Origin::InitialPool)
}

/// Similarity-like weight of the neighbour at `rank`.
fn rank_weight(rank: usize) -> f32 {
    1.0 / (1.0 + 0.125 * rank as f32)
}

fn planted_graph(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    clusters: &[Vec<DocId>],
    cluster_of: &[u32],
) -> Result<CorpusGraph> {
    let n = spec.num_docs;
    let k = spec.graph_depth as usize;
    let mut used = vec![false; n];
    let mut lists = Vec::with_capacity(n);
    for node in 0..n {
        let c = cluster_of[node] as usize;
        let mut peers: Vec<DocId> = clusters[c]
            .iter()
            .copied()
            .filter(|d| d.index() != node)
            .collect();
        peers.shuffle(rng);
        let outside = n - clusters[c].len();
        let mut list: Vec<Edge> = Vec::with_capacity(k);
        let mut precision = spec.edge_precision;
        for rank in 0..k.min(n - 1) {
            let same_cluster = rng.random::<f64>() < precision;
            precision *= spec.precision_decay;
            let target = if same_cluster && !peers.is_empty() {
                peers.pop()
            } else {
                // a peer exhausted cluster falls back to an outside document
                let taken_outside = list
                    .iter()
                    .filter(|e| cluster_of[e.target.index()] as usize != c)
                    .count();
                if taken_outside >= outside {
                    peers.pop()
                } else {
                    loop {
                        let d = DocId(rng.random_range(0..n as u32));
                        if cluster_of[d.index()] as usize != c && !used[d.index()] {
                            break Some(d);
                        }
                    }
                }
            };
            let Some(target) = target else { break };
            used[target.index()] = true;
            list.push(Edge::new(target, rank_weight(rank)));
        }
        for e in &list {
            used[e.target.index()] = false;
        }
        lists.push(list);
    }
    CorpusGraph::from_adjacency(spec.graph_depth, lists)
}

fn text(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    clusters: &[Vec<DocId>],
    cluster_of: &[u32],
) -> (Vec<Vec<String>>, Vec<Query>) {
    let word = |c: usize, j: usize| format!("c{c}w{j}");
    let docs = (0..spec.num_docs)
        .map(|d| {
            let c = cluster_of[d] as usize;
            (0..spec.doc_length)
                .map(|_| {
                    if rng.random::<f64>() < 0.5 {
                        word(c, rng.random_range(0..CLUSTER_VOCAB))
                    } else {
                        format!("g{}", rng.random_range(0..GLOBAL_VOCAB))
                    }
                })
                .collect()
        })
        .collect();
    let queries = (0..spec.num_queries)
        .map(|q| {
            debug_assert!(!clusters[q].is_empty());
            let mut tokens: Vec<String> = (0..3)
                .map(|_| word(q, rng.random_range(0..CLUSTER_VOCAB)))
                .collect();
            tokens.push(format!("g{}", rng.random_range(0..GLOBAL_VOCAB)));
            Query {
                id: query_name(q),
                tokens,
            }
        })
        .collect();
    (docs, queries)
}
