//! Document-to-document affinity functions and pseudo co-relevance mining.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::eval::Qrels;
use crate::graph::{CorpusGraph, SimilaritySource};
use crate::ids::{DocId, DocIndex};
use crate::relevance::Ranking;
use crate::rng;

/// Affinity `f(a, b)` between two documents, a finite value in `[0, 1]`.
pub trait AffinityFn {
    fn affinity(&self, a: DocId, b: DocId) -> Result<f64>;
}

impl<A: AffinityFn + ?Sized> AffinityFn for &A {
    fn affinity(&self, a: DocId, b: DocId) -> Result<f64> {
        (**self).affinity(a, b)
    }
}

/// Exhaustive similarity source scoring every pair with an affinity
/// function. Quadratic; meant for small corpora.
#[derive(Clone, Copy, Debug)]
pub struct AllPairs<A> {
    pub affinity: A,
    pub num_docs: usize,
}

impl<A: AffinityFn> SimilaritySource for AllPairs<A> {
    fn num_docs(&self) -> usize {
        self.num_docs
    }

    fn similar(&self, doc: DocId) -> Result<Vec<(DocId, f64)>> {
        (0..self.num_docs as u32)
            .map(DocId)
            .filter(|&d| d != doc)
            .map(|d| Ok((d, self.affinity.affinity(doc, d)?)))
            .collect()
    }
}

/// Reads weights straight from an existing graph; absent edges are 0.
#[derive(Clone, Copy, Debug)]
pub struct CachedEdges<'g> {
    graph: &'g CorpusGraph,
}

impl<'g> CachedEdges<'g> {
    pub fn new(graph: &'g CorpusGraph) -> Self {
        Self { graph }
    }
}

impl AffinityFn for CachedEdges<'_> {
    fn affinity(&self, a: DocId, b: DocId) -> Result<f64> {
        Ok(self.graph.edge_weight(a, b).map_or(0.0, f64::from))
    }
}

/// TF-IDF cosine over token bags, a lexical stand-in for a learnt model.
#[derive(Clone, Debug)]
pub struct LexicalAffinity {
    vectors: Vec<Vec<(u32, f64)>>,
}

impl LexicalAffinity {
    pub fn new<D: AsRef<[String]>>(docs: &[D]) -> Self {
        let mut vocab: BTreeMap<&str, u32> = BTreeMap::new();
        let mut df: Vec<u32> = Vec::new();
        let mut tfs: Vec<BTreeMap<u32, u32>> = Vec::with_capacity(docs.len());
        for tokens in docs {
            let mut tf = BTreeMap::new();
            for t in tokens.as_ref() {
                let next = vocab.len() as u32;
                let id = *vocab.entry(t.as_str()).or_insert(next);
                if id as usize == df.len() {
                    df.push(0);
                }
                *tf.entry(id).or_insert(0u32) += 1;
            }
            for &id in tf.keys() {
                df[id as usize] += 1;
            }
            tfs.push(tf);
        }
        let n = docs.len() as f64;
        let vectors = tfs
            .into_iter()
            .map(|tf| {
                let mut v: Vec<(u32, f64)> = tf
                    .into_iter()
                    .map(|(t, c)| {
                        (
                            t,
                            f64::from(c) * libm::log(1.0 + n / f64::from(df[t as usize])),
                        )
                    })
                    .collect();
                let norm = libm::sqrt(v.iter().map(|(_, w)| w * w).sum());
                if norm > 0.0 {
                    for (_, w) in &mut v {
                        *w /= norm;
                    }
                }
                v
            })
            .collect();
        Self { vectors }
    }

    fn vector(&self, d: DocId) -> Result<&[(u32, f64)]> {
        self.vectors
            .get(d.index())
            .map(Vec::as_slice)
            .ok_or_else(|| invalid!("document {} out of range", d.0))
    }
}

impl AffinityFn for LexicalAffinity {
    fn affinity(&self, a: DocId, b: DocId) -> Result<f64> {
        let (va, vb) = (self.vector(a)?, self.vector(b)?);
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < va.len() && j < vb.len() {
            match va[i].0.cmp(&vb[j].0) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    dot += va[i].1 * vb[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(dot.clamp(0.0, 1.0))
    }
}

/// Qrels co-relevance oracle: 1 when two documents are relevant to a common
/// query, else 0, optionally perturbed by symmetric Gaussian noise and clamped
/// to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct CoRelevanceOracle {
    /// Per document, sorted indices of the queries it is relevant to.
    groups: Vec<Vec<u32>>,
    members: Vec<Vec<DocId>>,
    noise: f64,
    seed: u64,
}

impl CoRelevanceOracle {
    pub fn from_qrels(qrels: &Qrels, threshold: i32, num_docs: usize) -> Self {
        let mut groups = alloc::vec![Vec::new(); num_docs];
        let mut members = Vec::new();
        for (qi, q) in qrels.queries().enumerate() {
            let rel: Vec<DocId> = qrels
                .relevant(q, threshold)
                .filter(|d| d.index() < num_docs)
                .collect();
            for d in &rel {
                groups[d.index()].push(qi as u32);
            }
            members.push(rel);
        }
        Self {
            groups,
            members,
            noise: 0.0,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, noise: f64, seed: u64) -> Self {
        self.noise = noise;
        self.seed = seed;
        self
    }

    pub fn co_relevant(&self, a: DocId, b: DocId) -> bool {
        let (Some(ga), Some(gb)) = (self.groups.get(a.index()), self.groups.get(b.index())) else {
            return false;
        };
        let (mut i, mut j) = (0, 0);
        while i < ga.len() && j < gb.len() {
            match ga[i].cmp(&gb[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    fn value(&self, a: DocId, b: DocId) -> f64 {
        let label = if self.co_relevant(a, b) { 1.0 } else { 0.0 };
        if self.noise == 0.0 {
            return label;
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let key = rng::derive(self.seed, &[u64::from(lo.0), u64::from(hi.0)]);
        (label + self.noise * rng::keyed_normal(key)).clamp(0.0, 1.0)
    }
}

impl AffinityFn for CoRelevanceOracle {
    fn affinity(&self, a: DocId, b: DocId) -> Result<f64> {
        if a.index() >= self.groups.len() || b.index() >= self.groups.len() {
            return Err(invalid!("document pair ({}, {}) out of range", a.0, b.0));
        }
        Ok(self.value(a, b))
    }
}

/// Oracle kNN source: the co-relevant documents of each document.
impl SimilaritySource for CoRelevanceOracle {
    fn num_docs(&self) -> usize {
        self.groups.len()
    }

    fn similar(&self, doc: DocId) -> Result<Vec<(DocId, f64)>> {
        let groups = self
            .groups
            .get(doc.index())
            .ok_or_else(|| invalid!("document {} out of range", doc.0))?;
        let mut out: Vec<DocId> = groups
            .iter()
            .flat_map(|&q| self.members[q as usize].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out.into_iter().map(|d| (d, self.value(doc, d))).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainingTriple {
    pub doc_a: DocId,
    pub doc_b: DocId,
    pub label: u8,
}

/// Pseudo co-relevant pairs for one query.
///
/// Positives pair the top `k` of `r0` with the top `k` of `r1`, negatives pair
/// the bottom `k` of `r0` with the same top of `r1`. Self pairs are dropped.
pub fn mine_triples(r0: &Ranking, r1: &Ranking, k: usize) -> Result<Vec<TrainingTriple>> {
    if k == 0 {
        return Err(invalid!("k must be at least 1"));
    }
    if r0.len() < 2 * k {
        return Err(Error::InsufficientPool {
            needed: 2 * k,
            got: r0.len(),
        });
    }
    if r1.len() < k {
        return Err(Error::InsufficientPool {
            needed: k,
            got: r1.len(),
        });
    }
    let r0 = r0.entries();
    let positives = &r0[..k];
    let negatives = &r0[r0.len() - k..];
    let top = &r1.entries()[..k];
    let mut out = Vec::with_capacity(2 * k * k);
    for (pool, label) in [(positives, 1u8), (negatives, 0u8)] {
        for a in pool {
            for b in top {
                if a.doc != b.doc {
                    out.push(TrainingTriple {
                        doc_a: a.doc,
                        doc_b: b.doc,
                        label,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Number of queries per count of relevant documents (grade ≥ `threshold`).
/// Queries with judgments but no relevant document land in bucket 0.
pub fn co_relevance_histogram(qrels: &Qrels, threshold: i32) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for q in qrels.queries() {
        *hist
            .entry(qrels.relevant(q, threshold).count())
            .or_insert(0) += 1;
    }
    hist
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffinityQuality {
    /// Fraction of pairs classified correctly with `f >= 0.5` as positive.
    pub accuracy: f64,
    /// Probability that a random positive outscores a random negative,
    /// ties counted half.
    pub auc: f64,
}

pub fn affinity_eval<A: AffinityFn + ?Sized>(
    aff: &A,
    pairs: &[(DocId, DocId, bool)],
) -> Result<AffinityQuality> {
    if pairs.is_empty() {
        return Err(invalid!("no labelled pairs"));
    }
    let mut scored = Vec::with_capacity(pairs.len());
    for &(a, b, label) in pairs {
        let f = aff.affinity(a, b)?;
        if !f.is_finite() {
            return Err(Error::Data(alloc::format!(
                "non-finite affinity for ({}, {})",
                a.0,
                b.0
            )));
        }
        scored.push((f, label));
    }
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Undefined(String::from(
            "AUC needs at least one positive and one negative pair",
        )));
    }
    let correct = scored.iter().filter(|(f, l)| (*f >= 0.5) == *l).count();

    // Mann-Whitney U from mid-ranks.
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j + 1 < scored.len() && scored[j + 1].0 == scored[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * scored[i..=j].iter().filter(|s| s.1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (positives as f64, negatives as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(AffinityQuality {
        accuracy: correct as f64 / scored.len() as f64,
        auc: u / (p * n),
    })
}

/// Resolves triples to external names, e.g. for writing a training file.
pub fn triple_names<'a>(
    triples: &'a [TrainingTriple],
    index: &'a DocIndex,
) -> impl Iterator<Item = Result<(&'a str, &'a str, u8)>> + 'a {
    triples.iter().map(move |t| {
        let a = index
            .name(t.doc_a)
            .ok_or_else(|| invalid!("document {} has no name", t.doc_a.0))?;
        let b = index
            .name(t.doc_b)
            .ok_or_else(|| invalid!("document {} has no name", t.doc_b.0))?;
        Ok((a, b, t.label))
    })
}
