//! Relevance scoring: queries, rankings, scorers and first-stage retrieval.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{invalid, Error, Result};
use crate::eval::Qrels;
use crate::graph::SimilaritySource;
use crate::ids::DocId;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: &str) -> Self {
        Self {
            id: id.into(),
            tokens: tokenize(text),
        }
    }

    /// A query known only by id (oracle and replay scorers ignore text).
    pub fn id_only(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            tokens: Vec::new(),
        }
    }
}

/// Lowercase, split on anything that is not alphanumeric, no stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Which pool a re-ranked document was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    InitialPool,
    Frontier,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankEntry {
    pub doc: DocId,
    pub score: f64,
    pub origin: Origin,
}

/// Global ranking order: score descending, then doc id ascending.
#[inline]
pub fn rank_order(a: &RankEntry, b: &RankEntry) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc.cmp(&b.doc))
}

/// An ordered result list for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub query_id: String,
    entries: Vec<RankEntry>,
}

impl Ranking {
    pub fn empty(query_id: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            entries: Vec::new(),
        }
    }

    /// Sorts `entries` into canonical order. Duplicates and non-finite
    /// scores are rejected.
    pub fn from_entries(query_id: impl Into<String>, mut entries: Vec<RankEntry>) -> Result<Self> {
        let query_id = query_id.into();
        if let Some(e) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(Error::Data(alloc::format!(
                "query {query_id}: document {} has non-finite score",
                e.doc.0
            )));
        }
        entries.sort_by(rank_order);
        let mut seen: Vec<DocId> = entries.iter().map(|e| e.doc).collect();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(alloc::format!(
                "query {query_id}: document {} appears twice",
                w[0].0
            )));
        }
        Ok(Self { query_id, entries })
    }

    pub fn from_scores(
        query_id: impl Into<String>,
        scores: impl IntoIterator<Item = (DocId, f64)>,
        origin: Origin,
    ) -> Result<Self> {
        let entries = scores
            .into_iter()
            .map(|(doc, score)| RankEntry { doc, score, origin })
            .collect();
        Self::from_entries(query_id, entries)
    }

    /// Wraps entries already in canonical order (caller guarantees it).
    pub(crate) fn from_sorted(query_id: String, entries: Vec<RankEntry>) -> Self {
        debug_assert!(entries
            .windows(2)
            .all(|w| rank_order(&w[0], &w[1]) == Ordering::Less));
        Self { query_id, entries }
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn docs(&self) -> impl Iterator<Item = DocId> + '_ {
        self.entries.iter().map(|e| e.doc)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncated(&self, depth: usize) -> Self {
        Self {
            query_id: self.query_id.clone(),
            entries: self.entries[..depth.min(self.entries.len())].to_vec(),
        }
    }
}

/// A relevance model φ(q, d) evaluated on batches of documents.
pub trait Scorer {
    /// Scores `docs` for `query`, one finite value per input in input order.
    fn score(&self, query: &Query, docs: &[DocId]) -> Result<Vec<f64>>;

    /// Size of the document universe, when the scorer knows it.
    fn num_docs(&self) -> Option<usize> {
        None
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, query: &Query, docs: &[DocId]) -> Result<Vec<f64>> {
        (**self).score(query, docs)
    }

    fn num_docs(&self) -> Option<usize> {
        (**self).num_docs()
    }
}

/// Produces an initial ranking from the whole collection.
pub trait Retriever {
    fn retrieve(&self, query: &Query, depth: usize) -> Result<Ranking>;
}

pub fn first_stage_retrieve<R: Retriever + ?Sized>(
    retriever: &R,
    query: &Query,
    depth: usize,
) -> Result<Ranking> {
    if depth == 0 {
        return Err(invalid!("retrieval depth must be at least 1"));
    }
    retriever.retrieve(query, depth)
}

/// Scores the first `min(docs.len(), remaining_budget)` documents.
pub fn score_batch<S: Scorer + ?Sized>(
    scorer: &S,
    query: &Query,
    docs: &[DocId],
    remaining_budget: usize,
) -> Result<Vec<(DocId, f64)>> {
    let take = &docs[..docs.len().min(remaining_budget)];
    if take.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(n) = scorer.num_docs() {
        if let Some(d) = take.iter().find(|d| d.index() >= n) {
            return Err(invalid!("unknown document id {}", d.0));
        }
    }
    let scores = scorer.score(query, take)?;
    if scores.len() != take.len() {
        return Err(Error::Data(alloc::format!(
            "scorer returned {} scores for {} documents",
            scores.len(),
            take.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(alloc::format!(
            "scorer returned non-finite score for document {}",
            take[i].0
        )));
    }
    Ok(take.iter().copied().zip(scores).collect())
}

/// Softmax over the scores of the top set, computed with max subtraction.
pub fn relevance_distribution(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(invalid!("relevance distribution over an empty set"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid!("relevance distribution over non-finite scores"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// In-memory inverted index scored with BM25.
///
/// Uses the non-negative idf `ln(1 + (N - df + 0.5) / (df + 0.5))`; repeated
/// query terms contribute once per occurrence.
#[derive(Clone, Debug)]
pub struct Bm25Index {
    params: Bm25Params,
    vocab: BTreeMap<String, u32>,
    postings: Vec<Vec<(DocId, u32)>>,
    doc_terms: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn new<D: AsRef<[String]>>(docs: &[D], params: Bm25Params) -> Self {
        let mut vocab: BTreeMap<String, u32> = BTreeMap::new();
        let mut postings: Vec<Vec<(DocId, u32)>> = Vec::new();
        let mut doc_terms = Vec::with_capacity(docs.len());
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, tokens) in docs.iter().enumerate() {
            let tokens = tokens.as_ref();
            let mut tf: BTreeMap<u32, u32> = BTreeMap::new();
            for t in tokens {
                let next = vocab.len() as u32;
                let id = *vocab.entry(t.clone()).or_insert(next);
                if id as usize == postings.len() {
                    postings.push(Vec::new());
                }
                *tf.entry(id).or_insert(0) += 1;
            }
            for (&term, &count) in &tf {
                postings[term as usize].push((DocId(i as u32), count));
            }
            doc_terms.push(tf.into_iter().collect());
            doc_len.push(tokens.len() as u32);
        }
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            doc_len.iter().map(|&l| f64::from(l)).sum::<f64>() / docs.len() as f64
        };
        Self {
            params,
            vocab,
            postings,
            doc_terms,
            doc_len,
            avg_len,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    fn idf(&self, term: u32) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.postings[term as usize].len() as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    fn term_weight(&self, tf: u32, doc: DocId) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = if self.avg_len > 0.0 {
            1.0 - b + b * f64::from(self.doc_len[doc.index()]) / self.avg_len
        } else {
            1.0
        };
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Query terms as `(term id, query term frequency)`, unknown terms dropped.
    fn query_terms(&self, tokens: &[String]) -> Vec<(u32, u32)> {
        let mut qtf: BTreeMap<u32, u32> = BTreeMap::new();
        for t in tokens {
            if let Some(&id) = self.vocab.get(t.as_str()) {
                *qtf.entry(id).or_insert(0) += 1;
            }
        }
        qtf.into_iter().collect()
    }

    fn score_terms(&self, terms: &[(u32, u32)], doc: DocId) -> f64 {
        let dt = &self.doc_terms[doc.index()];
        terms
            .iter()
            .filter_map(|&(term, qtf)| {
                dt.binary_search_by_key(&term, |&(t, _)| t)
                    .ok()
                    .map(|pos| f64::from(qtf) * self.idf(term) * self.term_weight(dt[pos].1, doc))
            })
            .sum()
    }

    /// Every document sharing at least one term with the query, with its score.
    fn matches(&self, terms: &[(u32, u32)]) -> Vec<(DocId, f64)> {
        let mut acc: BTreeMap<DocId, f64> = BTreeMap::new();
        for &(term, qtf) in terms {
            let idf = self.idf(term);
            for &(doc, tf) in &self.postings[term as usize] {
                *acc.entry(doc).or_insert(0.0) += f64::from(qtf) * idf * self.term_weight(tf, doc);
            }
        }
        acc.into_iter().collect()
    }

    fn doc_as_query(&self, doc: DocId) -> Vec<(u32, u32)> {
        self.doc_terms[doc.index()].clone()
    }
}

impl Scorer for Bm25Index {
    fn score(&self, query: &Query, docs: &[DocId]) -> Result<Vec<f64>> {
        let terms = self.query_terms(&query.tokens);
        docs.iter()
            .map(|&d| {
                if d.index() >= self.num_docs() {
                    Err(invalid!("unknown document id {}", d.0))
                } else {
                    Ok(self.score_terms(&terms, d))
                }
            })
            .collect()
    }

    fn num_docs(&self) -> Option<usize> {
        Some(self.doc_len.len())
    }
}

impl Retriever for Bm25Index {
    fn retrieve(&self, query: &Query, depth: usize) -> Result<Ranking> {
        let terms = self.query_terms(&query.tokens);
        let mut ranking =
            Ranking::from_scores(query.id.clone(), self.matches(&terms), Origin::InitialPool)?;
        ranking.entries.truncate(depth);
        Ok(ranking)
    }
}

/// Self-retrieval: each document's own term bag is the query.
impl SimilaritySource for Bm25Index {
    fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    fn similar(&self, doc: DocId) -> Result<Vec<(DocId, f64)>> {
        if doc.index() >= self.num_docs() {
            return Err(invalid!("document {} out of range", doc.0));
        }
        Ok(self.matches(&self.doc_as_query(doc)))
    }
}

/// Replays scores from a precomputed run.
#[derive(Clone, Debug, Default)]
pub struct ReplayScorer {
    runs: BTreeMap<String, Ranking>,
    lookup: BTreeMap<String, BTreeMap<DocId, f64>>,
    missing_score: Option<f64>,
}

impl ReplayScorer {
    pub fn new(rankings: impl IntoIterator<Item = Ranking>) -> Self {
        let mut runs = BTreeMap::new();
        let mut lookup = BTreeMap::new();
        for r in rankings {
            lookup.insert(
                r.query_id.clone(),
                r.entries().iter().map(|e| (e.doc, e.score)).collect(),
            );
            runs.insert(r.query_id.clone(), r);
        }
        Self {
            runs,
            lookup,
            missing_score: None,
        }
    }

    /// Score given to documents absent from the replayed run instead of
    /// failing.
    pub fn with_missing_score(mut self, score: f64) -> Self {
        self.missing_score = Some(score);
        self
    }
}

impl Scorer for ReplayScorer {
    fn score(&self, query: &Query, docs: &[DocId]) -> Result<Vec<f64>> {
        let table = self.lookup.get(&query.id);
        docs.iter()
            .map(|d| {
                table
                    .and_then(|t| t.get(d).copied())
                    .or(self.missing_score)
                    .ok_or_else(|| {
                        invalid!(
                            "document {} has no replayed score for query {}",
                            d.0,
                            query.id
                        )
                    })
            })
            .collect()
    }
}

impl Retriever for ReplayScorer {
    fn retrieve(&self, query: &Query, depth: usize) -> Result<Ranking> {
        Ok(self
            .runs
            .get(&query.id)
            .map_or_else(|| Ranking::empty(query.id.clone()), |r| r.truncated(depth)))
    }
}

/// Oracle scorer: graded relevance plus optional zero-mean Gaussian noise.
///
/// The noise for a (seed, query, document) triple is fixed, so repeated or
/// reordered calls return identical scores.
#[derive(Clone, Debug)]
pub struct QrelsOracle<'a> {
    qrels: &'a Qrels,
    noise: f64,
    seed: u64,
    num_docs: Option<usize>,
}

impl<'a> QrelsOracle<'a> {
    pub fn new(qrels: &'a Qrels, noise: f64, seed: u64) -> Self {
        Self {
            qrels,
            noise,
            seed,
            num_docs: None,
        }
    }

    pub fn with_num_docs(mut self, n: usize) -> Self {
        self.num_docs = Some(n);
        self
    }

    fn noise_for(&self, query_key: u64, doc: DocId) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        self.noise * rng::keyed_normal(rng::derive(query_key, &[u64::from(doc.0)]))
    }
}

impl Scorer for QrelsOracle<'_> {
    fn score(&self, query: &Query, docs: &[DocId]) -> Result<Vec<f64>> {
        let key = rng::hash_bytes(self.seed, query.id.as_bytes());
        Ok(docs
            .iter()
            .map(|&d| f64::from(self.qrels.grade(&query.id, d)) + self.noise_for(key, d))
            .collect())
    }

    fn num_docs(&self) -> Option<usize> {
        self.num_docs
    }
}

/// Dense per-query score table. Lookups cost O(1), which makes it the stub
/// scorer for timing the scheduling machinery.
#[derive(Clone, Debug, Default)]
pub struct TableScorer {
    num_docs: usize,
    tables: BTreeMap<String, Vec<f64>>,
}

impl TableScorer {
    pub fn new(num_docs: usize) -> Self {
        Self {
            num_docs,
            tables: BTreeMap::new(),
        }
    }

    /// Precomputes `scorer` over all documents for `query`.
    pub fn fill<S: Scorer + ?Sized>(&mut self, scorer: &S, query: &Query) -> Result<()> {
        let docs: Vec<DocId> = (0..self.num_docs as u32).map(DocId).collect();
        let scores = scorer.score(query, &docs)?;
        self.tables.insert(query.id.clone(), scores);
        Ok(())
    }
}

impl Scorer for TableScorer {
    fn score(&self, query: &Query, docs: &[DocId]) -> Result<Vec<f64>> {
        let table = self
            .tables
            .get(&query.id)
            .ok_or_else(|| invalid!("no score table for query {}", query.id))?;
        docs.iter()
            .map(|d| {
                table
                    .get(d.index())
                    .copied()
                    .ok_or_else(|| invalid!("unknown document id {}", d.0))
            })
            .collect()
    }

    fn num_docs(&self) -> Option<usize> {
        Some(self.num_docs)
    }
}
