//! Graded judgments and ranking metrics (nDCG@k, Recall@c).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::ids::DocId;
use crate::relevance::Ranking;

/// Default grade threshold for binary relevance in Recall@c.
pub const DEFAULT_RECALL_THRESHOLD: i32 = 2;

/// Graded judgments, `(query, doc) -> grade`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    by_query: BTreeMap<String, BTreeMap<DocId, i32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment. Negative grades and duplicate keys are rejected.
    pub fn insert(&mut self, query: &str, doc: DocId, grade: i32) -> Result<()> {
        if grade < 0 {
            return Err(Error::Data(alloc::format!(
                "negative grade {grade} for query {query}, document {}",
                doc.0
            )));
        }
        let judged = self.by_query.entry(String::from(query)).or_default();
        if judged.insert(doc, grade).is_some() {
            return Err(Error::Data(alloc::format!(
                "duplicate judgment for query {query}, document {}",
                doc.0
            )));
        }
        Ok(())
    }

    /// Grade of `doc` for `query`; unjudged pairs are grade 0.
    pub fn grade(&self, query: &str, doc: DocId) -> i32 {
        self.by_query
            .get(query)
            .and_then(|j| j.get(&doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn judged(&self, query: &str) -> Option<&BTreeMap<DocId, i32>> {
        self.by_query.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, DocId, i32)> {
        self.by_query
            .iter()
            .flat_map(|(q, j)| j.iter().map(move |(&d, &g)| (q.as_str(), d, g)))
    }

    pub fn num_queries(&self) -> usize {
        self.by_query.len()
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_query.is_empty()
    }

    /// Documents of `query` with grade at least `threshold`.
    pub fn relevant(&self, query: &str, threshold: i32) -> impl Iterator<Item = DocId> + '_ {
        self.by_query.get(query).into_iter().flat_map(move |j| {
            j.iter()
                .filter(move |(_, &g)| g >= threshold)
                .map(|(&d, _)| d)
        })
    }
}

/// |relevant ∩ top-c| / |relevant|, 0 when the query has no relevant docs.
pub fn recall_at(run: &Ranking, qrels: &Qrels, cutoff: usize, threshold: i32) -> Result<f64> {
    if cutoff == 0 {
        return Err(invalid!("recall cutoff must be at least 1"));
    }
    let total = qrels.relevant(&run.query_id, threshold).count();
    if total == 0 {
        return Ok(0.0);
    }
    let found = run
        .entries()
        .iter()
        .take(cutoff)
        .filter(|e| qrels.grade(&run.query_id, e.doc) >= threshold)
        .count();
    Ok(found as f64 / total as f64)
}

fn gain(grade: i32) -> f64 {
    libm::exp2(f64::from(grade)) - 1.0
}

fn discount(rank: usize) -> f64 {
    libm::log2(rank as f64 + 1.0)
}

/// nDCG with gain `2^grade - 1` and discount `log2(rank + 1)`.
pub fn ndcg_at(run: &Ranking, qrels: &Qrels, cutoff: usize) -> Result<f64> {
    if cutoff == 0 {
        return Err(invalid!("nDCG cutoff must be at least 1"));
    }
    let dcg: f64 = run
        .entries()
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, e)| gain(qrels.grade(&run.query_id, e.doc)) / discount(i + 1))
        .sum();
    let mut ideal: Vec<i32> = qrels
        .judged(&run.query_id)
        .map(|j| j.values().copied().filter(|&g| g > 0).collect())
        .unwrap_or_default();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i + 1))
        .sum();
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg / idcg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryMetrics {
    pub query_id: String,
    pub ndcg_10: f64,
    pub ndcg_c: f64,
    pub recall_c: f64,
    /// The query has no document at or above the recall threshold.
    pub no_relevant: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub cutoff: usize,
    pub per_query: Vec<QueryMetrics>,
    pub mean_ndcg_10: f64,
    pub mean_ndcg_c: f64,
    pub mean_recall_c: f64,
    /// Mean milliseconds per query, filled in by latency runs.
    pub ms_per_query: Option<f64>,
}

/// Evaluates every judged query. A judged query without a ranking counts as
/// an empty run; rankings for unjudged queries are ignored.
pub fn evaluate(
    runs: &[Ranking],
    qrels: &Qrels,
    cutoff: usize,
    threshold: i32,
) -> Result<MetricReport> {
    let by_id: BTreeMap<&str, &Ranking> = runs.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let mut per_query = Vec::with_capacity(qrels.num_queries());
    for q in qrels.queries() {
        let empty;
        let run = match by_id.get(q) {
            Some(r) => *r,
            None => {
                empty = Ranking::empty(q);
                &empty
            }
        };
        per_query.push(QueryMetrics {
            query_id: String::from(q),
            ndcg_10: ndcg_at(run, qrels, 10)?,
            ndcg_c: ndcg_at(run, qrels, cutoff)?,
            recall_c: recall_at(run, qrels, cutoff, threshold)?,
            no_relevant: qrels.relevant(q, threshold).next().is_none(),
        });
    }
    let mean = |f: fn(&QueryMetrics) -> f64| {
        if per_query.is_empty() {
            0.0
        } else {
            per_query.iter().map(f).sum::<f64>() / per_query.len() as f64
        }
    };
    Ok(MetricReport {
        cutoff,
        mean_ndcg_10: mean(|m| m.ndcg_10),
        mean_ndcg_c: mean(|m| m.ndcg_c),
        mean_recall_c: mean(|m| m.recall_c),
        per_query,
        ms_per_query: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relevance::Origin;

    fn run(docs: &[u32]) -> Ranking {
        Ranking::from_scores(
            "q",
            docs.iter()
                .enumerate()
                .map(|(i, &d)| (DocId(d), 100.0 - i as f64)),
            Origin::InitialPool,
        )
        .unwrap()
    }

    fn qrels(pairs: &[(u32, i32)]) -> Qrels {
        let mut q = Qrels::new();
        for &(d, g) in pairs {
            q.insert("q", DocId(d), g).unwrap();
        }
        q
    }

    #[test]
    fn recall_examples() {
        let qr = qrels(&[(1, 3), (2, 2), (3, 1)]);
        assert_eq!(recall_at(&run(&[1, 9]), &qr, 2, 2).unwrap(), 0.5);
        assert_eq!(recall_at(&run(&[2, 1, 5]), &qr, 2, 2).unwrap(), 1.0);
        assert_eq!(recall_at(&run(&[7, 8]), &qr, 2, 2).unwrap(), 0.0);
        assert_eq!(recall_at(&run(&[1]), &Qrels::new(), 5, 1).unwrap(), 0.0);
        assert!(recall_at(&run(&[1]), &qr, 0, 1).is_err());
    }

    #[test]
    fn ndcg_hand_computed() {
        let qr = qrels(&[(1, 3), (2, 0), (3, 1)]);
        let v = ndcg_at(&run(&[1, 2, 3]), &qr, 3).unwrap();
        // DCG = 7 + 0 + 1/2, IDCG = 7 + 1/log2(3) = 7.630930; 7.5 / 7.630930 = 0.98284223
        assert!((v - 7.5 / (7.0 + 1.0 / 3f64.log2())).abs() < 1e-15, "{v}");
        assert!((v - 0.982841).abs() < 2e-6, "{v}");
        assert!((ndcg_at(&run(&[1, 3, 2]), &qr, 3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ndcg_at(&Ranking::empty("q"), &qr, 10).unwrap(), 0.0);
    }

    #[test]
    fn qrels_rejects_duplicates_and_negative() {
        let mut q = qrels(&[(1, 1)]);
        assert!(q.insert("q", DocId(1), 2).is_err());
        assert!(q.insert("q", DocId(2), -1).is_err());
    }

    #[test]
    fn report_means_and_missing_runs() {
        let mut qr = qrels(&[(1, 2)]);
        qr.insert("other", DocId(4), 2).unwrap();
        let rep = evaluate(&[run(&[1])], &qr, 5, 2).unwrap();
        assert_eq!(rep.per_query.len(), 2);
        assert_eq!(rep.mean_recall_c, 0.5);
        let expected: f64 = rep.per_query.iter().map(|m| m.ndcg_10).sum::<f64>() / 2.0;
        assert_eq!(rep.mean_ndcg_10, expected);
    }
}
