//! Brute-force reference implementations used by the test suites.
//!
//! Each function recomputes its result from first principles with plain
//! loops and no shared code from the library beyond the data types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use quam_core::affinity::TrainingTriple;
use quam_core::eval::Qrels;
use quam_core::graph::CorpusGraph;
use quam_core::relevance::{Query, Ranking, Scorer};
use quam_core::schedulers::{Pool, Trace};
use quam_core::{DocId, Result};

/// Softmax written directly from the definition, without max-subtraction.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Weight of the edge `from -> to` by linear scan, 0 when absent.
pub fn edge(graph: &CorpusGraph, from: DocId, to: DocId) -> f64 {
    for (src, e) in graph.edges() {
        if src == from && e.target == to {
            return f64::from(e.weight);
        }
    }
    0.0
}

/// Expected set affinity of `doc` to `members` weighted by `probs`.
pub fn set_affinity(doc: DocId, members: &[DocId], probs: &[f64], graph: &CorpusGraph) -> f64 {
    let mut total = 0.0;
    for (i, &m) in members.iter().enumerate() {
        total += probs[i] * edge(graph, m, doc);
    }
    total
}

pub fn recall(run: &[DocId], grades: &BTreeMap<DocId, i32>, cutoff: usize, threshold: i32) -> f64 {
    let relevant: Vec<DocId> = grades
        .iter()
        .filter(|(_, &g)| g >= threshold)
        .map(|(&d, _)| d)
        .collect();
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0;
    for d in &relevant {
        if run.iter().take(cutoff).any(|x| x == d) {
            hits += 1;
        }
    }
    hits as f64 / relevant.len() as f64
}

pub fn ndcg(run: &[DocId], grades: &BTreeMap<DocId, i32>, cutoff: usize) -> f64 {
    let gain = |g: i32| 2f64.powi(g) - 1.0;
    let mut dcg = 0.0;
    for (i, d) in run.iter().take(cutoff).enumerate() {
        let g = grades.get(d).copied().unwrap_or(0);
        dcg += gain(g) / ((i + 2) as f64).ln() * std::f64::consts::LN_2;
    }
    let mut all: Vec<i32> = grades.values().copied().collect();
    all.sort();
    all.reverse();
    let mut idcg = 0.0;
    for (i, &g) in all.iter().take(cutoff).enumerate() {
        idcg += gain(g) / ((i + 2) as f64).ln() * std::f64::consts::LN_2;
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Top-k most similar other documents from a full similarity matrix.
pub fn knn(sims: &[Vec<f64>], k: usize) -> Vec<Vec<(DocId, f64)>> {
    let n = sims.len();
    (0..n)
        .map(|i| {
            let mut row: Vec<(DocId, f64)> = (0..n)
                .filter(|&j| j != i && sims[i][j] >= 0.0)
                .map(|j| (DocId(j as u32), f64::from(sims[i][j] as f32)))
                .collect();
            row.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            row.truncate(k);
            row
        })
        .collect()
}

/// All triples by enumeration over rank positions.
pub fn triples(r0: &[DocId], r1: &[DocId], k: usize) -> Vec<TrainingTriple> {
    let mut out = Vec::new();
    for label in [1u8, 0] {
        let sources: Vec<DocId> = if label == 1 {
            r0[..k].to_vec()
        } else {
            r0[r0.len() - k..].to_vec()
        };
        for &a in &sources {
            for &b in &r1[..k] {
                if a != b {
                    out.push(TrainingTriple {
                        doc_a: a,
                        doc_b: b,
                        label,
                    });
                }
            }
        }
    }
    out
}

pub fn qrels_map(qrels: &Qrels, query: &str) -> BTreeMap<DocId, i32> {
    qrels.judged(query).cloned().unwrap_or_default()
}

/// Scores every document from a fixed table, ignoring the query.
pub struct VecScorer(pub Vec<f64>);

impl Scorer for VecScorer {
    fn score(&self, _: &Query, docs: &[DocId]) -> Result<Vec<f64>> {
        Ok(docs.iter().map(|d| self.0[d.index()]).collect())
    }

    fn num_docs(&self) -> Option<usize> {
        Some(self.0.len())
    }
}

/// Checks the structural scheduling invariants of one trace and returns a
/// description of the first violation.
pub fn check_trace(
    r0: &Ranking,
    r1: &Ranking,
    trace: &Trace,
    graph: Option<&CorpusGraph>,
    budget: usize,
    batch: usize,
) -> std::result::Result<(), String> {
    let scored: Vec<DocId> = trace.scored().collect();
    let unique: BTreeSet<DocId> = scored.iter().copied().collect();
    if unique.len() != scored.len() {
        return Err("a document was scored twice".into());
    }
    if scored.len() > budget {
        return Err(format!("{} scored over budget {budget}", scored.len()));
    }
    if r1.len() != scored.len() {
        return Err("R1 size differs from the number of scored documents".into());
    }
    let r1_docs: BTreeSet<DocId> = r1.docs().collect();
    if r1_docs != unique {
        return Err("R1 differs from the scored set".into());
    }
    for w in r1.entries().windows(2) {
        let ordered = w[0].score > w[1].score || (w[0].score == w[1].score && w[0].doc < w[1].doc);
        if !ordered {
            return Err("R1 is not sorted".into());
        }
    }
    for step in &trace.steps {
        if step.batch.is_empty() || step.batch.len() > batch {
            return Err(format!("batch of size {}", step.batch.len()));
        }
    }
    // docs drawn from R0 form R0 in order, minus docs already scored from F
    let r0_docs: Vec<DocId> = r0.docs().collect();
    let mut seen: BTreeSet<DocId> = BTreeSet::new();
    let mut cursor = 0;
    for step in &trace.steps {
        for &(d, _) in &step.batch {
            match step.pool {
                Pool::Initial => {
                    while cursor < r0_docs.len() && seen.contains(&r0_docs[cursor]) {
                        cursor += 1;
                    }
                    if cursor >= r0_docs.len() || r0_docs[cursor] != d {
                        return Err(format!("{d} drawn from R0 out of order"));
                    }
                    cursor += 1;
                }
                Pool::Frontier => {
                    let g = graph.ok_or("frontier draw without a graph")?;
                    if !seen.iter().any(|&s| g.edge_weight(s, d).is_some()) {
                        return Err(format!(
                            "{d} drawn from F is not a neighbour of a scored doc"
                        ));
                    }
                }
            }
        }
        for &(d, _) in &step.batch {
            seen.insert(d);
        }
        if let Some(frontier) = &step.frontier {
            if let Some((d, _)) = frontier.iter().find(|(d, _)| seen.contains(d)) {
                return Err(format!("scored document {d} is still on the frontier"));
            }
        }
    }
    Ok(())
}

/// Documents reachable from R0 by following edges out of any scored doc.
pub fn closure(r0: &Ranking, graph: Option<&CorpusGraph>) -> usize {
    let mut seen: BTreeSet<DocId> = r0.docs().collect();
    let mut stack: Vec<DocId> = seen.iter().copied().collect();
    if let Some(g) = graph {
        while let Some(d) = stack.pop() {
            for e in g.adjacency(d) {
                if seen.insert(e.target) {
                    stack.push(e.target);
                }
            }
        }
    }
    seen.len()
}

/// Budget adherence: plain scores `min(c, |R0|)`; strategies that expand
/// from every scored document reach `min(c, closure)`; QUAM stops short of
/// `c` only when both pools are empty.
pub fn check_budget(
    strategy: quam_core::schedulers::Strategy,
    r0: &Ranking,
    r1: &Ranking,
    trace: &Trace,
    graph: &CorpusGraph,
    budget: usize,
) -> std::result::Result<(), String> {
    use quam_core::schedulers::Strategy;
    let expected = match strategy {
        Strategy::Plain => Some(budget.min(r0.len())),
        Strategy::Quam => None,
        _ => Some(budget.min(closure(r0, Some(graph)))),
    };
    match expected {
        Some(n) if r1.len() != n => {
            Err(format!("{strategy}: |R1| = {} but expected {n}", r1.len()))
        }
        Some(_) => Ok(()),
        None if r1.len() == budget => Ok(()),
        None => match trace.steps.last() {
            Some(s) if s.initial_remaining == 0 && s.frontier_size == 0 => Ok(()),
            None if r0.is_empty() => Ok(()),
            _ => Err(format!(
                "{strategy}: stopped at {} of {budget} with pools left",
                r1.len()
            )),
        },
    }
}
