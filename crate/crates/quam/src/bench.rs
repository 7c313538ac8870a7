//! Wall-clock latency of the scheduling machinery alone.
//!
//! Scores are precomputed into a [`TableScorer`], so each scorer call is an
//! array lookup and the measured time is frontier, top-set and graph work.

use std::time::Instant;

use quam_core::eval::{evaluate, MetricReport, Qrels};
use quam_core::graph::CorpusGraph;
use quam_core::relevance::{QrelsOracle, Query, Ranking, TableScorer};
use quam_core::schedulers::{rerank, ScheduleConfig};
use quam_core::synth::SynthDataset;
use quam_core::Result;

/// Queries with their initial pools and a stub scorer.
pub struct BenchSet {
    pub queries: Vec<Query>,
    pub initial: Vec<Ranking>,
    pub scorer: TableScorer,
    pub qrels: Qrels,
}

impl BenchSet {
    /// Stub scorer filled from the noisy qrels oracle of a synthetic dataset.
    pub fn from_synth(ds: &SynthDataset, noise: f64, seed: u64) -> Result<Self> {
        let oracle = QrelsOracle::new(&ds.qrels, noise, seed);
        let mut scorer = TableScorer::new(ds.docs.len());
        for q in &ds.queries {
            scorer.fill(&oracle, q)?;
        }
        Ok(Self {
            queries: ds.queries.clone(),
            initial: ds.initial.clone(),
            scorer,
            qrels: ds.qrels.clone(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct LatencyReport {
    /// Mean ms/query of each repeat, in run order.
    pub repeat_ms: Vec<f64>,
    /// Metrics of the last repeat; `ms_per_query` is the mean over repeats.
    pub metrics: MetricReport,
}

/// Runs every query `repeats` times on the current thread.
pub fn latency_bench(
    set: &BenchSet,
    graph: Option<&CorpusGraph>,
    cfg: &ScheduleConfig,
    repeats: usize,
    threshold: i32,
) -> Result<LatencyReport> {
    if repeats == 0 {
        return Err(quam_core::Error::InvalidInput(
            "repeats must be at least 1".into(),
        ));
    }
    cfg.validate()?;
    let mut repeat_ms = Vec::with_capacity(repeats);
    let mut runs = Vec::new();
    for _ in 0..repeats {
        runs.clear();
        let start = Instant::now();
        for (q, r0) in set.queries.iter().zip(&set.initial) {
            let (r1, _) = rerank(r0, q, &set.scorer, graph, cfg)?;
            runs.push(r1);
        }
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        repeat_ms.push(elapsed / set.queries.len().max(1) as f64);
    }
    let mut metrics = evaluate(&runs, &set.qrels, cfg.budget, threshold)?;
    metrics.ms_per_query = Some(repeat_ms.iter().sum::<f64>() / repeats as f64);
    Ok(LatencyReport { repeat_ms, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use quam_core::schedulers::Strategy;
    use quam_core::synth::{generate, SynthSpec};

    #[test]
    fn single_repeat_is_the_measurement() {
        let ds = generate(&SynthSpec {
            num_docs: 300,
            num_queries: 5,
            ..SynthSpec::default()
        })
        .unwrap();
        let set = BenchSet::from_synth(&ds, 0.5, 1).unwrap();
        let cfg = ScheduleConfig::new(Strategy::Quam, 50);
        let rep = latency_bench(&set, Some(&ds.graph), &cfg, 1, 2).unwrap();
        assert_eq!(rep.repeat_ms.len(), 1);
        assert_eq!(rep.metrics.ms_per_query, Some(rep.repeat_ms[0]));
        assert_eq!(rep.metrics.per_query.len(), 5);
        assert!(latency_bench(&set, None, &cfg.clone(), 0, 2).is_err());
    }
}
