//! Seeded random scheduling instances.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quam_core::graph::{CorpusGraph, Edge};
use quam_core::relevance::{Origin, Ranking};
use quam_core::schedulers::{ScheduleConfig, Strategy};
use quam_core::DocId;

use super::oracles::VecScorer;

pub struct Instance {
    pub r0: Ranking,
    pub scorer: VecScorer,
    pub graph: CorpusGraph,
    pub cfg: ScheduleConfig,
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, k: u32, density: f64) -> CorpusGraph {
    let lists = (0..n)
        .map(|src| {
            let mut targets: Vec<u32> = (0..n as u32).filter(|&t| t as usize != src).collect();
            for i in (1..targets.len()).rev() {
                targets.swap(i, rng.random_range(0..=i));
            }
            let mut list = Vec::new();
            for t in targets.into_iter().take(k as usize) {
                if rng.random::<f64>() < density {
                    // coarse weights so ties occur
                    let w = f32::from(rng.random_range(0u8..=8)) / 8.0;
                    list.push(Edge::new(DocId(t), w));
                }
            }
            list
        })
        .collect();
    CorpusGraph::from_adjacency(k, lists).unwrap()
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..80usize);
    let depth = rng.random_range(0..=n);
    let mut ids: Vec<u32> = (0..n as u32).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let r0 = Ranking::from_scores(
        "q",
        ids[..depth]
            .iter()
            .map(|&d| (DocId(d), f64::from(rng.random_range(0u8..20)))),
        Origin::InitialPool,
    )
    .unwrap();
    let noise = rng.random_range(0.0..2.0);
    let scorer = VecScorer(
        (0..n)
            .map(|_| {
                (f64::from(rng.random_range(0u8..4)) + noise * rng.random::<f64>() * 4.0).round()
                    / 4.0
            })
            .collect(),
    );
    let k = rng.random_range(1..=10u32);
    let density = rng.random_range(0.0..=1.0);
    let graph = random_graph(&mut rng, n, k, density);
    let strategy = Strategy::ALL[rng.random_range(0..Strategy::ALL.len())];
    let budget = rng.random_range(1..=n + 10);
    let batch = rng.random_range(1..=20);
    let top_set = rng.random_range(1..=budget);
    let mut cfg = ScheduleConfig::new(strategy, budget)
        .with_batch(batch)
        .with_top_set(top_set);
    cfg.seed = seed;
    if rng.random::<f64>() < 0.3 {
        cfg.estimator = quam_core::setaff::Estimator::RetrieverScores;
    }
    if rng.random::<f64>() < 0.3 {
        cfg.direction = quam_core::setaff::EdgeDirection::MaxOfBoth;
    }
    cfg.record_frontier = rng.random::<f64>() < 0.2;
    Instance {
        r0,
        scorer,
        graph,
        cfg,
    }
}
