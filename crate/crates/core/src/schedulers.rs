//! Budget-constrained re-ranking strategies.
//!
//! All strategies share one loop. Each iteration scores up to `b` documents
//! from the current pool (the initial ranking or the graph frontier), never
//! exceeding the budget `c`, then updates the frontier and switches pools.
//! When the chosen pool is empty the other one is used; the loop ends when
//! `c` documents are scored or both pools are empty.
//!
//! | strategy     | frontier sources      | frontier priority          |
//! |--------------|-----------------------|----------------------------|
//! | `plain`      | none                  | none                       |
//! | `gar`        | every batch document  | max inherited source score |
//! | `gar-laff`   | as `gar`, run on an affinity graph                 |
//! | `gar-setaff` | every batch document  | set affinity to top `s`    |
//! | `quam`       | batch ∩ top `s`       | set affinity to top `s`    |

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Result};
use crate::graph::CorpusGraph;
use crate::ids::DocId;
use crate::relevance::{rank_order, score_batch, Origin, Query, RankEntry, Ranking, Scorer};
use crate::setaff::{
    within_top, EdgeDirection, Estimator, Frontier, IncrementalSetAff, RetrievalScores,
    SetAffIndex, TopSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Plain,
    Gar,
    GarLaff,
    GarSetAff,
    Quam,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Plain,
        Strategy::Gar,
        Strategy::GarLaff,
        Strategy::GarSetAff,
        Strategy::Quam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Plain => "plain",
            Strategy::Gar => "gar",
            Strategy::GarLaff => "gar-laff",
            Strategy::GarSetAff => "gar-setaff",
            Strategy::Quam => "quam",
        }
    }

    pub fn uses_graph(self) -> bool {
        self != Strategy::Plain
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| invalid!("unknown strategy {s:?}"))
    }
}

/// Default top-set size for a budget: 10 at c=50, 30 at c=100, 300 at
/// c=1000, with 50/100/150 at c=250/500/750. Other budgets take the value of
/// the largest listed budget not above them, capped at `c`.
pub fn default_top_set(budget: usize) -> usize {
    const TABLE: [(usize, usize); 6] = [
        (50, 10),
        (100, 30),
        (250, 50),
        (500, 100),
        (750, 150),
        (1000, 300),
    ];
    let s = TABLE
        .iter()
        .rev()
        .find(|(c, _)| *c <= budget)
        .map_or(10, |(_, s)| *s);
    s.min(budget).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleConfig {
    /// Re-ranking budget `c`: maximum number of scored documents.
    pub budget: usize,
    /// Batch size `b`.
    pub batch: usize,
    /// Top-set size `s`.
    pub top_set: usize,
    pub strategy: Strategy,
    pub estimator: Estimator,
    pub direction: EdgeDirection,
    pub seed: u64,
    /// Store a frontier snapshot in every trace step.
    pub record_frontier: bool,
}

impl ScheduleConfig {
    /// Batch 16 and the budget's default top-set size.
    pub fn new(strategy: Strategy, budget: usize) -> Self {
        Self {
            budget,
            batch: 16,
            top_set: default_top_set(budget),
            strategy,
            estimator: Estimator::RankerScores,
            direction: EdgeDirection::OutEdge,
            seed: 0,
            record_frontier: false,
        }
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_top_set(mut self, s: usize) -> Self {
        self.top_set = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(invalid!("batch size must be at least 1"));
        }
        if self.budget == 0 {
            return Err(invalid!("budget must be at least 1"));
        }
        if self.top_set == 0 || self.top_set > self.budget {
            return Err(invalid!(
                "top-set size {} must lie in 1..={}",
                self.top_set,
                self.budget
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pool {
    Initial,
    Frontier,
}

impl Pool {
    fn other(self) -> Self {
        match self {
            Pool::Initial => Pool::Frontier,
            Pool::Frontier => Pool::Initial,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pool::Initial => "R0",
            Pool::Frontier => "F",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub pool: Pool,
    /// Scored documents in scoring order.
    pub batch: Vec<(DocId, f64)>,
    /// Frontier size after the update that follows the batch.
    pub frontier_size: usize,
    /// Unscored documents left in the initial pool.
    pub initial_remaining: usize,
    /// Frontier `(doc, priority)` sorted by doc, when recording is enabled.
    pub frontier: Option<Vec<(DocId, f64)>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn scored(&self) -> impl Iterator<Item = DocId> + '_ {
        self.steps.iter().flat_map(|s| s.batch.iter().map(|b| b.0))
    }

    pub fn num_scored(&self) -> usize {
        self.steps.iter().map(|s| s.batch.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sources {
    EveryBatchDoc,
    BatchInTopSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Priority {
    InheritScore,
    SetAffinity,
}

#[derive(Clone, Copy, Debug)]
struct Rule {
    sources: Sources,
    priority: Priority,
}

fn rule_for(strategy: Strategy) -> Option<Rule> {
    match strategy {
        Strategy::Plain => None,
        Strategy::Gar | Strategy::GarLaff => Some(Rule {
            sources: Sources::EveryBatchDoc,
            priority: Priority::InheritScore,
        }),
        Strategy::GarSetAff => Some(Rule {
            sources: Sources::EveryBatchDoc,
            priority: Priority::SetAffinity,
        }),
        Strategy::Quam => Some(Rule {
            sources: Sources::BatchInTopSet,
            priority: Priority::SetAffinity,
        }),
    }
}

/// Re-ranks the first `min(c, |r0|)` documents of `r0`.
pub fn rerank_plain<S: Scorer + ?Sized>(
    r0: &Ranking,
    query: &Query,
    scorer: &S,
    cfg: &ScheduleConfig,
) -> Result<(Ranking, Trace)> {
    run(r0, query, scorer, None, cfg, None)
}

/// Graph adaptive re-ranking: neighbours of each scored document inherit
/// its score as frontier priority (the maximum over sources, ties broken by
/// the neighbour's rank in the source's list).
pub fn rerank_gar<S: Scorer + ?Sized>(
    r0: &Ranking,
    query: &Query,
    scorer: &S,
    graph: &CorpusGraph,
    cfg: &ScheduleConfig,
) -> Result<(Ranking, Trace)> {
    run(r0, query, scorer, Some(graph), cfg, rule_for(Strategy::Gar))
}

/// Set-affinity adaptive re-ranking over an affinity graph.
pub fn rerank_quam<S: Scorer + ?Sized>(
    r0: &Ranking,
    query: &Query,
    scorer: &S,
    affinity_graph: &CorpusGraph,
    cfg: &ScheduleConfig,
) -> Result<(Ranking, Trace)> {
    run(
        r0,
        query,
        scorer,
        Some(affinity_graph),
        cfg,
        rule_for(Strategy::Quam),
    )
}

/// The two ablations between `gar` and `quam`, chosen by `cfg.strategy`.
///
/// `gar-laff` is `gar` over an affinity-reweighted (and usually pruned)
/// graph. `gar-setaff` keeps GAR's expansion from every batch document but
/// ranks the frontier by set affinity.
pub fn rerank_gar_variant<S: Scorer + ?Sized>(
    r0: &Ranking,
    query: &Query,
    scorer: &S,
    graph: &CorpusGraph,
    cfg: &ScheduleConfig,
) -> Result<(Ranking, Trace)> {
    match cfg.strategy {
        Strategy::GarLaff | Strategy::GarSetAff => {
            run(r0, query, scorer, Some(graph), cfg, rule_for(cfg.strategy))
        }
        other => Err(invalid!("{other} is not a GAR variant")),
    }
}

/// Dispatches on `cfg.strategy`. Graph strategies require `graph`.
pub fn rerank<S: Scorer + ?Sized>(
    r0: &Ranking,
    query: &Query,
    scorer: &S,
    graph: Option<&CorpusGraph>,
    cfg: &ScheduleConfig,
) -> Result<(Ranking, Trace)> {
    if cfg.strategy.uses_graph() && graph.is_none() {
        return Err(invalid!("strategy {} needs a graph", cfg.strategy));
    }
    run(r0, query, scorer, graph, cfg, rule_for(cfg.strategy))
}

/// Per-query state of the set-affinity strategies.
struct SetAffState {
    /// Out-edge affinities, updated per top-set change.
    tracker: Option<IncrementalSetAff>,
    /// Max-of-both affinities, rebuilt per top-set change.
    top: Option<TopSet>,
    index: SetAffIndex,
    retrieval: Option<RetrievalScores>,
}

impl SetAffState {
    /// Whether a top set exists yet.
    fn ready(&self) -> bool {
        match &self.tracker {
            Some(t) => !t.is_empty(),
            None => self.top.is_some(),
        }
    }

    /// Frontier key of `doc`: its set affinity up to a factor shared by all
    /// candidates.
    fn key(&self, doc: DocId, graph: &CorpusGraph) -> f64 {
        match (&self.tracker, &self.top) {
            (Some(t), _) => t.key(doc),
            (None, Some(top)) => self.index.get(doc, top, graph),
            (None, None) => 0.0,
        }
    }

    /// Factor turning frontier keys into set affinities.
    fn normalizer(&self) -> f64 {
        match &self.tracker {
            Some(t) if t.normalizer() > 0.0 => t.normalizer(),
            _ => 1.0,
        }
    }
}

fn run<S: Scorer + ?Sized>(
    r0: &Ranking,
    query: &Query,
    scorer: &S,
    graph: Option<&CorpusGraph>,
    cfg: &ScheduleConfig,
    rule: Option<Rule>,
) -> Result<(Ranking, Trace)> {
    cfg.validate()?;
    let rule = rule.filter(|_| graph.is_some());
    let initial: Vec<DocId> = r0.docs().collect();
    let universe = initial
        .iter()
        .map(|d| d.index() + 1)
        .max()
        .unwrap_or(0)
        .max(graph.map_or(0, CorpusGraph::num_docs));

    let mut in_initial = vec![false; universe];
    for d in &initial {
        in_initial[d.index()] = true;
    }
    let mut frontier = Frontier::new(universe);
    let mut cursor = 0;
    let mut initial_remaining = initial.len();
    let mut r1: Vec<RankEntry> = Vec::with_capacity(cfg.budget.min(universe));
    let mut trace = Trace::default();
    let mut setaff = match rule {
        Some(Rule {
            priority: Priority::SetAffinity,
            ..
        }) => Some(SetAffState {
            tracker: (cfg.direction == EdgeDirection::OutEdge)
                .then(|| IncrementalSetAff::new(universe)),
            top: None,
            index: SetAffIndex::new(
                if cfg.direction == EdgeDirection::OutEdge {
                    0
                } else {
                    universe
                },
                cfg.direction,
            ),
            retrieval: (cfg.estimator == Estimator::RetrieverScores)
                .then(|| RetrievalScores::from_ranking(r0)),
        }),
        _ => None,
    };
    let mut nominal = Pool::Initial;

    while r1.len() < cfg.budget {
        while cursor < initial.len() && frontier.is_excluded(initial[cursor]) {
            cursor += 1;
        }
        let has_initial = cursor < initial.len();
        let pool = match (nominal, has_initial, frontier.is_empty()) {
            (Pool::Initial, true, _) | (Pool::Frontier, true, true) => Pool::Initial,
            (_, _, false) => Pool::Frontier,
            (_, false, true) => break,
        };
        let want = cfg.batch.min(cfg.budget - r1.len());
        let docs = match pool {
            Pool::Initial => {
                let mut docs = Vec::with_capacity(want);
                while docs.len() < want && cursor < initial.len() {
                    let d = initial[cursor];
                    cursor += 1;
                    if !frontier.is_excluded(d) {
                        docs.push(d);
                    }
                }
                docs
            }
            Pool::Frontier => frontier.pop_top(want),
        };
        let batch = score_batch(scorer, query, &docs, want)?;
        let origin = match pool {
            Pool::Initial => Origin::InitialPool,
            Pool::Frontier => Origin::Frontier,
        };
        let mut entries = Vec::with_capacity(batch.len());
        for &(doc, score) in &batch {
            frontier.exclude(doc);
            if in_initial[doc.index()] {
                initial_remaining -= 1;
            }
            let entry = RankEntry { doc, score, origin };
            let at = r1.partition_point(|e| rank_order(e, &entry).is_lt());
            r1.insert(at, entry);
            entries.push(entry);
        }

        if let (Some(rule), Some(graph)) = (rule, graph) {
            match rule.priority {
                Priority::InheritScore => {
                    for &(doc, score) in &batch {
                        for (rank, e) in graph.adjacency(doc).iter().enumerate() {
                            frontier.offer(e.target, score, rank as u32);
                        }
                    }
                }
                Priority::SetAffinity => {
                    let state = setaff.as_mut().expect("set-affinity state");
                    let entered_entries: Vec<RankEntry> = entries
                        .iter()
                        .filter(|e| within_top(&r1, cfg.top_set, e))
                        .copied()
                        .collect();
                    let entered: Vec<DocId> = entered_entries.iter().map(|e| e.doc).collect();
                    // S only changes when a batch document enters it.
                    let changed = !entered.is_empty();
                    let mut rekey_all = false;
                    if changed {
                        if let Some(tracker) = state.tracker.as_mut() {
                            let retrieval = state.retrieval.as_ref();
                            rekey_all = tracker.update(
                                &r1,
                                cfg.top_set,
                                batch.len(),
                                &entered_entries,
                                graph,
                                |e| retrieval.map_or(e.score, |r| r.get(e.doc)),
                            )?;
                        } else {
                            let top = TopSet::from_sorted_entries(
                                &r1,
                                cfg.top_set,
                                cfg.estimator,
                                state.retrieval.as_ref(),
                            )?;
                            state.index.rebuild(&top, graph);
                            state.top = Some(top);
                            rekey_all = true;
                        }
                    }
                    let sources: &[DocId] = match rule.sources {
                        Sources::BatchInTopSet => &entered,
                        Sources::EveryBatchDoc => &docs[..batch.len()],
                    };
                    let mut added = Vec::new();
                    for &src in sources {
                        for e in graph.adjacency(src) {
                            if frontier.insert(e.target) {
                                added.push(e.target);
                            }
                        }
                    }
                    if state.ready() {
                        if rekey_all {
                            frontier.reprioritize(|d| state.key(d, graph));
                        } else {
                            if let Some(tracker) = state.tracker.as_ref().filter(|_| changed) {
                                for &d in tracker.changed() {
                                    frontier.set_priority(d, tracker.key(d));
                                }
                            }
                            for d in added {
                                frontier.set_priority(d, state.key(d, graph));
                            }
                        }
                    }
                }
            }
        }

        let snapshot = cfg.record_frontier.then(|| {
            let mut snap = frontier.snapshot();
            if let Some(state) = &setaff {
                let z = state.normalizer();
                for entry in &mut snap {
                    entry.1 /= z;
                }
            }
            snap
        });
        trace.steps.push(TraceStep {
            pool,
            batch,
            frontier_size: frontier.len(),
            initial_remaining,
            frontier: snapshot,
        });
        nominal = pool.other();
    }

    Ok((Ranking::from_sorted(String::from(&*r0.query_id), r1), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn default_top_sets() {
        assert_eq!(default_top_set(50), 10);
        assert_eq!(default_top_set(100), 30);
        assert_eq!(default_top_set(1000), 300);
        assert_eq!(default_top_set(5), 5);
        assert_eq!(default_top_set(120), 30);
    }

    #[test]
    fn config_validation() {
        let cfg = ScheduleConfig::new(Strategy::Quam, 10);
        assert!(cfg.validate().is_ok());
        assert!(cfg.clone().with_batch(0).validate().is_err());
        assert!(cfg.clone().with_top_set(11).validate().is_err());
        assert!(cfg.with_top_set(0).validate().is_err());
    }

    #[test]
    fn graph_strategy_without_graph_rejected() {
        let r0 = Ranking::empty("q");
        let scorer = crate::relevance::TableScorer::new(0);
        let cfg = ScheduleConfig::new(Strategy::Gar, 10);
        assert!(rerank(&r0, &Query::id_only("q"), &scorer, None, &cfg).is_err());
        let g =
            CorpusGraph::from_adjacency(1, vec![vec![Edge::new(DocId(1), 1.0)], vec![]]).unwrap();
        let cfg = ScheduleConfig::new(Strategy::Quam, 10);
        assert!(rerank_gar_variant(&r0, &Query::id_only("q"), &scorer, &g, &cfg).is_err());
    }
}
