//! Expected set affinity of frontier candidates to the current top set.
//!
//! `SetAff(d, S) = Σ_{d' ∈ S} P(Rel(d')) · f(d, d')`, where `P(Rel)` is the
//! softmax of the members' scores and `f` is read from the affinity graph.
//! Absent edges contribute zero. [`set_affinity`], [`SetAffIndex`] and
//! [`refresh_frontier`] sum over `S` in rank order and agree bit for bit.
//! [`IncrementalSetAff`] keeps running sums instead and agrees to rounding.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{invalid, Result};
use crate::graph::CorpusGraph;
use crate::ids::DocId;
use crate::relevance::{rank_order, relevance_distribution, RankEntry, Ranking};

/// Which scores induce the relevance distribution over the top set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Scores assigned by the re-ranker.
    #[default]
    RankerScores,
    /// First-stage retrieval scores of the same documents.
    RetrieverScores,
}

/// How `f(d, d')` is read from a directed graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EdgeDirection {
    /// Weight of the edge from the top-set member `d'` to the candidate `d`.
    #[default]
    OutEdge,
    /// Larger of the two directed weights.
    MaxOfBoth,
}

/// First-stage scores used by [`Estimator::RetrieverScores`].
///
/// Documents the retriever never returned get the lowest retrieved score.
#[derive(Clone, Debug, Default)]
pub struct RetrievalScores {
    scores: BTreeMap<DocId, f64>,
    floor: f64,
}

impl RetrievalScores {
    pub fn from_ranking(r0: &Ranking) -> Self {
        let scores: BTreeMap<DocId, f64> = r0.entries().iter().map(|e| (e.doc, e.score)).collect();
        let floor = r0.entries().last().map_or(0.0, |e| e.score);
        Self { scores, floor }
    }

    pub fn get(&self, doc: DocId) -> f64 {
        self.scores.get(&doc).copied().unwrap_or(self.floor)
    }
}

/// The top `s` re-ranked documents with their relevance probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct TopSet {
    members: Vec<(DocId, f64)>,
    probs: Vec<f64>,
    capacity: usize,
    estimator: Estimator,
}

impl TopSet {
    /// Top set over a prefix of entries already in canonical rank order.
    pub fn from_sorted_entries(
        entries: &[RankEntry],
        capacity: usize,
        estimator: Estimator,
        retrieval: Option<&RetrievalScores>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid!("top set of an empty ranking"));
        }
        if capacity == 0 {
            return Err(invalid!("top set capacity must be at least 1"));
        }
        let members: Vec<(DocId, f64)> = entries
            .iter()
            .take(capacity)
            .map(|e| (e.doc, e.score))
            .collect();
        let basis: Vec<f64> = match estimator {
            Estimator::RankerScores => members.iter().map(|m| m.1).collect(),
            Estimator::RetrieverScores => {
                let r = retrieval.ok_or_else(|| {
                    invalid!("retriever-score estimator needs first-stage scores")
                })?;
                members.iter().map(|m| r.get(m.0)).collect()
            }
        };
        let probs = relevance_distribution(&basis)?;
        Ok(Self {
            members,
            probs,
            capacity,
            estimator,
        })
    }

    pub fn members(&self) -> &[(DocId, f64)] {
        &self.members
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn docs(&self) -> impl Iterator<Item = DocId> + '_ {
        self.members.iter().map(|m| m.0)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn contains(&self, doc: DocId) -> bool {
        self.members.iter().any(|m| m.0 == doc)
    }
}

/// `S ← top s of R1`, with probabilities recomputed from scratch.
pub fn update_top_set(
    r1: &Ranking,
    s: usize,
    estimator: Estimator,
    retrieval: Option<&RetrievalScores>,
) -> Result<TopSet> {
    TopSet::from_sorted_entries(r1.entries(), s, estimator, retrieval)
}

fn affinity_between(
    graph: &CorpusGraph,
    candidate: DocId,
    member: DocId,
    dir: EdgeDirection,
) -> f64 {
    let out = graph.edge_weight(member, candidate).map_or(0.0, f64::from);
    match dir {
        EdgeDirection::OutEdge => out,
        EdgeDirection::MaxOfBoth => {
            out.max(graph.edge_weight(candidate, member).map_or(0.0, f64::from))
        }
    }
}

/// Set affinity of a single document by direct evaluation of the sum.
pub fn set_affinity(doc: DocId, top: &TopSet, graph: &CorpusGraph, dir: EdgeDirection) -> f64 {
    let mut total = 0.0;
    for ((member, _), p) in top.members.iter().zip(&top.probs) {
        let f = affinity_between(graph, doc, *member, dir);
        if f != 0.0 {
            total += p * f;
        }
    }
    total
}

/// Set affinities of every out-neighbour of the top set, computed in one
/// scatter pass over the members' adjacency lists (`O(s·k)`).
#[derive(Clone, Debug)]
pub struct SetAffIndex {
    acc: Vec<f64>,
    marked: Vec<bool>,
    touched: Vec<DocId>,
    /// MaxOfBoth only: member position per doc and in-edges from members.
    position: Vec<u32>,
    inbox: Vec<(DocId, u32, f32)>,
    positioned: Vec<DocId>,
    direction: EdgeDirection,
}

const NOT_MEMBER: u32 = u32::MAX;

impl SetAffIndex {
    pub fn new(num_docs: usize, direction: EdgeDirection) -> Self {
        Self {
            acc: vec![0.0; num_docs],
            marked: vec![false; num_docs],
            touched: Vec::new(),
            position: match direction {
                EdgeDirection::OutEdge => Vec::new(),
                EdgeDirection::MaxOfBoth => vec![NOT_MEMBER; num_docs],
            },
            inbox: Vec::new(),
            positioned: Vec::new(),
            direction,
        }
    }

    fn clear(&mut self) {
        for d in self.touched.drain(..) {
            self.acc[d.index()] = 0.0;
            self.marked[d.index()] = false;
        }
        for d in self.positioned.drain(..) {
            self.position[d.index()] = NOT_MEMBER;
        }
        self.inbox.clear();
    }

    /// Recomputes the index for `top`, discarding the previous contents.
    pub fn rebuild(&mut self, top: &TopSet, graph: &CorpusGraph) {
        self.clear();
        for (i, ((member, _), &p)) in top.members.iter().zip(&top.probs).enumerate() {
            if self.direction == EdgeDirection::MaxOfBoth {
                if let Some(slot) = self.position.get_mut(member.index()) {
                    *slot = i as u32;
                    self.positioned.push(*member);
                }
            }
            for e in graph.adjacency(*member) {
                let t = e.target.index();
                if t >= self.acc.len() {
                    continue;
                }
                if !self.marked[t] {
                    self.marked[t] = true;
                    self.touched.push(e.target);
                }
                match self.direction {
                    EdgeDirection::OutEdge => self.acc[t] += p * f64::from(e.weight),
                    EdgeDirection::MaxOfBoth => self.inbox.push((e.target, i as u32, e.weight)),
                }
            }
        }
        if self.direction == EdgeDirection::MaxOfBoth {
            self.inbox.sort_unstable_by_key(|x| (x.0, x.1));
        }
    }

    /// `SetAff(doc, top)` for the set the index was last rebuilt with.
    pub fn get(&self, doc: DocId, top: &TopSet, graph: &CorpusGraph) -> f64 {
        match self.direction {
            EdgeDirection::OutEdge => self.acc.get(doc.index()).copied().unwrap_or(0.0),
            EdgeDirection::MaxOfBoth => {
                let lo = self.inbox.partition_point(|x| x.0 < doc);
                let hi = self.inbox.partition_point(|x| x.0 <= doc);
                let mut terms: Vec<(u32, f64)> = self.inbox[lo..hi]
                    .iter()
                    .map(|&(_, i, w)| (i, f64::from(w)))
                    .collect();
                for e in graph.adjacency(doc) {
                    match self.position.get(e.target.index()) {
                        Some(&i) if i != NOT_MEMBER => terms.push((i, f64::from(e.weight))),
                        _ => {}
                    }
                }
                terms.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
                terms.dedup_by_key(|t| t.0);
                let mut total = 0.0;
                for (i, w) in terms {
                    if w != 0.0 {
                        total += top.probs[i as usize] * w;
                    }
                }
                total
            }
        }
    }
}

/// A frontier candidate. `tie` orders equal priorities before the doc id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrontierEntry {
    pub doc: DocId,
    pub priority: f64,
    pub tie: u32,
}

fn frontier_order(a: &FrontierEntry, b: &FrontierEntry) -> Ordering {
    b.priority
        .total_cmp(&a.priority)
        .then(a.tie.cmp(&b.tie))
        .then(a.doc.cmp(&b.doc))
}

const NO_SLOT: u32 = u32::MAX;

/// Discovered but unscored candidates with priorities, plus the set of
/// already re-ranked documents that may never re-enter.
#[derive(Clone, Debug)]
pub struct Frontier {
    entries: Vec<FrontierEntry>,
    slot: Vec<u32>,
    excluded: Vec<bool>,
}

impl Frontier {
    pub fn new(num_docs: usize) -> Self {
        Self {
            entries: Vec::new(),
            slot: vec![NO_SLOT; num_docs],
            excluded: vec![false; num_docs],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FrontierEntry] {
        &self.entries
    }

    pub fn contains(&self, doc: DocId) -> bool {
        self.slot.get(doc.index()).is_some_and(|&s| s != NO_SLOT)
    }

    pub fn priority(&self, doc: DocId) -> Option<f64> {
        match self.slot.get(doc.index()) {
            Some(&s) if s != NO_SLOT => Some(self.entries[s as usize].priority),
            _ => None,
        }
    }

    pub fn is_excluded(&self, doc: DocId) -> bool {
        self.excluded.get(doc.index()).copied().unwrap_or(false)
    }

    /// Marks `doc` as re-ranked and drops it from the frontier.
    pub fn exclude(&mut self, doc: DocId) {
        if let Some(x) = self.excluded.get_mut(doc.index()) {
            *x = true;
        }
        self.remove(doc);
    }

    fn remove(&mut self, doc: DocId) {
        let Some(&s) = self.slot.get(doc.index()) else {
            return;
        };
        if s == NO_SLOT {
            return;
        }
        self.entries.swap_remove(s as usize);
        if let Some(moved) = self.entries.get(s as usize) {
            self.slot[moved.doc.index()] = s;
        }
        self.slot[doc.index()] = NO_SLOT;
    }

    /// Adds `doc` with priority 0 unless it is excluded or already present.
    pub fn insert(&mut self, doc: DocId) -> bool {
        if doc.index() >= self.slot.len() || self.excluded[doc.index()] || self.contains(doc) {
            return false;
        }
        self.slot[doc.index()] = self.entries.len() as u32;
        self.entries.push(FrontierEntry {
            doc,
            priority: 0.0,
            tie: 0,
        });
        true
    }

    /// Adds `doc` or raises its priority, keeping the better of the two
    /// `(priority, tie)` keys.
    pub fn offer(&mut self, doc: DocId, priority: f64, tie: u32) {
        if doc.index() >= self.slot.len() || self.excluded[doc.index()] {
            return;
        }
        let candidate = FrontierEntry { doc, priority, tie };
        match self.slot[doc.index()] {
            NO_SLOT => {
                self.slot[doc.index()] = self.entries.len() as u32;
                self.entries.push(candidate);
            }
            s => {
                let cur = &mut self.entries[s as usize];
                if frontier_order(&candidate, cur) == Ordering::Less {
                    *cur = candidate;
                }
            }
        }
    }

    pub fn set_priority(&mut self, doc: DocId, priority: f64) {
        if let Some(&s) = self.slot.get(doc.index()) {
            if s != NO_SLOT {
                self.entries[s as usize].priority = priority;
            }
        }
    }

    /// Sets every priority to `priority(doc)`.
    pub fn reprioritize(&mut self, mut priority: impl FnMut(DocId) -> f64) {
        for e in &mut self.entries {
            e.priority = priority(e.doc);
        }
    }

    /// Removes and returns up to `b` documents by (priority desc, tie, id).
    pub fn pop_top(&mut self, b: usize) -> Vec<DocId> {
        let take = b.min(self.entries.len());
        if take == 0 {
            return Vec::new();
        }
        if take < self.entries.len() {
            self.entries
                .select_nth_unstable_by(take - 1, frontier_order);
        }
        self.entries[..take].sort_unstable_by(frontier_order);
        let out: Vec<DocId> = self.entries.drain(..take).map(|e| e.doc).collect();
        for d in &out {
            self.slot[d.index()] = NO_SLOT;
        }
        for (i, e) in self.entries.iter().enumerate() {
            self.slot[e.doc.index()] = i as u32;
        }
        out
    }

    /// Entries sorted by doc id, for inspection.
    pub fn snapshot(&self) -> Vec<(DocId, f64)> {
        let mut v: Vec<(DocId, f64)> = self.entries.iter().map(|e| (e.doc, e.priority)).collect();
        v.sort_unstable_by_key(|x| x.0);
        v
    }
}

/// Sets every frontier priority to its set affinity under `top`.
pub fn refresh_frontier(
    frontier: &mut Frontier,
    top: &TopSet,
    graph: &CorpusGraph,
    dir: EdgeDirection,
) {
    let mut index = SetAffIndex::new(graph.num_docs(), dir);
    index.rebuild(top, graph);
    refresh_frontier_with(frontier, &index, top, graph);
}

/// As [`refresh_frontier`], with a prebuilt index for `top`.
pub fn refresh_frontier_with(
    frontier: &mut Frontier,
    index: &SetAffIndex,
    top: &TopSet,
    graph: &CorpusGraph,
) {
    frontier.reprioritize(|d| index.get(d, top, graph));
}

/// Free-standing `pop_top`, mirroring [`Frontier::pop_top`].
pub fn pop_top(frontier: &mut Frontier, b: usize) -> Vec<DocId> {
    frontier.pop_top(b)
}

/// Position of `entry` relative to the top set boundary of a sorted `r1`.
pub(crate) fn within_top(r1: &[RankEntry], s: usize, entry: &RankEntry) -> bool {
    let boundary = s.min(r1.len());
    boundary > 0 && rank_order(entry, &r1[boundary - 1]) != Ordering::Greater
}

/// Largest gap between a new member's basis and the exponent reference
/// before the tracker re-centres.
const REBASE_GAP: f64 = 64.0;

const NIL: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Link {
    member: DocId,
    weight: f32,
    /// Member weight times edge weight.
    contribution: f64,
    next: u32,
}

#[derive(Clone, Copy, Debug)]
struct Member {
    doc: DocId,
    basis: f64,
    /// `exp(basis - reference)`
    weight: f64,
}

#[derive(Clone, Copy, Debug)]
struct Linked {
    doc: DocId,
    /// Head of the list of members linking here, sorted by member id.
    head: u32,
    /// `Σ exp(basis - reference) · weight` over the list, in list order.
    sum: f64,
    dirty: bool,
}

/// Out-edge set affinities maintained as documents enter and leave the top
/// set, in `O(Δ·k)` per change instead of `O(s·k)`.
///
/// Each candidate's sum is recomputed over its member-sorted link list
/// whenever that list changes, so its value is a function of the current top
/// set alone. [`Self::key`] is the sum before the shared softmax normaliser,
/// which orders candidates exactly like their set affinities.
#[derive(Clone, Debug)]
pub struct IncrementalSetAff {
    slot: Vec<u32>,
    linked: Vec<Linked>,
    links: Vec<Link>,
    free: u32,
    members: Vec<Member>,
    member_pos: Vec<u32>,
    reference: f64,
    total: f64,
    dirty: Vec<u32>,
    changed: Vec<DocId>,
}

impl IncrementalSetAff {
    pub fn new(num_docs: usize) -> Self {
        Self {
            slot: vec![NIL; num_docs],
            linked: Vec::new(),
            links: Vec::new(),
            free: NIL,
            members: Vec::new(),
            member_pos: vec![NIL; num_docs],
            reference: 0.0,
            total: 0.0,
            dirty: Vec::new(),
            changed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_member(&self, doc: DocId) -> bool {
        self.member_pos.get(doc.index()).is_some_and(|&p| p != NIL)
    }

    /// Brings the member set to `ranked[..capacity]` after a batch of
    /// `batch_len` documents was inserted into `ranked`, of which `entered`
    /// landed inside the top set. Returns `true` when every key changed;
    /// otherwise only [`Self::changed`] did.
    pub fn update(
        &mut self,
        ranked: &[RankEntry],
        capacity: usize,
        batch_len: usize,
        entered: &[RankEntry],
        graph: &CorpusGraph,
        basis: impl Fn(&RankEntry) -> f64,
    ) -> Result<bool> {
        self.changed.clear();
        // previous members pushed past the boundary sit right behind it
        let end = ranked.len().min(capacity + batch_len);
        for e in &ranked[capacity.min(end)..end] {
            let doc = e.doc;
            if self.is_member(doc) {
                self.remove_member(doc, graph);
            }
        }
        let mut rebase = self.members.is_empty();
        for e in entered {
            let b = basis(e);
            if !b.is_finite() {
                return Err(invalid!("relevance distribution over non-finite scores"));
            }
            rebase |= b - self.reference > REBASE_GAP;
            self.add_member(e.doc, b, graph);
        }
        self.total = self.members.iter().map(|m| m.weight).sum();
        if rebase || self.total.is_nan() || self.total <= 1e-200 {
            self.rebase();
            return Ok(true);
        }
        for i in core::mem::take(&mut self.dirty) {
            self.resum(i as usize);
            self.changed.push(self.linked[i as usize].doc);
        }
        Ok(false)
    }

    /// Documents whose key changed in the last non-rebasing update.
    pub fn changed(&self) -> &[DocId] {
        &self.changed
    }

    /// Unnormalised set affinity; `key(d) / normalizer()` is `SetAff(d, S)`.
    pub fn key(&self, doc: DocId) -> f64 {
        match self.slot.get(doc.index()) {
            Some(&s) if s != NIL => self.linked[s as usize].sum,
            _ => 0.0,
        }
    }

    pub fn normalizer(&self) -> f64 {
        self.total
    }

    /// `SetAff(doc, S)` for the current member set.
    pub fn get(&self, doc: DocId) -> f64 {
        if self.total > 0.0 {
            self.key(doc) / self.total
        } else {
            0.0
        }
    }

    fn mark(&mut self, doc: DocId) -> usize {
        let s = &mut self.slot[doc.index()];
        if *s == NIL {
            *s = self.linked.len() as u32;
            self.linked.push(Linked {
                doc,
                head: NIL,
                sum: 0.0,
                dirty: false,
            });
        }
        let i = *s as usize;
        if !self.linked[i].dirty {
            self.linked[i].dirty = true;
            self.dirty.push(i as u32);
        }
        i
    }

    fn add_member(&mut self, doc: DocId, basis: f64, graph: &CorpusGraph) {
        self.member_pos[doc.index()] = self.members.len() as u32;
        let weight = libm::exp(basis - self.reference);
        self.members.push(Member { doc, basis, weight });
        for e in graph.adjacency(doc) {
            if e.target.index() >= self.slot.len() {
                continue;
            }
            let t = self.mark(e.target);
            let link = Link {
                member: doc,
                weight: e.weight,
                contribution: weight * f64::from(e.weight),
                next: NIL,
            };
            let new = if self.free == NIL {
                self.links.push(link);
                (self.links.len() - 1) as u32
            } else {
                let i = self.free;
                self.free = self.links[i as usize].next;
                self.links[i as usize] = link;
                i
            };
            let mut prev = NIL;
            let mut cur = self.linked[t].head;
            while cur != NIL && self.links[cur as usize].member < doc {
                prev = cur;
                cur = self.links[cur as usize].next;
            }
            self.links[new as usize].next = cur;
            if prev == NIL {
                self.linked[t].head = new;
            } else {
                self.links[prev as usize].next = new;
            }
        }
    }

    fn remove_member(&mut self, doc: DocId, graph: &CorpusGraph) {
        let pos = self.member_pos[doc.index()] as usize;
        self.members.swap_remove(pos);
        if let Some(moved) = self.members.get(pos) {
            self.member_pos[moved.doc.index()] = pos as u32;
        }
        self.member_pos[doc.index()] = NIL;
        for e in graph.adjacency(doc) {
            if e.target.index() >= self.slot.len() {
                continue;
            }
            let t = self.mark(e.target);
            let mut prev = NIL;
            let mut cur = self.linked[t].head;
            while cur != NIL && self.links[cur as usize].member != doc {
                prev = cur;
                cur = self.links[cur as usize].next;
            }
            if cur == NIL {
                continue;
            }
            let next = self.links[cur as usize].next;
            if prev == NIL {
                self.linked[t].head = next;
            } else {
                self.links[prev as usize].next = next;
            }
            self.links[cur as usize].next = self.free;
            self.free = cur;
        }
    }

    fn resum(&mut self, i: usize) {
        let mut sum = 0.0;
        let mut cur = self.linked[i].head;
        while cur != NIL {
            let link = self.links[cur as usize];
            if link.weight != 0.0 {
                sum += link.contribution;
            }
            cur = link.next;
        }
        self.linked[i].sum = sum;
        self.linked[i].dirty = false;
    }

    /// Re-centres the exponents on the largest member basis and recomputes
    /// every sum.
    fn rebase(&mut self) {
        self.reference = self
            .members
            .iter()
            .map(|m| m.basis)
            .fold(f64::NEG_INFINITY, f64::max);
        for m in &mut self.members {
            m.weight = libm::exp(m.basis - self.reference);
        }
        self.total = self.members.iter().map(|m| m.weight).sum();
        for link in &mut self.links {
            if let Some(&pos) = self
                .member_pos
                .get(link.member.index())
                .filter(|&&p| p != NIL)
            {
                link.contribution = self.members[pos as usize].weight * f64::from(link.weight);
            }
        }
        self.dirty.clear();
        for i in 0..self.linked.len() {
            self.resum(i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::relevance::Origin;

    fn d(i: u32) -> DocId {
        DocId(i)
    }

    fn r1(scores: &[(u32, f64)]) -> Ranking {
        Ranking::from_scores(
            "q",
            scores.iter().map(|&(i, s)| (d(i), s)),
            Origin::InitialPool,
        )
        .unwrap()
    }

    fn graph(n: usize, edges: &[(u32, u32, f32)]) -> CorpusGraph {
        let mut lists = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            lists[a as usize].push(Edge::new(d(b), w));
        }
        CorpusGraph::from_adjacency(8, lists).unwrap()
    }

    #[test]
    fn singleton_set() {
        let top = update_top_set(&r1(&[(1, 3.0)]), 5, Estimator::RankerScores, None).unwrap();
        let g = graph(3, &[(1, 2, 0.7)]);
        assert_eq!(top.probs(), &[1.0]);
        assert!((set_affinity(d(2), &top, &g, EdgeDirection::OutEdge) - 0.7).abs() < 1e-7);
        assert_eq!(set_affinity(d(0), &top, &g, EdgeDirection::OutEdge), 0.0);
    }

    #[test]
    fn two_member_hand_value() {
        let top =
            update_top_set(&r1(&[(1, 1.0), (2, 0.0)]), 2, Estimator::RankerScores, None).unwrap();
        assert!((top.probs()[0] - 0.731059).abs() < 1e-6);
        let g = graph(4, &[(1, 3, 0.5), (2, 3, 0.2)]);
        let v = set_affinity(d(3), &top, &g, EdgeDirection::OutEdge);
        // 0.731059 * 0.5 + 0.268941 * 0.2
        assert!((v - 0.4193177).abs() < 1e-6, "{v}");
    }

    #[test]
    fn top_set_truncates_and_errors_on_empty() {
        let r = r1(&[(0, 1.0), (1, 2.0), (2, 3.0)]);
        let top = update_top_set(&r, 2, Estimator::RankerScores, None).unwrap();
        assert_eq!(top.docs().collect::<Vec<_>>(), vec![d(2), d(1)]);
        let all = update_top_set(&r, 10, Estimator::RankerScores, None).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(
            update_top_set(&r, 1, Estimator::RankerScores, None)
                .unwrap()
                .probs(),
            &[1.0]
        );
        assert!(update_top_set(&Ranking::empty("q"), 2, Estimator::RankerScores, None).is_err());
        assert!(update_top_set(&r, 2, Estimator::RetrieverScores, None).is_err());
    }

    #[test]
    fn retriever_estimator_uses_first_stage_scores() {
        let r0 = r1(&[(0, 10.0), (1, 10.0)]);
        let ret = RetrievalScores::from_ranking(&r0);
        let r = r1(&[(0, 5.0), (1, 1.0), (7, 0.0)]);
        let top = update_top_set(&r, 3, Estimator::RetrieverScores, Some(&ret)).unwrap();
        // doc 7 was never retrieved and inherits the floor 10.0
        for p in top.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn max_of_both_reads_reverse_edges() {
        let top = update_top_set(&r1(&[(1, 0.0)]), 1, Estimator::RankerScores, None).unwrap();
        let g = graph(3, &[(2, 1, 0.6), (1, 2, 0.2)]);
        assert!((set_affinity(d(2), &top, &g, EdgeDirection::OutEdge) - 0.2).abs() < 1e-7);
        assert!((set_affinity(d(2), &top, &g, EdgeDirection::MaxOfBoth) - 0.6).abs() < 1e-7);
        let mut f = Frontier::new(3);
        f.insert(d(2));
        refresh_frontier(&mut f, &top, &g, EdgeDirection::MaxOfBoth);
        assert_eq!(
            f.priority(d(2)),
            Some(set_affinity(d(2), &top, &g, EdgeDirection::MaxOfBoth))
        );
    }

    #[test]
    fn refresh_matches_direct_and_is_idempotent() {
        let top =
            update_top_set(&r1(&[(0, 2.0), (1, 1.0)]), 2, Estimator::RankerScores, None).unwrap();
        let g = graph(5, &[(0, 2, 0.3), (0, 3, 0.9), (1, 3, 0.4), (1, 4, 0.1)]);
        let mut empty = Frontier::new(5);
        refresh_frontier(&mut empty, &top, &g, EdgeDirection::OutEdge);
        assert!(empty.is_empty());
        let mut f = Frontier::new(5);
        for x in [2, 3, 4] {
            f.insert(d(x));
        }
        refresh_frontier(&mut f, &top, &g, EdgeDirection::OutEdge);
        let first = f.snapshot();
        for (doc, p) in &first {
            assert_eq!(*p, set_affinity(*doc, &top, &g, EdgeDirection::OutEdge));
        }
        refresh_frontier(&mut f, &top, &g, EdgeDirection::OutEdge);
        assert_eq!(f.snapshot(), first);
    }

    #[test]
    fn pop_order_and_exclusion() {
        let mut f = Frontier::new(10);
        for x in [5, 3, 8] {
            f.offer(d(x), 1.0, 0);
        }
        f.offer(d(9), 2.0, 0);
        f.exclude(d(8));
        assert!(!f.insert(d(8)));
        assert_eq!(f.pop_top(2), vec![d(9), d(3)]);
        assert_eq!(f.pop_top(10), vec![d(5)]);
        assert!(f.pop_top(3).is_empty());
    }

    #[test]
    fn offer_keeps_max_then_lowest_tie() {
        let mut f = Frontier::new(4);
        f.offer(d(1), 0.9, 3);
        f.offer(d(1), 0.1, 0);
        assert_eq!(f.priority(d(1)), Some(0.9));
        f.offer(d(1), 0.9, 1);
        assert_eq!(f.entries()[0].tie, 1);
    }

    proptest::proptest! {
        #[test]
        fn tracker_matches_brute_force(
            batches in proptest::collection::vec(
                proptest::collection::vec((0u32..40, -3.0f64..3.0, proptest::bool::ANY), 1..5),
                1..12,
            ),
            capacity in 1usize..8,
            seed in 0u32..1000,
            retriever in proptest::bool::ANY,
        ) {
            let n = 40;
            let mut edges = Vec::new();
            for a in 0..n {
                for j in 0..4 {
                    let b = (a * 7 + j * 11 + seed) % n;
                    if b != a {
                        edges.push((a, b, ((a + b + seed) % 9 + 1) as f32 / 10.0));
                    }
                }
            }
            let g = graph(n as usize, &edges);
            let first: Vec<(DocId, f64)> = (0..n).map(|i| (d(i), f64::from(n - i) / 8.0)).collect();
            let retrieval = RetrievalScores::from_ranking(&r1(&first.iter().map(|&(x, s)| (x.0, s)).collect::<Vec<_>>()));
            let estimator = if retriever { Estimator::RetrieverScores } else { Estimator::RankerScores };
            let mut tracker = IncrementalSetAff::new(n as usize);
            let mut ranked: Vec<RankEntry> = Vec::new();
            for batch in batches {
                let mut entries = Vec::new();
                for (doc, score, jump) in batch {
                    if ranked.iter().any(|e| e.doc == d(doc)) || entries.iter().any(|e: &RankEntry| e.doc == d(doc)) {
                        continue;
                    }
                    // occasional huge scores force a rebase
                    let score = if jump { score * 200.0 } else { score };
                    let entry = RankEntry { doc: d(doc), score, origin: Origin::Frontier };
                    let at = ranked.partition_point(|e| rank_order(e, &entry).is_lt());
                    ranked.insert(at, entry);
                    entries.push(entry);
                }
                let entered: Vec<RankEntry> =
                    entries.iter().filter(|e| within_top(&ranked, capacity, e)).copied().collect();
                if entered.is_empty() {
                    continue;
                }
                let basis = |e: &RankEntry| if retriever { retrieval.get(e.doc) } else { e.score };
                tracker.update(&ranked, capacity, entries.len(), &entered, &g, basis).unwrap();
                let top = TopSet::from_sorted_entries(&ranked, capacity, estimator, Some(&retrieval)).unwrap();
                proptest::prop_assert_eq!(tracker.len(), top.len());
                for doc in 0..n {
                    proptest::prop_assert_eq!(tracker.is_member(d(doc)), top.contains(d(doc)));
                    let want = set_affinity(d(doc), &top, &g, EdgeDirection::OutEdge);
                    let got = tracker.get(d(doc));
                    proptest::prop_assert!((got - want).abs() < 1e-9, "doc {doc}: {got} vs {want}");
                }
            }
        }
    }
}
