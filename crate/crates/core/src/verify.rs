//! Exhaustive exploration of the combined transition system and
//! executable checks of the reversibility axioms on the explored graph.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::ltsi::{independent, CombinedState, Lts, TraceEntry};
use crate::machine::{Direction, ProcessId, RuntimeFault, Transition};

pub type StateId = usize;
pub type EdgeId = usize;

/// A forward transition between two explored states. Backward
/// transitions are the same edges walked from `dst` to `src`.
#[derive(Debug, Clone)]
pub struct GraphEdge {
    pub src: StateId,
    pub dst: StateId,
    /// Always in the forward direction.
    pub transition: Transition,
    /// Found by stepping forward from `src`.
    pub seen_forward: bool,
    /// Found by stepping backward from `dst`.
    pub seen_backward: bool,
}

#[derive(Debug, Clone)]
pub struct FaultRecord {
    pub state: StateId,
    pub transition: Transition,
    pub fault: RuntimeFault,
}

#[derive(Debug, Clone, Copy)]
pub struct ExploreOptions {
    pub max_states: usize,
    pub max_depth: Option<usize>,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            max_states: 1_000_000,
            max_depth: None,
        }
    }
}

/// The explored part of the transition system.
#[derive(Debug, Clone)]
pub struct LtsGraph {
    pub states: IndexSet<CombinedState>,
    pub edges: Vec<GraphEdge>,
    /// BFS depth of each state and the edge it was first reached by.
    pub depth: Vec<usize>,
    parent: Vec<Option<(EdgeId, Direction)>>,
    out: Vec<Vec<EdgeId>>,
    inn: Vec<Vec<EdgeId>>,
    by_src: HashMap<(StateId, ProcessId), EdgeId>,
    pub truncated: bool,
    pub faults: Vec<FaultRecord>,
    /// A forward and a backward step that disagree about an edge.
    pub conflicts: Vec<String>,
}

pub const INITIAL: StateId = 0;

impl LtsGraph {
    fn new(init: CombinedState) -> LtsGraph {
        let mut states = IndexSet::new();
        states.insert(init);
        LtsGraph {
            states,
            edges: Vec::new(),
            depth: vec![0],
            parent: vec![None],
            out: vec![Vec::new()],
            inn: vec![Vec::new()],
            by_src: HashMap::new(),
            truncated: false,
            faults: Vec::new(),
            conflicts: Vec::new(),
        }
    }

    pub fn state(&self, id: StateId) -> &CombinedState {
        &self.states[id]
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn out_edges(&self, s: StateId) -> &[EdgeId] {
        &self.out[s]
    }

    pub fn in_edges(&self, s: StateId) -> &[EdgeId] {
        &self.inn[s]
    }

    /// The forward edge process `pid` takes from `s`.
    pub fn forward_of(&self, s: StateId, pid: &ProcessId) -> Option<EdgeId> {
        self.by_src.get(&(s, pid.clone())).copied()
    }

    /// Backward steps from `s`, each as the forward edge it undoes.
    pub fn backward_of(&self, s: StateId, pid: &ProcessId) -> Option<EdgeId> {
        self.inn[s]
            .iter()
            .copied()
            .find(|&e| self.edges[e].transition.pid == *pid)
    }

    fn intern(&mut self, s: CombinedState, from: StateId, max_states: usize) -> Option<(StateId, bool)> {
        if let Some(id) = self.states.get_index_of(&s) {
            return Some((id, false));
        }
        if self.states.len() >= max_states {
            self.truncated = true;
            return None;
        }
        let (id, _) = self.states.insert_full(s);
        self.depth.push(self.depth[from] + 1);
        self.parent.push(None);
        self.out.push(Vec::new());
        self.inn.push(Vec::new());
        Some((id, true))
    }

    fn add_edge(&mut self, src: StateId, dst: StateId, t: Transition, dir: Direction) -> Option<EdgeId> {
        let key = (src, t.pid.clone());
        if let Some(&e) = self.by_src.get(&key) {
            let edge = &mut self.edges[e];
            if edge.dst != dst || edge.transition != t {
                self.conflicts.push(format!(
                    "state {src}: process {} steps to {} forward but {dst} is reached by undoing it",
                    t.pid, edge.dst
                ));
                return None;
            }
            match dir {
                Direction::Forward => edge.seen_forward = true,
                Direction::Backward => edge.seen_backward = true,
            }
            return Some(e);
        }
        let e = self.edges.len();
        self.edges.push(GraphEdge {
            src,
            dst,
            transition: t,
            seen_forward: dir == Direction::Forward,
            seen_backward: dir == Direction::Backward,
        });
        self.by_src.insert(key, e);
        self.out[src].push(e);
        self.inn[dst].push(e);
        Some(e)
    }

    /// A replayable trace from the initial state to `s`.
    pub fn path_to(&self, lts: &Lts, mut s: StateId) -> Vec<TraceEntry> {
        let mut steps = Vec::new();
        while let Some((e, dir)) = self.parent[s] {
            let edge = &self.edges[e];
            let t = match dir {
                Direction::Forward => {
                    s = edge.src;
                    edge.transition.clone()
                }
                Direction::Backward => {
                    s = edge.dst;
                    edge.transition.reversed()
                }
            };
            steps.push(lts.trace_entry(&t));
        }
        steps.reverse();
        steps
    }

    /// States with no forward transition.
    pub fn terminal_states(&self) -> Vec<StateId> {
        (0..self.states.len()).filter(|&s| self.out[s].is_empty()).collect()
    }

    /// States with no backward transition.
    pub fn backward_sinks(&self) -> Vec<StateId> {
        (0..self.states.len()).filter(|&s| self.inn[s].is_empty()).collect()
    }

    /// The edge from `s` in direction `dir` carrying the same label as `like`.
    fn step_like(&self, s: StateId, like: &Transition, dir: Direction) -> Option<(EdgeId, StateId)> {
        let e = match dir {
            Direction::Forward => self.forward_of(s, &like.pid)?,
            Direction::Backward => self.backward_of(s, &like.pid)?,
        };
        let t = &self.edges[e].transition;
        if t.rd != like.rd || t.wt != like.wt {
            return None;
        }
        let target = match dir {
            Direction::Forward => self.edges[e].dst,
            Direction::Backward => self.edges[e].src,
        };
        Some((e, target))
    }

    /// Every transition from `s`: (edge, direction, target).
    fn moves(&self, s: StateId) -> impl Iterator<Item = (EdgeId, Direction, StateId)> + '_ {
        let fwd = self.out[s]
            .iter()
            .map(move |&e| (e, Direction::Forward, self.edges[e].dst));
        let bwd = self.inn[s]
            .iter()
            .map(move |&e| (e, Direction::Backward, self.edges[e].src));
        fwd.chain(bwd)
    }

    fn directed(&self, e: EdgeId, dir: Direction) -> Transition {
        match dir {
            Direction::Forward => self.edges[e].transition.clone(),
            Direction::Backward => self.edges[e].transition.reversed(),
        }
    }
}

/// Breadth-first exploration over forward and backward steps from the initial state.
pub fn explore(lts: &Lts, opts: ExploreOptions) -> LtsGraph {
    explore_with(lts, opts, true)
}

/// Like [`explore`], but backward steps ignore the annotation DAG, which
/// stays empty. Useful as a contrast: this system is not causally safe.
pub fn explore_uncontrolled(lts: &Lts, opts: ExploreOptions) -> LtsGraph {
    explore_with(lts, opts, false)
}

fn successors(
    lts: &Lts,
    s: &CombinedState,
    dir: Direction,
    controlled: bool,
) -> Vec<(Transition, Result<CombinedState, RuntimeFault>)> {
    if controlled {
        return lts.successors(s, dir);
    }
    lts.machine()
        .successors(&s.config, dir)
        .into_iter()
        .map(|(t, next)| {
            (
                t,
                next.map(|config| CombinedState {
                    config,
                    dag: s.dag.clone(),
                }),
            )
        })
        .collect()
}

fn explore_with(lts: &Lts, opts: ExploreOptions, controlled: bool) -> LtsGraph {
    let mut g = LtsGraph::new(lts.initial_state());
    let mut queue = VecDeque::from([INITIAL]);
    while let Some(s) = queue.pop_front() {
        if opts.max_depth.is_some_and(|d| g.depth[s] >= d) {
            let st = g.states[s].clone();
            if !lts.enabled(&st, Direction::Forward).is_empty() || !lts.enabled(&st, Direction::Backward).is_empty() {
                g.truncated = true;
            }
            continue;
        }
        let st = g.states[s].clone();
        for dir in [Direction::Forward, Direction::Backward] {
            for (t, next) in successors(lts, &st, dir, controlled) {
                let next = match next {
                    Ok(n) => n,
                    Err(fault) => {
                        g.faults.push(FaultRecord {
                            state: s,
                            transition: t,
                            fault,
                        });
                        continue;
                    }
                };
                let Some((id, fresh)) = g.intern(next, s, opts.max_states) else {
                    continue;
                };
                let e = match dir {
                    Direction::Forward => g.add_edge(s, id, t, dir),
                    Direction::Backward => g.add_edge(id, s, t.reversed(), dir),
                };
                if fresh {
                    g.parent[id] = e.map(|e| (e, dir));
                    queue.push_back(id);
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    /// Square property.
    Sp,
    /// Backward transitions are independent.
    Bti,
    /// Well-foundedness.
    Wf,
    /// Coinitial propagation of independence.
    Cpi,
    /// Independence respects events.
    Ire,
    /// Causal consistency: mixed reachability equals forward reachability.
    Cc,
    /// Causal safety.
    Cs,
    /// Causal liveness.
    Cl,
    /// Every explored edge is found both forward and backward.
    RoundTrip,
}

impl Property {
    pub fn parse(s: &str) -> Option<Property> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "sp" => Property::Sp,
            "bti" => Property::Bti,
            "wf" => Property::Wf,
            "cpi" => Property::Cpi,
            "ire" => Property::Ire,
            "cc" => Property::Cc,
            "cs" => Property::Cs,
            "cl" => Property::Cl,
            "round-trip" | "roundtrip" | "loop" => Property::RoundTrip,
            _ => return None,
        })
    }

    pub const DEFAULT: [Property; 8] = [
        Property::Sp,
        Property::Bti,
        Property::Wf,
        Property::Cpi,
        Property::Ire,
        Property::Cc,
        Property::Cs,
        Property::RoundTrip,
    ];
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub message: String,
    /// Replayable steps from the initial state to the offending state.
    pub path: Vec<TraceEntry>,
    /// The offending transitions or witness steps from that state.
    pub transitions: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: Property,
    pub ok: bool,
    /// Number of instances examined.
    pub checked: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_bound: Option<usize>,
    /// Some searches stopped at the path bound or the graph was truncated.
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

impl PropertyReport {
    fn new(property: Property) -> PropertyReport {
        PropertyReport {
            property,
            ok: true,
            checked: 0,
            path_bound: None,
            partial: false,
            counterexample: None,
        }
    }

    fn fail(&mut self, c: impl FnOnce() -> Counterexample) {
        if self.ok {
            self.ok = false;
            self.counterexample = Some(c());
        }
    }
}

/// Forward-edge equivalence classes generated by commuting squares.
#[derive(Debug, Clone)]
pub struct Events {
    class_of: Vec<usize>,
    pub classes: Vec<Vec<EdgeId>>,
}

impl Events {
    pub fn class(&self, e: EdgeId) -> usize {
        self.class_of[e]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

/// Each square with independent sides merges the opposite sides. With
/// backward steps drawn as reversed forward edges, every square of the
/// combined system is a forward diamond, so forward diamonds suffice.
pub fn compute_events(g: &LtsGraph) -> Events {
    let mut uf = UnionFind((0..g.edges.len()).collect());
    for s in 0..g.state_count() {
        let out = g.out_edges(s);
        for (i, &e1) in out.iter().enumerate() {
            for &e2 in &out[i + 1..] {
                let (t1, t2) = (&g.edges[e1].transition, &g.edges[e2].transition);
                if !independent(t1, t2) {
                    continue;
                }
                let (Some((f2, q1)), Some((f1, q2))) = (
                    g.step_like(g.edges[e1].dst, t2, Direction::Forward),
                    g.step_like(g.edges[e2].dst, t1, Direction::Forward),
                ) else {
                    continue;
                };
                if q1 == q2 {
                    uf.union(e1, f1);
                    uf.union(e2, f2);
                }
            }
        }
    }
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut classes: Vec<Vec<EdgeId>> = Vec::new();
    let mut class_of = Vec::with_capacity(g.edges.len());
    for e in 0..g.edges.len() {
        let root = uf.find(e);
        let c = *index.entry(root).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        classes[c].push(e);
        class_of.push(c);
    }
    Events { class_of, classes }
}

/// Options for [`check_all`].
#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub properties: Vec<Property>,
    /// Longest path examined by the causal safety and liveness searches.
    pub path_bound: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            properties: Property::DEFAULT.to_vec(),
            path_bound: 12,
        }
    }
}

/// Checks over one explored graph.
pub struct Checker<'a> {
    lts: &'a Lts,
    g: &'a LtsGraph,
    events: Events,
}

impl<'a> Checker<'a> {
    pub fn new(lts: &'a Lts, g: &'a LtsGraph) -> Checker<'a> {
        Checker {
            lts,
            g,
            events: compute_events(g),
        }
    }

    pub fn events(&self) -> &Events {
        &self.events
    }

    fn entry(&self, e: EdgeId, dir: Direction) -> TraceEntry {
        self.lts.trace_entry(&self.g.directed(e, dir))
    }

    fn counterexample(&self, s: StateId, message: String, steps: &[(EdgeId, Direction)]) -> Counterexample {
        Counterexample {
            message,
            path: self.g.path_to(self.lts, s),
            transitions: steps.iter().map(|&(e, d)| self.entry(e, d)).collect(),
        }
    }

    pub fn check(&self, p: Property, path_bound: usize) -> PropertyReport {
        let mut r = match p {
            Property::Sp => self.square(false),
            Property::Cpi => self.square(true),
            Property::Bti => self.bti(),
            Property::Wf => self.wf(),
            Property::Ire => self.ire(),
            Property::Cc => self.cc(),
            Property::Cs => self.causal(path_bound, false),
            Property::Cl => self.causal(path_bound, true),
            Property::RoundTrip => self.round_trip(),
        };
        r.partial |= self.g.truncated;
        r
    }

    pub fn check_all(&self, opts: &CheckOptions) -> Vec<PropertyReport> {
        opts.properties
            .iter()
            .map(|&p| self.check(p, opts.path_bound))
            .collect()
    }

    /// Square property, or with `cpi` the independence of the far corner.
    fn square(&self, cpi: bool) -> PropertyReport {
        let g = self.g;
        let mut r = PropertyReport::new(if cpi { Property::Cpi } else { Property::Sp });
        for s in 0..g.state_count() {
            let moves: Vec<_> = g.moves(s).collect();
            for (i, &(e1, d1, q)) in moves.iter().enumerate() {
                for &(e2, d2, rr) in &moves[i + 1..] {
                    let (t, u) = (g.directed(e1, d1), g.directed(e2, d2));
                    if !independent(&t, &u) {
                        continue;
                    }
                    r.checked += 1;
                    let u2 = g.step_like(q, &u, d2);
                    let t2 = g.step_like(rr, &t, d1);
                    match (u2, t2) {
                        (Some((eu, s1)), Some((_, s2))) if s1 == s2 => {
                            if cpi && !independent(&g.directed(eu, d2), &t.reversed()) {
                                r.fail(|| {
                                    self.counterexample(
                                        s,
                                        "far corner transitions are not independent".into(),
                                        &[(e1, d1), (e2, d2)],
                                    )
                                });
                            }
                        }
                        _ if cpi => {}
                        _ => r.fail(|| {
                            self.counterexample(
                                s,
                                "independent coinitial transitions have no commuting square".into(),
                                &[(e1, d1), (e2, d2)],
                            )
                        }),
                    }
                }
            }
        }
        r
    }

    fn bti(&self) -> PropertyReport {
        let g = self.g;
        let mut r = PropertyReport::new(Property::Bti);
        for s in 0..g.state_count() {
            let back = g.in_edges(s);
            for (i, &a) in back.iter().enumerate() {
                for &b in &back[i + 1..] {
                    r.checked += 1;
                    if !independent(&g.edges[a].transition, &g.edges[b].transition) {
                        r.fail(|| {
                            self.counterexample(
                                s,
                                "two backward transitions are not independent".into(),
                                &[(a, Direction::Backward), (b, Direction::Backward)],
                            )
                        });
                    }
                }
            }
        }
        r
    }

    fn wf(&self) -> PropertyReport {
        let g = self.g;
        let mut r = PropertyReport::new(Property::Wf);
        for (e, edge) in g.edges.iter().enumerate() {
            r.checked += 1;
            let (before, after) = (g.state(edge.src).dag.node_count(), g.state(edge.dst).dag.node_count());
            if after != before + 1 {
                r.fail(|| {
                    self.counterexample(
                        edge.dst,
                        format!("undoing a step takes the DAG from {after} to {before} nodes"),
                        &[(e, Direction::Backward)],
                    )
                });
            }
        }
        r
    }

    fn ire(&self) -> PropertyReport {
        let g = self.g;
        let mut r = PropertyReport::new(Property::Ire);
        for class in &self.events.classes {
            r.checked += 1;
            let first = g.edges[class[0]].transition.label();
            if let Some(&bad) = class.iter().find(|&&e| g.edges[e].transition.label() != first) {
                r.fail(|| {
                    self.counterexample(
                        g.edges[bad].src,
                        "an event contains transitions with different labels".into(),
                        &[(class[0], Direction::Forward), (bad, Direction::Forward)],
                    )
                });
            }
        }
        r
    }

    fn cc(&self) -> PropertyReport {
        let g = self.g;
        let mut r = PropertyReport::new(Property::Cc);
        let mut seen = vec![false; g.state_count()];
        seen[INITIAL] = true;
        let mut stack = vec![INITIAL];
        while let Some(s) = stack.pop() {
            for &e in g.out_edges(s) {
                let d = g.edges[e].dst;
                if !seen[d] {
                    seen[d] = true;
                    stack.push(d);
                }
            }
        }
        r.checked = g.state_count();
        if let Some(s) = seen.iter().position(|&v| !v) {
            r.fail(|| self.counterexample(s, "state is reachable only by mixing directions".into(), &[]));
        }
        r
    }

    fn round_trip(&self) -> PropertyReport {
        let g = self.g;
        let mut r = PropertyReport::new(Property::RoundTrip);
        for (e, edge) in g.edges.iter().enumerate() {
            r.checked += 1;
            if !(edge.seen_forward && edge.seen_backward) {
                let side = if edge.seen_forward { "forward" } else { "backward" };
                r.fail(|| self.counterexample(edge.src, format!("step found only {side}"), &[(e, Direction::Forward)]));
            }
        }
        if let Some(c) = g.conflicts.first() {
            r.fail(|| Counterexample {
                message: c.clone(),
                path: Vec::new(),
                transitions: Vec::new(),
            });
        }
        r
    }

    /// Causal safety and liveness over walks of bounded length.
    ///
    /// For each forward edge `t` of event `E`, walks from its target
    /// tracking the net count of every event whose label depends on `E`'s
    /// (independent events cannot matter). At a state where `E`'s net
    /// count is zero: safety requires that if `E` can be undone there, no
    /// dependent event has a positive count; liveness requires the
    /// converse.
    fn causal(&self, bound: usize, liveness: bool) -> PropertyReport {
        let g = self.g;
        let ev = &self.events;
        let mut r = PropertyReport::new(if liveness { Property::Cl } else { Property::Cs });
        r.path_bound = Some(bound);

        // event classes that can be undone at each state
        let undoable: Vec<Vec<usize>> = (0..g.state_count())
            .map(|s| g.in_edges(s).iter().map(|&e| ev.class(e)).collect())
            .collect();
        let labels: Vec<&Transition> = ev.classes.iter().map(|c| &g.edges[c[0]].transition).collect();

        for (t, edge) in g.edges.iter().enumerate() {
            let e_class = ev.class(t);
            let tracked = |c: usize| !independent(labels[e_class], labels[c]);
            let mut visited: HashSet<(StateId, Counts)> = HashSet::new();
            let mut stack: Vec<(StateId, Counts, usize)> = vec![(edge.dst, Vec::new(), 0)];
            while let Some((s, counts, len)) = stack.pop() {
                if !visited.insert((s, counts.clone())) {
                    continue;
                }
                let own = counts.iter().find(|(c, _)| *c == e_class).map_or(0, |(_, n)| *n);
                if own == 0 {
                    r.checked += 1;
                    let positive = counts.iter().any(|&(_, n)| n > 0);
                    let can_undo = undoable[s].contains(&e_class);
                    let violated = if liveness {
                        !positive && !can_undo
                    } else {
                        positive && can_undo
                    };
                    if violated {
                        r.fail(|| {
                            let msg = if liveness {
                                "an event independent of everything done since cannot be undone"
                            } else {
                                "an event can be undone while a dependent later event is still done"
                            };
                            let mut c = self.counterexample(edge.src, msg.into(), &[(t, Direction::Forward)]);
                            c.message = format!("{msg} (after a walk of {len} steps)");
                            c
                        });
                    }
                }
                if len == bound {
                    if g.moves(s).next().is_some() {
                        r.partial = true;
                    }
                    continue;
                }
                for (e, dir, next) in g.moves(s) {
                    let c = ev.class(e);
                    let mut counts = counts.clone();
                    if tracked(c) {
                        let delta = if dir == Direction::Forward { 1 } else { -1 };
                        match counts.binary_search_by_key(&c, |&(k, _)| k) {
                            Ok(i) => {
                                counts[i].1 += delta;
                                if counts[i].1 == 0 {
                                    counts.remove(i);
                                }
                            }
                            Err(i) => counts.insert(i, (c, delta)),
                        }
                    }
                    stack.push((next, counts, len + 1));
                }
            }
        }
        r
    }
}

/// Net count per tracked event class, sorted by class.
type Counts = Vec<(usize, i32)>;

/// The full report written by `cril explore`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExploreReport {
    pub states: usize,
    pub edges: usize,
    pub truncated: bool,
    pub terminal_states: usize,
    pub events: usize,
    pub faults: Vec<FaultView>,
    pub properties: Vec<PropertyReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultView {
    pub message: String,
    pub path: Vec<TraceEntry>,
}

pub fn report(lts: &Lts, g: &LtsGraph, opts: &CheckOptions) -> ExploreReport {
    let checker = Checker::new(lts, g);
    ExploreReport {
        states: g.state_count(),
        edges: g.edges.len(),
        truncated: g.truncated,
        terminal_states: g.terminal_states().len(),
        events: checker.events().len(),
        faults: g
            .faults
            .iter()
            .map(|f| {
                let mut path = g.path_to(lts, f.state);
                path.push(lts.trace_entry(&f.transition));
                FaultView {
                    message: f.fault.to_string(),
                    path,
                }
            })
            .collect(),
        properties: checker.check_all(opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::syntax::parse_program;

    fn graph(p: crate::syntax::Program) -> (Lts, LtsGraph) {
        let lts = Lts::new(p).unwrap();
        let g = explore(&lts, ExploreOptions::default());
        assert!(!g.truncated);
        (lts, g)
    }

    /// Drops an edge from the adjacency lists, leaving a hole in the graph.
    fn cut(g: &mut LtsGraph, e: EdgeId) {
        let (src, dst, pid) = (g.edges[e].src, g.edges[e].dst, g.edges[e].transition.pid.clone());
        g.out[src].retain(|&x| x != e);
        g.inn[dst].retain(|&x| x != e);
        g.by_src.remove(&(src, pid));
    }

    #[test]
    fn trivial_program() {
        let (_, g) = graph(parse_program("begin main\nskip\nend main").unwrap());
        assert_eq!(g.state_count(), 2);
        assert_eq!(g.edges.len(), 1);
        let (_, g) = graph(parse_program("begin main\nskip\n-> a\n\na <-\nskip\nend main").unwrap());
        assert_eq!(g.state_count(), 3);
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn corpus_graphs_satisfy_every_axiom() {
        for p in corpus::all() {
            let (lts, g) = graph(p);
            let c = Checker::new(&lts, &g);
            for p in Property::DEFAULT.into_iter().chain([Property::Cl]) {
                let r = c.check(p, 8);
                assert!(r.ok, "{p}: {:?}", r.counterexample);
            }
            assert_eq!(g.backward_sinks(), vec![INITIAL]);
        }
    }

    #[test]
    fn exploration_is_deterministic() {
        let (_, a) = graph(corpus::airline_semaphore());
        let (_, b) = graph(corpus::airline_semaphore());
        assert!(a.states.iter().eq(b.states.iter()));
        assert_eq!(a.edges.len(), b.edges.len());
    }

    #[test]
    fn bounds_truncate() {
        let lts = Lts::new(corpus::airline_racy()).unwrap();
        let g = explore(
            &lts,
            ExploreOptions {
                max_states: 50,
                max_depth: None,
            },
        );
        assert!(g.truncated);
        assert_eq!(g.state_count(), 50);
        let g = explore(
            &lts,
            ExploreOptions {
                max_states: 1000,
                max_depth: Some(3),
            },
        );
        assert!(g.truncated);
        assert!(g.depth.iter().all(|&d| d <= 3));
    }

    #[test]
    fn shared_events() {
        let (lts, g) = graph(corpus::shared());
        let c = Checker::new(&lts, &g);
        let ev = c.events();
        let block_of = |e: EdgeId| g.edges[e].transition.block.0 + 1;
        // b6 and b7 commute right after b4, so their two occurrences merge
        let s = g
            .states
            .iter()
            .position(|st| st.config.rho == vec![1, 0, 0] && st.dag.node_count() == 4)
            .unwrap();
        let out = g.out_edges(s);
        let e6 = *out.iter().find(|&&e| block_of(e) == 6).unwrap();
        let e7 = *out.iter().find(|&&e| block_of(e) == 7).unwrap();
        let after6 = g.forward_of(g.edges[e6].dst, &ProcessId::from_segments(&[3])).unwrap();
        let after7 = g.forward_of(g.edges[e7].dst, &ProcessId::from_segments(&[2])).unwrap();
        assert_eq!(ev.class(e6), ev.class(after7));
        assert_eq!(ev.class(e7), ev.class(after6));
        // the root never commutes with anything
        for (e, edge) in g.edges.iter().enumerate() {
            if edge.transition.pid.is_root() {
                assert_eq!(ev.classes[ev.class(e)].len(), 1);
            }
        }
    }

    #[test]
    fn missing_corner_breaks_square() {
        let (lts, mut g) = graph(corpus::shared());
        let s = g
            .states
            .iter()
            .position(|st| st.config.rho == vec![1, 0, 0] && st.dag.node_count() == 4)
            .unwrap();
        let e6 = g.out_edges(s)[0];
        let corner = g.out_edges(g.edges[e6].dst)[0];
        cut(&mut g, corner);
        let r = Checker::new(&lts, &g).check(Property::Sp, 12);
        assert!(!r.ok);
        let ce = r.counterexample.unwrap();
        assert_eq!(ce.transitions.len(), 2);
        // the witness path replays to an explored state
        let replay = lts.replay(&lts.initial_state(), &ce.path).unwrap();
        assert!(g.states.contains(replay.final_state()));
    }

    #[test]
    fn dependent_backward_pair_breaks_bti() {
        let (lts, mut g) = graph(corpus::shared());
        let s = (0..g.state_count()).find(|&s| g.in_edges(s).len() == 2).unwrap();
        let e = g.in_edges(s)[0];
        let other = g.in_edges(s)[1];
        let wt = g.edges[other].transition.rd.clone();
        g.edges[e].transition.wt = wt;
        let r = Checker::new(&lts, &g).check(Property::Bti, 12);
        assert!(!r.ok);
    }

    #[test]
    fn one_sided_edge_breaks_round_trip() {
        let (lts, mut g) = graph(corpus::shared());
        g.edges[3].seen_backward = false;
        assert!(!Checker::new(&lts, &g).check(Property::RoundTrip, 12).ok);
    }

    #[test]
    fn uncontrolled_reversal_is_unsafe() {
        let lts = Lts::new(corpus::shared()).unwrap();
        // the store is unbounded without the DAG, so cap the search
        let g = explore_uncontrolled(
            &lts,
            ExploreOptions {
                max_states: 400,
                ..Default::default()
            },
        );
        assert!(g.truncated);
        let c = Checker::new(&lts, &g);
        assert!(!c.check(Property::Cc, 12).ok);
        // the diverged store is reachable here and nowhere in the controlled system
        assert!(g.states.iter().any(|s| s.config.rho == vec![0, -1, -1]));
        let (_, controlled) = graph(corpus::shared());
        assert!(!controlled.states.iter().any(|s| s.config.rho == vec![0, -1, -1]));
    }

    #[test]
    fn undo_past_a_dependent_event_breaks_safety() {
        let (lts, mut g) = graph(corpus::shared());
        // t: process 1 increments x; then process 2 reads it
        let sub0 = ProcessId::from_segments(&[1]);
        let t = (0..g.edges.len())
            .find(|&e| g.edges[e].transition.pid == sub0 && g.state(g.edges[e].dst).config.rho == vec![1, 0, 0])
            .unwrap();
        let q = g.edges[t].dst;
        let read = g.forward_of(q, &ProcessId::from_segments(&[2])).unwrap();
        let r = g.edges[read].dst;
        // pretend t could still be undone after the read
        let mut events = compute_events(&g);
        let fake = g.edges.len();
        g.edges.push(GraphEdge {
            src: q,
            dst: r,
            ..g.edges[t].clone()
        });
        g.inn[r].push(fake);
        let class = events.class(t);
        events.class_of.push(class);
        events.classes[class].push(fake);
        let checker = Checker {
            lts: &lts,
            g: &g,
            events,
        };
        assert!(!checker.check(Property::Cs, 3).ok);
        assert!(Checker::new(&lts, &graph(corpus::shared()).1).check(Property::Cs, 3).ok);
    }

    #[test]
    fn report_json() {
        let (lts, g) = graph(corpus::shared());
        let rep = report(&lts, &g, &CheckOptions::default());
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["states"], g.state_count());
        assert_eq!(v["properties"][0]["property"], "sp");
        assert_eq!(v["properties"][0]["ok"], true);
        let cs = rep.properties.iter().find(|r| r.property == Property::Cs).unwrap();
        assert_eq!(cs.path_bound, Some(12));
    }
}
