//! Annotation DAGs: causality recorded on forward steps, consulted and
//! rolled back on backward steps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::analysis::{MemoryResource, ResourceSet};
use crate::machine::ProcessId;
use crate::syntax::Program;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DagNode {
    Bottom,
    Node { pid: ProcessId, index: u32 },
}

impl DagNode {
    pub fn new(pid: ProcessId, index: u32) -> DagNode {
        DagNode::Node { pid, index }
    }
}

impl fmt::Display for DagNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DagNode::Bottom => f.write_str("⊥"),
            DagNode::Node { pid, index } => write!(f, "({pid},{index})"),
        }
    }
}

impl fmt::Debug for DagNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Write,
    Read,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DagEdge {
    pub src: DagNode,
    pub label: MemoryResource,
    pub dst: DagNode,
    pub kind: EdgeKind,
}

type Incoming = SmallVec<[(MemoryResource, DagNode); 2]>;

/// One node of a process, linked to the previous node of the same process.
#[derive(Debug, PartialEq, Eq, Hash)]
struct Cell {
    index: u32,
    writes: Incoming,
    reads: Incoming,
    prev: Option<Arc<Cell>>,
}

impl Cell {
    fn iter(self: &Arc<Cell>) -> impl Iterator<Item = &Cell> {
        std::iter::successors(Some(&**self), |c| c.prev.as_deref())
    }
}

/// An annotation DAG. Values are immutable; updates share structure.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AnnotationDag {
    /// Newest node of each process that has any.
    heads: BTreeMap<ProcessId, Arc<Cell>>,
    /// End of each resource's write chain; absent means ⊥.
    last: BTreeMap<MemoryResource, DagNode>,
}

/// Why a backward DAG step is refused.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DagRefusal {
    #[error("process {pid} has no node to remove")]
    NoNode { pid: ProcessId },
    #[error("{node} was not created by a step with these read/write sets")]
    LabelMismatch { node: DagNode },
    #[error("{node} read a value that has since been overwritten")]
    StaleRead { node: DagNode },
    #[error("{node} has outgoing edges")]
    HasOutgoing { node: DagNode },
}

impl AnnotationDag {
    /// `({⊥}, ∅, ∅)`
    pub fn new() -> AnnotationDag {
        AnnotationDag::default()
    }

    /// Largest index of `pid`, or -1.
    pub fn max_index(&self, pid: &ProcessId) -> i64 {
        self.heads.get(pid).map_or(-1, |c| c.index as i64)
    }

    pub fn last_write(&self, r: MemoryResource) -> DagNode {
        self.last.get(&r).cloned().unwrap_or(DagNode::Bottom)
    }

    pub fn node_count(&self) -> usize {
        1 + self.heads.values().map(|c| c.index as usize + 1).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn contains(&self, v: &DagNode) -> bool {
        match v {
            DagNode::Bottom => true,
            DagNode::Node { pid, index } => self.max_index(pid) >= *index as i64,
        }
    }

    fn cells(&self) -> impl Iterator<Item = (&ProcessId, &Cell)> {
        self.heads.iter().flat_map(|(p, head)| head.iter().map(move |c| (p, c)))
    }

    /// Nodes in order: ⊥, then by process and index.
    pub fn nodes(&self) -> Vec<DagNode> {
        let mut out = vec![DagNode::Bottom];
        for (p, head) in &self.heads {
            out.extend((0..=head.index).map(|i| DagNode::new(p.clone(), i)));
        }
        out
    }

    pub fn edges(&self) -> Vec<DagEdge> {
        let mut out = Vec::new();
        for (p, c) in self.cells() {
            let dst = DagNode::new(p.clone(), c.index);
            for (kind, list) in [(EdgeKind::Write, &c.writes), (EdgeKind::Read, &c.reads)] {
                out.extend(list.iter().map(|(r, src)| DagEdge {
                    src: src.clone(),
                    label: *r,
                    dst: dst.clone(),
                    kind,
                }));
            }
        }
        out.sort();
        out
    }

    pub fn write_edges(&self) -> Vec<DagEdge> {
        self.edges().into_iter().filter(|e| e.kind == EdgeKind::Write).collect()
    }

    pub fn read_edges(&self) -> Vec<DagEdge> {
        self.edges().into_iter().filter(|e| e.kind == EdgeKind::Read).collect()
    }

    pub fn has_outgoing(&self, v: &DagNode) -> bool {
        self.cells()
            .any(|(_, c)| c.writes.iter().chain(&c.reads).any(|(_, src)| src == v))
    }

    /// The node a forward step of `pid` would add.
    pub fn next_node(&self, pid: &ProcessId) -> DagNode {
        DagNode::new(pid.clone(), (self.max_index(pid) + 1) as u32)
    }

    /// Adds `(pid, max+1)` with write edges for `wt` and read edges for `rd - wt`.
    pub fn apply_forward(&self, pid: &ProcessId, rd: &ResourceSet, wt: &ResourceSet) -> AnnotationDag {
        let v = self.next_node(pid);
        let DagNode::Node { index, .. } = v else { unreachable!() };
        let cell = Cell {
            index,
            writes: wt.iter().map(|r| (r, self.last_write(r))).collect(),
            reads: rd.difference(wt).iter().map(|r| (r, self.last_write(r))).collect(),
            prev: self.heads.get(pid).cloned(),
        };
        let mut next = self.clone();
        next.heads.insert(pid.clone(), Arc::new(cell));
        for r in wt.iter() {
            next.last.insert(r, v.clone());
        }
        next
    }

    /// The node a backward step `(pid, rd, wt)` would remove, if legal.
    pub fn backward_check(&self, pid: &ProcessId, rd: &ResourceSet, wt: &ResourceSet) -> Result<DagNode, DagRefusal> {
        let head = self
            .heads
            .get(pid)
            .ok_or_else(|| DagRefusal::NoNode { pid: pid.clone() })?;
        let v = DagNode::new(pid.clone(), head.index);
        let labels = |list: &Incoming| list.iter().map(|(r, _)| *r).collect::<ResourceSet>();
        if labels(&head.writes) != *wt || labels(&head.reads) != rd.difference(wt) {
            return Err(DagRefusal::LabelMismatch { node: v });
        }
        self.removable_head(head, v)
    }

    fn removable_head(&self, head: &Cell, v: DagNode) -> Result<DagNode, DagRefusal> {
        if head.reads.iter().any(|(r, src)| *src != self.last_write(*r)) {
            return Err(DagRefusal::StaleRead { node: v });
        }
        if self.has_outgoing(&v) {
            return Err(DagRefusal::HasOutgoing { node: v });
        }
        Ok(v)
    }

    pub fn backward_enabled(&self, pid: &ProcessId, rd: &ResourceSet, wt: &ResourceSet) -> bool {
        self.backward_check(pid, rd, wt).is_ok()
    }

    /// Removes the newest node of `pid` and its incoming edges.
    pub fn apply_backward(
        &self,
        pid: &ProcessId,
        rd: &ResourceSet,
        wt: &ResourceSet,
    ) -> Result<AnnotationDag, DagRefusal> {
        self.backward_check(pid, rd, wt)?;
        let head = &self.heads[pid];
        let mut next = self.clone();
        match &head.prev {
            Some(prev) => next.heads.insert(pid.clone(), Arc::clone(prev)),
            None => next.heads.remove(pid),
        };
        for (r, src) in &head.writes {
            match src {
                DagNode::Bottom => next.last.remove(r),
                v => next.last.insert(*r, v.clone()),
            };
        }
        Ok(next)
    }

    /// Newest nodes of their process whose reads are current and that
    /// have no outgoing edges.
    pub fn removable_nodes(&self) -> BTreeSet<DagNode> {
        self.heads
            .iter()
            .filter_map(|(p, head)| self.removable_head(head, DagNode::new(p.clone(), head.index)).ok())
            .collect()
    }

    /// Explicit node and edge sets.
    pub fn explicit(&self) -> ExplicitDag {
        let (write, read) = self.edges().into_iter().partition(|e| e.kind == EdgeKind::Write);
        ExplicitDag {
            nodes: self.nodes().into_iter().collect(),
            write,
            read,
        }
    }

    /// Checks the structural conditions from scratch, plus the cached
    /// indexes and reachability-only shapes.
    pub fn validate(&self) -> Vec<DagViolation> {
        let ex = self.explicit();
        let mut out = ex.validate();
        for (r, v) in ex.recompute_last() {
            if self.last_write(r) != v {
                out.push(DagViolation::new(
                    DagRule::LastIndex,
                    format!(
                        "cached last write of {r:?} is {} but the chain ends at {v}",
                        self.last_write(r)
                    ),
                ));
            }
        }
        for (r, v) in &self.last {
            if !ex.write.iter().any(|e| e.label == *r && e.dst == *v) {
                out.push(DagViolation::new(
                    DagRule::LastIndex,
                    format!("cached last write of {r:?} is {v}, not on any chain"),
                ));
            }
        }
        out
    }

    pub fn view(&self, p: &Program) -> DagView {
        let edge = |e: &DagEdge| EdgeView {
            src: e.src.clone(),
            label: e.label.name(p).to_string(),
            dst: e.dst.clone(),
        };
        let edges = self.edges();
        DagView {
            nodes: self.nodes(),
            write_edges: edges.iter().filter(|e| e.kind == EdgeKind::Write).map(edge).collect(),
            read_edges: edges.iter().filter(|e| e.kind == EdgeKind::Read).map(edge).collect(),
        }
    }

    /// Graphviz rendering: write edges solid, read edges dashed.
    pub fn to_dot(&self, p: &Program) -> String {
        let mut s = String::from("digraph adag {\n  rankdir=TB;\n  node [shape=ellipse, fontname=\"monospace\"];\n");
        for v in self.nodes() {
            s.push_str(&format!("  \"{v}\";\n"));
        }
        for e in self.edges() {
            let style = match e.kind {
                EdgeKind::Write => "solid",
                EdgeKind::Read => "dashed",
            };
            s.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\", style={style}];\n",
                e.src,
                e.dst,
                e.label.name(p)
            ));
        }
        s.push_str("}\n");
        s
    }
}

/// Node and edge changes between two DAGs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DagDiff {
    pub added_nodes: BTreeSet<DagNode>,
    pub removed_nodes: BTreeSet<DagNode>,
    pub added_edges: BTreeSet<DagEdge>,
    pub removed_edges: BTreeSet<DagEdge>,
}

impl DagDiff {
    pub fn between(before: &AnnotationDag, after: &AnnotationDag) -> DagDiff {
        let (n0, n1): (BTreeSet<_>, BTreeSet<_>) = (
            before.nodes().into_iter().collect(),
            after.nodes().into_iter().collect(),
        );
        let (e0, e1): (BTreeSet<_>, BTreeSet<_>) = (
            before.edges().into_iter().collect(),
            after.edges().into_iter().collect(),
        );
        DagDiff {
            added_nodes: n1.difference(&n0).cloned().collect(),
            removed_nodes: n0.difference(&n1).cloned().collect(),
            added_edges: e1.difference(&e0).cloned().collect(),
            removed_edges: e0.difference(&e1).cloned().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.removed_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
    }

    /// No node or edge is touched by both diffs.
    pub fn disjoint(&self, other: &DagDiff) -> bool {
        let touched_n = |d: &DagDiff| d.added_nodes.union(&d.removed_nodes).cloned().collect::<BTreeSet<_>>();
        let touched_e = |d: &DagDiff| d.added_edges.union(&d.removed_edges).cloned().collect::<BTreeSet<_>>();
        touched_n(self).is_disjoint(&touched_n(other)) && touched_e(self).is_disjoint(&touched_e(other))
    }

    pub fn view(&self, p: &Program) -> DagDiffView {
        let edge = |e: &DagEdge| DiffEdgeView {
            src: e.src.clone(),
            label: e.label.name(p).to_string(),
            dst: e.dst.clone(),
            kind: e.kind,
        };
        DagDiffView {
            added_nodes: self.added_nodes.iter().cloned().collect(),
            removed_nodes: self.removed_nodes.iter().cloned().collect(),
            added_edges: self.added_edges.iter().map(edge).collect(),
            removed_edges: self.removed_edges.iter().map(edge).collect(),
        }
    }
}

/// A DAG given as plain sets, possibly malformed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExplicitDag {
    pub nodes: BTreeSet<DagNode>,
    pub write: Vec<DagEdge>,
    pub read: Vec<DagEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DagRule {
    /// ⊥ present, process indexes downward closed.
    NodeSet,
    /// Edges connect known nodes; at most one incoming edge per node and label.
    UniqueIncoming,
    /// Edge sets disjoint and acyclic.
    Acyclic,
    /// A write edge leaves ⊥ or a node that was itself written.
    WriteChain,
    /// At most one write edge per node and label.
    WriteOutDegree,
    /// Cached last-write index disagrees with the edges.
    LastIndex,
    /// A read edge starts at a node that never wrote the resource.
    ReadFromNonWriter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DagViolation {
    pub rule: DagRule,
    pub message: String,
}

impl DagViolation {
    fn new(rule: DagRule, message: String) -> DagViolation {
        DagViolation { rule, message }
    }
}

impl ExplicitDag {
    pub fn validate(&self) -> Vec<DagViolation> {
        let mut out = Vec::new();
        let v = |rule, msg: String| DagViolation::new(rule, msg);

        if !self.nodes.contains(&DagNode::Bottom) {
            out.push(v(DagRule::NodeSet, "⊥ is missing".into()));
        }
        for n in &self.nodes {
            if let DagNode::Node { pid, index } = n {
                for i in 0..*index {
                    if !self.nodes.contains(&DagNode::new(pid.clone(), i)) {
                        out.push(v(DagRule::NodeSet, format!("{n} present but ({pid},{i}) missing")));
                    }
                }
            }
        }

        let all: Vec<&DagEdge> = self.write.iter().chain(&self.read).collect();
        let mut incoming = BTreeSet::new();
        for e in &all {
            if !self.nodes.contains(&e.src) || !self.nodes.contains(&e.dst) {
                out.push(v(
                    DagRule::UniqueIncoming,
                    format!("edge {} -> {} has an unknown endpoint", e.src, e.dst),
                ));
            }
            if !incoming.insert((e.dst.clone(), e.label)) {
                out.push(v(
                    DagRule::UniqueIncoming,
                    format!("{} has two incoming {:?} edges", e.dst, e.label),
                ));
            }
        }

        let key = |e: &DagEdge| (e.src.clone(), e.label, e.dst.clone());
        let writes: BTreeSet<_> = self.write.iter().map(key).collect();
        if self.read.iter().any(|e| writes.contains(&key(e))) {
            out.push(v(DagRule::Acyclic, "an edge is both a read and a write edge".into()));
        }
        if has_cycle(&self.nodes, &all) {
            out.push(v(DagRule::Acyclic, "the edges form a cycle".into()));
        }

        let written: BTreeSet<(DagNode, MemoryResource)> =
            self.write.iter().map(|e| (e.dst.clone(), e.label)).collect();
        for e in &self.write {
            if e.src != DagNode::Bottom && !written.contains(&(e.src.clone(), e.label)) {
                out.push(v(
                    DagRule::WriteChain,
                    format!("{} -> {} on {:?} but {} never wrote it", e.src, e.dst, e.label, e.src),
                ));
            }
        }
        let mut out_writes = BTreeSet::new();
        for e in &self.write {
            if !out_writes.insert((e.src.clone(), e.label)) {
                out.push(v(
                    DagRule::WriteOutDegree,
                    format!("{} has two outgoing {:?} write edges", e.src, e.label),
                ));
            }
        }
        for e in &self.read {
            if e.src != DagNode::Bottom && !written.contains(&(e.src.clone(), e.label)) {
                out.push(v(
                    DagRule::ReadFromNonWriter,
                    format!("{} reads {:?} from {}, which never wrote it", e.dst, e.label, e.src),
                ));
            }
        }
        out
    }

    /// End of each resource's write chain, walking from ⊥.
    pub fn recompute_last(&self) -> BTreeMap<MemoryResource, DagNode> {
        let mut next: BTreeMap<(DagNode, MemoryResource), DagNode> = BTreeMap::new();
        for e in &self.write {
            next.insert((e.src.clone(), e.label), e.dst.clone());
        }
        let labels: BTreeSet<MemoryResource> = self.write.iter().map(|e| e.label).collect();
        labels
            .into_iter()
            .map(|r| {
                let mut cur = DagNode::Bottom;
                let mut steps = 0;
                while let Some(n) = next.get(&(cur.clone(), r)) {
                    cur = n.clone();
                    steps += 1;
                    if steps > self.write.len() {
                        break;
                    }
                }
                (r, cur)
            })
            .collect()
    }
}

fn has_cycle(nodes: &BTreeSet<DagNode>, edges: &[&DagEdge]) -> bool {
    let mut indeg: BTreeMap<&DagNode, usize> = nodes.iter().map(|n| (n, 0)).collect();
    for e in edges {
        *indeg.entry(&e.dst).or_default() += 1;
        indeg.entry(&e.src).or_default();
    }
    let mut queue: Vec<&DagNode> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut seen = 0;
    while let Some(n) = queue.pop() {
        seen += 1;
        for e in edges.iter().filter(|e| &e.src == n) {
            let d = indeg.get_mut(&e.dst).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push(&e.dst);
            }
        }
    }
    seen != indeg.len()
}

/// JSON form of a DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagView {
    pub nodes: Vec<DagNode>,
    pub write_edges: Vec<EdgeView>,
    pub read_edges: Vec<EdgeView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeView {
    pub src: DagNode,
    pub label: String,
    pub dst: DagNode,
}

impl DagView {
    /// Back to explicit sets; fails on unknown resource names.
    pub fn to_explicit(&self, p: &Program) -> Result<ExplicitDag, String> {
        let conv = |e: &EdgeView, kind| {
            Ok(DagEdge {
                src: e.src.clone(),
                label: MemoryResource::from_name(p, &e.label)
                    .ok_or_else(|| format!("unknown resource {:?}", e.label))?,
                dst: e.dst.clone(),
                kind,
            })
        };
        Ok(ExplicitDag {
            nodes: self.nodes.iter().cloned().collect(),
            write: self
                .write_edges
                .iter()
                .map(|e| conv(e, EdgeKind::Write))
                .collect::<Result<_, String>>()?,
            read: self
                .read_edges
                .iter()
                .map(|e| conv(e, EdgeKind::Read))
                .collect::<Result<_, String>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEdgeView {
    pub src: DagNode,
    pub label: String,
    pub dst: DagNode,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagDiffView {
    pub added_nodes: Vec<DagNode>,
    pub removed_nodes: Vec<DagNode>,
    pub added_edges: Vec<DiffEdgeView>,
    pub removed_edges: Vec<DiffEdgeView>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn pid(s: &str) -> ProcessId {
        ProcessId::parse(s).unwrap()
    }

    fn n(p: &str, i: u32) -> DagNode {
        DagNode::new(pid(p), i)
    }

    fn set(p: &Program, names: &[&str]) -> ResourceSet {
        names.iter().map(|s| MemoryResource::from_name(p, s).unwrap()).collect()
    }

    /// A2..A8 for the shared program, built from labels alone.
    fn shared_dags() -> (Program, Vec<AnnotationDag>) {
        let p = corpus::shared();
        let steps: [(&str, &[&str], &[&str]); 8] = [
            ("", &[], &[]),
            ("", &[], &[]),
            ("1", &["x"], &["x"]),
            ("2", &["x", "y"], &["y"]),
            ("3", &["x", "z"], &["z"]),
            ("1", &["x"], &["x"]),
            ("", &[], &[]),
            ("", &[], &[]),
        ];
        let mut dags = vec![AnnotationDag::new()];
        for (q, rd, wt) in steps {
            let next = dags.last().unwrap().apply_forward(&pid(q), &set(&p, rd), &set(&p, wt));
            assert!(next.validate().is_empty());
            dags.push(next);
        }
        (p, dags)
    }

    #[test]
    fn empty_dag() {
        let a = AnnotationDag::new();
        assert_eq!(a.nodes(), vec![DagNode::Bottom]);
        assert!(a.edges().is_empty());
        assert_eq!(a.max_index(&pid("")), -1);
        assert_eq!(a.last_write(MemoryResource::Heap), DagNode::Bottom);
        assert!(a.removable_nodes().is_empty());
        assert!(!a.backward_enabled(&pid(""), &ResourceSet::new(), &ResourceSet::new()));
    }

    #[test]
    fn forward_accumulation() {
        let (p, a) = shared_dags();
        let x = MemoryResource::from_name(&p, "x").unwrap();
        let y = MemoryResource::from_name(&p, "y").unwrap();
        assert_eq!(a[2].nodes(), vec![DagNode::Bottom, n("", 0), n("", 1)]);
        assert!(a[2].edges().is_empty());
        assert_eq!(
            a[3].write_edges(),
            vec![DagEdge {
                src: DagNode::Bottom,
                label: x,
                dst: n("1", 0),
                kind: EdgeKind::Write
            }]
        );
        let d = DagDiff::between(&a[3], &a[4]);
        assert_eq!(d.added_nodes, [n("2", 0)].into());
        assert_eq!(
            d.added_edges,
            [
                DagEdge {
                    src: DagNode::Bottom,
                    label: y,
                    dst: n("2", 0),
                    kind: EdgeKind::Write
                },
                DagEdge {
                    src: n("1", 0),
                    label: x,
                    dst: n("2", 0),
                    kind: EdgeKind::Read
                },
            ]
            .into()
        );
        let d = DagDiff::between(&a[7], &a[8]);
        assert_eq!(d.added_nodes, [n("", 3)].into());
        assert!(d.added_edges.is_empty());
    }

    #[test]
    fn final_shape() {
        let (p, a) = shared_dags();
        let a8 = &a[8];
        assert_eq!(a8.node_count(), 9);
        let show = |es: Vec<DagEdge>| -> Vec<String> {
            es.iter()
                .map(|e| format!("{}-{}-{}", e.src, e.label.name(&p), e.dst))
                .collect()
        };
        let mut w = show(a8.write_edges());
        w.sort();
        assert_eq!(w, ["(1,0)-x-(1,1)", "⊥-x-(1,0)", "⊥-y-(2,0)", "⊥-z-(3,0)"]);
        let mut r = show(a8.read_edges());
        r.sort();
        assert_eq!(r, ["(1,0)-x-(2,0)", "(1,0)-x-(3,0)"]);
    }

    #[test]
    fn removable() {
        let (p, a) = shared_dags();
        assert_eq!(a[8].removable_nodes(), [n("", 3), n("1", 1)].into());
        // after (1,1) goes, (1,0) still has two readers
        let a5 = a[6]
            .apply_backward(&pid("1"), &set(&p, &["x"]), &set(&p, &["x"]))
            .unwrap();
        assert_eq!(a5, a[5]);
        let r = a5.removable_nodes();
        assert!(r.contains(&n("2", 0)) && r.contains(&n("3", 0)));
        assert!(!r.contains(&n("1", 0)));
        // the fork node is also a sink of the DAG; only the configuration rules it out
        assert_eq!(r, [n("", 1), n("2", 0), n("3", 0)].into());
        assert_eq!(
            a5.backward_check(&pid("1"), &set(&p, &["x"]), &set(&p, &["x"])),
            Err(DagRefusal::HasOutgoing { node: n("1", 0) })
        );
    }

    #[test]
    fn backward_refusals() {
        let (p, a) = shared_dags();
        // (2,0) read x from (1,0), which (1,1) has overwritten
        assert_eq!(
            a[6].backward_check(&pid("2"), &set(&p, &["x", "y"]), &set(&p, &["y"])),
            Err(DagRefusal::StaleRead { node: n("2", 0) })
        );
        assert_eq!(
            a[6].backward_check(&pid("1"), &set(&p, &["x", "y"]), &set(&p, &["x"])),
            Err(DagRefusal::LabelMismatch { node: n("1", 1) })
        );
        assert_eq!(
            a[6].backward_check(&pid("4"), &ResourceSet::new(), &ResourceSet::new()),
            Err(DagRefusal::NoNode { pid: pid("4") })
        );
    }

    #[test]
    fn rollback_to_empty() {
        let (p, a) = shared_dags();
        let a4 = a[5]
            .apply_backward(&pid("2"), &set(&p, &["x", "y"]), &set(&p, &["y"]))
            .unwrap();
        assert_eq!(DagDiff::between(&a[5], &a4).removed_nodes, [n("2", 0)].into());
        let a3 = a4
            .apply_backward(&pid("3"), &set(&p, &["x", "z"]), &set(&p, &["z"]))
            .unwrap();
        assert_eq!(a3, a[3]);
        let a2 = a3
            .apply_backward(&pid("1"), &set(&p, &["x"]), &set(&p, &["x"]))
            .unwrap();
        assert_eq!(a2, a[2]);
        let e = ResourceSet::new();
        let a0 = a2
            .apply_backward(&pid(""), &e, &e)
            .unwrap()
            .apply_backward(&pid(""), &e, &e)
            .unwrap();
        assert_eq!(a0, AnnotationDag::new());
    }

    #[test]
    fn validator_catches_malformed_sets() {
        let (p, a) = shared_dags();
        let x = MemoryResource::from_name(&p, "x").unwrap();
        let good = a[8].explicit();
        assert!(good.validate().is_empty());

        let mut bad = good.clone();
        bad.nodes.remove(&n("1", 0));
        assert!(bad.validate().iter().any(|v| v.rule == DagRule::NodeSet));

        let mut bad = good.clone();
        bad.write.push(DagEdge {
            src: DagNode::Bottom,
            label: x,
            dst: n("1", 1),
            kind: EdgeKind::Write,
        });
        let rules: Vec<DagRule> = bad.validate().iter().map(|v| v.rule).collect();
        assert!(rules.contains(&DagRule::UniqueIncoming));
        assert!(rules.contains(&DagRule::WriteOutDegree));

        let mut bad = good.clone();
        bad.write.push(DagEdge {
            src: n("1", 1),
            label: x,
            dst: n("1", 0),
            kind: EdgeKind::Write,
        });
        assert!(bad.validate().iter().any(|v| v.rule == DagRule::Acyclic));

        let mut bad = good.clone();
        bad.write.push(DagEdge {
            src: n("2", 0),
            label: x,
            dst: n("", 2),
            kind: EdgeKind::Write,
        });
        assert!(bad.validate().iter().any(|v| v.rule == DagRule::WriteChain));

        let mut bad = good.clone();
        bad.read.push(DagEdge {
            src: n("", 0),
            label: x,
            dst: n("", 2),
            kind: EdgeKind::Read,
        });
        assert!(bad.validate().iter().any(|v| v.rule == DagRule::ReadFromNonWriter));

        let mut bad = good;
        let e = bad.write[0].clone();
        bad.read.push(DagEdge {
            kind: EdgeKind::Read,
            ..e
        });
        assert!(bad.validate().iter().any(|v| v.rule == DagRule::Acyclic));
    }

    #[test]
    fn json_and_dot() {
        let (p, a) = shared_dags();
        let view = a[8].view(&p);
        let json = serde_json::to_value(&view).unwrap();
        assert_eq!(json["nodes"][0], serde_json::json!({"kind": "bottom"}));
        assert_eq!(json["nodes"].as_array().unwrap().len(), 9);
        assert!(json["write_edges"].as_array().unwrap().contains(&serde_json::json!({
            "src": {"kind": "node", "pid": "1", "index": 0},
            "label": "x",
            "dst": {"kind": "node", "pid": "1", "index": 1},
        })));
        let back: DagView = serde_json::from_value(json).unwrap();
        assert_eq!(back.to_explicit(&p).unwrap(), a[8].explicit());

        let dot = a[8].to_dot(&p);
        assert!(dot.contains("\"(1,0)\" -> \"(2,0)\" [label=\"x\", style=dashed]"));
        assert!(dot.contains("\"⊥\" -> \"(1,0)\" [label=\"x\", style=solid]"));
    }
}
