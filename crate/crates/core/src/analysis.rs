//! Static semantics: read/write sets, in/out labels, process blocks and
//! well-formedness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use smallvec::SmallVec;

use crate::syntax::{
    BasicBlock, BlockId, BlockKind, EntryPoint, ExitPoint, Expr, Instruction, LabelId, LeftValue, Program, VarId,
};

/// A memory resource: a variable, or the whole heap `M` as one resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MemoryResource {
    Var(VarId),
    Heap,
}

impl MemoryResource {
    pub fn name(self, p: &Program) -> &str {
        match self {
            MemoryResource::Var(x) => p.var_name(x),
            MemoryResource::Heap => "M",
        }
    }

    pub fn from_name(p: &Program, name: &str) -> Option<MemoryResource> {
        if name == "M" {
            Some(MemoryResource::Heap)
        } else {
            p.var_id(name).map(MemoryResource::Var)
        }
    }
}

/// Small sorted set of memory resources.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceSet(SmallVec<[MemoryResource; 4]>);

impl ResourceSet {
    pub fn new() -> Self {
        ResourceSet::default()
    }

    pub fn insert(&mut self, r: MemoryResource) {
        if let Err(pos) = self.0.binary_search(&r) {
            self.0.insert(pos, r);
        }
    }

    pub fn contains(&self, r: MemoryResource) -> bool {
        self.0.binary_search(&r).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = MemoryResource> + '_ {
        self.0.iter().copied()
    }

    pub fn intersects(&self, other: &ResourceSet) -> bool {
        self.iter().any(|r| other.contains(r))
    }

    pub fn is_subset(&self, other: &ResourceSet) -> bool {
        self.iter().all(|r| other.contains(r))
    }

    pub fn difference(&self, other: &ResourceSet) -> ResourceSet {
        self.iter().filter(|r| !other.contains(*r)).collect()
    }

    pub fn names(&self, p: &Program) -> Vec<String> {
        self.iter().map(|r| r.name(p).to_string()).collect()
    }
}

impl FromIterator<MemoryResource> for ResourceSet {
    fn from_iter<I: IntoIterator<Item = MemoryResource>>(iter: I) -> Self {
        let mut v: SmallVec<[MemoryResource; 4]> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        ResourceSet(v)
    }
}

fn expr_resources(e: &Expr, out: &mut ResourceSet) {
    match e {
        Expr::Const(_) => {}
        Expr::Var(x) => out.insert(MemoryResource::Var(*x)),
        Expr::Heap(x) => {
            out.insert(MemoryResource::Heap);
            out.insert(MemoryResource::Var(*x));
        }
        Expr::Not(inner) => expr_resources(inner, out),
        Expr::Binary(_, a, b) => {
            expr_resources(a, out);
            expr_resources(b, out);
        }
    }
}

fn left_resources(left: LeftValue, out: &mut ResourceSet) {
    match left {
        LeftValue::Var(x) => out.insert(MemoryResource::Var(x)),
        LeftValue::Heap(x) => {
            out.insert(MemoryResource::Heap);
            out.insert(MemoryResource::Var(x));
        }
    }
}

fn left_written(left: LeftValue) -> MemoryResource {
    match left {
        LeftValue::Var(x) => MemoryResource::Var(x),
        LeftValue::Heap(_) => MemoryResource::Heap,
    }
}

/// Resources referenced by the entry, instruction and exit of `b`.
pub fn read_set(b: &BasicBlock) -> ResourceSet {
    let mut out = ResourceSet::new();
    if let BlockKind::Instruction { entry, inst, exit } = &b.kind {
        if let EntryPoint::Cond(_, _, e) = entry {
            expr_resources(e, &mut out);
        }
        match inst {
            Instruction::Update { target, value, .. } => {
                left_resources(*target, &mut out);
                expr_resources(value, &mut out);
            }
            Instruction::Exchange(a, b) => {
                left_resources(*a, &mut out);
                left_resources(*b, &mut out);
            }
            Instruction::V(x) | Instruction::P(x) => out.insert(MemoryResource::Var(*x)),
            Instruction::Assert(e) => expr_resources(e, &mut out),
            Instruction::Skip => {}
        }
        if let ExitPoint::Cond(e, _, _) = exit {
            expr_resources(e, &mut out);
        }
    }
    out
}

/// Resources updated by `b`.
pub fn write_set(b: &BasicBlock) -> ResourceSet {
    let mut out = ResourceSet::new();
    if let BlockKind::Instruction { inst, .. } = &b.kind {
        match inst {
            Instruction::Update { target, .. } => out.insert(left_written(*target)),
            Instruction::Exchange(a, b) => {
                out.insert(left_written(*a));
                out.insert(left_written(*b));
            }
            Instruction::V(x) | Instruction::P(x) => out.insert(MemoryResource::Var(*x)),
            Instruction::Assert(_) | Instruction::Skip => {}
        }
    }
    out
}

pub fn in_labels(b: &BasicBlock) -> BTreeSet<LabelId> {
    match &b.kind {
        BlockKind::Instruction { entry, .. } => match entry {
            EntryPoint::Uncond(l) => BTreeSet::from([*l]),
            EntryPoint::Cond(l1, l2, _) => BTreeSet::from([*l1, *l2]),
            EntryPoint::Begin(_) => BTreeSet::new(),
        },
        BlockKind::Call { from, .. } => BTreeSet::from([*from]),
    }
}

pub fn out_labels(b: &BasicBlock) -> BTreeSet<LabelId> {
    match &b.kind {
        BlockKind::Instruction { exit, .. } => match exit {
            ExitPoint::Uncond(l) => BTreeSet::from([*l]),
            ExitPoint::Cond(_, l1, l2) => BTreeSet::from([*l1, *l2]),
            ExitPoint::End(_) => BTreeSet::new(),
        },
        BlockKind::Call { to, .. } => BTreeSet::from([*to]),
    }
}

/// The label of a `begin l` entry.
pub fn begin_label(b: &BasicBlock) -> Option<LabelId> {
    match &b.kind {
        BlockKind::Instruction {
            entry: EntryPoint::Begin(l),
            ..
        } => Some(*l),
        _ => None,
    }
}

/// The label of an `end l` exit.
pub fn end_label(b: &BasicBlock) -> Option<LabelId> {
    match &b.kind {
        BlockKind::Instruction {
            exit: ExitPoint::End(l),
            ..
        } => Some(*l),
        _ => None,
    }
}

/// Labels used for control transfer between blocks (`L1`).
pub fn flow_labels(p: &Program) -> BTreeSet<LabelId> {
    p.blocks
        .iter()
        .flat_map(|b| in_labels(b).into_iter().chain(out_labels(b)))
        .collect()
}

/// Labels of `begin`/`end` points (`L2`).
pub fn process_labels<'a>(blocks: impl IntoIterator<Item = &'a BasicBlock>) -> BTreeSet<LabelId> {
    blocks
        .into_iter()
        .flat_map(|b| begin_label(b).into_iter().chain(end_label(b)))
        .collect()
}

/// Partition of a program's blocks into process blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessBlockPartition {
    /// Class index of each block, indexed by `BlockId`.
    pub class_of: Vec<usize>,
    /// Blocks of each class in ascending id order; classes ordered by their first block.
    pub classes: Vec<Vec<BlockId>>,
    /// The `begin`/`end` labels of each class.
    pub class_labels: Vec<BTreeSet<LabelId>>,
}

impl ProcessBlockPartition {
    /// The unique process label of a class, if it has exactly one.
    pub fn label_of_class(&self, class: usize) -> Option<LabelId> {
        let labels = &self.class_labels[class];
        if labels.len() == 1 {
            labels.iter().next().copied()
        } else {
            None
        }
    }

    pub fn class_labeled(&self, l: LabelId) -> Option<usize> {
        self.class_labels.iter().position(|ls| ls.contains(&l))
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Equivalence classes of the block connectedness relation.
pub fn process_blocks(p: &Program) -> ProcessBlockPartition {
    let n = p.blocks.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut first_user: BTreeMap<LabelId, usize> = BTreeMap::new();
    for b in &p.blocks {
        for l in in_labels(b).into_iter().chain(out_labels(b)) {
            match first_user.get(&l) {
                Some(&other) => {
                    let (ra, rb) = (find(&mut parent, other), find(&mut parent, b.id.0));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
                None => {
                    first_user.insert(l, b.id.0);
                }
            }
        }
    }
    let mut class_of = Vec::with_capacity(n);
    let mut classes: Vec<Vec<BlockId>> = Vec::new();
    let mut root_class: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let c = *root_class.entry(root).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        class_of.push(c);
        classes[c].push(BlockId(i));
    }
    let class_labels = classes
        .iter()
        .map(|bs| process_labels(bs.iter().map(|b| p.block(*b))))
        .collect();
    ProcessBlockPartition {
        class_of,
        classes,
        class_labels,
    }
}

/// Which well-formedness rule a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// (1) each flow label joins exactly one (in, out) pair of blocks
    UniqueFlowPair,
    /// (2) each process label has exactly one `begin` and one `end`
    UniqueBeginEnd,
    /// (3) flow labels and process labels are disjoint
    DisjointLabelKinds,
    /// (4) each process block has exactly one process label
    OneLabelPerProcessBlock,
    /// (5) a `main` process label exists
    MainExists,
    CallTargetIsProcess,
    DuplicateCallTarget,
    SemaphoreExclusive,
    DistinctBranchLabels,
    MainNotSelfCalled,
}

impl Rule {
    /// 1..=5 for the numbered conditions.
    pub fn condition_number(self) -> Option<u8> {
        match self {
            Rule::UniqueFlowPair => Some(1),
            Rule::UniqueBeginEnd => Some(2),
            Rule::DisjointLabelKinds => Some(3),
            Rule::OneLabelPerProcessBlock => Some(4),
            Rule::MainExists => Some(5),
            _ => None,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.condition_number() {
            Some(n) => write!(f, "condition ({n})"),
            None => {
                let s = serde_json::to_value(self)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default();
                write!(f, "{s}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub blocks: Vec<BlockId>,
    pub labels: Vec<LabelId>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WellFormednessReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl WellFormednessReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            out.push_str(&format!("error: {}: {}\n", v.rule, v.message));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        if self.ok() {
            out.push_str("ok\n");
        }
        out
    }
}

fn semaphore_vars(p: &Program) -> BTreeSet<VarId> {
    p.blocks
        .iter()
        .filter_map(|b| match &b.kind {
            BlockKind::Instruction {
                inst: Instruction::P(x) | Instruction::V(x),
                ..
            } => Some(*x),
            _ => None,
        })
        .collect()
}

/// Variable occurrences outside `P`/`V` parameters.
fn plain_var_uses(b: &BasicBlock) -> BTreeSet<VarId> {
    let mut out = BTreeSet::new();
    let BlockKind::Instruction { entry, inst, exit } = &b.kind else {
        return out;
    };
    let mut add = |e: &Expr| {
        e.for_each_var(&mut |x| {
            out.insert(x);
        })
    };
    if let EntryPoint::Cond(_, _, e) = entry {
        add(e);
    }
    if let ExitPoint::Cond(e, _, _) = exit {
        add(e);
    }
    match inst {
        Instruction::Update { target, value, .. } => {
            add(value);
            out.insert(target.var());
        }
        Instruction::Exchange(a, b) => {
            out.insert(a.var());
            out.insert(b.var());
        }
        Instruction::Assert(e) => add(e),
        Instruction::V(_) | Instruction::P(_) | Instruction::Skip => {}
    }
    out
}

/// Checks well-formedness conditions (1)-(5) and the CRIL usage restrictions.
pub fn check_well_formed(p: &Program) -> WellFormednessReport {
    let mut report = WellFormednessReport::default();
    let mut violate = |rule: Rule, blocks: Vec<BlockId>, labels: Vec<LabelId>, message: String| {
        report.violations.push(Violation {
            rule,
            blocks,
            labels,
            message,
        })
    };
    let name = |l: LabelId| p.label_name(l).to_string();
    let ins: Vec<BTreeSet<LabelId>> = p.blocks.iter().map(in_labels).collect();
    let outs: Vec<BTreeSet<LabelId>> = p.blocks.iter().map(out_labels).collect();
    let l1 = flow_labels(p);
    let l2 = process_labels(&p.blocks);

    // (1)
    for &l in &l1 {
        let receivers: Vec<BlockId> = p
            .blocks
            .iter()
            .filter(|b| ins[b.id.0].contains(&l))
            .map(|b| b.id)
            .collect();
        let senders: Vec<BlockId> = p
            .blocks
            .iter()
            .filter(|b| outs[b.id.0].contains(&l))
            .map(|b| b.id)
            .collect();
        let pairs: Vec<(BlockId, BlockId)> = receivers
            .iter()
            .flat_map(|&r| senders.iter().map(move |&s| (r, s)))
            .filter(|(r, s)| {
                let common: Vec<&LabelId> = ins[r.0].intersection(&outs[s.0]).collect();
                common == [&l]
            })
            .collect();
        if pairs.len() != 1 {
            let mut blocks = receivers.clone();
            blocks.extend(&senders);
            blocks.sort();
            blocks.dedup();
            let message = if receivers.len() != 1 || senders.len() != 1 {
                format!(
                    "label `{}` is received by {} block(s) and sent by {} block(s); exactly one of each is required",
                    name(l),
                    receivers.len(),
                    senders.len()
                )
            } else {
                format!(
                    "label `{}` does not identify a unique connection: the blocks share more than this label",
                    name(l)
                )
            };
            violate(Rule::UniqueFlowPair, blocks, vec![l], message);
        }
    }

    // (2)
    for &l in &l2 {
        let begins: Vec<BlockId> = p
            .blocks
            .iter()
            .filter(|b| begin_label(b) == Some(l))
            .map(|b| b.id)
            .collect();
        let ends: Vec<BlockId> = p
            .blocks
            .iter()
            .filter(|b| end_label(b) == Some(l))
            .map(|b| b.id)
            .collect();
        if begins.len() != 1 || ends.len() != 1 {
            let mut blocks = begins.clone();
            blocks.extend(&ends);
            blocks.sort();
            violate(
                Rule::UniqueBeginEnd,
                blocks,
                vec![l],
                format!(
                    "process label `{}` has {} `begin` block(s) and {} `end` block(s); exactly one of each is required",
                    name(l),
                    begins.len(),
                    ends.len()
                ),
            );
        }
    }

    // (3)
    for &l in l1.intersection(&l2) {
        violate(
            Rule::DisjointLabelKinds,
            vec![],
            vec![l],
            format!(
                "label `{}` is used both for control flow and as a process label",
                name(l)
            ),
        );
    }

    // (4)
    let partition = process_blocks(p);
    for (c, blocks) in partition.classes.iter().enumerate() {
        let labels = &partition.class_labels[c];
        if labels.len() != 1 {
            let names: Vec<String> = labels.iter().map(|l| name(*l)).collect();
            violate(
                Rule::OneLabelPerProcessBlock,
                blocks.clone(),
                labels.iter().copied().collect(),
                format!(
                    "process block {{{}}} has {} process label(s) [{}]; exactly one is required",
                    blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","),
                    labels.len(),
                    names.join(", ")
                ),
            );
        }
    }

    // (5)
    let main = p.label_id("main").filter(|l| l2.contains(l));
    if main.is_none() {
        violate(
            Rule::MainExists,
            vec![],
            vec![],
            "no process block is labeled `main`".to_string(),
        );
    }

    for b in &p.blocks {
        match &b.kind {
            BlockKind::Call { targets, .. } => {
                let mut seen = BTreeSet::new();
                for &t in targets {
                    if !l2.contains(&t) {
                        violate(
                            Rule::CallTargetIsProcess,
                            vec![b.id],
                            vec![t],
                            format!("{} calls `{}`, which labels no process block", b.id, name(t)),
                        );
                    }
                    if !seen.insert(t) {
                        violate(
                            Rule::DuplicateCallTarget,
                            vec![b.id],
                            vec![t],
                            format!("{} calls `{}` more than once", b.id, name(t)),
                        );
                    }
                }
                if let Some(m) = main {
                    if targets.contains(&m) && partition.class_labels[partition.class_of[b.id.0]].contains(&m) {
                        violate(
                            Rule::MainNotSelfCalled,
                            vec![b.id],
                            vec![m],
                            format!("{} in the `main` process block calls `main`", b.id),
                        );
                    }
                }
            }
            BlockKind::Instruction { entry, exit, .. } => {
                if let EntryPoint::Cond(l1, l2, _) = entry {
                    if l1 == l2 {
                        violate(
                            Rule::DistinctBranchLabels,
                            vec![b.id],
                            vec![*l1],
                            format!("conditional entry of {} uses `{}` twice", b.id, name(*l1)),
                        );
                    }
                }
                if let ExitPoint::Cond(_, l1, l2) = exit {
                    if l1 == l2 {
                        violate(
                            Rule::DistinctBranchLabels,
                            vec![b.id],
                            vec![*l1],
                            format!("conditional exit of {} uses `{}` twice", b.id, name(*l1)),
                        );
                    }
                }
            }
        }
    }

    let sems = semaphore_vars(p);
    if !sems.is_empty() {
        for b in &p.blocks {
            for x in plain_var_uses(b).intersection(&sems) {
                violate(
                    Rule::SemaphoreExclusive,
                    vec![b.id],
                    vec![],
                    format!(
                        "semaphore variable `{}` is used outside P/V in {}",
                        p.var_name(*x),
                        b.id
                    ),
                );
            }
        }
    }

    let called: BTreeSet<LabelId> = p
        .blocks
        .iter()
        .filter_map(|b| match &b.kind {
            BlockKind::Call { targets, .. } => Some(targets.iter().copied()),
            _ => None,
        })
        .flatten()
        .collect();
    for &l in &l2 {
        if Some(l) != main && !called.contains(&l) {
            report
                .warnings
                .push(format!("process block `{}` is never called", name(l)));
        }
    }
    report
}
