//! Bidirectional small-step execution of program configurations, without
//! any causality control.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    begin_label, check_well_formed, end_label, in_labels, out_labels, read_set, write_set, ResourceSet,
    WellFormednessReport,
};
use crate::syntax::{BlockId, BlockKind, EntryPoint, ExitPoint, Expr, Instruction, LabelId, LeftValue, Program, VarId};

/// Process identifier: a sequence of positive integers, empty for the root.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(Arc<[u32]>);

impl ProcessId {
    pub fn root() -> ProcessId {
        ProcessId(Arc::from(Vec::new()))
    }

    pub fn from_segments(segments: &[u32]) -> ProcessId {
        ProcessId(Arc::from(segments))
    }

    pub fn segments(&self) -> &[u32] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// `self · i`
    pub fn child(&self, i: u32) -> ProcessId {
        let mut v = self.0.to_vec();
        v.push(i);
        ProcessId(Arc::from(v))
    }

    pub fn parent(&self) -> Option<ProcessId> {
        if self.is_root() {
            None
        } else {
            ProcessId::from_segments(&self.0[..self.0.len() - 1]).into()
        }
    }

    /// Prefix order: `self ⪯ other`.
    pub fn is_prefix_of(&self, other: &ProcessId) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Dotted form, empty for the root.
    pub fn dotted(&self) -> String {
        self.0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
    }

    /// Parses the dotted form; `""` and `"ε"` denote the root.
    pub fn parse(s: &str) -> Option<ProcessId> {
        let s = s.trim();
        if s.is_empty() || s == "ε" || s == "eps" {
            return Some(ProcessId::root());
        }
        let segs: Option<Vec<u32>> = s
            .split('.')
            .map(|part| part.parse::<u32>().ok().filter(|&i| i > 0))
            .collect();
        segs.map(|v| ProcessId(Arc::from(v)))
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            f.write_str("ε")
        } else {
            f.write_str(&self.dotted())
        }
    }
}

impl fmt::Debug for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pid({self})")
    }
}

impl Serialize for ProcessId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.dotted())
    }
}

impl<'de> Deserialize<'de> for ProcessId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ProcessId::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad process id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Begin,
    Run,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProcessConfiguration {
    pub label: LabelId,
    pub stage: Stage,
}

/// Active processes; absent ids are inactive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ProcessMap(BTreeMap<ProcessId, ProcessConfiguration>);

impl ProcessMap {
    pub fn get(&self, p: &ProcessId) -> Option<&ProcessConfiguration> {
        self.0.get(p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProcessId, &ProcessConfiguration)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn insert(&mut self, p: ProcessId, c: ProcessConfiguration) {
        self.0.insert(p, c);
    }

    pub fn remove(&mut self, p: &ProcessId) -> Option<ProcessConfiguration> {
        self.0.remove(p)
    }

    /// No active process strictly extends `p`.
    pub fn is_leaf(&self, p: &ProcessId) -> bool {
        self.0.range(p.clone()..).nth(1).is_none_or(|(q, _)| !p.is_prefix_of(q))
    }

    /// Direct children of `p` in id order.
    pub fn children<'a>(
        &'a self,
        p: &'a ProcessId,
    ) -> impl Iterator<Item = (&'a ProcessId, &'a ProcessConfiguration)> + 'a {
        let depth = p.segments().len() + 1;
        self.0
            .range(p.clone()..)
            .skip(1)
            .take_while(move |(q, _)| p.is_prefix_of(q))
            .filter(move |(q, _)| q.segments().len() == depth)
    }

    /// The active domain is closed under prefixes and left siblings and contains ε.
    pub fn is_process_set(&self) -> bool {
        if !self.0.contains_key(&ProcessId::root()) {
            return false;
        }
        self.0.keys().all(|p| {
            let segs = p.segments();
            match segs.split_last() {
                None => true,
                Some((&last, prefix)) => {
                    let parent = ProcessId::from_segments(prefix);
                    self.0.contains_key(&parent) && (1..last).all(|j| self.0.contains_key(&parent.child(j)))
                }
            }
        })
    }
}

/// `(ρ, σ, Pr)`; the program itself lives in the [`Machine`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProgramConfiguration {
    /// Variable values, indexed by `VarId`.
    pub rho: Vec<i64>,
    /// Heap cells; cells holding 0 are absent.
    pub sigma: BTreeMap<u64, i64>,
    pub processes: ProcessMap,
}

impl ProgramConfiguration {
    pub fn var(&self, x: VarId) -> i64 {
        self.rho[x.0 as usize]
    }

    pub fn heap(&self, addr: u64) -> i64 {
        self.sigma.get(&addr).copied().unwrap_or(0)
    }

    fn set_heap(&mut self, addr: u64, v: i64) {
        if v == 0 {
            self.sigma.remove(&addr);
        } else {
            self.sigma.insert(addr, v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s {
            "forward" | "fwd" | "f" => Some(Direction::Forward),
            "backward" | "bwd" | "b" => Some(Direction::Backward),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionKind {
    Inst,
    CallFork,
    CallMerge,
}

/// One step of one process, with the block that produces it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub pid: ProcessId,
    pub direction: Direction,
    pub kind: TransitionKind,
    pub block: BlockId,
    pub rd: ResourceSet,
    pub wt: ResourceSet,
}

impl Transition {
    /// Same step taken in the other direction.
    pub fn reversed(&self) -> Transition {
        Transition {
            direction: self.direction.flip(),
            ..self.clone()
        }
    }

    pub fn describe(&self, p: &Program) -> String {
        let dir = match self.direction {
            Direction::Forward => "",
            Direction::Backward => "~",
        };
        format!(
            "{dir}({}, {{{}}}, {{{}}}) {} {}",
            self.pid,
            self.rd.names(p).join(","),
            self.wt.names(p).join(","),
            self.block,
            match self.kind {
                TransitionKind::Inst => "inst",
                TransitionKind::CallFork => "fork",
                TransitionKind::CallMerge => "merge",
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuntimeFault {
    #[error("assertion failed in {block} (process {pid})")]
    AssertFailure { pid: ProcessId, block: BlockId },
    #[error("negative heap address {address} in {block} (process {pid})")]
    NegativeHeapAddress {
        pid: ProcessId,
        block: BlockId,
        address: i64,
    },
}

/// Why a candidate step of a process cannot be taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BlockReason {
    /// The process has active subprocesses that are not ready to merge or unfork.
    SubprocessesNotReady,
    /// `P`/`V` on a variable holding the wrong value.
    Semaphore { var: String, value: i64 },
    /// The branch condition disagrees with the label the control arrived at.
    /// In a well-formed run this means the program is not reversible here.
    GuardMismatch { detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("process {pid} has no {direction} step")]
    NoSuchStep { pid: ProcessId, direction: Direction },
    #[error("step is not enabled: {0:?}")]
    Blocked(BlockReason),
    #[error("step does not match the enabled transition for process {0}")]
    Mismatch(ProcessId),
    #[error(transparent)]
    Fault(#[from] RuntimeFault),
}

#[derive(Debug, Clone, Error)]
pub enum MachineError {
    #[error("program is not well-formed:\n{}", .0.render())]
    NotWellFormed(WellFormednessReport),
}

enum Failure {
    Blocked(BlockReason),
    Fault(RuntimeFault),
}

type Attempt = Result<ProgramConfiguration, Failure>;

/// Evaluates an expression; C-like truth values, wrapping arithmetic.
pub fn eval_expr(e: &Expr, rho: &[i64], sigma: &BTreeMap<u64, i64>) -> Result<i64, i64> {
    Ok(match e {
        Expr::Const(k) => *k,
        Expr::Var(x) => rho[x.0 as usize],
        Expr::Heap(x) => {
            let addr = rho[x.0 as usize];
            if addr < 0 {
                return Err(addr);
            }
            sigma.get(&(addr as u64)).copied().unwrap_or(0)
        }
        Expr::Not(inner) => (eval_expr(inner, rho, sigma)? == 0) as i64,
        Expr::Binary(op, a, b) => {
            use crate::syntax::BinOp::*;
            let a = eval_expr(a, rho, sigma)?;
            let b = eval_expr(b, rho, sigma)?;
            match op {
                Add => a.wrapping_add(b),
                Sub => a.wrapping_sub(b),
                Xor => a ^ b,
                Eq => (a == b) as i64,
                Ne => (a != b) as i64,
                Lt => (a < b) as i64,
                Le => (a <= b) as i64,
                Gt => (a > b) as i64,
                Ge => (a >= b) as i64,
                And => (a != 0 && b != 0) as i64,
                Or => (a != 0 || b != 0) as i64,
            }
        }
    })
}

fn lookup(table: &[Option<BlockId>], l: LabelId) -> Option<BlockId> {
    table.get(l.0 as usize).copied().flatten()
}

/// The transition relation of a well-formed program.
#[derive(Debug, Clone)]
pub struct Machine {
    program: Arc<Program>,
    main: LabelId,
    begin_block: Vec<Option<BlockId>>,
    end_block: Vec<Option<BlockId>>,
    in_block: Vec<Option<BlockId>>,
    out_block: Vec<Option<BlockId>>,
    rd: Vec<ResourceSet>,
    wt: Vec<ResourceSet>,
}

impl Machine {
    pub fn new(program: Program) -> Result<Machine, MachineError> {
        let report = check_well_formed(&program);
        if !report.ok() {
            return Err(MachineError::NotWellFormed(report));
        }
        let n = program.label_count();
        let mut m = Machine {
            main: program.label_id("main").expect("well-formed program has main"),
            begin_block: vec![None; n],
            end_block: vec![None; n],
            in_block: vec![None; n],
            out_block: vec![None; n],
            rd: program.blocks.iter().map(read_set).collect(),
            wt: program.blocks.iter().map(write_set).collect(),
            program: Arc::new(program),
        };
        for b in &m.program.blocks {
            if let Some(l) = begin_label(b) {
                m.begin_block[l.0 as usize] = Some(b.id);
            }
            if let Some(l) = end_label(b) {
                m.end_block[l.0 as usize] = Some(b.id);
            }
            for l in in_labels(b) {
                m.in_block[l.0 as usize] = Some(b.id);
            }
            for l in out_labels(b) {
                m.out_block[l.0 as usize] = Some(b.id);
            }
        }
        Ok(m)
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn shared_program(&self) -> Arc<Program> {
        Arc::clone(&self.program)
    }

    pub fn read_of(&self, b: BlockId) -> &ResourceSet {
        &self.rd[b.0]
    }

    pub fn write_of(&self, b: BlockId) -> &ResourceSet {
        &self.wt[b.0]
    }

    /// ρ all zero, σ empty, `[ε ↦ (main, begin)]`.
    pub fn initial_config(&self) -> ProgramConfiguration {
        let mut processes = ProcessMap::default();
        processes.insert(
            ProcessId::root(),
            ProcessConfiguration {
                label: self.main,
                stage: Stage::Begin,
            },
        );
        ProgramConfiguration {
            rho: vec![0; self.program.var_count()],
            sigma: BTreeMap::new(),
            processes,
        }
    }

    /// `[ε ↦ (main, end)]` exactly.
    pub fn is_final(&self, c: &ProgramConfiguration) -> bool {
        c.processes.len() == 1
            && c.processes.get(&ProcessId::root())
                == Some(&ProcessConfiguration {
                    label: self.main,
                    stage: Stage::End,
                })
    }

    pub fn eval(&self, e: &Expr, c: &ProgramConfiguration) -> Result<i64, i64> {
        eval_expr(e, &c.rho, &c.sigma)
    }

    fn transition(&self, pid: &ProcessId, dir: Direction, kind: TransitionKind, block: BlockId) -> Transition {
        let (rd, wt) = match kind {
            TransitionKind::Inst => (self.rd[block.0].clone(), self.wt[block.0].clone()),
            _ => (ResourceSet::new(), ResourceSet::new()),
        };
        Transition {
            pid: pid.clone(),
            direction: dir,
            kind,
            block,
            rd,
            wt,
        }
    }

    /// The single step process `pid` could take in `dir`, if any, and its outcome.
    fn candidate(&self, c: &ProgramConfiguration, pid: &ProcessId, dir: Direction) -> Option<(Transition, Attempt)> {
        let conf = *c.processes.get(pid)?;
        let leaf = c.processes.is_leaf(pid);
        let (kind, block) = match (dir, leaf, conf.stage) {
            (Direction::Forward, true, Stage::Begin) => (TransitionKind::Inst, lookup(&self.begin_block, conf.label)?),
            (Direction::Forward, true, Stage::Run) => {
                let b = lookup(&self.in_block, conf.label)?;
                if self.program.block(b).is_call() {
                    (TransitionKind::CallFork, b)
                } else {
                    (TransitionKind::Inst, b)
                }
            }
            (Direction::Backward, true, Stage::End) => (TransitionKind::Inst, lookup(&self.end_block, conf.label)?),
            (Direction::Backward, true, Stage::Run) => {
                let b = lookup(&self.out_block, conf.label)?;
                if self.program.block(b).is_call() {
                    (TransitionKind::CallMerge, b)
                } else {
                    (TransitionKind::Inst, b)
                }
            }
            (_, false, Stage::Run) => {
                let b = lookup(&self.out_block, conf.label)?;
                if !self.program.block(b).is_call() {
                    return None;
                }
                let kind = match dir {
                    Direction::Forward => TransitionKind::CallMerge,
                    Direction::Backward => TransitionKind::CallFork,
                };
                (kind, b)
            }
            _ => return None,
        };
        let t = self.transition(pid, dir, kind, block);
        let attempt = match kind {
            TransitionKind::Inst => self.attempt_inst(c, pid, conf, dir, block),
            TransitionKind::CallFork | TransitionKind::CallMerge => self.attempt_call(c, pid, leaf, dir, block),
        };
        Some((t, attempt))
    }

    fn attempt_call(
        &self,
        c: &ProgramConfiguration,
        pid: &ProcessId,
        leaf: bool,
        dir: Direction,
        block: BlockId,
    ) -> Attempt {
        let BlockKind::Call { from, targets, to } = &self.program.block(block).kind else {
            unreachable!("call transition on an instruction block")
        };
        let mut next = c.clone();
        if leaf {
            // forward fork, or backward merge (re-creating ended children)
            let (parent_label, child_stage) = match dir {
                Direction::Forward => (*to, Stage::Begin),
                Direction::Backward => (*to, Stage::End),
            };
            next.processes.insert(
                pid.clone(),
                ProcessConfiguration {
                    label: parent_label,
                    stage: Stage::Run,
                },
            );
            for (i, &l) in targets.iter().enumerate() {
                next.processes.insert(
                    pid.child(i as u32 + 1),
                    ProcessConfiguration {
                        label: l,
                        stage: child_stage,
                    },
                );
            }
            return Ok(next);
        }
        // forward merge of ended children, or backward unfork of children at begin
        let wanted = match dir {
            Direction::Forward => Stage::End,
            Direction::Backward => Stage::Begin,
        };
        let children: Vec<(&ProcessId, &ProcessConfiguration)> = c.processes.children(pid).collect();
        let ready = children.len() == targets.len()
            && children.iter().zip(targets).enumerate().all(|(i, ((q, conf), &l))| {
                q.segments().last() == Some(&(i as u32 + 1))
                    && conf.label == l
                    && conf.stage == wanted
                    && c.processes.is_leaf(q)
            });
        if !ready {
            return Err(Failure::Blocked(BlockReason::SubprocessesNotReady));
        }
        for (q, _) in children {
            next.processes.remove(q);
        }
        if dir == Direction::Backward {
            next.processes.insert(
                pid.clone(),
                ProcessConfiguration {
                    label: *from,
                    stage: Stage::Run,
                },
            );
        }
        Ok(next)
    }

    fn guard(&self, c: &ProgramConfiguration, pid: &ProcessId, block: BlockId, e: &Expr) -> Result<bool, Failure> {
        self.eval(e, c).map(|v| v != 0).map_err(|address| {
            Failure::Fault(RuntimeFault::NegativeHeapAddress {
                pid: pid.clone(),
                block,
                address,
            })
        })
    }

    fn attempt_inst(
        &self,
        c: &ProgramConfiguration,
        pid: &ProcessId,
        conf: ProcessConfiguration,
        dir: Direction,
        block: BlockId,
    ) -> Attempt {
        let BlockKind::Instruction { entry, inst, exit } = &self.program.block(block).kind else {
            unreachable!("instruction transition on a call block")
        };
        let p = &*self.program;
        match dir {
            Direction::Forward => {
                if let (Stage::Run, EntryPoint::Cond(l1, _, e)) = (conf.stage, entry) {
                    let holds = self.guard(c, pid, block, e)?;
                    if holds != (conf.label == *l1) {
                        return Err(Failure::Blocked(BlockReason::GuardMismatch {
                            detail: format!(
                                "entry condition `{}` is {} but control arrived at `{}`",
                                p.render_expr(e),
                                holds,
                                p.label_name(conf.label)
                            ),
                        }));
                    }
                }
                let mut next = c.clone();
                self.execute(&mut next, inst, dir, pid, block)?;
                let conf = match exit {
                    ExitPoint::Uncond(l) => ProcessConfiguration {
                        label: *l,
                        stage: Stage::Run,
                    },
                    ExitPoint::Cond(e, l1, l2) => {
                        let label = if self.guard(&next, pid, block, e)? { *l1 } else { *l2 };
                        ProcessConfiguration {
                            label,
                            stage: Stage::Run,
                        }
                    }
                    ExitPoint::End(l) => ProcessConfiguration {
                        label: *l,
                        stage: Stage::End,
                    },
                };
                next.processes.insert(pid.clone(), conf);
                Ok(next)
            }
            Direction::Backward => {
                if let (Stage::Run, ExitPoint::Cond(e, l1, _)) = (conf.stage, exit) {
                    let holds = self.guard(c, pid, block, e)?;
                    if holds != (conf.label == *l1) {
                        return Err(Failure::Blocked(BlockReason::GuardMismatch {
                            detail: format!(
                                "exit condition `{}` is {} but control is at `{}`",
                                p.render_expr(e),
                                holds,
                                p.label_name(conf.label)
                            ),
                        }));
                    }
                }
                let mut next = c.clone();
                self.execute(&mut next, inst, dir, pid, block)?;
                let conf = match entry {
                    EntryPoint::Uncond(l) => ProcessConfiguration {
                        label: *l,
                        stage: Stage::Run,
                    },
                    EntryPoint::Cond(l1, l2, e) => {
                        let label = if self.guard(&next, pid, block, e)? { *l1 } else { *l2 };
                        ProcessConfiguration {
                            label,
                            stage: Stage::Run,
                        }
                    }
                    EntryPoint::Begin(l) => ProcessConfiguration {
                        label: *l,
                        stage: Stage::Begin,
                    },
                };
                next.processes.insert(pid.clone(), conf);
                Ok(next)
            }
        }
    }

    fn address(&self, c: &ProgramConfiguration, x: VarId, pid: &ProcessId, block: BlockId) -> Result<u64, Failure> {
        let a = c.var(x);
        if a < 0 {
            return Err(Failure::Fault(RuntimeFault::NegativeHeapAddress {
                pid: pid.clone(),
                block,
                address: a,
            }));
        }
        Ok(a as u64)
    }

    fn read_left(
        &self,
        c: &ProgramConfiguration,
        left: LeftValue,
        pid: &ProcessId,
        block: BlockId,
    ) -> Result<i64, Failure> {
        match left {
            LeftValue::Var(x) => Ok(c.var(x)),
            LeftValue::Heap(x) => Ok(c.heap(self.address(c, x, pid, block)?)),
        }
    }

    fn write_left(
        &self,
        c: &mut ProgramConfiguration,
        left: LeftValue,
        v: i64,
        pid: &ProcessId,
        block: BlockId,
    ) -> Result<(), Failure> {
        match left {
            LeftValue::Var(x) => c.rho[x.0 as usize] = v,
            LeftValue::Heap(x) => {
                let a = self.address(c, x, pid, block)?;
                c.set_heap(a, v);
            }
        }
        Ok(())
    }

    fn execute(
        &self,
        c: &mut ProgramConfiguration,
        inst: &Instruction,
        dir: Direction,
        pid: &ProcessId,
        block: BlockId,
    ) -> Result<(), Failure> {
        match inst {
            Instruction::Update { target, op, value } => {
                let operand = self.eval(value, c).map_err(|address| {
                    Failure::Fault(RuntimeFault::NegativeHeapAddress {
                        pid: pid.clone(),
                        block,
                        address,
                    })
                })?;
                let op = match dir {
                    Direction::Forward => *op,
                    Direction::Backward => op.inverse(),
                };
                let current = self.read_left(c, *target, pid, block)?;
                self.write_left(c, *target, op.apply(current, operand), pid, block)
            }
            Instruction::Exchange(a, b) => {
                // heap indices are read once, before either side changes
                let va = self.read_left(c, *a, pid, block)?;
                let vb = self.read_left(c, *b, pid, block)?;
                let (addr_a, addr_b) = (self.resolve(c, *a, pid, block)?, self.resolve(c, *b, pid, block)?);
                self.store(c, addr_a, vb);
                self.store(c, addr_b, va);
                Ok(())
            }
            Instruction::V(x) | Instruction::P(x) => {
                // forward V and backward P take 0 to 1; the other two take 1 to 0
                let acquire = matches!(
                    (inst, dir),
                    (Instruction::V(_), Direction::Forward) | (Instruction::P(_), Direction::Backward)
                );
                let (from, to) = if acquire { (0, 1) } else { (1, 0) };
                let value = c.var(*x);
                if value != from {
                    return Err(Failure::Blocked(BlockReason::Semaphore {
                        var: self.program.var_name(*x).to_string(),
                        value,
                    }));
                }
                c.rho[x.0 as usize] = to;
                Ok(())
            }
            Instruction::Assert(e) => {
                let v = self.eval(e, c).map_err(|address| {
                    Failure::Fault(RuntimeFault::NegativeHeapAddress {
                        pid: pid.clone(),
                        block,
                        address,
                    })
                })?;
                if v == 0 {
                    return Err(Failure::Fault(RuntimeFault::AssertFailure {
                        pid: pid.clone(),
                        block,
                    }));
                }
                Ok(())
            }
            Instruction::Skip => Ok(()),
        }
    }

    fn resolve(
        &self,
        c: &ProgramConfiguration,
        left: LeftValue,
        pid: &ProcessId,
        block: BlockId,
    ) -> Result<Cell, Failure> {
        Ok(match left {
            LeftValue::Var(x) => Cell::Var(x),
            LeftValue::Heap(x) => Cell::Heap(self.address(c, x, pid, block)?),
        })
    }

    fn store(&self, c: &mut ProgramConfiguration, cell: Cell, v: i64) {
        match cell {
            Cell::Var(x) => c.rho[x.0 as usize] = v,
            Cell::Heap(a) => c.set_heap(a, v),
        }
    }

    /// Steps each process could take in `dir` with their outcomes; blocked
    /// candidates are omitted. Ordered by pid.
    pub fn successors(
        &self,
        c: &ProgramConfiguration,
        dir: Direction,
    ) -> Vec<(Transition, Result<ProgramConfiguration, RuntimeFault>)> {
        c.processes
            .iter()
            .filter_map(|(pid, _)| self.candidate(c, pid, dir))
            .filter_map(|(t, attempt)| match attempt {
                Ok(next) => Some((t, Ok(next))),
                Err(Failure::Fault(f)) => Some((t, Err(f))),
                Err(Failure::Blocked(_)) => None,
            })
            .collect()
    }

    /// Enabled transitions in `dir`, at most one per process. Steps that
    /// would fault (failed assertion, bad heap address) count as enabled.
    pub fn enabled_prog(&self, c: &ProgramConfiguration, dir: Direction) -> Vec<Transition> {
        self.successors(c, dir).into_iter().map(|(t, _)| t).collect()
    }

    /// Candidate steps that exist but are blocked, with the reason.
    pub fn blocked(&self, c: &ProgramConfiguration, dir: Direction) -> Vec<(Transition, BlockReason)> {
        c.processes
            .iter()
            .filter_map(|(pid, _)| self.candidate(c, pid, dir))
            .filter_map(|(t, attempt)| match attempt {
                Err(Failure::Blocked(r)) => Some((t, r)),
                _ => None,
            })
            .collect()
    }

    /// The step process `pid` would take in `dir`, whether or not it is enabled.
    pub fn candidate_for(&self, c: &ProgramConfiguration, pid: &ProcessId, dir: Direction) -> Option<Transition> {
        self.candidate(c, pid, dir).map(|(t, _)| t)
    }

    pub fn apply_prog(&self, c: &ProgramConfiguration, t: &Transition) -> Result<ProgramConfiguration, StepError> {
        let (cand, attempt) = self
            .candidate(c, &t.pid, t.direction)
            .ok_or_else(|| StepError::NoSuchStep {
                pid: t.pid.clone(),
                direction: t.direction,
            })?;
        if cand.kind != t.kind || cand.block != t.block {
            return Err(StepError::Mismatch(t.pid.clone()));
        }
        match attempt {
            Ok(next) => Ok(next),
            Err(Failure::Blocked(r)) => Err(StepError::Blocked(r)),
            Err(Failure::Fault(f)) => Err(StepError::Fault(f)),
        }
    }

    /// Takes the step of process `pid` in `dir`.
    pub fn step_pid(
        &self,
        c: &ProgramConfiguration,
        pid: &ProcessId,
        dir: Direction,
    ) -> Result<(Transition, ProgramConfiguration), StepError> {
        let t = self.candidate_for(c, pid, dir).ok_or_else(|| StepError::NoSuchStep {
            pid: pid.clone(),
            direction: dir,
        })?;
        let next = self.apply_prog(c, &t)?;
        Ok((t, next))
    }

    pub fn config_view(&self, c: &ProgramConfiguration) -> ConfigView {
        let p = &*self.program;
        ConfigView {
            rho: p.vars().map(|x| (p.var_name(x).to_string(), c.var(x))).collect(),
            sigma: c.sigma.iter().map(|(a, v)| (a.to_string(), *v)).collect(),
            processes: c
                .processes
                .iter()
                .map(|(pid, conf)| ProcessView {
                    pid: pid.clone(),
                    label: p.label_name(conf.label).to_string(),
                    stage: conf.stage,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy)]
enum Cell {
    Var(VarId),
    Heap(u64),
}

/// JSON form of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigView {
    pub rho: BTreeMap<String, i64>,
    pub sigma: BTreeMap<String, i64>,
    pub processes: Vec<ProcessView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessView {
    pub pid: ProcessId,
    pub label: String,
    pub stage: Stage,
}
