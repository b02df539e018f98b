//! Program steps paired with annotation-DAG steps, the independence
//! relation on labels, schedulers and traces.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adag::{AnnotationDag, DagNode, DagRefusal, DagView};
use crate::analysis::{MemoryResource, ResourceSet};
use crate::machine::{
    BlockReason, ConfigView, Direction, Machine, MachineError, ProcessId, ProgramConfiguration, RuntimeFault,
    StepError, Transition, TransitionKind,
};
use crate::syntax::{BlockId, Program};

/// `(C, A)`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CombinedState {
    pub config: ProgramConfiguration,
    pub dag: AnnotationDag,
}

/// `(p, Rd, Wt)` with a direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionLabel {
    pub pid: ProcessId,
    pub rd: ResourceSet,
    pub wt: ResourceSet,
    pub direction: Direction,
}

impl TransitionLabel {
    /// The direction-free label.
    pub fn underlying(&self) -> TransitionLabel {
        TransitionLabel {
            direction: Direction::Forward,
            ..self.clone()
        }
    }
}

impl Transition {
    pub fn label(&self) -> TransitionLabel {
        TransitionLabel {
            pid: self.pid.clone(),
            rd: self.rd.clone(),
            wt: self.wt.clone(),
            direction: self.direction,
        }
    }
}

/// Neither process is a prefix of the other and neither reads what the other writes.
pub fn independent_labels(a: &TransitionLabel, b: &TransitionLabel) -> bool {
    !a.pid.is_prefix_of(&b.pid) && !b.pid.is_prefix_of(&a.pid) && !a.rd.intersects(&b.wt) && !b.rd.intersects(&a.wt)
}

pub fn independent(a: &Transition, b: &Transition) -> bool {
    !a.pid.is_prefix_of(&b.pid) && !b.pid.is_prefix_of(&a.pid) && !a.rd.intersects(&b.wt) && !b.rd.intersects(&a.wt)
}

/// Why a process cannot step.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Refusal {
    #[error("process {pid} is not active or has no {direction} step")]
    NoStep { pid: ProcessId, direction: Direction },
    #[error("program does not allow the step: {detail:?}")]
    NotEnabledProg { detail: BlockReason },
    #[error("annotation DAG does not allow the step: {detail}")]
    NotEnabledDag { detail: DagRefusal },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtsError {
    #[error(transparent)]
    Refused(#[from] Refusal),
    #[error("step does not match the transition process {0} would take")]
    Mismatch(ProcessId),
    #[error(transparent)]
    Fault(#[from] RuntimeFault),
}

/// The combined transition system of one program.
#[derive(Debug, Clone)]
pub struct Lts {
    machine: Machine,
}

impl Lts {
    pub fn new(program: Program) -> Result<Lts, MachineError> {
        Ok(Lts {
            machine: Machine::new(program)?,
        })
    }

    pub fn from_machine(machine: Machine) -> Lts {
        Lts { machine }
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn program(&self) -> &Program {
        self.machine.program()
    }

    pub fn initial_state(&self) -> CombinedState {
        CombinedState {
            config: self.machine.initial_config(),
            dag: AnnotationDag::new(),
        }
    }

    pub fn is_final(&self, s: &CombinedState) -> bool {
        self.machine.is_final(&s.config)
    }

    fn dag_step(&self, dag: &AnnotationDag, t: &Transition) -> Result<AnnotationDag, DagRefusal> {
        match t.direction {
            Direction::Forward => Ok(dag.apply_forward(&t.pid, &t.rd, &t.wt)),
            Direction::Backward => dag.apply_backward(&t.pid, &t.rd, &t.wt),
        }
    }

    fn dag_allows(&self, dag: &AnnotationDag, t: &Transition) -> Result<(), DagRefusal> {
        match t.direction {
            Direction::Forward => Ok(()),
            Direction::Backward => dag.backward_check(&t.pid, &t.rd, &t.wt).map(|_| ()),
        }
    }

    /// Transitions enabled in both halves, ordered by pid then kind.
    /// Steps that fault are included; applying them reports the fault.
    pub fn enabled(&self, s: &CombinedState, dir: Direction) -> Vec<Transition> {
        let mut ts: Vec<Transition> = self
            .machine
            .enabled_prog(&s.config, dir)
            .into_iter()
            .filter(|t| self.dag_allows(&s.dag, t).is_ok())
            .collect();
        ts.sort_by(|a, b| (&a.pid, a.kind).cmp(&(&b.pid, b.kind)));
        ts
    }

    /// Enabled transitions with their targets, ordered as [`Lts::enabled`].
    pub fn successors(
        &self,
        s: &CombinedState,
        dir: Direction,
    ) -> Vec<(Transition, Result<CombinedState, RuntimeFault>)> {
        self.machine
            .successors(&s.config, dir)
            .into_iter()
            .filter_map(|(t, next)| {
                let dag = self.dag_step(&s.dag, &t).ok()?;
                Some((t, next.map(|config| CombinedState { config, dag })))
            })
            .collect()
    }

    /// Why process `pid` cannot step in `dir`; `None` if it can.
    pub fn refusal(&self, s: &CombinedState, pid: &ProcessId, dir: Direction) -> Option<Refusal> {
        let Some(t) = self.machine.candidate_for(&s.config, pid, dir) else {
            return Some(Refusal::NoStep {
                pid: pid.clone(),
                direction: dir,
            });
        };
        match self.machine.apply_prog(&s.config, &t) {
            Err(StepError::Blocked(detail)) => return Some(Refusal::NotEnabledProg { detail }),
            Err(StepError::NoSuchStep { .. }) | Err(StepError::Mismatch(_)) => {
                return Some(Refusal::NoStep {
                    pid: pid.clone(),
                    direction: dir,
                })
            }
            _ => {}
        }
        self.dag_allows(&s.dag, &t)
            .err()
            .map(|detail| Refusal::NotEnabledDag { detail })
    }

    pub fn step(&self, s: &CombinedState, t: &Transition) -> Result<CombinedState, LtsError> {
        let cand = self
            .machine
            .candidate_for(&s.config, &t.pid, t.direction)
            .ok_or_else(|| Refusal::NoStep {
                pid: t.pid.clone(),
                direction: t.direction,
            })?;
        if cand.kind != t.kind || cand.block != t.block {
            return Err(LtsError::Mismatch(t.pid.clone()));
        }
        self.step_pid(s, &t.pid, t.direction).map(|(_, next)| next)
    }

    /// Takes the step process `pid` would take in `dir`.
    pub fn step_pid(
        &self,
        s: &CombinedState,
        pid: &ProcessId,
        dir: Direction,
    ) -> Result<(Transition, CombinedState), LtsError> {
        if let Some(r) = self.refusal(s, pid, dir) {
            return Err(r.into());
        }
        let t = self
            .machine
            .candidate_for(&s.config, pid, dir)
            .expect("checked by refusal");
        let config = match self.machine.apply_prog(&s.config, &t) {
            Ok(c) => c,
            Err(StepError::Fault(f)) => return Err(f.into()),
            Err(_) => unreachable!("checked by refusal"),
        };
        let dag = self.dag_step(&s.dag, &t).expect("checked by refusal");
        Ok((t, CombinedState { config, dag }))
    }

    /// DAG nodes that some enabled backward step would remove.
    pub fn removable_nodes(&self, s: &CombinedState) -> BTreeSet<DagNode> {
        self.enabled(s, Direction::Backward)
            .iter()
            .filter_map(|t| s.dag.backward_check(&t.pid, &t.rd, &t.wt).ok())
            .collect()
    }

    /// Repeatedly lets `scheduler` pick among enabled transitions.
    pub fn run(
        &self,
        start: &CombinedState,
        scheduler: &mut dyn Scheduler,
        dir: Direction,
        max_steps: usize,
    ) -> RunResult {
        let mut state = start.clone();
        let mut trace = Vec::new();
        let mut states = vec![state.clone()];
        let outcome = loop {
            let enabled = self.enabled(&state, dir);
            if enabled.is_empty() {
                let done = match dir {
                    Direction::Forward => self.is_final(&state),
                    Direction::Backward => state == self.initial_state(),
                };
                break if done { Outcome::Terminated } else { Outcome::Blocked };
            }
            if trace.len() >= max_steps {
                break Outcome::StepLimit;
            }
            let Some(i) = scheduler.choose(&state, &enabled) else {
                break Outcome::ScheduleExhausted;
            };
            let t = &enabled[i];
            match self.step(&state, t) {
                Ok(next) => {
                    trace.push(t.clone());
                    state = next;
                    states.push(state.clone());
                }
                Err(LtsError::Fault(f)) => {
                    trace.push(t.clone());
                    break match f {
                        RuntimeFault::AssertFailure { .. } => Outcome::AssertFailed(f),
                        RuntimeFault::NegativeHeapAddress { .. } => Outcome::Fault(f),
                    };
                }
                Err(e) => unreachable!("enabled transition failed: {e}"),
            }
        };
        RunResult { trace, states, outcome }
    }

    /// Applies trace entries in order from `start`.
    pub fn replay(&self, start: &CombinedState, entries: &[TraceEntry]) -> Result<RunResult, ReplayError> {
        let mut state = start.clone();
        let mut trace = Vec::new();
        let mut states = vec![state.clone()];
        for (index, e) in entries.iter().enumerate() {
            let fail = |reason: String| ReplayError { index, reason };
            let t = self.resolve(&state, e).map_err(fail)?;
            match self.step(&state, &t) {
                Ok(next) => {
                    state = next;
                    states.push(state.clone());
                    trace.push(t);
                }
                Err(LtsError::Fault(f)) => {
                    trace.push(t);
                    return Ok(RunResult {
                        trace,
                        states,
                        outcome: match f {
                            RuntimeFault::AssertFailure { .. } => Outcome::AssertFailed(f),
                            RuntimeFault::NegativeHeapAddress { .. } => Outcome::Fault(f),
                        },
                    });
                }
                Err(err) => return Err(fail(err.to_string())),
            }
        }
        let outcome = if self.is_final(&state) || (state == self.initial_state() && !entries.is_empty()) {
            Outcome::Terminated
        } else {
            Outcome::ScheduleExhausted
        };
        Ok(RunResult { trace, states, outcome })
    }

    /// The transition a trace entry names, checking block and sets when given.
    pub fn resolve(&self, s: &CombinedState, e: &TraceEntry) -> Result<Transition, String> {
        let p = self.program();
        let t = self
            .machine
            .candidate_for(&s.config, &e.pid, e.dir)
            .ok_or_else(|| format!("process {} has no {} step", e.pid, e.dir))?;
        if let Some(b) = &e.block {
            if *b != t.block.to_string() {
                return Err(format!(
                    "process {} would execute {} {}, not {b}",
                    e.pid, e.dir, t.block
                ));
            }
        }
        let names = |set: &ResourceSet| set.names(p);
        if let Some(rd) = &e.rd {
            if sorted(rd) != sorted(&names(&t.rd)) {
                return Err(format!("read set of {} is {:?}, not {:?}", t.block, names(&t.rd), rd));
            }
        }
        if let Some(wt) = &e.wt {
            if sorted(wt) != sorted(&names(&t.wt)) {
                return Err(format!("write set of {} is {:?}, not {:?}", t.block, names(&t.wt), wt));
            }
        }
        Ok(t)
    }

    pub fn trace_entry(&self, t: &Transition) -> TraceEntry {
        let p = self.program();
        TraceEntry {
            pid: t.pid.clone(),
            dir: t.direction,
            block: Some(t.block.to_string()),
            rd: Some(t.rd.names(p)),
            wt: Some(t.wt.names(p)),
        }
    }

    pub fn transition_view(&self, t: &Transition) -> TransitionView {
        let p = self.program();
        TransitionView {
            pid: t.pid.clone(),
            dir: t.direction,
            kind: t.kind,
            block: t.block.to_string(),
            rd: t.rd.names(p),
            wt: t.wt.names(p),
            text: p.describe_block(t.block),
        }
    }

    pub fn state_view(&self, s: &CombinedState) -> StateView {
        StateView {
            config: self.machine.config_view(&s.config),
            dag: s.dag.view(self.program()),
            is_final: self.is_final(s),
            is_initial: *s == self.initial_state(),
        }
    }

    /// The store after each step, one row per executed block.
    pub fn store_table(&self, run: &RunResult) -> String {
        let p = self.program();
        let vars: Vec<_> = p.vars().collect();
        let label_width = run
            .trace
            .iter()
            .map(|t| step_name(t).chars().count())
            .max()
            .unwrap_or(0)
            .max(4);
        let col = vars.iter().map(|x| p.var_name(*x).len()).max().unwrap_or(1).max(4);
        let mut out = format!("{:label_width$}", "");
        for x in &vars {
            out.push_str(&format!(" | {:>col$}", p.var_name(*x)));
        }
        out.push('\n');
        let row = |out: &mut String, name: &str, c: &ProgramConfiguration| {
            out.push_str(name);
            out.push_str(&" ".repeat(label_width - name.chars().count()));
            for x in &vars {
                out.push_str(&format!(" | {:>col$}", c.var(*x)));
            }
            out.push('\n');
        };
        if let Some(first) = run.states.first() {
            row(&mut out, "", &first.config);
        }
        for (t, s) in run.trace.iter().zip(run.states.iter().skip(1)) {
            row(&mut out, &step_name(t), &s.config);
        }
        out
    }
}

fn step_name(t: &Transition) -> String {
    let bar = match t.direction {
        Direction::Forward => "",
        Direction::Backward => "~",
    };
    format!("{bar}{} ∈ PB({})", t.block, t.pid)
}

fn sorted(v: &[String]) -> Vec<String> {
    let mut v = v.to_vec();
    v.sort();
    v
}

/// Serialized step, used for traces and replay files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub pid: ProcessId,
    pub dir: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rd: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wt: Option<Vec<String>>,
}

impl TraceEntry {
    pub fn new(pid: ProcessId, dir: Direction) -> TraceEntry {
        TraceEntry {
            pid,
            dir,
            block: None,
            rd: None,
            wt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionView {
    pub pid: ProcessId,
    pub dir: Direction,
    pub kind: TransitionKind,
    pub block: String,
    pub rd: Vec<String>,
    pub wt: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateView {
    pub config: ConfigView,
    pub dag: DagView,
    pub is_final: bool,
    pub is_initial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace entry {index}: {reason}")]
pub struct ReplayError {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Forward: the final configuration. Backward: the initial state.
    Terminated,
    /// Nothing enabled and not terminated.
    Blocked,
    StepLimit,
    AssertFailed(RuntimeFault),
    Fault(RuntimeFault),
    /// The scheduler had no choice to offer.
    ScheduleExhausted,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Terminated => "terminated",
            Outcome::Blocked => "blocked",
            Outcome::StepLimit => "step-limit",
            Outcome::AssertFailed(_) => "assert-failed",
            Outcome::Fault(_) => "fault",
            Outcome::ScheduleExhausted => "schedule-exhausted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<Transition>,
    /// Start state followed by the state after each completed step.
    pub states: Vec<CombinedState>,
    pub outcome: Outcome,
}

impl RunResult {
    pub fn final_state(&self) -> &CombinedState {
        self.states.last().expect("run has a start state")
    }
}

/// Picks one of the enabled transitions, or stops the run.
pub trait Scheduler {
    fn choose(&mut self, state: &CombinedState, enabled: &[Transition]) -> Option<usize>;
}

/// Uniform choice from a seeded ChaCha8 stream.
pub struct RandomScheduler {
    rng: ChaCha8Rng,
}

impl RandomScheduler {
    pub fn new(seed: u64) -> RandomScheduler {
        RandomScheduler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Scheduler for RandomScheduler {
    fn choose(&mut self, _: &CombinedState, enabled: &[Transition]) -> Option<usize> {
        let idx: Vec<usize> = (0..enabled.len()).collect();
        idx.choose(&mut self.rng).copied()
    }
}

/// Cycles through process ids in order.
#[derive(Default)]
pub struct RoundRobin {
    last: Option<ProcessId>,
}

impl Scheduler for RoundRobin {
    fn choose(&mut self, _: &CombinedState, enabled: &[Transition]) -> Option<usize> {
        let i = match &self.last {
            Some(last) => enabled.iter().position(|t| t.pid > *last).unwrap_or(0),
            None => 0,
        };
        self.last = enabled.get(i).map(|t| t.pid.clone());
        enabled.get(i).map(|_| i)
    }
}

/// Follows a fixed list of process ids; stops when a listed process cannot move.
pub struct PidSchedule {
    pids: Vec<ProcessId>,
    pos: usize,
}

impl PidSchedule {
    pub fn new(pids: Vec<ProcessId>) -> PidSchedule {
        PidSchedule { pids, pos: 0 }
    }

    /// Comma-separated dotted ids; `ε` or an empty item is the root.
    pub fn parse(text: &str) -> Result<PidSchedule, String> {
        let pids = text
            .split(',')
            .map(|s| ProcessId::parse(s).ok_or_else(|| format!("bad process id {s:?}")))
            .collect::<Result<_, _>>()?;
        Ok(PidSchedule::new(pids))
    }
}

impl Scheduler for PidSchedule {
    fn choose(&mut self, _: &CombinedState, enabled: &[Transition]) -> Option<usize> {
        let want = self.pids.get(self.pos)?;
        let i = enabled.iter().position(|t| t.pid == *want)?;
        self.pos += 1;
        Some(i)
    }
}

/// Parses a resource-name list against a program.
pub fn resource_set(p: &Program, names: &[&str]) -> Option<ResourceSet> {
    names.iter().map(|n| MemoryResource::from_name(p, n)).collect()
}

/// Blocks that can be named in a trace.
pub fn block_by_name(p: &Program, name: &str) -> Option<BlockId> {
    let n: usize = name.strip_prefix('b')?.parse().ok()?;
    (n >= 1 && n <= p.blocks.len()).then(|| BlockId(n - 1))
}
