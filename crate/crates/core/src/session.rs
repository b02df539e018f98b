//! Debug sessions: one program, a current state and the list of moves that
//! led there. Everything the HTTP service exposes goes through here.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::adag::{DagDiff, DagDiffView, DagView};
use crate::analysis::process_blocks;
use crate::ltsi::{
    CombinedState, Lts, LtsError, Outcome, RandomScheduler, Refusal, RoundRobin, Scheduler, StateView, TraceEntry,
    TransitionView,
};
use crate::machine::{Direction, ProcessId, RuntimeFault, Transition};
use crate::syntax::{render_program, BlockKind, Program};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockView {
    pub name: String,
    pub line: usize,
    /// Index into `ProgramView::processes`.
    pub process: usize,
    pub is_call: bool,
    pub entry: String,
    pub inst: String,
    pub exit: String,
    pub rd: Vec<String>,
    pub wt: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessBlockView {
    pub label: Option<String>,
    pub blocks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramView {
    pub source: String,
    pub vars: Vec<String>,
    pub blocks: Vec<BlockView>,
    pub processes: Vec<ProcessBlockView>,
}

impl ProgramView {
    pub fn new(lts: &Lts) -> ProgramView {
        let p = lts.program();
        let part = process_blocks(p);
        let blocks = p
            .blocks
            .iter()
            .map(|b| {
                let (entry, inst, exit) = match &b.kind {
                    BlockKind::Instruction { entry, inst, exit } => {
                        (p.render_entry(entry), p.render_instruction(inst), p.render_exit(exit))
                    }
                    BlockKind::Call { from, targets, to } => {
                        let targets: Vec<&str> = targets.iter().map(|l| p.label_name(*l)).collect();
                        (
                            format!("{} <-", p.label_name(*from)),
                            format!("call {}", targets.join(",")),
                            format!("-> {}", p.label_name(*to)),
                        )
                    }
                };
                BlockView {
                    name: b.id.to_string(),
                    line: p.source_line(b.id),
                    process: part.class_of[b.id.0],
                    is_call: b.is_call(),
                    entry,
                    inst,
                    exit,
                    rd: lts.machine().read_of(b.id).names(p),
                    wt: lts.machine().write_of(b.id).names(p),
                }
            })
            .collect();
        let processes = (0..part.classes.len())
            .map(|c| ProcessBlockView {
                label: part.label_of_class(c).map(|l| p.label_name(l).to_string()),
                blocks: part.classes[c].iter().map(|b| b.to_string()).collect(),
            })
            .collect();
        ProgramView {
            source: render_program(p),
            vars: p.vars().map(|x| p.var_name(x).to_string()).collect(),
            blocks,
            processes,
        }
    }
}

/// A process that cannot take a step it otherwise has, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockedView {
    pub pid: ProcessId,
    pub dir: Direction,
    pub block: String,
    pub refusal: Refusal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitionsView {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward: Option<Vec<TransitionView>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backward: Option<Vec<TransitionView>>,
    pub blocked: Vec<BlockedView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionStateView {
    pub id: String,
    pub version: u64,
    pub cursor: usize,
    pub history_len: usize,
    pub hash: String,
    #[serde(flatten)]
    pub state: StateView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HistoryView {
    pub cursor: usize,
    pub moves: Vec<TransitionView>,
}

/// Either `index` into the enabled list for `dir`, or `pid`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    pub dir: Option<Direction>,
    pub index: Option<usize>,
    pub pid: Option<ProcessId>,
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepResponse {
    pub transition: TransitionView,
    pub state: SessionStateView,
    pub enabled: TransitionsView,
    pub dag_delta: DagDiffView,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    #[default]
    Random,
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRequest {
    #[serde(default = "forward")]
    pub dir: Direction,
    #[serde(default = "many")]
    pub steps: usize,
    pub seed: Option<u64>,
    #[serde(default)]
    pub scheduler: SchedulerKind,
    pub expected_version: Option<u64>,
}

fn forward() -> Direction {
    Direction::Forward
}

fn many() -> usize {
    1000
}

impl Default for RunRequest {
    fn default() -> Self {
        RunRequest {
            dir: forward(),
            steps: many(),
            seed: None,
            scheduler: SchedulerKind::Random,
            expected_version: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunResponse {
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
    pub steps: Vec<TransitionView>,
    pub state: SessionStateView,
    pub dag_delta: DagDiffView,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Refused(Refusal),
    #[error("no enabled {dir} transition with index {index} ({len} enabled)")]
    BadIndex { dir: Direction, index: usize, len: usize },
    #[error("history has {len} moves, cannot move to {position}")]
    BadPosition { position: usize, len: usize },
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Fault(RuntimeFault),
    #[error("session is at version {actual}, request expected {expected}")]
    Conflict { expected: u64, actual: u64 },
}

impl SessionError {
    /// The conflict case maps to 409, everything else to 400.
    pub fn is_conflict(&self) -> bool {
        matches!(self, SessionError::Conflict { .. })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = match self {
            SessionError::Refused(r) => serde_json::to_value(r).expect("refusal serializes"),
            SessionError::BadIndex { .. } => json!({ "reason": "no-step" }),
            SessionError::BadPosition { .. } => json!({ "reason": "bad-position" }),
            SessionError::BadRequest(_) => json!({ "reason": "bad-request" }),
            SessionError::Fault(f) => json!({ "reason": "fault", "detail": f }),
            SessionError::Conflict { expected, actual } => {
                json!({ "reason": "conflict", "expected": expected, "actual": actual })
            }
        };
        v["message"] = json!(self.to_string());
        v
    }
}

#[derive(Debug, Clone)]
pub struct DebugSession {
    id: String,
    lts: Lts,
    seed: u64,
    current: CombinedState,
    /// Moves taken; only the first `cursor` are applied to `current`.
    history: Vec<Transition>,
    cursor: usize,
    version: u64,
}

impl DebugSession {
    pub fn new(lts: Lts, seed: u64) -> DebugSession {
        let current = lts.initial_state();
        DebugSession {
            id: format!("s{:016x}", rand::random::<u64>()),
            lts,
            seed,
            current,
            history: Vec::new(),
            cursor: 0,
            version: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lts(&self) -> &Lts {
        &self.lts
    }

    pub fn program(&self) -> &Program {
        self.lts.program()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn current(&self) -> &CombinedState {
        &self.current
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// All recorded moves, including any past the cursor after a scrub.
    pub fn history(&self) -> &[Transition] {
        &self.history
    }

    pub fn hash(&self) -> String {
        state_hash(&self.current)
    }

    pub fn state_view(&self) -> SessionStateView {
        SessionStateView {
            id: self.id.clone(),
            version: self.version,
            cursor: self.cursor,
            history_len: self.history.len(),
            hash: self.hash(),
            state: self.lts.state_view(&self.current),
        }
    }

    pub fn dag_view(&self) -> DagView {
        self.current.dag.view(self.program())
    }

    pub fn history_view(&self) -> HistoryView {
        HistoryView {
            cursor: self.cursor,
            moves: self.history.iter().map(|t| self.lts.transition_view(t)).collect(),
        }
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.history[..self.cursor]
            .iter()
            .map(|t| self.lts.trace_entry(t))
            .collect()
    }

    /// `None` lists both directions.
    pub fn transitions(&self, dir: Option<Direction>) -> TransitionsView {
        let list = |d: Direction| -> Vec<TransitionView> {
            self.lts
                .enabled(&self.current, d)
                .iter()
                .map(|t| self.lts.transition_view(t))
                .collect()
        };
        let dirs: Vec<Direction> = match dir {
            Some(d) => vec![d],
            None => vec![Direction::Forward, Direction::Backward],
        };
        let mut blocked = Vec::new();
        for &d in &dirs {
            for (pid, _) in self.current.config.processes.iter() {
                let Some(t) = self.lts.machine().candidate_for(&self.current.config, pid, d) else {
                    continue;
                };
                match self.lts.refusal(&self.current, pid, d) {
                    None | Some(Refusal::NoStep { .. }) => {}
                    Some(refusal) => blocked.push(BlockedView {
                        pid: pid.clone(),
                        dir: d,
                        block: t.block.to_string(),
                        refusal,
                    }),
                }
            }
        }
        TransitionsView {
            forward: dirs.contains(&Direction::Forward).then(|| list(Direction::Forward)),
            backward: dirs.contains(&Direction::Backward).then(|| list(Direction::Backward)),
            blocked,
        }
    }

    fn check_version(&self, expected: Option<u64>) -> Result<(), SessionError> {
        match expected {
            Some(e) if e != self.version => Err(SessionError::Conflict {
                expected: e,
                actual: self.version,
            }),
            _ => Ok(()),
        }
    }

    /// Applies one move. On error the session is unchanged.
    pub fn step(&mut self, req: &StepRequest) -> Result<StepResponse, SessionError> {
        self.check_version(req.expected_version)?;
        let dir = req.dir.unwrap_or(Direction::Forward);
        let pid = match (req.index, &req.pid) {
            (Some(index), None) => {
                let enabled = self.lts.enabled(&self.current, dir);
                let len = enabled.len();
                enabled
                    .into_iter()
                    .nth(index)
                    .ok_or(SessionError::BadIndex { dir, index, len })?
                    .pid
            }
            (None, Some(pid)) => pid.clone(),
            _ => return Err(SessionError::BadRequest("give exactly one of index and pid".into())),
        };
        let (t, next) = self.lts.step_pid(&self.current, &pid, dir).map_err(|e| match e {
            LtsError::Refused(r) => SessionError::Refused(r),
            LtsError::Fault(f) => SessionError::Fault(f),
            LtsError::Mismatch(pid) => SessionError::Refused(Refusal::NoStep { pid, direction: dir }),
        })?;
        let delta = DagDiff::between(&self.current.dag, &next.dag);
        self.push(t.clone(), next);
        Ok(StepResponse {
            transition: self.lts.transition_view(&t),
            state: self.state_view(),
            enabled: self.transitions(None),
            dag_delta: delta.view(self.program()),
        })
    }

    /// Runs a scheduler from the current state. A faulting step is not applied.
    pub fn run(&mut self, req: &RunRequest) -> Result<RunResponse, SessionError> {
        self.check_version(req.expected_version)?;
        let mut sched: Box<dyn Scheduler> = match req.scheduler {
            SchedulerKind::Random => Box::new(RandomScheduler::new(req.seed.unwrap_or(self.seed))),
            SchedulerKind::RoundRobin => Box::new(RoundRobin::default()),
        };
        let before = self.current.dag.clone();
        let res = self.lts.run(&self.current, sched.as_mut(), req.dir, req.steps);
        let applied = res.states.len() - 1;
        let steps = res.trace.iter().map(|t| self.lts.transition_view(t)).collect();
        for (t, s) in res.trace.iter().zip(res.states.iter().skip(1)) {
            self.push(t.clone(), s.clone());
        }
        let fault = match &res.outcome {
            Outcome::AssertFailed(f) | Outcome::Fault(f) => Some(f.to_string()),
            _ => None,
        };
        debug_assert!(res.trace.len() == applied || fault.is_some());
        Ok(RunResponse {
            outcome: res.outcome.name().to_string(),
            fault,
            steps,
            state: self.state_view(),
            dag_delta: DagDiff::between(&before, &self.current.dag).view(self.program()),
        })
    }

    /// Back to the initial state with an empty history.
    pub fn reset(&mut self, expected_version: Option<u64>) -> Result<SessionStateView, SessionError> {
        self.check_version(expected_version)?;
        self.current = self.lts.initial_state();
        self.history.clear();
        self.cursor = 0;
        self.version += 1;
        Ok(self.state_view())
    }

    /// Replays the first `position` moves. Later moves are kept until the
    /// next step, which discards them.
    pub fn scrub(&mut self, position: usize, expected_version: Option<u64>) -> Result<SessionStateView, SessionError> {
        self.check_version(expected_version)?;
        if position > self.history.len() {
            return Err(SessionError::BadPosition {
                position,
                len: self.history.len(),
            });
        }
        self.current = self.replay_prefix(position);
        self.cursor = position;
        self.version += 1;
        Ok(self.state_view())
    }

    fn push(&mut self, t: Transition, next: CombinedState) {
        self.history.truncate(self.cursor);
        self.history.push(t);
        self.cursor += 1;
        self.current = next;
        self.version += 1;
        debug_assert!(self.replay_consistent());
    }

    fn replay_prefix(&self, n: usize) -> CombinedState {
        let mut s = self.lts.initial_state();
        for t in &self.history[..n] {
            s = self.lts.step(&s, t).expect("recorded moves replay");
        }
        s
    }

    /// Replaying the applied moves from the initial state gives `current`.
    pub fn replay_consistent(&self) -> bool {
        self.replay_prefix(self.cursor) == self.current
    }
}

pub fn state_hash(s: &CombinedState) -> String {
    let mut h = DefaultHasher::new();
    s.hash(&mut h);
    format!("{:016x}", h.finish())
}
