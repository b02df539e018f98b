// One line per acceptance criterion; the test fails if any line is FAIL.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use cril_core::adag::{DagNode, DagRefusal};
use cril_core::corpus;
use cril_core::ltsi::{CombinedState, Lts, LtsError, Outcome, PidSchedule, RandomScheduler, Refusal};
use cril_core::verify::{explore, Checker, ExploreOptions, LtsGraph, Property, INITIAL};
use cril_core::{Direction, Machine, ProcessId, Program, ProgramConfiguration};

type Check = Result<(), String>;
// name, check, time limit in seconds
type Criterion = (&'static str, fn() -> Check, u64);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn pid(s: &str) -> ProcessId {
    ProcessId::parse(s).unwrap()
}

fn store(p: &Program, c: &ProgramConfiguration, vars: &[&str]) -> Vec<i64> {
    vars.iter().map(|v| c.var(p.var_id(v).unwrap())).collect()
}

fn node(p: &str, n: u32) -> DagNode {
    DagNode::new(pid(p), n)
}

const GOLDEN: &str = "ε,ε,1,2,3,1,ε,ε";

fn golden_run(lts: &Lts) -> Result<Vec<CombinedState>, String> {
    let mut sched = PidSchedule::parse(GOLDEN)?;
    let run = lts.run(&lts.initial_state(), &mut sched, Direction::Forward, 100);
    ensure!(
        run.outcome == Outcome::Terminated,
        "golden run ended {}",
        run.outcome.name()
    );
    let blocks: Vec<String> = run.trace.iter().map(|t| t.block.to_string()).collect();
    ensure!(
        blocks == ["b1", "b2", "b4", "b6", "b7", "b5", "b2", "b3"],
        "blocks {blocks:?}"
    );
    Ok(run.states)
}

fn golden_trace() -> Check {
    let p = corpus::shared();
    let lts = Lts::new(p.clone()).map_err(|e| e.to_string())?;
    let states = golden_run(&lts)?;
    let rows: Vec<Vec<i64>> = states.iter().map(|s| store(&p, &s.config, &["x", "y", "z"])).collect();
    let want = [
        [0, 0, 0],
        [0, 0, 0],
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [1, 1, 1],
        [2, 1, 1],
        [2, 1, 1],
        [2, 1, 1],
    ];
    ensure!(rows == want, "store rows {rows:?}");
    Ok(())
}

fn uncontrolled_divergence() -> Check {
    let p = corpus::shared();
    let m = Machine::new(p.clone()).map_err(|e| e.to_string())?;
    let lts = Lts::from_machine(m.clone());
    let fin = golden_run(&lts)?.pop().unwrap();
    let mut c = fin.config.clone();
    let mut blocks = Vec::new();
    for q in ["ε", "ε", "3", "2", "1", "1", "ε", "ε"] {
        let (t, next) = m
            .step_pid(&c, &pid(q), Direction::Backward)
            .map_err(|e| format!("{q}: {e:?}"))?;
        blocks.push(t.block.to_string());
        c = next;
    }
    ensure!(
        blocks == ["b3", "b2", "b7", "b6", "b5", "b4", "b2", "b1"],
        "blocks {blocks:?}"
    );
    let end = store(&p, &c, &["x", "y", "z"]);
    ensure!(end == [0, -1, -1], "uncontrolled backward run ends at {end:?}");

    // with the DAG: every maximal backward schedule from the final state
    let init = lts.initial_state();
    let mut schedules = 0usize;
    let mut stack = vec![fin];
    while let Some(s) = stack.pop() {
        let succ = lts.successors(&s, Direction::Backward);
        if succ.is_empty() {
            schedules += 1;
            ensure!(s == init, "a maximal backward schedule ends at {:?}", s.config);
        }
        for (_, next) in succ {
            stack.push(next.map_err(|f| f.to_string())?);
        }
    }
    ensure!(schedules > 1, "only {schedules} schedules");
    println!("    {schedules} maximal backward schedules, all end in the initial state");
    Ok(())
}

fn dag_shape() -> Check {
    let p = corpus::shared();
    let lts = Lts::new(p.clone()).map_err(|e| e.to_string())?;
    let fin = golden_run(&lts)?.pop().unwrap();
    let dag = &fin.dag;
    ensure!(dag.node_count() == 9, "{} nodes", dag.node_count());
    let show = |es: Vec<cril_core::adag::DagEdge>| -> BTreeSet<String> {
        es.iter()
            .map(|e| format!("{}-{}->{}", e.src, e.label.name(&p), e.dst))
            .collect()
    };
    let set = |xs: &[&str]| -> BTreeSet<String> { xs.iter().map(|s| s.to_string()).collect() };
    let w = show(dag.write_edges());
    ensure!(
        w == set(&["⊥-x->(1,0)", "(1,0)-x->(1,1)", "⊥-y->(2,0)", "⊥-z->(3,0)"]),
        "write edges {w:?}"
    );
    let r = show(dag.read_edges());
    ensure!(r == set(&["(1,0)-x->(2,0)", "(1,0)-x->(3,0)"]), "read edges {r:?}");
    Ok(())
}

fn removability() -> Check {
    let lts = Lts::new(corpus::shared()).map_err(|e| e.to_string())?;
    let states = golden_run(&lts)?;
    let a8 = &states[8].dag;
    let got = a8.removable_nodes();
    ensure!(
        got == BTreeSet::from([node("ε", 3), node("1", 1)]),
        "removable at A8: {got:?}"
    );

    // (C5, A5): the final state with b3, the merge and b5 undone
    let mut s = states[8].clone();
    for q in ["ε", "ε", "1"] {
        s = lts
            .step_pid(&s, &pid(q), Direction::Backward)
            .map_err(|e| e.to_string())?
            .1;
    }
    ensure!(s == states[5], "rollback to C5 does not match the forward prefix");
    let got = lts.removable_nodes(&s);
    ensure!(
        got == BTreeSet::from([node("2", 0), node("3", 0)]),
        "removable at A5: {got:?}"
    );
    ensure!(!s.dag.removable_nodes().contains(&node("1", 0)), "(1,0) removable");
    match lts.step_pid(&s, &pid("1"), Direction::Backward) {
        Err(LtsError::Refused(Refusal::NotEnabledDag {
            detail: DagRefusal::HasOutgoing { node: n },
        })) if n == node("1", 0) => {}
        other => return Err(format!("reversing (1,0) at A5 gave {other:?}")),
    }
    Ok(())
}

// (pid, node index, block, seats, agent1, agent2)
const FAULTY_RUN: [(&str, u32, &str, i64, i64, i64); 22] = [
    ("ε", 0, "b1", 3, 0, 0),
    ("ε", 1, "b2", 3, 0, 0),
    ("1", 0, "b4", 3, 0, 0),
    ("2", 0, "b9", 3, 0, 0),
    ("1", 1, "b5", 3, 0, 0),
    ("1", 2, "b6", 2, 0, 0),
    ("1", 3, "b7", 2, 1, 0),
    ("2", 1, "b10", 2, 1, 0),
    ("2", 2, "b11", 1, 1, 0),
    ("2", 3, "b12", 1, 1, 1),
    ("2", 4, "b10", 1, 1, 1),
    ("1", 4, "b5", 1, 1, 1),
    ("2", 5, "b11", 0, 1, 1),
    ("1", 5, "b6", -1, 1, 1),
    ("2", 6, "b12", -1, 1, 2),
    ("2", 7, "b10", -1, 1, 2),
    ("2", 8, "b13", -1, 1, 2),
    ("1", 6, "b7", -1, 2, 2),
    ("1", 7, "b5", -1, 2, 2),
    ("1", 8, "b8", -1, 2, 2),
    ("ε", 2, "b2", -1, 2, 2),
    ("ε", 3, "b3", -1, 2, 2),
];

const AIRLINE_VARS: [&str; 3] = ["seats", "agent1", "agent2"];

fn airline_fault() -> Check {
    let p = corpus::airline_racy();
    let lts = Lts::new(p.clone()).map_err(|e| e.to_string())?;
    let g = explore(&lts, ExploreOptions::default());
    ensure!(!g.truncated, "exploration truncated");
    let bad = g
        .terminal_states()
        .into_iter()
        .any(|s| lts.is_final(g.state(s)) && store(&p, &g.state(s).config, &AIRLINE_VARS) == [-1, 2, 2]);
    ensure!(bad, "no final state with seats=-1, agent1=2, agent2=2");

    let mut s = lts.initial_state();
    for (i, &(q, n, block, seats, a1, a2)) in FAULTY_RUN.iter().enumerate() {
        let q = pid(q);
        ensure!(
            s.dag.next_node(&q) == DagNode::new(q.clone(), n),
            "row {i}: next node {}",
            s.dag.next_node(&q)
        );
        let (t, next) = lts
            .step_pid(&s, &q, Direction::Forward)
            .map_err(|e| format!("row {i}: {e}"))?;
        ensure!(
            t.block.to_string() == block,
            "row {i}: executed {} not {block}",
            t.block
        );
        let row = store(&p, &next.config, &AIRLINE_VARS);
        ensure!(row == [seats, a1, a2], "row {i}: store {row:?}");
        s = next;
    }
    ensure!(
        lts.is_final(&s),
        "faulty execution replay does not end in the final configuration"
    );
    Ok(())
}

fn semaphore_fix() -> Check {
    let p = corpus::airline_semaphore();
    let lts = Lts::new(p.clone()).map_err(|e| e.to_string())?;
    let g = explore(&lts, ExploreOptions::default());
    ensure!(!g.truncated, "exploration truncated");
    let seats = p.var_id("seats").unwrap();
    let negative = g.states.iter().filter(|s| s.config.var(seats) < 0).count();
    ensure!(negative == 0, "{negative} states with seats < 0");
    ensure!(g.faults.is_empty(), "{} faults", g.faults.len());
    // every state other than the initial one can step back, and each
    // backward step removes a DAG node, so every maximal backward
    // schedule is finite and ends in the initial state
    ensure!(
        g.backward_sinks() == [INITIAL],
        "backward sinks {:?}",
        g.backward_sinks()
    );
    for s in g.terminal_states() {
        ensure!(lts.is_final(g.state(s)), "terminal state {s} is a deadlock");
    }
    println!("    {} states, {} terminal", g.state_count(), g.terminal_states().len());
    Ok(())
}

fn graphs() -> Vec<(&'static str, Lts, LtsGraph)> {
    [
        ("shared", corpus::shared()),
        ("airline_racy", corpus::airline_racy()),
        ("airline_semaphore", corpus::airline_semaphore()),
    ]
    .into_iter()
    .map(|(name, p)| {
        let lts = Lts::new(p).unwrap();
        let g = explore(&lts, ExploreOptions::default());
        (name, lts, g)
    })
    .collect()
}

fn axiom_suite() -> Check {
    for (name, lts, g) in graphs() {
        ensure!(!g.truncated, "{name}: exploration truncated");
        let c = Checker::new(&lts, &g);
        for prop in [
            Property::Sp,
            Property::Bti,
            Property::Wf,
            Property::Cc,
            Property::Cs,
            Property::RoundTrip,
        ] {
            let r = c.check(prop, 12);
            ensure!(
                r.ok,
                "{name}: {prop:?} failed: {:?}",
                r.counterexample.map(|c| c.message)
            );
        }
        let m = lts.machine();
        for b in &lts.program().blocks {
            ensure!(
                m.write_of(b.id).is_subset(m.read_of(b.id)),
                "{name}: write of {} not within read",
                b.id
            );
        }
        println!("    {name}: {} states, {} edges", g.state_count(), g.edges.len());
    }
    Ok(())
}

fn dag_validator() -> Check {
    let mut checked = 0usize;
    let mut violations = Vec::new();
    let mut look = |tag: &str, s: &CombinedState| {
        checked += 1;
        for v in s.dag.validate() {
            violations.push(format!("{tag}: {v:?}"));
        }
    };
    for (name, lts, g) in graphs() {
        for s in &g.states {
            look(name, s);
        }
        for seed in 0..50 {
            let fwd = lts.run(
                &lts.initial_state(),
                &mut RandomScheduler::new(seed),
                Direction::Forward,
                500,
            );
            for s in &fwd.states {
                look(name, s);
            }
            let back = lts.run(
                fwd.final_state(),
                &mut RandomScheduler::new(seed),
                Direction::Backward,
                500,
            );
            for s in &back.states {
                look(name, s);
            }
        }
    }
    ensure!(
        violations.is_empty(),
        "{} violations, first {}",
        violations.len(),
        violations[0]
    );
    println!("    {checked} DAGs, zero violations");
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("golden trace of the shared-variable program", golden_trace, 1),
        (
            "uncontrolled reversal diverges; DAG-controlled rollback returns home",
            uncontrolled_divergence,
            10,
        ),
        ("annotation DAG shape after the full forward run", dag_shape, 1),
        ("removable nodes at A8 and A5", removability, 1),
        (
            "racy airline reaches seats=-1 and replays the faulty execution",
            airline_fault,
            5,
        ),
        (
            "semaphore airline never oversells and always rolls back",
            semaphore_fix,
            60,
        ),
        ("axiom suite on all corpus programs", axiom_suite, 120),
        ("DAG validator finds zero violations", dag_validator, 120),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let res = check();
        let took = start.elapsed();
        let res = res.and_then(|()| {
            if took > Duration::from_secs(limit) {
                Err(format!("took {took:?}, limit {limit}s"))
            } else {
                Ok(())
            }
        });
        match res {
            Ok(()) => println!("PASS {name} ({} ms)", took.as_millis()),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
