use proptest::prelude::*;

use cril_core::adag::{DagDiff, DagView};
use cril_core::corpus;
use cril_core::ltsi::{independent, CombinedState, Lts, RandomScheduler, TraceEntry};
use cril_core::Direction;

fn lts(which: usize) -> Lts {
    Lts::new(corpus::all()[which % 3].clone()).unwrap()
}

/// A random walk mixing directions: each choice is (prefer backward, index).
fn walk(lts: &Lts, choices: &[(bool, usize)]) -> Vec<CombinedState> {
    let mut s = lts.initial_state();
    let mut states = vec![s.clone()];
    for &(back, i) in choices {
        let dirs = if back {
            [Direction::Backward, Direction::Forward]
        } else {
            [Direction::Forward, Direction::Backward]
        };
        let Some((_, next)) = dirs
            .iter()
            .map(|&d| lts.successors(&s, d))
            .find(|succ| !succ.is_empty())
            .map(|succ| succ[i % succ.len()].clone())
        else {
            break;
        };
        let Ok(next) = next else { break };
        s = next;
        states.push(s.clone());
    }
    states
}

fn choices() -> impl Strategy<Value = Vec<(bool, usize)>> {
    prop::collection::vec((prop::bool::weighted(0.3), 0usize..8), 0..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_step_can_be_undone_at_once(which in 0usize..3, cs in choices()) {
        let lts = lts(which);
        for s in walk(&lts, &cs) {
            for (t, next) in lts.successors(&s, Direction::Forward) {
                let Ok(next) = next else { continue };
                let (u, back) = lts.step_pid(&next, &t.pid, Direction::Backward).unwrap();
                prop_assert_eq!(u.block, t.block);
                prop_assert_eq!(&back, &s);
            }
        }
    }

    #[test]
    fn dags_stay_valid(which in 0usize..3, cs in choices()) {
        let lts = lts(which);
        for s in walk(&lts, &cs) {
            prop_assert_eq!(s.dag.validate(), vec![]);
        }
    }

    #[test]
    fn dag_json_round_trip(which in 0usize..3, cs in choices()) {
        let lts = lts(which);
        let p = lts.program();
        let s = walk(&lts, &cs).pop().unwrap();
        let text = serde_json::to_string(&s.dag.view(p)).unwrap();
        let back: DagView = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.to_explicit(p).unwrap(), s.dag.explicit());
    }

    #[test]
    fn trace_json_replays(which in 0usize..3, seed in any::<u64>()) {
        let lts = lts(which);
        let run = lts.run(&lts.initial_state(), &mut RandomScheduler::new(seed), Direction::Forward, 400);
        let trace: Vec<TraceEntry> = run.trace.iter().map(|t| lts.trace_entry(t)).collect();
        let text = serde_json::to_string(&trace).unwrap();
        let entries: Vec<TraceEntry> = serde_json::from_str(&text).unwrap();
        let again = lts.replay(&lts.initial_state(), &entries).unwrap();
        prop_assert_eq!(again.final_state(), run.final_state());
        prop_assert_eq!(again.outcome, run.outcome);
    }

    #[test]
    fn same_seed_same_run(which in 0usize..3, seed in any::<u64>()) {
        let lts = lts(which);
        let a = lts.run(&lts.initial_state(), &mut RandomScheduler::new(seed), Direction::Forward, 400);
        let b = lts.run(&lts.initial_state(), &mut RandomScheduler::new(seed), Direction::Forward, 400);
        prop_assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn independent_steps_commute(which in 0usize..3, cs in choices()) {
        let lts = lts(which);
        for s in walk(&lts, &cs) {
            for dir in [Direction::Forward, Direction::Backward] {
                let ts = lts.enabled(&s, dir);
                for (i, a) in ts.iter().enumerate() {
                    for b in &ts[i + 1..] {
                        prop_assert_eq!(independent(a, b), independent(b, a));
                        if !independent(a, b) {
                            continue;
                        }
                        let (Ok(sa), Ok(sb)) = (lts.step(&s, a), lts.step(&s, b)) else { continue };
                        let da = DagDiff::between(&s.dag, &sa.dag);
                        let db = DagDiff::between(&s.dag, &sb.dag);
                        prop_assert!(da.disjoint(&db));
                        // the other step is still enabled and both orders meet
                        let ab = lts.step(&sa, b).unwrap();
                        let ba = lts.step(&sb, a).unwrap();
                        prop_assert_eq!(ab, ba);
                    }
                }
            }
        }
    }

    #[test]
    fn backward_runs_return_home(which in 0usize..3, seed in any::<u64>(), back_seed in any::<u64>()) {
        let lts = lts(which);
        let fwd = lts.run(&lts.initial_state(), &mut RandomScheduler::new(seed), Direction::Forward, 400);
        let back = lts.run(fwd.final_state(), &mut RandomScheduler::new(back_seed), Direction::Backward, 400);
        prop_assert_eq!(back.final_state(), &lts.initial_state());
    }
}
