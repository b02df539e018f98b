use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cril_cli::{load_lts, load_program, server};
use cril_core::ltsi::{Lts, Outcome, PidSchedule, RandomScheduler, RoundRobin, RunResult, Scheduler, TraceEntry};
use cril_core::session::DebugSession;
use cril_core::verify::{explore, explore_uncontrolled, report, CheckOptions, ExploreOptions, Property};
use cril_core::{check_well_formed, Direction};

// exit codes
const INPUT: u8 = 1;
const DEADLOCK: u8 = 3;
const FAULT: u8 = 4;
const PROPERTY: u8 = 5;

#[derive(Parser)]
#[command(name = "cril", version, about = "Run, reverse and check CRIL programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Forward,
    Backward,
}

impl From<Dir> for Direction {
    fn from(d: Dir) -> Direction {
        match d {
            Dir::Forward => Direction::Forward,
            Dir::Backward => Direction::Backward,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DagFormat {
    Dot,
    Json,
}

/// How to pick steps. Without any of these a seeded random scheduler runs.
#[derive(clap::Args)]
struct Schedule {
    /// Seed for the random scheduler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replay a JSON trace (a list of {pid, dir, block?, rd?, wt?}).
    #[arg(long, conflicts_with_all = ["schedule", "round_robin"])]
    replay: Option<PathBuf>,
    /// Comma-separated process ids to step in order, e.g. "ε,ε,1,2,3,1,ε,ε".
    #[arg(long, conflicts_with = "round_robin")]
    schedule: Option<String>,
    /// Cycle through processes in pid order.
    #[arg(long)]
    round_robin: bool,
}

impl Schedule {
    fn scheduler(&self) -> Result<Box<dyn Scheduler>, String> {
        Ok(match (&self.schedule, self.round_robin) {
            (Some(s), _) => Box::new(PidSchedule::parse(s)?),
            (None, true) => Box::new(RoundRobin::default()),
            (None, false) => Box::new(RandomScheduler::new(self.seed)),
        })
    }

    fn execute(&self, lts: &Lts, dir: Direction, max_steps: usize) -> Result<RunResult, String> {
        if let Some(path) = &self.replay {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let entries: Vec<TraceEntry> =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            return lts.replay(&lts.initial_state(), &entries).map_err(|e| e.to_string());
        }
        let start = match dir {
            Direction::Forward => lts.initial_state(),
            // backward runs start where a seeded forward run ends
            Direction::Backward => {
                let fwd = lts.run(
                    &lts.initial_state(),
                    &mut RandomScheduler::new(self.seed),
                    Direction::Forward,
                    max_steps,
                );
                fwd.final_state().clone()
            }
        };
        Ok(lts.run(&start, self.scheduler()?.as_mut(), dir, max_steps))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and check well-formedness.
    Check {
        file: String,
        #[arg(long)]
        json: bool,
    },
    /// Run a program and print the store after every step.
    Run {
        file: String,
        #[command(flatten)]
        schedule: Schedule,
        /// Backward runs first run forward with --seed, then reverse.
        #[arg(long, value_enum, default_value = "forward")]
        dir: Dir,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        /// Write the executed steps as a replayable JSON trace.
        #[arg(long)]
        trace_json: Option<PathBuf>,
        /// Print a JSON summary instead of the store table.
        #[arg(long)]
        json: bool,
    },
    /// Explore the state space and check the reversibility properties.
    Explore {
        file: String,
        #[arg(long, default_value_t = 1_000_000)]
        max_states: usize,
        #[arg(long)]
        max_depth: Option<usize>,
        /// Comma-separated: sp,bti,wf,cpi,ire,cc,cs,cl,roundtrip. Default: all but cl.
        #[arg(long, value_delimiter = ',')]
        check: Vec<String>,
        /// Walk length bound for cs and cl.
        #[arg(long, default_value_t = 12)]
        path_bound: usize,
        /// Ignore the annotation DAG when stepping backward.
        #[arg(long)]
        uncontrolled: bool,
        /// Write the full report here ("-" for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the annotation DAG after a forward run.
    Dag {
        file: String,
        #[command(flatten)]
        schedule: Schedule,
        #[arg(long, value_enum, default_value = "dot")]
        format: DagFormat,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
    },
    /// Serve the debug session API over HTTP.
    Serve {
        file: String,
        #[arg(long, env = "CRIL_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "CRIL_HOST", default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Default seed for POST /api/run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("cril: {msg}");
            ExitCode::from(INPUT)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<u8, String> {
    match cmd {
        Cmd::Check { file, json } => check(&file, json),
        Cmd::Run {
            file,
            schedule,
            dir,
            max_steps,
            trace_json,
            json,
        } => {
            let lts = load_lts(&file)?;
            let res = schedule.execute(&lts, dir.into(), max_steps)?;
            if let Some(path) = trace_json {
                let trace: Vec<TraceEntry> = res.trace.iter().map(|t| lts.trace_entry(t)).collect();
                let text = serde_json::to_string_pretty(&trace).unwrap();
                std::fs::write(&path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
            }
            let code = match &res.outcome {
                Outcome::Blocked => DEADLOCK,
                Outcome::AssertFailed(_) | Outcome::Fault(_) => FAULT,
                _ => 0,
            };
            let fault = match &res.outcome {
                Outcome::AssertFailed(f) | Outcome::Fault(f) => Some(f.to_string()),
                _ => None,
            };
            if json {
                let v = json!({
                    "outcome": res.outcome.name(),
                    "fault": fault,
                    "trace": res.trace.iter().map(|t| lts.transition_view(t)).collect::<Vec<_>>(),
                    "final": lts.state_view(res.final_state()),
                });
                println!("{}", serde_json::to_string_pretty(&v).unwrap());
            } else {
                print!("{}", lts.store_table(&res));
                match (&res.outcome, fault) {
                    (Outcome::Blocked, _) => println!("outcome: blocked (deadlock: no process can step)"),
                    (_, Some(f)) => println!("outcome: {} ({f})", res.outcome.name()),
                    _ => println!("outcome: {}", res.outcome.name()),
                }
            }
            Ok(code)
        }
        Cmd::Explore {
            file,
            max_states,
            max_depth,
            check,
            path_bound,
            uncontrolled,
            json,
        } => {
            let lts = load_lts(&file)?;
            let properties = if check.is_empty() {
                Property::DEFAULT.to_vec()
            } else {
                check
                    .iter()
                    .map(|c| Property::parse(c).ok_or_else(|| format!("unknown property {c:?}")))
                    .collect::<Result<_, _>>()?
            };
            let opts = ExploreOptions { max_states, max_depth };
            let g = if uncontrolled {
                explore_uncontrolled(&lts, opts)
            } else {
                explore(&lts, opts)
            };
            let rep = report(&lts, &g, &CheckOptions { properties, path_bound });
            let all_ok = rep.properties.iter().all(|p| p.ok);
            let text = serde_json::to_string_pretty(&rep).unwrap();
            match json.as_deref() {
                Some(p) if p.as_os_str() == "-" => println!("{text}"),
                Some(p) => std::fs::write(p, text + "\n").map_err(|e| format!("{}: {e}", p.display()))?,
                None => {}
            }
            if json.as_deref().is_none_or(|p| p.as_os_str() != "-") {
                println!(
                    "{} states, {} edges, {} terminal, {} events{}",
                    rep.states,
                    rep.edges,
                    rep.terminal_states,
                    rep.events,
                    if rep.truncated { " (truncated)" } else { "" }
                );
                for f in &rep.faults {
                    println!("fault: {}", f.message);
                }
                for p in &rep.properties {
                    let status = if !p.ok {
                        "FAIL"
                    } else if p.partial {
                        "ok (bounded)"
                    } else {
                        "ok"
                    };
                    println!("{:<10} {status}", p.property.to_string());
                    if let Some(c) = &p.counterexample {
                        println!("  {}", c.message);
                        for t in &c.transitions {
                            println!("    {} {} {}", t.pid, t.dir, t.block.as_deref().unwrap_or("?"));
                        }
                    }
                }
            }
            Ok(if all_ok { 0 } else { PROPERTY })
        }
        Cmd::Dag {
            file,
            schedule,
            format,
            max_steps,
        } => {
            let lts = load_lts(&file)?;
            let res = schedule.execute(&lts, Direction::Forward, max_steps)?;
            let dag = &res.final_state().dag;
            match format {
                DagFormat::Dot => print!("{}", dag.to_dot(lts.program())),
                DagFormat::Json => println!("{}", serde_json::to_string_pretty(&dag.view(lts.program())).unwrap()),
            }
            Ok(0)
        }
        Cmd::Serve { file, port, host, seed } => {
            let lts = load_lts(&file)?;
            let session = DebugSession::new(lts, seed);
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(server::serve(session, SocketAddr::new(host, port)))
                .map_err(|e| e.to_string())?;
            Ok(0)
        }
    }
}

fn check(file: &str, json: bool) -> Result<u8, String> {
    let p = load_program(file)?;
    let report = check_well_formed(&p);
    if json {
        let v = json!({
            "ok": report.ok(),
            "violations": report.violations.iter().map(|v| json!({
                "rule": v.rule,
                "blocks": v.blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>(),
                "labels": v.labels.iter().map(|l| p.label_name(*l)).collect::<Vec<_>>(),
                "message": v.message,
            })).collect::<Vec<_>>(),
            "warnings": report.warnings,
        });
        println!("{}", serde_json::to_string_pretty(&v).unwrap());
    } else {
        print!("{}", report.render());
    }
    Ok(if report.ok() { 0 } else { INPUT })
}
