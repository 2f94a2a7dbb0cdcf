//! Batch driver: run constructions from a config file, audit previous
//! runs, dump tree levels, and query the lattice term algebra.
//!
//! Exit codes: 0 success, 1 audit/verification failure, 2 usage or config
//! error, 3 internal error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use medvedev_core::construction::{self, audit_log, ConstructionState, Event, RunConfig, RunError};
use medvedev_core::fdl;
use medvedev_core::trees::{sep_spec, EnumSchedule, TreeSpec};

#[derive(Parser)]
#[command(name = "medvedev")]
#[command(
    about = "Deterministic workbench for priority constructions on trees over binary strings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a construction to its budget and write events.jsonl,
    /// histories.jsonl and final_state.json
    Run {
        /// Run config (JSON)
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a previous run's event log through the audit checks
    Verify {
        /// Directory holding events.jsonl and final_state.json
        run_dir: PathBuf,
    },
    /// Print one level of a configured class approximation
    Dump {
        /// Run config (JSON)
        config: PathBuf,
        /// Class name: U, V, or S0, S1, ...
        #[arg(long)]
        class: String,
        /// Approximation stage
        #[arg(long)]
        stage: u32,
        /// Level to print (at most the stage)
        #[arg(long)]
        depth: u32,
    },
    /// Decide order questions in the free distributive lattice
    Fdl {
        /// Two s-expression terms, e.g. "(meet v0 v1)" "v0"
        #[arg(long, num_args = 2, value_names = ["LHS", "RHS"])]
        leq: Option<Vec<String>>,
        /// Two comma-separated index sets, e.g. 1,2 3
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        criterion: Option<Vec<String>>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out } => run_cmd(&config, &out),
        Command::Verify { run_dir } => verify_cmd(&run_dir),
        Command::Dump { config, class, stage, depth } => dump_cmd(&config, &class, stage, depth),
        Command::Fdl { leq, criterion } => fdl_cmd(leq, criterion),
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(2, format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| fail(2, format!("config parse error: {e}")))?;
    cfg.validate().map_err(|e| fail(2, e.to_string()))?;
    Ok(cfg)
}

fn run_cmd(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let result = construction::run(cfg).map_err(|e| match e {
        RunError::Config(c) => fail(2, c.to_string()),
        RunError::Step(s) => fail(3, format!("scheduler failure: {s}")),
    })?;
    fs::create_dir_all(out)
        .map_err(|e| fail(3, format!("cannot create {}: {e}", out.display())))?;
    let write = |name: &str, contents: String| {
        fs::write(out.join(name), contents)
            .map_err(|e| fail(3, format!("cannot write {name}: {e}")))
    };
    write("events.jsonl", result.events_jsonl())?;
    write("histories.jsonl", result.histories_jsonl())?;
    write("final_state.json", result.final_state_json())?;

    let report = result.audit();
    println!(
        "ran {} stages, {} events, wrote {}",
        result.final_stage(),
        result.state.log.len(),
        out.display()
    );
    if !report.all_passed() {
        eprintln!("{report}");
        return Err(fail(3, "internal audit failure"));
    }
    Ok(())
}

fn verify_cmd(run_dir: &Path) -> Result<(), Failure> {
    let events_path = run_dir.join("events.jsonl");
    let state_path = run_dir.join("final_state.json");
    let events_text = fs::read_to_string(&events_path)
        .map_err(|e| fail(2, format!("cannot read {}: {e}", events_path.display())))?;
    let state_text = fs::read_to_string(&state_path)
        .map_err(|e| fail(2, format!("cannot read {}: {e}", state_path.display())))?;
    let state: ConstructionState = serde_json::from_str(&state_text)
        .map_err(|e| fail(2, format!("final_state.json parse error: {e}")))?;
    let mut events = Vec::new();
    for (lineno, line) in events_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev: Event = serde_json::from_str(line)
            .map_err(|e| fail(2, format!("events.jsonl line {}: {e}", lineno + 1)))?;
        events.push(ev);
    }
    let report = audit_log(&state.config.roster, &events);
    print!("{report}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(fail(1, "audit violations found"))
    }
}

fn dump_cmd(config: &Path, class: &str, stage: u32, depth: u32) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let spec: TreeSpec = match class {
        "U" => cfg.classes.u.clone(),
        "V" => cfg.classes.v.clone(),
        other => match other.strip_prefix('S').and_then(|s| s.parse::<u32>().ok()) {
            Some(i) if i < cfg.generators => {
                // schedules are empty before a run; this is the stage-0 picture
                sep_spec(EnumSchedule::new(), EnumSchedule::new()).expect("empty sides")
            }
            _ => {
                return Err(fail(
                    2,
                    format!("unknown class {other:?}: expected U, V, or S<i> with i < generators"),
                ))
            }
        },
    };
    let level = spec.level_set(stage, depth).map_err(|e| fail(2, e.to_string()))?;
    for node in level {
        println!("{node}");
    }
    Ok(())
}

fn fdl_cmd(leq: Option<Vec<String>>, criterion: Option<Vec<String>>) -> Result<(), Failure> {
    match (leq, criterion) {
        (Some(terms), None) => {
            let lhs = fdl::parse_term(&terms[0]).map_err(|e| fail(2, e.to_string()))?;
            let rhs = fdl::parse_term(&terms[1]).map_err(|e| fail(2, e.to_string()))?;
            println!("{}", fdl::leq(&lhs, &rhs));
            println!("lhs normal form: {}", fdl::normalize(&lhs));
            println!("rhs normal form: {}", fdl::normalize(&rhs));
            Ok(())
        }
        (None, Some(sets)) => {
            let i_set = parse_index_set(&sets[0])?;
            let j_set = parse_index_set(&sets[1])?;
            println!("{}", fdl::generator_criterion(&i_set, &j_set));
            let join_i = fdl::LatticeTerm::join(
                i_set.iter().map(|i| fdl::LatticeTerm::gen(format!("g{i}"))).collect(),
            );
            let meet_j = fdl::LatticeTerm::meet(
                j_set.iter().map(|j| fdl::LatticeTerm::gen(format!("g{j}"))).collect(),
            );
            println!("join-side normal form: {}", fdl::normalize(&join_i));
            println!("meet-side normal form: {}", fdl::normalize(&meet_j));
            Ok(())
        }
        _ => Err(fail(2, "exactly one of --leq or --criterion is required")),
    }
}

fn parse_index_set(text: &str) -> Result<BTreeSet<u32>, Failure> {
    let set: Result<BTreeSet<u32>, _> =
        text.split(',').map(|part| part.trim().parse::<u32>()).collect();
    let set = set.map_err(|e| fail(2, format!("bad index set {text:?}: {e}")))?;
    if set.is_empty() {
        return Err(fail(2, format!("index set {text:?} is empty")));
    }
    Ok(set)
}
