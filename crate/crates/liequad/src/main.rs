//! Command-line front end: structure analysis, quadrature integration,
//! verification against the reference oracle, and corpus runs.
//!
//! Exit codes: 0 pass, 1 comparison failure, 2 structural error
//! (not solvable / not closed / not transitive), 3 i/o or schema error.

use clap::{Args, Parser, Subcommand};
use liequad::harness::{
    analyze_case, load_case, reference_for_case, run_corpus, verify_case, CorpusCase,
    HarnessError,
};
use liequad::integrate::{
    audit, integrate_quadratures_traced, uniform_grid, FlowOptions, IntegrateError, Trace,
    Trajectory,
};
use liequad::lie::{abelian_ideal_le2, structure_constants};
use liequad::rectify::{build_chart, ChartOptions, Realization, WorkBox};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "liequad",
    about = "Flows of vector fields in solvable transitive Lie algebras, by quadratures",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structure report: series dimensions, solvability, the chosen Abelian
    /// ideal and triangularity.
    Analyze {
        case: PathBuf,
        /// Also build the adapted chart at the first initial state and dump
        /// the per-coordinate potential records.
        #[arg(long)]
        chart: bool,
        #[arg(long)]
        json: bool,
    },
    /// Integrate the case's dynamical field and emit the trajectory.
    Integrate {
        case: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Write the trajectory as CSV (t,x1,...,xn); a trace sidecar is
        /// written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Integrate in quadrature mode and compare against the reference
    /// oracle (and any closed form the case declares).
    Verify {
        case: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run every case file in a directory and aggregate.
    Corpus {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Dynamical field name (defaults to the case's gamma).
    #[arg(long)]
    gamma: Option<String>,
    /// Initial state as comma-separated values (defaults to the case's
    /// first initial state).
    #[arg(long, value_parser = parse_state)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// quadrature | reference
    #[arg(long, default_value = "quadrature")]
    mode: String,
    /// Per-quadrature tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[allow(clippy::unnecessary_wraps)]
fn parse_state(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{}", e)))
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &HarnessError) -> ExitCode {
    match e {
        HarnessError::Io(_) | HarnessError::Json(_) | HarnessError::Schema { .. } => {
            ExitCode::from(3)
        }
        HarnessError::Integrate(inner) => match inner {
            IntegrateError::NotSolvable
            | IntegrateError::NotTransitive { .. }
            | IntegrateError::Lie(_)
            | IntegrateError::Rectify { .. } => ExitCode::from(2),
            _ => ExitCode::from(1),
        },
        HarnessError::Lie(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Analyze { case, chart, json } => cmd_analyze(&case, chart, json),
        Command::Integrate {
            case,
            run,
            out,
            json,
        } => cmd_integrate(&case, run, out, json),
        Command::Verify { case, json } => cmd_verify(&case, json),
        Command::Corpus { dir, json } => cmd_corpus(&dir, json),
    }
}

fn cmd_analyze(path: &PathBuf, with_chart: bool, json: bool) -> Result<ExitCode, HarnessError> {
    let case = load_case(path)?;
    let report = analyze_case(&case)?;
    let chart_dump = if with_chart {
        Some(chart_records(&case)?)
    } else {
        None
    };
    if json {
        let mut value = serde_json::to_value(&report).expect("report serializes");
        if let Some(dump) = &chart_dump {
            value["chart"] = serde_json::to_value(dump).expect("chart dump serializes");
        }
        println!("{}", serde_json::to_string_pretty(&value).unwrap());
    } else {
        println!("case `{}`: algebra of dimension {}", report.name, report.dim);
        println!("  derived series dims: {:?}", report.derived_dims);
        println!("  central series dims: {:?}", report.central_dims);
        if !report.a_series_dims.is_empty() {
            println!("  ideal series dims:   {:?}", report.a_series_dims);
        }
        match report.solvable_index {
            Some(m) => println!("  solvable: yes (m = {})", m),
            None => println!("  solvable: no"),
        }
        println!("  nilpotent: {}", report.nilpotent);
        match &report.triangular_permutation {
            Some(p) => println!("  triangular basis order: {:?}", p),
            None => println!("  triangular: no"),
        }
        if let Some(rows) = &report.abelian_ideal {
            println!("  abelian ideal rows: {:?}", rows);
        }
        for c in &report.checks {
            println!(
                "  [{}] expectation `{}`: {}",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        if let Some(dump) = &chart_dump {
            println!("  chart:");
            for (i, (level, strategy, desc)) in dump.iter().enumerate() {
                println!("    Q{} (level {}, {}): {}", i + 1, level, strategy, desc);
            }
        }
    }
    if report.all_expectations_met {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn chart_records(case: &CorpusCase) -> Result<Vec<(usize, String, String)>, HarnessError> {
    let l = case.presentation()?;
    let constants = structure_constants(&l)?;
    let ideal = abelian_ideal_le2(&constants)?;
    let real = Realization::from_presentation(&l, constants);
    let p = case.initial_states[0].clone();
    let trace = Trace::new();
    let chart = build_chart(
        &real,
        &ideal.subspace,
        &p,
        &WorkBox::new(p.clone(), 2.0),
        &trace,
        &ChartOptions::default(),
    )
    .map_err(|e| {
        HarnessError::Integrate(IntegrateError::Rectify {
            level: 0,
            source: e,
        })
    })?;
    Ok(chart
        .slot_dump()
        .into_iter()
        .map(|(level, strategy, desc)| (level, strategy.to_string(), desc))
        .collect())
}

fn cmd_integrate(
    path: &PathBuf,
    run: RunArgs,
    out: Option<PathBuf>,
    json: bool,
) -> Result<ExitCode, HarnessError> {
    let case = load_case(path)?;
    let gamma = run.gamma.clone().unwrap_or_else(|| case.gamma.clone());
    let x0 = run
        .x0
        .clone()
        .unwrap_or_else(|| case.initial_states[0].clone());
    let t0 = run.t0.unwrap_or(case.t0);
    let t1 = run.t1.unwrap_or(case.t1);
    let steps = run.steps.unwrap_or(case.steps);
    if !(t1 > t0) || steps == 0 {
        return Err(HarnessError::Schema {
            field: "t0/t1/steps".into(),
            msg: "need t1 > t0 and steps >= 1".into(),
        });
    }
    let grid = uniform_grid(t0, t1, steps);
    let l = case.presentation()?;
    let trace = Trace::new();
    let traj: Trajectory = match run.mode.as_str() {
        "quadrature" => {
            let opts = FlowOptions {
                tol: run.tol,
                ..FlowOptions::default()
            };
            integrate_quadratures_traced(&l, &gamma, &x0, &grid, &opts, &trace)?
        }
        "reference" => {
            let mut case_for_ref = case.clone();
            case_for_ref.gamma = gamma.clone();
            reference_for_case(&l, &case_for_ref, &x0, &grid, run.tol)?
        }
        other => {
            return Err(HarnessError::Schema {
                field: "mode".into(),
                msg: format!("unknown mode `{}`", other),
            })
        }
    };
    let audit_report = audit(&traj.trace, traj.mode);
    if let Some(out_path) = &out {
        let mut csv = String::from("t");
        for name in &case.coordinates {
            csv.push(',');
            csv.push_str(name);
        }
        csv.push('\n');
        for (t, s) in traj.times.iter().zip(&traj.states) {
            csv.push_str(&format!("{:.12e}", t));
            for x in s {
                csv.push_str(&format!(",{:.12e}", x));
            }
            csv.push('\n');
        }
        std::fs::write(out_path, csv)
            .map_err(|e| HarnessError::Io(format!("{}: {}", out_path.display(), e)))?;
        let sidecar = out_path.with_extension("trace.json");
        std::fs::write(
            &sidecar,
            serde_json::to_string_pretty(&audit_report).unwrap(),
        )
        .map_err(|e| HarnessError::Io(format!("{}: {}", sidecar.display(), e)))?;
    }
    if json {
        let value = serde_json::json!({
            "case": case.name,
            "gamma": gamma,
            "mode": traj.mode,
            "times": traj.times,
            "states": traj.states,
            "trace": traj.trace,
            "audit": audit_report,
        });
        println!("{}", serde_json::to_string_pretty(&value).unwrap());
    } else {
        println!(
            "integrated `{}` for gamma = {} over [{}, {}] in {} mode",
            case.name, gamma, t0, t1, traj.mode
        );
        let last = traj.states.last().unwrap();
        println!("  final state: {:?}", last);
        println!(
            "  trace: quad1d={} newton={} matexp={} solves={} corrector={} ode_steps={}",
            traj.trace.quad1d_calls,
            traj.trace.newton_calls,
            traj.trace.matexp_calls,
            traj.trace.linear_solves,
            traj.trace.leaf_corrector_steps,
            traj.trace.ode_steps
        );
        println!("  audit: {}", audit_report.message);
    }
    if audit_report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_verify(path: &PathBuf, json: bool) -> Result<ExitCode, HarnessError> {
    let case = load_case(path)?;
    let v = verify_case(&case, &FlowOptions::default())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&v).unwrap());
    } else {
        println!("case `{}`:", v.name);
        for c in &v.structure.checks {
            println!(
                "  [{}] structure `{}`: {}",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        for s in &v.states {
            match (&s.oracle, &s.structural_error) {
                (Some(rep), _) => {
                    println!(
                        "  [{}] from {:?}: max |dev| = {:.3e} over {} points (tol {:.1e}){}",
                        if s.pass { "ok" } else { "FAIL" },
                        s.initial_state,
                        rep.max_abs,
                        rep.compared_points,
                        rep.tolerance,
                        match s.closed_form_max_abs {
                            Some(m) => format!(", closed form dev {:.3e}", m),
                            None => String::new(),
                        }
                    );
                }
                (None, Some(err)) => {
                    println!(
                        "  [{}] from {:?}: structural: {}",
                        if s.pass { "ok" } else { "FAIL" },
                        s.initial_state,
                        err
                    );
                }
                _ => {}
            }
        }
        println!(
            "  audit: ode_steps = {} in quadrature mode",
            v.quadrature_trace.ode_steps
        );
        println!("  overall: {}", if v.pass { "PASS" } else { "FAIL" });
    }
    if v.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        // distinguish structural-only failure for the exit code
        let structural = v
            .states
            .iter()
            .any(|s| s.structural_error.is_some() && !s.pass);
        Ok(if structural {
            ExitCode::from(2)
        } else {
            ExitCode::from(1)
        })
    }
}

fn cmd_corpus(dir: &PathBuf, json: bool) -> Result<ExitCode, HarnessError> {
    let report = run_corpus(dir, &FlowOptions::default())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        for c in &report.cases {
            match (&c.verification, &c.error) {
                (Some(v), _) => println!("  [{}] {}", if c.pass { "ok" } else { "FAIL" }, v.name),
                (None, Some(e)) => println!("  [FAIL] {}: {}", c.file, e),
                _ => {}
            }
        }
        println!(
            "corpus: {}/{} cases passed; audit {}; aggregated ode_steps = {}",
            report.passed,
            report.total,
            if report.audit_pass { "ok" } else { "FAIL" },
            report.aggregated_trace.ode_steps
        );
    }
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
