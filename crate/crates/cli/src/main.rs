mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use lottery_core::avg::{solve_sys_avg, tail_verdicts, AvgMethod, AvgOptions};
use lottery_core::catalog::{example1_repro, example2_repro};
use lottery_core::cpt::{cpt_value, weight_eval};
use lottery_core::model::{identity_permutation, validate_instance};
use lottery_core::oracle::{grid_brute_force_sys, grid_error_bound};
use lottery_core::permsearch::{
    dual_inner_max, dual_minimize, duality_gap, solve_sys_exhaustive, solve_sys_localsearch, DualOptions, GapOptions,
    LocalSearchOptions, SearchOptions, SysSolution,
};
use lottery_core::reduction::decide_partition;
use lottery_core::solver_fix::{check_equilibrium, solve_sys_fix, FixMethod, SolveOptions, TracePoint};
use lottery_core::{Agent, Error, NetworkInstance, Permutation, WeightingFunction};

#[derive(Parser)]
#[command(name = "lottery", version, about = "Optimal lottery allocation for CPT agents sharing network links")]
struct Cli {
    /// Report format. Human output rounds numbers to six significant digits.
    #[arg(long, value_enum, global = true, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Human,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file and list every violation.
    Validate { instance: PathBuf },
    /// CPT value of a prospect.
    CptValue {
        /// Agent JSON, inline or `@file`.
        #[arg(long)]
        agent: String,
        /// Comma-separated `probability:outcome` pairs.
        #[arg(long)]
        prospect: String,
    },
    /// CSV table of a weighting function.
    WeightsTable {
        /// Weighting JSON, inline or `@file`.
        #[arg(long)]
        weighting: String,
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve the fixed-permutation problem.
    SolveFix {
        instance: PathBuf,
        /// Permutation profile JSON (default: identity for every player).
        #[arg(long)]
        pi: Option<String>,
        #[arg(long, value_enum, default_value_t = FixArg::InteriorPoint)]
        method: FixArg,
        /// Write the iteration trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        kkt_tol: f64,
    },
    /// Solve the full system problem over permutation profiles.
    SolveSys {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = SysArg::Exhaustive)]
        method: SysArg,
        /// Largest number of profiles the exhaustive search may visit.
        #[arg(long, default_value_t = 100_000)]
        budget: u128,
        #[arg(long, default_value_t = 2)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        /// Cross-check against the grid brute force (small instances only).
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
    },
    /// Solve the average relaxation and report equal-tail verdicts.
    SolveAvg {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = AvgArg::DualAscent)]
        method: AvgArg,
        #[arg(long, default_value_t = 1e-6)]
        tail_tol: f64,
    },
    /// Evaluate the dual at `--lambda`, or minimise it.
    Dual {
        instance: PathBuf,
        /// Link-by-outcome prices JSON.
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Primal and dual optima and their gap.
    Gap {
        instance: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        budget: u128,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build and decide the PARTITION gadget.
    Gadget {
        #[arg(long, value_delimiter = ',', required = true)]
        integers: Vec<u64>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Reproduce a worked example.
    Repro {
        #[command(subcommand)]
        example: Example,
    },
}

#[derive(Subcommand)]
enum Example {
    /// Ten players on one link: the winner lottery.
    Example1 {
        /// Where to write the `(x, U(x))` curve.
        #[arg(long, default_value = "example1_curve.csv")]
        curve: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Two players with a duality gap.
    Example2,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixArg {
    InteriorPoint,
    DualAscent,
    Tatonnement,
}

#[derive(Clone, Copy, ValueEnum)]
enum SysArg {
    Exhaustive,
    Local,
}

#[derive(Clone, Copy, ValueEnum)]
enum AvgArg {
    DualAscent,
    InteriorPoint,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) => 2,
            Error::BudgetExceeded { .. } => 3,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

/// A report plus whether the solver met its tolerances.
struct Output {
    report: Value,
    converged: bool,
}

impl Output {
    fn ok(report: Value) -> Self {
        Output { report, converged: true }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))
}

fn parse_json_arg<T: DeserializeOwned>(arg: &str, what: &str) -> Result<T, Failure> {
    let text = match arg.strip_prefix('@') {
        Some(path) => read_text(Path::new(path))?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("malformed {what}: {e}")))
}

fn load_instance(path: &Path) -> Result<NetworkInstance, Failure> {
    let raw: NetworkInstance = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Failure::invalid(format!("malformed instance {}: {e}", path.display())))?;
    Ok(validate_instance(raw)?)
}

fn parse_prospect(text: &str) -> Result<Vec<(f64, f64)>, Failure> {
    text.split(',')
        .map(|pair| {
            let (p, x) = pair
                .split_once(':')
                .ok_or_else(|| Failure::invalid(format!("prospect entry `{pair}` is not probability:outcome")))?;
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Failure::invalid(format!("bad number `{s}`: {e}")));
            Ok((num(p)?, num(x)?))
        })
        .collect()
}

fn write_csv<W: std::io::Write>(writer: W, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(writer);
    let fail = |e: csv::Error| Failure::invalid(format!("cannot write CSV: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.iter().map(|x| x.to_string())).map_err(fail)?;
    }
    w.flush().map_err(|e| Failure::invalid(format!("cannot write CSV: {e}")))
}

fn csv_to(path: Option<&Path>, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| Failure::invalid(format!("cannot create {}: {e}", p.display())))?;
            write_csv(file, header, rows)
        }
        None => write_csv(std::io::stdout().lock(), header, rows),
    }
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialise")
}

fn sys_report(inst: &NetworkInstance, sol: &SysSolution, method: &str) -> Result<Value, Failure> {
    let residuals = check_equilibrium(inst, &sol.pi, &sol.report)?;
    Ok(json!({
        "value": sol.report.value,
        "pi": sol.pi,
        "z": sol.report.scheme.z,
        "lambda": sol.report.prices.lambda,
        "residuals": residuals,
        "evaluations": sol.evaluations,
        "converged": sol.report.converged,
        "method": method,
    }))
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    match &cli.command {
        Command::Validate { instance } => {
            let raw: NetworkInstance = serde_json::from_str(&read_text(instance)?)
                .map_err(|e| Failure::invalid(format!("malformed instance {}: {e}", instance.display())))?;
            match validate_instance(raw) {
                Ok(inst) => Ok(Output::ok(json!({
                    "valid": true,
                    "players": inst.num_players(),
                    "links": inst.num_links(),
                    "k": inst.k,
                }))),
                Err(Error::InvalidInstance(violations)) => {
                    let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                    emit(cli.format, &json!({ "valid": false, "violations": list }));
                    Err(Failure::invalid(format!("{} violation(s)", list.len())))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::CptValue { agent, prospect } => {
            let agent: Agent = parse_json_arg(agent, "agent")?;
            let prospect = parse_prospect(prospect)?;
            Ok(Output::ok(json!({ "value": cpt_value(&agent, &prospect)? })))
        }
        Command::WeightsTable { weighting, points, output } => {
            let wf: WeightingFunction = parse_json_arg(weighting, "weighting")?;
            if *points < 2 {
                return Err(Failure::invalid("weights table needs at least 2 points"));
            }
            let rows: Vec<Vec<f64>> = (0..*points)
                .map(|t| {
                    let p = t as f64 / (*points - 1) as f64;
                    weight_eval(&wf, p).map(|w| vec![p, w])
                })
                .collect::<Result<_, _>>()?;
            csv_to(output.as_deref(), &["p", "w"], rows.into_iter())?;
            Ok(Output { report: Value::Null, converged: true })
        }
        Command::SolveFix { instance, pi, method, trace, kkt_tol } => {
            let inst = load_instance(instance)?;
            let pi: Vec<Permutation> = match pi {
                Some(text) => parse_json_arg(text, "permutation profile")?,
                None => vec![identity_permutation(inst.k); inst.num_players()],
            };
            let method = match method {
                FixArg::InteriorPoint => FixMethod::InteriorPoint,
                FixArg::DualAscent => FixMethod::DualAscent,
                FixArg::Tatonnement => FixMethod::Tatonnement,
            };
            let opts = SolveOptions { kkt_tol: *kkt_tol, method, trace: trace.is_some(), ..Default::default() };
            let r = solve_sys_fix(&inst, &pi, &opts)?;
            if let Some(path) = trace {
                let rows = r.trajectory.iter().map(|t: &TracePoint| vec![t.iteration as f64, t.value, t.max_violation]);
                csv_to(Some(path), &["iteration", "value", "max_violation"], rows)?;
            }
            let residuals = check_equilibrium(&inst, &pi, &r)?;
            Ok(Output {
                converged: r.converged,
                report: json!({
                    "value": r.value,
                    "z": r.scheme.z,
                    "pi": pi,
                    "lambda": r.prices.lambda,
                    "residuals": residuals,
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "method": r.method,
                }),
            })
        }
        Command::SolveSys { instance, method, budget, restarts, seed, workers, oracle, grid_step } => {
            let inst = load_instance(instance)?;
            let (sol, name) = match method {
                SysArg::Exhaustive => {
                    let opts = SearchOptions { budget: *budget, workers: *workers, ..Default::default() };
                    (solve_sys_exhaustive(&inst, &opts)?, "exhaustive")
                }
                SysArg::Local => {
                    let opts = LocalSearchOptions { restarts: *restarts, seed: *seed, workers: *workers, ..Default::default() };
                    (solve_sys_localsearch(&inst, &opts)?, "local")
                }
            };
            let mut report = sys_report(&inst, &sol, name)?;
            if *oracle {
                let (value, _) = grid_brute_force_sys(&inst, *grid_step, None)?;
                let bound = grid_error_bound(&inst, *grid_step);
                let consistent = value <= sol.report.value + 1e-6 && sol.report.value - value <= bound + 1e-6;
                report["oracle"] = json!({ "value": value, "bound": bound, "grid_step": grid_step, "consistent": consistent });
            }
            Ok(Output { converged: sol.report.converged, report })
        }
        Command::SolveAvg { instance, method, tail_tol } => {
            let inst = load_instance(instance)?;
            let method = match method {
                AvgArg::DualAscent => AvgMethod::DualAscent,
                AvgArg::InteriorPoint => AvgMethod::InteriorPoint,
            };
            let r = solve_sys_avg(&inst, &AvgOptions { method, ..Default::default() })?;
            let mut report = to_value(&r);
            report["tail"] = to_value(&tail_verdicts(&inst, &r, *tail_tol));
            Ok(Output { converged: r.converged, report })
        }
        Command::Dual { instance, lambda, workers } => {
            let inst = load_instance(instance)?;
            match lambda {
                Some(text) => {
                    let lambda: Vec<Vec<f64>> = parse_json_arg(text, "lambda")?;
                    Ok(Output::ok(to_value(&dual_inner_max(&inst, &lambda)?)))
                }
                None => {
                    let opts = DualOptions { workers: *workers, ..Default::default() };
                    Ok(Output::ok(to_value(&dual_minimize(&inst, &opts)?)))
                }
            }
        }
        Command::Gap { instance, budget, workers } => {
            let inst = load_instance(instance)?;
            let mut opts = GapOptions::default();
            opts.search.budget = *budget;
            opts.search.workers = *workers;
            opts.dual.workers = *workers;
            Ok(Output::ok(to_value(&duality_gap(&inst, &opts)?)))
        }
        Command::Gadget { integers, epsilon } => {
            Ok(Output::ok(to_value(&decide_partition(integers, *epsilon, &SearchOptions::default())?)))
        }
        Command::Repro { example: Example::Example1 { curve, samples } } => {
            let r = example1_repro(*samples)?;
            csv_to(Some(curve), &["x", "U"], r.curve.iter().map(|&(x, u)| vec![x, u]))?;
            Ok(Output::ok(json!({ "x_star": r.x_star, "value": r.value, "deterministic": r.deterministic })))
        }
        Command::Repro { example: Example::Example2 } => Ok(Output::ok(to_value(&example2_repro(&GapOptions::default())?))),
    }
}

fn emit(format: Format, report: &Value) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report).expect("reports serialise")),
        Format::Human => print!("{}", render::human(report)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if !out.report.is_null() {
                emit(cli.format, &out.report);
            }
            if out.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: solver did not reach its tolerances");
                ExitCode::from(2)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
