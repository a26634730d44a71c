//! Command-line commands.
//!
//! Exit codes: 0 success, 1 infeasible or invalid instance, 2 input error,
//! 3 solver failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modcap_core::analysis::{self, brute_force_partition, evaluate_installs, merge_oracle};
use modcap_core::formulation::{build_stochastic_with, extract_plan, fix_installs, BuildOptions};
use modcap_core::instance::Severity;
use modcap_core::milp::{solve_milp_with, MilpSettings, SolveStatus};
use modcap_core::pareto::{self, ParetoError, ParetoFrontier, ParetoPoint, SweepDirection};
use modcap_core::{Instance, InvestmentPlan, ObjectiveMode, TargetSense};

use crate::clock::WallClock;
use crate::parallel::map_ordered;
use crate::report::{self, Metrics, PlanFile};
use crate::schema::Loaded;
use crate::svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "modcap", version, about = "Multi-stage stochastic capacity expansion planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance file and print its diagnostics.
    Validate {
        instance: PathBuf,
    },
    /// Solve one model and write plan, metrics and summary.
    Solve(SolveArgs),
    /// Sweep epsilon and write frontier CSVs, plans and an SVG chart.
    Pareto(ParetoArgs),
    /// Exhaustive enumeration of installation plans (small instances only).
    Oracle(OracleArgs),
    /// Smallest horizon with a positive optimal expected NPV.
    Horizon(HorizonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Maximize expected NPV.
    Expected,
    /// Minimize risk with expected NPV bounded by epsilon.
    Risk,
    /// Maximize expected NPV with risk at most epsilon.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sense {
    /// Expected NPV equal to epsilon (within a relative band of 1e-6).
    Equal,
    /// Expected NPV at least epsilon.
    AtLeast,
}

impl From<Sense> for TargetSense {
    fn from(s: Sense) -> Self {
        match s {
            Sense::Equal => TargetSense::Equal,
            Sense::AtLeast => TargetSense::AtLeast,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Instance JSON file.
    pub instance: PathBuf,
    /// Relative MIP gap at which the search stops.
    #[arg(long, default_value_t = modcap_core::milp::DEFAULT_GAP)]
    pub gap: f64,
    /// Seconds per solve; for `horizon` the limit covers the whole search.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Worker threads for sweeps and enumeration.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Ignore the interest rate (undiscounted NPV).
    #[arg(long)]
    pub no_discount: bool,
    /// Treat storage and waste as continuous.
    #[arg(long)]
    pub relax_sw: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = Mode::Expected)]
    pub mode: Mode,
    /// Target expected NPV (risk mode) or risk cap (capped mode).
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = Sense::Equal)]
    pub target_sense: Sense,
    /// Catalog case label from the instance file.
    #[arg(long)]
    pub case: Option<String>,
    /// Write the model in fixed MPS format to this file.
    #[arg(long)]
    pub export_mps: Option<PathBuf>,
    /// Fix installations to those of a plan JSON and optimize operation only.
    #[arg(long)]
    pub fix_plan: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ParetoArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = Mode::Risk)]
    pub mode: Mode,
    /// A single epsilon.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "eps_grid")]
    pub eps: Option<f64>,
    /// Comma-separated ascending epsilon values.
    #[arg(long, allow_hyphen_values = true)]
    pub eps_grid: Option<String>,
    /// Points of the default grid between the two frontier ends.
    #[arg(long, default_value_t = pareto::DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    #[arg(long, value_enum, default_value_t = Sense::Equal)]
    pub target_sense: Sense,
    /// Catalog cases to sweep (repeatable); all cases of the file by default.
    #[arg(long)]
    pub case: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub case: Option<String>,
    /// Also solve the MILP and compare objectives.
    #[arg(long)]
    pub compare: bool,
}

#[derive(Debug, Clone, Args)]
pub struct HorizonArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub case: Option<String>,
    /// Longest horizon tried; the instance's horizon by default.
    #[arg(long)]
    pub max_stages: Option<usize>,
}

/// A command that stopped early with an exit code.
#[derive(Debug)]
pub struct Fail {
    pub code: i32,
    pub message: String,
}

impl Fail {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Fail { code, message: message.into() }
    }
}

type CmdResult = Result<i32, Fail>;

fn input<E: std::fmt::Display>(e: E) -> Fail {
    Fail::new(EXIT_INPUT, e.to_string())
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Validate { instance } => cmd_validate(instance),
        Command::Solve(a) => cmd_solve(a),
        Command::Pareto(a) => cmd_pareto(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Horizon(a) => cmd_horizon(a),
    }
}

pub fn cmd_validate(path: &Path) -> CmdResult {
    let loaded = Loaded::read(path).map_err(input)?;
    let diags = loaded.diagnostics();
    for d in &diags {
        let level = if d.severity == Severity::Error { "error" } else { "warning" };
        println!("{level}: {}", d.message);
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Ok(EXIT_INFEASIBLE);
    }
    println!("{}: ok ({} warnings)", loaded.name, diags.len());
    Ok(EXIT_OK)
}

/// Reads and validates an instance and applies case and discount options.
fn prepare(common: &Common, case: Option<&str>) -> Result<(Loaded, Instance), Fail> {
    let loaded = Loaded::read(&common.instance).map_err(input)?;
    let errors: Vec<String> =
        loaded.diagnostics().into_iter().filter(|d| d.severity == Severity::Error).map(|d| d.message).collect();
    if !errors.is_empty() {
        return Err(Fail::new(EXIT_INFEASIBLE, format!("invalid instance:\n  {}", errors.join("\n  "))));
    }
    let mut inst = loaded.instance_for(case).map_err(input)?;
    if common.no_discount {
        inst = inst.undiscounted();
    }
    Ok((loaded, inst))
}

fn settings(common: &Common) -> MilpSettings {
    MilpSettings { gap_tol: common.gap, time_limit: common.time_limit, ..MilpSettings::default() }
}

fn options(common: &Common) -> BuildOptions {
    BuildOptions { relax_storage: common.relax_sw }
}

fn objective_mode(mode: Mode, eps: Option<f64>, sense: Sense) -> Result<ObjectiveMode, Fail> {
    let need = || eps.ok_or_else(|| Fail::new(EXIT_INPUT, "this mode needs --eps"));
    Ok(match mode {
        Mode::Expected => ObjectiveMode::MaximizeExpected,
        Mode::Risk => ObjectiveMode::MinimizeRisk { target: need()?, sense: sense.into() },
        Mode::Capped => ObjectiveMode::MaximizeExpectedRiskCapped { risk_cap: need()? },
    })
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Expected => "maximize-expected",
        Mode::Risk => "minimize-risk",
        Mode::Capped => "maximize-expected-risk-capped",
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Fail> {
    fs::write(path, contents).map_err(|e| Fail::new(EXIT_INPUT, format!("cannot write {}: {e}", path.display())))
}

fn out_dir(common: &Common) -> Result<&Path, Fail> {
    fs::create_dir_all(&common.out).map_err(|e| Fail::new(EXIT_INPUT, format!("cannot create {}: {e}", common.out.display())))?;
    Ok(&common.out)
}

fn write_plan_outputs(dir: &Path, name: &str, case: Option<&str>, inst: &Instance, plan: &InvestmentPlan) -> Result<(), Fail> {
    write(&dir.join("plan.json"), &PlanFile::from_plan(name, case, inst, plan).to_json())?;
    let mut buf = Vec::new();
    report::write_outcomes(&mut buf, inst, plan).map_err(input)?;
    write(&dir.join("outcomes.csv"), &String::from_utf8(buf).expect("CSV is UTF-8"))
}

pub fn cmd_solve(a: &SolveArgs) -> CmdResult {
    let started = Instant::now();
    let (loaded, inst) = prepare(&a.common, a.case.as_deref())?;
    let mode = objective_mode(a.mode, a.eps, a.target_sense)?;
    let opts = options(&a.common);
    let (mut model, atlas) = build_stochastic_with(&inst, mode, &opts).map_err(|e| Fail::new(EXIT_INFEASIBLE, e.to_string()))?;
    let fixed = match &a.fix_plan {
        None => None,
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Fail::new(EXIT_INPUT, format!("cannot read {}: {e}", p.display())))?;
            let units = PlanFile::from_json(&text).map_err(input)?.units(&inst).map_err(input)?;
            fix_installs(&mut model, &atlas, &units).map_err(|e| Fail::new(EXIT_INFEASIBLE, e.to_string()))?;
            Some(units)
        }
    };
    let dir = out_dir(&a.common)?;
    if let Some(mps) = &a.export_mps {
        let mut buf = Vec::new();
        crate::mps::write_mps(&mut buf, &model, &loaded.name, true).map_err(input)?;
        write(mps, &String::from_utf8(buf).expect("MPS is ASCII"))?;
    }
    let set = settings(&a.common);
    let clock = WallClock::start();
    let (sol, plan) = match (&fixed, a.mode) {
        (Some(units), Mode::Expected) => {
            let solved = solve_milp_with(&model, &set, &clock, None).map_err(|e| Fail::new(EXIT_SOLVER, e.to_string()))?;
            let plan = if solved.has_incumbent() {
                let eval = evaluate_installs(&inst, units, &opts, &set, &clock).map_err(|e| Fail::new(EXIT_SOLVER, e.to_string()))?;
                Some(eval.plan)
            } else {
                None
            };
            (solved, plan)
        }
        _ => {
            let solved = solve_milp_with(&model, &set, &clock, None).map_err(|e| Fail::new(EXIT_SOLVER, e.to_string()))?;
            let plan = if solved.has_incumbent() {
                Some(extract_plan(&inst, &atlas, &solved).map_err(|e| Fail::new(EXIT_SOLVER, e.to_string()))?)
            } else {
                None
            };
            (solved, plan)
        }
    };
    let metrics = Metrics {
        instance: loaded.name.clone(),
        case: a.case.clone(),
        mode: mode_name(a.mode).into(),
        epsilon: if a.mode == Mode::Expected { None } else { a.eps },
        discounted: inst.interest_rate > 0.0,
        relaxed_storage: a.common.relax_sw,
        fixed_plan: fixed.is_some(),
        status: sol.status.as_str().into(),
        expected: plan.as_ref().map_or(f64::NAN, |p| p.expected),
        risk: plan.as_ref().map_or(f64::NAN, |p| p.risk),
        objective: sol.objective,
        bound: sol.bound,
        gap: sol.relative_gap,
        runtime: started.elapsed().as_secs_f64(),
        node_count: sol.nodes,
        simplex_iterations: sol.simplex_iterations,
        variables: model.num_vars(),
        integer_variables: model.num_integer(),
        constraints: model.num_constraints(),
    };
    write(&dir.join("metrics.json"), &metrics.to_json())?;
    let text = report::summary(&metrics, &inst, plan.as_ref());
    write(&dir.join("summary.txt"), &text)?;
    print!("{text}");
    match &plan {
        Some(p) => write_plan_outputs(dir, &loaded.name, a.case.as_deref(), &inst, p)?,
        None => {
            return Ok(match sol.status {
                SolveStatus::Infeasible => EXIT_INFEASIBLE,
                _ => EXIT_SOLVER,
            })
        }
    }
    Ok(EXIT_OK)
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Fail> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Fail::new(EXIT_INPUT, format!("bad grid value `{s}`"))))
        .collect()
}

/// Sweep results of one case.
pub struct CaseSweep {
    pub label: String,
    pub frontier: Result<ParetoFrontier, ParetoError>,
    pub raw: Vec<ParetoPoint>,
}

pub fn cmd_pareto(a: &ParetoArgs) -> CmdResult {
    let direction = match a.mode {
        Mode::Risk => SweepDirection::MinimizeRisk(a.target_sense.into()),
        Mode::Capped => SweepDirection::MaximizeExpected,
        Mode::Expected => return Err(Fail::new(EXIT_INPUT, "pareto needs --mode risk or --mode capped")),
    };
    let loaded = Loaded::read(&a.common.instance).map_err(input)?;
    let labels: Vec<Option<String>> = if !a.case.is_empty() {
        a.case.iter().cloned().map(Some).collect()
    } else if !loaded.cases.is_empty() {
        loaded.cases.iter().map(|c| Some(c.label.clone())).collect()
    } else {
        vec![None]
    };
    let mut instances = Vec::new();
    for l in &labels {
        instances.push(prepare(&a.common, l.as_deref())?.1);
    }
    let opts = options(&a.common);
    let set = settings(&a.common);
    let grid = match (&a.eps, &a.eps_grid) {
        (Some(e), _) => vec![*e],
        (None, Some(g)) => parse_grid(g)?,
        (None, None) => {
            let ends = map_ordered(&instances, a.common.threads, |inst| {
                pareto::frontier_ends(inst, &opts, &set, &WallClock::start())
            });
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for e in ends.iter().flatten() {
                let g = pareto::default_grid(e, direction, 2);
                lo = lo.min(g[0]);
                hi = hi.max(g[1]);
            }
            if lo > hi {
                return Err(Fail::new(EXIT_INFEASIBLE, "no case admits a feasible plan"));
            }
            pareto::uniform_grid(lo, hi, a.grid_points.max(1))
        }
    };
    pareto::check_grid(&grid).map_err(input)?;

    let jobs: Vec<(usize, f64)> = (0..instances.len()).flat_map(|c| grid.iter().map(move |&e| (c, e))).collect();
    let solved = map_ordered(&jobs, a.common.threads, |&(c, eps)| {
        pareto::solve_point(&instances[c], direction, eps, &opts, &set, &WallClock::start())
    });
    let mut per_case: Vec<Vec<ParetoPoint>> = vec![Vec::new(); instances.len()];
    for (&(c, _), p) in jobs.iter().zip(solved) {
        per_case[c].push(p.map_err(|e| Fail::new(EXIT_INFEASIBLE, e.to_string()))?);
    }
    let sweeps: Vec<CaseSweep> = labels
        .iter()
        .zip(per_case)
        .map(|(l, raw)| {
            let label = l.clone().unwrap_or_else(|| "full catalog".into());
            CaseSweep { frontier: pareto::assemble(label.clone(), raw.clone()), label, raw }
        })
        .collect();
    let dir = out_dir(&a.common)?;
    write_sweeps(dir, &loaded.name, &labels, &instances, &sweeps, a.mode, a.common.no_discount)?;
    let failed = sweeps.iter().filter(|s| s.frontier.is_err()).count();
    for s in &sweeps {
        match &s.frontier {
            Ok(f) => println!("{}: {} frontier points of {}", s.label, f.points.len(), s.raw.len()),
            Err(e) => println!("{}: {e}", s.label),
        }
    }
    Ok(if failed > 0 { EXIT_INFEASIBLE } else { EXIT_OK })
}

fn write_sweeps(
    dir: &Path,
    name: &str,
    labels: &[Option<String>],
    instances: &[Instance],
    sweeps: &[CaseSweep],
    mode: Mode,
    no_discount: bool,
) -> Result<(), Fail> {
    let plans = dir.join("plans");
    fs::create_dir_all(&plans).map_err(input)?;
    let mut series = Vec::new();
    for ((s, l), inst) in sweeps.iter().zip(labels).zip(instances) {
        let slug = report::slug(&s.label);
        let ids: Vec<String> = (0..s.raw.len()).map(|k| format!("{slug}-{k:03}")).collect();
        for (p, id) in s.raw.iter().zip(&ids) {
            if let Some(plan) = &p.plan {
                write(&plans.join(format!("{id}.json")), &PlanFile::from_plan(name, l.as_deref(), inst, plan).to_json())?;
            }
        }
        let raw_ids: Vec<String> =
            s.raw.iter().zip(&ids).map(|(p, id)| if p.plan.is_some() { id.clone() } else { String::new() }).collect();
        let mut buf = Vec::new();
        report::write_frontier(&mut buf, &s.raw, &raw_ids).map_err(input)?;
        write(&dir.join(format!("sweep_{slug}.csv")), &String::from_utf8(buf).expect("UTF-8"))?;
        let kept: &[ParetoPoint] = s.frontier.as_ref().map_or(&[], |f| &f.points);
        let kept_ids: Vec<String> = kept
            .iter()
            .map(|p| {
                s.raw.iter().position(|r| r.epsilon == p.epsilon && r.status == p.status).map_or(String::new(), |k| ids[k].clone())
            })
            .collect();
        let mut buf = Vec::new();
        report::write_frontier(&mut buf, kept, &kept_ids).map_err(input)?;
        write(&dir.join(format!("frontier_{slug}.csv")), &String::from_utf8(buf).expect("UTF-8"))?;
        series.push(svg::Series { label: s.label.clone(), points: kept.iter().map(|p| (p.risk, p.expected)).collect() });
    }
    let npv = if no_discount || instances.iter().all(|i| i.interest_rate == 0.0) { "undiscounted" } else { "discounted" };
    let title = format!("{name}: {npv} NPV, {}", mode_name(mode));
    write(&dir.join("frontier.svg"), &svg::frontier_chart(&title, &series))?;

    let ok: Vec<&CaseSweep> = sweeps.iter().filter(|s| s.frontier.is_ok()).collect();
    if ok.len() > 1 {
        let mut text = String::new();
        for x in &ok {
            for y in &ok {
                if std::ptr::eq(*x, *y) {
                    continue;
                }
                let (fa, fb) = (x.frontier.as_ref().unwrap(), y.frontier.as_ref().unwrap());
                let r = pareto::dominance_report(fa, fb);
                let weak = r.points.iter().filter(|p| p.weakly_dominated_by.is_some()).count();
                let _ = writeln!(
                    text,
                    "{} dominates {}: {} ({weak} of {} points weakly dominated)",
                    y.label,
                    x.label,
                    if r.second_dominates_first { "yes" } else { "no" },
                    r.points.len()
                );
            }
        }
        write(&dir.join("dominance.txt"), &text)?;
        print!("{text}");
    }
    Ok(())
}

pub fn cmd_oracle(a: &OracleArgs) -> CmdResult {
    let (loaded, inst) = prepare(&a.common, a.case.as_deref())?;
    let threads = a.common.threads.max(1);
    let parts: Vec<usize> = (0..threads).collect();
    let results = map_ordered(&parts, threads, |&k| brute_force_partition(&inst, None, k, threads));
    let mut best = None;
    for r in results {
        match r {
            Ok(r) => best = merge_oracle(best, r),
            Err(analysis::AnalysisError::EnumerationTooLarge(n)) => {
                return Err(Fail::new(EXIT_INPUT, format!("enumeration needs {n} assignments, more than the limit of 10^7")))
            }
            Err(e) => return Err(Fail::new(EXIT_SOLVER, e.to_string())),
        }
    }
    let Some(best) = best else {
        println!("no feasible installation plan");
        return Ok(EXIT_INFEASIBLE);
    };
    let dir = out_dir(&a.common)?;
    write_plan_outputs(dir, &loaded.name, a.case.as_deref(), &inst, &best.plan)?;
    println!("assignments   {}", best.evaluated);
    println!("expected NPV  $ {}", report::money(best.plan.expected));
    println!("risk          $ {}", report::money(best.plan.risk));
    for i in best.plan.installations(&inst.tree) {
        println!("  {:<8} {:<14} {} x {}", i.node.to_string(), best.plan.product_ids[i.product], i.capacity, i.count);
    }
    if a.compare {
        let (m, _) = build_stochastic_with(&inst, ObjectiveMode::MaximizeExpected, &options(&a.common))
            .map_err(|e| Fail::new(EXIT_INFEASIBLE, e.to_string()))?;
        let set = MilpSettings { gap_tol: 1e-9, ..settings(&a.common) };
        let sol = solve_milp_with(&m, &set, &WallClock::start(), None).map_err(|e| Fail::new(EXIT_SOLVER, e.to_string()))?;
        let diff = (sol.objective - best.objective).abs();
        println!("milp          $ {} ({}), difference {diff:e}", report::money(sol.objective), sol.status.as_str());
        if !sol.has_incumbent() || diff > 1e-6 * best.objective.abs().max(1.0) {
            return Ok(EXIT_SOLVER);
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_horizon(a: &HorizonArgs) -> CmdResult {
    let (_, inst) = prepare(&a.common, a.case.as_deref())?;
    let max = a.max_stages.unwrap_or(inst.tree.num_stages());
    let rep = analysis::profitability_horizon(&inst, max, &options(&a.common), &settings(&a.common), &WallClock::start())
        .map_err(|e| Fail::new(EXIT_SOLVER, e.to_string()))?;
    let dir = out_dir(&a.common)?;
    let mut csv = String::from("stages,expected,status\n");
    for (t, e, s) in &rep.expected_by_stage {
        let _ = writeln!(csv, "{t},{e},{}", s.as_str());
        println!("{t:>3} stages  expected NPV $ {}  ({})", report::money(*e), s.as_str());
    }
    write(&dir.join("horizon.csv"), &csv)?;
    match rep.horizon {
        Some(t) => println!("profitable from {t} stages"),
        None => println!("not profitable within {max} stages"),
    }
    Ok(EXIT_OK)
}
