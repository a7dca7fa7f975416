//! Command-line front end. Parsing lives in [`Cli`]; [`run`] executes a parsed
//! command and [`main_with_args`] maps the outcome to a process exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexdriver::{
    compare_runs, solve_lex, sweep_parameters, LexSolution, RatioRow, RunSummary, SolveOptions,
    StopRule,
};
use crate::metrics::{Counters, LevelMetrics, RunMetrics};
use crate::model::file::load_problem;
use crate::model::{DoseMatrix, Structure};
use crate::phantom::{dvh, generate_phantom, PhantomConfig, Relaxation};
use crate::superiorize::{BoundHandling, ExponentPolicy, PsiSelection, SuperiorizationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "lexsup",
    version,
    about = "Lexicographic level-set optimization with superiorization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file and write solution.json, metrics.csv and trajectory.csv.
    Solve(SolveArgs),
    /// Compare two solve output directories and write ratios.csv.
    Compare(CompareArgs),
    /// Generate a synthetic phantom problem.
    Phantom(PhantomArgs),
    /// Write dose-volume histograms of a solution.
    Dvh(DvhArgs),
    /// Run a (K, Lambda) grid and write sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Plain lexicographic level-set scheme.
    Lo,
    /// Superiorized variant.
    Slo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    ResetPerCall,
    Persistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundsArg {
    Clip,
    Reject,
}

/// Solver settings shared by `solve` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Base of the perturbation step sizes, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub base: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub min_stepsize: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Persistent)]
    pub exponent_policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = BoundsArg::Clip)]
    pub bounds: BoundsArg,
    /// Superiorize toward a weighted sum of later groups instead of the next
    /// one, e.g. `2:1,3:0.5`.
    #[arg(long)]
    pub psi_groups: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub relaxation: f64,
    /// Projection budget per feasibility problem.
    #[arg(long, default_value_t = 1000)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub violation_tol: f64,
    /// Override the problem's slack fraction for the lexicographic constraints.
    #[arg(long)]
    pub delta_fraction: Option<f64>,
    /// JSON file `{"x": [...]}` holding a known optimum; switches to the
    /// validation stop rule.
    #[arg(long)]
    pub known_optimum: Option<PathBuf>,
    /// Objective-space distance to the known optimum at which the run stops.
    #[arg(long, default_value_t = 1e-2)]
    pub optimum_tolerance: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = Mode::Lo)]
    pub mode: Mode,
    /// Successful feasibility problems between superiorization bouts.
    #[arg(long)]
    pub k: Option<usize>,
    /// Maximum perturbation steps per bout.
    #[arg(long)]
    pub lambda: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Output directory of the baseline run.
    pub baseline: PathBuf,
    /// Output directory of the run compared against it.
    pub compared: PathBuf,
    #[arg(long, default_value = "ratios.csv")]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::lexdriver::T_MIN)]
    pub t_min: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PhantomArgs {
    /// Phantom configuration JSON. Without it the standard phantom is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid edge length of the standard phantom.
    #[arg(long, default_value_t = 12)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "phantom")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DvhArgs {
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    /// Comma-separated structure names; all structures by default.
    #[arg(long)]
    pub structures: Option<String>,
    #[arg(long, default_value = "dvh.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// K values; `inf` runs without superiorization.
    #[arg(long, default_value = "1,2,4")]
    pub k_grid: String,
    #[arg(long, default_value = "1,2,4,8")]
    pub lambda_grid: String,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::ZeroSubgradient { .. }
        | Error::Io { .. }
        | Error::Json { .. }
        | Error::Csv(_) => EXIT_INVALID_INPUT,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID_INPUT
            } else {
                EXIT_OK
            };
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => EXIT_INTERNAL,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a).map(|_| ()),
        Command::Compare(a) => cmd_compare(a),
        Command::Phantom(a) => cmd_phantom(a),
        Command::Dvh(a) => cmd_dvh(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Fixed 12-significant-digit rendering used in every CSV.
pub fn fmt12(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let magnitude = rounded.abs();
    if magnitude != 0.0 && !(1e-4..1e15).contains(&magnitude) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse()
            .map_err(|_| Error::invalid(format!("`{t}` is not a number"))),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    })
}

#[derive(Debug, Clone, Deserialize)]
struct KnownOptimumFile {
    x: Vec<f64>,
}

fn parse_psi_groups(spec: &str) -> Result<Vec<(usize, f64)>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (g, w) = item.split_once(':').unwrap_or((item, "1"));
            let g = g
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad psi group `{item}`")))?;
            Ok((g, parse_f64(w)?))
        })
        .collect()
}

impl SolverArgs {
    fn options(&self, n_vars: usize) -> Result<SolveOptions> {
        let mut opts = SolveOptions::default();
        opts.projection.relaxation = self.relaxation;
        opts.projection.n_max = self.n_max;
        opts.projection.violation_tol = self.violation_tol;
        opts.projection.validate()?;
        if let Some(path) = &self.known_optimum {
            let known: KnownOptimumFile = read_json(path)?;
            crate::error::check_len("known optimum", n_vars, known.x.len())?;
            if !(self.optimum_tolerance > 0.0) {
                return Err(Error::invalid("optimum tolerance must be positive"));
            }
            opts.stop_rule = StopRule::KnownOptimum {
                x: known.x,
                tolerance: self.optimum_tolerance,
            };
        }
        Ok(opts)
    }

    fn superiorization(&self, k: usize, lambda: usize) -> Result<SuperiorizationConfig> {
        let mut cfg = SuperiorizationConfig::new(k, lambda);
        cfg.base = self.base;
        cfg.min_stepsize = self.min_stepsize;
        cfg.exponent_policy = match self.exponent_policy {
            PolicyArg::Persistent => ExponentPolicy::Persistent,
            PolicyArg::ResetPerCall => ExponentPolicy::ResetPerCall,
        };
        cfg.bounds = match self.bounds {
            BoundsArg::Clip => BoundHandling::Clip,
            BoundsArg::Reject => BoundHandling::Reject,
        };
        if let Some(spec) = &self.psi_groups {
            cfg.psi = PsiSelection::Groups(parse_psi_groups(spec)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn load(&self) -> Result<crate::model::file::LoadedProblem> {
        let mut loaded = load_problem(&self.problem)?;
        if let Some(df) = self.delta_fraction {
            if !(df >= 0.0) || !df.is_finite() {
                return Err(Error::invalid(
                    "delta fraction must be a nonnegative number",
                ));
            }
            loaded.problem.delta_fraction = df;
        }
        Ok(loaded)
    }
}

/// What `solve` writes to solution.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub problem_hash: String,
    pub mode: String,
    pub n_vars: usize,
    pub x_final: Vec<f64>,
    pub phi_stars: Vec<f64>,
    pub deltas: Vec<f64>,
    pub phi_final: Vec<f64>,
    pub max_constraint_violation: f64,
    pub stopped_early: bool,
    pub per_level_solutions: Vec<Vec<f64>>,
}

/// Runs `solve` and returns the solution in memory as well.
pub fn cmd_solve(args: &SolveArgs) -> Result<LexSolution> {
    let loaded = args.solver.load()?;
    let mut opts = args.solver.options(loaded.problem.n_vars())?;
    if args.mode == Mode::Slo {
        let (k, lambda) = match (args.k, args.lambda) {
            (Some(k), Some(l)) => (k, l),
            _ => return Err(Error::invalid("mode slo needs both --k and --lambda")),
        };
        opts.superiorization = Some(args.solver.superiorization(k, lambda)?);
    }
    let solution = solve_lex(&loaded.problem, &opts)?;

    let out = &args.solver.out;
    create_dir(out)?;
    let file = SolutionFile {
        problem_hash: loaded.hash.clone(),
        mode: match args.mode {
            Mode::Lo => "lo".into(),
            Mode::Slo => "slo".into(),
        },
        n_vars: solution.x_final.len(),
        x_final: solution.x_final.clone(),
        phi_stars: solution.phi_stars.clone(),
        deltas: solution.deltas.clone(),
        phi_final: solution.phi_final.clone(),
        max_constraint_violation: solution.max_constraint_violation,
        stopped_early: solution.stopped_early,
        per_level_solutions: solution.per_level_solutions.clone(),
    };
    let json = serde_json::to_string_pretty(&file).expect("solution serializes");
    write_file(&out.join("solution.json"), json.as_bytes())?;
    write_metrics_csv(
        &out.join("metrics.csv"),
        &solution.metrics,
        solution.phi_stars.len(),
    )?;
    write_trajectory_csv(&out.join("trajectory.csv"), &solution)?;
    let timing: Vec<_> = solution
        .metrics
        .levels
        .iter()
        .map(|l| serde_json::json!({ "level": l.level, "wall_time_s": l.wall_time_s }))
        .collect();
    let timing = serde_json::to_string_pretty(&timing).expect("timing serializes");
    write_file(&out.join("timing.json"), timing.as_bytes())?;
    Ok(solution)
}

const COUNTER_COLUMNS: [&str; 5] = [
    "level",
    "dose_mults",
    "projections",
    "gradient_evals",
    "sup_steps",
];

pub fn write_metrics_csv(path: &Path, metrics: &RunMetrics, m: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = COUNTER_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=m).map(|g| format!("phi_entry_{g}")));
    w.write_record(&header)?;
    for l in &metrics.levels {
        let c = l.counters;
        let mut row = vec![
            l.level.to_string(),
            c.dose_mults.to_string(),
            c.projections.to_string(),
            c.gradient_evals.to_string(),
            c.sup_steps.to_string(),
        ];
        row.extend((0..m).map(|g| l.phi_at_entry.get(g).map_or(String::new(), |&v| fmt12(v))));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<RunMetrics> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    })?;
    let headers = r.headers()?.clone();
    if headers.len() < COUNTER_COLUMNS.len()
        || headers.iter().zip(COUNTER_COLUMNS).any(|(a, b)| a != b)
    {
        return Err(Error::invalid(format!(
            "{}: unexpected metrics header",
            path.display()
        )));
    }
    let mut levels = Vec::new();
    for record in r.records() {
        let record = record?;
        let int = |i: usize| -> Result<u64> {
            record[i].parse().map_err(|_| {
                Error::invalid(format!("{}: bad count `{}`", path.display(), &record[i]))
            })
        };
        let mut phi_at_entry = Vec::new();
        for field in record.iter().skip(COUNTER_COLUMNS.len()) {
            if !field.is_empty() {
                phi_at_entry.push(parse_f64(field)?);
            }
        }
        levels.push(LevelMetrics {
            level: int(0)? as usize,
            counters: Counters {
                dose_mults: int(1)?,
                projections: int(2)?,
                gradient_evals: int(3)?,
                sup_steps: int(4)?,
            },
            phi_at_entry,
            wall_time_s: 0.0,
        });
    }
    Ok(RunMetrics { levels })
}

fn write_trajectory_csv(path: &Path, solution: &LexSolution) -> Result<()> {
    let m = solution.phi_stars.len();
    let mut w = csv_writer(path)?;
    let mut header = vec!["index".to_string(), "level".to_string()];
    header.extend((1..=m).map(|g| format!("phi_{g}")));
    header.push("max_violation".into());
    w.write_record(&header)?;
    for row in &solution.trajectory {
        let mut rec = vec![row.index.to_string(), row.level.to_string()];
        rec.extend(row.phi.iter().map(|&v| fmt12(v)));
        rec.push(fmt12(row.max_violation));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn load_run(dir: &Path) -> Result<RunSummary> {
    let solution: SolutionFile = read_json(&dir.join("solution.json"))?;
    let metrics = read_metrics_csv(&dir.join("metrics.csv"))?;
    Ok(RunSummary {
        n_vars: solution.n_vars,
        problem_hash: Some(solution.problem_hash),
        phi_stars: solution.phi_stars,
        metrics,
    })
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let baseline = load_run(&args.baseline)?;
    let compared = load_run(&args.compared)?;
    let rows = compare_runs(&baseline, &compared, args.t_min)?;
    write_ratios_csv(&args.out, &rows)
}

fn write_ratios_csv(path: &Path, rows: &[RatioRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "quantity",
        "level",
        "objective",
        "baseline",
        "compared",
        "ratio",
        "solved",
    ])?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        w.write_record([
            r.quantity.to_string(),
            opt(r.level),
            opt(r.objective),
            fmt12(r.baseline),
            fmt12(r.compared),
            fmt12(r.ratio),
            r.solved.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct PhantomReport<'a> {
    config: &'a PhantomConfig,
    relaxations: &'a [Relaxation],
    reference_fluence: &'a [f64],
    dose_rows: usize,
    dose_cols: usize,
    dose_nnz: usize,
}

pub fn cmd_phantom(args: &PhantomArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => read_json(path)?,
        None => PhantomConfig::standard(args.size, args.seed),
    };
    let ph = generate_phantom(&config)?;
    create_dir(&args.out)?;
    write_file(
        &args.out.join("dose.mtx"),
        ph.dose.to_matrix_market().as_bytes(),
    )?;
    write_file(
        &args.out.join("problem.json"),
        ph.problem_file.to_json().as_bytes(),
    )?;
    let report = PhantomReport {
        config: &config,
        relaxations: &ph.relaxations,
        reference_fluence: &ph.reference_fluence,
        dose_rows: ph.dose.rows(),
        dose_cols: ph.dose.cols(),
        dose_nnz: ph.dose.nnz(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&args.out.join("phantom.json"), json.as_bytes())?;
    for r in &ph.relaxations {
        eprintln!(
            "relaxed {} {} threshold {} -> {}",
            r.structure, r.kind, r.requested, r.relaxed_to
        );
    }
    Ok(())
}

pub fn cmd_dvh(args: &DvhArgs) -> Result<()> {
    let loaded = load_problem(&args.problem)?;
    let solution: SolutionFile = read_json(&args.solution)?;
    if solution.problem_hash != loaded.hash {
        return Err(Error::invalid(
            "solution was computed for a different problem",
        ));
    }
    let dose = dose_of(&loaded.problem.dose, &solution.x_final)?;
    let selected: Vec<&Structure> = match &args.structures {
        None => loaded
            .problem
            .structures
            .iter()
            .map(|s| s.as_ref())
            .collect(),
        Some(names) => names
            .split(',')
            .map(|n| {
                loaded
                    .problem
                    .structures
                    .iter()
                    .find(|s| s.name() == n.trim())
                    .map(|s| s.as_ref())
                    .ok_or_else(|| Error::invalid(format!("unknown structure `{n}`")))
            })
            .collect::<Result<_>>()?,
    };
    if selected.is_empty() {
        return Err(Error::invalid("problem has no structures"));
    }
    let mut w = csv_writer(&args.out)?;
    w.write_record(["dose_gy", "volume_fraction", "structure"])?;
    for s in selected {
        for (t, v) in dvh(&dose, s, args.bin_width)? {
            w.write_record([fmt12(t), fmt12(v), s.name().to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&args.out, e))
}

fn dose_of(p: &DoseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    p.apply(x, &mut Counters::default())
}

fn parse_k_grid(s: &str) -> Result<Vec<Option<usize>>> {
    s.split(',')
        .map(|t| match t.trim() {
            "inf" | "∞" => Ok(None),
            v => match v.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Some(k)),
                _ => Err(Error::invalid(format!("bad K value `{v}`"))),
            },
        })
        .collect()
}

fn parse_lambda_grid(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(l) if l >= 1 => Ok(l),
            _ => Err(Error::invalid(format!("bad Lambda value `{}`", t.trim()))),
        })
        .collect()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let k_grid = parse_k_grid(&args.k_grid)?;
    let lambda_grid = parse_lambda_grid(&args.lambda_grid)?;
    let loaded = args.solver.load()?;
    let opts = args.solver.options(loaded.problem.n_vars())?;
    let template = args.solver.superiorization(1, 1)?;
    let report = sweep_parameters(&loaded.problem, &k_grid, &lambda_grid, &opts, &template);

    create_dir(&args.solver.out)?;
    let path = args.solver.out.join("sweep.csv");
    let m = loaded.problem.levels();
    let mut w = csv_writer(&path)?;
    let mut header: Vec<String> = [
        "k",
        "lambda",
        "status",
        "best",
        "dose_mults",
        "projections",
        "gradient_evals",
        "sup_steps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=m).map(|g| format!("phi_star_{g}")));
    header.push("error".into());
    w.write_record(&header)?;
    for row in &report.rows {
        let k = row.point.k.map_or("inf".to_string(), |k| k.to_string());
        let best = report.best == Some(row.point);
        let mut rec = vec![k, row.point.lambda.to_string()];
        match &row.outcome {
            Ok(sol) => {
                let t = sol.metrics.total();
                rec.extend([
                    "ok".to_string(),
                    best.to_string(),
                    t.dose_mults.to_string(),
                    t.projections.to_string(),
                    t.gradient_evals.to_string(),
                    t.sup_steps.to_string(),
                ]);
                rec.extend(sol.phi_stars.iter().map(|&v| fmt12(v)));
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(["failed".to_string(), "false".to_string()]);
                rec.extend(std::iter::repeat_n(String::new(), 4 + m));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    match report.best {
        Some(p) => println!(
            "best K={} Lambda={}",
            p.k.map_or("inf".to_string(), |k| k.to_string()),
            p.lambda
        ),
        None => println!("no grid point succeeded"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digit_formatting() {
        assert_eq!(fmt12(1200.0), "1200");
        assert_eq!(fmt12(-0.1), "-0.1");
        assert_eq!(fmt12(29.999999999912345), "29.9999999999");
        assert_eq!(fmt12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt12(f64::INFINITY), "inf");
        assert_eq!(fmt12(9.596874406270217e-9), "9.59687440627e-9");
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(parse_f64("inf").unwrap(), f64::INFINITY);
    }

    #[test]
    fn grids_parse() {
        assert_eq!(
            parse_k_grid("1, 2,inf").unwrap(),
            vec![Some(1), Some(2), None]
        );
        assert!(parse_k_grid("0").is_err());
        assert!(parse_k_grid("x").is_err());
        assert_eq!(parse_lambda_grid("1,8").unwrap(), vec![1, 8]);
        assert!(parse_lambda_grid("").is_err());
    }

    #[test]
    fn psi_groups_parse() {
        assert_eq!(
            parse_psi_groups("2:1,3:0.5").unwrap(),
            vec![(2, 1.0), (3, 0.5)]
        );
        assert_eq!(parse_psi_groups("3").unwrap(), vec![(3, 1.0)]);
        assert!(parse_psi_groups("a:1").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x")), EXIT_INVALID_INPUT);
        assert_eq!(
            exit_code(&Error::Infeasible {
                steps: 1,
                max_violation: 1.0
            }),
            EXIT_INFEASIBLE
        );
    }

    #[test]
    fn slo_needs_parameters() {
        let toy = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy.json");
        let cli = Cli::try_parse_from([
            "lexsup",
            "solve",
            "--problem",
            toy,
            "--mode",
            "slo",
            "--k",
            "2",
        ])
        .unwrap();
        let Command::Solve(args) = cli.command else {
            panic!()
        };
        assert!(matches!(cmd_solve(&args), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let metrics = RunMetrics {
            levels: vec![
                LevelMetrics {
                    level: 0,
                    counters: Counters {
                        dose_mults: 3,
                        projections: 1,
                        gradient_evals: 2,
                        sup_steps: 0,
                    },
                    phi_at_entry: vec![],
                    wall_time_s: 0.0,
                },
                LevelMetrics {
                    level: 1,
                    counters: Counters {
                        dose_mults: 30,
                        projections: 10,
                        gradient_evals: 20,
                        sup_steps: 4,
                    },
                    phi_at_entry: vec![1.5, -2.25],
                    wall_time_s: 0.0,
                },
            ],
        };
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(&path, &metrics, 2).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), metrics);
    }
}
