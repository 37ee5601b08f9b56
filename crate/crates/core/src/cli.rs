//! The `pfl` command line.

use std::fmt::Write as _;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::{default_hv_ref, evaluate_moo, evaluate_mtl, mtl_front, predict_all};
use crate::metrics::{distances, mean_std};
use crate::model::{fmt_row, ModelFile};
use crate::oracle::{med_targets, solve_all, OracleConfig, StartPoint, StepSize};
use crate::prefs::{default_eps, interior_rays};
use crate::problems::{make_mtl_lite, ProblemId, ProblemSpec};
use crate::scalarize::{ScalarKind, ScalarizationSpec};
use crate::train::{Checkpoint, RunConfig, Trainer};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MODEL: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "pfl",
    version,
    about = "Pareto front learning with preference-conditioned hypernetworks"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a hypernetwork and write the model file and loss history.
    Train(TrainArgs),
    /// Score a model against oracle targets (MED) and by hypervolume.
    Eval(EvalArgs),
    /// Write the predicted front for evenly spaced preferences as CSV.
    Front(FrontArgs),
    /// Solve the scalarized problem exactly for each preference, as CSV.
    Oracle(OracleArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
    /// Rerun a published MED table: several seeds and ray counts.
    Repro(ReproArgs),
}

#[derive(Args, Debug, Clone)]
struct ScalarArgs {
    /// Scalarization: ls, cheby, utility, kl, cauchy, cosine, log, prod, ac, mc, hvi.
    #[arg(long = "scalar", default_value = "ls")]
    kind: ScalarKind,
    /// Mixing weight for ac, mc and hvi.
    #[arg(long)]
    rho: Option<f64>,
    /// Utility upper bounds; one value is used for every objective.
    #[arg(long, value_delimiter = ',')]
    ub: Option<Vec<f64>>,
    /// Chebyshev reference point.
    #[arg(long = "z-star", value_delimiter = ',')]
    z_star: Option<Vec<f64>>,
    /// Hypervolume reference point.
    #[arg(long = "hv-ref", value_delimiter = ',')]
    hv_ref: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    problem: ProblemId,
    #[command(flatten)]
    scalar: ScalarArgs,
    /// Total iterations [default: 20000]; with `--resume`, extends the run.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = crate::train::DEFAULT_LR)]
    lr: f64,
    /// Dirichlet concentration; 0.6 for closed-form problems, 0.2 for mtl-lite.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Preferences per step (hvi only).
    #[arg(long)]
    samples: Option<usize>,
    /// Mini-batch size (mtl-lite only).
    #[arg(long)]
    batch: Option<usize>,
    /// Hidden layer widths, overriding the problem default.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV; defaults to the model path with `.history.csv`.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Write a resumable checkpoint here every `--checkpoint-every` steps.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    checkpoint_every: usize,
    /// Continue from a checkpoint; its configuration replaces the flags
    /// above except `--iters`.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct OracleArgsCommon {
    /// Step size: `auto` (inverse sampled Lipschitz constant) or a number.
    #[arg(long, default_value = "auto")]
    step: StepArg,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    stop_tol: f64,
    /// Start from the box center, or a random feasible point with this seed.
    #[arg(long)]
    start_seed: Option<u64>,
}

impl OracleArgsCommon {
    fn config(&self) -> OracleConfig {
        OracleConfig {
            step: self.step.0,
            max_iterations: self.max_iter,
            stop_tol: self.stop_tol,
            start: self
                .start_seed
                .map_or(StartPoint::CenterOfBox, |seed| StartPoint::FeasibleRandom { seed }),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct StepArg(StepSize);

impl FromStr for StepArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(StepArg(StepSize::Auto));
        }
        s.parse::<f64>()
            .map(|value| StepArg(StepSize::Fixed { value }))
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    rays: usize,
    /// Minimum preference coordinate; 1e-3 for two objectives, 0.16 for three.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "hv-ref", value_delimiter = ',')]
    hv_ref: Option<Vec<f64>>,
    #[command(flatten)]
    oracle: OracleArgsCommon,
    /// Report path; printed to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FrontArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of preferences (at least 2).
    #[arg(long)]
    k: usize,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    problem: ProblemId,
    #[command(flatten)]
    scalar: ScalarArgs,
    #[arg(long, default_value_t = 100)]
    rays: usize,
    #[arg(long)]
    eps: Option<f64>,
    #[command(flatten)]
    oracle: OracleArgsCommon,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Table {
    Table1,
    Table2,
    Table3,
}

impl Table {
    fn problem(self) -> ProblemId {
        match self {
            Table::Table1 => ProblemId::Ex71,
            Table::Table2 => ProblemId::Ex72,
            Table::Table3 => ProblemId::Ex73,
        }
    }
}

#[derive(Args, Debug)]
struct ReproArgs {
    table: Table,
    #[arg(long, default_value_t = 30)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "5,10,50,100,300,600")]
    rays: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "ls,cheby,utility")]
    scalars: Vec<ScalarKind>,
    #[arg(long, default_value_t = crate::train::DEFAULT_ITERATIONS)]
    iters: usize,
    /// JSON results path; the table is always printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with the process exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Unknown { .. } => EXIT_USAGE,
            Error::ModelMismatch(_) | Error::Integrity(_) | Error::Version { .. } => EXIT_MODEL,
            Error::Divergence { .. } | Error::UtilityBound { .. } => EXIT_DIVERGED,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Parses `std::env::args` and runs the command.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: Cli) -> std::result::Result<(), Failure> {
    limit_threads();
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Front(a) => front(a),
        Command::Oracle(a) => oracle(a),
        Command::Serve(a) => {
            crate::serve::serve_blocking(&a.model, SocketAddr::new(a.host, a.port))?;
            Ok(())
        }
        Command::Repro(a) => repro(a),
    }
}

/// Caps rayon workers at `PFL_THREADS` when set.
fn limit_threads() {
    if let Some(n) = std::env::var("PFL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn resize(values: Vec<f64>, m: usize, what: &str) -> std::result::Result<Vec<f64>, Failure> {
    match values.len() {
        1 => Ok(vec![values[0]; m]),
        n if n == m => Ok(values),
        n => Err(usage(format!("--{what} needs 1 or {m} values, got {n}"))),
    }
}

fn scalarization(
    args: &ScalarArgs,
    problem: Option<&ProblemSpec>,
    m: usize,
) -> std::result::Result<ScalarizationSpec, Failure> {
    let mut spec = match problem {
        Some(p) => ScalarizationSpec::for_problem(args.kind, p),
        None => ScalarizationSpec::new(args.kind, m),
    };
    if let Some(rho) = args.rho {
        spec.rho = rho;
    }
    if let Some(ub) = &args.ub {
        spec.u = resize(ub.clone(), m, "ub")?;
    }
    if let Some(z) = &args.z_star {
        spec.z_star = resize(z.clone(), m, "z-star")?;
    }
    if let Some(r) = &args.hv_ref {
        spec.hv_ref = resize(r.clone(), m, "hv-ref")?;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn history_path(out: &Path) -> PathBuf {
    out.with_extension("history.csv")
}

fn train(a: TrainArgs) -> std::result::Result<(), Failure> {
    let mtl = a.problem == ProblemId::MtlLite;
    let mut trainer = if let Some(path) = &a.resume {
        let mut ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path).map_err(Error::from)?)
            .map_err(|e| Error::Integrity(format!("unreadable checkpoint: {e}")))?;
        if let Some(iters) = a.iters {
            ckpt.config.iterations = iters;
        }
        if ckpt.config.problem == ProblemId::MtlLite {
            Trainer::resume_mtl(ckpt.clone(), make_mtl_lite(ckpt.config.seed))?
        } else {
            Trainer::resume_phn(ckpt)?
        }
    } else {
        let mut cfg = if mtl {
            RunConfig::mtl(a.scalar.kind)
        } else {
            RunConfig::phn(&ProblemSpec::new(a.problem)?, a.scalar.kind)
        };
        let problem = if mtl { None } else { Some(ProblemSpec::new(a.problem)?) };
        cfg.scalarization = scalarization(&a.scalar, problem.as_ref(), cfg.arch.input_dim)?;
        cfg.iterations = a.iters.unwrap_or(crate::train::DEFAULT_ITERATIONS);
        cfg.lr = a.lr;
        if let Some(alpha) = a.alpha {
            cfg.alpha = alpha;
        }
        cfg.seed = a.seed;
        if let Some(j) = a.samples {
            cfg.samples_per_step = j;
        }
        if let Some(b) = a.batch {
            cfg.batch_size = b;
        }
        if let Some(hidden) = &a.hidden {
            cfg.arch.hidden = hidden.clone();
        }
        cfg.log_every = a.log_every;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        if mtl {
            Trainer::new_mtl(cfg.clone(), make_mtl_lite(cfg.seed))?
        } else {
            Trainer::new_phn(cfg)?
        }
    };

    let every = a.checkpoint_every.max(1);
    while !trainer.is_done() {
        let next = match &a.checkpoint {
            Some(_) => (trainer.iteration() / every + 1) * every,
            None => usize::MAX,
        };
        trainer.run_until(next)?;
        if let Some(path) = &a.checkpoint {
            fs::write(path, serde_json::to_string(&trainer.checkpoint()).map_err(Error::from)?).map_err(Error::from)?;
        }
    }
    let config = trainer.config().clone();
    let (model, history) = trainer.finish()?;
    ModelFile::new(&config, &model).save(&a.out)?;
    let hist = a.history.clone().unwrap_or_else(|| history_path(&a.out));
    fs::write(&hist, history.to_csv()).map_err(Error::from)?;
    eprintln!(
        "trained {} for {} iterations; model {} history {}",
        config.problem.name(),
        config.iterations,
        a.out.display(),
        hist.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> std::result::Result<(), Failure> {
    let file = ModelFile::load(&a.model)?;
    let model = file.model()?;
    let m = model.arch.input_dim;
    let eps = a.eps.unwrap_or_else(|| default_eps(m));
    let hv_ref = match &a.hv_ref {
        Some(r) => resize(r.clone(), m, "hv-ref")?,
        None => default_hv_ref(m),
    };
    if a.rays == 0 {
        return Err(usage("--rays must be at least 1"));
    }
    let report = if file.problem == ProblemId::MtlLite {
        evaluate_mtl(
            &model,
            &make_mtl_lite(file.training.seed),
            &file.scalarization,
            a.rays,
            eps,
            &hv_ref,
        )?
    } else {
        let problem = ProblemSpec::new(file.problem)?;
        evaluate_moo(
            &problem,
            &model,
            &file.scalarization,
            a.rays,
            eps,
            &hv_ref,
            &a.oracle.config(),
        )?
    };
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
    write_output(a.out.as_deref(), &text)?;
    Ok(())
}

fn header(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

fn front(a: FrontArgs) -> std::result::Result<(), Failure> {
    if a.k < 2 {
        return Err(usage(format!("--k must be at least 2, got {}", a.k)));
    }
    let file = ModelFile::load(&a.model)?;
    let model = file.model()?;
    let m = model.arch.input_dim;
    let rays = interior_rays(m, a.k, a.eps.unwrap_or_else(|| default_eps(m)))?;
    let mut out = String::new();
    if file.problem == ProblemId::MtlLite {
        let front = mtl_front(&model, &make_mtl_lite(file.training.seed), &rays)?;
        let cols = [header("r", m), header("f", m)].concat();
        let _ = writeln!(out, "{}", cols.join(","));
        for (r, f) in rays.iter().zip(&front) {
            let _ = writeln!(out, "{},{}", fmt_row(r.as_slice()), fmt_row(f));
        }
    } else {
        let problem = ProblemSpec::new(file.problem)?;
        let preds = predict_all(&problem, &model, &rays)?;
        let cols = [header("r", m), header("x", problem.n), header("f", m)].concat();
        let _ = writeln!(out, "{}", cols.join(","));
        for p in &preds {
            let _ = writeln!(out, "{},{},{}", fmt_row(&p.ray), fmt_row(&p.x), fmt_row(&p.objectives));
        }
    }
    write_output(a.out.as_deref(), &out)?;
    Ok(())
}

fn oracle(a: OracleArgs) -> std::result::Result<(), Failure> {
    if a.problem == ProblemId::MtlLite {
        return Err(usage("the oracle needs a closed-form problem"));
    }
    let problem = ProblemSpec::new(a.problem)?;
    let spec = scalarization(&a.scalar, Some(&problem), problem.m)?;
    let rays = interior_rays(
        problem.m,
        a.rays.max(1),
        a.eps.unwrap_or_else(|| default_eps(problem.m)),
    )?;
    let sols = solve_all(&problem, &spec, &rays, &a.oracle.config())?;
    let mut out = String::new();
    let cols = [header("r", problem.m), header("x", problem.n), header("f", problem.m)].concat();
    let _ = writeln!(out, "{},iterations,converged", cols.join(","));
    for (r, s) in rays.iter().zip(&sols) {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_row(r.as_slice()),
            fmt_row(&s.x),
            fmt_row(&s.objectives),
            s.iterations,
            s.converged
        );
    }
    write_output(a.out.as_deref(), &out)?;
    Ok(())
}

#[derive(Serialize)]
struct ReproRow {
    scalarization: ScalarKind,
    rays: usize,
    med_mean: f64,
    med_std: f64,
    seeds: usize,
    not_converged: usize,
}

#[derive(Serialize)]
struct ReproReport {
    problem: ProblemId,
    iterations: usize,
    eps: f64,
    rows: Vec<ReproRow>,
}

fn repro(a: ReproArgs) -> std::result::Result<(), Failure> {
    if a.seeds == 0 || a.rays.is_empty() || a.scalars.is_empty() {
        return Err(usage("need at least one seed, ray count and scalarization"));
    }
    let problem = ProblemSpec::new(a.table.problem())?;
    let eps = default_eps(problem.m);
    let oracle_cfg = OracleConfig::default();
    let mut rows = Vec::new();
    for &kind in &a.scalars {
        let mut cfg = RunConfig::phn(&problem, kind);
        cfg.iterations = a.iters;
        let models = (0..a.seeds)
            .into_par_iter()
            .map(|seed| {
                let mut c = cfg.clone();
                c.seed = seed;
                let mut t = Trainer::new_phn(c)?;
                t.run_until(usize::MAX)?;
                Ok(t.finish()?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        for &count in &a.rays {
            let rays = interior_rays(problem.m, count, eps)?;
            let targets = med_targets(&problem, &cfg.scalarization, &rays, &oracle_cfg)?;
            let meds = models
                .par_iter()
                .map(|model| {
                    let preds = predict_all(&problem, model, &rays)?;
                    let (p, t): (Vec<Vec<f64>>, Vec<Vec<f64>>) = preds
                        .iter()
                        .zip(&targets.targets)
                        .filter_map(|(p, t)| t.as_ref().map(|t| (p.objectives.clone(), t.clone())))
                        .unzip();
                    Ok(mean_std(&distances(&p, &t)?).0)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (med_mean, med_std) = mean_std(&meds);
            rows.push(ReproRow {
                scalarization: kind,
                rays: rays.len(),
                med_mean,
                med_std,
                seeds: meds.len(),
                not_converged: targets.not_converged,
            });
        }
    }

    let mut table = format!(
        "| rays | {} |\n|---|{}\n",
        a.scalars.iter().map(|k| k.name()).collect::<Vec<_>>().join(" | "),
        "---|".repeat(a.scalars.len())
    );
    for &count in &a.rays {
        let cells: Vec<String> = a
            .scalars
            .iter()
            .map(|&k| {
                rows.iter()
                    .find(|r| r.scalarization == k && r.rays == count)
                    .map_or("-".into(), |r| format!("{:.4} ± {:.4}", r.med_mean, r.med_std))
            })
            .collect();
        let _ = writeln!(table, "| {count} | {} |", cells.join(" | "));
    }
    print!("{table}");
    if let Some(path) = &a.out {
        let report = ReproReport {
            problem: problem.id,
            iterations: a.iters,
            eps,
            rows,
        };
        fs::write(path, serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n").map_err(Error::from)?;
    }
    Ok(())
}
