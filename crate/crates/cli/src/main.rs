use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use admil::config::{ConfigFile, Format};
use admil::harness::{self, ExperimentSpec, RateTable};
use admil::schemes::{run_transformed, Mode, StepController};
use admil::transform::{transform_problem, Limit};
use admil::{validate_problem, BrownianPath, Error, SdeProblem};

/// Adaptive quasi-Milstein schemes for SDEs with discontinuous drift.
#[derive(Debug, Parser)]
#[command(name = "admil", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Step-size regime; overrides the config.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the assumptions on the configured problem.
    Validate,
    /// Inspect the transform G.
    Transform {
        /// Sample points for the G' and round-trip checks.
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
    },
    /// Write one trajectory of the transformed adaptive scheme.
    Simulate {
        #[arg(long)]
        delta: f64,
    },
    /// Strong-error experiment.
    Convergence,
    /// Cost experiment.
    Cost,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Theory,
    Clamped,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Theory => Mode::Theory,
            ModeArg::Clamped => Mode::Clamped,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Assumption(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Assumption(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::InvalidExperiment(_)
            | Error::InadmissibleDelta { .. }
            | Error::InadmissibleNu { .. }
            | Error::InvalidParameter(_) => Failure::Config(e.to_string()),
            Error::DegenerateDiffusion { .. } => Failure::Assumption(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

struct Context {
    cli: Cli,
    config: ConfigFile,
}

impl Context {
    fn load(cli: Cli) -> Result<Self, Failure> {
        let path = cli
            .config
            .clone()
            .ok_or_else(|| Failure::Config("--config is required".into()))?;
        let src = fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let config = ConfigFile::from_json_str(&src)?;
        Ok(Self { cli, config })
    }

    fn problem(&self) -> Result<SdeProblem, Failure> {
        Ok(self.config.problem()?)
    }

    fn mode(&self) -> Mode {
        self.cli
            .mode
            .map(Mode::from)
            .or(self.config.experiment.as_ref().map(|e| e.mode))
            .unwrap_or_default()
    }

    fn seed(&self) -> u64 {
        self.cli
            .seed
            .or(self.config.experiment.as_ref().map(|e| e.seed))
            .unwrap_or(0)
    }

    fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self
            .cli
            .out
            .clone()
            .or_else(|| self.config.output.as_ref().and_then(|o| o.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
        Ok(dir)
    }

    fn wants(&self, f: Format) -> bool {
        self.config.output.as_ref().is_none_or(|o| o.formats.contains(&f))
    }

    fn experiment(&self) -> Result<ExperimentSpec, Failure> {
        let mut spec = self.config.experiment_spec()?;
        spec.plan.seed = self.seed();
        spec.plan.mode = self.mode();
        spec.threads = self.cli.threads;
        Ok(spec)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_failure(path, e))
}

fn cmd_validate(ctx: &Context) -> Result<(), Failure> {
    let p = ctx.problem()?;
    let report = validate_problem(&p);
    print!("{report}");
    if report.passed() {
        println!("all checks passed");
        Ok(())
    } else {
        let names: Vec<String> = report.failures().map(|c| c.assumption.to_string()).collect();
        Err(Failure::Assumption(format!("failed: {}", names.join(", "))))
    }
}

fn cmd_transform(ctx: &Context, grid: usize) -> Result<(), Failure> {
    let p = ctx.problem()?;
    let tp = transform_problem(&p, ctx.config.nu())?;
    let params = tp.params();
    if tp.is_identity() {
        println!("identity transform (drift is continuous)");
    }
    println!("alpha = {:?}", params.alpha());
    println!("rho   = {}", params.rho());
    println!("nu    = {}", params.nu());
    let z = params.z();
    let (lo, hi) = match (z.first(), z.last()) {
        (Some(&a), Some(&b)) => (a - 2.0 * params.nu(), b + 2.0 * params.nu()),
        _ => (p.x0() - 1.0, p.x0() + 1.0),
    };
    let n = grid.max(2);
    println!(
        "min G' on [{lo}, {hi}] ({n} points) = {}",
        params.min_g_prime(lo, hi, n)
    );
    let mut residual: f64 = 0.0;
    for j in 0..n {
        let x = lo + (hi - lo) * j as f64 / (n - 1) as f64;
        residual = residual.max((tp.inverse(tp.forward(x))? - x).abs());
    }
    println!("max round-trip residual = {residual:e}");
    for (i, &xi) in z.iter().enumerate() {
        let (l, r) = tp.drift_limits_at(i);
        let g2l = params.g_second(xi, Limit::Left)?;
        let g2r = params.g_second(xi, Limit::Right)?;
        println!(
            "xi = {xi}: transformed drift limits ({l}, {r}), jump residual {:e}; G'' limits ({g2l}, {g2r})",
            (l - r).abs()
        );
    }
    Ok(())
}

fn cmd_simulate(ctx: &Context, delta: f64) -> Result<(), Failure> {
    let p = ctx.problem()?;
    let mode = ctx.mode();
    let seed = ctx.seed();
    let mut path = BrownianPath::new(seed, 0);
    let tp = transform_problem(&p, ctx.config.nu())?;
    let ctrl = StepController::new(delta, p.eps0(), p.theta(), mode)?;
    let run = run_transformed(&tp, &ctrl, &mut path)?;
    let dir = ctx.out_dir()?;
    let csv = dir.join("trajectory.csv");
    let mut out = create(&csv)?;
    let write = |out: &mut BufWriter<fs::File>| -> Result<(), Failure> {
        for (i, (t, z)) in run.z.nodes().enumerate() {
            let x = if i == 0 { p.x0() } else { tp.inverse(z)? };
            writeln!(out, "{t},{x}").map_err(|e| io_failure(&csv, e))?;
        }
        out.flush().map_err(|e| io_failure(&csv, e))
    };
    write(&mut out)?;
    let meta = json!({
        "cost": run.cost(),
        "x_final": run.x_final,
        "delta": delta,
        "seed": seed,
        "mode": mode,
        "mode_label": mode.label(),
        "nu": tp.params().nu(),
    });
    let js = dir.join("trajectory.json");
    fs::write(&js, serde_json::to_string_pretty(&meta).expect("json")).map_err(|e| io_failure(&js, e))?;
    println!("N = {}, X_1 = {}, mode = {}", run.cost(), run.x_final, mode.label());
    println!("wrote {}", csv.display());
    println!("wrote {}", js.display());
    Ok(())
}

fn print_table(t: &RateTable, with_error: bool) {
    println!("method {}, mode {}, {} paths", t.method.name(), t.mode.label(), t.paths);
    for r in &t.rows {
        if with_error {
            println!(
                "  {:>12} E[N] = {:>12.1}  error = {:.4e} ± {:.2e}",
                r.resolution, r.mean_cost, r.error_lp, r.error_stderr
            );
        } else {
            let [a, b, c] = r.branch_fractions;
            println!(
                "  delta = {:<12e} E[N] = {:>12.1}  E[N]*delta = {:.3}  max N = {}  zones {a:.3}/{b:.3}/{c:.3}",
                r.delta,
                r.mean_cost,
                r.cost_times_delta(),
                r.max_cost
            );
        }
    }
}

fn echo(ctx: &Context, spec: &ExperimentSpec) -> serde_json::Value {
    let mut cfg = ctx.config.clone();
    cfg.experiment = Some(spec.plan.clone());
    serde_json::to_value(&cfg).expect("config serializes")
}

fn write_outputs(
    ctx: &Context,
    spec: &ExperimentSpec,
    table: &RateTable,
    name: &str,
    csv_writer: fn(&RateTable, &mut BufWriter<fs::File>) -> admil::Result<()>,
) -> Result<(), Failure> {
    let dir = ctx.out_dir()?;
    if ctx.wants(Format::Csv) {
        let path = dir.join(format!("{name}.csv"));
        let mut out = create(&path)?;
        csv_writer(table, &mut out)?;
        out.flush().map_err(|e| io_failure(&path, e))?;
        println!("wrote {}", path.display());
    }
    if ctx.wants(Format::Json) {
        let path = dir.join(format!("{name}.json"));
        let js = harness::summary_json(std::slice::from_ref(table), echo(ctx, spec));
        fs::write(&path, serde_json::to_string_pretty(&js).expect("json")).map_err(|e| io_failure(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_convergence(ctx: &Context) -> Result<(), Failure> {
    let spec = ctx.experiment()?;
    let table = harness::estimate_error(&spec)?;
    print_table(&table, true);
    match (table.fit_delta, table.fit_cost) {
        (Some(d), Some(c)) => {
            println!("slope vs delta: {:.4} (r2 {:.4})", d.slope, d.r2);
            println!("slope vs mean cost: {:.4} (r2 {:.4})", c.slope, c.r2);
        }
        _ => println!("slopes unavailable (fewer than 3 resolutions or zero error)"),
    }
    write_outputs(ctx, &spec, &table, "convergence", |t, w| harness::write_rate_csv(t, w))
}

fn cmd_cost(ctx: &Context) -> Result<(), Failure> {
    let spec = ctx.experiment()?;
    let table = harness::cost_profile(&spec)?;
    print_table(&table, false);
    write_outputs(ctx, &spec, &table, "cost", |t, w| harness::write_cost_csv(t, w))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = Context::load(cli)?;
    match ctx.cli.command {
        Command::Validate => cmd_validate(&ctx),
        Command::Transform { grid } => cmd_transform(&ctx, grid),
        Command::Simulate { delta } => cmd_simulate(&ctx, delta),
        Command::Convergence => cmd_convergence(&ctx),
        Command::Cost => cmd_cost(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Assumption(m) => ("assumption failure", m),
                Failure::Config(m) => ("config error", m),
                Failure::Runtime(m) => ("runtime failure", m),
            };
            eprintln!("admil: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
