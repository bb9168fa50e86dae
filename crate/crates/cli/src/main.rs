//! `wdm-dbp` command line front-end.
//!
//! Every subcommand reads one TOML experiment file (`--config`, defaults
//! built in when omitted) and writes into the output directory (`--out`,
//! else `output.dir` of the config). Exit codes: 0 success, 2 configuration
//! error, 3 numerical failure, 4 I/O or file format error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wdm_dbp::dbp::{DbpConfig, Method};
use wdm_dbp::experiment::{
    complexity_table, evaluate, is_trainable, report_rows, run_sweep, simulate, sweep_rows, train,
    write_complexity, write_results, ExperimentConfig, Role, SignalFile, TrainedModel,
};
use wdm_dbp::optimizer::CoefficientFile;
use wdm_dbp::Error;

#[derive(Parser, Debug)]
#[command(name = "wdm-dbp", version, about = "WDM fiber link simulation and digital backpropagation")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate transmission and store the received field.
    Simulate(SimulateArgs),
    /// Train the equalizer parameters on a training field.
    Train(TrainArgs),
    /// Equalize a field and append GMI/NMSE rows to the results table.
    Evaluate(EvaluateArgs),
    /// Full sweep over methods, step counts and launch powers.
    Sweep,
    /// Write the complexity table.
    Complexity,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    Eval,
    Train,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Which frame to generate: the evaluation frame or the shorter
    /// training frame.
    #[arg(long, value_enum, default_value = "eval")]
    role: RoleArg,
    /// Launch power per channel in dBm (default: `tx.launch_power_dbm`, or
    /// the training power for the training frame).
    #[arg(long, allow_negative_numbers = true)]
    power: Option<f64>,
    /// Output file (default: `output.field` or `output.train_field`).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MethodArgs {
    /// DBP method, overriding `dbp.method`.
    #[arg(long)]
    method: Option<Method>,
    /// Total DBP steps, overriding `dbp.n_steps`.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    dbp: MethodArgs,
    /// Training field (default: `output.train_field`).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Coefficient file to warm-start from.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Output file (default: `output.coefficients`).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    dbp: MethodArgs,
    /// Field to equalize (default: `output.field`).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Trained parameters (default: `output.coefficients` for methods that
    /// need them).
    #[arg(long)]
    coefficients: Option<PathBuf>,
}

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Context {
    fn path(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out.join(name))
    }

    fn dbp(&self, args: &MethodArgs) -> Result<DbpConfig, Error> {
        let mut dbp = self.cfg.dbp.clone();
        if let Some(m) = args.method {
            dbp.method = m;
        }
        if let Some(n) = args.steps {
            dbp.n_steps = n;
        }
        dbp.validate()?;
        Ok(dbp)
    }

    fn create_out(&self) -> Result<(), Error> {
        fs::create_dir_all(&self.out)?;
        Ok(())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => 3,
        Error::Io(_) | Error::Format(_) => 4,
        _ => 2,
    }
}

fn create_parent(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => Ok(fs::create_dir_all(p)?),
        _ => Ok(()),
    }
}

fn cmd_simulate(ctx: &Context, args: &SimulateArgs) -> Result<(), Error> {
    let cfg = &ctx.cfg;
    let (role, power, name) = match args.role {
        RoleArg::Eval => (
            Role::Evaluation,
            args.power.unwrap_or(cfg.tx.launch_power_dbm),
            &cfg.output.field,
        ),
        RoleArg::Train => (
            Role::Training,
            args.power.unwrap_or_else(|| cfg.train_power_dbm()),
            &cfg.output.train_field,
        ),
    };
    let path = ctx.path(&args.output, name);
    let file = simulate(cfg, role, power)?;
    create_parent(&path)?;
    file.write(&path)?;
    println!(
        "wrote {}: {} channels, {} symbols each, {} samples at {:.4} GS/s, {power} dBm per channel",
        path.display(),
        file.tx.n_channels,
        file.frame.n_symbols(),
        file.field().len(),
        file.field().sample_rate() / 1e9
    );
    Ok(())
}

fn cmd_train(ctx: &Context, args: &TrainArgs) -> Result<(), Error> {
    let cfg = &ctx.cfg;
    let dbp = ctx.dbp(&args.dbp)?;
    if !is_trainable(dbp.method) {
        eprintln!("warning: {} has no trainable parameters; nothing written", dbp.method);
        return Ok(());
    }
    let field = SignalFile::read(&ctx.path(&args.field, &cfg.output.train_field))?;
    let start = match &args.init {
        Some(p) => Some(TrainedModel::from_file(&CoefficientFile::read(p)?)),
        None => None,
    };
    let model = train(cfg, &dbp, &field, start.as_ref())?.expect("trainable method yields a model");
    let path = ctx.path(&args.output, &cfg.output.coefficients);
    create_parent(&path)?;
    model.to_file(&cfg.link.link()?).write(&path)?;
    let report = model.report.as_ref().expect("fresh model has a report");
    println!(
        "{} N_s={}: MSE {:.6e} -> {:.6e}, wrote {}",
        dbp.method,
        dbp.n_steps,
        report.initial_mse,
        report.final_mse,
        path.display()
    );
    Ok(())
}

fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<(), Error> {
    let cfg = &ctx.cfg;
    let dbp = ctx.dbp(&args.dbp)?;
    let field = SignalFile::read(&ctx.path(&args.field, &cfg.output.field))?;
    let model = if is_trainable(dbp.method) || args.coefficients.is_some() {
        let path = ctx.path(&args.coefficients, &cfg.output.coefficients);
        Some(TrainedModel::from_file(&CoefficientFile::read(&path)?))
    } else {
        None
    };
    let report = evaluate(cfg, &dbp, &field, model.as_ref())?;
    ctx.create_out()?;
    let path = ctx.out.join(&cfg.output.results);
    write_results(&path, &report_rows(&report, false), true)?;
    println!(
        "{} N_s={} at {} dBm: GMI {:.4} bits/4D, NMSE {:.2} dB",
        dbp.method,
        dbp.n_steps,
        report.power_dbm,
        report.avg_gmi(),
        report.avg_nmse_db()
    );
    Ok(())
}

fn cmd_sweep(ctx: &Context) -> Result<(), Error> {
    let cfg = &ctx.cfg;
    let cells = run_sweep(cfg, &|msg| eprintln!("{msg}"))?;
    ctx.create_out()?;
    let path = ctx.out.join(&cfg.output.results);
    write_results(&path, &sweep_rows(&cells), false)?;
    println!("method,N_s,peak_power_dBm,peak_gmi_bits_per_4D");
    for c in &cells {
        let r = c.sweep.peak_report();
        println!("{},{},{},{:.4}", c.method, c.n_steps, r.power_dbm, r.avg_gmi());
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_complexity(ctx: &Context) -> Result<(), Error> {
    let rows = complexity_table(&ctx.cfg)?;
    ctx.create_out()?;
    let path = ctx.out.join(&ctx.cfg.output.complexity);
    write_complexity(&path, &rows)?;
    for r in &rows {
        println!(
            "{:<9} N_s={:<4} {:>12} = {:.1}",
            r.method, r.n_steps, r.real_mults_exact, r.real_mults_per_4d
        );
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn load(cli: &Cli) -> Result<Context, Error> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            ExperimentConfig::from_toml_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok(Context { cfg, out })
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let ctx = load(cli)?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Complexity => cmd_complexity(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
