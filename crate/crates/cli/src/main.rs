use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;

use lsdqn_core::io::{self, Meta};
use lsdqn_core::lsdqn::{ablation_experiment, periodic_eval_run, run};
use lsdqn_core::stats::compare_curves;
use lsdqn_core::{Config, Error};

#[derive(Parser)]
#[command(
    name = "lsdqn",
    version,
    about = "DQN with least-squares last-layer updates"
)]
struct Cli {
    /// Config file of `key = value` lines; defaults apply to missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, created if needed.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write the learning curve, update diagnostics and final network.
    Train,
    /// Probe last-layer solves at every epoch across the lambda grid.
    PeriodicEval,
    /// Compare the full-batch solve with ADAM on frozen checkpoints.
    Ablate,
    /// Compare learning curves; the first file is the baseline.
    Report {
        #[arg(required = true, num_args = 2..)]
        curves: Vec<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let cfg = match cli.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_manifest(dir: &Path, cfg: &Config, command: &str, seconds: f64) -> Result<(), Failure> {
    let mut out = create(dir, "manifest.txt")?;
    writeln!(out, "# command = {command}")?;
    writeln!(out, "# config_hash = {}", cfg.hash())?;
    writeln!(out, "# seed = {}", cfg.run.seed)?;
    writeln!(out, "# wall_clock_seconds = {seconds:.3}")?;
    out.write_all(cfg.resolved().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn meta(cfg: &Config) -> Meta {
    Meta::new(&cfg.hash(), cfg.run.seed)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", cli.out.display())))?;
    let started = Instant::now();
    let name = match &cli.command {
        Command::Train => {
            let output = run(&cfg.run)?;
            let label = cfg.run.label();
            io::write_curve(
                create(&cli.out, "curve.csv")?,
                &meta(&cfg).with("label", &label),
                &output.curve,
            )?;
            io::write_diagnostics(
                create(&cli.out, "diagnostics.csv")?,
                &meta(&cfg),
                &output.diagnostics,
            )?;
            let mut ckpt = create(&cli.out, "checkpoint.bin")?;
            output.net.write_checkpoint(&mut ckpt)?;
            ckpt.flush()?;
            if let Some(last) = output.curve.final_mean_return() {
                println!("{label}: final mean return {last:.4}");
            }
            "train"
        }
        Command::PeriodicEval => {
            let table = periodic_eval_run(&cfg.periodic_config())?;
            io::write_periodic(create(&cli.out, "periodic.csv")?, &meta(&cfg), &table)?;
            println!(
                "{} epochs x {} columns",
                table.epochs.len(),
                table.columns.len()
            );
            "periodic-eval"
        }
        Command::Ablate => {
            let rows = ablation_experiment(&cfg.ablation_config())?;
            io::write_ablation(create(&cli.out, "ablation.csv")?, &meta(&cfg), &rows)?;
            println!("{} ablation rows", rows.len());
            "ablate"
        }
        Command::Report { curves } => {
            let mut loaded = Vec::new();
            for path in curves {
                let file = File::open(path).map_err(|e| {
                    Failure::Runtime(format!("cannot open {}: {e}", path.display()))
                })?;
                let (_, mut curve) = io::read_curve(BufReader::new(file))?;
                if curve.label == "curve" {
                    curve.label = path.display().to_string();
                }
                loaded.push(curve);
            }
            let rows = compare_curves(&loaded)?;
            io::write_report(create(&cli.out, "report.csv")?, &meta(&cfg), &rows)?;
            for r in &rows {
                let p = match (&r.wilcoxon, r.label == rows[0].label) {
                    (Some(w), _) => format!(
                        "p = {:.4e} (W = {}, n = {})",
                        w.p_value, w.statistic, w.n_effective
                    ),
                    (None, true) => "baseline".to_string(),
                    (None, false) => "p undefined (too few non-zero pairs)".to_string(),
                };
                println!(
                    "{:<24} max {:>10.4}  final {:>10.4}  {p}",
                    r.label, r.max_score, r.final_score
                );
            }
            "report"
        }
    };
    let seconds = started.elapsed().as_secs_f64();
    info!("{name} finished in {seconds:.1} s");
    write_manifest(&cli.out, &cfg, name, seconds)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
