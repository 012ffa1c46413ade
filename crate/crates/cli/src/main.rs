//! `npalf`: train, benchmark and inspect latent factor models from the shell.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use npalf_core::bench::bench;
use npalf_core::config::RunConfig;
use npalf_core::error::{ConfigError, TrainError};
use npalf_core::report::{emit_csv, sig10, write_aggregate, write_summary};
use npalf_core::synth::{low_rank, LowRankSpec};
use npalf_core::trainer::{cross_validate, load_dataset, train_on, Termination};
use npalf_core::{split_dataset, Format, HdiDataset};

#[derive(Parser)]
#[command(
    name = "npalf",
    version,
    about = "Latent factor analysis with nonlinear PID and particle swarm adaptation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one optimizer, or cross-validate it with --folds.
    Train(RunArgs),
    /// Train sgd, pid, npalf, adam, adadelta and rmsprop on the same split.
    Bench(RunArgs),
    /// Print M, N, the number of known entries and the density of a rating file.
    Inspect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "tsv")]
        format: String,
    },
    /// Write a seeded synthetic low-rank rating file in tsv format.
    Generate {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 150)]
        items: usize,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long, default_value_t = 0.05)]
        density: f64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Run settings. Flags override values loaded with --config.
#[derive(Args)]
struct RunArgs {
    /// Key-value settings file (`key = value` per line, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rating file, one `user item rating` triple per line.
    #[arg(long)]
    data: Option<PathBuf>,
    /// tsv, colons or csv
    #[arg(long)]
    format: Option<String>,
    /// sgd, pid, npid, npalf, adam, adadelta or rmsprop
    #[arg(long)]
    optimizer: Option<String>,
    /// Latent dimension f (default 20).
    #[arg(long)]
    rank: Option<usize>,
    /// Learning rate (default 0.04).
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// Regularization coefficient (default 0.05).
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Seeds the split, the initial factors, the visit order and the swarm.
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch cap (default 1000).
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Stop once validation RMSE changes by less than this between epochs (default 1e-5).
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// train:validation:test weights, e.g. 7:1:2
    #[arg(long)]
    split: Option<String>,
    /// Cross-validate over this many folds instead of one split.
    #[arg(long)]
    folds: Option<usize>,
    /// Reshuffled repetitions of the fold partition (default 1).
    #[arg(long)]
    repeats: Option<usize>,
    /// Particles per swarm for npalf (default 8).
    #[arg(long)]
    swarm_size: Option<usize>,
    /// rmse or mae
    #[arg(long)]
    fitness: Option<String>,
    /// Output directory for curve.csv and summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write 0 in every seconds column so output files are reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        let path = |p: Option<PathBuf>| p.map(|p| p.display().to_string());
        let flags = [
            ("data", path(self.data)),
            ("format", self.format),
            ("optimizer", self.optimizer),
            ("rank", self.rank.map(|v| v.to_string())),
            ("eta", self.eta.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("max_epochs", self.max_epochs.map(|v| v.to_string())),
            ("tol", self.tol.map(|v| v.to_string())),
            ("split", self.split),
            ("folds", self.folds.map(|v| v.to_string())),
            ("repeats", self.repeats.map(|v| v.to_string())),
            ("swarm_size", self.swarm_size.map(|v| v.to_string())),
            ("fitness", self.fitness),
            ("out", path(self.out)),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.no_timing {
            cfg.timing = false;
        }
        if cfg.data.is_none() {
            return Err(ConfigError::BadValue {
                key: "data".into(),
                value: String::new(),
                reason: "a rating file is required".into(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Config(String),
    Diverged(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Diverged(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Param(p) => Failure::Config(p.to_string()),
            TrainError::Diverged { .. } | TrainError::SwarmDiverged => {
                Failure::Diverged(e.to_string())
            }
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(cfg: &RunConfig) -> Result<HdiDataset, Failure> {
    Ok(load_dataset(cfg)?)
}

fn train(cfg: RunConfig) -> Result<(), Failure> {
    let dataset = load(&cfg)?;
    let stdout = io::stdout();
    if cfg.folds.is_some() {
        let cv = cross_validate(&cfg, &dataset)?;
        for (i, fold) in cv.folds.iter().enumerate() {
            if let Err(e) = fold {
                eprintln!("warning: split {i} excluded: {e}");
            }
        }
        write_aggregate(stdout.lock(), &cv)?;
        if let Some(dir) = &cfg.out {
            std::fs::create_dir_all(dir)?;
            write_aggregate(File::create(dir.join("aggregate.csv"))?, &cv)?;
            let done: Vec<_> = cv.folds.iter().filter_map(|f| f.as_ref().ok()).collect();
            write_summary(File::create(dir.join("summary.csv"))?, done)?;
        }
        if cv.completed() == 0 {
            return Err(Failure::Diverged("every split diverged".into()));
        }
        return Ok(());
    }

    let split = split_dataset(&dataset, cfg.split, cfg.seed).map_err(TrainError::from)?;
    let run = train_on(&cfg, &dataset, &split)?;
    if let Some(dir) = &cfg.out {
        emit_csv(&run.records, &run.summary, dir)?;
    }
    write_summary(stdout.lock(), [&run.summary])?;
    if run.summary.termination == Termination::Diverged {
        let why = run.divergence.unwrap_or_else(|| "diverged".into());
        return Err(Failure::Diverged(why));
    }
    Ok(())
}

fn run_bench(cfg: RunConfig) -> Result<(), Failure> {
    let dataset = load(&cfg)?;
    let split = split_dataset(&dataset, cfg.split, cfg.seed).map_err(TrainError::from)?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    let rows = bench(&cfg, &dataset, &split, &out)?;
    write_summary(io::stdout().lock(), &rows)?;
    for r in rows
        .iter()
        .filter(|r| r.termination == Termination::Diverged)
    {
        eprintln!("warning: {} diverged", r.optimizer);
    }
    Ok(())
}

fn inspect(data: PathBuf, format: &str) -> Result<(), Failure> {
    let format: Format = format
        .parse()
        .map_err(|e: npalf_core::DataError| Failure::Config(e.to_string()))?;
    if !data.exists() {
        return Err(ConfigError::MissingFile(data.display().to_string()).into());
    }
    let ds = load(&RunConfig {
        data: Some(data),
        format,
        ..RunConfig::default()
    })?;
    let mut out = io::stdout().lock();
    writeln!(out, "users (M)    {}", ds.n_users())?;
    writeln!(out, "items (N)    {}", ds.n_items())?;
    writeln!(out, "known |L|    {}", ds.len())?;
    writeln!(out, "density      {}", sig10(ds.density()))?;
    Ok(())
}

fn generate(spec: LowRankSpec, seed: u64, out: PathBuf) -> Result<(), Failure> {
    let ds = low_rank(spec, seed).map_err(|e| Failure::Config(e.to_string()))?;
    let mut w = BufWriter::new(File::create(&out)?);
    ds.write_canonical(&mut w)?;
    w.flush()?;
    eprintln!("wrote {} ratings to {}", ds.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => args.into_config().map_err(Failure::from).and_then(train),
        Command::Bench(args) => args
            .into_config()
            .map_err(Failure::from)
            .and_then(run_bench),
        Command::Inspect { data, format } => inspect(data, &format),
        Command::Generate {
            users,
            items,
            rank,
            density,
            noise,
            seed,
            out,
        } => generate(
            LowRankSpec {
                n_users: users,
                n_items: items,
                rank,
                density,
                noise,
            },
            seed,
            out,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
