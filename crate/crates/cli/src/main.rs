use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use mousse_core::changepoint::{arl_approx, select_variant, threshold_for_arl, NuVariant};
use mousse_core::datagen::sample_stream;
use mousse_core::harness::io::{write_stream_header, write_stream_row, write_truth};
use mousse_core::harness::{arl_row, delay_row, run_stream, Mode, RecordWriter, RunConfig, StreamReader};
use mousse_core::MousseError;

#[derive(Parser, Debug)]
#[command(name = "mousse", version, about = "Multiscale online submanifold tracking and change-point detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Configuration file of key = value lines
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set mousse.alpha=0.95
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    horizon: Option<u64>,

    #[arg(long)]
    trials: Option<usize>,

    /// Main output file; stdout when absent
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic stream file
    Simulate {
        #[command(flatten)]
        common: Common,
        /// JSON-lines file with the hidden truth of every row
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Track a stream file and run the detector; writes per-step records
    Track {
        /// Stream file, or - for stdin
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Summary JSON; stderr when absent
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Analytic threshold for a target run length under both variants of nu
    Threshold {
        #[arg(long, default_value_t = 1000.0)]
        arl: f64,
    },
    /// Monte Carlo run length on change-free streams
    McArl {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
    },
    /// Monte Carlo detection delay on streams with a jump, both methods
    McDelay {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Mousse,
    SingleSubspace,
    Both,
}

enum Failure {
    Config(String),
    Data(String),
}

impl Failure {
    fn data(err: MousseError) -> Self {
        match err {
            MousseError::InvalidConfig(_) | MousseError::NoBracket { .. } => Failure::Config(err.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }

    fn config(err: impl std::fmt::Display) -> Self {
        Failure::Config(err.to_string())
    }

    fn io(path: &Path, err: io::Error) -> Self {
        Failure::Data(format!("{}: {err}", path.display()))
    }
}

type Outcome<T> = Result<T, Failure>;

fn load_config(common: &Common) -> Outcome<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    }
    for pair in &common.overrides {
        cfg.apply_pair(pair).map_err(Failure::config)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    if let Some(n) = common.trials {
        cfg.trials = n;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn output(path: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Outcome<()> {
    let mut w = output(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| Failure::Data(e.to_string()))
}

fn simulate(common: &Common, truth: Option<&Path>) -> Outcome<()> {
    let cfg = load_config(common)?;
    cfg.validate().map_err(Failure::config)?;
    let spec = cfg.manifold.spec(cfg.seed);
    let dim = spec.dim;
    let mut out = output(common.out.as_deref())?;
    let mut truth_out = truth.map(create).transpose()?;
    let init = spec.training_batch(cfg.n_init).map_err(Failure::data)?;
    let stream = sample_stream(spec, cfg.horizon).map_err(Failure::data)?;
    write_stream_header(&mut out, dim).map_err(Failure::data)?;
    for sample in init.into_iter().chain(stream) {
        write_stream_row(&mut out, &sample.obs, dim).map_err(Failure::data)?;
        if let Some(w) = truth_out.as_mut() {
            write_truth(w, &sample.truth).map_err(Failure::data)?;
        }
    }
    out.flush().map_err(|e| Failure::Data(e.to_string()))?;
    if let Some(mut w) = truth_out {
        w.flush().map_err(|e| Failure::Data(e.to_string()))?;
    }
    info!("wrote {} initialization rows and {} stream rows", cfg.n_init, cfg.horizon);
    Ok(())
}

fn track(input: &Path, common: &Common, summary: Option<&Path>) -> Outcome<()> {
    let mut cfg = load_config(common)?;
    let reader: Box<dyn BufRead> = if input == Path::new("-") {
        Box::new(BufReader::new(io::stdin().lock()))
    } else {
        Box::new(BufReader::new(File::open(input).map_err(|e| Failure::io(input, e))?))
    };
    let mut stream = StreamReader::new(reader).map_err(Failure::data)?;
    cfg.manifold.dim = stream.dim();
    cfg.validate().map_err(Failure::config)?;
    let rows = std::iter::from_fn(|| stream.next_observation(0).transpose());
    let mut records = RecordWriter::new(output(common.out.as_deref())?).map_err(Failure::data)?;
    let result = run_stream(&cfg, rows, |rec| records.write(rec)).map_err(Failure::data)?;
    records.into_inner().map_err(Failure::data)?;
    match summary {
        Some(p) => write_json(Some(p), &result),
        None => {
            let text = serde_json::to_string_pretty(&result).map_err(|e| Failure::Data(e.to_string()))?;
            eprintln!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ThresholdReport {
    arl_target: f64,
    selected: &'static str,
    thresholds: Vec<VariantThreshold>,
}

#[derive(Serialize)]
struct VariantThreshold {
    variant: &'static str,
    b: f64,
    arl_at_b: f64,
    reproduces_reference: bool,
}

fn threshold(arl: f64) -> Outcome<()> {
    let (selected, report) = select_variant();
    let mut thresholds = Vec::new();
    for v in NuVariant::ALL {
        let b = threshold_for_arl(arl, v).map_err(Failure::data)?;
        thresholds.push(VariantThreshold {
            variant: v.name(),
            b,
            arl_at_b: arl_approx(b, v),
            reproduces_reference: report.iter().any(|r| r.variant == v && r.passes),
        });
    }
    write_json(
        None,
        &ThresholdReport {
            arl_target: arl,
            selected: selected.name(),
            thresholds,
        },
    )
}

fn mc_arl(common: &Common, method: Method) -> Outcome<()> {
    let cfg = load_config(common)?;
    cfg.validate().map_err(Failure::config)?;
    let modes: &[Mode] = match method {
        Method::Mousse => &[Mode::Mousse],
        Method::SingleSubspace => &[Mode::SingleSubspace],
        Method::Both => &[Mode::Mousse, Mode::SingleSubspace],
    };
    let rows = modes
        .iter()
        .map(|&m| arl_row(&cfg, m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::data)?;
    write_json(common.out.as_deref(), &rows)
}

fn mc_delay(common: &Common) -> Outcome<()> {
    let cfg = load_config(common)?;
    cfg.validate().map_err(Failure::config)?;
    let row = delay_row(&cfg).map_err(Failure::data)?;
    write_json(common.out.as_deref(), &row)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, truth } => simulate(common, truth.as_deref()),
        Command::Track {
            input,
            common,
            summary,
        } => track(input, common, summary.as_deref()),
        Command::Threshold { arl } => threshold(*arl),
        Command::McArl { common, method } => mc_arl(common, *method),
        Command::McDelay { common } => mc_delay(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("data error: {msg}");
            ExitCode::from(3)
        }
    }
}
