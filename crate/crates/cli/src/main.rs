use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qkd_postselect::decoy::{decoy_all_bounds, DecoyObservations, IntensitySet};
use qkd_postselect::sweep::{emit_csv, emit_svg, run_sweep, Mode, SweepConfig, SweepRow};
use qkd_postselect::Error;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "qkd-ps",
    version,
    about = "Finite-size key rates with the postselection technique"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate versus distance for the configured analysis modes.
    Sweep(SweepArgs),
    /// Decoy-state bounds on photon-number-resolved yields.
    Decoy(DecoyArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Configuration file; built-in defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination (overrides the config); stdout when neither is set.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_svg: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated mode names.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    /// Comma-separated distances in km.
    #[arg(long, value_delimiter = ',')]
    distances: Option<Vec<f64>>,
}

#[derive(Args)]
struct DecoyArgs {
    /// CSV with header `outcome,signal,intensity,frequency`.
    #[arg(long)]
    observations: PathBuf,
    /// Comma-separated mean photon numbers.
    #[arg(long, value_delimiter = ',', required = true)]
    intensities: Vec<f64>,
    /// Photon-number cutoff N.
    #[arg(long, default_value_t = 3)]
    cutoff: u32,
    /// Index of the signal intensity within `--intensities`.
    #[arg(long, default_value_t = 0)]
    signal_intensity: usize,
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(path) => SweepConfig::from_path(path)?,
        None => SweepConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(modes) = &args.modes {
        cfg.modes = modes.iter().map(|m| Mode::parse(m)).collect::<Result<_, _>>()?;
    }
    if let Some(d) = args.distances {
        cfg.distances_km = d;
    }
    if args.out_csv.is_some() {
        cfg.output.csv = args.out_csv;
    }
    if args.out_svg.is_some() {
        cfg.output.svg = args.out_svg;
    }
    cfg.validate()?;

    let rows = run_sweep(&cfg)?;
    match &cfg.output.csv {
        Some(path) => emit_csv(&rows, path)?,
        None => write_stdout_csv(&rows)?,
    }
    if let Some(path) = &cfg.output.svg {
        emit_svg(&rows, path)?;
    }
    Ok(())
}

fn stdout_io(source: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn write_stdout_csv(rows: &[SweepRow]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    for r in rows {
        w.serialize(r).map_err(|source| Error::Csv {
            path: PathBuf::from("<stdout>"),
            source,
        })?;
    }
    w.flush().map_err(stdout_io)
}

fn decoy(args: DecoyArgs) -> Result<(), Error> {
    let set = IntensitySet::new(args.intensities, args.cutoff, args.signal_intensity)?;
    let obs = DecoyObservations::from_csv(&args.observations, &set)?;
    let bounds = decoy_all_bounds(&obs, &set)?;
    let out: Vec<_> = bounds
        .iter()
        .map(|(t, b)| {
            json!({
                "outcome": t.outcome,
                "signal": t.signal,
                "photons": t.photons,
                "lo": b.lo,
                "hi": b.hi,
            })
        })
        .collect();
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", serde_json::Value::Array(out)).map_err(stdout_io)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Decoy(a) => decoy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string(), "kind": e.kind() }));
            ExitCode::FAILURE
        }
    }
}
