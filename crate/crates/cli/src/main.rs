//! `a2dtwp`: pack/unpack weight files, benchmark the codec, run training
//! experiments and summarize their profiles.
//!
//! Exit codes:
//!
//! | code | meaning                                                       |
//! |------|---------------------------------------------------------------|
//! | 0    | success                                                       |
//! | 1    | I/O or runtime failure                                        |
//! | 2    | usage error: bad flags, out-of-range values, invalid config   |
//! | 3    | malformed input: corrupt container, unparsable float or run files |
//! | 4    | `bench-codec` equivalence precheck failed                     |

mod bench;
mod floats;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use a2dtwp_core::codec::{self, decode_container, encode_container, CodecError, RoundTo};
use a2dtwp_core::config::{ConfigError, Mode, RunConfig};
use a2dtwp_core::run::{self, RunError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "a2dtwp", version, about = "Adaptive weight truncation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Truncate a float32 file into an ADT1 container.
    Pack(PackArgs),
    /// Expand an ADT1 container back to float32.
    Unpack(UnpackArgs),
    /// Check that all pack paths agree, then time them.
    BenchCodec(bench::BenchArgs),
    /// Train a classifier and write metrics, trace, ledger and profile.
    Train(TrainArgs),
    /// Per-phase profile of one run or a baseline/adaptive pair.
    Report(report::ReportArgs),
}

#[derive(Args)]
struct PackArgs {
    /// Raw little-endian float32 file, or text floats if the name ends in `.csv`.
    #[arg(long)]
    input: PathBuf,
    /// Bytes kept per weight.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    round_to: u8,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct UnpackArgs {
    #[arg(long)]
    input: PathBuf,
    /// Written as raw float32, or as text if the name ends in `.csv`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (TOML). Missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_defaults")]
    seed: Option<u64>,
    /// Overrides the config's mode: baseline, a2dtwp or oracle_fixed_bits(N).
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, required_unless_present = "print_defaults")]
    out: Option<PathBuf>,
    /// Print the default configuration and exit.
    #[arg(long)]
    print_defaults: bool,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MALFORMED: u8 = 3;
pub const EXIT_MISMATCH: u8 = 4;

impl Failure {
    pub fn new(code: u8, msg: impl fmt::Display) -> Self {
        Failure {
            code,
            msg: msg.to_string(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        use a2dtwp_core::data::DataError;
        use a2dtwp_core::transfer::TransferError;
        let code = match &e {
            RunError::Config(ConfigError::Io { .. }) => EXIT_RUNTIME,
            RunError::Config(_) => EXIT_USAGE,
            RunError::Data(DataError::Io(_)) => EXIT_RUNTIME,
            RunError::Data(_) => EXIT_MALFORMED,
            RunError::Transfer(TransferError::Io(_)) => EXIT_RUNTIME,
            RunError::Transfer(TransferError::BadRow { .. } | TransferError::Csv(_)) => {
                EXIT_MALFORMED
            }
            RunError::BadFile { .. } => EXIT_MALFORMED,
            _ => EXIT_RUNTIME,
        };
        Failure::new(code, e)
    }
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", path.display())))
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes)
        .map_err(|e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", path.display())))
}

/// Writes to stdout, treating a closed pipe as success.
pub fn write_stdout(bytes: &[u8]) -> Result<(), Failure> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::new(EXIT_RUNTIME, e)),
        _ => Ok(()),
    }
}

fn cmd_pack(a: &PackArgs) -> Result<(), Failure> {
    let round_to = RoundTo::new(a.round_to as u32).map_err(|e| Failure::new(EXIT_USAGE, e))?;
    let bytes = read_file(&a.input)?;
    let weights = floats::decode(&a.input, &bytes)
        .map_err(|e| Failure::new(EXIT_MALFORMED, format!("{}: {e}", a.input.display())))?;
    let block = codec::pack_vectorized(&weights, round_to);
    let framed = encode_container(&block);
    write_file(&a.output, &framed)?;
    let raw = block.raw_bytes();
    println!("weights:      {}", block.weight_count());
    println!("round_to:     {round_to}");
    println!("raw bytes:    {raw}");
    println!("payload:      {}", block.payload().len());
    println!("wire bytes:   {}", framed.len());
    println!("ratio:        {:.6}", ratio(raw, framed.len()));
    println!("payload ratio: {:.6}", ratio(raw, block.payload().len()));
    Ok(())
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

fn cmd_unpack(a: &UnpackArgs) -> Result<(), Failure> {
    let bytes = read_file(&a.input)?;
    let block = decode_container(&bytes)
        .map_err(|e| Failure::new(EXIT_MALFORMED, format!("{}: {e}", a.input.display())))?;
    let weights = codec::unpack(&block).map_err(|e: CodecError| Failure::new(EXIT_MALFORMED, e))?;
    write_file(&a.output, &floats::encode(&a.output, &weights))?;
    println!("weights:  {}", weights.len());
    println!("round_to: {}", block.round_to());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), Failure> {
    let mut config = match &a.config {
        Some(p) => RunConfig::from_file(p).map_err(RunError::from)?,
        None => RunConfig::default(),
    };
    if a.print_defaults {
        print!("{}", RunConfig::default().to_toml_string());
        return Ok(());
    }
    if let Some(mode) = a.mode {
        config.mode = mode;
    }
    config.seed = a.seed;
    let out_dir = a.out.as_ref().expect("required by clap");

    let output = run::run(&config)?;
    output.write_dir(out_dir)?;
    for m in &output.metrics {
        eprintln!(
            "epoch {:>3}  loss {:.5}  val_top1 {:.4}  bytes_sent {}",
            m.epoch, m.loss, m.val_top1, m.bytes_sent
        );
    }
    let profile = output.profile()?;
    println!("mode:              {}", config.mode);
    println!("final val_top1:    {:.4}", output.final_val_top1());
    println!("weight wire bytes: {}", profile.weight_wire_bytes);
    println!("weight size ratio: {:.3}", profile.weight_size_ratio);
    println!("output:            {}", out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Pack(a) => cmd_pack(a),
        Command::Unpack(a) => cmd_unpack(a),
        Command::BenchCodec(a) => bench::run(a),
        Command::Train(a) => cmd_train(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
