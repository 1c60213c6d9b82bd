use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hcfs_core::codec::{decode_image, encode_image, synthetic_textures, train_toy, Model, ModelConfig, TrainConfig, LAMBDAS};
use hcfs_core::coder::CodedStream;
use hcfs_core::eval::{bd_rate, evaluate, load_image, save_image, ImageBuffer, RdCurve, RdPoint};
use hcfs_core::selftest::run_selftest;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "hcfs", version, about = "Learned image codec: encode, decode, evaluate, train")]
struct Cli {
    /// Seed for every randomised step; overrides the seed in a training config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a PPM image into an .hcfs container.
    Encode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Model checkpoint.
        #[arg(short, long)]
        model: PathBuf,
        /// Rate point recorded in the header; defaults to the checkpoint's lambda.
        #[arg(long)]
        lambda_index: Option<u8>,
    },
    /// Reconstruct a PPM image from an .hcfs container.
    Decode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Code an image and report bpp, PSNR and MSE.
    Eval {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
        /// Emit one JSON record instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Train a desk-scale model on synthetic textures.
    TrainToy {
        /// TOML recipe with optional [model], [train] and [data] tables.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace as line-delimited JSON; defaults to `<out>.trace.jsonl`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Bjøntegaard delta rate of `test` against `anchor` (CSV with header bpp,psnr).
    Bdrate {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error("{0} check(s) failed")]
    Selftest(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Format(_) => 3,
            CliError::Selftest(_) => 4,
        }
    }

    /// Attribute a core error to `path`, keeping I/O failures distinct.
    fn core(path: &Path, e: hcfs_core::Error) -> Self {
        match e {
            hcfs_core::Error::Io(source) => CliError::Io { path: path.to_owned(), source },
            hcfs_core::Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Format(format!("{}: {other}", path.display())),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Recipe {
    model: Option<ModelConfig>,
    train: TrainConfig,
    data: DataSpec,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSpec {
    count: usize,
    size: usize,
    seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self { count: 64, size: 64, seed: 1 }
    }
}

#[derive(Debug, Deserialize)]
struct CsvPoint {
    bpp: f64,
    psnr: f64,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn load_model(path: &Path) -> Result<(Model, hcfs_core::ParamStore, f64), CliError> {
    Model::from_bytes(&read(path)?).map_err(|e| CliError::core(path, e))
}

fn nearest_lambda_index(lambda: f64) -> u8 {
    let mut idx = 0;
    for (i, l) in LAMBDAS.iter().enumerate() {
        if (l - lambda).abs() < (LAMBDAS[idx] - lambda).abs() {
            idx = i;
        }
    }
    idx as u8
}

fn load_curve(path: &Path) -> Result<RdCurve, CliError> {
    let bytes = read(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let points = rdr
        .deserialize::<CsvPoint>()
        .map(|r| r.map(|p| RdPoint::new(p.bpp, p.psnr)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    let label = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    RdCurve::new(label, points).map_err(|e| CliError::core(path, e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode { input, output, model, lambda_index } => {
            let img = load_image(&input).map_err(|e| CliError::core(&input, e))?;
            let (m, store, lambda) = load_model(&model)?;
            let idx = lambda_index.unwrap_or_else(|| nearest_lambda_index(lambda));
            let enc = encode_image(&m, &store, &img.to_tensor(), idx).map_err(|e| CliError::core(&input, e))?;
            let bytes = enc.stream.to_bytes().map_err(|e| CliError::core(&output, e))?;
            write(&output, &bytes)?;
            eprintln!(
                "{} -> {}: {} bytes, {:.4} bpp",
                input.display(),
                output.display(),
                bytes.len(),
                bytes.len() as f64 * 8.0 / (img.width * img.height) as f64
            );
        }
        Command::Decode { input, output, model } => {
            let stream = CodedStream::from_bytes(&read(&input)?).map_err(|e| CliError::core(&input, e))?;
            let (m, store, _) = load_model(&model)?;
            let dec = decode_image(&m, &store, &stream).map_err(|e| CliError::core(&input, e))?;
            let img = ImageBuffer::from_tensor(&dec.image).map_err(|e| CliError::core(&input, e))?;
            save_image(&output, &img).map_err(|e| CliError::core(&output, e))?;
        }
        Command::Eval { input, model, json } => {
            let img = load_image(&input).map_err(|e| CliError::core(&input, e))?;
            let (m, store, lambda) = load_model(&model)?;
            let (rec, _, _) =
                evaluate(&m, &store, &img, nearest_lambda_index(lambda)).map_err(|e| CliError::core(&input, e))?;
            if json {
                println!("{}", serde_json::to_string(&rec).expect("record serialises"));
            } else {
                println!("{:<24} {:>6} {:>9} {:>8} {:>9}", "image", "bytes", "bpp", "psnr", "mse");
                println!(
                    "{:<24} {:>6} {:>9.4} {:>8.2} {:>9.3}",
                    input.display(),
                    rec.bytes,
                    rec.bpp,
                    rec.psnr,
                    rec.mse
                );
            }
        }
        Command::TrainToy { config, out, trace } => {
            let text = String::from_utf8(read(&config)?)
                .map_err(|e| CliError::Format(format!("{}: {e}", config.display())))?;
            let mut recipe: Recipe =
                toml::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", config.display())))?;
            if let Some(seed) = cli.seed {
                recipe.train.seed = seed;
            }
            let model_cfg = recipe.model.unwrap_or_else(ModelConfig::desk);
            model_cfg.validate().map_err(|e| CliError::core(&config, e))?;
            let images = synthetic_textures(recipe.data.count, recipe.data.size, recipe.data.seed);
            let outcome = train_toy(model_cfg, &recipe.train, &images).map_err(|e| CliError::core(&config, e))?;
            write(&out, &outcome.model.to_bytes(&outcome.store, recipe.train.lambda))?;
            let trace_path = trace.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".trace.jsonl");
                p.into()
            });
            let mut lines = Vec::new();
            for r in &outcome.trace {
                serde_json::to_writer(&mut lines, r).expect("trace serialises");
                lines.push(b'\n');
            }
            write(&trace_path, &lines)?;
            let (first, last) = outcome.smoothed_ends(25);
            eprintln!("{} steps, smoothed loss {first:.3} -> {last:.3}", outcome.trace.len());
        }
        Command::Bdrate { anchor, test } => {
            let (a, t) = (load_curve(&anchor)?, load_curve(&test)?);
            for w in a.warnings().into_iter().chain(t.warnings()) {
                eprintln!("warning: {w}");
            }
            let pct = bd_rate(&a, &t).map_err(|e| CliError::core(&test, e))?;
            println!("{pct:+.2}%");
        }
        Command::Selftest => {
            let outcomes = run_selftest(cli.seed.unwrap_or(0));
            let mut out = std::io::stdout().lock();
            for o in &outcomes {
                let mark = if o.passed { "ok  " } else { "FAIL" };
                let _ = writeln!(out, "{mark} {:<22} {}", o.name, o.detail);
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                return Err(CliError::Selftest(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
