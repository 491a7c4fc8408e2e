mod output;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrp4d::lightfield::Layout;
use mrp4d::partition::PartitionMode;
use mrp4d::{decode_lightfield, encode_lightfield, inspect, synth, Dims, EncoderConfig, LightField4D};

use report::Report;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// Data failed a check; exit code 3.
    Integrity(String),
    /// Some work items failed; exit code 1.
    Failed(String),
    Codec(mrp4d::Error),
    Io(std::io::Error),
}

impl From<mrp4d::Error> for CliError {
    fn from(e: mrp4d::Error) -> Self {
        CliError::Codec(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Integrity(_) => 3,
            CliError::Codec(mrp4d::Error::InvalidArgument(_) | mrp4d::Error::Config { .. }) => 2,
            CliError::Codec(e) if e.is_integrity() => 3,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Integrity(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Codec(e) => e.fmt(f),
            CliError::Io(e) => e.fmt(f),
        }
    }
}

/// Lossless light field coder with 4D prediction and partition trees.
#[derive(Parser)]
#[command(name = "mrp4d", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print only `#kv` lines.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a light field (LF4D file or SAI directory).
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        enc: EncodeArgs,
    },
    /// Decompress a bitstream and verify its checksums.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Write a directory of PGM/PPM views instead of an LF4D file.
        #[arg(long)]
        sai_grid: bool,
    },
    /// Print the headers of a bitstream without decoding it.
    Inspect { input: PathBuf },
    /// Tabulate bpp per input and mode as CSV, or check two light fields
    /// for identical samples with `--samples`.
    Compare {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "4d,dt,2d")]
        modes: Vec<String>,
        /// Add an intra-only row per input.
        #[arg(long)]
        baseline: bool,
        /// Compare samples of exactly two light fields; exit 3 if they differ.
        #[arg(long, conflicts_with_all = ["baseline"])]
        samples: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Generate a synthetic light field.
    Synth {
        kind: SynthKind,
        #[arg(short, long)]
        output: PathBuf,
        /// Angular and spatial size as T,S,V,U.
        #[arg(long, value_parser = parse_dims, default_value = "5,5,32,32")]
        dims: Dims,
        #[arg(long, default_value_t = 1)]
        planes: usize,
        #[arg(long, default_value_t = 8)]
        depth: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample value of a constant field.
        #[arg(long, default_value_t = 128)]
        value: u16,
        /// Pixel shift between neighbouring views.
        #[arg(long, default_value_t = 1)]
        disparity: usize,
        /// Amplitude of uniform noise added to each view.
        #[arg(long, default_value_t = 1)]
        noise: u16,
        #[arg(long)]
        sai_grid: bool,
    },
    /// Convert between an SAI directory and an LF4D file.
    Convert {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, value_parser = ["4d", "dt", "2d"])]
    mode: Option<String>,
    /// Config file of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Intra-only baseline: no inter-view taps, 2D quadtree.
    #[arg(long)]
    intra_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Constant,
    Noise,
    Shifted,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("`{x}` is not a size")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [t, s, v, u] if t * s * v * u > 0 => Ok(Dims::new(t, s, v, u)),
        _ => Err("expected four positive sizes T,S,V,U".into()),
    }
}

fn layout_of(path: &Path) -> Layout {
    if path.is_dir() {
        Layout::SaiGrid
    } else {
        Layout::PlanarRaw
    }
}

fn existing(path: &Path) -> Result<&Path, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!("{}: no such file or directory", path.display())))
    }
}

fn load(path: &Path) -> Result<LightField4D, CliError> {
    Ok(LightField4D::load(existing(path)?, layout_of(path))?)
}

fn build_config(config: Option<&Path>, set: &[String]) -> Result<EncoderConfig, CliError> {
    let mut cfg = match config {
        Some(p) => EncoderConfig::parse(&fs::read_to_string(existing(p)?)?)?,
        None => EncoderConfig::default(),
    };
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(CliError::Usage)?;
    }
    Ok(cfg)
}

impl EncodeArgs {
    fn config(&self) -> Result<EncoderConfig, CliError> {
        let mut cfg = build_config(self.config.as_deref(), &self.set)?;
        if let Some(m) = &self.mode {
            cfg.mode = PartitionMode::parse(m).expect("validated by clap");
        }
        if self.intra_only {
            cfg = cfg.intra_only();
        }
        Ok(cfg)
    }
}

fn cmd_encode(input: &Path, output: &Path, args: &EncodeArgs, report: &Report) -> Result<(), CliError> {
    let cfg = args.config()?;
    let lf = load(input)?;
    let start = Instant::now();
    let enc = encode_lightfield(&lf, &cfg)?;
    output::write_file(output, &enc.bytes)?;
    report.encode(&enc.report, enc.bytes.len(), start.elapsed());
    Ok(())
}

fn cmd_decode(input: &Path, output: &Path, sai_grid: bool, report: &Report) -> Result<(), CliError> {
    let bytes = fs::read(existing(input)?)?;
    let start = Instant::now();
    let lf = decode_lightfield(&bytes)?;
    let layout = if sai_grid { Layout::SaiGrid } else { Layout::PlanarRaw };
    output::write_lightfield(output, &lf, layout)?;
    let d = lf.dims();
    let bpp = (bytes.len() * 8) as f64 / d.pixels() as f64;
    report.text(format_args!(
        "decoded {}x{}x{}x{}, {} plane(s), {} bits; checksums verified",
        d.t,
        d.s,
        d.v,
        d.u,
        lf.planes(),
        lf.bit_depth()
    ));
    report.kv("dims", format!("{}x{}x{}x{}", d.t, d.s, d.v, d.u));
    report.kv("planes", lf.planes());
    report.kv("bit_depth", lf.bit_depth());
    report.kv("bpp", format!("{bpp:.6}"));
    report.kv("wall_time_s", format!("{:.3}", start.elapsed().as_secs_f64()));
    Ok(())
}

fn cmd_inspect(input: &Path, report: &Report) -> Result<(), CliError> {
    let bytes = fs::read(existing(input)?)?;
    report.inspect(&inspect(&bytes)?);
    Ok(())
}

fn cmd_compare_samples(inputs: &[PathBuf], report: &Report) -> Result<(), CliError> {
    let [a, b] = inputs else {
        return Err(CliError::Usage("--samples takes exactly two inputs".into()));
    };
    let (la, lb) = (load(a)?, load(b)?);
    let same = la == lb;
    report.text(if same { "identical" } else { "different" });
    report.kv("identical", same);
    if same {
        Ok(())
    } else {
        Err(CliError::Integrity(format!("{} and {} differ", a.display(), b.display())))
    }
}

fn cmd_compare(
    inputs: &[PathBuf],
    modes: &[String],
    baseline: bool,
    cfg: EncoderConfig,
) -> Result<(), CliError> {
    let modes: Vec<PartitionMode> = modes
        .iter()
        .map(|m| PartitionMode::parse(m).ok_or_else(|| CliError::Usage(format!("unknown mode `{m}`"))))
        .collect::<Result<_, _>>()?;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    let csv_err = |e: csv::Error| CliError::Io(e.into());
    out.write_record(["input", "mode", "bpp", "bytes", "seconds", "error"]).map_err(csv_err)?;
    let mut failed = 0;
    for input in inputs {
        let mut configs: Vec<(String, EncoderConfig)> = modes
            .iter()
            .map(|&m| (m.name().to_string(), EncoderConfig { mode: m, ..cfg.clone() }))
            .collect();
        if baseline {
            configs.push(("intra".into(), cfg.clone().intra_only()));
        }
        let lf = load(input);
        for (name, c) in configs {
            let start = Instant::now();
            let cell = lf.as_ref().map_err(|e| e.to_string()).and_then(|lf| {
                encode_lightfield(lf, &c).map_err(|e| e.to_string())
            });
            let secs = format!("{:.3}", start.elapsed().as_secs_f64());
            let path = input.display().to_string();
            match cell {
                Ok(enc) => out
                    .write_record([&path, &name, &format!("{:.6}", enc.report.bpp()), &enc.bytes.len().to_string(), &secs, ""])
                    .map_err(csv_err)?,
                Err(msg) => {
                    out.write_record([&path, &name, "", "", &secs, &msg]).map_err(csv_err)?;
                    failed += 1;
                }
            }
        }
    }
    out.flush()?;
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failed} cell(s) failed")))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    kind: SynthKind,
    output: &Path,
    dims: Dims,
    planes: usize,
    depth: u8,
    seed: u64,
    value: u16,
    disparity: usize,
    noise: u16,
    sai_grid: bool,
    report: &Report,
) -> Result<(), CliError> {
    let lf = match kind {
        SynthKind::Constant => synth::constant(dims, planes, depth, value),
        SynthKind::Noise => synth::noise(dims, planes, depth, seed),
        SynthKind::Shifted => synth::shifted(dims, planes, depth, disparity, noise, seed),
    }?;
    let layout = if sai_grid { Layout::SaiGrid } else { Layout::PlanarRaw };
    output::write_lightfield(output, &lf, layout)?;
    report.kv("dims", format!("{}x{}x{}x{}", dims.t, dims.s, dims.v, dims.u));
    report.kv("planes", planes);
    report.kv("bit_depth", depth);
    Ok(())
}

fn cmd_convert(input: &Path, output: &Path, report: &Report) -> Result<(), CliError> {
    let lf = load(input)?;
    let to = match layout_of(input) {
        Layout::SaiGrid => Layout::PlanarRaw,
        Layout::PlanarRaw => Layout::SaiGrid,
    };
    output::write_lightfield(output, &lf, to)?;
    report.text(format_args!("wrote {}", output.display()));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let report = Report::new(cli.quiet);
    match &cli.command {
        Command::Encode { input, output, enc } => cmd_encode(input, output, enc, &report),
        Command::Decode {
            input,
            output,
            sai_grid,
        } => cmd_decode(input, output, *sai_grid, &report),
        Command::Inspect { input } => cmd_inspect(input, &report),
        Command::Compare {
            inputs,
            modes,
            baseline,
            samples,
            config,
            set,
        } => {
            if *samples {
                cmd_compare_samples(inputs, &report)
            } else {
                let cfg = build_config(config.as_deref(), set)?;
                cmd_compare(inputs, modes, *baseline, cfg)
            }
        }
        Command::Synth {
            kind,
            output,
            dims,
            planes,
            depth,
            seed,
            value,
            disparity,
            noise,
            sai_grid,
        } => cmd_synth(
            *kind, output, *dims, *planes, *depth, *seed, *value, *disparity, *noise, *sai_grid, &report,
        ),
        Command::Convert { input, output } => cmd_convert(input, output, &report),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mrp4d: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
