use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vconceal::error::Result;
use vconceal::eval::{psnr_cap, training_pairs_csv};
use vconceal::fse::FseConfig;
use vconceal::loss::LossMask;
use vconceal::pipeline::{conceal_sequence, report_csv, ConcealConfig, Mode};
use vconceal::video::VideoSequence;
use vconceal::{best_weight_search, fit_weight_model, psnr_blocks, run_comparison, BlockRef};

#[derive(Parser, Debug)]
#[command(
    name = "vconceal",
    version,
    about = "Block-loss corruption, spatio-temporal concealment, and evaluation for raw I420 video"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Apply an artificial block-loss pattern to a sequence
    Corrupt(CorruptArgs),
    /// Conceal the lost blocks of a corrupted sequence
    Conceal(ConcealArgs),
    /// PSNR over the lost-block samples of a concealed sequence
    Evaluate(EvaluateArgs),
    /// Fit the (omega_max, t_e) weighting ramp from a training sequence
    Train(TrainArgs),
    /// Conceal with several modes/patterns and tabulate PSNR and gains
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct GeometryArgs {
    /// Luma width in pixels
    #[arg(long)]
    width: usize,
    /// Luma height in pixels
    #[arg(long)]
    height: usize,
    /// Load at most this many frames
    #[arg(long, default_value_t = usize::MAX, hide_default_value = true)]
    max_frames: usize,
    /// Informational only, carried into summaries
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
}

#[derive(Args, Debug)]
struct EngineArgs {
    /// Previous reference frames N_p
    #[arg(long, default_value_t = 2)]
    n_prev: usize,
    /// Following reference frames N_f (0: P-frame case, 1: B-frame case)
    #[arg(long, default_value_t = 0)]
    n_follow: usize,
    /// Maximum motion search displacement
    #[arg(long, default_value_t = 16)]
    d_max: i32,
    /// Width of the matching ring around a lost block
    #[arg(long, default_value_t = 4)]
    ring_width: usize,
    /// Absolute motion-quality threshold
    #[arg(long, default_value_t = 10.0)]
    t_abs: f64,
    /// Motion-homogeneity threshold
    #[arg(long, default_value_t = 3.0)]
    t_rel: f64,
    /// Peak of the per-layer weighting ramp
    #[arg(long, default_value_t = 0.675)]
    omega_max: f64,
    /// Motion error at which a reference layer is excluded
    #[arg(long, default_value_t = 84.375)]
    t_e: f64,
    /// Attenuation of already-concealed samples
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Model generation iterations
    #[arg(long, default_value_t = 800)]
    iterations: usize,
    /// Orthogonality deficiency compensation factor
    #[arg(long, default_value_t = 0.7)]
    gamma: f64,
    /// Distance-decay base of the weighting function
    #[arg(long, default_value_t = 0.8)]
    rho_hat: f64,
    /// Transform grid, e.g. 64x64x16
    #[arg(long, default_value = "64x64x16")]
    fft: String,
    /// Lost block size in luma pixels
    #[arg(long, default_value_t = 16)]
    block_size: usize,
    /// Support border around the block inside the volume
    #[arg(long, default_value_t = 16)]
    border: usize,
    /// Also conceal the chroma planes at half resolution
    #[arg(long)]
    chroma: bool,
    /// Cap pipeline parallelism; output is identical for any value
    #[arg(long)]
    threads: Option<usize>,
}

impl EngineArgs {
    fn to_config(&self, mode: Mode) -> Result<ConcealConfig> {
        let dims: Vec<usize> = self
            .fft
            .split('x')
            .map(|s| s.parse::<usize>().map_err(|_| usage_value(&self.fft)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| e)?;
        if dims.len() != 3 {
            return Err(usage_value(&self.fft));
        }
        Ok(ConcealConfig {
            n_prev: self.n_prev,
            n_follow: self.n_follow,
            d_max: self.d_max,
            ring_width: self.ring_width,
            t_abs: self.t_abs,
            t_rel: self.t_rel,
            omega_max: self.omega_max,
            t_e: self.t_e,
            delta: self.delta,
            block_size: self.block_size,
            border: self.border,
            mode,
            fse: FseConfig {
                iterations: self.iterations,
                gamma: self.gamma,
                fft_dims: (dims[0], dims[1], dims[2]),
                rho_hat: self.rho_hat,
                track_residual: false,
            },
            omega_override: None,
            conceal_chroma: self.chroma,
        })
    }
}

fn usage_value(v: &str) -> vconceal::ConcealError {
    vconceal::ConcealError::Invalid(format!("cannot parse value {v:?}"))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatternArg {
    Checkerboard,
    Slices,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "ca-mc-fse")]
    CaMcFse,
    #[value(name = "mc-fse")]
    McFse,
    #[value(name = "temporal-copy")]
    TemporalCopy,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::CaMcFse => Mode::ContentAdaptive,
            ModeArg::McFse => Mode::FixedWeighting,
            ModeArg::TemporalCopy => Mode::TemporalCopy,
        }
    }
}

#[derive(Args, Debug)]
struct CorruptArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long, value_enum, default_value_t = PatternArg::Checkerboard)]
    pattern: PatternArg,
    /// Checkerboard parity / slice phase
    #[arg(long, default_value_t = 0)]
    parity: u8,
    /// Frames carrying losses, `a..b:step` (inclusive), `a..b`, or `a`
    #[arg(long)]
    frames: String,
    /// Fill value written into lost blocks
    #[arg(long, default_value_t = 0)]
    fill: u8,
    #[arg(long, default_value_t = 16)]
    block_size: usize,
    /// Corrupted sequence output
    #[arg(long, short)]
    output: PathBuf,
    /// Loss mask output (text)
    #[arg(long)]
    mask: PathBuf,
}

#[derive(Args, Debug)]
struct ConcealArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::CaMcFse)]
    mode: ModeArg,
    #[arg(long, short)]
    output: PathBuf,
    /// Per-block CSV report output
    #[arg(long)]
    report: Option<PathBuf>,
    /// Undistorted sequence, enables per-block PSNR in the report
    #[arg(long)]
    original: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    concealed: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long, default_value_t = 16)]
    block_size: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Undistorted training sequence
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Frames to draw training blocks from
    #[arg(long, default_value = "5..200:5")]
    frames: String,
    #[arg(long, default_value_t = 25)]
    blocks_per_frame: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight grid: 0, step, 2*step, ..., max
    #[arg(long, default_value_t = 0.05)]
    grid_step: f64,
    #[arg(long, default_value_t = 1.5)]
    grid_max: f64,
    /// Training pairs CSV output
    #[arg(long)]
    pairs_out: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Undistorted sequence; corruption happens per pattern internally
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long)]
    frames: String,
    /// Comma-separated patterns
    #[arg(long, value_delimiter = ',', default_values_t = [PatternArg::Checkerboard, PatternArg::Slices])]
    patterns: Vec<PatternArg>,
    #[arg(long, default_value_t = 0)]
    parity: u8,
    /// Comma-separated modes
    #[arg(long, value_delimiter = ',', default_values_t = [ModeArg::CaMcFse, ModeArg::McFse, ModeArg::TemporalCopy])]
    modes: Vec<ModeArg>,
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

/// `a..b:step` (inclusive), `a..b`, or a single `a`.
fn parse_frames(spec: &str, frame_count: usize) -> Result<Vec<usize>> {
    let (range, step) = match spec.split_once(':') {
        Some((r, s)) => (
            r,
            s.parse::<usize>().map_err(|_| usage_value(spec))?,
        ),
        None => (spec, 1),
    };
    if step == 0 {
        return Err(usage_value(spec));
    }
    let (a, b) = match range.split_once("..") {
        Some((a, b)) => (
            a.parse::<usize>().map_err(|_| usage_value(spec))?,
            b.parse::<usize>().map_err(|_| usage_value(spec))?,
        ),
        None => {
            let v = range.parse::<usize>().map_err(|_| usage_value(spec))?;
            (v, v)
        }
    };
    let frames: Vec<usize> = (a..=b).step_by(step).collect();
    for &f in &frames {
        if f >= frame_count {
            return Err(vconceal::ConcealError::FrameOutOfRange {
                frame: f,
                count: frame_count,
            });
        }
    }
    Ok(frames)
}

fn build_mask(
    pattern: PatternArg,
    width: usize,
    height: usize,
    frame_count: usize,
    block_size: usize,
    frames: &[usize],
    parity: u8,
) -> Result<LossMask> {
    match pattern {
        PatternArg::Checkerboard => {
            LossMask::checkerboard(width, height, frame_count, block_size, frames, parity)
        }
        PatternArg::Slices => LossMask::slices(width, height, frame_count, block_size, frames, parity),
    }
}

fn install_pool<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool");
        return pool.install(f);
    }
    let _ = threads;
    f()
}

fn run_corrupt(args: &CorruptArgs) -> Result<()> {
    let g = &args.geometry;
    let seq = VideoSequence::load(&args.input, g.width, g.height, g.max_frames)?;
    let frames = parse_frames(&args.frames, seq.frame_count())?;
    let mask = build_mask(
        args.pattern,
        g.width,
        g.height,
        seq.frame_count(),
        args.block_size,
        &frames,
        args.parity,
    )?;
    let corrupted = mask.apply_loss(&seq, args.fill)?;
    corrupted.save(&args.output)?;
    mask.save(&args.mask)?;
    println!(
        "corrupted {} blocks across {} frames -> {} (mask {})",
        mask.lost_block_count(),
        frames.len(),
        args.output.display(),
        args.mask.display()
    );
    Ok(())
}

fn run_conceal(args: &ConcealArgs) -> Result<()> {
    let g = &args.geometry;
    let seq = VideoSequence::load(&args.input, g.width, g.height, g.max_frames)?;
    let mask = LossMask::load(&args.mask, g.width, g.height, seq.frame_count(), args.engine.block_size)?;
    let original = args
        .original
        .as_ref()
        .map(|p| VideoSequence::load(p, g.width, g.height, g.max_frames))
        .transpose()?;
    let cfg = args.engine.to_config(args.mode.into())?;
    println!("effective config: {cfg:?}");
    let (concealed, reports) = install_pool(args.engine.threads, || {
        conceal_sequence(&seq, &mask, &cfg, original.as_ref())
    })?;
    concealed.save(&args.output)?;
    if let Some(path) = &args.report {
        std::fs::write(path, report_csv(&reports))?;
    }
    print!("concealed {} blocks", reports.len());
    if let Some(orig) = &original {
        let psnr = psnr_blocks(orig, &concealed, &mask)?;
        print!(", mean PSNR over lost blocks {:.4} dB", psnr_cap(psnr));
    }
    println!();
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let g = &args.geometry;
    let original = VideoSequence::load(&args.original, g.width, g.height, g.max_frames)?;
    let concealed = VideoSequence::load(&args.concealed, g.width, g.height, g.max_frames)?;
    let mask = LossMask::load(
        &args.mask,
        g.width,
        g.height,
        original.frame_count(),
        args.block_size,
    )?;
    let psnr = psnr_blocks(&original, &concealed, &mask)?;
    println!("PSNR over lost blocks: {:.4} dB", psnr_cap(psnr));
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let g = &args.geometry;
    let seq = VideoSequence::load(&args.input, g.width, g.height, g.max_frames)?;
    let frames = parse_frames(&args.frames, seq.frame_count())?;
    let cfg = args.engine.to_config(Mode::ContentAdaptive)?;
    println!("effective config: {cfg:?}");
    let steps = (args.grid_max / args.grid_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * args.grid_step).collect();
    let blocks_w = g.width / args.engine.block_size;
    let blocks_h = g.height / args.engine.block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut pairs = Vec::new();
    for &frame in &frames {
        let mut candidates: Vec<(usize, usize)> = (0..blocks_h)
            .flat_map(|by| (0..blocks_w).map(move |bx| (bx, by)))
            .collect();
        candidates.shuffle(&mut rng);
        for &(bx, by) in candidates.iter().take(args.blocks_per_frame) {
            let mut mask = LossMask::new(g.width, g.height, seq.frame_count(), args.engine.block_size)?;
            mask.mark_lost(frame, bx, by);
            let pair = install_pool(args.engine.threads, || {
                best_weight_search(&seq, &mask, BlockRef { frame, bx, by }, &cfg, &grid)
            })?;
            pairs.push(pair);
        }
    }
    if let Some(path) = &args.pairs_out {
        std::fs::write(path, training_pairs_csv(&pairs))?;
    }
    let (omega_max, t_e) = fit_weight_model(&pairs)?;
    println!(
        "trained on {} pairs: omega_max = {omega_max:.6}, t_e = {t_e:.6}",
        pairs.len()
    );
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    let g = &args.geometry;
    let seq = VideoSequence::load(&args.input, g.width, g.height, g.max_frames)?;
    let frames = parse_frames(&args.frames, seq.frame_count())?;
    let cfg = args.engine.to_config(Mode::ContentAdaptive)?;
    println!("effective config: {cfg:?}");
    let masks: Vec<(String, LossMask)> = args
        .patterns
        .iter()
        .map(|&p| {
            let name = match p {
                PatternArg::Checkerboard => "checkerboard",
                PatternArg::Slices => "slices",
            };
            build_mask(
                p,
                g.width,
                g.height,
                seq.frame_count(),
                args.engine.block_size,
                &frames,
                args.parity,
            )
            .map(|m| (name.to_string(), m))
        })
        .collect::<Result<_>>()?;
    let modes: Vec<Mode> = args.modes.iter().map(|&m| m.into()).collect();
    let table = install_pool(args.engine.threads, || {
        run_comparison(&seq, &masks, &modes, &cfg)
    })?;
    std::fs::write(&args.output, table.to_csv())?;
    print!("{}", table.to_csv());
    Ok(())
}

impl std::fmt::Display for PatternArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PatternArg::Checkerboard => write!(f, "checkerboard"),
            PatternArg::Slices => write!(f, "slices"),
        }
    }
}

impl std::fmt::Display for ModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeArg::CaMcFse => write!(f, "ca-mc-fse"),
            ModeArg::McFse => write!(f, "mc-fse"),
            ModeArg::TemporalCopy => write!(f, "temporal-copy"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage errors exit 1; --help/--version are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::Corrupt(a) => run_corrupt(a),
        Cmd::Conceal(a) => run_conceal(a),
        Cmd::Evaluate(a) => run_evaluate(a),
        Cmd::Train(a) => run_train(a),
        Cmd::Compare(a) => run_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
