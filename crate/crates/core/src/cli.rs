//! The `gridwave` command line.
//!
//! Every subcommand prints (or atomically writes) one JSON document that
//! carries `schema_version`, `artifact_version`, the subcommand name and the
//! fully resolved configuration. Exit codes: 0 success, 1 domain error (bad
//! input data, failed computation), 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::curation::{curate, score_image, CurationConfig, CurationOutcome, ExternalScores};
use crate::diagnostics::{
    grid_spike_score, log_spectrum, magnitude_spectrum, periodicity_score_spatial, PeriodicityScore, SpectrumReport,
    DEFAULT_SPATIAL_THRESHOLD, DEFAULT_SPIKE_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image};
use crate::io::write_atomic;
use crate::latent::{periodic_tile_demo, PackFactor};
use crate::metrics::{patch_eval, MetricReport};
use crate::periodicity::{l_ap, l_ap_gradient, AutocorrProfile, AutocorrTerm, LagSpec};
use crate::rng::{rng_stream, Seed};
use crate::rope::{adjacent_similarity_map, count_above, phase_deltas, strong_bandwidth, RopeConfig};
use crate::sr::train::{list_pngs, load_dataset, log_to_csv};
use crate::sr::{one_step_infer, run_ablation, train_on_images, AblationReport, Checkpoint, ToyModelConfig};
use crate::synth::texture_corpus;

/// Version of every JSON document the CLI emits.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "gridwave",
    version,
    about = "Periodic grid-artifact diagnosis and suppression for one-step latent super-resolution",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rope phase deltas, strong bandwidth and the adjacent-similarity map.
    RopeAnalyze(RopeArgs),
    /// Spectral and spatial grid-artifact scores for a PNG or a directory.
    ArtifactScan(ScanArgs),
    /// Write the canonical periodic tile artifact as a PNG.
    DemoTile(DemoArgs),
    /// Periodicity loss between a prediction and a ground-truth PNG.
    LossEval(LossArgs),
    /// Score, filter and rank a directory of PNGs.
    Curate(CurateArgs),
    /// Train the toy one-step denoiser.
    Train(TrainArgs),
    /// Four-arm ablation of base-frequency rescaling and the periodicity loss.
    Ablate(AblateArgs),
    /// One-step super-resolution of an LR PNG with a trained checkpoint.
    Infer(InferArgs),
    /// Luma PSNR/SSIM between two PNGs, patchwise.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args, Serialize)]
struct RopeArgs {
    #[arg(long, default_value_t = 10_000.0)]
    theta: f64,
    /// Per-axis feature dimension.
    #[arg(long, default_value_t = 56)]
    d: usize,
    /// Strong-rotation threshold in degrees.
    #[arg(long, default_value_t = 5.0)]
    threshold: f64,
    /// Grid side of the similarity map; the map is skipped unless this or a
    /// map output is given.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Cosine level defining the high-similarity zone.
    #[arg(long, default_value_t = 0.99)]
    zone_level: f64,
    #[arg(long)]
    map_csv: Option<PathBuf>,
    #[arg(long)]
    map_png: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ScanArgs {
    /// PNG file or directory of PNGs.
    input: PathBuf,
    #[arg(long, default_value_t = 32)]
    period: usize,
    /// Spectral peak-to-background threshold.
    #[arg(long, default_value_t = DEFAULT_SPIKE_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_SPATIAL_THRESHOLD)]
    spatial_threshold: f64,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Directory for log-magnitude spectrum PNGs.
    #[arg(long)]
    spectrum_png: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct DemoArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 32)]
    period: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct LossArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated pixel lags.
    #[arg(long, value_delimiter = ',', default_value = "8,16,24,32,40")]
    lags: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    quadrants: usize,
    /// Also report the L2 norm of the gradient with respect to the prediction.
    #[arg(long)]
    grad: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CurateArgs {
    dir: PathBuf,
    #[arg(long)]
    keep: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file `{"min_score": x, "scores": {"file.png": s, ...}}`.
    #[arg(long)]
    external_scores: Option<PathBuf>,
    /// TOML curation config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    min_laplacian: Option<f64>,
    #[arg(long)]
    min_sobel: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// TOML model config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of HR training PNGs.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Training log output (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training PNG directory; synthetic textures when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out PNG directory; synthetic textures when omitted.
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Size of the synthetic training corpus.
    #[arg(long, default_value_t = 32)]
    train_count: usize,
    /// Size of the synthetic eval corpus.
    #[arg(long, default_value_t = 16)]
    eval_count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct MetricsArgs {
    a: PathBuf,
    b: PathBuf,
    /// Patch side; the whole image when omitted.
    #[arg(long)]
    patch: Option<usize>,
    /// Emit JSON (to stdout, or to the given path) instead of a text summary.
    #[arg(long, num_args = 0..=1)]
    json: Option<Option<PathBuf>>,
}

/// Common wrapper of every report.
#[derive(Serialize)]
struct Envelope<'a, C: Serialize, P: Serialize> {
    schema_version: u32,
    artifact_version: &'static str,
    command: &'static str,
    config: &'a C,
    #[serde(flatten)]
    payload: P,
}

fn emit<C: Serialize, P: Serialize>(command: &'static str, config: &C, payload: P, dest: Option<&Path>) -> Result<()> {
    let doc = Envelope {
        schema_version: SCHEMA_VERSION,
        artifact_version: crate::VERSION,
        command,
        config,
        payload,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format {
        what: "report",
        detail: e.to_string(),
    })?;
    text.push('\n');
    match dest {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path: path.to_path_buf() }
        } else {
            Error::Read { path: path.to_path_buf(), source }
        }
    })
}

#[derive(Serialize)]
struct RopePayload {
    pairs: usize,
    strong_dims: usize,
    phase_deltas_rad: Vec<f64>,
    phase_deltas_deg: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zone_cells: Option<usize>,
}

fn rope_analyze(args: &RopeArgs) -> Result<()> {
    let want_map = args.grid.is_some() || args.map_csv.is_some() || args.map_png.is_some();
    let grid = args.grid.unwrap_or(128);
    let cfg = RopeConfig::new(args.d, args.theta, grid, grid)?;
    let deltas = phase_deltas(&cfg);
    let strong_dims = strong_bandwidth(&cfg, args.threshold)?;
    let mut zone_cells = None;
    if want_map {
        let map = adjacent_similarity_map(&cfg, args.samples, Seed(args.seed))?;
        zone_cells = Some(count_above(&map, args.zone_level));
        if let Some(p) = &args.map_csv {
            write_atomic(p, map.to_csv().as_bytes())?;
        }
        if let Some(p) = &args.map_png {
            save_image(&map.to_normalized_image(), p)?;
        }
    }
    let payload = RopePayload {
        pairs: cfg.pairs(),
        strong_dims,
        phase_deltas_deg: deltas.iter().map(|d| d.to_degrees()).collect(),
        phase_deltas_rad: deltas,
        zone_cells,
    };
    emit("rope-analyze", args, payload, args.json.as_deref())
}

#[derive(Serialize)]
struct ScanRecord {
    path: PathBuf,
    spectrum: SpectrumReport,
    spatial: PeriodicityScore,
}

#[derive(Serialize)]
struct ScanPayload {
    images: usize,
    flagged_spectral: usize,
    flagged_spatial: usize,
    records: Vec<ScanRecord>,
}

fn artifact_scan(args: &ScanArgs) -> Result<()> {
    let inputs = if args.input.is_dir() {
        list_pngs(&args.input)?
    } else if args.input.exists() {
        vec![args.input.clone()]
    } else {
        return Err(Error::MissingFile { path: args.input.clone() });
    };
    if let Some(dir) = &args.spectrum_png {
        std::fs::create_dir_all(dir).map_err(|source| Error::Write { path: dir.clone(), source })?;
    }
    let mut records = inputs
        .par_iter()
        .map(|path| {
            let img = load_image(path)?;
            if let Some(dir) = &args.spectrum_png {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let spec = log_spectrum(&magnitude_spectrum(&img)).to_normalized_image();
                save_image(&spec, dir.join(format!("{stem}_spectrum.png")))?;
            }
            Ok(ScanRecord {
                path: path.clone(),
                spectrum: grid_spike_score(&img, args.period, args.threshold)?,
                spatial: periodicity_score_spatial(&img, args.period, args.spatial_threshold)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.path.cmp(&b.path));
    let payload = ScanPayload {
        images: records.len(),
        flagged_spectral: records.iter().filter(|r| r.spectrum.flagged).count(),
        flagged_spatial: records.iter().filter(|r| r.spatial.flagged).count(),
        records,
    };
    emit("artifact-scan", args, payload, args.json.as_deref())
}

#[derive(Serialize)]
struct DemoPayload {
    output: PathBuf,
    height: usize,
    width: usize,
    spectrum: SpectrumReport,
    spatial: PeriodicityScore,
}

fn demo_tile(args: &DemoArgs) -> Result<()> {
    if args.period == 0 || !args.size.is_multiple_of(args.period) {
        return Err(Error::NotDivisible { what: "demo size", value: args.size, by: args.period.max(1) });
    }
    let mut rng = rng_stream(Seed(args.seed));
    let token: Vec<f64> = (0..args.period * args.period * args.channels).map(|_| rng.uniform()).collect();
    let reps = args.size / args.period;
    let img = periodic_tile_demo(&token, reps, reps, PackFactor::new(args.period)?)?;
    save_image(&img, &args.out)?;
    let payload = DemoPayload {
        output: args.out.clone(),
        height: img.height(),
        width: img.width(),
        spectrum: grid_spike_score(&img, args.period, DEFAULT_SPIKE_THRESHOLD)?,
        spatial: periodicity_score_spatial(&img, args.period, DEFAULT_SPATIAL_THRESHOLD)?,
    };
    emit("demo-tile", args, payload, args.json.as_deref())
}

#[derive(Serialize)]
struct LossPayload {
    loss: f64,
    pred_terms: Vec<AutocorrTerm>,
    gt_terms: Vec<AutocorrTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_l2: Option<f64>,
}

fn loss_eval(args: &LossArgs) -> Result<()> {
    let pred = load_image(&args.pred)?;
    let gt = load_image(&args.gt)?;
    let spec = LagSpec::new(args.lags.clone(), args.quadrants)?;
    let grad_l2 = if args.grad {
        let g = l_ap_gradient(&pred, &gt, &spec)?;
        Some(g.data().iter().map(|v| v * v).sum::<f64>().sqrt())
    } else {
        None
    };
    let payload = LossPayload {
        loss: l_ap(&pred, &gt, &spec)?,
        pred_terms: AutocorrProfile::compute(&pred, &spec)?.terms().to_vec(),
        gt_terms: AutocorrProfile::compute(&gt, &spec)?.terms().to_vec(),
        grad_l2,
    };
    emit("loss-eval", args, payload, args.json.as_deref())
}

#[derive(Serialize)]
struct CurateConfigOut<'a> {
    args: &'a CurateArgs,
    resolved: &'a CurationConfig,
}

fn curate_dir(args: &CurateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => toml::from_str::<CurationConfig>(&read_text(p)?).map_err(|e| Error::Format {
            what: "curation config",
            detail: e.to_string(),
        })?,
        None => CurationConfig::default(),
    };
    if let Some(k) = args.keep {
        cfg.keep_fraction = k;
    }
    if let Some(v) = args.min_laplacian {
        cfg.min_laplacian_var = v;
    }
    if let Some(v) = args.min_sobel {
        cfg.min_sobel_mean = v;
    }
    let external = match &args.external_scores {
        Some(p) => Some(serde_json::from_str::<ExternalScores>(&read_text(p)?).map_err(|e| Error::Format {
            what: "external scores",
            detail: e.to_string(),
        })?),
        None => None,
    };
    let paths = list_pngs(&args.dir)?;
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no PNG files in {}", args.dir.display())));
    }
    let scores = paths
        .par_iter()
        .map(|p| score_image(p, &load_image(p)?, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let outcome: CurationOutcome = curate(scores, &cfg, external.as_ref())?;
    emit("curate", &CurateConfigOut { args, resolved: &cfg }, outcome, args.out.as_deref())
}

fn model_config(path: Option<&Path>, seed: Option<u64>) -> Result<ToyModelConfig> {
    let mut cfg = match path {
        Some(p) => ToyModelConfig::load(p)?,
        None => ToyModelConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = Seed(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct ModelConfigOut<'a, A: Serialize> {
    args: &'a A,
    model: &'a ToyModelConfig,
}

#[derive(Serialize)]
struct TrainPayload {
    checkpoint: PathBuf,
    log: Option<PathBuf>,
    iterations: usize,
    first: crate::sr::LogRow,
    last: crate::sr::LogRow,
    corpus_mse_initial: f64,
    corpus_mse_final: f64,
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = model_config(args.config.as_deref(), args.seed)?;
    let images = load_dataset(&args.data)?;
    let outcome = train_on_images(&cfg, &images, args.iterations)?;
    Checkpoint::new(&cfg, &outcome.params, args.iterations).save(&args.out)?;
    if let Some(p) = &args.log {
        write_atomic(p, log_to_csv(&outcome.log).as_bytes())?;
    }
    let payload = TrainPayload {
        checkpoint: args.out.clone(),
        log: args.log.clone(),
        iterations: args.iterations,
        first: outcome.log[0],
        last: *outcome.log.last().expect("at least one iteration"),
        corpus_mse_initial: outcome.corpus_mse_initial,
        corpus_mse_final: outcome.corpus_mse_final,
    };
    emit("train", &ModelConfigOut { args, model: &cfg }, payload, None)
}

#[derive(Serialize)]
struct AblatePayload {
    report: AblationReport,
}

fn ablate(args: &AblateArgs) -> Result<()> {
    let cfg = model_config(args.config.as_deref(), args.seed)?;
    let size = 64;
    let train = match &args.data {
        Some(d) => load_dataset(d)?,
        None => texture_corpus(cfg.seed.derive(1), args.train_count, size)?,
    };
    let eval = match &args.eval {
        Some(d) => load_dataset(d)?,
        None => texture_corpus(cfg.seed.derive(2), args.eval_count, size)?,
    };
    let report = run_ablation(&cfg, &train, args.iterations, &eval)?;
    emit("ablate", &ModelConfigOut { args, model: &cfg }, AblatePayload { report }, args.out.as_deref())
}

#[derive(Serialize)]
struct InferPayload {
    output: PathBuf,
    input_shape: (usize, usize, usize),
    output_shape: (usize, usize, usize),
    forward_passes: usize,
}

fn infer(args: &InferArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let lr = load_image(&args.input)?;
    let sr = one_step_infer(&ck, &lr)?;
    save_image(&sr, &args.out)?;
    let payload = InferPayload {
        output: args.out.clone(),
        input_shape: lr.shape(),
        output_shape: sr.shape(),
        forward_passes: 1,
    };
    emit("infer", args, payload, args.json.as_deref())
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let a = load_image(&args.a)?;
    let b = load_image(&args.b)?;
    let patch = args.patch.unwrap_or(a.height().min(a.width()));
    let report: MetricReport = patch_eval(&a, &b, patch)?;
    match &args.json {
        Some(dest) => emit("metrics", args, report, dest.as_deref()),
        None => {
            println!(
                "psnr_y {:.4} dB  ssim_y {:.6}  ({} patches of {patch}px)",
                report.psnr_db,
                report.ssim,
                report.per_patch.len()
            );
            Ok(())
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::RopeAnalyze(a) => rope_analyze(a),
        Command::ArtifactScan(a) => artifact_scan(a),
        Command::DemoTile(a) => demo_tile(a),
        Command::LossEval(a) => loss_eval(a),
        Command::Curate(a) => curate_dir(a),
        Command::Train(a) => train(a),
        Command::Ablate(a) => ablate(a),
        Command::Infer(a) => infer(a),
        Command::Metrics(a) => metrics(a),
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    run(std::env::args_os())
}
