use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pzsr_core::bench::{bench_run, BenchOptions, Method};
use pzsr_core::features::FeatureOrder;
use pzsr_core::image::{bicubic_stretch, Image};
use pzsr_core::io::{load_image, load_luma, save_image, ColorImage, LoadedImage};
use pzsr_core::lsh::{build_index, DEFAULT_MIN_ENERGY};
use pzsr_core::pipeline::{deblur, index_db_auto, stretch, super_resolve};
use pzsr_core::training::{build_db, load_db, save_db, DbConfig};
use pzsr_core::{Error, LshIndex, LshParams, Model, SampleSpec, SrConfig, SrResult};

#[derive(Parser)]
#[command(name = "pzsr", version, about = "Example-based super-resolution with LSH patch retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a patch-pair database from a directory of PNG images.
    Train(TrainArgs),
    /// Hash a patch database into an LSH index.
    Index(IndexArgs),
    /// Super-resolve an image by the database scale factor.
    Upscale(UpscaleArgs),
    /// Sharpen an image at its own resolution.
    Deblur(ModelIo),
    /// Stretch an image by integer per-axis factors.
    Stretch(StretchArgs),
    /// Compare ours, exhaustive LLE, bicubic and bicubic+unsharp on test images.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    patch: usize,
    #[arg(long, default_value_t = 2)]
    overlap: usize,
    #[arg(long, default_value_t = 2)]
    scale: usize,
    #[arg(long, default_value_t = 1.0)]
    blur_sigma: f64,
    /// Gradient features: first, second or both.
    #[arg(long, default_value = "first")]
    features: FeatureOrder,
    /// Side of the square sub-images sampled from each training image.
    #[arg(long, default_value_t = 100)]
    sub_image: usize,
    #[arg(long, default_value_t = 25)]
    samples_per_image: usize,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long = "L", visible_alias = "l", default_value_t = 30)]
    l: usize,
    #[arg(long, default_value_t = 2)]
    t: usize,
    /// Bucket width, or `auto` to tune it on the database features.
    #[arg(long, default_value = "auto")]
    r: String,
    /// Mean bucket occupancy targeted by `--r auto` (default: the candidate cap).
    #[arg(long)]
    target_occupancy: Option<usize>,
    /// Candidate cap per query (default 3 L).
    #[arg(long)]
    max_candidates: Option<usize>,
    /// Features with mean absolute value below this are not indexed; 0 disables.
    #[arg(long, default_value_t = DEFAULT_MIN_ENERGY)]
    min_energy: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ModelIo {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Back-projection iterations.
    #[arg(long, default_value_t = 5)]
    iters: usize,
    /// Skip back-projection; output the blended patch estimate.
    #[arg(long)]
    no_backproject: bool,
}

#[derive(Args)]
struct UpscaleArgs {
    #[command(flatten)]
    io: ModelIo,
}

#[derive(Args)]
struct StretchArgs {
    #[command(flatten)]
    io: ModelIo,
    #[arg(long, default_value_t = 2)]
    fx: usize,
    #[arg(long, default_value_t = 1)]
    fy: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Directory of ground-truth PNG images.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Timed runs per method and image.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Write wall_ms as 0 so the CSV is byte-identical across runs.
    #[arg(long)]
    no_timing: bool,
    #[arg(long, default_value_t = 1.0)]
    unsharp_amount: f64,
    #[arg(long, default_value_t = 1.0)]
    unsharp_sigma: f64,
    #[arg(long, default_value_t = 5)]
    iters: usize,
}

fn png_files(dir: &Path) -> pzsr_core::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Param(format!("no PNG images in {}", dir.display())));
    }
    Ok(files)
}

fn load_model(db: &Path, index: &Path) -> pzsr_core::Result<Model> {
    Model::new(load_db(db)?, LshIndex::load(index)?)
}

fn train(a: &TrainArgs) -> pzsr_core::Result<()> {
    let images = png_files(&a.images)?
        .iter()
        .map(load_luma)
        .collect::<pzsr_core::Result<Vec<_>>>()?;
    let config = DbConfig {
        patch_size: a.patch,
        overlap: a.overlap,
        scale: a.scale,
        blur_sigma: a.blur_sigma,
        feature_order: a.features,
    };
    let spec = SampleSpec {
        sub_image_size: a.sub_image,
        samples_per_image: a.samples_per_image,
    };
    let db = build_db(&images, &config, &spec, a.seed)?;
    save_db(&db, &a.out)?;
    println!("{} patch pairs from {} images -> {}", db.len(), images.len(), a.out.display());
    Ok(())
}

fn index(a: &IndexArgs) -> pzsr_core::Result<()> {
    let db = load_db(&a.db)?;
    let params = LshParams {
        k: a.k,
        l: a.l,
        t: a.t,
        r: 1.0,
        max_candidates: a.max_candidates.unwrap_or(3 * a.l),
        seed: a.seed,
        min_energy: a.min_energy,
    };
    let index = if a.r.eq_ignore_ascii_case("auto") {
        let target = a.target_occupancy.unwrap_or(params.max_candidates);
        let (index, tuned) = index_db_auto(&db, &params, target)?;
        if tuned.degenerate {
            warn!("features carry no spread; r fell back to {}", tuned.r);
        }
        info!("tuned r = {} (mean occupancy {:.1})", tuned.r, tuned.mean_occupancy);
        index
    } else {
        let r: f64 = a
            .r
            .parse()
            .map_err(|_| Error::Param(format!("--r must be a number or `auto`, got {}", a.r)))?;
        build_index(&db.feature_rows(), &LshParams { r, ..params })?
    };
    index.save(&a.out)?;
    println!(
        "{} of {} patches indexed in {} tables, r = {} -> {}",
        index.len(),
        db.len(),
        index.params().l,
        index.params().r,
        a.out.display()
    );
    Ok(())
}

/// Runs `sr` on the luma channel; chroma planes are resampled bicubically.
fn enhance(
    io: &ModelIo,
    factors: impl Fn(&Model) -> (usize, usize),
    sr: impl Fn(&Model, &Image, &SrConfig) -> pzsr_core::Result<SrResult>,
) -> pzsr_core::Result<()> {
    let model = load_model(&io.db, &io.index)?;
    let (fx, fy) = factors(&model);
    let cfg = SrConfig {
        iterations: if io.no_backproject { 0 } else { io.iters },
        ..model.default_config()
    };
    let input = load_image(&io.input)?;
    let (w, h) = input.luma().dims();
    let res = sr(&model, input.luma(), &cfg)?;
    let out = match input {
        LoadedImage::Gray(_) => LoadedImage::Gray(res.hr_image.clamp01()),
        LoadedImage::Color(c) => LoadedImage::Color(ColorImage {
            luma: res.hr_image.clamp01(),
            cb: bicubic_stretch(&c.cb, fx, fy)?,
            cr: bicubic_stretch(&c.cr, fx, fy)?,
        }),
    };
    save_image(&out, &io.out)?;
    println!(
        "{w}x{h} -> {}x{}, {} similarity ops, {} fallback patches -> {}",
        out.luma().width(),
        out.luma().height(),
        res.similarity_ops_total,
        res.fallback_patch_count,
        io.out.display()
    );
    Ok(())
}

fn bench(a: &BenchArgs) -> pzsr_core::Result<()> {
    let model = load_model(&a.db, &a.index)?;
    let cfg = SrConfig {
        iterations: a.iters,
        ..model.default_config()
    };
    let mut tests = Vec::new();
    for path in png_files(&a.test)? {
        let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        match load_luma(&path) {
            Ok(img) => tests.push((name, img)),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    let opts = BenchOptions {
        unsharp_amount: a.unsharp_amount,
        unsharp_sigma: a.unsharp_sigma,
        record_timing: !a.no_timing,
        repeats: a.repeats,
        exhaustive_k: None,
    };
    let report = bench_run(&tests, &model, &cfg, &opts)?;
    report.save_csv(&a.report)?;
    let s = report.summary();
    println!("images: {}", s.images);
    for m in Method::ALL {
        println!("mean mse {m}: {:.6e}", s.mean_mse_of(m));
    }
    println!("ops ratio (exhaustive / ours): {:.2}", s.total_ops_ratio);
    println!("mean mse delta (ours - exhaustive): {:.3e}", s.mean_mse_delta);
    println!("report -> {}", a.report.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Param(_) | Error::State(_) => 2,
        Error::Format { .. } | Error::Codec(_) | Error::Csv(_) => 3,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Index(a) => index(a),
        Command::Upscale(a) => enhance(
            &a.io,
            |m| (m.db().config().scale, m.db().config().scale),
            super_resolve,
        ),
        Command::Deblur(io) => enhance(io, |_| (1, 1), deblur),
        Command::Stretch(a) => enhance(&a.io, |_| (a.fx, a.fy), |m, img, cfg| stretch(m, img, a.fx, a.fy, cfg)),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
