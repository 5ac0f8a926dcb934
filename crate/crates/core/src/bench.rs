//! Comparison harness: LSH retrieval against an exhaustive scan, plus the
//! bicubic and bicubic+unsharp baselines. Search cost is counted in
//! similarity operations (one per training patch compared), which does not
//! depend on the machine.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::warn;

use crate::error::{param, Result};
use crate::image::{bicubic_upsample, downsample, gaussian_blur, Image};
use crate::lsh::{LshParams, PatchId, QueryResult};
use crate::metrics::{mse, psnr};
use crate::pipeline::{run_pipeline, Model, NeighborSearch, SrConfig};
use crate::training::PatchDb;

pub const CSV_HEADER: [&str; 7] = ["image", "method", "mse", "psnr", "similarity_ops", "wall_ms", "fallbacks"];

#[inline]
fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).powi(2)).sum()
}

/// Exact `k` nearest database features to `query` by l2 distance; ties go
/// to the lower ID.
pub fn exhaustive_knn(db: &PatchDb, query: &[f64], k: usize) -> Result<Vec<PatchId>> {
    knn_among(db, 0..db.len() as PatchId, db.len(), query, k)
}

fn knn_among(
    db: &PatchDb,
    ids: impl Iterator<Item = PatchId>,
    n: usize,
    query: &[f64],
    k: usize,
) -> Result<Vec<PatchId>> {
    if query.len() != db.feature_dim() {
        return param(format!(
            "query dimension {} does not match database feature dimension {}",
            query.len(),
            db.feature_dim()
        ));
    }
    if k > n {
        return param(format!("k = {k} exceeds the {n} searchable entries"));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut scored: Vec<(f64, PatchId)> = ids.map(|id| (sq_dist(db.feature(id), query), id)).collect();
    let cmp = |a: &(f64, PatchId), b: &(f64, PatchId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}

/// Full linear scan over the entries an index with the same parameters
/// would hold; every query costs one operation per scanned entry.
#[derive(Debug, Clone)]
pub struct ExhaustiveSearch<'a> {
    db: &'a PatchDb,
    k: usize,
    params: LshParams,
    eligible: Vec<PatchId>,
}

impl<'a> ExhaustiveSearch<'a> {
    /// Applies the energy gate of `params`; `k` neighbours per query.
    pub fn new(db: &'a PatchDb, k: usize, params: &LshParams) -> Self {
        let eligible = (0..db.len() as PatchId).filter(|&id| !params.gated(db.feature(id))).collect();
        Self {
            db,
            k,
            params: *params,
            eligible,
        }
    }

    pub fn len(&self) -> usize {
        self.eligible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eligible.is_empty()
    }
}

impl NeighborSearch for ExhaustiveSearch<'_> {
    fn search(&self, feature: &[f64]) -> Result<QueryResult> {
        let n = self.eligible.len();
        Ok(QueryResult {
            ids: knn_among(self.db, self.eligible.iter().copied(), n, feature, self.k.min(n))?,
            touched: n,
        })
    }

    fn gated(&self, feature: &[f64]) -> bool {
        self.params.gated(feature)
    }
}

/// `img + amount (img - blur(img, sigma))`, clamped to `[0, 1]`.
pub fn unsharp(img: &Image, amount: f64, sigma: f64) -> Result<Image> {
    if !(amount >= 0.0) || !amount.is_finite() {
        return param(format!("unsharp amount must be >= 0, got {amount}"));
    }
    let blurred = gaussian_blur(img, sigma)?;
    img.zip_map(&blurred, |v, b| (v + amount * (v - b)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ours,
    ExhaustiveLle,
    Bicubic,
    BicubicUnsharp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ours, Method::ExhaustiveLle, Method::Bicubic, Method::BicubicUnsharp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::ExhaustiveLle => "exhaustive-lle",
            Method::Bicubic => "bicubic",
            Method::BicubicUnsharp => "bicubic+unsharp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub image: String,
    pub method: Method,
    pub mse: f64,
    pub psnr: f64,
    pub similarity_ops: u64,
    /// Mean wall time per repeat; zero when timing is disabled.
    pub wall_ms: f64,
    pub fallbacks: u64,
    /// Back-projection error norms, for the pipeline methods.
    pub error_norms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub unsharp_amount: f64,
    pub unsharp_sigma: f64,
    /// Record wall-clock time. Off makes the CSV byte-reproducible.
    pub record_timing: bool,
    pub repeats: usize,
    /// Neighbours for the exhaustive baseline; `None` uses the LSH cap.
    pub exhaustive_k: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            unsharp_amount: 1.0,
            unsharp_sigma: 1.0,
            record_timing: true,
            repeats: 1,
            exhaustive_k: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub images: usize,
    /// Mean over images of exhaustive ops / our ops.
    pub mean_ops_speedup: f64,
    /// Total exhaustive ops / total our ops.
    pub total_ops_ratio: f64,
    /// Mean over images of MSE(ours) - MSE(exhaustive).
    pub mean_mse_delta: f64,
    pub mean_mse: Vec<(Method, f64)>,
}

impl BenchSummary {
    pub fn mean_mse_of(&self, m: Method) -> f64 {
        self.mean_mse.iter().find(|(k, _)| *k == m).map_or(f64::NAN, |x| x.1)
    }
}

fn fmt_f64(v: f64, prec: usize) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.prec$}")
    }
}

impl BenchReport {
    pub fn rows_for(&self, m: Method) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(move |r| r.method == m)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.image.clone(),
                r.method.to_string(),
                fmt_f64(r.mse, 10),
                fmt_f64(r.psnr, 4),
                r.similarity_ops.to_string(),
                fmt_f64(r.wall_ms, 3),
                r.fallbacks.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn summary(&self) -> BenchSummary {
        let ours: Vec<&BenchRow> = self.rows_for(Method::Ours).collect();
        let mut speedups = Vec::new();
        let mut deltas = Vec::new();
        let (mut ex_total, mut ours_total) = (0u64, 0u64);
        for o in &ours {
            if let Some(e) = self.rows_for(Method::ExhaustiveLle).find(|e| e.image == o.image) {
                speedups.push(e.similarity_ops as f64 / o.similarity_ops.max(1) as f64);
                deltas.push(o.mse - e.mse);
                ex_total += e.similarity_ops;
                ours_total += o.similarity_ops;
            }
        }
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        BenchSummary {
            images: ours.len(),
            mean_ops_speedup: mean(&speedups),
            total_ops_ratio: ex_total as f64 / ours_total.max(1) as f64,
            mean_mse_delta: mean(&deltas),
            mean_mse: Method::ALL
                .iter()
                .map(|&m| (m, mean(&self.rows_for(m).map(|r| r.mse).collect::<Vec<_>>())))
                .collect(),
        }
    }
}

/// Ground truth cropped to a multiple of `scale`, and its blurred,
/// decimated observation.
pub fn degrade(hr: &Image, blur_sigma: f64, scale: usize) -> Result<(Image, Image)> {
    let (w, h) = (hr.width() / scale * scale, hr.height() / scale * scale);
    let hr = hr.crop(0, 0, w, h)?;
    let lr = downsample(&gaussian_blur(&hr, blur_sigma)?, scale)?;
    Ok((hr, lr))
}

fn timed<T>(repeats: usize, record: bool, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let mut out = f()?;
    for _ in 1..repeats {
        out = f()?;
    }
    let ms = if record {
        start.elapsed().as_secs_f64() * 1e3 / repeats as f64
    } else {
        0.0
    };
    Ok((out, ms))
}

/// Runs all four methods on every test image, in order.
pub fn bench_run(test_images: &[(String, Image)], model: &Model, cfg: &SrConfig, opts: &BenchOptions) -> Result<BenchReport> {
    let index = model.index()?;
    let db = model.db();
    let repeats = opts.repeats.max(1);
    let k = opts.exhaustive_k.unwrap_or(cfg.lsh.max_candidates);
    let exhaustive = ExhaustiveSearch::new(db, k, index.params());
    let mut report = BenchReport::default();

    for (name, img) in test_images {
        let (truth, lr) = match degrade(img, cfg.blur_sigma, cfg.scale) {
            Ok(pair) if pair.1.width() * cfg.scale >= cfg.patch_size && pair.1.height() * cfg.scale >= cfg.patch_size => pair,
            Ok(_) => {
                warn!("skipping {name}: too small for the patch size");
                continue;
            }
            Err(e) => {
                warn!("skipping {name}: {e}");
                continue;
            }
        };

        for method in Method::ALL {
            let (row_img, ops, fallbacks, norms, ms) = match method {
                Method::Ours | Method::ExhaustiveLle => {
                    let (res, ms) = timed(repeats, opts.record_timing, || match method {
                        Method::Ours => run_pipeline(db, index, &lr, cfg.scale, cfg.scale, cfg),
                        _ => run_pipeline(db, &exhaustive, &lr, cfg.scale, cfg.scale, cfg),
                    })?;
                    (
                        res.hr_image,
                        res.similarity_ops_total as u64,
                        res.fallback_patch_count as u64,
                        res.per_iteration_error_norm,
                        ms,
                    )
                }
                Method::Bicubic => {
                    let (up, ms) = timed(repeats, opts.record_timing, || bicubic_upsample(&lr, cfg.scale))?;
                    (up, 0, 0, Vec::new(), ms)
                }
                Method::BicubicUnsharp => {
                    let (up, ms) = timed(repeats, opts.record_timing, || {
                        unsharp(&bicubic_upsample(&lr, cfg.scale)?, opts.unsharp_amount, opts.unsharp_sigma)
                    })?;
                    (up, 0, 0, Vec::new(), ms)
                }
            };
            report.rows.push(BenchRow {
                image: name.clone(),
                method,
                mse: mse(&row_img, &truth)?,
                psnr: psnr(&row_img, &truth)?,
                similarity_ops: ops,
                wall_ms: ms,
                fallbacks,
                error_norms: norms,
            });
        }
    }
    Ok(report)
}
