//! Super-resolution inference.
//!
//! 1. Bicubic-upsample the LR input onto the HR grid.
//! 2. Cut it into overlapping patches and hash their gradient features.
//! 3. For each patch, solve LLE weights over the retrieved LR neighbours and
//!    transfer them to the paired HR patches (one pass over the patches).
//! 4. Blend overlapping predictions with separable ramp weights.
//! 5. Refine by back-projecting the reprojection error through the
//!    approximate cross-bilateral filter.

use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::features::gradient_features;
use crate::image::{
    bicubic_resize, bicubic_stretch, convolve_separable, downsample_xy, extract_patches, Image, Kernel,
};
use crate::integral::IntegralImage;
use crate::lle::{reconstruct_hr, solve_weights_with, RidgeMode};
use crate::lsh::{build_index, PatchId, tune_r_for_table, LshIndex, LshParams, QueryResult, TunedR, DEFAULT_MIN_ENERGY};
use crate::training::PatchDb;

/// Vector space in which LLE weights are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverSpace {
    /// Mean-subtracted LR patch pixels.
    #[default]
    Pixels,
    /// The gradient feature vectors used for hashing.
    Features,
}

/// Trace-relative ridge used when solving weights over retrieved neighbours.
/// Hash candidates are only loosely local, so heavier damping than the exact
/// solver's pulls the weights toward the candidate mean.
pub const PIPELINE_RIDGE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SrConfig {
    pub patch_size: usize,
    pub overlap: usize,
    pub scale: usize,
    /// Spread of the Gaussian degradation kernel `g`.
    pub blur_sigma: f64,
    pub lsh: LshParams,
    pub solver_space: SolverSpace,
    /// Trace-relative Gram ridge.
    pub ridge: f64,
    pub ridge_mode: RidgeMode,
    /// Back-projection iterations.
    pub iterations: usize,
    /// Relative decrease of the error norm below which iteration stops.
    pub tolerance: f64,
    /// Spatial spread of the back-projection filter.
    pub sigma_c: f64,
    /// Range spread of the back-projection filter.
    pub sigma_s: f64,
    pub bilateral_radius: usize,
    /// Weight of the overlap smoothness prior. The ramp blend used for
    /// assembly does not depend on it; kept so configs round-trip.
    pub sigma_o: f64,
    /// Recompute the filter guide from the current error every iteration
    /// instead of keeping the bicubic reprojection error fixed.
    pub recompute_guide: bool,
    pub seed: u64,
}

impl Default for SrConfig {
    fn default() -> Self {
        Self {
            patch_size: 5,
            overlap: 1,
            scale: 2,
            blur_sigma: 1.0,
            lsh: LshParams {
                min_energy: DEFAULT_MIN_ENERGY,
                ..LshParams::default()
            },
            solver_space: SolverSpace::Pixels,
            ridge: PIPELINE_RIDGE,
            ridge_mode: RidgeMode::Always,
            iterations: 5,
            tolerance: 1e-4,
            sigma_c: 1.5,
            sigma_s: 0.1,
            bilateral_radius: 3,
            sigma_o: 1.0,
            recompute_guide: false,
            seed: 42,
        }
    }
}

impl SrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.overlap >= self.patch_size {
            return param("need patch_size > overlap >= 0");
        }
        if self.scale < 1 {
            return param("scale factor must be >= 1");
        }
        for (name, v) in [
            ("blur_sigma", self.blur_sigma),
            ("sigma_c", self.sigma_c),
            ("sigma_s", self.sigma_s),
            ("sigma_o", self.sigma_o),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return param(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.ridge >= 0.0) || !(self.tolerance >= 0.0) {
            return param("ridge and tolerance must be non-negative");
        }
        self.lsh.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrResult {
    pub hr_image: Image,
    /// `||e_r||_2` of the reprojection error before any back-projection.
    pub initial_error_norm: f64,
    /// `||e_r||_2` after each back-projection update that was applied.
    pub per_iteration_error_norm: Vec<f64>,
    pub similarity_ops_total: usize,
    pub fallback_patch_count: usize,
    /// Patches below the search's energy gate, passed through unsearched.
    pub flat_patch_count: usize,
    pub patches_inferred: usize,
    /// Blended patch predictions before back-projection (unclamped).
    pub assembled: Image,
}

/// Source of candidate neighbours for a query feature.
pub trait NeighborSearch: Sync {
    fn search(&self, feature: &[f64]) -> Result<QueryResult>;

    /// Query features this source declines to search (too flat).
    fn gated(&self, _feature: &[f64]) -> bool {
        false
    }
}

impl NeighborSearch for LshIndex {
    fn search(&self, feature: &[f64]) -> Result<QueryResult> {
        self.query(feature)
    }

    fn gated(&self, feature: &[f64]) -> bool {
        self.params().gated(feature)
    }
}

/// A search that never finds anything; every patch takes the fallback path.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyIndex;

impl NeighborSearch for EmptyIndex {
    fn search(&self, _feature: &[f64]) -> Result<QueryResult> {
        Ok(QueryResult::default())
    }
}

/// Indexes every ungated feature of `db`, first tuning `r` so that a whole
/// table (`k` joint projections) averages `target_occupancy` IDs per
/// non-empty bucket. `params.r` is ignored.
pub fn index_db_auto(db: &PatchDb, params: &LshParams, target_occupancy: usize) -> Result<(LshIndex, TunedR)> {
    params.validate()?;
    let rows: Vec<(PatchId, &[f32])> = db.feature_rows().into_iter().filter(|(_, f)| !params.gated(f)).collect();
    let samples: Vec<Vec<f64>> = rows.iter().map(|(_, f)| f.iter().map(|&v| v as f64).collect()).collect();
    let tuned = tune_r_for_table(&samples, params.k, target_occupancy, params.seed)?;
    let index = build_index(&rows, &LshParams { r: tuned.r, ..*params })?;
    Ok((index, tuned))
}

/// Training database plus its hash index.
#[derive(Debug, Clone)]
pub struct Model {
    db: PatchDb,
    index: Option<LshIndex>,
}

impl Model {
    pub fn new(db: PatchDb, index: LshIndex) -> Result<Self> {
        if index.dim() != db.feature_dim() {
            return param(format!(
                "index dimension {} does not match database feature dimension {}",
                index.dim(),
                db.feature_dim()
            ));
        }
        if index.len() > db.len() {
            return param("index references more patches than the database holds");
        }
        Ok(Self { db, index: Some(index) })
    }

    /// A model whose index has not been attached yet.
    pub fn unindexed(db: PatchDb) -> Self {
        Self { db, index: None }
    }

    pub fn db(&self) -> &PatchDb {
        &self.db
    }

    pub fn index(&self) -> Result<&LshIndex> {
        self.index
            .as_ref()
            .ok_or_else(|| Error::State("model has no hash index loaded".into()))
    }

    /// Config for this model's geometry with every other field defaulted.
    pub fn default_config(&self) -> SrConfig {
        let c = self.db.config();
        SrConfig {
            patch_size: c.patch_size,
            scale: c.scale,
            blur_sigma: c.blur_sigma,
            lsh: self.index.as_ref().map_or_else(LshParams::default, |i| *i.params()),
            ..SrConfig::default()
        }
    }

    pub fn infer_patch(&self, lr_patch: &[f64], lr_feature: &[f64], cfg: &SrConfig) -> Result<PatchInference> {
        infer_patch(&self.db, self.index()?, lr_patch, lr_feature, cfg)
    }
}

/// Predicted HR block for one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchInference {
    pub hr: Vec<f64>,
    /// Similarity operations charged to this query.
    pub ops: usize,
    /// No neighbours were found and the upsampled LR patch was returned.
    pub fallback: bool,
    /// The patch was below the energy gate and was not searched.
    pub flat: bool,
}

fn centred(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = v.collect();
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    v.into_iter().map(|x| x - m).collect()
}

/// Features are stored as f32; round queries the same way so identical
/// patches hash identically.
pub fn query_feature(patch: &[f64], cfg_patch: usize, db: &PatchDb) -> Result<Vec<f64>> {
    let f = gradient_features(patch, cfg_patch, db.config().feature_order)?;
    Ok(f.into_iter().map(|v| v as f32 as f64).collect())
}

/// Predicts the HR block for one LR patch (taken from the upsampled image).
///
/// LLE weights are solved over the retrieved neighbours and applied to the
/// neighbours' HR-minus-LR detail, which is added back onto the query patch.
/// Gated (flat) queries and queries without candidates return the query
/// patch itself; only the latter count as fallbacks.
pub fn infer_patch<S: NeighborSearch + ?Sized>(
    db: &PatchDb,
    search: &S,
    lr_patch: &[f64],
    lr_feature: &[f64],
    cfg: &SrConfig,
) -> Result<PatchInference> {
    let p2 = db.config().patch_size * db.config().patch_size;
    if lr_patch.len() != p2 {
        return param(format!("patch has {} samples, database patches have {p2}", lr_patch.len()));
    }
    if search.gated(lr_feature) {
        return Ok(PatchInference {
            hr: lr_patch.to_vec(),
            ops: 0,
            fallback: false,
            flat: true,
        });
    }
    let res = search.search(lr_feature)?;
    if res.ids.is_empty() {
        return Ok(PatchInference {
            hr: lr_patch.to_vec(),
            ops: res.touched,
            fallback: true,
            flat: false,
        });
    }

    let (target, neighbors): (Vec<f64>, Vec<Vec<f64>>) = match cfg.solver_space {
        SolverSpace::Pixels => (
            centred(lr_patch.iter().copied()),
            res.ids
                .iter()
                .map(|&id| centred(db.lr(id).iter().map(|&v| v as f64)))
                .collect(),
        ),
        SolverSpace::Features => (
            lr_feature.to_vec(),
            res.ids
                .iter()
                .map(|&id| db.feature(id).iter().map(|&v| v as f64).collect())
                .collect(),
        ),
    };
    let weights = solve_weights_with(&target, &neighbors, cfg.ridge, cfg.ridge_mode)?;
    let details: Vec<Vec<f64>> = res
        .ids
        .iter()
        .map(|&id| {
            db.hr(id)
                .iter()
                .zip(db.lr(id))
                .map(|(&h, &l)| h as f64 - l as f64)
                .collect()
        })
        .collect();
    let detail = reconstruct_hr(&weights, &details)?;
    Ok(PatchInference {
        hr: lr_patch.iter().zip(detail).map(|(a, d)| a + d).collect(),
        ops: res.touched,
        fallback: false,
        flat: false,
    })
}

/// 1-D blend weights for a patch row: a linear ramp `(i + 1) / (overlap + 1)`
/// rising from each border over the overlap width, 1 in the interior.
pub fn blend_ramp(patch_size: usize, overlap: usize) -> Vec<f64> {
    let ramp = (overlap + 1) as f64;
    (0..patch_size)
        .map(|i| {
            let from_edge = (i + 1).min(patch_size - i) as f64;
            (from_edge / ramp).min(1.0)
        })
        .collect()
}

/// Weighted average of all patch predictions covering each pixel, with
/// separable ramp weights per patch.
pub fn assemble_image(
    patches: &[Vec<f64>],
    origins: &[(usize, usize)],
    width: usize,
    height: usize,
    patch_size: usize,
    overlap: usize,
) -> Result<Image> {
    if patches.len() != origins.len() {
        return param("patch and origin counts differ");
    }
    if overlap >= patch_size {
        return param("need patch_size > overlap");
    }
    let ramp = blend_ramp(patch_size, overlap);
    let mut acc = vec![0.0; width * height];
    let mut wsum = vec![0.0; width * height];
    for (patch, &(ox, oy)) in patches.iter().zip(origins) {
        if patch.len() != patch_size * patch_size || ox + patch_size > width || oy + patch_size > height {
            return param(format!("patch at ({ox}, {oy}) does not fit the output grid"));
        }
        for py in 0..patch_size {
            for px in 0..patch_size {
                let w = ramp[px] * ramp[py];
                let i = (oy + py) * width + ox + px;
                acc[i] += w * patch[py * patch_size + px];
                wsum[i] += w;
            }
        }
    }
    if wsum.contains(&0.0) {
        return param("patch grid leaves pixels uncovered");
    }
    let data = acc.iter().zip(&wsum).map(|(a, w)| a / w).collect();
    Image::from_vec(width, height, data)
}

/// `(I_H * g) decimated - I_L`, at LR resolution.
pub fn error_image(hr: &Image, lr: &Image, g: &Kernel, factor: usize) -> Result<Image> {
    error_image_xy(hr, lr, g, factor, factor)
}

pub fn error_image_xy(hr: &Image, lr: &Image, g: &Kernel, fx: usize, fy: usize) -> Result<Image> {
    if fx < 1 || fy < 1 {
        return param("scale factor must be >= 1");
    }
    if hr.width() != lr.width() * fx || hr.height() != lr.height() * fy {
        return param(format!(
            "HR {:?} is not ({fx}, {fy}) times LR {:?}",
            hr.dims(),
            lr.dims()
        ));
    }
    let sim = downsample_xy(&convolve_separable(hr, g), fx, fy)?;
    sim.zip_map(lr, |a, b| a - b)
}

/// Range term `exp(-(I(x) - mean_window(I)(x))^2 / 2 sigma_s^2)` for every
/// pixel, with window means from an integral image.
pub fn range_weights(guide: &Image, sigma_s: f64, radius: usize) -> Result<Image> {
    if !(sigma_s > 0.0) {
        return param("sigma_s must be positive");
    }
    let ii = IntegralImage::new(guide);
    let denom = 2.0 * sigma_s * sigma_s;
    Ok(Image::from_fn(guide.width(), guide.height(), |x, y| {
        let d = guide.get(x, y) - ii.box_mean(x, y, radius);
        (-d * d / denom).exp()
    }))
}

/// `I_s (elementwise) (E * C)`: the range term is computed on `guide` in
/// constant time per pixel, the spatial term is a normalized Gaussian of
/// spread `sigma_c` truncated at `radius` applied to `err_up`.
pub fn approx_cross_bilateral(err_up: &Image, guide: &Image, sigma_c: f64, sigma_s: f64, radius: usize) -> Result<Image> {
    if err_up.dims() != guide.dims() {
        return param("error image and guide differ in size");
    }
    if !(sigma_c > 0.0) || !(sigma_s > 0.0) {
        return param("bilateral sigmas must be positive");
    }
    let spatial = convolve_separable(err_up, &Kernel::gaussian_with_radius(sigma_c, radius)?);
    let range = range_weights(guide, sigma_s, radius)?;
    spatial.zip_map(&range, |a, b| a * b)
}

/// Classical bilateral filter with per-pixel normalization, evaluated
/// directly over the `(2 radius + 1)^2` window (edge-replicated). Reference
/// for the constant-time approximation.
pub fn naive_bilateral(img: &Image, sigma_c: f64, sigma_s: f64, radius: usize) -> Result<Image> {
    if !(sigma_c > 0.0) || !(sigma_s > 0.0) {
        return param("bilateral sigmas must be positive");
    }
    let r = radius as isize;
    let dc = 2.0 * sigma_c * sigma_c;
    let ds = 2.0 * sigma_s * sigma_s;
    Ok(Image::from_fn(img.width(), img.height(), |x, y| {
        let center = img.get(x, y);
        let mut num = 0.0;
        let mut k = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let v = img.get_clamped(x as isize + dx, y as isize + dy);
                let c = (-((dx * dx + dy * dy) as f64) / dc).exp();
                let s = (-(center - v).powi(2) / ds).exp();
                num += v * c * s;
                k += c * s;
            }
        }
        num / k
    }))
}

/// Upsamples `lr` by `scale` and refines it.
pub fn super_resolve(model: &Model, lr: &Image, cfg: &SrConfig) -> Result<SrResult> {
    run_pipeline(model.db(), model.index()?, lr, cfg.scale, cfg.scale, cfg)
}

/// Same machinery at unit scale: patch inference plus back-projection.
pub fn deblur(model: &Model, blurred: &Image, cfg: &SrConfig) -> Result<SrResult> {
    run_pipeline(model.db(), model.index()?, blurred, 1, 1, cfg)
}

/// Anisotropic bicubic stretch by `(fx, fy)` followed by the standard pipeline.
pub fn stretch(model: &Model, img: &Image, fx: usize, fy: usize, cfg: &SrConfig) -> Result<SrResult> {
    run_pipeline(model.db(), model.index()?, img, fx, fy, cfg)
}

/// Full pipeline for any neighbour source and per-axis integer factors.
pub fn run_pipeline<S: NeighborSearch + ?Sized>(
    db: &PatchDb,
    search: &S,
    lr: &Image,
    fx: usize,
    fy: usize,
    cfg: &SrConfig,
) -> Result<SrResult> {
    cfg.validate()?;
    if lr.is_empty() {
        return param("input image is empty");
    }
    if cfg.patch_size != db.config().patch_size {
        return param(format!(
            "config patch size {} differs from database patch size {}",
            cfg.patch_size,
            db.config().patch_size
        ));
    }
    let p = cfg.patch_size;

    let up = bicubic_stretch(lr, fx, fy)?;
    let grid = extract_patches(&up, p, cfg.overlap)?;
    let inferred: Vec<PatchInference> = grid
        .patches
        .par_iter()
        .map(|patch| {
            let feature = query_feature(patch, p, db)?;
            infer_patch(db, search, patch, &feature, cfg)
        })
        .collect::<Result<_>>()?;

    let similarity_ops_total = inferred.iter().map(|r| r.ops).sum();
    let fallback_patch_count = inferred.iter().filter(|r| r.fallback).count();
    let flat_patch_count = inferred.iter().filter(|r| r.flat).count();
    let blocks: Vec<Vec<f64>> = inferred.into_iter().map(|r| r.hr).collect();
    let assembled = assemble_image(&blocks, &grid.origins, up.width(), up.height(), p, cfg.overlap)?;

    let g = Kernel::gaussian(cfg.blur_sigma)?;
    let mut hr = assembled.clone();
    let mut err = error_image_xy(&hr, lr, &g, fx, fy)?;
    let initial_error_norm = err.l2_norm();
    let mut norms = Vec::with_capacity(cfg.iterations);
    if cfg.iterations > 0 {
        let mut guide = bicubic_resize(&error_image_xy(&up, lr, &g, fx, fy)?, fx, fy)?;
        let mut prev = initial_error_norm;
        for _ in 0..cfg.iterations {
            let err_up = bicubic_resize(&err, fx, fy)?;
            if cfg.recompute_guide {
                guide = err_up.clone();
            }
            let correction = approx_cross_bilateral(&err_up, &guide, cfg.sigma_c, cfg.sigma_s, cfg.bilateral_radius)?;
            // e_r is simulated-minus-observed, so the correction is subtracted.
            hr = hr.zip_map(&correction, |a, c| a - c)?;
            err = error_image_xy(&hr, lr, &g, fx, fy)?;
            let norm = err.l2_norm();
            norms.push(norm);
            if prev - norm < cfg.tolerance * prev {
                break;
            }
            prev = norm;
        }
    }

    Ok(SrResult {
        hr_image: hr.clamp01(),
        initial_error_norm,
        per_iteration_error_norm: norms,
        similarity_ops_total,
        fallback_patch_count,
        flat_patch_count,
        patches_inferred: grid.len(),
        assembled,
    })
}
