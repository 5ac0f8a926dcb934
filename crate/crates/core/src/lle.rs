//! Locally-linear reconstruction weights.
//!
//! Solves `min_w || y - sum_m w_m y_m ||^2` subject to `sum_m w_m = 1`
//! through the local Gram matrix `G_mn = (y - y_m) . (y - y_n)`: the
//! minimizer is proportional to `G^{-1} 1`. A trace-relative ridge keeps
//! the system positive definite when `G` is singular, i.e. when neighbours
//! outnumber dimensions or the factorization is numerically unusable.

use crate::error::{param, Result};
use crate::lsh::PatchId;

/// Trace-relative ridge applied to the Gram matrix.
pub const DEFAULT_RIDGE: f64 = 1e-3;

/// Ridge used when the caller asks for none but `G` is singular.
const ZERO_TRACE_RIDGE: f64 = 1e-12;

/// Smallest squared Cholesky pivot, relative to `trace(G) / M`, accepted
/// for an unregularized solve.
const PIVOT_FLOOR: f64 = 1e-10;

/// Affine reconstruction coefficients (they sum to one; signs are free).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    /// Ridge actually added to the Gram diagonal.
    pub conditioning_ridge: f64,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Parallel LR/HR neighbour data for one target patch.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    ids: Vec<PatchId>,
    lr: Vec<Vec<f64>>,
    hr: Vec<Vec<f64>>,
}

impl NeighborSet {
    pub fn new(ids: Vec<PatchId>, lr: Vec<Vec<f64>>, hr: Vec<Vec<f64>>) -> Result<Self> {
        if ids.is_empty() {
            return param("neighbour set is empty");
        }
        if ids.len() != lr.len() || ids.len() != hr.len() {
            return param("neighbour ids, LR vectors and HR patches differ in length");
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return param("neighbour set contains duplicate ids");
        }
        if lr.iter().any(|v| v.len() != lr[0].len()) || hr.iter().any(|v| v.len() != hr[0].len()) {
            return param("neighbour vectors have inconsistent dimensions");
        }
        Ok(Self { ids, lr, hr })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[PatchId] {
        &self.ids
    }

    pub fn lr(&self) -> &[Vec<f64>] {
        &self.lr
    }

    pub fn hr(&self) -> &[Vec<f64>] {
        &self.hr
    }
}

/// In-place Cholesky factorization of a symmetric `n x n` row-major matrix.
/// Returns false if a pivot is not strictly positive.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves for weights with the default ridge.
pub fn solve_weights(target: &[f64], neighbors: &NeighborSet) -> Result<WeightVector> {
    solve_weights_raw(target, neighbors.lr(), DEFAULT_RIDGE)
}

/// When the trace-relative ridge is added to the Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RidgeMode {
    /// Only when `G` is singular (more neighbours than dimensions, or a
    /// failed factorization); otherwise the exact minimizer is returned.
    #[default]
    WhenSingular,
    /// Always, as a Tikhonov penalty on the weights. Shrinks extreme
    /// weights when few, poorly matched neighbours are available.
    Always,
}

/// Solves for weights of `neighbors` reconstructing `target`; `ridge` is
/// relative to `trace(G) / M` and applied only when `G` is singular.
pub fn solve_weights_raw<V: AsRef<[f64]>>(target: &[f64], neighbors: &[V], ridge: f64) -> Result<WeightVector> {
    solve_weights_with(target, neighbors, ridge, RidgeMode::WhenSingular)
}

/// [`solve_weights_raw`] with an explicit ridge policy.
pub fn solve_weights_with<V: AsRef<[f64]>>(
    target: &[f64],
    neighbors: &[V],
    ridge: f64,
    mode: RidgeMode,
) -> Result<WeightVector> {
    let m = neighbors.len();
    if m == 0 {
        return param("need at least one neighbour");
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return param(format!("ridge must be non-negative, got {ridge}"));
    }
    let dim = target.len();
    if neighbors.iter().any(|v| v.as_ref().len() != dim) {
        return param("neighbour dimension does not match target");
    }
    if target.iter().chain(neighbors.iter().flat_map(|v| v.as_ref())).any(|x| !x.is_finite()) {
        return param("non-finite input to weight solver");
    }
    if m == 1 {
        return Ok(WeightVector {
            weights: vec![1.0],
            conditioning_ridge: 0.0,
        });
    }

    let diffs: Vec<Vec<f64>> = neighbors
        .iter()
        .map(|v| target.iter().zip(v.as_ref()).map(|(t, y)| t - y).collect())
        .collect();
    let mut gram = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let g: f64 = diffs[i].iter().zip(&diffs[j]).map(|(a, b)| a * b).sum();
            gram[i * m + j] = g;
            gram[j * m + i] = g;
        }
    }
    // Neighbours at zero distance reconstruct the target exactly.
    let exact: Vec<usize> = (0..m).filter(|&i| gram[i * m + i] == 0.0).collect();
    if !exact.is_empty() {
        let mut weights = vec![0.0; m];
        for &i in &exact {
            weights[i] = 1.0 / exact.len() as f64;
        }
        return Ok(WeightVector {
            weights,
            conditioning_ridge: 0.0,
        });
    }

    let trace: f64 = (0..m).map(|i| gram[i * m + i]).sum();
    let scale = trace / m as f64;

    // With no more neighbours than dimensions G is generically nonsingular
    // and the constrained problem has a unique solution; the ridge is only
    // needed when that factorization is numerically unusable.
    if mode == RidgeMode::WhenSingular && m <= dim {
        if let Some(weights) = solve_shifted(&gram, m, 0.0, PIVOT_FLOOR * scale) {
            return Ok(WeightVector {
                weights,
                conditioning_ridge: 0.0,
            });
        }
    }

    let mut delta = ridge * scale;
    if delta == 0.0 {
        delta = ZERO_TRACE_RIDGE * scale.max(1.0);
    }
    loop {
        if let Some(weights) = solve_shifted(&gram, m, delta, 0.0) {
            return Ok(WeightVector {
                weights,
                conditioning_ridge: delta,
            });
        }
        // Numerically indefinite: strengthen the ridge and retry.
        delta *= 10.0;
        if !delta.is_finite() {
            return param("weight system could not be conditioned");
        }
    }
}

/// Solves `(G + delta I) w = 1` and normalizes `w` to sum one. `None` if the
/// factorization breaks down or a squared pivot falls below `min_pivot`.
fn solve_shifted(gram: &[f64], m: usize, delta: f64, min_pivot: f64) -> Option<Vec<f64>> {
    let mut a = gram.to_vec();
    for i in 0..m {
        a[i * m + i] += delta;
    }
    if !cholesky(&mut a, m) || (0..m).any(|i| a[i * m + i] * a[i * m + i] < min_pivot) {
        return None;
    }
    let mut w = vec![1.0; m];
    cholesky_solve(&a, m, &mut w);
    let s: f64 = w.iter().sum();
    if !s.is_finite() || s.abs() <= f64::MIN_POSITIVE || w.iter().any(|x| !x.is_finite()) {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= s);
    Some(w)
}

/// `sum_m w_m x_m`, elementwise. No clamping, so the map stays linear.
pub fn reconstruct_hr<V: AsRef<[f64]>>(weights: &WeightVector, hr: &[V]) -> Result<Vec<f64>> {
    if weights.len() != hr.len() {
        return param(format!(
            "{} weights for {} HR patches",
            weights.len(),
            hr.len()
        ));
    }
    let Some(first) = hr.first() else {
        return param("no HR patches to combine");
    };
    let n = first.as_ref().len();
    let mut out = vec![0.0; n];
    for (w, x) in weights.weights.iter().zip(hr) {
        let x = x.as_ref();
        if x.len() != n {
            return param("HR patches have inconsistent sizes");
        }
        for (o, v) in out.iter_mut().zip(x) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// `|| target - sum_m w_m y_m ||^2`.
pub fn reconstruction_error<V: AsRef<[f64]>>(target: &[f64], neighbors: &[V], weights: &[f64]) -> f64 {
    (0..target.len())
        .map(|d| {
            let rec: f64 = weights.iter().zip(neighbors).map(|(w, y)| w * y.as_ref()[d]).sum();
            (target[d] - rec).powi(2)
        })
        .sum()
}
