//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pzsr_core::Image;

/// `|| target - sum_m w_m y_m ||^2`.
pub fn lle_objective(target: &[f64], neighbors: &[Vec<f64>], w: &[f64]) -> f64 {
    (0..target.len())
        .map(|i| {
            let rec: f64 = neighbors.iter().zip(w).map(|(y, wm)| wm * y[i]).sum();
            (target[i] - rec).powi(2)
        })
        .sum()
}

/// Equality-constrained least squares by substitution `w_M = 1 - sum_{m<M} w_m`,
/// then an SVD least-squares solve of the free coefficients.
/// Returns the weights and the attained objective.
pub fn lle_oracle(target: &[f64], neighbors: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let m = neighbors.len();
    let dim = target.len();
    if m == 1 {
        return (vec![1.0], lle_objective(target, neighbors, &[1.0]));
    }
    let last = &neighbors[m - 1];
    let a = DMatrix::from_fn(dim, m - 1, |i, j| neighbors[j][i] - last[i]);
    let b = DVector::from_fn(dim, |i, _| target[i] - last[i]);
    let svd = a.svd(true, true);
    let free = svd.solve(&b, 1e-13).expect("svd solve");
    let mut w: Vec<f64> = free.iter().copied().collect();
    w.push(1.0 - w.iter().sum::<f64>());
    let obj = lle_objective(target, neighbors, &w);
    (w, obj)
}

fn clamped(img: &Image, x: isize, y: isize) -> f64 {
    let cx = x.clamp(0, img.width() as isize - 1) as usize;
    let cy = y.clamp(0, img.height() as isize - 1) as usize;
    img.get(cx, cy)
}

/// Direct evaluation of the approximate cross-bilateral filter: the range
/// term from a brute-force clipped window mean of the guide, the spatial
/// term from an explicit normalized 2-D Gaussian sum with edge replication.
pub fn naive_approx_cross_bilateral(err_up: &Image, guide: &Image, sigma_c: f64, sigma_s: f64, radius: usize) -> Image {
    let (w, h) = (err_up.width(), err_up.height());
    let r = radius as isize;
    let mut norm = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            norm += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_c * sigma_c)).exp();
        }
    }
    Image::from_fn(w, h, |x, y| {
        let mean = brute_box_mean(guide, x, y, radius);
        let d = guide.get(x, y) - mean;
        let range = (-d * d / (2.0 * sigma_s * sigma_s)).exp();
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let c = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_c * sigma_c)).exp();
                acc += c * clamped(err_up, x as isize + dx, y as isize + dy);
            }
        }
        range * acc / norm
    })
}

/// Mean over the `(2 radius + 1)^2` window clipped to the image.
pub fn brute_box_mean(img: &Image, x: usize, y: usize, radius: usize) -> f64 {
    let x0 = x.saturating_sub(radius);
    let y0 = y.saturating_sub(radius);
    let x1 = (x + radius).min(img.width() - 1);
    let y1 = (y + radius).min(img.height() - 1);
    let mut sum = 0.0;
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            sum += img.get(xx, yy);
        }
    }
    sum / ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64
}

/// Explicit 2-D Gaussian blur, kernel radius `ceil(3 sigma)`, edge-replicated.
pub fn brute_gaussian_blur(img: &Image, sigma: f64) -> Image {
    let r = (3.0 * sigma).ceil() as isize;
    Image::from_fn(img.width(), img.height(), |x, y| {
        let (mut acc, mut norm) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let c = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                acc += c * clamped(img, x as isize + dx, y as isize + dy);
                norm += c;
            }
        }
        acc / norm
    })
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
