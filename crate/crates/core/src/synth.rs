//! Procedural grayscale scenes: shaded backgrounds with anti-aliased
//! discs, rotated boxes, strokes and striped texture. Used as a
//! reproducible stand-in corpus for tests, demos and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Box { cx: f64, cy: f64, hw: f64, hh: f64, cos: f64, sin: f64 },
    Stroke { x0: f64, y0: f64, x1: f64, y1: f64, half: f64 },
}

impl Shape {
    /// Signed distance in pixels, negative inside.
    fn sdf(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Disc { cx, cy, r } => ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r,
            Shape::Box { cx, cy, hw, hh, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let u = (dx * cos + dy * sin).abs() - hw;
                let v = (-dx * sin + dy * cos).abs() - hh;
                let outside = (u.max(0.0).powi(2) + v.max(0.0).powi(2)).sqrt();
                outside + u.max(v).min(0.0)
            }
            Shape::Stroke { x0, y0, x1, y1, half } => {
                let (px, py, bx, by) = (x - x0, y - y0, x1 - x0, y1 - y0);
                let t = ((px * bx + py * by) / (bx * bx + by * by).max(1e-12)).clamp(0.0, 1.0);
                ((px - bx * t).powi(2) + (py - by * t).powi(2)).sqrt() - half
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Fill {
    base: f64,
    amp: f64,
    fx: f64,
    fy: f64,
    phase: f64,
}

impl Fill {
    fn at(&self, x: f64, y: f64) -> f64 {
        self.base + self.amp * (self.fx * x + self.fy * y + self.phase).sin()
    }
}

fn random_fill<R: Rng>(rng: &mut R, textured: bool) -> Fill {
    let (amp, freq) = if textured {
        (rng.random_range(0.05..0.2), rng.random_range(0.3..1.2))
    } else {
        (0.0, 0.0)
    };
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    Fill {
        base: rng.random_range(0.15..0.85),
        amp,
        fx: freq * angle.cos(),
        fy: freq * angle.sin(),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
    }
}

/// One deterministic scene per `(width, height, seed)`, values in `[0, 1]`.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let span = w.min(h).max(1.0);

    let g0 = rng.random_range(0.2..0.8);
    let gx = rng.random_range(-0.3..0.3) / w.max(1.0);
    let gy = rng.random_range(-0.3..0.3) / h.max(1.0);

    let count = 6 + ((w * h).sqrt() / 16.0) as usize + rng.random_range(0..6);
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let cx = rng.random_range(-0.1..1.1) * w;
        let cy = rng.random_range(-0.1..1.1) * h;
        let shape = match rng.random_range(0..3) {
            0 => Shape::Disc { cx, cy, r: rng.random_range(0.04..0.25) * span },
            1 => {
                let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                Shape::Box {
                    cx,
                    cy,
                    hw: rng.random_range(0.03..0.25) * span,
                    hh: rng.random_range(0.03..0.25) * span,
                    cos: a.cos(),
                    sin: a.sin(),
                }
            }
            _ => Shape::Stroke {
                x0: cx,
                y0: cy,
                x1: rng.random_range(0.0..1.0) * w,
                y1: rng.random_range(0.0..1.0) * h,
                half: rng.random_range(0.5..3.0),
            },
        };
        let textured = rng.random_bool(0.35);
        let fill = random_fill(&mut rng, textured);
        let opacity = rng.random_range(0.6..1.0);
        layers.push((shape, fill, opacity));
    }

    Image::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = g0 + gx * px + gy * py;
        for (shape, fill, opacity) in &layers {
            let cover = (0.5 - shape.sdf(px, py)).clamp(0.0, 1.0) * opacity;
            if cover > 0.0 {
                v += (fill.at(px, py) - v) * cover;
            }
        }
        v.clamp(0.0, 1.0)
    })
}

/// `count` scenes with consecutive seeds starting at `seed`.
pub fn synthetic_corpus(count: usize, width: usize, height: usize, seed: u64) -> Vec<Image> {
    (0..count as u64).map(|i| synthetic_scene(width, height, seed.wrapping_add(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = synthetic_scene(64, 48, 7);
        assert_eq!(a, synthetic_scene(64, 48, 7));
        assert_ne!(a, synthetic_scene(64, 48, 8));
        assert_eq!(a.dims(), (64, 48));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn has_structure() {
        for seed in 0..5 {
            let img = synthetic_scene(96, 96, seed);
            let m = img.mean();
            let var = img.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / img.data().len() as f64;
            assert!(var > 1e-3, "seed {seed} variance {var}");
        }
    }

    #[test]
    fn box_sdf() {
        let b = Shape::Box { cx: 0.0, cy: 0.0, hw: 2.0, hh: 1.0, cos: 1.0, sin: 0.0 };
        assert_eq!(b.sdf(0.0, 0.0), -1.0);
        assert_eq!(b.sdf(3.0, 0.0), 1.0);
        assert_eq!(b.sdf(5.0, 5.0), 5.0);
    }
}
