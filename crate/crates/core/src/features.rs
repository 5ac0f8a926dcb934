//! Gradient feature vectors over LR patches, used as hash keys.

use crate::error::{param, Result};

/// Which gradient filters contribute channels to a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureOrder {
    /// `[-1, 0, 1]` and its transpose.
    #[default]
    First,
    /// `[-1, 0, 2, 0, -1]` and its transpose.
    Second,
    /// First-order channels followed by second-order channels.
    Both,
}

impl FeatureOrder {
    pub fn channels(self) -> usize {
        match self {
            FeatureOrder::First | FeatureOrder::Second => 2,
            FeatureOrder::Both => 4,
        }
    }

    pub fn dim(self, patch_size: usize) -> usize {
        patch_size * patch_size * self.channels()
    }

    pub fn to_u8(self) -> u8 {
        match self {
            FeatureOrder::First => 1,
            FeatureOrder::Second => 2,
            FeatureOrder::Both => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(FeatureOrder::First),
            2 => Some(FeatureOrder::Second),
            3 => Some(FeatureOrder::Both),
            _ => None,
        }
    }
}

impl std::str::FromStr for FeatureOrder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "first" => Ok(FeatureOrder::First),
            "second" => Ok(FeatureOrder::Second),
            "both" => Ok(FeatureOrder::Both),
            other => Err(format!("unknown feature order '{other}' (first|second|both)")),
        }
    }
}

// Taps as (offset, weight); responses are correlations, so a rising ramp
// gives a positive first-order response.
const FIRST: [(isize, f64); 2] = [(-1, -1.0), (1, 1.0)];
const SECOND: [(isize, f64); 3] = [(-2, -1.0), (0, 2.0), (2, -1.0)];

fn respond(patch: &[f64], size: usize, taps: &[(isize, f64)], horizontal: bool, out: &mut Vec<f64>) {
    let last = size as isize - 1;
    for y in 0..size as isize {
        for x in 0..size as isize {
            let mut acc = 0.0;
            for &(off, w) in taps {
                let (sx, sy) = if horizontal {
                    ((x + off).clamp(0, last), y)
                } else {
                    (x, (y + off).clamp(0, last))
                };
                acc += w * patch[(sy * size as isize + sx) as usize];
            }
            out.push(acc);
        }
    }
}

/// Concatenated per-pixel gradient responses of a square `size` x `size`
/// patch, computed with edge replication inside the patch.
pub fn gradient_features(patch: &[f64], size: usize, order: FeatureOrder) -> Result<Vec<f64>> {
    if patch.len() != size * size {
        return param(format!("patch has {} samples, expected {size}x{size}", patch.len()));
    }
    if order != FeatureOrder::First && size < 5 {
        return param("second-order gradient features need patches of at least 5x5");
    }
    let mut out = Vec::with_capacity(order.dim(size));
    if matches!(order, FeatureOrder::First | FeatureOrder::Both) {
        respond(patch, size, &FIRST, true, &mut out);
        respond(patch, size, &FIRST, false, &mut out);
    }
    if matches!(order, FeatureOrder::Second | FeatureOrder::Both) {
        respond(patch, size, &SECOND, true, &mut out);
        respond(patch, size, &SECOND, false, &mut out);
    }
    Ok(out)
}

/// Mean absolute feature value; a contrast measure for gating flat patches.
pub fn feature_energy<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|&x| x.into().abs()).sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn energy_is_mean_abs() {
        assert_eq!(feature_energy::<f64>(&[]), 0.0);
        assert_eq!(feature_energy(&[1.0f64, -3.0, 0.0, 2.0]), 1.5);
        assert_eq!(feature_energy(&[-0.5f32]), 0.5);
    }

    #[test]
    fn constant_patch_has_zero_features() {
        let f = gradient_features(&[0.4; 25], 5, FeatureOrder::Both).unwrap();
        assert_eq!(f.len(), 100);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_first_order() {
        let step = 0.05;
        let patch: Vec<f64> = (0..25).map(|i| (i % 5) as f64 * step).collect();
        let f = gradient_features(&patch, 5, FeatureOrder::First).unwrap();
        assert_eq!(f.len(), 50);
        let (h, v) = f.split_at(25);
        for y in 0..5 {
            for x in 0..5 {
                let expect = if x == 0 || x == 4 { step } else { 2.0 * step };
                assert!((h[y * 5 + x] - expect).abs() < 1e-12);
            }
        }
        assert!(v.iter().all(|&g| g.abs() < 1e-12));
    }

    #[test]
    fn second_order_of_ramp_vanishes_in_interior() {
        let patch: Vec<f64> = (0..49).map(|i| (i / 7) as f64 * 0.1).collect();
        let f = gradient_features(&patch, 7, FeatureOrder::Second).unwrap();
        let v = &f[49..];
        for y in 2..5 {
            for x in 0..7 {
                assert!(v[y * 7 + x].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_small_patch_for_second_order() {
        assert!(gradient_features(&[0.0; 9], 3, FeatureOrder::Second).is_err());
        assert!(gradient_features(&[0.0; 9], 3, FeatureOrder::First).is_ok());
        assert!(gradient_features(&[0.0; 8], 3, FeatureOrder::First).is_err());
    }

    proptest! {
        #[test]
        fn features_are_linear(
            a in proptest::collection::vec(-1.0f64..1.0, 25),
            b in proptest::collection::vec(-1.0f64..1.0, 25),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let fa = gradient_features(&a, 5, FeatureOrder::Both).unwrap();
            let fb = gradient_features(&b, 5, FeatureOrder::Both).unwrap();
            let fm = gradient_features(&mix, 5, FeatureOrder::Both).unwrap();
            for i in 0..fm.len() {
                prop_assert!((fm[i] - (alpha * fa[i] + beta * fb[i])).abs() < 1e-6);
            }
        }
    }
}
