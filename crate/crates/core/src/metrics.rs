//! Reconstruction error metrics.

use crate::error::{param, Result};
use crate::image::Image;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if a.dims() != b.dims() {
        return param(format!("mse of {:?} and {:?} images", a.dims(), b.dims()));
    }
    if a.is_empty() {
        return param("mse of empty images");
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// PSNR in dB for unit dynamic range; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images() {
        let a = Image::from_fn(5, 4, |x, y| (x * y) as f64 / 20.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_offset() {
        let a = Image::filled(8, 8, 0.5);
        let b = Image::filled(8, 8, 0.4);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn matches_reverse_order_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Image::from_fn(31, 29, |_, _| rng.random::<f64>());
        let b = Image::from_fn(31, 29, |_, _| rng.random::<f64>());
        let mut acc = 0.0;
        for y in (0..29).rev() {
            for x in (0..31).rev() {
                let d = a.get(x, y) - b.get(x, y);
                acc += d * d;
            }
        }
        assert!((mse(&a, &b).unwrap() - acc / (31.0 * 29.0)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(mse(&Image::new(3, 3), &Image::new(3, 4)).is_err());
    }
}
