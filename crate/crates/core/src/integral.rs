//! Summed-area tables for constant-time box sums and means.

use crate::image::Image;

/// `(width + 1) x (height + 1)` cumulative-sum table; row and column zero are
/// zero so every rectangle sum is four lookups.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(img: &Image) -> Self {
        let (w, h) = img.dims();
        let stride = w + 1;
        let mut table = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += img.get(x, y);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            table,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0]
            + self.table[y0 * s + x0]
    }

    /// Mean over the `(2 radius + 1)^2` window centred at `(x, y)`, clipped to
    /// the image; the divisor is the clipped window's pixel count.
    #[inline]
    pub fn box_mean(&self, x: usize, y: usize, radius: usize) -> f64 {
        let x0 = x.saturating_sub(radius);
        let y0 = y.saturating_sub(radius);
        let x1 = (x + radius + 1).min(self.width);
        let y1 = (y + radius + 1).min(self.height);
        let count = ((x1 - x0) * (y1 - y0)) as f64;
        self.rect_sum(x0, y0, x1, y1) / count
    }
}

pub fn integral_image(img: &Image) -> IntegralImage {
    IntegralImage::new(img)
}
