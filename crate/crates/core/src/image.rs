//! Luminance images, separable kernels, resampling and patch grids.

use crate::error::{param, Result};

/// Row-major grid of real-valued luminance samples, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Wraps `data` as a `width` x `height` image. Rejects wrong lengths and
    /// non-finite samples.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return param(format!(
                "image data has {} samples, expected {}x{}",
                data.len(),
                width,
                height
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return param("image data contains non-finite samples");
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        if self.dims() != other.dims() {
            return param(format!(
                "dimension mismatch: {:?} vs {:?}",
                self.dims(),
                other.dims()
            ));
        }
        Ok(Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Copies the `w` x `h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Image> {
        if x + w > self.width || y + h > self.height {
            return param(format!(
                "crop {}x{}+{}+{} exceeds {}x{} image",
                w, h, x, y, self.width, self.height
            ));
        }
        Ok(Image::from_fn(w, h, |cx, cy| self.get(x + cx, y + cy)))
    }

    /// Row-major copy of the `size` x `size` block at `(x, y)`.
    pub fn block(&self, x: usize, y: usize, size: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(size * size);
        for row in y..y + size {
            let start = row * self.width + x;
            out.extend_from_slice(&self.data[start..start + size]);
        }
        out
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Symmetric 1-D filter taps applied separably along both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    radius: usize,
    taps: Vec<f64>,
}

impl Kernel {
    /// Normalized Gaussian truncated at `ceil(3 sigma)`.
    pub fn gaussian(sigma: f64) -> Result<Kernel> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return param(format!("gaussian sigma must be positive, got {sigma}"));
        }
        Self::gaussian_with_radius(sigma, (3.0 * sigma).ceil() as usize)
    }

    /// Normalized Gaussian with an explicit truncation radius.
    pub fn gaussian_with_radius(sigma: f64, radius: usize) -> Result<Kernel> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return param(format!("gaussian sigma must be positive, got {sigma}"));
        }
        let denom = 2.0 * sigma * sigma;
        let mut taps: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / denom).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Ok(Kernel { radius, taps })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Separable convolution with edge replication at the borders.
pub fn convolve_separable(img: &Image, kernel: &Kernel) -> Image {
    let (w, h) = img.dims();
    let r = kernel.radius as isize;
    let taps = kernel.taps();

    let mut tmp = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                acc += t * img.get_clamped(x as isize + i as isize - r, y as isize);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                acc += t * tmp.get_clamped(x as isize, y as isize + i as isize - r);
            }
            out.set(x, y, acc);
        }
    }
    out
}

pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    Ok(convolve_separable(img, &Kernel::gaussian(sigma)?))
}

/// Keeps every `factor`-th sample along both axes, starting at index 0.
pub fn downsample(img: &Image, factor: usize) -> Result<Image> {
    downsample_xy(img, factor, factor)
}

/// Anisotropic decimation; output dims are `floor(dim / factor)`.
pub fn downsample_xy(img: &Image, fx: usize, fy: usize) -> Result<Image> {
    if fx < 1 || fy < 1 {
        return param(format!("downsample factor must be >= 1, got ({fx}, {fy})"));
    }
    let w = img.width() / fx;
    let h = img.height() / fy;
    Ok(Image::from_fn(w, h, |x, y| img.get(x * fx, y * fy)))
}

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

// Source taps and weights for each output position along one axis. Output
// sample `i` sits at source coordinate `i / factor`, so integer-aligned
// outputs reproduce the input exactly and decimation inverts the resize.
fn axis_taps(out_len: usize, in_len: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..out_len)
        .map(|i| {
            let base = i / factor;
            let t = (i % factor) as f64 / factor as f64;
            let weights = catmull_rom(t);
            let mut idx = [0usize; 4];
            for (k, slot) in idx.iter_mut().enumerate() {
                let s = base as isize + k as isize - 1;
                *slot = s.clamp(0, in_len as isize - 1) as usize;
            }
            (idx, weights)
        })
        .collect()
}

/// Catmull-Rom resize by integer factors without clamping the output range.
/// Used for signed images (error maps); see [`bicubic_upsample`] for pixels.
pub fn bicubic_resize(img: &Image, fx: usize, fy: usize) -> Result<Image> {
    if fx < 1 || fy < 1 {
        return param(format!("upsample factor must be >= 1, got ({fx}, {fy})"));
    }
    if img.is_empty() {
        return param("cannot resample an empty image");
    }
    if fx == 1 && fy == 1 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let (ow, oh) = (w * fx, h * fy);
    let xt = axis_taps(ow, w, fx);
    let yt = axis_taps(oh, h, fy);

    let mut rows = Image::new(ow, h);
    for y in 0..h {
        for (x, (idx, wts)) in xt.iter().enumerate() {
            let v: f64 = (0..4).map(|k| wts[k] * img.get(idx[k], y)).sum();
            rows.set(x, y, v);
        }
    }
    let mut out = Image::new(ow, oh);
    for (y, (idx, wts)) in yt.iter().enumerate() {
        for x in 0..ow {
            let v: f64 = (0..4).map(|k| wts[k] * rows.get(x, idx[k])).sum();
            out.set(x, y, v);
        }
    }
    Ok(out)
}

/// Catmull-Rom (a = -0.5) upsampling, clamped to `[0, 1]`.
pub fn bicubic_upsample(img: &Image, factor: usize) -> Result<Image> {
    Ok(bicubic_resize(img, factor, factor)?.clamp01())
}

/// Anisotropic Catmull-Rom upsampling, clamped to `[0, 1]`.
pub fn bicubic_stretch(img: &Image, fx: usize, fy: usize) -> Result<Image> {
    Ok(bicubic_resize(img, fx, fy)?.clamp01())
}

/// How the last patch along an axis is placed when the stride does not
/// divide the free extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchoring {
    /// Append a final patch flush with the image edge so every pixel is covered.
    FlushToEdge,
    /// Stop at the last full stride; trailing pixels may be uncovered.
    StrideOnly,
}

/// Patch origins along one axis of length `len`.
pub fn patch_positions(len: usize, patch: usize, stride: usize, anchoring: Anchoring) -> Vec<usize> {
    if len < patch || stride == 0 {
        return Vec::new();
    }
    let mut pos: Vec<usize> = (0..=(len - patch) / stride).map(|i| i * stride).collect();
    if anchoring == Anchoring::FlushToEdge && *pos.last().unwrap() + patch < len {
        pos.push(len - patch);
    }
    pos
}

/// Overlapping square patches in row-principle order. Patch `j` in
/// `patches` has its top-left corner at `origins[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub overlap: usize,
    pub rows: usize,
    pub cols: usize,
    /// `(x, y)` top-left corner of each patch.
    pub origins: Vec<(usize, usize)>,
    pub patches: Vec<Vec<f64>>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.patch_size - self.overlap
    }
}

/// Covering patch grid: stride `patch_size - overlap`, final patch on each
/// axis anchored flush to the image edge.
pub fn extract_patches(img: &Image, patch_size: usize, overlap: usize) -> Result<PatchGrid> {
    extract_patches_with(img, patch_size, overlap, Anchoring::FlushToEdge)
}

pub fn extract_patches_with(
    img: &Image,
    patch_size: usize,
    overlap: usize,
    anchoring: Anchoring,
) -> Result<PatchGrid> {
    if patch_size == 0 || overlap >= patch_size {
        return param(format!(
            "need patch_size > overlap >= 0, got patch_size={patch_size} overlap={overlap}"
        ));
    }
    if img.width() < patch_size || img.height() < patch_size {
        return param(format!(
            "{}x{} image is smaller than one {}x{} patch",
            img.width(),
            img.height(),
            patch_size,
            patch_size
        ));
    }
    let stride = patch_size - overlap;
    let xs = patch_positions(img.width(), patch_size, stride, anchoring);
    let ys = patch_positions(img.height(), patch_size, stride, anchoring);
    let mut origins = Vec::with_capacity(xs.len() * ys.len());
    let mut patches = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            origins.push((x, y));
            patches.push(img.block(x, y, patch_size));
        }
    }
    Ok(PatchGrid {
        patch_size,
        overlap,
        rows: ys.len(),
        cols: xs.len(),
        origins,
        patches,
    })
}
