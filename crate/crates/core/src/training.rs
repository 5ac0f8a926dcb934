//! Training database: gradient-weighted sub-image sampling, LR/HR pair
//! synthesis, aligned patch extraction and the on-disk record format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{write_f32s, OffsetReader};
use crate::error::{param, Error, Result};
use crate::features::{gradient_features, FeatureOrder};
use crate::image::{bicubic_upsample, downsample, extract_patches_with, gaussian_blur, Anchoring, Image};
use crate::lsh::PatchId;

pub const DB_MAGIC: &[u8; 5] = b"PZDB1";
pub const DB_VERSION: u32 = 1;
/// Bytes before the first record.
pub const DB_HEADER_LEN: u64 = 5 + 4 + 8 + 2 + 2 + 2 + 4 + 8 + 1;

/// How training pairs were produced; stored in the DB header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbConfig {
    pub patch_size: usize,
    pub overlap: usize,
    pub scale: usize,
    pub blur_sigma: f64,
    pub feature_order: FeatureOrder,
}

impl Default for DbConfig {
    fn default() -> Self {
        Self {
            patch_size: 5,
            overlap: 2,
            scale: 2,
            blur_sigma: 1.0,
            feature_order: FeatureOrder::First,
        }
    }
}

impl DbConfig {
    pub fn feature_dim(&self) -> usize {
        self.feature_order.dim(self.patch_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.overlap >= self.patch_size {
            return param("need patch_size > overlap >= 0");
        }
        if self.scale < 1 {
            return param("scale factor must be >= 1");
        }
        if !(self.blur_sigma > 0.0) || !self.blur_sigma.is_finite() {
            return param("blur sigma must be positive");
        }
        if self.feature_order != FeatureOrder::First && self.patch_size < 5 {
            return param("second-order features need patch_size >= 5");
        }
        if self.patch_size > u16::MAX as usize || self.overlap > u16::MAX as usize || self.scale > u16::MAX as usize {
            return param("geometry does not fit the database header");
        }
        Ok(())
    }

    /// Size in bytes of one stored record.
    pub fn record_len(&self) -> u64 {
        let p2 = (self.patch_size * self.patch_size) as u64;
        8 + 4 * p2 + 4 * self.feature_dim() as u64 + 4 * p2
    }
}

/// Paired LR / HR patch store. IDs are contiguous `0..len`; LR and HR
/// blocks are both `p x p` because LR images are upsampled back to the HR
/// grid before patch extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDb {
    config: DbConfig,
    lr: Vec<f32>,
    features: Vec<f32>,
    hr: Vec<f32>,
}

impl PatchDb {
    pub fn new(config: DbConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            lr: Vec::new(),
            features: Vec::new(),
            hr: Vec::new(),
        })
    }

    pub fn config(&self) -> &DbConfig {
        &self.config
    }

    fn block_len(&self) -> usize {
        self.config.patch_size * self.config.patch_size
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    pub fn len(&self) -> usize {
        self.lr.len() / self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.lr.is_empty()
    }

    pub fn lr(&self, id: PatchId) -> &[f32] {
        let n = self.block_len();
        &self.lr[id as usize * n..(id as usize + 1) * n]
    }

    pub fn hr(&self, id: PatchId) -> &[f32] {
        let n = self.block_len();
        &self.hr[id as usize * n..(id as usize + 1) * n]
    }

    pub fn feature(&self, id: PatchId) -> &[f32] {
        let d = self.feature_dim();
        &self.features[id as usize * d..(id as usize + 1) * d]
    }

    /// Appends one pair and returns its ID.
    pub fn push(&mut self, lr: &[f64], feature: &[f64], hr: &[f64]) -> Result<PatchId> {
        if lr.len() != self.block_len() || hr.len() != self.block_len() || feature.len() != self.feature_dim() {
            return param("patch record has the wrong shape for this database");
        }
        let id = self.len() as PatchId;
        self.lr.extend(lr.iter().map(|&v| v as f32));
        self.features.extend(feature.iter().map(|&v| v as f32));
        self.hr.extend(hr.iter().map(|&v| v as f32));
        Ok(id)
    }

    /// `(id, feature)` pairs for index construction.
    pub fn feature_rows(&self) -> Vec<(PatchId, &[f32])> {
        (0..self.len() as PatchId).map(|id| (id, self.feature(id))).collect()
    }

    pub fn file_len(&self) -> u64 {
        DB_HEADER_LEN + self.len() as u64 * self.config.record_len()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let c = &self.config;
        w.write_all(DB_MAGIC)?;
        w.write_u32::<LittleEndian>(DB_VERSION)?;
        w.write_u64::<LittleEndian>(self.len() as u64)?;
        w.write_u16::<LittleEndian>(c.patch_size as u16)?;
        w.write_u16::<LittleEndian>(c.overlap as u16)?;
        w.write_u16::<LittleEndian>(c.scale as u16)?;
        w.write_u32::<LittleEndian>(self.feature_dim() as u32)?;
        w.write_f64::<LittleEndian>(c.blur_sigma)?;
        w.write_u8(c.feature_order.to_u8())?;
        for id in 0..self.len() as PatchId {
            w.write_u64::<LittleEndian>(id)?;
            write_f32s(w, self.lr(id))?;
            write_f32s(w, self.feature(id))?;
            write_f32s(w, self.hr(id))?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = OffsetReader::new(reader);
        let magic = r.bytes("magic", DB_MAGIC.len())?;
        if magic != DB_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, not a patch database".into(),
            });
        }
        let version = r.u32("version")?;
        if version != DB_VERSION {
            return r.fail(format!("unsupported database version {version}"));
        }
        let n = r.u64("entry count")?;
        let patch_size = r.u16("patch size")? as usize;
        let overlap = r.u16("overlap")? as usize;
        let scale = r.u16("scale")? as usize;
        let feature_dim = r.u32("feature dim")? as usize;
        let blur_sigma = r.f64("blur sigma")?;
        let order_tag = r.u8("feature order")?;
        let Some(feature_order) = FeatureOrder::from_u8(order_tag) else {
            return r.fail(format!("unknown feature order tag {order_tag}"));
        };
        let config = DbConfig {
            patch_size,
            overlap,
            scale,
            blur_sigma,
            feature_order,
        };
        if let Err(e) = config.validate() {
            return r.fail(format!("invalid header: {e}"));
        }
        if feature_dim != config.feature_dim() {
            return r.fail(format!(
                "feature dim {feature_dim} inconsistent with patch size {patch_size} and order {feature_order:?}"
            ));
        }

        let p2 = patch_size * patch_size;
        let mut db = PatchDb::new(config)?;
        let mut lr = vec![0f32; p2];
        let mut feat = vec![0f32; feature_dim];
        let mut hr = vec![0f32; p2];
        for expect in 0..n {
            let at = r.offset();
            let id = r.u64("patch id")?;
            if id != expect {
                return Err(Error::Format {
                    offset: at,
                    message: format!("patch id {id} out of sequence, expected {expect}"),
                });
            }
            r.f32_into("lr pixels", &mut lr)?;
            r.f32_into("feature", &mut feat)?;
            r.f32_into("hr pixels", &mut hr)?;
            db.lr.extend_from_slice(&lr);
            db.features.extend_from_slice(&feat);
            db.hr.extend_from_slice(&hr);
        }
        r.expect_end()?;
        Ok(db)
    }
}

pub fn save_db(db: &PatchDb, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    db.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_db(path: impl AsRef<Path>) -> Result<PatchDb> {
    PatchDb::read_from(BufReader::new(File::open(path)?))
}

/// Sub-image sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpec {
    pub sub_image_size: usize,
    pub samples_per_image: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            sub_image_size: 100,
            samples_per_image: 25,
        }
    }
}

/// Per-pixel `|dI/dx| + |dI/dy|` from `[-1, 0, 1]` responses with edge
/// replication.
pub fn gradient_mass(img: &Image) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let gx = img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y);
        let gy = img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1);
        gx.abs() + gy.abs()
    })
}

/// Range of valid crop centres along an axis of length `len`.
fn center_range(len: usize, size: usize) -> std::ops::RangeInclusive<usize> {
    let half = size / 2;
    half..=len - size + half
}

/// Sampling distribution over crop centres: gradient mass restricted to
/// pixels whose crop fits in the image, or uniform when that mass is zero.
/// Returned as `(x, y, weight)` in row-major order.
pub fn center_distribution(img: &Image, spec: &SampleSpec) -> Result<Vec<(usize, usize, f64)>> {
    let size = spec.sub_image_size;
    if size == 0 || img.width() < size || img.height() < size {
        return param(format!(
            "{}x{} image cannot hold a {size}x{size} sub-image",
            img.width(),
            img.height()
        ));
    }
    let mass = gradient_mass(img);
    let xs = center_range(img.width(), size);
    let ys = center_range(img.height(), size);
    let mut cells = Vec::with_capacity(xs.clone().count() * ys.clone().count());
    for y in ys {
        for x in xs.clone() {
            cells.push((x, y, mass.get(x, y)));
        }
    }
    let total: f64 = cells.iter().map(|c| c.2).sum();
    if !(total > 0.0) {
        cells.iter_mut().for_each(|c| c.2 = 1.0);
    }
    Ok(cells)
}

/// Draws `spec.samples_per_image` crop centres i.i.d. from the gradient CDF.
pub fn sample_centers<R: Rng + ?Sized>(img: &Image, spec: &SampleSpec, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let cells = center_distribution(img, spec)?;
    let mut cdf = Vec::with_capacity(cells.len());
    let mut acc = 0.0;
    for c in &cells {
        acc += c.2;
        cdf.push(acc);
    }
    Ok((0..spec.samples_per_image)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            // First cell whose cumulative mass exceeds u; zero-mass cells
            // are never selected.
            let i = cdf.partition_point(|&c| c <= u).min(cells.len() - 1);
            (cells[i].0, cells[i].1)
        })
        .collect())
}

/// Crops `spec.sub_image_size` squares around gradient-sampled centres.
pub fn sample_subimages<R: Rng + ?Sized>(img: &Image, spec: &SampleSpec, rng: &mut R) -> Result<Vec<Image>> {
    let half = spec.sub_image_size / 2;
    sample_centers(img, spec, rng)?
        .into_iter()
        .map(|(x, y)| img.crop(x - half, y - half, spec.sub_image_size, spec.sub_image_size))
        .collect()
}

/// Synthesizes the LR counterpart of `hr`: blur, decimate by `scale`, and
/// bicubic-upsample back. `hr` is first cropped to a multiple of `scale`;
/// the cropped HR image is returned alongside.
pub fn make_pair(hr: &Image, blur_sigma: f64, scale: usize) -> Result<(Image, Image)> {
    if scale < 1 {
        return param("scale factor must be >= 1");
    }
    let (w, h) = (hr.width() / scale * scale, hr.height() / scale * scale);
    if w == 0 || h == 0 {
        return param("image is smaller than the scale factor");
    }
    let hr = if (w, h) == hr.dims() { hr.clone() } else { hr.crop(0, 0, w, h)? };
    let blurred = gaussian_blur(&hr, blur_sigma)?;
    let lr = downsample(&blurred, scale)?;
    let up = bicubic_upsample(&lr, scale)?;
    Ok((up, hr))
}

struct PairRecord {
    lr: Vec<f64>,
    feature: Vec<f64>,
    hr: Vec<f64>,
}

/// Aligned patch records from one HR training image.
fn records_for(hr: &Image, config: &DbConfig) -> Result<Vec<PairRecord>> {
    let (lr_up, hr) = make_pair(hr, config.blur_sigma, config.scale)?;
    let p = config.patch_size;
    let lr_grid = extract_patches_with(&lr_up, p, config.overlap, Anchoring::StrideOnly)?;
    let hr_grid = extract_patches_with(&hr, p, config.overlap, Anchoring::StrideOnly)?;
    debug_assert_eq!(lr_grid.origins, hr_grid.origins);
    lr_grid
        .patches
        .into_iter()
        .zip(hr_grid.patches)
        .map(|(lr, hr)| {
            let feature = gradient_features(&lr, p, config.feature_order)?;
            Ok(PairRecord { lr, feature, hr })
        })
        .collect()
}

/// Appends every aligned patch pair of each (already cropped) training image.
pub fn build_db_from_crops(crops: &[Image], config: &DbConfig) -> Result<PatchDb> {
    let mut db = PatchDb::new(*config)?;
    let per_crop: Vec<Result<Vec<PairRecord>>> = crops.par_iter().map(|c| records_for(c, config)).collect();
    for recs in per_crop {
        for rec in recs? {
            db.push(&rec.lr, &rec.feature, &rec.hr)?;
        }
    }
    Ok(db)
}

/// Samples sub-images from every source image and collects their patch
/// pairs. Image `i` draws from stream `i` of the seeded generator, and IDs
/// are assigned serially afterwards, so the result is deterministic.
pub fn build_db(images: &[Image], config: &DbConfig, spec: &SampleSpec, seed: u64) -> Result<PatchDb> {
    config.validate()?;
    if images.is_empty() {
        return param("no training images");
    }
    let crops: Vec<Vec<Image>> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            match sample_subimages(img, spec, &mut rng) {
                Ok(c) => c,
                Err(e) => {
                    warn!("skipping training image {i}: {e}");
                    Vec::new()
                }
            }
        })
        .collect();
    let crops: Vec<Image> = crops.into_iter().flatten().collect();
    let usable: Vec<Image> = crops
        .into_iter()
        .filter(|c| {
            let w = c.width() / config.scale * config.scale;
            let h = c.height() / config.scale * config.scale;
            w >= config.patch_size && h >= config.patch_size
        })
        .collect();
    build_db_from_crops(&usable, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| (((x * 7) ^ (y * 3)) % 17) as f64 / 16.0)
    }

    #[test]
    fn concentrated_gradient_dominates_sampling() {
        // Edges only inside the 40x40 block at (120, 120).
        let img = Image::from_fn(240, 240, |x, y| {
            if (120..160).contains(&x) && (120..160).contains(&y) && (x + y) % 2 == 0 {
                1.0
            } else {
                0.3
            }
        });
        let spec = SampleSpec {
            sub_image_size: 100,
            samples_per_image: 100,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let centers = sample_centers(&img, &spec, &mut rng).unwrap();
        let inside = centers
            .iter()
            .filter(|&&(x, y)| (119..=160).contains(&x) && (119..=160).contains(&y))
            .count();
        assert!(inside >= 90, "{inside}");
    }

    #[test]
    fn constant_image_samples_uniformly() {
        let img = Image::filled(120, 110, 0.5);
        let spec = SampleSpec {
            sub_image_size: 100,
            samples_per_image: 400,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let centers = sample_centers(&img, &spec, &mut rng).unwrap();
        let xs = center_range(120, 100);
        let ys = center_range(110, 100);
        assert!(centers.iter().all(|(x, y)| xs.contains(x) && ys.contains(y)));
        // Both halves of the x range are hit.
        let left = centers.iter().filter(|c| c.0 < 60).count();
        assert!(left > 100 && left < 300, "{left}");
    }

    #[test]
    fn sampling_is_seeded() {
        let img = textured(150, 130);
        let spec = SampleSpec::default();
        let a = sample_subimages(&img, &spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_subimages(&img, &spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 25);
        assert!(a.iter().all(|c| c.dims() == (100, 100)));
    }

    #[test]
    fn sampling_rejects_small_image() {
        let img = textured(90, 200);
        assert!(sample_subimages(&img, &SampleSpec::default(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn pair_cases() {
        let (lr, hr) = make_pair(&Image::filled(10, 10, 0.6), 1.0, 2).unwrap();
        assert_eq!(hr.dims(), (10, 10));
        assert!(lr.data().iter().all(|v| (v - 0.6).abs() < 1e-9));

        let img = textured(12, 12);
        let (lr, _) = make_pair(&img, 1.0, 1).unwrap();
        assert_eq!(lr, gaussian_blur(&img, 1.0).unwrap().clamp01());

        let (_, hr) = make_pair(&textured(11, 9), 1.0, 2).unwrap();
        assert_eq!(hr.dims(), (10, 8));
    }

    #[test]
    fn checkerboard_loses_variance() {
        let hr = Image::from_fn(32, 32, |x, y| ((x + y) % 2) as f64);
        let (lr, hr) = make_pair(&hr, 1.0, 2).unwrap();
        let var = |img: &Image| {
            let m = img.mean();
            img.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / img.data().len() as f64
        };
        assert!(var(&lr) / var(&hr) < 1.0);
    }

    #[test]
    fn one_crop_gives_1024_pairs() {
        let db = build_db_from_crops(&[textured(100, 100)], &DbConfig::default()).unwrap();
        assert_eq!(db.len(), 1024);
        assert_eq!(db.lr(0).len(), 25);
        assert_eq!(db.feature(1023).len(), 50);
    }

    #[test]
    fn records_are_spatially_aligned() {
        // Plant a unique value at each pixel so every HR patch identifies
        // its own location.
        let img = Image::from_fn(20, 20, |x, y| (y * 20 + x) as f64 / 400.0);
        let cfg = DbConfig::default();
        let db = build_db_from_crops(std::slice::from_ref(&img), &cfg).unwrap();
        let (lr_up, _) = make_pair(&img, cfg.blur_sigma, cfg.scale).unwrap();
        for id in 0..db.len() as PatchId {
            let hr = db.hr(id);
            let x = ((hr[0] * 400.0).round() as usize) % 20;
            let y = ((hr[0] * 400.0).round() as usize) / 20;
            assert_eq!(x % 3, 0);
            assert_eq!(y % 3, 0);
            let block = lr_up.block(x, y, 5);
            for (a, b) in db.lr(id).iter().zip(&block) {
                assert_eq!(*a, *b as f32);
            }
        }
    }

    #[test]
    fn build_is_deterministic_and_skips_small_images() {
        let imgs = vec![textured(130, 120), textured(40, 40), textured(128, 128)];
        let spec = SampleSpec {
            sub_image_size: 100,
            samples_per_image: 2,
        };
        let a = build_db(&imgs, &DbConfig::default(), &spec, 9).unwrap();
        let b = build_db(&imgs, &DbConfig::default(), &spec, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4 * 1024);
        assert!(build_db(&[], &DbConfig::default(), &spec, 9).is_err());
    }

    #[test]
    fn db_round_trip_and_size() {
        let db = build_db_from_crops(&[textured(40, 40)], &DbConfig::default()).unwrap();
        let mut bytes = Vec::new();
        db.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len() as u64, db.file_len());
        assert_eq!(db.file_len(), DB_HEADER_LEN + db.len() as u64 * (8 + 100 + 200 + 100));
        let back = PatchDb::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, db);

        let mut bad = bytes.clone();
        bad[1] = b'Q';
        assert!(matches!(PatchDb::read_from(bad.as_slice()), Err(Error::Format { offset: 0, .. })));

        let cut = &bytes[..bytes.len() - 10];
        match PatchDb::read_from(cut) {
            Err(Error::Format { offset, .. }) => assert!(offset > DB_HEADER_LEN),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
