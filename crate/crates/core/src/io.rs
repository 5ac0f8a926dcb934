//! PNG input/output. Color images are split into BT.601 luma and chroma;
//! only luma goes through the super-resolution path.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};

use crate::error::{param, Result};
use crate::image::Image;

/// BT.601 full-range luma plus centred chroma, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub luma: Image,
    pub cb: Image,
    pub cr: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedImage {
    Gray(Image),
    Color(ColorImage),
}

impl LoadedImage {
    pub fn luma(&self) -> &Image {
        match self {
            LoadedImage::Gray(img) => img,
            LoadedImage::Color(c) => &c.luma,
        }
    }

    pub fn into_luma(self) -> Image {
        match self {
            LoadedImage::Gray(img) => img,
            LoadedImage::Color(c) => c.luma,
        }
    }
}

#[inline]
fn to_unit(v: u8) -> f64 {
    v as f64 / 255.0
}

#[inline]
fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 0.5;
    let cr = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 0.5;
    (y, cb, cr)
}

pub fn ycbcr_to_rgb(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let (cb, cr) = (cb - 0.5, cr - 0.5);
    (
        y + 1.402 * cr,
        y - 0.344_136 * cb - 0.714_136 * cr,
        y + 1.772 * cb,
    )
}

fn from_dynamic(img: DynamicImage) -> Result<LoadedImage> {
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut luma = Vec::with_capacity(w * h);
        let mut cb = Vec::with_capacity(w * h);
        let mut cr = Vec::with_capacity(w * h);
        for px in rgb.pixels() {
            let (y, u, v) = rgb_to_ycbcr(to_unit(px[0]), to_unit(px[1]), to_unit(px[2]));
            luma.push(y);
            cb.push(u);
            cr.push(v);
        }
        Ok(LoadedImage::Color(ColorImage {
            luma: Image::from_vec(w, h, luma)?,
            cb: Image::from_vec(w, h, cb)?,
            cr: Image::from_vec(w, h, cr)?,
        }))
    } else {
        let gray = img.to_luma8();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let data = gray.pixels().map(|p| to_unit(p[0])).collect();
        Ok(LoadedImage::Gray(Image::from_vec(w, h, data)?))
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<LoadedImage> {
    let img = ImageReader::open(path.as_ref())?.with_guessed_format()?.decode()?;
    from_dynamic(img)
}

pub fn load_luma(path: impl AsRef<Path>) -> Result<Image> {
    Ok(load_image(path)?.into_luma())
}

pub fn save_gray_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes = img.data().iter().map(|&v| to_byte(v)).collect();
    let out = GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    out.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn save_color_png(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = img.luma.dims();
    if img.cb.dims() != (w, h) || img.cr.dims() != (w, h) {
        return param("luma and chroma planes differ in size");
    }
    let mut bytes = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        let (r, g, b) = ycbcr_to_rgb(img.luma.data()[i], img.cb.data()[i], img.cr.data()[i]);
        bytes.extend_from_slice(&[to_byte(r), to_byte(g), to_byte(b)]);
    }
    let out = RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer length matches dimensions");
    out.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn save_image(img: &LoadedImage, path: impl AsRef<Path>) -> Result<()> {
    match img {
        LoadedImage::Gray(g) => save_gray_png(g, path),
        LoadedImage::Color(c) => save_color_png(c, path),
    }
}
