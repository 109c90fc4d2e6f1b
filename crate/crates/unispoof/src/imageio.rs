//! Binary PPM/PGM (and PNG) images, 8 bits per channel.

use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};
use unispoof_core::image::{Image, Mask};

use crate::error::{CliError, Result};

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm" | "pgm" | "pnm") => Ok(ImageFormat::Pnm),
        Some("png") => Ok(ImageFormat::Png),
        _ => Err(CliError::format(path, "expected a .ppm, .pgm or .png file")),
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let buf: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    let rgb = RgbImage::from_raw(img.w as u32, img.h as u32, buf)
        .ok_or_else(|| CliError::format(path, "image buffer size"))?;
    rgb.save_with_format(path, format_for(path)?)
        .map_err(|e| CliError::format(path, e))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let fmt = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let rgb = image::load_from_memory_with_format(&bytes, fmt)
        .map_err(|e| CliError::format(path, e))?
        .into_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Ok(Image::new(h as usize, w as usize, data)?)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let buf: Vec<u8> = mask.data.iter().map(|&v| to_u8(v)).collect();
    let g = GrayImage::from_raw(mask.w as u32, mask.h as u32, buf)
        .ok_or_else(|| CliError::format(path, "mask buffer size"))?;
    g.save_with_format(path, format_for(path)?)
        .map_err(|e| CliError::format(path, e))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let fmt = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let g = image::load_from_memory_with_format(&bytes, fmt)
        .map_err(|e| CliError::format(path, e))?
        .into_luma8();
    let (w, h) = g.dimensions();
    let data = g.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Ok(Mask::new(h as usize, w as usize, data)?)
}
