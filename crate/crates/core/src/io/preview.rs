use crate::error::{Error, Result};
use image::ImageEncoder as _;
use crate::pixels::Image;
use std::path::Path;

/// 8-bit sRGB encoding (gamma 2.2) of a linear image, interleaved.
pub fn srgb_bytes(img: &Image) -> Vec<u8> {
    let n = img.width * img.height;
    let mut out = Vec::with_capacity(n * img.channels);
    for i in 0..n {
        for c in 0..img.channels {
            let v = img.plane(c)[i].clamp(0.0, 1.0).powf(1.0 / 2.2);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

/// PNG preview of a 1- or 3-channel linear image.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let color = match img.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(Error::invalid("write_png", format!("{c}-channel image"))),
    };
    let mut bytes = Vec::new();
    image::codecs::png::PngEncoder::new(&mut bytes)
        .write_image(&srgb_bytes(img), img.width as u32, img.height as u32, color)
        .map_err(|e| Error::invalid("write_png", e.to_string()))?;
    super::write_atomic(path, &bytes)
}
