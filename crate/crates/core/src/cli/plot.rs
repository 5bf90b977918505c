//! Loss-curve and comparison-strip rasters, with a built-in 5x7 bitmap font.

use crate::error::{Error, Result};
use crate::pixels::Image;
use crate::train::StepRecord;
use image::{ImageEncoder as _, Rgb, RgbImage};
use std::path::Path;

pub const DISCRIMINATOR_COLOR: [u8; 3] = [31, 119, 180];
pub const GENERATOR_COLOR: [u8; 3] = [255, 127, 14];
const INK: [u8; 3] = [0, 0, 0];
const GRID: [u8; 3] = [225, 225, 225];
const WHITE: [u8; 3] = [255, 255, 255];

fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [14, 17, 17, 31, 17, 17, 17],
        'B' => [30, 17, 17, 30, 17, 17, 30],
        'C' => [14, 17, 16, 16, 16, 17, 14],
        'D' => [30, 17, 17, 17, 17, 17, 30],
        'E' => [31, 16, 16, 30, 16, 16, 31],
        'F' => [31, 16, 16, 30, 16, 16, 16],
        'G' => [14, 17, 16, 23, 17, 17, 15],
        'H' => [17, 17, 17, 31, 17, 17, 17],
        'I' => [14, 4, 4, 4, 4, 4, 14],
        'J' => [7, 2, 2, 2, 2, 18, 12],
        'K' => [17, 18, 20, 24, 20, 18, 17],
        'L' => [16, 16, 16, 16, 16, 16, 31],
        'M' => [17, 27, 21, 21, 17, 17, 17],
        'N' => [17, 17, 25, 21, 19, 17, 17],
        'O' => [14, 17, 17, 17, 17, 17, 14],
        'P' => [30, 17, 17, 30, 16, 16, 16],
        'Q' => [14, 17, 17, 17, 21, 18, 13],
        'R' => [30, 17, 17, 30, 20, 18, 17],
        'S' => [15, 16, 16, 14, 1, 1, 30],
        'T' => [31, 4, 4, 4, 4, 4, 4],
        'U' => [17, 17, 17, 17, 17, 17, 14],
        'V' => [17, 17, 17, 17, 17, 10, 4],
        'W' => [17, 17, 17, 21, 21, 21, 10],
        'X' => [17, 17, 10, 4, 10, 17, 17],
        'Y' => [17, 17, 10, 4, 4, 4, 4],
        'Z' => [31, 1, 2, 4, 8, 16, 31],
        '0' => [14, 17, 19, 21, 25, 17, 14],
        '1' => [4, 12, 4, 4, 4, 4, 14],
        '2' => [14, 17, 1, 2, 4, 8, 31],
        '3' => [31, 2, 4, 2, 1, 17, 14],
        '4' => [2, 6, 10, 18, 31, 2, 2],
        '5' => [31, 16, 30, 1, 1, 17, 14],
        '6' => [6, 8, 16, 30, 17, 17, 14],
        '7' => [31, 1, 2, 4, 8, 8, 8],
        '8' => [14, 17, 17, 14, 17, 17, 14],
        '9' => [14, 17, 17, 15, 1, 2, 12],
        '.' => [0, 0, 0, 0, 0, 12, 12],
        '-' => [0, 0, 0, 31, 0, 0, 0],
        '+' => [0, 4, 4, 31, 4, 4, 0],
        _ => [0; 7],
    }
}

const SCALE: u32 = 2;
const ADVANCE: u32 = 6 * SCALE;

fn text_width(s: &str) -> u32 {
    s.chars().count() as u32 * ADVANCE
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

/// Draws `s` with its top-left corner at `(x, y)`.
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, s: &str, color: [u8; 3]) {
    for (k, ch) in s.chars().enumerate() {
        let ox = x + (k as u32 * ADVANCE) as i64;
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..5 {
                if bits & (16 >> col) != 0 {
                    for dy in 0..SCALE as i64 {
                        for dx in 0..SCALE as i64 {
                            put(img, ox + col * SCALE as i64 + dx, y + row as i64 * SCALE as i64 + dy, color);
                        }
                    }
                }
            }
        }
    }
}

/// Vertical text, reading bottom to top, starting at `(x, y)` = bottom-left.
fn draw_text_up(img: &mut RgbImage, x: i64, y: i64, s: &str, color: [u8; 3]) {
    let mut tmp = RgbImage::from_pixel(text_width(s), 7 * SCALE, Rgb(WHITE));
    draw_text(&mut tmp, 0, 0, s, color);
    for (tx, ty, p) in tmp.enumerate_pixels() {
        if p.0 != WHITE {
            put(img, x + ty as i64, y - tx as i64, p.0);
        }
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        put(img, x, y + 1, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn fill(img: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, c: [u8; 3]) {
    for yy in y..y + h {
        for xx in x..x + w {
            put(img, xx, yy, c);
        }
    }
}

fn tick_label(v: f64, span: f64) -> String {
    if span >= 10.0 {
        format!("{v:.0}")
    } else if span >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    image::codecs::png::PngEncoder::new(&mut bytes)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::invalid("png", e.to_string()))?;
    Ok(bytes)
}

/// Generator and discriminator loss against step, with legend and axis labels.
pub fn plot_losses(steps: &[StepRecord], width: u32, height: u32) -> Result<RgbImage> {
    if steps.len() < 2 {
        return Err(Error::invalid("plot-loss", format!("need at least 2 log rows, found {}", steps.len())));
    }
    if steps.iter().any(|s| !s.g_loss.is_finite() || !s.d_loss.is_finite()) {
        return Err(Error::NonFinite("loss log".into()));
    }
    let (left, right, top, bottom) = (90i64, 20i64, 44i64, 60i64);
    let (pw, ph) = (width as i64 - left - right, height as i64 - top - bottom);
    if pw < 50 || ph < 50 {
        return Err(Error::invalid("plot-loss", format!("{width}x{height} is too small")));
    }
    let mut img = RgbImage::from_pixel(width, height, Rgb(WHITE));
    let x_lo = steps[0].step as f64;
    let x_hi = (steps[steps.len() - 1].step as f64).max(x_lo + 1.0);
    let (mut y_lo, mut y_hi) = steps
        .iter()
        .flat_map(|s| [s.g_loss, s.d_loss])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = ((y_hi - y_lo) * 0.05).max(1e-3);
    y_lo -= pad;
    y_hi += pad;
    let px = |x: f64| left + ((x - x_lo) / (x_hi - x_lo) * (pw - 1) as f64).round() as i64;
    let py = |y: f64| top + ph - 1 - ((y - y_lo) / (y_hi - y_lo) * (ph - 1) as f64).round() as i64;

    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (gx, gy) = (x_lo + t * (x_hi - x_lo), y_lo + t * (y_hi - y_lo));
        line(&mut img, (px(gx), top), (px(gx), top + ph - 1), GRID);
        line(&mut img, (left, py(gy)), (left + pw - 1, py(gy)), GRID);
        let xl = tick_label(gx, x_hi - x_lo);
        draw_text(&mut img, px(gx) - text_width(&xl) as i64 / 2, top + ph + 8, &xl, INK);
        let yl = tick_label(gy, y_hi - y_lo);
        draw_text(&mut img, left - 8 - text_width(&yl) as i64, py(gy) - 7, &yl, INK);
    }
    for (series, color) in [(0, GENERATOR_COLOR), (1, DISCRIMINATOR_COLOR)] {
        let pick = |s: &StepRecord| if series == 0 { s.g_loss } else { s.d_loss };
        for w in steps.windows(2) {
            line(&mut img, (px(w[0].step as f64), py(pick(&w[0]))), (px(w[1].step as f64), py(pick(&w[1]))), color);
        }
    }
    line(&mut img, (left, top), (left, top + ph - 1), INK);
    line(&mut img, (left, top + ph - 1), (left + pw - 1, top + ph - 1), INK);

    let title = "TRAINING LOSS";
    draw_text(&mut img, (width as i64 - text_width(title) as i64) / 2, 12, title, INK);
    draw_text(&mut img, left + pw / 2 - text_width("STEP") as i64 / 2, height as i64 - 24, "STEP", INK);
    draw_text_up(&mut img, 10, top + ph / 2 + text_width("LOSS") as i64 / 2, "LOSS", INK);
    let entries = [("DISCRIMINATOR", DISCRIMINATOR_COLOR), ("GENERATOR", GENERATOR_COLOR)];
    let lw = 36 + text_width(entries[0].0) as i64;
    let (lx, ly) = (left + pw - lw - 10, top + 10);
    fill(&mut img, lx - 6, ly - 6, lw + 12, 48, WHITE);
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = ly + k as i64 * 20;
        fill(&mut img, lx, y + 5, 24, 4, *color);
        draw_text(&mut img, lx + 32, y, label, INK);
    }
    Ok(img)
}

pub fn write_loss_plot(steps: &[StepRecord], out: &Path) -> Result<()> {
    let img = plot_losses(steps, 800, 480)?;
    crate::io::write_atomic(out, &png_bytes(&img)?)
}

/// Labelled panels side by side, separated by a white gutter.
pub fn strip(panels: &[(&str, &Image)]) -> Result<RgbImage> {
    let (w, h) = match panels.first() {
        Some((_, i)) => (i.width as u32, i.height as u32),
        None => return Err(Error::invalid("strip", "no panels")),
    };
    let (gap, band) = (4u32, 7 * SCALE + 8);
    let n = panels.len() as u32;
    let mut out = RgbImage::from_pixel(n * w + (n - 1) * gap, h + band, Rgb(WHITE));
    for (k, (label, img)) in panels.iter().enumerate() {
        if (img.width as u32, img.height as u32, img.channels) != (w, h, 3) {
            return Err(Error::shape("strip", (w, h, 3), (img.width, img.height, img.channels)));
        }
        let ox = k as u32 * (w + gap);
        draw_text(&mut out, ox as i64 + 2, 4, label, INK);
        let srgb = crate::io::srgb_bytes(img);
        for y in 0..h {
            for x in 0..w {
                let i = 3 * (y * w + x) as usize;
                out.put_pixel(ox + x, band + y, Rgb([srgb[i], srgb[i + 1], srgb[i + 2]]));
            }
        }
    }
    Ok(out)
}
