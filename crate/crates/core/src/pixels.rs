//! Planar float images.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Channel-planar (`C, H, W`) linear image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape("image", (channels, height, width), data.len()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Builds an image from interleaved rows of `channels` values per pixel.
    pub fn from_interleaved_rows(width: usize, height: usize, channels: usize, rows: &[Vec<f32>]) -> Self {
        let mut img = Image::new(width, height, channels);
        for (y, row) in rows.iter().enumerate() {
            for x in 0..width {
                for c in 0..channels {
                    img.set(c, y, x, row[x * channels + c]);
                }
            }
        }
        img
    }

    pub fn clamped01(&self) -> Image {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Channel-replicated copy (e.g. single-channel depth to RGB).
    pub fn replicate(&self, channels: usize) -> Image {
        assert_eq!(self.channels, 1, "replicate expects a single-channel image");
        Image {
            width: self.width,
            height: self.height,
            channels,
            data: self.data.repeat(channels),
        }
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new([1, self.channels, self.height, self.width], self.data.clone()).expect("image dims are valid")
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Result<Image> {
        let [n, c, h, w] = t.dims();
        if n != 1 {
            return Err(Error::shape("image from tensor", t.dims(), "batch of 1"));
        }
        Image::from_data(w, h, c, t.data().to_vec())
    }
}
