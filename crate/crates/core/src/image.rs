use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};

/// Interleaved 8-bit image, row-major, `channels` samples per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::EmptyImage);
        }
        check_dim("image buffer", width * height * channels, data.len())?;
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Luma in `[0, 1]` per pixel (Rec. 601 weights for 3+ channels).
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.channels)
            .map(|px| {
                if self.channels >= 3 {
                    (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64) / 255.0
                } else {
                    px[0] as f64 / 255.0
                }
            })
            .collect()
    }

    /// Box-averages the luma plane down to a `grid × grid` array. Cells are
    /// the integer partition of the image, so every pixel lands in exactly one cell.
    pub fn luma_grid(&self, grid: usize) -> Vec<f64> {
        let luma = self.luma();
        let mut sums = vec![0.0; grid * grid];
        let mut counts = vec![0usize; grid * grid];
        for y in 0..self.height {
            let gy = y * grid / self.height;
            for x in 0..self.width {
                let gx = x * grid / self.width;
                sums[gy * grid + gx] += luma[y * self.width + x];
                counts[gy * grid + gx] += 1;
            }
        }
        // images smaller than the grid leave empty cells; fill them from the
        // nearest source pixel instead
        for gy in 0..grid {
            for gx in 0..grid {
                let i = gy * grid + gx;
                if counts[i] == 0 {
                    let x = gx * self.width / grid;
                    let y = gy * self.height / grid;
                    sums[i] = luma[y * self.width + x];
                    counts[i] = 1;
                }
            }
        }
        sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_of_uniform_image() {
        let img = Image::filled(10, 7, 3, 255).unwrap();
        let g = img.luma_grid(4);
        assert_eq!(g.len(), 16);
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn tiny_image_grid_has_no_holes() {
        let img = Image::new(2, 1, 1, vec![0, 255]).unwrap();
        let g = img.luma_grid(4);
        assert_eq!(&g[..4], &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_sized_rejected() {
        assert_eq!(Image::new(0, 3, 1, vec![]), Err(Error::EmptyImage));
    }
}
