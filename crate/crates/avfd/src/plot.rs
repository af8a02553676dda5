//! Minimal static charts rendered straight to PNG.

use avfd_core::image::Image;

const W: usize = 480;
const H: usize = 270;
const MARGIN: usize = 20;
const BG: [u8; 3] = [255, 255, 255];
const AXIS: [u8; 3] = [60, 60, 60];
pub const REAL: [u8; 3] = [40, 110, 200];
pub const FAKE: [u8; 3] = [210, 60, 50];

struct Canvas(Image);

impl Canvas {
    fn new() -> Self {
        let mut img = Image::filled(W, H, 3, 0).expect("fixed size");
        for y in 0..H {
            for x in 0..W {
                for (c, v) in BG.iter().enumerate() {
                    img.set(x, y, c, *v);
                }
            }
        }
        let mut cv = Self(img);
        cv.rect(MARGIN, H - MARGIN, W - MARGIN, H - MARGIN + 1, AXIS, 1.0);
        cv.rect(MARGIN, MARGIN, MARGIN + 1, H - MARGIN, AXIS, 1.0);
        cv
    }

    /// Fills `[x0, x1) × [y0, y1)`, blending with `alpha`.
    fn rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, color: [u8; 3], alpha: f64) {
        for y in y0.min(H)..y1.min(H) {
            for x in x0.min(W)..x1.min(W) {
                for (c, v) in color.iter().enumerate() {
                    let old = self.0.get(x, y, c) as f64;
                    self.0.set(x, y, c, (old * (1.0 - alpha) + *v as f64 * alpha).round() as u8);
                }
            }
        }
    }
}

fn plot_height() -> usize {
    H - 2 * MARGIN
}

/// Overlaid score histograms of the two groups over their pooled range.
pub fn score_histogram(real: &[f64], fake: &[f64], bins: usize) -> Image {
    let mut cv = Canvas::new();
    let all = real.iter().chain(fake);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = bins.max(1);
    let hist = |s: &[f64]| {
        let mut h = vec![0.0; bins];
        for &v in s {
            let b = if hi > lo { ((v - lo) / (hi - lo) * bins as f64) as usize } else { 0 };
            h[b.min(bins - 1)] += 1.0 / s.len().max(1) as f64;
        }
        h
    };
    let (hr, hf) = (hist(real), hist(fake));
    let peak = hr.iter().chain(&hf).copied().fold(1e-12, f64::max);
    let bw = (W - 2 * MARGIN) as f64 / bins as f64;
    for (h, color) in [(&hr, REAL), (&hf, FAKE)] {
        for (b, v) in h.iter().enumerate() {
            let top = H - MARGIN - (v / peak * plot_height() as f64) as usize;
            let x0 = MARGIN + 1 + (b as f64 * bw) as usize;
            let x1 = MARGIN + 1 + ((b + 1) as f64 * bw) as usize;
            cv.rect(x0, top, x1.max(x0 + 1), H - MARGIN, color, 0.5);
        }
    }
    cv.0
}

/// One bar per condition, height proportional to AUC in `[0, 1]`.
pub fn auc_bars(values: &[f64]) -> Image {
    let mut cv = Canvas::new();
    let n = values.len().max(1);
    let slot = (W - 2 * MARGIN) / n;
    for (i, v) in values.iter().enumerate() {
        let top = H - MARGIN - (v.clamp(0.0, 1.0) * plot_height() as f64) as usize;
        let x0 = MARGIN + 1 + i * slot + slot / 5;
        let color = if i == 0 { REAL } else { FAKE };
        cv.rect(x0, top, x0 + (slot * 3 / 5).max(1), H - MARGIN, color, 1.0);
    }
    cv.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_have_fixed_size() {
        let h = score_histogram(&[0.0, 1.0], &[2.0, 3.0], 10);
        assert_eq!((h.width(), h.height(), h.channels()), (W, H, 3));
        let b = auc_bars(&[0.9, 0.5]);
        assert_eq!(b.width(), W);
        assert_eq!(b.get(MARGIN + 110, H - MARGIN - 5, 0), REAL[0]);
        assert_eq!(b.get(MARGIN + 110, MARGIN + 5, 0), 255);
    }
}
