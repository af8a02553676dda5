//! Log-mel spectrogram.

use avfd_core::linalg::Matrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
    /// Minimum FFT size; grown to the next power of two above the window.
    pub n_fft: usize,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self { n_mels: 80, window_ms: 25.0, hop_ms: 10.0, n_fft: 512, log_floor: 1e-10 }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels + 2` band edges in Hz, equally spaced on the mel scale from 0 to Nyquist.
pub fn mel_edges(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect()
}

/// Triangular filters, `n_mels × (n_fft/2 + 1)`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Matrix {
    let edges = mel_edges(n_mels, sample_rate);
    let bins = n_fft / 2 + 1;
    let mut fb = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb.set(m, k, w);
        }
    }
    fb
}

pub struct MelSpectrogram {
    config: MelConfig,
    sample_rate: u32,
    window: Vec<f64>,
    hop: usize,
    n_fft: usize,
    filters: Matrix,
}

impl MelSpectrogram {
    pub fn new(config: MelConfig, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 || config.n_mels == 0 {
            return Err(avfd_core::Error::InvalidConfig("mel needs a positive rate and bin count".into()).into());
        }
        let win = ((config.window_ms / 1000.0 * sample_rate as f64).round() as usize).max(1);
        let hop = ((config.hop_ms / 1000.0 * sample_rate as f64).round() as usize).max(1);
        let n_fft = config.n_fft.max(win.next_power_of_two());
        // Periodic Hann.
        let window = (0..win).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos()).collect();
        Ok(Self { filters: mel_filterbank(config.n_mels, n_fft, sample_rate), config, sample_rate, window, hop, n_fft })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        let win = self.window.len();
        if samples <= win {
            1
        } else {
            1 + (samples - win) / self.hop
        }
    }

    /// `frames × n_mels` log-magnitude mel energies. Short input is zero-padded to one frame.
    pub fn compute(&self, samples: &[f64]) -> Result<Matrix> {
        if samples.is_empty() {
            return Err(avfd_core::Error::EmptyAudio.into());
        }
        let frames = self.frame_count(samples.len());
        let fft = FftPlanner::new().plan_fft_forward(self.n_fft);
        let bins = self.n_fft / 2 + 1;
        let mut out = Matrix::zeros(frames, self.config.n_mels);
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut mag = vec![0.0; bins];
        for t in 0..frames {
            let start = t * self.hop;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, w) in self.window.iter().enumerate() {
                if let Some(&s) = samples.get(start + i) {
                    buf[i].re = s * w;
                }
            }
            fft.process(&mut buf);
            for (m, c) in mag.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            let row = out.row_mut(t);
            for (m, r) in row.iter_mut().enumerate() {
                let e: f64 = self.filters.row(m).iter().zip(&mag).map(|(f, x)| f * x).sum();
                *r = e.max(self.config.log_floor).ln();
            }
        }
        Ok(out)
    }
}

pub fn mel_spectrogram(samples: &[f64], sample_rate: u32, config: MelConfig) -> Result<Matrix> {
    MelSpectrogram::new(config, sample_rate)?.compute(samples)
}
