//! Frame corruptions for robustness evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{self, round_half_away};
use crate::rng::{self, salt};

pub const DEFAULT_KSIZE: usize = 5;
pub const DEFAULT_QUALITY: u8 = 20;
pub const DEFAULT_SIGMA: f64 = 25.0;
pub const DEFAULT_BLOCK: usize = 10;
pub const DEFAULT_SCALE: f64 = 0.5;
pub const PIXELATION_BLOCKS: [usize; 5] = [2, 4, 8, 10, 16];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    Blur { ksize: usize },
    Compress { quality: u8 },
    Invert,
    Noise { sigma: f64, seed: u64 },
    Pixelation { block: usize },
    Resize { scale: f64 },
}

impl Corruption {
    pub const KINDS: [&'static str; 6] = ["blur", "compress", "invert", "noise", "pixelation", "resize"];

    pub fn default_for(kind: &str) -> Result<Self> {
        Ok(match kind {
            "blur" => Self::Blur { ksize: DEFAULT_KSIZE },
            "compress" | "jpeg" => Self::Compress { quality: DEFAULT_QUALITY },
            "invert" => Self::Invert,
            "noise" => Self::Noise { sigma: DEFAULT_SIGMA, seed: 0 },
            "pixelation" | "pixelate" => Self::Pixelation { block: DEFAULT_BLOCK },
            "resize" => Self::Resize { scale: DEFAULT_SCALE },
            other => return Err(Error::InvalidSpec(format!("unknown corruption kind `{other}`"))),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Blur { .. } => "blur",
            Self::Compress { .. } => "compress",
            Self::Invert => "invert",
            Self::Noise { .. } => "noise",
            Self::Pixelation { .. } => "pixelation",
            Self::Resize { .. } => "resize",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match *self {
            Self::Blur { ksize } if ksize == 0 || ksize % 2 == 0 => {
                bad(format!("ksize must be odd and >= 1, got {ksize}"))
            }
            Self::Compress { quality } if quality > 100 => bad(format!("quality must be in [0, 100], got {quality}")),
            Self::Noise { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad(format!("sigma must be finite and >= 0, got {sigma}"))
            }
            Self::Pixelation { block } if !PIXELATION_BLOCKS.contains(&block) => {
                bad(format!("block must be one of {PIXELATION_BLOCKS:?}, got {block}"))
            }
            Self::Resize { scale } if !(scale > 0.0 && scale <= 1.0) => {
                bad(format!("scale must be in (0, 1], got {scale}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Blur { ksize } => write!(f, "blur:ksize={ksize}"),
            Self::Compress { quality } => write!(f, "compress:quality={quality}"),
            Self::Invert => write!(f, "invert"),
            Self::Noise { sigma, seed } => write!(f, "noise:sigma={sigma},seed={seed}"),
            Self::Pixelation { block } => write!(f, "pixelation:block={block}"),
            Self::Resize { scale } => write!(f, "resize:scale={scale}"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidSpec(format!("bad value `{value}` for `{key}`")))
}

/// Parses `kind` or `kind:key=value,...`; omitted parameters take their defaults.
impl FromStr for Corruption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = match s.trim().split_once(':') {
            Some((k, p)) => (k.trim(), p),
            None => (s.trim(), ""),
        };
        let mut spec = Self::default_for(&kind.to_ascii_lowercase())?;
        for pair in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) =
                pair.split_once('=').ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got `{pair}`")))?;
            let key = key.trim();
            match (&mut spec, key) {
                (Self::Blur { ksize }, "ksize") => *ksize = parse_num(key, value)?,
                (Self::Compress { quality }, "quality") => *quality = parse_num(key, value)?,
                (Self::Noise { sigma, .. }, "sigma") => *sigma = parse_num(key, value)?,
                (Self::Noise { seed, .. }, "seed") => *seed = parse_num(key, value)?,
                (Self::Pixelation { block }, "block" | "psize") => *block = parse_num(key, value)?,
                (Self::Resize { scale }, "scale") => *scale = parse_num(key, value)?,
                _ => return Err(Error::InvalidSpec(format!("`{key}` is not a parameter of {}", spec.kind()))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Gaussian sigma implied by a kernel size.
pub fn blur_sigma(ksize: usize) -> f64 {
    0.3 * ((ksize as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_kernel_1d(ksize: usize) -> Vec<f64> {
    let sigma = blur_sigma(ksize);
    let r = (ksize / 2) as f64;
    let mut k: Vec<f64> = (0..ksize)
        .map(|i| {
            let x = i as f64 - r;
            linalg::exp(-x * x / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Row-major `ksize × ksize` kernel, the outer product of the 1-D taps.
pub fn gaussian_kernel_2d(ksize: usize) -> Vec<f64> {
    let k = gaussian_kernel_1d(ksize);
    k.iter().flat_map(|a| k.iter().map(move |b| a * b)).collect()
}

fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

fn to_u8(v: f64) -> u8 {
    round_half_away(v).clamp(0.0, 255.0) as u8
}

pub fn blur(img: &Image, ksize: usize) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let k = gaussian_kernel_1d(ksize);
    let r = (ksize / 2) as isize;
    let src = img.as_bytes();
    let mut tmp = alloc::vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let xx = reflect101(x as isize + t as isize - r, w);
                    acc += kv * src[(y * w + xx) * ch + c] as f64;
                }
                tmp[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let yy = reflect101(y as isize + t as isize - r, h);
                    acc += kv * tmp[(yy * w + x) * ch + c];
                }
                out.set(x, y, c, to_u8(acc));
            }
        }
    }
    out
}

pub fn invert(img: &Image) -> Image {
    let mut out = img.clone();
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                out.set(x, y, c, 255 - img.get(x, y, c));
            }
        }
    }
    out
}

/// Additive Gaussian noise; `stream` separates frames that share one seed.
pub fn noise(img: &Image, sigma: f64, seed: u64, stream: u64) -> Image {
    let mut r = rng::seeded(seed, salt::NOISE ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = img.clone();
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let v = img.get(x, y, c) as f64 + rng::gaussian(&mut r, sigma);
                out.set(x, y, c, to_u8(v));
            }
        }
    }
    out
}

/// Replaces each `block × block` tile (smaller at the edges) by the floor of its mean.
pub fn pixelate(img: &Image, block: usize) -> Image {
    let block = block.max(1);
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = img.clone();
    for ty in (0..h).step_by(block) {
        for tx in (0..w).step_by(block) {
            let (ye, xe) = ((ty + block).min(h), (tx + block).min(w));
            let count = ((ye - ty) * (xe - tx)) as u32;
            for c in 0..ch {
                let mut sum = 0u32;
                for y in ty..ye {
                    for x in tx..xe {
                        sum += img.get(x, y, c) as u32;
                    }
                }
                let mean = (sum / count) as u8;
                for y in ty..ye {
                    for x in tx..xe {
                        out.set(x, y, c, mean);
                    }
                }
            }
        }
    }
    out
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    let mut out = Image::filled(width, height, img.channels(), 0)?;
    let (sw, sh) = (img.width(), img.height());
    let coord = |d: usize, src: usize, dst: usize| {
        let s = ((d as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
        let i0 = s as usize;
        let i1 = (i0 + 1).min(src - 1);
        (i0, i1, s - i0 as f64)
    };
    for y in 0..height {
        let (y0, y1, fy) = coord(y, sh, height);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, sw, width);
            for c in 0..img.channels() {
                let p = |xx, yy| img.get(xx, yy, c) as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                out.set(x, y, c, to_u8(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Ok(out)
}

/// Downscales by `scale` and restores the original size.
pub fn resize(img: &Image, scale: f64) -> Result<Image> {
    let dw = (round_half_away(img.width() as f64 * scale) as usize).max(1);
    let dh = (round_half_away(img.height() as f64 * scale) as usize).max(1);
    let small = resize_bilinear(img, dw, dh)?;
    resize_bilinear(&small, img.width(), img.height())
}

/// Applies `spec` to one frame. JPEG compression needs a codec and is
/// rejected here with [`Error::CodecRequired`].
pub fn apply_corruption(img: &Image, spec: &Corruption) -> Result<Image> {
    apply_corruption_stream(img, spec, 0)
}

/// As [`apply_corruption`], with a per-frame stream index for noise.
pub fn apply_corruption_stream(img: &Image, spec: &Corruption, stream: u64) -> Result<Image> {
    spec.validate()?;
    if img.width() == 0 || img.height() == 0 || img.channels() == 0 {
        return Err(Error::EmptyImage);
    }
    Ok(match *spec {
        Corruption::Blur { ksize } => blur(img, ksize),
        Corruption::Compress { .. } => return Err(Error::CodecRequired),
        Corruption::Invert => invert(img),
        Corruption::Noise { sigma, seed } => noise(img, sigma, seed, stream),
        Corruption::Pixelation { block } => pixelate(img, block),
        Corruption::Resize { scale } => resize(img, scale)?,
    })
}
