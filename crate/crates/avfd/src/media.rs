//! PNG/JPEG frames and WAV audio.

use std::io::Cursor;
use std::path::Path;

use avfd_core::image::Image;
use image::{DynamicImage, ImageFormat};

use crate::error::{self, Error, Result};

fn from_dynamic(img: DynamicImage, path: &Path) -> Result<Image> {
    let (w, h, ch, data) = match img {
        DynamicImage::ImageLuma8(b) => (b.width(), b.height(), 1, b.into_raw()),
        other => {
            let b = other.to_rgb8();
            (b.width(), b.height(), 3, b.into_raw())
        }
    };
    Image::new(w as usize, h as usize, ch, data).map_err(|e| Error::media(path, e))
}

fn to_dynamic(img: &Image) -> Result<DynamicImage> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes = img.as_bytes().to_vec();
    let out = match img.channels() {
        1 => image::GrayImage::from_raw(w, h, bytes).map(DynamicImage::ImageLuma8),
        3 => image::RgbImage::from_raw(w, h, bytes).map(DynamicImage::ImageRgb8),
        c => return Err(Error::Config(format!("cannot encode an image with {c} channels"))),
    };
    out.ok_or_else(|| Error::Config("image buffer does not match its shape".into()))
}

/// Reads an 8-bit image. Grayscale stays single-channel; anything else becomes RGB.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = error::read(path)?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::media(path, e))?;
    from_dynamic(img, path)
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_dynamic(img)?.write_to(&mut out, ImageFormat::Png).map_err(|e| Error::Config(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    error::write(path, encode_png(img)?)
}

pub fn encode_jpeg(img: &Image, quality: u8) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality.max(1));
    to_dynamic(img)?.write_with_encoder(encoder).map_err(|e| Error::Config(e.to_string()))?;
    Ok(out)
}

/// JPEG round trip at `quality`; the result keeps the input's shape.
pub fn jpeg_roundtrip(img: &Image, quality: u8) -> Result<Image> {
    let bytes = encode_jpeg(img, quality)?;
    let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Jpeg)
        .map_err(|e| Error::Config(format!("jpeg decode: {e}")))?;
    let decoded = if img.channels() == 1 {
        DynamicImage::ImageLuma8(decoded.to_luma8())
    } else {
        DynamicImage::ImageRgb8(decoded.to_rgb8())
    };
    from_dynamic(decoded, Path::new("<jpeg>"))
}

/// Mono waveform in `[-1, 1]`; multi-channel input is averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::media(path, e))?;
    let spec = reader.spec();
    let ch = spec.channels.max(1) as usize;
    let raw: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()
        }
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader.samples::<i32>().map(|s| s.map(|v| v as f64 * scale)).collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| Error::media(path, e))?;
    let samples = raw.chunks(ch).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    Ok(Waveform { samples, sample_rate: spec.sample_rate })
}

/// Writes 16-bit mono PCM.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| Error::media(path, e))?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(|e| Error::media(path, e))?;
    }
    w.finalize().map_err(|e| Error::media(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for ch in [1, 3] {
            let data = (0..5 * 4 * ch).map(|i| (i * 11 % 256) as u8).collect();
            let img = Image::new(5, 4, ch, data).unwrap();
            let p = dir.path().join(format!("x{ch}.png"));
            write_png(&p, &img).unwrap();
            assert_eq!(read_image(&p).unwrap(), img);
        }
    }

    #[test]
    fn jpeg_keeps_shape_and_quality_changes_size() {
        let data = (0..32 * 32 * 3).map(|i| ((i * 7919) % 256) as u8).collect();
        let img = Image::new(32, 32, 3, data).unwrap();
        let out = jpeg_roundtrip(&img, 20).unwrap();
        assert!(out.same_shape(&img));
        assert!(encode_jpeg(&img, 20).unwrap().len() < encode_jpeg(&img, 95).unwrap().len());
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let wave = Waveform { samples: (0..100).map(|i| (i as f64 / 10.0).sin() * 0.5).collect(), sample_rate: 16_000 };
        write_wav(&p, &wave).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        for (a, b) in back.samples.iter().zip(&wave.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_image(Path::new("/nonexistent/frame.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/frame.png"));
    }
}
