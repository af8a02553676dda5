//! Encoder construction and per-sample feature extraction.

use std::path::Path;

use avfd_core::data::{FeatureBundle, SampleRecord};
use avfd_core::encoders::{self, AvFrontEnd, Projection, RawClip, ToyAvFrontEnd, ToyFaceEncoder, ToyTextEncoder};
use avfd_core::image::Image;
use avfd_core::linalg::Matrix;
use avfd_core::perturb::Corruption;

use crate::config::RunConfig;
use crate::corrupt;
use crate::error::{self, Error, Result};
use crate::manifest;
use crate::media;
use crate::mel::{MelConfig, MelSpectrogram};

const WEIGHTS_MAGIC: &[u8; 8] = b"AVFDWTS1";

/// Encodes matrices as `AVFDWTS1`, a u32 count, then per matrix u32 rows,
/// u32 cols and little-endian f64 entries.
pub fn encode_weights(mats: &[&Matrix]) -> Vec<u8> {
    let mut out = WEIGHTS_MAGIC.to_vec();
    out.extend((mats.len() as u32).to_le_bytes());
    for m in mats {
        out.extend((m.rows() as u32).to_le_bytes());
        out.extend((m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<Vec<Matrix>> {
    let bad = |m: &str| Error::media(path, format!("weight file: {m}"));
    let rest = bytes.strip_prefix(WEIGHTS_MAGIC).ok_or_else(|| bad("bad magic"))?;
    let mut cur = rest;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated"));
        }
        let (a, b) = cur.split_at(n);
        cur = b;
        Ok(a)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let count = u32_at(take(4)?);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = u32_at(take(4)?);
        let cols = u32_at(take(4)?);
        let data = take(rows * cols * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push(Matrix::from_vec(rows, cols, data)?);
    }
    if !cur.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

pub fn read_weights(path: &Path) -> Result<Vec<Matrix>> {
    decode_weights(&error::read(path)?, path)
}

/// Frozen encoders shared by training and scoring.
#[derive(Debug, Clone)]
pub struct Encoders {
    pub face: ToyFaceEncoder,
    pub text: ToyTextEncoder,
    pub av: ToyAvFrontEnd,
    pub mel: MelConfig,
}

impl Encoders {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let e = &cfg.encoders;
        let m = &cfg.model;
        let face = match &e.face_weights {
            Some(p) => {
                let mut w = read_weights(p)?;
                if w.len() != 1 {
                    return Err(Error::media(p, "face weights hold exactly one matrix"));
                }
                ToyFaceEncoder::from_weights(p.display().to_string(), e.face_grid, w.remove(0))?
            }
            None => ToyFaceEncoder::new(e.seed, m.dim, e.face_grid),
        };
        let av = match &e.frontend_weights {
            Some(p) => {
                let w = read_weights(p)?;
                let [v, a]: [Matrix; 2] =
                    w.try_into().map_err(|_| Error::media(p, "front-end weights hold a visual and an audio matrix"))?;
                ToyAvFrontEnd::from_weights(e.mouth_grid, v, a)?
            }
            None => ToyAvFrontEnd::new(e.seed, m.raw_dim, e.mouth_grid, e.n_mels),
        };
        if face.weights().rows() != m.dim {
            return Err(Error::Config(format!(
                "face encoder width {} differs from dim {}",
                face.weights().rows(),
                m.dim
            )));
        }
        if av.raw_dim() != m.raw_dim {
            return Err(Error::Config(format!("front-end width {} differs from raw_dim {}", av.raw_dim(), m.raw_dim)));
        }
        Ok(Self {
            face,
            text: ToyTextEncoder::new(e.seed, m.dim, m.token_dim),
            mel: MelConfig { n_mels: av.n_mels(), ..MelConfig::default() },
            av,
        })
    }
}

fn load_frame(root: &Path, reference: &str, corruption: Option<(&Corruption, u64)>) -> Result<Image> {
    if manifest::is_url(reference) {
        return Err(Error::media(reference, "remote references must be fetched before extraction"));
    }
    let img = media::read_image(&manifest::resolve(root, reference))?;
    match corruption {
        Some((spec, stream)) => corrupt::corrupt_frame(&img, spec, stream),
        None => Ok(img),
    }
}

/// Front-end features before projection. With `corruption`, every face
/// frame and mouth crop is corrupted before encoding.
pub fn extract_raw(
    record: &SampleRecord,
    root: &Path,
    enc: &Encoders,
    corruption: Option<&Corruption>,
) -> Result<RawClip> {
    let with = |kind: u64, t: usize| corruption.map(|c| (c, corrupt::stream_id(&record.id, kind, t)));
    let frames = record
        .frame_refs
        .iter()
        .enumerate()
        .map(|(t, r)| load_frame(root, r, with(0, t)))
        .collect::<Result<Vec<_>>>()?;
    let mask = record.mask_ref.as_deref().map(|r| load_frame(root, r, None)).transpose()?;
    let face = encoders::encode_face_sequence(&enc.face, &frames, mask.as_ref())?;

    let mouths = record
        .mouth_refs
        .iter()
        .enumerate()
        .map(|(t, r)| load_frame(root, r, with(1, t)))
        .collect::<Result<Vec<_>>>()?;
    let visual = enc.av.visual(&mouths)?;

    let audio_path = &record.audio_ref.path;
    if manifest::is_url(audio_path) {
        return Err(Error::media(audio_path, "remote references must be fetched before extraction"));
    }
    let path = manifest::resolve(root, audio_path);
    let wave = media::read_wav(&path)?;
    if wave.sample_rate != record.audio_ref.sample_rate {
        return Err(Error::media(
            &path,
            format!("sample rate {} differs from the manifest's {}", wave.sample_rate, record.audio_ref.sample_rate),
        ));
    }
    let mel = MelSpectrogram::new(enc.mel, wave.sample_rate)?.compute(&wave.samples)?;
    let audio = enc.av.audio(&mel)?;
    Ok(RawClip::new(face, visual, &audio)?)
}

pub fn extract_features(
    record: &SampleRecord,
    root: &Path,
    enc: &Encoders,
    visual: &Projection,
    audio: &Projection,
) -> Result<FeatureBundle> {
    Ok(extract_raw(record, root, enc, None)?.project(visual, audio)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.5]]).unwrap();
        let b = Matrix::identity(3);
        let bytes = encode_weights(&[&a, &b]);
        assert_eq!(decode_weights(&bytes, Path::new("w")).unwrap(), vec![a, b]);
        assert!(decode_weights(&bytes[..bytes.len() - 1], Path::new("w")).is_err());
    }
}
