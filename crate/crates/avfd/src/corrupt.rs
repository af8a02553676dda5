//! Frame corruption with JPEG support, and whole-dataset corruption.

use std::path::{Path, PathBuf};

use avfd_core::data::DatasetManifest;
use avfd_core::image::Image;
use avfd_core::perturb::{self, Corruption};

use crate::error::{self, Error, Result};
use crate::manifest;
use crate::media;

/// Applies `spec` to one frame; `stream` keys the noise draw.
pub fn corrupt_frame(img: &Image, spec: &Corruption, stream: u64) -> Result<Image> {
    match spec {
        Corruption::Compress { quality } => {
            spec.validate()?;
            media::jpeg_roundtrip(img, *quality)
        }
        _ => Ok(perturb::apply_corruption_stream(img, spec, stream)?),
    }
}

/// Noise stream for frame `index` of a sample; `kind` separates face frames from mouth crops.
pub fn stream_id(sample_id: &str, kind: u64, index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in sample_id.bytes().chain(kind.to_le_bytes()).chain((index as u64).to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn dir_name(index: usize, id: &str) -> String {
    let clean: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{index:05}-{clean}")
}

/// Writes a corrupted copy of the dataset under `out_dir` and returns its
/// manifest, also saved as `out_dir/manifest.txt`. Audio and masks are
/// copied unchanged. The input dataset is never modified.
pub fn corrupt_dataset(manifest_path: &Path, spec: &Corruption, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let source = manifest::load(manifest_path)?;
    let root = manifest::root_of(manifest_path);
    let out_manifest = out_dir.join("manifest.txt");
    if out_manifest.exists() && same_file(&out_manifest, manifest_path) {
        return Err(Error::Config("output directory would overwrite the input manifest".into()));
    }
    let mut out = source.clone();
    out.metadata.insert("corruption".into(), spec.to_string());
    out.metadata.insert("corrupted_from".into(), format!("{} {}", source.name, source.version));
    for (i, rec) in out.records.iter_mut().enumerate() {
        let dir = dir_name(i, &rec.id);
        let convert = |refs: &mut Vec<String>, kind: u64, stem: &str| -> Result<()> {
            for (t, r) in refs.iter_mut().enumerate() {
                let img = media::read_image(&manifest::resolve(&root, r))?;
                let img = corrupt_frame(&img, spec, stream_id(&rec.id, kind, t))?;
                let rel = format!("{dir}/{stem}_{t:04}.png");
                media::write_png(&out_dir.join(&rel), &img)?;
                *r = rel;
            }
            Ok(())
        };
        convert(&mut rec.frame_refs, 0, "frame")?;
        convert(&mut rec.mouth_refs, 1, "mouth")?;
        let copy = |reference: &str, name: &str| -> Result<String> {
            let src = manifest::resolve(&root, reference);
            let ext = src.extension().and_then(|e| e.to_str()).unwrap_or("bin");
            let rel = format!("{dir}/{name}.{ext}");
            error::write(&out_dir.join(&rel), error::read(&src)?)?;
            Ok(rel)
        };
        rec.audio_ref.path = copy(&rec.audio_ref.path, "audio")?;
        if let Some(m) = rec.mask_ref.take() {
            rec.mask_ref = Some(copy(&m, "mask")?);
        }
    }
    manifest::save(&out_manifest, &out)?;
    Ok(out)
}

fn same_file(a: &Path, b: &Path) -> bool {
    let canon = |p: &Path| p.canonicalize().unwrap_or_else(|_| PathBuf::from(p));
    canon(a) == canon(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compress_keeps_shape() {
        let img = Image::new(16, 8, 3, (0..16 * 8 * 3).map(|i| (i % 251) as u8).collect()).unwrap();
        let out = corrupt_frame(&img, &"compress".parse().unwrap(), 0).unwrap();
        assert!(out.same_shape(&img));
        assert!(corrupt_frame(&img, &Corruption::Compress { quality: 101 }, 0).is_err());
    }

    #[test]
    fn streams_differ_by_frame_and_kind() {
        assert_ne!(stream_id("a", 0, 0), stream_id("a", 0, 1));
        assert_ne!(stream_id("a", 0, 0), stream_id("a", 1, 0));
        assert_eq!(stream_id("a", 1, 3), stream_id("a", 1, 3));
    }
}
