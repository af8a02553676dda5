//! Line-delimited manifest files.
//!
//! ```text
//! avfd-manifest v1
//! {"name":"...","version":"...","metadata":{...}}
//! {"id":"...","frame_refs":[...],...}
//! ```
//!
//! Local references are relative to the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use avfd_core::data::{DatasetManifest, SampleRecord};
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};

pub const HEADER: &str = "avfd-manifest v1";

#[derive(Serialize, Deserialize)]
struct Head {
    name: String,
    version: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

pub fn is_url(reference: &str) -> bool {
    reference.contains("://")
}

/// Resolves a reference against the manifest directory.
pub fn resolve(root: &Path, reference: &str) -> PathBuf {
    let p = Path::new(reference);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

pub fn root_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn to_string(m: &DatasetManifest) -> String {
    let head = Head { name: m.name.clone(), version: m.version.clone(), metadata: m.metadata.clone() };
    let mut out = String::from(HEADER);
    out.push('\n');
    out.push_str(&serde_json::to_string(&head).expect("header serialises"));
    out.push('\n');
    for r in &m.records {
        out.push_str(&serde_json::to_string(r).expect("record serialises"));
        out.push('\n');
    }
    out
}

/// Parses manifest text and checks record-level invariants. `path` is only used in messages.
pub fn parse(text: &str, path: &Path) -> Result<DatasetManifest> {
    let perr = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_end() == HEADER => {}
        Some((_, l)) => return Err(perr(1, format!("expected `{HEADER}`, found `{l}`"))),
        None => return Err(perr(1, "empty manifest".into())),
    }
    let (n, head_line) = lines.next().ok_or_else(|| perr(2, "missing header record".into()))?;
    let head: Head = serde_json::from_str(head_line).map_err(|e| perr(n, e.to_string()))?;
    let mut records = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let r: SampleRecord = serde_json::from_str(line).map_err(|e| perr(n, e.to_string()))?;
        records.push(r);
    }
    let m = DatasetManifest { name: head.name, version: head.version, metadata: head.metadata, records };
    m.validate()?;
    Ok(m)
}

/// Loads and validates a manifest, including that every local reference exists.
pub fn load(path: &Path) -> Result<DatasetManifest> {
    let m = parse(&error::read_text(path)?, path)?;
    let root = root_of(path);
    for r in &m.records {
        let refs = r.references().chain(std::iter::once(r.audio_ref.path.as_str())).chain(r.mask_ref.as_deref());
        for reference in refs {
            if is_url(reference) {
                continue;
            }
            let p = resolve(&root, reference);
            if !p.is_file() {
                return Err(avfd_core::Error::Validation(format!(
                    "record `{}` references missing file {}",
                    r.id,
                    p.display()
                ))
                .into());
            }
        }
    }
    Ok(m)
}

pub fn save(path: &Path, m: &DatasetManifest) -> Result<()> {
    m.validate()?;
    error::write(path, to_string(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use avfd_core::data::{AudioRef, Label, Scenario, Split};

    fn record(id: &str, label: Label, split: Split) -> SampleRecord {
        SampleRecord {
            id: id.into(),
            frame_refs: vec![format!("{id}/f0.png")],
            mouth_refs: vec![format!("{id}/m0.png")],
            audio_ref: AudioRef { path: format!("{id}/a.wav"), sample_rate: 16_000 },
            mask_ref: None,
            label,
            scenario: Scenario::Talking,
            split,
        }
    }

    fn manifest(records: Vec<SampleRecord>) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            version: "1".into(),
            metadata: BTreeMap::from([("fps".into(), "25".into())]),
            records,
        }
    }

    #[test]
    fn text_round_trip() {
        let m = manifest(vec![record("a", Label::Real, Split::Train), record("b", Label::Fake, Split::Test)]);
        let s = to_string(&m);
        let back = parse(&s, Path::new("m")).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_string(&back), s);
    }

    #[test]
    fn fake_in_train_rejected() {
        let s = to_string(&manifest(vec![record("a", Label::Real, Split::Train)])).replace("\"real\"", "\"fake\"");
        let err = parse(&s, Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let m = manifest(vec![record("a", Label::Real, Split::Train), record("a", Label::Real, Split::Test)]);
        assert!(parse(&to_string(&m), Path::new("m")).is_err());
    }

    #[test]
    fn malformed_lines_report_position() {
        let err =
            parse("avfd-manifest v1\n{\"name\":\"x\",\"version\":\"1\"}\n{nope\n", Path::new("m.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(matches!(parse("bogus\n", Path::new("m")), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn load_checks_references() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record("a", Label::Real, Split::Train);
        r.audio_ref.path = "https://example.org/a.wav".into();
        let m = manifest(vec![r]);
        let path = dir.path().join("m.txt");
        save(&path, &m).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("f0.png"), "{err}");
        for f in ["a/f0.png", "a/m0.png"] {
            error::write(&dir.path().join(f), b"x").unwrap();
        }
        assert_eq!(load(&path).unwrap(), m);
    }
}
