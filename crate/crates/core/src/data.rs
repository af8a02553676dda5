//! Sample records, manifests and per-clip feature bundles.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Talking,
    Singing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Fake];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Talking, Scenario::Singing];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Talking => "talking",
            Scenario::Singing => "singing",
        }
    }
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

macro_rules! enum_text {
    ($ty:ty, $what:literal) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| Error::Validation(format!("unknown {} `{}`", $what, s)))
            }
        }
    };
}

enum_text!(Label, "label");
enum_text!(Scenario, "scenario");
enum_text!(Split, "split");

/// Waveform reference and its sampling rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioRef {
    pub path: String,
    pub sample_rate: u32,
}

/// One labelled audio-visual clip. References are local paths (relative to
/// the manifest) or URLs; media is never embedded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub frame_refs: Vec<String>,
    pub mouth_refs: Vec<String>,
    pub audio_ref: AudioRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
    pub label: Label,
    pub scenario: Scenario,
    pub split: Split,
}

impl SampleRecord {
    /// Number of video frames `T`.
    pub fn frames(&self) -> usize {
        self.frame_refs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("record with empty id".into()));
        }
        if self.frame_refs.is_empty() {
            return Err(Error::Validation(format!("record `{}` has no frames", self.id)));
        }
        if self.frame_refs.len() != self.mouth_refs.len() {
            return Err(Error::Validation(format!(
                "record `{}` has {} frames but {} mouth crops",
                self.id,
                self.frame_refs.len(),
                self.mouth_refs.len()
            )));
        }
        if self.audio_ref.sample_rate == 0 {
            return Err(Error::Validation(format!("record `{}` has a zero audio sample rate", self.id)));
        }
        if self.label == Label::Fake && self.split == Split::Train {
            return Err(Error::Validation(format!(
                "record `{}` is fake but assigned to the train split; training is real-only",
                self.id
            )));
        }
        Ok(())
    }

    /// Every media reference of the record, in a stable order.
    pub fn references(&self) -> impl Iterator<Item = &str> {
        self.frame_refs
            .iter()
            .chain(&self.mouth_refs)
            .map(String::as_str)
            .chain(core::iter::once(self.audio_ref.path.as_str()))
            .chain(self.mask_ref.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub version: String,
    /// Free-form provenance, e.g. the corruption applied to derived datasets.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    /// Checks per-record invariants and id uniqueness. Reference resolution
    /// is the caller's job since it needs a filesystem.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate record id `{}`", r.id)));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

pub type SplitKey = (Split, Label, Scenario);

/// Record counts for every `(split, label, scenario)` combination, zeros included.
pub fn split_counts(manifest: &DatasetManifest) -> BTreeMap<SplitKey, usize> {
    let mut counts = BTreeMap::new();
    for s in Split::ALL {
        for l in Label::ALL {
            for sc in Scenario::ALL {
                counts.insert((s, l, sc), 0);
            }
        }
    }
    for r in &manifest.records {
        *counts.entry((r.split, r.label, r.scenario)).or_insert(0) += 1;
    }
    counts
}

/// Mean-pools `rows` into `target` temporal buckets. Bucket `b` covers rows
/// `floor(b·n/target) .. floor((b+1)·n/target)`, widened to at least one row,
/// so fewer source rows than buckets repeats rows instead of leaving gaps.
pub fn resample_rows(rows: &Matrix, target: usize) -> Result<Matrix> {
    let n = rows.rows();
    if n == 0 || target == 0 {
        return Err(Error::EmptySequence);
    }
    let mut out = Matrix::zeros(target, rows.cols());
    for b in 0..target {
        let start = (b * n / target).min(n - 1);
        let end = ((b + 1) * n / target).max(start + 1).min(n);
        let dst = out.row_mut(b);
        for r in start..end {
            linalg::axpy(1.0, rows.row(r), dst);
        }
        linalg::scale(dst, 1.0 / (end - start) as f64);
    }
    Ok(out)
}

/// Per-clip features in the shared embedding space: unit face semantic `f`
/// and frame-paired visual/audio rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    face: Vec<f64>,
    visual: Matrix,
    audio: Matrix,
}

impl FeatureBundle {
    pub fn new(face: Vec<f64>, visual: Matrix, audio: Matrix) -> Result<Self> {
        let d = face.len();
        check_dim("visual feature width", d, visual.cols())?;
        check_dim("audio feature width", d, audio.cols())?;
        check_dim("audio frame count", visual.rows(), audio.rows())?;
        if visual.rows() == 0 {
            return Err(Error::EmptySequence);
        }
        let n = linalg::norm(&face);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("face semantic has norm {n}, expected 1")));
        }
        Ok(Self { face, visual, audio })
    }

    pub fn face(&self) -> &[f64] {
        &self.face
    }

    pub fn visual(&self) -> &Matrix {
        &self.visual
    }

    pub fn audio(&self) -> &Matrix {
        &self.audio
    }

    pub fn dim(&self) -> usize {
        self.face.len()
    }

    pub fn frames(&self) -> usize {
        self.visual.rows()
    }
}
