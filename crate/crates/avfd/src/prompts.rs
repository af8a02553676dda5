//! Prompt files: one `pos<TAB>text` or `neg<TAB>text` per line.

use std::path::Path;

use avfd_core::fapl::{DEFAULT_NEGATIVE_PROMPTS, DEFAULT_POSITIVE_PROMPTS};

use crate::error::{self, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            positives: DEFAULT_POSITIVE_PROMPTS.iter().map(|s| s.to_string()).collect(),
            negatives: DEFAULT_NEGATIVE_PROMPTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PromptSet {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut set = Self { positives: Vec::new(), negatives: Vec::new() };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
            let (tag, body) =
                line.split_once('\t').ok_or_else(|| err("expected `pos<TAB>text` or `neg<TAB>text`".into()))?;
            let body = body.trim();
            if body.is_empty() {
                return Err(err("empty prompt".into()));
            }
            match tag.trim() {
                "pos" => set.positives.push(body.to_string()),
                "neg" => set.negatives.push(body.to_string()),
                other => return Err(err(format!("unknown polarity `{other}`"))),
            }
        }
        if set.positives.is_empty() {
            return Err(avfd_core::Error::EmptyPolarity("positive").into());
        }
        if set.negatives.is_empty() {
            return Err(avfd_core::Error::EmptyPolarity("negative").into());
        }
        Ok(set)
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&error::read_text(p)?, p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_text(&self) -> String {
        let pos = self.positives.iter().map(|p| format!("pos\t{p}\n"));
        let neg = self.negatives.iter().map(|n| format!("neg\t{n}\n"));
        pos.chain(neg).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = PromptSet::default();
        assert_eq!(d.positives[0], "a real human face");
        assert_eq!(PromptSet::parse(&d.to_text(), Path::new("p")).unwrap(), d);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            PromptSet::parse("pos\ta face\nmaybe\tx\n", Path::new("p")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            PromptSet::parse("pos\ta face\n", Path::new("p")),
            Err(Error::Core(avfd_core::Error::EmptyPolarity("negative")))
        ));
    }
}
