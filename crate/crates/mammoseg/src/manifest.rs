//! Dataset manifest: CSV with header `path,label,split`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mammoseg_core::classify::AcrLabel;
use serde::Deserialize;

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// File stem, unique within a manifest; names every output of the image.
    pub id: String,
    pub path: PathBuf,
    pub label: AcrLabel,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct Row {
    path: String,
    label: String,
    split: String,
}

impl DatasetManifest {
    /// Reads a manifest; relative paths resolve against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "label", "split"] {
            return Err(PipelineError::Manifest(format!("header must be `path,label,split`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut entries: Vec<ManifestEntry> = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row?;
            let line = i + 2;
            let bad = |m: String| PipelineError::Manifest(format!("line {line}: {m}"));
            let label = row.label.parse::<AcrLabel>().map_err(|e| bad(e.to_string()))?;
            let split = row.split.parse::<Split>().map_err(bad)?;
            let rel = PathBuf::from(&row.path);
            let full = if rel.is_absolute() { rel } else { base.join(rel) };
            if !full.is_file() {
                return Err(bad(format!("image `{}` does not exist", full.display())));
            }
            let id = full
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| bad(format!("`{}` has no file name", row.path)))?;
            if entries.iter().any(|e| e.id == id) {
                return Err(bad(format!("duplicate image id `{id}`")));
            }
            entries.push(ManifestEntry { id, path: full, label, split });
        }
        if entries.is_empty() {
            return Err(PipelineError::Manifest("no entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn find(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn to_csv(&self, base: &Path) -> String {
        let mut out = String::from("path,label,split\n");
        for e in &self.entries {
            let p = e.path.strip_prefix(base).unwrap_or(&e.path);
            out.push_str(&format!("{},{},{}\n", p.display(), e.label, e.split));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.pgm"), b"P2 1 1 1 0").unwrap();
        std::fs::write(dir.path().join("b.pgm"), b"P2 1 1 1 0").unwrap();
        let m = DatasetManifest::parse("path,label,split\na.pgm,ACR2,train\nb.pgm, 5 ,test\n", dir.path()).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[1].label, AcrLabel::Acr5);
        assert_eq!(m.entries[0].id, "a");
        assert_eq!(m.split(Split::Test).count(), 1);
        let again = DatasetManifest::parse(&m.to_csv(dir.path()), dir.path()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.pgm"), b"P2 1 1 1 0").unwrap();
        for text in [
            "file,label,split\na.pgm,ACR1,train\n",
            "path,label,split\nmissing.pgm,ACR1,train\n",
            "path,label,split\na.pgm,ACR9,train\n",
            "path,label,split\na.pgm,ACR1,validate\n",
            "path,label,split\na.pgm,ACR1,train\na.pgm,ACR2,test\n",
            "path,label,split\n",
        ] {
            assert!(DatasetManifest::parse(text, dir.path()).is_err(), "{text}");
        }
    }
}
