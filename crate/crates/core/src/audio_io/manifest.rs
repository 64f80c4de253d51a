use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
    Unlabeled,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
            Label::Unlabeled => "unlabeled",
        })
    }
}

/// One row of `id,source,label,speaker_id,outlet,duration_ms,annotation_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub source: String,
    pub label: Label,
    pub speaker_id: Option<String>,
    pub outlet: String,
    pub duration_ms: Option<f64>,
    pub annotation_path: Option<String>,
}

impl ManifestEntry {
    pub fn is_url(&self) -> bool {
        self.source.starts_with("http://") || self.source.starts_with("https://")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            entries,
            base_dir: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut problems = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.id.is_empty() {
                problems.push(format!("row {}: empty id", i + 1));
            } else if !seen.insert(e.id.as_str()) {
                problems.push(format!("row {}: duplicate id `{}`", i + 1, e.id));
            }
            if e.outlet.trim().is_empty() {
                problems.push(format!("row {}: empty outlet for `{}`", i + 1, e.id));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let entries = reader
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::at(path))?;
        let mut m = Self::parse(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.entries.is_empty() {
            w.write_record([
                "id",
                "source",
                "label",
                "speaker_id",
                "outlet",
                "duration_ms",
                "annotation_path",
            ])?;
        }
        for e in &self.entries {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(Error::at(path))
    }

    /// Resolves a manifest-relative path.
    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "id,source,label,speaker_id,outlet,duration_ms,annotation_path
a,a.wav,real,spk1,Show A,60000,a.tsv
b,https://example.org/b.mp3,fake,,Outlet B,,
";

    #[test]
    fn parses_optional_fields() {
        let m = Manifest::parse(SAMPLE).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].speaker_id.as_deref(), Some("spk1"));
        assert_eq!(m.entries[0].duration_ms, Some(60000.0));
        assert_eq!(m.entries[1].speaker_id, None);
        assert_eq!(m.entries[1].annotation_path, None);
        assert!(m.entries[1].is_url());
        assert_eq!(Manifest::parse(&m.to_csv().unwrap()).unwrap(), m);
    }

    #[test]
    fn rejects_duplicates_and_missing_outlet() {
        let dup = "id,source,label,speaker_id,outlet,duration_ms,annotation_path\na,x,real,,o,,\na,y,fake,,o,,\n";
        assert!(matches!(Manifest::parse(dup), Err(Error::Validation(_))));
        let no_outlet = "id,source,label,speaker_id,outlet,duration_ms,annotation_path\na,x,real,,,,\n";
        assert!(matches!(Manifest::parse(no_outlet), Err(Error::Validation(_))));
        let bad_label = "id,source,label,speaker_id,outlet,duration_ms,annotation_path\na,x,maybe,,o,,\n";
        assert!(Manifest::parse(bad_label).is_err());
    }
}
