use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, ResolutionTag, Split};

/// One labeled face frame of a (pseudo-)video.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Relative paths are resolved against the manifest's directory.
    pub frame_path: String,
    pub video_id: String,
    pub frame_index: u32,
    pub label: Label,
    pub split: Split,
    pub resolution_tag: ResolutionTag,
}

/// A loaded manifest: its entries plus the directory relative frame paths
/// are resolved against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.frame_path)
    }

    pub fn split(&self, split: Split) -> Vec<ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).cloned().collect()
    }
}

/// Checks the manifest invariants over `entries`, where entry `i` came from
/// line `lines[i]` (1-based).
fn validate(entries: &[ManifestEntry], lines: &[usize]) -> Result<()> {
    let mut seen: HashMap<(&str, u32), usize> = HashMap::new();
    let mut videos: HashMap<&str, (usize, &ManifestEntry)> = HashMap::new();
    for (e, &line) in entries.iter().zip(lines) {
        if let Some(first) = seen.insert((&e.video_id, e.frame_index), line) {
            return Err(Error::Manifest {
                line,
                message: format!(
                    "duplicate frame ({}, {}) also on line {first}",
                    e.video_id, e.frame_index
                ),
            });
        }
        let (first, head) = *videos.entry(&e.video_id).or_insert((line, e));
        let field = if head.label != e.label {
            Some("label")
        } else if head.split != e.split {
            Some("split")
        } else if head.resolution_tag != e.resolution_tag {
            Some("resolution_tag")
        } else {
            None
        };
        if let Some(field) = field {
            return Err(Error::Manifest {
                line,
                message: format!(
                    "video `{}` has mixed {field} (conflicts with line {first})",
                    e.video_id
                ),
            });
        }
    }
    Ok(())
}

pub fn validate_entries(entries: &[ManifestEntry]) -> Result<()> {
    let lines: Vec<usize> = (1..=entries.len()).collect();
    validate(entries, &lines)
}

/// Parses a JSONL manifest. Blank lines are ignored.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(raw).map_err(|e| Error::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
        lines.push(i + 1);
    }
    validate(&entries, &lines)?;
    Ok(entries)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Manifest {
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        entries: parse_manifest(&text)?,
    })
}

pub fn manifest_to_jsonl(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(manifest_to_jsonl(entries).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(video: &str, idx: u32, label: &str) -> String {
        format!(
            r#"{{"frame_path":"{video}/{idx}.ppm","video_id":"{video}","frame_index":{idx},"label":"{label}","split":"test","resolution_tag":"low"}}"#
        )
    }

    #[test]
    fn empty_text_is_empty_manifest() {
        assert!(parse_manifest("").unwrap().is_empty());
        assert!(parse_manifest("\n\n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_names_both_lines() {
        let text = [line("v1", 0, "real"), line("v1", 1, "real"), line("v1", 0, "real")].join("\n");
        match parse_manifest(&text) {
            Err(Error::Manifest { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("line 1"), "{message}");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn mixed_label_rejected() {
        let text = [line("v1", 0, "real"), line("v1", 1, "fake")].join("\n");
        let err = parse_manifest(&text).unwrap_err().to_string();
        assert!(err.contains("mixed label"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = [line("v1", 0, "real"), "{not json".to_string()].join("\n");
        assert!(matches!(parse_manifest(&text), Err(Error::Manifest { line: 2, .. })));
        let bad_label = line("v1", 0, "maybe");
        assert!(matches!(parse_manifest(&bad_label), Err(Error::Manifest { line: 1, .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let text = [line("a", 0, "real"), line("b", 2, "fake")].join("\n") + "\n";
        let entries = parse_manifest(&text).unwrap();
        assert_eq!(manifest_to_jsonl(&entries), text);
    }
}
