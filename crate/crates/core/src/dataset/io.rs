//! Line-delimited dataset files: one manifest line, then one line per record.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CommitRecord, Dataset, DatasetError, Manifest, ManifestCounts};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LineRef<'a> {
    Manifest(&'a Manifest),
    Record(&'a CommitRecord),
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LineOwned {
    Manifest(Box<Manifest>),
    Record(Box<CommitRecord>),
}

pub fn write_dataset(dataset: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, &LineRef::Manifest(&dataset.manifest))?;
    out.write_all(b"\n")?;
    for record in &dataset.records {
        serde_json::to_writer(&mut out, &LineRef::Record(record))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn serialize_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = std::io::BufWriter::new(file);
    write_dataset(dataset, &mut writer).map_err(io_err)?;
    writer.flush().map_err(io_err)
}

/// Parses a dataset and checks the manifest counts against the records.
pub fn read_dataset(input: impl BufRead, origin: &str) -> Result<Dataset, DatasetError> {
    let mut manifest: Option<Manifest> = None;
    let mut records = Vec::new();
    for (index, line) in input.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io { path: origin.to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let json_err = |source| DatasetError::Json { line: index + 1, source };
        if manifest.is_none() {
            let raw: serde_json::Value = serde_json::from_str(&line).map_err(json_err)?;
            if raw.get("type").and_then(|t| t.as_str()) != Some("manifest") {
                return Err(DatasetError::MissingManifest);
            }
            let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
            if found != SCHEMA_VERSION as u64 {
                return Err(DatasetError::SchemaVersionMismatch { found, expected: SCHEMA_VERSION });
            }
        }
        match serde_json::from_str::<LineOwned>(&line).map_err(json_err)? {
            LineOwned::Manifest(m) if manifest.is_none() => manifest = Some(*m),
            LineOwned::Manifest(_) => {
                return Err(DatasetError::ManifestMismatch {
                    field: "manifest",
                    declared: "one manifest line".into(),
                    actual: format!("another manifest on line {}", index + 1),
                })
            }
            LineOwned::Record(r) => records.push(*r),
        }
    }
    let manifest = manifest.ok_or(DatasetError::MissingManifest)?;
    let actual = ManifestCounts::from_records(&records);
    if let Some((field, declared, actual)) = manifest.counts.first_mismatch(&actual) {
        return Err(DatasetError::ManifestMismatch { field, declared, actual });
    }
    Ok(Dataset { manifest, records })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    read_dataset(std::io::BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CommitRange, Exclusions, Subset, TestId};
    use crate::diff::{CodeChange, DiffLine, Hunk, LineTag};

    fn manifest() -> Manifest {
        Manifest {
            schema_version: SCHEMA_VERSION,
            repo: "fixture".into(),
            range: CommitRange { from: None, to: "abc".into() },
            context_lines: 9,
            path_rules_digest: "d".into(),
            conventions_digest: "c".into(),
            merge_policy: "first-parent".into(),
            ground_truth_includes_added: true,
            counts: ManifestCounts::from_records(&[]),
            exclusions: Exclusions::default(),
        }
    }

    fn record(commit: &str, n_changes: usize, gt: &[&str]) -> CommitRecord {
        let hunk = Hunk {
            old_start: 1,
            old_len: 1,
            new_start: 1,
            new_len: 1,
            section: String::new(),
            lines: vec![DiffLine::new(LineTag::Removed, "a"), DiffLine::new(LineTag::Added, "b")],
        };
        let changes = (0..n_changes)
            .map(|i| CodeChange {
                commit_id: commit.into(),
                file_path: "src/main/A.java".into(),
                hunk_index: i,
                hunk: hunk.clone(),
                rendered_text: String::new(),
            })
            .collect();
        let ids: std::collections::BTreeSet<TestId> =
            gt.iter().map(|m| TestId::new("src/test/ATest.java", "ATest", *m)).collect();
        let mut universe = ids.clone();
        universe.insert(TestId::new("src/test/ATest.java", "ATest", "other"));
        CommitRecord {
            commit_id: commit.into(),
            changes,
            subset: if ids.is_empty() { Subset::Unchanged } else { Subset::Changed },
            ground_truth: ids,
            universe,
            added_tests: Default::default(),
            deleted_tests: Default::default(),
            warnings: vec![],
        }
    }

    fn to_string(d: &Dataset) -> String {
        let mut buf = Vec::new();
        write_dataset(d, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip() {
        let d = Dataset::from_records(manifest(), vec![record("a", 2, &["t1"]), record("b", 1, &[])]);
        let text = to_string(&d);
        assert_eq!(text.lines().count(), 3);
        let back = read_dataset(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn empty_dataset_is_valid() {
        let d = Dataset::from_records(manifest(), vec![]);
        let back = read_dataset(to_string(&d).as_bytes(), "mem").unwrap();
        assert!(back.records.is_empty());
    }

    #[test]
    fn tampered_counts_are_detected() {
        let d = Dataset::from_records(manifest(), vec![record("a", 2, &["t1"])]);
        let text = to_string(&d).replacen("\"commits\":1", "\"commits\":99", 1);
        let err = read_dataset(text.as_bytes(), "mem").unwrap_err();
        assert!(
            matches!(err, DatasetError::ManifestMismatch { field: "commits", ref declared, .. } if declared == "99"),
            "{err}"
        );
    }

    #[test]
    fn schema_version_is_checked() {
        let d = Dataset::from_records(manifest(), vec![]);
        let text = to_string(&d).replacen("\"schema_version\":1", "\"schema_version\":7", 1);
        let err = read_dataset(text.as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, DatasetError::SchemaVersionMismatch { found: 7, expected: 1 }));
    }

    #[test]
    fn manifest_expresses_reference_dataset_shape() {
        // 32 commits with 535 changes and 22 with 99: 54 commits, 634 changes.
        let mut records = Vec::new();
        for i in 0..32 {
            records.push(record(&format!("c{i}"), if i < 23 { 17 } else { 16 }, &["t"]));
        }
        for i in 0..22 {
            records.push(record(&format!("u{i}"), if i < 11 { 5 } else { 4 }, &[]));
        }
        let counts = ManifestCounts::from_records(&records);
        assert_eq!(counts.commits, 54);
        assert_eq!(counts.changes, 634);
        assert_eq!((counts.changed_commits, counts.unchanged_commits), (32, 22));
        assert_eq!(format!("{:.1}", counts.mean_changes_changed.unwrap()), "16.7");
        assert_eq!(format!("{:.1}", counts.mean_changes_unchanged.unwrap()), "4.5");
    }
}
