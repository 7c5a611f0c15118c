//! Whole-corpus integrity check.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::corpus::{read_manifest, scan_records, FoldLayout, MANIFEST_NAME};
use super::flac::{decode_record, quantize};
use crate::engine::NORMALIZED_PEAK;
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub path: PathBuf,
    /// Name of the failed check, e.g. "channel count" or "fold size".
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub files_checked: usize,
    pub fold_sizes: BTreeMap<u32, usize>,
    pub failures: Vec<Failure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.files_checked > 0
    }

    fn fail(&mut self, path: &Path, check: &str, detail: impl Into<String>) {
        self.failures.push(Failure {
            path: path.to_path_buf(),
            check: check.to_string(),
            detail: detail.into(),
        });
    }
}

/// Checks every record under `root`: decodability, channel and sample
/// counts, the 16-bit normalization peak, metadata, file placement, equal
/// fold sizes and manifest consistency.
pub fn verify_corpus(root: &Path) -> VerifyReport {
    let mut report = VerifyReport::default();
    let entries = match scan_records(root) {
        Ok(e) => e,
        Err(e) => {
            report.fail(root, "corpus directory", e.to_string());
            return report;
        }
    };
    if entries.is_empty() {
        report.fail(root, "records", "no records found");
        return report;
    }
    let expected_peak = quantize(NORMALIZED_PEAK);

    for entry in &entries {
        report.files_checked += 1;
        *report.fold_sizes.entry(entry.fold).or_default() += 1;
        match decode_record(&entry.path) {
            Ok(rec) => {
                let peak = rec
                    .quantized()
                    .iter()
                    .flatten()
                    .map(|v| v.abs())
                    .max()
                    .unwrap_or(0);
                if peak != expected_peak {
                    report.fail(
                        &entry.path,
                        "normalization",
                        format!("peak {peak}, expected {expected_peak}"),
                    );
                }
                if let Err(e) = rec.scene.validate() {
                    report.fail(&entry.path, "metadata", e.to_string());
                }
                if rec.record_index != entry.index || rec.fold != entry.fold {
                    report.fail(
                        &entry.path,
                        "placement",
                        format!(
                            "tags say index {} fold {}, path says index {} fold {}",
                            rec.record_index, rec.fold, entry.index, entry.fold
                        ),
                    );
                }
            }
            Err(Error::Format {
                constraint, detail, ..
            }) => report.fail(&entry.path, constraint, detail),
            Err(e) => report.fail(&entry.path, "read", e.to_string()),
        }
    }

    let sizes: Vec<usize> = report.fold_sizes.values().copied().collect();
    if sizes.iter().any(|&s| s != sizes[0]) {
        report.fail(
            root,
            "fold size",
            format!("unequal fold sizes {:?}", report.fold_sizes),
        );
    } else {
        let layout = FoldLayout {
            folds: sizes.len() as u32,
            records_per_fold: sizes[0] as u64,
        };
        for entry in &entries {
            if entry.index >= layout.count() || layout.fold_of(entry.index) != entry.fold {
                report.fail(
                    &entry.path,
                    "fold size",
                    format!(
                        "index {} does not belong to fold {}",
                        entry.index, entry.fold
                    ),
                );
            }
        }
    }

    let manifest = root.join(MANIFEST_NAME);
    if manifest.is_file() {
        match read_manifest(&manifest) {
            Ok(rows) => {
                if rows.len() != entries.len() {
                    report.fail(
                        &manifest,
                        "manifest",
                        format!("{} rows for {} files", rows.len(), entries.len()),
                    );
                }
                for row in rows {
                    if !root.join(&row.path).is_file() {
                        report.fail(&manifest, "manifest", format!("missing {}", row.path));
                    }
                }
            }
            Err(e) => report.fail(&manifest, "manifest", e.to_string()),
        }
    }
    report
}
