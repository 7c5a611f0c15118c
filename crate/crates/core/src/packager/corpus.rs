//! Corpus layout on disk, batch generation and the CSV manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::flac::{decode_record, encode_record, quantize, read_metadata, RirRecord};
use super::metadata::SceneMetadata;
use crate::acoustics::predict_rt60;
use crate::engine::{normalize_set, EngineConfig, ImageEngine, NORMALIZED_PEAK};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::scene::{sample_scene, ParamRanges, SceneSpec};

pub const MANIFEST_NAME: &str = "manifest.csv";

/// Contiguous split of `count` record indices into equally sized folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldLayout {
    pub folds: u32,
    pub records_per_fold: u64,
}

impl FoldLayout {
    pub fn new(count: u64, folds: u32) -> Result<Self> {
        if folds == 0 || count == 0 {
            return Err(Error::Config("count and folds must be positive".into()));
        }
        if !count.is_multiple_of(folds as u64) {
            return Err(Error::Config(format!(
                "count not divisible by folds ({count} records, {folds} folds)"
            )));
        }
        Ok(Self {
            folds,
            records_per_fold: count / folds as u64,
        })
    }

    pub fn count(&self) -> u64 {
        self.records_per_fold * self.folds as u64
    }

    pub fn fold_of(&self, index: u64) -> u32 {
        (index / self.records_per_fold) as u32
    }

    pub fn fold_dir(fold: u32) -> String {
        format!("fold_{fold:02}")
    }

    pub fn file_name(index: u64) -> String {
        format!("rir_{index:06}.flac")
    }

    /// Path of record `index` relative to the corpus root.
    pub fn relative_path(&self, index: u64) -> PathBuf {
        PathBuf::from(Self::fold_dir(self.fold_of(index))).join(Self::file_name(index))
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub index: u64,
    pub fold: u32,
    pub path: String,
    pub alpha: f64,
    pub c: f64,
    pub rt60_predicted: f64,
    /// First 16 hex digits of the SHA-256 of the metadata JSON.
    pub digest: String,
}

pub fn scene_digest(meta: &SceneMetadata) -> String {
    let hash = Sha256::digest(meta.to_json().as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path, "manifest", e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub count: u64,
    pub folds: u32,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub ranges: ParamRanges,
    pub engine: EngineConfig,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub manifest: Vec<ManifestRow>,
    pub generated: u64,
    pub skipped: u64,
    pub elapsed: Duration,
}

impl GenerateSummary {
    /// Newly simulated records per second of wall time.
    pub fn throughput(&self) -> f64 {
        self.generated as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

/// Samples, simulates and normalizes record `index`.
pub fn build_record(
    engine: &ImageEngine,
    ranges: &ParamRanges,
    layout: &FoldLayout,
    master_seed: u64,
    index: u64,
) -> Result<RirRecord> {
    let scene = sample_scene(ranges, SeedStream::new(master_seed, index))?;
    let set = normalize_set(&engine.simulate_set(&scene)?)?;
    Ok(RirRecord {
        set,
        scene,
        record_index: index,
        fold: layout.fold_of(index),
    })
}

fn manifest_row(layout: &FoldLayout, index: u64, scene: &SceneSpec) -> Result<ManifestRow> {
    let meta = SceneMetadata::from(scene);
    Ok(ManifestRow {
        index,
        fold: layout.fold_of(index),
        path: layout
            .relative_path(index)
            .to_string_lossy()
            .replace('\\', "/"),
        alpha: scene.alpha,
        c: scene.c,
        rt60_predicted: predict_rt60(scene)?,
        digest: scene_digest(&meta),
    })
}

/// A file left by an earlier run counts as done when its metadata matches
/// the scene this index samples to and its audio decodes at full scale.
fn existing_file_is_valid(path: &Path, scene: &SceneSpec) -> bool {
    match read_metadata(path) {
        Ok((meta, _, _)) if meta == SceneMetadata::from(scene) => {}
        _ => return false,
    }
    match decode_record(path) {
        Ok(rec) => {
            let peak = rec.quantized().iter().flatten().map(|v| v.abs()).max();
            peak == Some(quantize(NORMALIZED_PEAK))
        }
        Err(_) => false,
    }
}

/// Generates (or completes) a corpus under `opts.out_dir` and writes its
/// manifest.
pub fn generate_corpus(opts: &GenerateOptions) -> Result<GenerateSummary> {
    let layout = FoldLayout::new(opts.count, opts.folds)?;
    opts.ranges.validate()?;
    let engine = ImageEngine::new(opts.engine)?;
    fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    for fold in 0..layout.folds {
        let dir = opts.out_dir.join(FoldLayout::fold_dir(fold));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let start = Instant::now();
    let (tx, rx) = mpsc::channel::<(ManifestRow, bool)>();
    let sink = std::thread::spawn(move || {
        let mut rows = BTreeMap::new();
        let mut skipped = 0u64;
        for (row, was_skipped) in rx {
            skipped += was_skipped as u64;
            rows.insert(row.index, row);
        }
        (rows, skipped)
    });

    let result = pool.install(|| {
        (0..layout.count())
            .into_par_iter()
            .try_for_each_with(tx, |tx, index| {
                let path = opts.out_dir.join(layout.relative_path(index));
                let scene = sample_scene(&opts.ranges, SeedStream::new(opts.master_seed, index))?;
                let skipped = path.exists() && existing_file_is_valid(&path, &scene);
                if !skipped {
                    let rec =
                        build_record(&engine, &opts.ranges, &layout, opts.master_seed, index)?;
                    encode_record(&rec, &path)?;
                }
                let row = manifest_row(&layout, index, &scene)?;
                tx.send((row, skipped))
                    .map_err(|_| Error::Config("manifest writer stopped".into()))
            })
    });
    let (rows, skipped) = sink.join().expect("manifest sink panicked");
    result?;

    let manifest: Vec<ManifestRow> = rows.into_values().collect();
    write_manifest(&opts.out_dir.join(MANIFEST_NAME), &manifest)?;
    Ok(GenerateSummary {
        generated: layout.count() - skipped,
        skipped,
        manifest,
        elapsed: start.elapsed(),
    })
}

/// Location of one corpus record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub index: u64,
    pub fold: u32,
    pub path: PathBuf,
}

/// Read-only list of the records in a corpus directory.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    pub root: PathBuf,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusIndex {
    /// Uses the manifest when present, otherwise scans `fold_*` directories.
    pub fn open(root: &Path) -> Result<Self> {
        let manifest = root.join(MANIFEST_NAME);
        let entries = if manifest.is_file() {
            read_manifest(&manifest)?
                .into_iter()
                .map(|r| CorpusEntry {
                    index: r.index,
                    fold: r.fold,
                    path: root.join(&r.path),
                })
                .collect()
        } else {
            scan_records(root)?
        };
        Ok(Self {
            root: root.to_path_buf(),
            entries,
        })
    }

    pub fn in_folds(&self, folds: &[u32]) -> Vec<&CorpusEntry> {
        self.entries
            .iter()
            .filter(|e| folds.is_empty() || folds.contains(&e.fold))
            .collect()
    }
}

fn parse_numbered(name: &str, prefix: &str, suffix: &str) -> Option<u64> {
    name.strip_prefix(prefix)?
        .strip_suffix(suffix)?
        .parse()
        .ok()
}

/// Finds `fold_NN/rir_NNNNNN.flac` files, sorted by index.
pub fn scan_records(root: &Path) -> Result<Vec<CorpusEntry>> {
    let mut entries = Vec::new();
    let dirs = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for dir in dirs {
        let dir = dir.map_err(|e| Error::io(root, e))?;
        let name = dir.file_name().to_string_lossy().into_owned();
        let Some(fold) = parse_numbered(&name, "fold_", "") else {
            continue;
        };
        if !dir.path().is_dir() {
            continue;
        }
        let files = fs::read_dir(dir.path()).map_err(|e| Error::io(dir.path(), e))?;
        for f in files {
            let f = f.map_err(|e| Error::io(dir.path(), e))?;
            let fname = f.file_name().to_string_lossy().into_owned();
            if let Some(index) = parse_numbered(&fname, "rir_", ".flac") {
                entries.push(CorpusEntry {
                    index,
                    fold: fold as u32,
                    path: f.path(),
                });
            }
        }
    }
    entries.sort_by_key(|e| (e.index, e.fold));
    Ok(entries)
}

/// SHA-256 over every file below `root` (relative path and contents, in
/// sorted path order).
pub fn corpus_digest(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for f in &files {
        let rel = f
            .strip_prefix(root)
            .unwrap_or(f)
            .to_string_lossy()
            .replace('\\', "/");
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_arithmetic() {
        let l = FoldLayout::new(20, 10).unwrap();
        assert_eq!(l.records_per_fold, 2);
        assert_eq!(l.fold_of(0), 0);
        assert_eq!(l.fold_of(3), 1);
        assert_eq!(l.fold_of(19), 9);
        assert_eq!(l.relative_path(5), PathBuf::from("fold_02/rir_000005.flac"));
        let err = FoldLayout::new(15, 10).unwrap_err();
        assert!(err.to_string().contains("count not divisible by folds"));
        let paper = FoldLayout::new(100_000, 10).unwrap();
        assert_eq!(paper.records_per_fold, 10_000);
    }

    #[test]
    fn fold_partition_is_exact() {
        let l = FoldLayout::new(1000, 10).unwrap();
        let mut sizes = [0u64; 10];
        for i in 0..1000 {
            sizes[l.fold_of(i) as usize] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 100));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_NAME);
        let rows = vec![ManifestRow {
            index: 3,
            fold: 1,
            path: "fold_01/rir_000003.flac".into(),
            alpha: 0.3141592653589793,
            c: 343.25,
            rt60_predicted: 0.5,
            digest: "0123456789abcdef".into(),
        }];
        write_manifest(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("index,fold,path,alpha,c,rt60_predicted,digest\n"));
        assert_eq!(read_manifest(&path).unwrap(), rows);
    }
}
