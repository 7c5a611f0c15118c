//! Clean (dry) audio inputs and WAV output.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Anything that can hand out clean utterances by index.
pub trait CleanSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn load(&self, index: usize) -> Result<CleanSignal>;

    /// Human-readable identifier of utterance `index`, for sidecars.
    fn name(&self, index: usize) -> String {
        format!("#{index}")
    }
}

/// In-memory utterances, mostly for tests and small experiments.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub signals: Vec<CleanSignal>,
}

impl CleanSource for MemorySource {
    fn len(&self) -> usize {
        self.signals.len()
    }

    fn load(&self, index: usize) -> Result<CleanSignal> {
        self.signals
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no clean signal {index}")))
    }
}

/// Every `.wav` / `.flac` file below a directory, in sorted path order.
/// Files are decoded on demand; multichannel files are rejected.
#[derive(Debug, Clone)]
pub struct AudioDirectory {
    files: Vec<PathBuf>,
}

impl AudioDirectory {
    pub fn open(root: &Path) -> Result<Self> {
        let mut files = Vec::new();
        collect_audio(root, &mut files)?;
        files.sort();
        if files.is_empty() {
            return Err(Error::Config(format!(
                "no .wav or .flac files under {}",
                root.display()
            )));
        }
        Ok(Self { files })
    }

    pub fn from_files(files: Vec<PathBuf>) -> Self {
        Self { files }
    }
}

fn collect_audio(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_audio(&p, out)?;
        } else if matches!(
            p.extension()
                .and_then(|s| s.to_str())
                .map(str::to_ascii_lowercase)
                .as_deref(),
            Some("wav" | "flac")
        ) {
            out.push(p);
        }
    }
    Ok(())
}

impl CleanSource for AudioDirectory {
    fn len(&self) -> usize {
        self.files.len()
    }

    fn load(&self, index: usize) -> Result<CleanSignal> {
        let path = self
            .files
            .get(index)
            .ok_or_else(|| Error::Config(format!("no clean file {index}")))?;
        read_mono(path)
    }

    fn name(&self, index: usize) -> String {
        self.files
            .get(index)
            .map(|p| p.display().to_string())
            .unwrap_or_default()
    }
}

/// Reads a mono WAV or FLAC file as floats in `[-1, 1]`.
pub fn read_mono(path: &Path) -> Result<CleanSignal> {
    let is_flac = path
        .extension()
        .and_then(|s| s.to_str())
        .is_some_and(|s| s.eq_ignore_ascii_case("flac"));
    if is_flac {
        let mut r = claxon::FlacReader::open(path)
            .map_err(|e| Error::format(path, "flac stream", e.to_string()))?;
        let info = r.streaminfo();
        if info.channels != 1 {
            return Err(Error::format(
                path,
                "channel count",
                format!("expected mono, found {}", info.channels),
            ));
        }
        let scale = (1i64 << (info.bits_per_sample - 1)) as f64;
        let samples = r
            .samples()
            .map(|s| s.map(|v| v as f64 / scale))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, "flac stream", e.to_string()))?;
        return Ok(CleanSignal {
            samples,
            sample_rate: info.sample_rate,
        });
    }

    let mut r = hound::WavReader::open(path)
        .map_err(|e| Error::format(path, "wav stream", e.to_string()))?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::format(
            path,
            "channel count",
            format!("expected mono, found {}", spec.channels),
        ));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| Error::format(path, "wav stream", e.to_string()))?;
    Ok(CleanSignal {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes equally long channels as a 16-bit PCM WAV, quantized with
/// `round(x * 32767)`.
pub fn write_wav_i16(path: &Path, channels: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    if channels.is_empty() || channels.iter().any(|c| c.len() != channels[0].len()) {
        return Err(Error::Signal(
            "WAV channels must be non-empty and equally long".into(),
        ));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Signal(format!("{}: {other}", path.display())),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for t in 0..channels[0].len() {
        for c in channels {
            let q = (c[t] * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(q).map_err(wav_err)?;
        }
    }
    w.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_and_directory_listing() {
        let dir = tempfile::tempdir().unwrap();
        let x: Vec<f64> = (0..800).map(|n| (n as f64 * 0.05).sin() * 0.5).collect();
        write_wav_i16(&dir.path().join("b.wav"), std::slice::from_ref(&x), 16_000).unwrap();
        write_wav_i16(&dir.path().join("a.wav"), std::slice::from_ref(&x), 16_000).unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let src = AudioDirectory::open(dir.path()).unwrap();
        assert_eq!(src.len(), 2);
        assert!(src.name(0).ends_with("a.wav"));
        let sig = src.load(1).unwrap();
        assert_eq!(sig.sample_rate, 16_000);
        for (a, b) in sig.samples.iter().zip(&x) {
            assert!((a * 32768.0 / 32767.0 - b).abs() < 1.0 / 32767.0);
        }
    }

    #[test]
    fn stereo_rejected_and_empty_dir_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        write_wav_i16(&path, &[vec![0.0; 10], vec![0.0; 10]], 16_000).unwrap();
        assert!(read_mono(&path)
            .unwrap_err()
            .to_string()
            .contains("channel count"));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            AudioDirectory::open(empty.path()),
            Err(Error::Config(_))
        ));
    }
}
