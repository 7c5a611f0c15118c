//! Corpus files: one FLAC stream per record (8 channels, 16-bit) with the
//! scene metadata in a Vorbis comment named `metadata`.

use std::fs;
use std::path::Path;

use flacenc::component::{BitRepr, MetadataBlockData};
use flacenc::error::Verify;

use super::metadata::SceneMetadata;
use crate::engine::{Rir, RirSet, NORMALIZED_PEAK, NUM_CHANNELS};
use crate::error::{Error, Result};
use crate::scene::SceneSpec;

pub const BITS_PER_SAMPLE: usize = 16;
pub const FULL_SCALE: f64 = 32767.0;
pub const METADATA_TAG: &str = "metadata";
pub const INDEX_TAG: &str = "bird_index";
pub const FOLD_TAG: &str = "bird_fold";
const VENDOR: &str = "bird";
const VORBIS_COMMENT: u8 = 4;

/// Shape every corpus file must have.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileFormat {
    pub channels: u32,
    pub sample_rate: u32,
    pub bits_per_sample: u32,
    pub frames: u64,
}

impl Default for FileFormat {
    fn default() -> Self {
        Self {
            channels: NUM_CHANNELS as u32,
            sample_rate: 16_000,
            bits_per_sample: BITS_PER_SAMPLE as u32,
            frames: 16_000,
        }
    }
}

/// Normalized responses plus the scene they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RirRecord {
    pub set: RirSet,
    pub scene: SceneSpec,
    pub record_index: u64,
    pub fold: u32,
}

impl RirRecord {
    /// 16-bit sample values in channel order.
    pub fn quantized(&self) -> Vec<Vec<i32>> {
        self.set
            .channels()
            .iter()
            .map(|c| c.samples.iter().map(|&x| quantize(x)).collect())
            .collect()
    }

    pub fn metadata(&self) -> SceneMetadata {
        SceneMetadata::from(&self.scene)
    }
}

pub fn quantize(x: f64) -> i32 {
    (x * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i32
}

pub fn dequantize(q: i32) -> f64 {
    q as f64 / FULL_SCALE
}

fn vorbis_comment_block(comments: &[(&str, String)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(VENDOR.len() as u32).to_le_bytes());
    out.extend_from_slice(VENDOR.as_bytes());
    out.extend_from_slice(&(comments.len() as u32).to_le_bytes());
    for (key, value) in comments {
        let entry = format!("{key}={value}");
        out.extend_from_slice(&(entry.len() as u32).to_le_bytes());
        out.extend_from_slice(entry.as_bytes());
    }
    out
}

/// Encodes interleaved-by-channel 16-bit samples plus Vorbis comments into a
/// complete FLAC stream.
pub fn encode_flac(
    channels: &[Vec<i32>],
    sample_rate: u32,
    comments: &[(&str, String)],
) -> Result<Vec<u8>> {
    let n_ch = channels.len();
    if n_ch == 0 || n_ch > 8 {
        return Err(Error::Signal(format!("cannot encode {n_ch} channels")));
    }
    let frames = channels[0].len();
    if channels.iter().any(|c| c.len() != frames) {
        return Err(Error::Signal("channels differ in length".into()));
    }
    let mut interleaved = Vec::with_capacity(frames * n_ch);
    for t in 0..frames {
        interleaved.extend(channels.iter().map(|c| c[t]));
    }
    let config = flacenc::config::Encoder::default()
        .into_verified()
        .map_err(|(_, e)| Error::Signal(format!("encoder config: {e:?}")))?;
    let source = flacenc::source::MemSource::from_samples(
        &interleaved,
        n_ch,
        BITS_PER_SAMPLE,
        sample_rate as usize,
    );
    let mut stream = flacenc::encode_with_fixed_block_size(&config, source, config.block_size)
        .map_err(|e| Error::Signal(format!("flac encoding failed: {e:?}")))?;
    let block = MetadataBlockData::new_unknown(VORBIS_COMMENT, &vorbis_comment_block(comments))
        .map_err(|e| Error::Signal(format!("metadata block: {e:?}")))?;
    stream.add_metadata_block(block);
    let mut sink = flacenc::bitsink::ByteSink::new();
    stream
        .write(&mut sink)
        .map_err(|e| Error::Signal(format!("flac serialization failed: {e:?}")))?;
    Ok(sink.as_slice().to_vec())
}

/// Writes a record. The file appears atomically (written to a temporary
/// sibling, then renamed).
pub fn encode_record(rec: &RirRecord, path: &Path) -> Result<()> {
    if !rec.set.is_normalized() {
        return Err(Error::Signal(
            "refusing to encode an unnormalized response set".into(),
        ));
    }
    let peak = rec.set.peak();
    if peak > NORMALIZED_PEAK + 1e-9 {
        return Err(Error::Signal(format!(
            "response set peaks at {peak}, above the normalized bound"
        )));
    }
    let bytes = encode_flac(
        &rec.quantized(),
        rec.set.sample_rate(),
        &[
            (METADATA_TAG, rec.metadata().to_json()),
            (INDEX_TAG, rec.record_index.to_string()),
            (FOLD_TAG, rec.fold.to_string()),
        ],
    )?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let tmp = path.with_extension("flac.partial");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn open_reader(path: &Path) -> Result<claxon::FlacReader<fs::File>> {
    claxon::FlacReader::open(path).map_err(|e| match e {
        claxon::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, "flac stream", other.to_string()),
    })
}

fn check_format(
    path: &Path,
    info: &claxon::metadata::StreamInfo,
    expect: &FileFormat,
) -> Result<()> {
    if info.channels != expect.channels {
        return Err(Error::format(
            path,
            "channel count",
            format!("expected {}, found {}", expect.channels, info.channels),
        ));
    }
    if info.sample_rate != expect.sample_rate {
        return Err(Error::format(
            path,
            "sample rate",
            format!(
                "expected {}, found {}",
                expect.sample_rate, info.sample_rate
            ),
        ));
    }
    if info.bits_per_sample != expect.bits_per_sample {
        return Err(Error::format(
            path,
            "bit depth",
            format!(
                "expected {}, found {}",
                expect.bits_per_sample, info.bits_per_sample
            ),
        ));
    }
    if let Some(n) = info.samples {
        if n != expect.frames {
            return Err(Error::format(
                path,
                "sample count",
                format!("expected {}, found {n}", expect.frames),
            ));
        }
    }
    Ok(())
}

fn read_tags(
    path: &Path,
    reader: &claxon::FlacReader<fs::File>,
) -> Result<(SceneMetadata, u64, u32)> {
    let json = reader
        .get_tag(METADATA_TAG)
        .next()
        .ok_or_else(|| Error::format(path, "metadata", "no `metadata` tag"))?;
    let meta = SceneMetadata::from_json(json)
        .map_err(|e| Error::format(path, "metadata", e.to_string()))?;
    let parse_num = |tag: &str| -> Result<Option<u64>> {
        match reader.get_tag(tag).next() {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse::<u64>()
                .map(Some)
                .map_err(|e| Error::format(path, "metadata", format!("{tag}: {e}"))),
        }
    };
    let index = parse_num(INDEX_TAG)?.unwrap_or(0);
    let fold = parse_num(FOLD_TAG)?.unwrap_or(0) as u32;
    Ok((meta, index, fold))
}

/// Reads only the header and tags of a corpus file.
pub fn read_metadata(path: &Path) -> Result<(SceneMetadata, u64, u32)> {
    let reader = open_reader(path)?;
    check_format(path, &reader.streaminfo(), &FileFormat::default())?;
    read_tags(path, &reader)
}

/// Reads a corpus file with the default format expectations.
pub fn decode_record(path: &Path) -> Result<RirRecord> {
    decode_record_with(path, &FileFormat::default())
}

/// Reads a corpus file. Missing index and fold tags decode as 0.
pub fn decode_record_with(path: &Path, expect: &FileFormat) -> Result<RirRecord> {
    let mut reader = open_reader(path)?;
    let info = reader.streaminfo();
    check_format(path, &info, expect)?;
    let (meta, record_index, fold) = read_tags(path, &reader)?;

    let n_ch = info.channels as usize;
    let mut channels: Vec<Vec<i32>> = vec![Vec::with_capacity(expect.frames as usize); n_ch];
    for (i, s) in reader.samples().enumerate() {
        let s = s.map_err(|e| Error::format(path, "flac stream", e.to_string()))?;
        channels[i % n_ch].push(s);
    }
    let frames = channels[0].len() as u64;
    if frames != expect.frames || channels.iter().any(|c| c.len() != channels[0].len()) {
        return Err(Error::format(
            path,
            "sample count",
            format!("expected {}, decoded {frames}", expect.frames),
        ));
    }
    let rirs = channels
        .into_iter()
        .map(|c| Rir {
            samples: c.into_iter().map(dequantize).collect(),
            sample_rate: info.sample_rate,
        })
        .collect();
    Ok(RirRecord {
        set: RirSet::new(rirs, true)?,
        scene: meta.to_scene(),
        record_index,
        fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::normalize_set;

    fn toy_record() -> RirRecord {
        let channels = (0..NUM_CHANNELS)
            .map(|ch| Rir {
                samples: (0..16_000)
                    .map(|n| {
                        let t = n as f64 / 16_000.0;
                        (-(t * 9.0)).exp() * ((n * (ch + 3)) as f64 * 0.37).sin()
                    })
                    .collect(),
                sample_rate: 16_000,
            })
            .collect();
        let set = normalize_set(&RirSet::new(channels, false).unwrap()).unwrap();
        let scene =
            crate::scene::sample_scene(&Default::default(), crate::rng::SeedStream::new(1, 2))
                .unwrap();
        RirRecord {
            set,
            scene,
            record_index: 2,
            fold: 0,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.flac");
        let rec = toy_record();
        encode_record(&rec, &path).unwrap();
        let back = decode_record(&path).unwrap();
        assert_eq!(back.quantized(), rec.quantized());
        assert_eq!(back.metadata(), rec.metadata());
        assert_eq!(back.record_index, 2);
        let peak = back
            .quantized()
            .iter()
            .flatten()
            .map(|v| v.abs())
            .max()
            .unwrap();
        assert_eq!(peak, 32439);
    }

    #[test]
    fn unnormalized_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = toy_record();
        rec.set = RirSet::new(rec.set.channels().to_vec(), false).unwrap();
        assert!(encode_record(&rec, &dir.path().join("x.flac")).is_err());
    }

    #[test]
    fn wrong_channel_count_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seven.flac");
        let chans = vec![vec![0i32; 16_000]; 7];
        let bytes = encode_flac(
            &chans,
            16_000,
            &[(METADATA_TAG, toy_record().metadata().to_json())],
        )
        .unwrap();
        fs::write(&path, bytes).unwrap();
        let err = decode_record(&path).unwrap_err();
        assert!(err.to_string().contains("channel count"), "{err}");
    }

    #[test]
    fn missing_metadata_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.flac");
        let chans = vec![vec![1i32; 16_000]; 8];
        fs::write(&path, encode_flac(&chans, 16_000, &[]).unwrap()).unwrap();
        let err = decode_record(&path).unwrap_err();
        assert!(err.to_string().contains("metadata"), "{err}");
    }

    #[test]
    fn wrong_rate_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rate.flac");
        let chans = vec![vec![1i32; 16_000]; 8];
        fs::write(&path, encode_flac(&chans, 8_000, &[]).unwrap()).unwrap();
        let err = decode_record(&path).unwrap_err();
        assert!(err.to_string().contains("sample rate"), "{err}");
    }

    #[test]
    fn truncated_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.flac");
        let rec = toy_record();
        encode_record(&rec, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(decode_record(&path), Err(Error::Format { .. })));
    }
}
