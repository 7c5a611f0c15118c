//! Online augmentation: reverberant two-channel mixtures built from stored
//! records and clean signals, plus supervised targets for source
//! localization, reverberation time, source counting and ratio masks.

use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::acoustics::{compute_tdoa, predict_rt60};
use crate::clean::{CleanSignal, CleanSource};
use crate::convolve::convolve;
use crate::engine::NORMALIZED_PEAK;
use crate::error::{Error, Result};
use crate::packager::corpus::{CorpusEntry, CorpusIndex};
use crate::packager::flac::{decode_record, RirRecord};
use crate::rng::{SeedStream, UnitSource};
use crate::scene::{NUM_MICS, NUM_SOURCES};
use crate::stft::{Spectrogram, Stft, StftConfig};

/// `[mic 1, mic 2]` signals of one source.
pub type SourceImage = [Vec<f64>; NUM_MICS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Two active sources; target is their TDOA pair.
    Localize,
    /// Target is the predicted reverberation time.
    Rt60,
    /// Target is the number of active sources.
    Count,
    /// Target is the ratio mask of one source, given its TDOA.
    Mask,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Localize,
        Scenario::Rt60,
        Scenario::Count,
        Scenario::Mask,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Localize => "localize",
            Scenario::Rt60 => "rt60",
            Scenario::Count => "count",
            Scenario::Mask => "mask",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "localize" | "localization" | "tdoa" => Ok(Scenario::Localize),
            "rt60" | "reverb" | "reverberation" => Ok(Scenario::Rt60),
            "count" | "counting" => Ok(Scenario::Count),
            "mask" | "masking" | "irm" => Ok(Scenario::Mask),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything that determines one mixture.
#[derive(Debug, Clone)]
pub struct MixtureSpec<'a> {
    pub record: &'a RirRecord,
    /// Record source (0-based) each clean signal is played from.
    pub slots: Vec<usize>,
    pub clean: Vec<CleanSignal>,
    pub gains: Vec<f64>,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    /// `[y_1, y_2]`.
    pub channels: [Vec<f64>; NUM_MICS],
    /// Unscaled per-source images `h_{i,k} * x_i`, one per active source.
    pub images: Vec<SourceImage>,
}

fn check_slots(slots: &[usize], n_signals: usize) -> Result<()> {
    if slots.is_empty() || slots.len() > NUM_SOURCES {
        return Err(Error::Config(format!(
            "between 1 and {NUM_SOURCES} active sources required, got {}",
            slots.len()
        )));
    }
    if slots.len() != n_signals {
        return Err(Error::Config(format!(
            "{} source slots for {n_signals} clean signals",
            slots.len()
        )));
    }
    for (i, &s) in slots.iter().enumerate() {
        if s >= NUM_SOURCES {
            return Err(Error::Config(format!("source slot {s} out of range")));
        }
        if slots[..i].contains(&s) {
            return Err(Error::Config(format!("source slot {s} used twice")));
        }
    }
    Ok(())
}

/// Convolves each clean signal with the record's responses for its slot.
/// All images are zero-padded to the longest one.
pub fn source_images(
    record: &RirRecord,
    slots: &[usize],
    clean: &[CleanSignal],
) -> Result<Vec<SourceImage>> {
    check_slots(slots, clean.len())?;
    let fs = record.set.sample_rate();
    for (x, &slot) in clean.iter().zip(slots) {
        if x.sample_rate != fs {
            return Err(Error::Signal(format!(
                "clean signal for source {} is at {} Hz, responses are at {fs} Hz",
                slot + 1,
                x.sample_rate
            )));
        }
        if x.samples.is_empty() {
            return Err(Error::Signal(format!(
                "clean signal for source {} is empty",
                slot + 1
            )));
        }
    }
    let len = clean.iter().map(|x| x.samples.len()).max().unwrap_or(0) + record.set.len() - 1;
    Ok(clean
        .iter()
        .zip(slots)
        .map(|(x, &slot)| {
            let conv = |mic: usize| {
                let mut y = convolve(&x.samples, &record.set.get(slot, mic).samples);
                y.resize(len, 0.0);
                y
            };
            [conv(0), conv(1)]
        })
        .collect())
}

/// `y_k = v * sum_i g_i y_{i,k}`.
pub fn combine(images: &[SourceImage], gains: &[f64], volume: f64) -> Result<[Vec<f64>; NUM_MICS]> {
    if images.len() != gains.len() {
        return Err(Error::Config(format!(
            "{} gains for {} sources",
            gains.len(),
            images.len()
        )));
    }
    let len = images.first().map(|im| im[0].len()).unwrap_or(0);
    let mut out = [vec![0.0; len], vec![0.0; len]];
    for (image, &g) in images.iter().zip(gains) {
        for (o, y) in out.iter_mut().zip(image) {
            for (a, b) in o.iter_mut().zip(y) {
                *a += g * b;
            }
        }
    }
    for o in out.iter_mut() {
        for a in o.iter_mut() {
            *a *= volume;
        }
    }
    Ok(out)
}

pub fn mix(spec: &MixtureSpec) -> Result<Mixture> {
    if spec.gains.len() != spec.clean.len() {
        return Err(Error::Config("one gain per clean signal required".into()));
    }
    if spec.gains.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(Error::Config("gains must be positive and finite".into()));
    }
    if !(spec.volume >= 0.0 && spec.volume.is_finite()) {
        return Err(Error::Config("volume must be non-negative".into()));
    }
    let images = source_images(spec.record, &spec.slots, &spec.clean)?;
    let channels = combine(&images, &spec.gains, spec.volume)?;
    Ok(Mixture { channels, images })
}

fn image_energy(image: &SourceImage) -> f64 {
    image.iter().flatten().map(|v| v * v).sum()
}

/// Gains giving `sinr_db` between source `target` (gain 1) and all other
/// sources, which share one common gain.
pub fn gains_for_sinr(images: &[SourceImage], target: usize, sinr_db: f64) -> Result<Vec<f64>> {
    if images.len() < 2 {
        return Err(Error::Config("SINR needs at least two sources".into()));
    }
    if target >= images.len() {
        return Err(Error::Config(format!("no target source {target}")));
    }
    if !sinr_db.is_finite() {
        return Err(Error::Config("SINR must be finite".into()));
    }
    let target_energy = image_energy(&images[target]);
    let interference: f64 = images
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, im)| image_energy(im))
        .sum();
    if !(target_energy > 0.0) {
        return Err(Error::Signal("target source has no energy".into()));
    }
    if !(interference > 0.0) {
        return Err(Error::Signal(
            "interfering sources have no energy; SINR cannot be set".into(),
        ));
    }
    let g = (target_energy / (interference * 10f64.powf(sinr_db / 10.0))).sqrt();
    Ok((0..images.len())
        .map(|i| if i == target { 1.0 } else { g })
        .collect())
}

/// SINR in dB realized by `gains`.
pub fn achieved_sinr_db(images: &[SourceImage], gains: &[f64], target: usize) -> f64 {
    let t = gains[target].powi(2) * image_energy(&images[target]);
    let i: f64 = images
        .iter()
        .zip(gains)
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, (im, g))| g * g * image_energy(im))
        .sum();
    10.0 * (t / i).log10()
}

/// Ideal ratio masks, indexed (source, mic, frame, bin).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub sources: usize,
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl MaskSet {
    fn offset(&self, source: usize, mic: usize, frame: usize, bin: usize) -> usize {
        ((source * NUM_MICS + mic) * self.frames + frame) * self.bins + bin
    }

    pub fn get(&self, source: usize, mic: usize, frame: usize, bin: usize) -> f64 {
        self.data[self.offset(source, mic, frame, bin)]
    }

    /// Largest deviation of `sum_i M_{i,k}[t, f]` from 1 over all cells.
    pub fn max_simplex_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..NUM_MICS {
            for t in 0..self.frames {
                for f in 0..self.bins {
                    let s: f64 = (0..self.sources).map(|i| self.get(i, k, t, f)).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }
}

impl Serialize for MaskSet {
    /// Nested arrays `[source][mic][frame][bin]`.
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut outer = serializer.serialize_seq(Some(self.sources))?;
        for i in 0..self.sources {
            let per_mic: Vec<Vec<&[f64]>> = (0..NUM_MICS)
                .map(|k| {
                    (0..self.frames)
                        .map(|t| {
                            let o = self.offset(i, k, t, 0);
                            &self.data[o..o + self.bins]
                        })
                        .collect()
                })
                .collect();
            outer.serialize_element(&per_mic)?;
        }
        outer.end()
    }
}

/// `M_{i,k}[t,f] = |Y_{i,k}[t,f]|^2 / sum_j |Y_{j,k}[t,f]|^2`, with the
/// uniform value `1/I` where all sources are silent.
pub fn compute_irm(images: &[SourceImage], stft: &Stft) -> Result<MaskSet> {
    if images.is_empty() {
        return Err(Error::Config("masks need at least one source".into()));
    }
    let powers: Vec<[Vec<f64>; NUM_MICS]> = images
        .iter()
        .map(|im| -> Result<[Vec<f64>; NUM_MICS]> {
            Ok([stft.forward(&im[0])?.power(), stft.forward(&im[1])?.power()])
        })
        .collect::<Result<_>>()?;
    let frames = stft.frame_count(images[0][0].len());
    let bins = stft.bins();
    let cells = frames * bins;
    let n = images.len();
    let mut data = vec![0.0; n * NUM_MICS * cells];
    for k in 0..NUM_MICS {
        for c in 0..cells {
            let total: f64 = powers.iter().map(|p| p[k][c]).sum();
            for (i, p) in powers.iter().enumerate() {
                data[(i * NUM_MICS + k) * cells + c] = if total > 0.0 {
                    p[k][c] / total
                } else {
                    1.0 / n as f64
                };
            }
        }
    }
    Ok(MaskSet {
        sources: n,
        frames,
        bins,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioTarget {
    /// TDOA in samples of each of the two active sources.
    Tdoa {
        tdoas: Vec<f64>,
    },
    Rt60 {
        seconds: f64,
    },
    Count {
        count: usize,
    },
    /// Masks of every active source; `source` (position in the active list)
    /// is the one to extract and `tau` its TDOA.
    Mask {
        source: usize,
        tau: f64,
        masks: MaskSet,
    },
}

/// One augmented training example.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example {
    pub scenario: Scenario,
    pub record: String,
    pub record_index: u64,
    /// Record sources (0-based) that are active, target first.
    pub source_indices: Vec<usize>,
    pub clean: Vec<String>,
    pub gains: Vec<f64>,
    /// Effective volume, including any anti-clipping rescale.
    pub volume: f64,
    pub sinr_db: Option<f64>,
    /// True when the drawn volume would have clipped and was reduced.
    pub rescaled: bool,
    pub target: ScenarioTarget,
    #[serde(skip)]
    pub mixture: [Vec<f64>; NUM_MICS],
    #[serde(skip)]
    pub inputs: [Spectrogram; NUM_MICS],
}

impl Example {
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("example serializes")
    }
}

/// Inputs that fully determine an example.
#[derive(Debug, Clone)]
pub struct ExampleRequest<'a> {
    pub record: &'a RirRecord,
    pub record_name: String,
    pub slots: Vec<usize>,
    pub clean: Vec<CleanSignal>,
    pub clean_names: Vec<String>,
    /// `None` leaves every gain at 1.
    pub sinr_db: Option<f64>,
    pub volume: f64,
}

/// Mixes a request and computes the scenario target. The mixture is scaled
/// down to a 0.99 peak if it would otherwise exceed full scale.
pub fn assemble(scenario: Scenario, req: ExampleRequest, stft: &Stft) -> Result<Example> {
    if scenario == Scenario::Localize && req.slots.len() != 2 {
        return Err(Error::Config(format!(
            "localization uses exactly two sources, got {}",
            req.slots.len()
        )));
    }
    let images = source_images(req.record, &req.slots, &req.clean)?;
    let gains = match req.sinr_db {
        Some(db) if images.len() >= 2 => gains_for_sinr(&images, 0, db)?,
        _ => vec![1.0; images.len()],
    };
    let mut volume = req.volume;
    let mut mixture = combine(&images, &gains, volume)?;
    let peak = mixture.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let rescaled = peak > 1.0;
    if rescaled {
        let factor = NORMALIZED_PEAK / peak;
        volume *= factor;
        for v in mixture.iter_mut().flatten() {
            *v *= factor;
        }
    }
    let inputs = [stft.forward(&mixture[0])?, stft.forward(&mixture[1])?];
    let scene = &req.record.scene;
    let fs = req.record.set.sample_rate() as f64;
    let target = match scenario {
        Scenario::Localize => ScenarioTarget::Tdoa {
            tdoas: req
                .slots
                .iter()
                .map(|&s| compute_tdoa(scene, s, fs))
                .collect::<Result<_>>()?,
        },
        Scenario::Rt60 => ScenarioTarget::Rt60 {
            seconds: predict_rt60(scene)?,
        },
        Scenario::Count => ScenarioTarget::Count {
            count: req.slots.len(),
        },
        Scenario::Mask => {
            let scaled: Vec<SourceImage> = images
                .iter()
                .zip(&gains)
                .map(|(im, g)| [scale(&im[0], g * volume), scale(&im[1], g * volume)])
                .collect();
            ScenarioTarget::Mask {
                source: 0,
                tau: compute_tdoa(scene, req.slots[0], fs)?,
                masks: compute_irm(&scaled, stft)?,
            }
        }
    };
    Ok(Example {
        scenario,
        record: req.record_name,
        record_index: req.record.record_index,
        source_indices: req.slots,
        clean: req.clean_names,
        gains,
        volume,
        sinr_db: req.sinr_db.filter(|_| images.len() >= 2),
        rescaled,
        target,
        mixture,
        inputs,
    })
}

fn scale(x: &[f64], g: f64) -> Vec<f64> {
    x.iter().map(|v| v * g).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOptions {
    pub stft: StftConfig,
    pub volume_range: (f64, f64),
    pub sinr_range_db: (f64, f64),
    /// Crop or zero-pad every clean signal to this many samples.
    pub segment_len: Option<usize>,
    /// Overrides the drawn number of active sources.
    pub forced_count: Option<usize>,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            volume_range: (0.25, 1.0),
            sinr_range_db: (-5.0, 5.0),
            segment_len: None,
            forced_count: None,
        }
    }
}

/// Draws examples from a set of folds and a clean-audio source.
pub struct ExampleBuilder<'a> {
    entries: Vec<&'a CorpusEntry>,
    clean: &'a dyn CleanSource,
    options: AugmentOptions,
    stft: Stft,
}

impl<'a> ExampleBuilder<'a> {
    pub fn new(
        corpus: &'a CorpusIndex,
        folds: &[u32],
        clean: &'a dyn CleanSource,
        options: AugmentOptions,
    ) -> Result<Self> {
        let entries = corpus.in_folds(folds);
        if entries.is_empty() {
            return Err(Error::Config(format!(
                "no corpus records in folds {folds:?}"
            )));
        }
        if clean.is_empty() {
            return Err(Error::Config("clean-audio source is empty".into()));
        }
        if let Some(n) = options.forced_count {
            if !(1..=NUM_SOURCES).contains(&n) {
                return Err(Error::Config(format!(
                    "forced source count {n} out of range"
                )));
            }
        }
        let stft = Stft::new(options.stft)?;
        Ok(Self {
            entries,
            clean,
            options,
            stft,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Example `example_index` of the stream `seed`. Depends only on its
    /// arguments and the (immutable) corpus and clean source.
    pub fn build(&self, scenario: Scenario, seed: u64, example_index: u64) -> Result<Example> {
        let mut rng = SeedStream::new(seed, example_index).rng();
        let entry = self.entries[rng.integer(0, self.entries.len() - 1)];
        let record = decode_record(&entry.path)?;

        let count = match (scenario, self.options.forced_count) {
            (Scenario::Localize, Some(n)) if n != 2 => {
                return Err(Error::Config(
                    "localization uses exactly two sources".into(),
                ))
            }
            (Scenario::Localize, _) => 2,
            (_, Some(n)) => n,
            _ => rng.integer(1, NUM_SOURCES),
        };

        // partial Fisher-Yates over the four source positions
        let mut pool: Vec<usize> = (0..NUM_SOURCES).collect();
        for i in 0..count {
            let j = rng.integer(i, NUM_SOURCES - 1);
            pool.swap(i, j);
        }
        let slots = pool[..count].to_vec();

        let mut clean = Vec::with_capacity(count);
        let mut clean_names = Vec::with_capacity(count);
        for _ in 0..count {
            let idx = rng.integer(0, self.clean.len() - 1);
            let mut sig = self.clean.load(idx)?;
            if let Some(len) = self.options.segment_len {
                if sig.samples.len() > len {
                    let start = rng.integer(0, sig.samples.len() - len);
                    sig.samples = sig.samples[start..start + len].to_vec();
                } else {
                    sig.samples.resize(len, 0.0);
                }
            }
            clean.push(sig);
            clean_names.push(self.clean.name(idx));
        }

        let (lo, hi) = self.options.sinr_range_db;
        let sinr = rng.uniform(lo, hi);
        let (vlo, vhi) = self.options.volume_range;
        let volume = rng.uniform(vlo, vhi);

        let silent = clean
            .iter()
            .map(|c| c.samples.iter().all(|&v| v == 0.0))
            .collect::<Vec<_>>();
        // SINR is undefined when the target or every interferer is silent.
        let sinr_db = if count >= 2 && !silent[0] && silent[1..].iter().any(|s| !s) {
            Some(sinr)
        } else {
            None
        };

        assemble(
            scenario,
            ExampleRequest {
                record: &record,
                record_name: entry.path.display().to_string(),
                slots,
                clean,
                clean_names,
                sinr_db,
                volume,
            },
            &self.stft,
        )
    }
}
