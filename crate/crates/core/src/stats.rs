//! Corpus statistics: TDOA and RT60 distributions.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::acoustics::{compute_tdoa, predict_rt60};
use crate::error::{Error, Result};
use crate::packager::corpus::scan_records;
use crate::packager::flac::read_metadata;
use crate::scene::{SceneSpec, NUM_SOURCES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Per-source TDOA in samples (four values per record).
    Tdoa,
    /// Predicted reverberation time in seconds (one value per record).
    Rt60,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Tdoa => "tdoa",
            Metric::Rt60 => "rt60",
        }
    }

    /// Default histogram bin width in the metric's unit.
    pub fn default_bin_width(&self) -> f64 {
        match self {
            Metric::Tdoa => 0.5,
            Metric::Rt60 => 0.02,
        }
    }

    pub fn values(&self, scene: &SceneSpec, sample_rate: f64) -> Result<Vec<f64>> {
        match self {
            Metric::Tdoa => (0..NUM_SOURCES)
                .map(|i| compute_tdoa(scene, i, sample_rate))
                .collect(),
            Metric::Rt60 => Ok(vec![predict_rt60(scene)?]),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tdoa" => Ok(Metric::Tdoa),
            "rt60" => Ok(Metric::Rt60),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sample moments. Skewness and excess kurtosis use population (biased)
/// central moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub min: f64,
    pub max: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Some(Self {
            count: values.len(),
            mean,
            variance: m2,
            skewness,
            excess_kurtosis,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Fixed-width histogram; bin `k` covers `[left + k w, left + (k+1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub left: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins aligned to multiples of `width` covering all values.
    pub fn build(values: &[f64], width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Config("bin width must be positive".into()));
        }
        let m = Moments::of(values).ok_or_else(|| Error::Config("no values".into()))?;
        let left = (m.min / width).floor() * width;
        let bins = (((m.max - left) / width).floor() as usize) + 1;
        let mut counts = vec![0u64; bins];
        for v in values {
            let k = (((v - left) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Self {
            left,
            width,
            counts,
        })
    }

    pub fn edges(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(|k| self.left + k as f64 * self.width)
    }

    /// Two-column CSV (`<metric>,count`), one row per bin keyed by its left
    /// edge.
    pub fn to_csv(&self, metric: Metric) -> String {
        let mut out = format!("{},count\n", metric.name());
        for (edge, count) in self.edges().zip(&self.counts) {
            out.push_str(&format!("{:.4},{count}\n", edge));
        }
        out
    }
}

/// Metric values for every record under `root`, read from metadata only.
pub fn corpus_metric_values(root: &Path, metric: Metric) -> Result<Vec<f64>> {
    let entries = scan_records(root)?;
    if entries.is_empty() {
        return Err(Error::Config(format!(
            "no records found under {}",
            root.display()
        )));
    }
    let mut values = Vec::new();
    for e in entries {
        let (meta, _, _) = read_metadata(&e.path)?;
        values.extend(metric.values(&meta.to_scene(), 16_000.0)?);
    }
    Ok(values)
}
