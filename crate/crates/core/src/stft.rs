//! Short-time Fourier transform with a periodic Hann window and its
//! weighted overlap-add inverse.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const DEFAULT_FRAME: usize = 512;
pub const DEFAULT_HOP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub frame: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame: DEFAULT_FRAME,
            hop: DEFAULT_HOP,
        }
    }
}

/// One-sided complex spectrogram, row-major over (frame, bin).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub config: StftConfig,
    /// Length of the analyzed signal.
    pub signal_len: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    /// `|X[t, f]|^2` for every cell.
    pub fn power(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }
}

pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("config", &self.config)
            .finish()
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        if config.frame < 2 || config.hop == 0 || config.hop > config.frame {
            return Err(Error::Config(format!(
                "invalid STFT geometry frame={} hop={}",
                config.frame, config.hop
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            window: hann_periodic(config.frame),
            forward: planner.plan_fft_forward(config.frame),
            inverse: planner.plan_fft_inverse(config.frame),
        })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn bins(&self) -> usize {
        self.config.frame / 2 + 1
    }

    /// Frames fully contained in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.config.frame {
            0
        } else {
            1 + (len - self.config.frame) / self.config.hop
        }
    }

    pub fn forward(&self, signal: &[f64]) -> Result<Spectrogram> {
        let StftConfig { frame, hop } = self.config;
        if signal.len() < frame {
            return Err(Error::Signal(format!(
                "signal of {} samples is shorter than one {frame}-sample frame",
                signal.len()
            )));
        }
        let frames = self.frame_count(signal.len());
        let bins = self.bins();
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); frame];
        for t in 0..frames {
            let seg = &signal[t * hop..t * hop + frame];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(x * w, 0.0);
            }
            self.forward.process(&mut buf);
            data.extend_from_slice(&buf[..bins]);
        }
        Ok(Spectrogram {
            frames,
            bins,
            config: self.config,
            signal_len: signal.len(),
            data,
        })
    }

    /// Overlap-add inverse. Each inverse frame is accumulated and the sum is
    /// divided by the accumulated analysis window, so samples covered by at
    /// least one frame with nonzero window weight are reconstructed exactly.
    pub fn inverse(&self, spec: &Spectrogram) -> Result<Vec<f64>> {
        let StftConfig { frame, hop } = self.config;
        if spec.config != self.config || spec.bins != self.bins() {
            return Err(Error::Signal("spectrogram geometry does not match".into()));
        }
        let mut out = vec![0.0; spec.signal_len];
        let mut weight = vec![0.0; spec.signal_len];
        let mut buf = vec![Complex64::new(0.0, 0.0); frame];
        for t in 0..spec.frames {
            let row = spec.frame(t);
            buf[..spec.bins].copy_from_slice(row);
            for f in 1..frame - spec.bins + 1 {
                buf[spec.bins - 1 + f] = row[spec.bins - 1 - f].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * hop;
            for n in 0..frame {
                out[start + n] += buf[n].re / frame as f64;
                weight[start + n] += self.window[n];
            }
        }
        for (o, w) in out.iter_mut().zip(&weight) {
            if *w > 1e-12 {
                *o /= w;
            } else {
                *o = 0.0;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, seed: f64) -> Vec<f64> {
        (0..n)
            .map(|i| ((i as f64 * 12.9898 + seed).sin() * 43_758.545_3).fract() - 0.5)
            .collect()
    }

    #[test]
    fn round_trip_interior() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let x = noise(16_000, 1.0);
        let spec = stft.forward(&x).unwrap();
        assert_eq!(spec.bins, 257);
        let y = stft.inverse(&spec).unwrap();
        let last = (spec.frames - 1) * 256 + 512;
        let interior = 256..last - 256;
        let num: f64 = interior.clone().map(|n| (x[n] - y[n]).powi(2)).sum();
        let den: f64 = interior.map(|n| x[n] * x[n]).sum();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn bin_centred_sinusoid_stays_in_main_lobe() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let bin = 40;
        let x: Vec<f64> = (0..4096)
            .map(|n| (2.0 * PI * bin as f64 * n as f64 / 512.0).cos())
            .collect();
        let spec = stft.forward(&x).unwrap();
        for t in 0..spec.frames {
            let p: Vec<f64> = spec.frame(t).iter().map(|c| c.norm_sqr()).collect();
            let total: f64 = p.iter().sum();
            let peak = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(peak, bin);
            let lobe = p[bin - 1] + p[bin] + p[bin + 1];
            assert!(lobe / total > 0.99);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let spec = stft.forward(&vec![0.0; 2048]).unwrap();
        assert!(spec.data.iter().all(|c| c.norm_sqr() == 0.0));
    }

    #[test]
    fn parseval_per_frame() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let x = noise(3000, 7.0);
        let spec = stft.forward(&x).unwrap();
        for t in 0..spec.frames {
            let time: f64 = (0..512)
                .map(|n| (x[t * 256 + n] * stft.window()[n]).powi(2))
                .sum();
            let row = spec.frame(t);
            // one-sided: DC and Nyquist once, everything else twice
            let freq: f64 = row
                .iter()
                .enumerate()
                .map(|(f, c)| {
                    let w = if f == 0 || f == 256 { 1.0 } else { 2.0 };
                    w * c.norm_sqr()
                })
                .sum::<f64>()
                / 512.0;
            assert!((time - freq).abs() <= 1e-9 * time.max(1.0));
        }
    }

    #[test]
    fn short_signal_rejected() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        assert!(stft.forward(&[0.0; 100]).is_err());
    }
}
