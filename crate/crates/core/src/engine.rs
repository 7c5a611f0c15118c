//! Image-source simulation of shoebox room impulse responses.
//!
//! Every mirror image of the source whose propagation delay falls inside the
//! response window contributes `beta^reflections / (4 pi r)` at a fractional
//! delay `r fs / c`. The fractional delay is realized with a Hann-windowed
//! sinc low-pass kernel.
//!
//! Each kernel tap, as a function of the sub-sample offset, is replaced by a
//! polynomial of degree [`KERNEL_DEGREE`] (a Farrow structure). An image then
//! only adds its gain times the powers of its offset into the bin of its
//! integer delay; one short convolution of those bins with the polynomial
//! coefficients produces the response.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{SceneSpec, Vec3, NUM_MICS, NUM_SOURCES};

/// Degree of the per-tap polynomials in the sub-sample offset. Degree 9
/// keeps the kernel within about 3e-9 of the exact windowed sinc.
pub const KERNEL_DEGREE: usize = 9;
const KERNEL_TERMS: usize = KERNEL_DEGREE + 1;
// coefficient rows are consumed in pairs
const _: () = assert!(KERNEL_TERMS.is_multiple_of(2));

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_LENGTH: usize = 16_000;
pub const DEFAULT_KERNEL_HALF_WIDTH: f64 = 0.004;

/// Target peak after normalization.
pub const NORMALIZED_PEAK: f64 = 0.99;

pub const NUM_CHANNELS: usize = NUM_SOURCES * NUM_MICS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub sample_rate: u32,
    /// Response length in samples.
    pub length: usize,
    /// Half-width of the fractional-delay kernel in seconds.
    pub kernel_half_width: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            length: DEFAULT_LENGTH,
            kernel_half_width: DEFAULT_KERNEL_HALF_WIDTH,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.length == 0 {
            return Err(Error::Config(
                "sample rate and length must be positive".into(),
            ));
        }
        if !(self.kernel_half_width > 0.0) {
            return Err(Error::Config("kernel half-width must be positive".into()));
        }
        if self.half_width_taps() == 0 {
            return Err(Error::Config(
                "kernel half-width is shorter than one sample".into(),
            ));
        }
        Ok(())
    }

    /// Kernel half-width in samples.
    pub fn half_width_taps(&self) -> usize {
        (self.kernel_half_width * self.sample_rate as f64).round() as usize
    }
}

/// Acoustic properties the engine needs from a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Room {
    pub dims: Vec3,
    pub alpha: f64,
    pub c: f64,
}

impl Room {
    pub fn of(scene: &SceneSpec) -> Self {
        Self {
            dims: scene.room,
            alpha: scene.alpha,
            c: scene.c,
        }
    }

    /// Amplitude reflection coefficient shared by all six surfaces.
    pub fn beta(&self) -> f64 {
        (1.0 - self.alpha).max(0.0).sqrt()
    }
}

/// One impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// The eight responses of one scene, stored in channel order
/// `(source 1, mic 1), (source 1, mic 2), (source 2, mic 1), ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct RirSet {
    channels: Vec<Rir>,
    normalized: bool,
}

impl RirSet {
    pub fn new(channels: Vec<Rir>, normalized: bool) -> Result<Self> {
        if channels.len() != NUM_CHANNELS {
            return Err(Error::Signal(format!(
                "a response set holds {NUM_CHANNELS} channels, got {}",
                channels.len()
            )));
        }
        let len = channels[0].samples.len();
        if channels.iter().any(|c| c.samples.len() != len) {
            return Err(Error::Signal("response channels differ in length".into()));
        }
        Ok(Self {
            channels,
            normalized,
        })
    }

    pub fn channel_index(source: usize, mic: usize) -> usize {
        source * NUM_MICS + mic
    }

    /// Response from source `source` (0-based) to microphone `mic` (0-based).
    pub fn get(&self, source: usize, mic: usize) -> &Rir {
        &self.channels[Self::channel_index(source, mic)]
    }

    pub fn channels(&self) -> &[Rir] {
        &self.channels
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.channels[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.channels[0].sample_rate
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.samples.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Image-method simulator. Holds the fitted kernel for one configuration.
#[derive(Debug, Clone)]
pub struct ImageEngine {
    cfg: EngineConfig,
    half_width: usize,
    taps: usize,
    /// `KERNEL_TERMS` rows of `taps` coefficients; row `p` multiplies
    /// `x^p`, where `x` is the sub-sample offset minus one half.
    coeffs: Vec<f64>,
    accumulate: AccumulateFn,
}

/// Hann-windowed sinc evaluated `t` samples away from the kernel center.
pub fn kernel_value(t: f64, half_width: f64) -> f64 {
    if t.abs() >= half_width {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * t / half_width).cos());
    if t == 0.0 {
        window
    } else {
        window * (PI * t).sin() / (PI * t)
    }
}

impl ImageEngine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let half_width = cfg.half_width_taps();
        let taps = 2 * half_width;
        Ok(Self {
            cfg,
            half_width,
            taps,
            coeffs: fit_kernel(half_width),
            accumulate: select_accumulate(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Simulates the response from `src` to `mic`.
    pub fn simulate_rir(&self, room: &Room, src: &Vec3, mic: &Vec3) -> Result<Rir> {
        check_room(room)?;
        for (what, p) in [("source", src), ("microphone", mic)] {
            if (0..3).any(|a| !(p[a] > 0.0 && p[a] < room.dims[a])) {
                return Err(Error::Geometry(format!(
                    "{what} at {:?} is not strictly inside the room",
                    p.as_slice()
                )));
            }
        }
        if src == mic {
            return Err(Error::Geometry(
                "source and microphone coincide (zero distance)".into(),
            ));
        }

        let n_out = self.cfg.length;
        let fs = self.cfg.sample_rate as f64;
        let meters_per_sample = room.c / fs;
        let s = src / meters_per_sample;
        let r = mic / meters_per_sample;
        let l = room.dims / meters_per_sample;
        let radius = n_out as f64;
        let radius2 = radius * radius;

        let beta = room.beta();
        let max_order = (0..3)
            .map(|a| 2 * ((radius / (2.0 * l[a])).ceil() as usize + 1) + 1)
            .sum::<usize>();
        let beta_pow: Vec<f64> = (0..=max_order).map(|n| beta.powi(n as i32)).collect();

        let mut bins = vec![0.0f64; n_out * KERNEL_TERMS];
        let amp_scale = 1.0 / (4.0 * PI * meters_per_sample);

        for qx in 0..2i64 {
            let ax = (1 - 2 * qx) as f64 * s.x - r.x;
            let (mx_lo, mx_hi) = index_range(ax, l.x, radius);
            for mx in mx_lo..=mx_hi {
                let dx = ax + 2.0 * mx as f64 * l.x;
                let rem_x = radius2 - dx * dx;
                if rem_x <= 0.0 {
                    continue;
                }
                let ox = (mx - qx).unsigned_abs() + mx.unsigned_abs();
                for qy in 0..2i64 {
                    let ay = (1 - 2 * qy) as f64 * s.y - r.y;
                    let (my_lo, my_hi) = index_range(ay, l.y, rem_x.sqrt());
                    for my in my_lo..=my_hi {
                        let dy = ay + 2.0 * my as f64 * l.y;
                        let rem_y = rem_x - dy * dy;
                        if rem_y <= 0.0 {
                            continue;
                        }
                        let oy = (my - qy).unsigned_abs() + my.unsigned_abs();
                        for qz in 0..2i64 {
                            let az = (1 - 2 * qz) as f64 * s.z - r.z;
                            let (mz_lo, mz_hi) = index_range(az, l.z, rem_y.sqrt());
                            for mz in mz_lo..=mz_hi {
                                let dz = az + 2.0 * mz as f64 * l.z;
                                let dist2 = dx * dx + dy * dy + dz * dz;
                                if dist2 >= radius2 {
                                    continue;
                                }
                                let oz = (mz - qz).unsigned_abs() + mz.unsigned_abs();
                                let order = (ox + oy + oz) as usize;
                                let refl = beta_pow[order];
                                if refl == 0.0 {
                                    continue;
                                }
                                let dist = dist2.sqrt();
                                deposit(&mut bins, dist, refl * amp_scale / dist);
                            }
                        }
                    }
                }
            }
        }

        Ok(Rir {
            samples: self.render(&bins),
            sample_rate: self.cfg.sample_rate,
        })
    }

    /// Convolves the per-delay power sums with the kernel coefficients.
    fn render(&self, bins: &[f64]) -> Vec<f64> {
        // Taps of an image with integer delay f cover output samples
        // f - (hw - 1) ..= f + hw; the accumulator is shifted by hw so none of
        // them falls off either end.
        let (hw, taps) = (self.half_width, self.taps);
        let n_out = bins.len() / KERNEL_TERMS;
        let mut acc = vec![0.0f64; n_out + taps + 1];
        let row = |p: usize| &self.coeffs[p * taps..(p + 1) * taps];
        for (whole, b) in bins.chunks_exact(KERNEL_TERMS).enumerate() {
            if b.iter().all(|&v| v == 0.0) {
                continue;
            }
            let seg = &mut acc[whole + 1..whole + 1 + taps];
            for p in (0..KERNEL_TERMS).step_by(2) {
                // SAFETY: `select_accumulate` only returns paths the CPU supports.
                unsafe { (self.accumulate)(seg, row(p), row(p + 1), b[p], b[p + 1]) };
            }
        }
        acc[hw..hw + n_out].to_vec()
    }

    /// Simulates all eight source/microphone pairs of a scene. The result is
    /// not normalized.
    pub fn simulate_set(&self, scene: &SceneSpec) -> Result<RirSet> {
        let room = Room::of(scene);
        let channels = (0..NUM_CHANNELS)
            .into_par_iter()
            .map(|ch| {
                let (i, k) = (ch / NUM_MICS, ch % NUM_MICS);
                self.simulate_rir(&room, &scene.sources[i], &scene.mics[k])
            })
            .collect::<Result<Vec<_>>>()?;
        RirSet::new(channels, false)
    }

    /// Reference evaluation of a single image contribution straight from
    /// [`kernel_value`]. Used to bound the polynomial approximation error.
    pub fn exact_kernel(&self, delay: f64, gain: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.cfg.length];
        let hw = self.half_width as f64;
        let lo = (delay - hw).floor().max(0.0) as usize;
        let hi = ((delay + hw).ceil() as usize).min(self.cfg.length);
        for (n, v) in out.iter_mut().enumerate().take(hi).skip(lo) {
            *v = gain * kernel_value(n as f64 - delay, hw);
        }
        out
    }

    /// The engine's own rendering of a single image, for comparison with
    /// [`ImageEngine::exact_kernel`]. `delay` must lie in `[0, length)`.
    pub fn approximate_kernel(&self, delay: f64, gain: f64) -> Vec<f64> {
        let mut bins = vec![0.0; self.cfg.length * KERNEL_TERMS];
        deposit(&mut bins, delay, gain);
        self.render(&bins)
    }
}

/// Adds `gain * x^p` for every power `p` to the bin of `floor(delay)`.
#[inline(always)]
fn deposit(bins: &mut [f64], delay: f64, gain: f64) {
    let whole = delay.floor();
    let x = delay - whole - 0.5;
    let start = whole as usize * KERNEL_TERMS;
    let mut g = gain;
    for v in &mut bins[start..start + KERNEL_TERMS] {
        *v += g;
        g *= x;
    }
}

/// Polynomial coefficients of every tap, interpolating the exact kernel at
/// Chebyshev nodes of the offset interval.
fn fit_kernel(half_width: usize) -> Vec<f64> {
    let taps = 2 * half_width;
    let nodes: Vec<f64> = (0..KERNEL_TERMS)
        .map(|i| 0.5 * (PI * (2 * i + 1) as f64 / (2 * KERNEL_TERMS) as f64).cos())
        .collect();
    let vandermonde = DMatrix::from_fn(KERNEL_TERMS, KERNEL_TERMS, |i, p| nodes[i].powi(p as i32));
    let samples = DMatrix::from_fn(KERNEL_TERMS, taps, |i, n| {
        let t = n as f64 - (half_width as f64 - 1.0) - (nodes[i] + 0.5);
        kernel_value(t, half_width as f64)
    });
    let c = vandermonde
        .lu()
        .solve(&samples)
        .expect("Vandermonde matrix on distinct nodes is invertible");
    let mut coeffs = vec![0.0; KERNEL_TERMS * taps];
    for p in 0..KERNEL_TERMS {
        for n in 0..taps {
            coeffs[p * taps + n] = c[(p, n)];
        }
    }
    coeffs
}

fn check_room(room: &Room) -> Result<()> {
    if !(room.alpha > 0.0) {
        return Err(Error::Geometry(format!(
            "absorption must be positive (got {})",
            room.alpha
        )));
    }
    if room.alpha > 1.0 {
        return Err(Error::Geometry(format!(
            "absorption must not exceed 1 (got {})",
            room.alpha
        )));
    }
    if !(room.c > 0.0) || room.dims.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Geometry(
            "room and speed of sound must be positive".into(),
        ));
    }
    Ok(())
}

/// Image indices `m` with `|offset + 2 m half| < radius`.
fn index_range(offset: f64, half: f64, radius: f64) -> (i64, i64) {
    let lo = ((-radius - offset) / (2.0 * half)).ceil() as i64;
    let hi = ((radius - offset) / (2.0 * half)).floor() as i64;
    (lo, hi)
}

type AccumulateFn = unsafe fn(&mut [f64], &[f64], &[f64], f64, f64);

/// Widest available vector path. None of them use FMA, so every lane rounds
/// exactly like the portable loop and output bytes do not depend on the host.
fn select_accumulate() -> AccumulateFn {
    #[cfg(target_arch = "x86_64")]
    {
        if false && std::arch::is_x86_feature_detected!("avx512f") {
            return accumulate_avx512;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            return accumulate_avx2;
        }
    }
    accumulate_scalar
}

unsafe fn accumulate_scalar(seg: &mut [f64], row0: &[f64], row1: &[f64], g0: f64, g1: f64) {
    accumulate_portable(seg, row0, row1, g0, g1)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn accumulate_avx2(seg: &mut [f64], row0: &[f64], row1: &[f64], g0: f64, g1: f64) {
    accumulate_portable(seg, row0, row1, g0, g1)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn accumulate_avx512(seg: &mut [f64], row0: &[f64], row1: &[f64], g0: f64, g1: f64) {
    accumulate_portable(seg, row0, row1, g0, g1)
}

#[inline(always)]
fn accumulate_portable(seg: &mut [f64], row0: &[f64], row1: &[f64], g0: f64, g1: f64) {
    for ((o, a), b) in seg.iter_mut().zip(row0).zip(row1) {
        *o += g0 * *a + g1 * *b;
    }
}

/// Scales a set so its largest absolute sample over all channels is 0.99.
pub fn normalize_set(set: &RirSet) -> Result<RirSet> {
    let peak = set.peak();
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::Signal(format!(
            "cannot normalize a response set with peak {peak}"
        )));
    }
    let scale = NORMALIZED_PEAK / peak;
    let channels = set
        .channels
        .iter()
        .map(|c| Rir {
            samples: c.samples.iter().map(|x| x * scale).collect(),
            sample_rate: c.sample_rate,
        })
        .collect();
    RirSet::new(channels, true)
}
