//! Scene-level acoustic quantities: time difference of arrival, predicted and
//! measured reverberation time, and a cross-correlation delay estimator used
//! to check simulated responses against geometry.

use crate::error::{Error, Result};
use crate::scene::{SceneSpec, Vec3};

/// TDOA of `source` (0-based) between the two microphones, in samples.
/// Positive when the wavefront reaches microphone 1 first.
pub fn compute_tdoa(scene: &SceneSpec, source: usize, sample_rate: f64) -> Result<f64> {
    let s = scene
        .sources
        .get(source)
        .ok_or_else(|| Error::Geometry(format!("no source {source}")))?;
    tdoa_samples(s, &scene.mics[0], &scene.mics[1], scene.c, sample_rate)
}

/// Far-field TDOA of a point `source` for the pair `(m1, m2)`.
pub fn tdoa_samples(source: &Vec3, m1: &Vec3, m2: &Vec3, c: f64, sample_rate: f64) -> Result<f64> {
    let center = (m1 + m2) / 2.0;
    let dir = source - center;
    let norm = dir.norm();
    if norm == 0.0 {
        return Err(Error::Geometry(
            "source coincides with the microphone-pair center".into(),
        ));
    }
    Ok(sample_rate / c * (m1 - m2).dot(&(dir / norm)))
}

/// Reverberation time predicted from room volume and surface area.
pub fn predict_rt60(scene: &SceneSpec) -> Result<f64> {
    sabine_rt60(&scene.room, scene.alpha, scene.c)
}

pub fn sabine_rt60(room: &Vec3, alpha: f64, c: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Geometry(format!(
            "absorption {alpha} gives unbounded reverberation"
        )));
    }
    let (lx, ly, lz) = (room.x, room.y, room.z);
    let volume = lx * ly * lz;
    let half_area = lx * ly + ly * lz + lz * lx;
    Ok(12.0 * std::f64::consts::LN_10 / (alpha * c) * (volume / half_area))
}

/// Start and end of the decay-curve fit, in dB below the total energy.
pub const FIT_START_DB: f64 = -5.0;
pub const FIT_END_DB: f64 = -25.0;
pub const MIN_FIT_R2: f64 = 0.9;

/// Estimates RT60 from a response by Schroeder backward integration and a
/// least-squares line over the -5 to -25 dB span of the decay curve,
/// extrapolated to 60 dB. This is an estimator, not ground truth: the fit is
/// sensitive to non-exponential decay and to truncation of the response.
/// Fits whose coefficient of determination is below [`MIN_FIT_R2`] are
/// rejected as non-exponential.
pub fn measure_rt60(rir: &[f64], sample_rate: f64) -> Result<f64> {
    let edc = schroeder_db(rir)?;
    let start = edc.iter().position(|&v| v <= FIT_START_DB);
    let end = edc.iter().position(|&v| v <= FIT_END_DB);
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) if e > s + 1 => (s, e),
        _ => {
            return Err(Error::InsufficientDecay(format!(
                "decay curve never falls from {FIT_START_DB} to {FIT_END_DB} dB"
            )))
        }
    };
    // Least-squares slope of dB against seconds.
    let n = (end - start + 1) as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in edc.iter().enumerate().take(end + 1).skip(start) {
        let x = i as f64 / sample_rate;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean = sy / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (i, &y) in edc.iter().enumerate().take(end + 1).skip(start) {
        let fit = intercept + slope * i as f64 / sample_rate;
        ss_res += (y - fit).powi(2);
        ss_tot += (y - mean).powi(2);
    }
    if ss_tot > 0.0 && 1.0 - ss_res / ss_tot < MIN_FIT_R2 {
        return Err(Error::InsufficientDecay(format!(
            "decay is not exponential (r^2 {:.3})",
            1.0 - ss_res / ss_tot
        )));
    }
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay(
            "decay curve does not decrease".into(),
        ));
    }
    Ok(-60.0 / slope)
}

/// Energy decay curve in dB relative to the total energy.
pub fn schroeder_db(rir: &[f64]) -> Result<Vec<f64>> {
    let mut tail = vec![0.0; rir.len()];
    let mut acc = 0.0;
    for (slot, x) in tail.iter_mut().zip(rir).rev() {
        acc += x * x;
        *slot = acc;
    }
    if !(acc > 0.0) {
        return Err(Error::Signal("response has no energy".into()));
    }
    Ok(tail
        .into_iter()
        .map(|e| {
            if e > 0.0 {
                10.0 * (e / acc).log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect())
}

/// Relative delay of the first arrival in `b` with respect to `a`, in samples
/// (positive when `b` arrives later).
///
/// The direct-path peak of each channel is located as the first local maximum
/// reaching 40% of that channel's peak. Both channels are cut with one common
/// Hann window spanning both peaks plus `guard` samples, cross-correlated over
/// lags within `max_lag`, and the correlation peak refined by parabolic
/// interpolation.
pub fn direct_path_lag(a: &[f64], b: &[f64], max_lag: usize, guard: usize) -> Result<f64> {
    let pa = first_arrival(a).ok_or_else(|| Error::Signal("first channel is silent".into()))?;
    let pb = first_arrival(b).ok_or_else(|| Error::Signal("second channel is silent".into()))?;
    let len = a.len().min(b.len());
    let lo = pa.min(pb).saturating_sub(guard);
    let hi = (pa.max(pb) + guard + 1).min(len);
    let width = hi - lo;
    let window = |n: usize| {
        let x = (n as f64 + 0.5) / width as f64;
        0.5 - 0.5 * (2.0 * std::f64::consts::PI * x).cos()
    };
    let wa: Vec<f64> = (0..width).map(|n| a[lo + n] * window(n)).collect();
    let wb: Vec<f64> = (0..width).map(|n| b[lo + n] * window(n)).collect();

    let max_lag = max_lag.min(width.saturating_sub(1)) as i64;
    let xcorr = |lag: i64| -> f64 {
        let mut s = 0.0;
        for (n, &x) in wa.iter().enumerate() {
            let m = n as i64 + lag;
            if m >= 0 && (m as usize) < width {
                s += x * wb[m as usize];
            }
        }
        s
    };
    let values: Vec<(i64, f64)> = (-max_lag..=max_lag).map(|l| (l, xcorr(l))).collect();
    let (best_idx, &(best_lag, best)) = values
        .iter()
        .enumerate()
        .max_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .expect("at least one lag");
    let refined = if best_idx > 0 && best_idx + 1 < values.len() {
        let y0 = values[best_idx - 1].1;
        let y2 = values[best_idx + 1].1;
        let denom = y0 - 2.0 * best + y2;
        if denom < 0.0 {
            0.5 * (y0 - y2) / denom
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(best_lag as f64 + refined)
}

fn first_arrival(x: &[f64]) -> Option<usize> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return None;
    }
    let threshold = 0.4 * peak;
    let mut i = x.iter().position(|v| v.abs() >= threshold)?;
    while i + 1 < x.len() && x[i + 1].abs() > x[i].abs() {
        i += 1;
    }
    Some(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{place_mics, SceneSpec};
    use approx::assert_abs_diff_eq;

    pub(crate) fn reference_scene() -> SceneSpec {
        SceneSpec::from_positions(
            Vec3::new(14.83, 11.49, 3.01),
            0.36,
            350.5,
            [
                Vec3::new(0.811, 5.702, 1.547),
                Vec3::new(6.658, 4.000, 2.582),
                Vec3::new(5.340, 9.433, 1.775),
                Vec3::new(12.164, 8.109, 2.161),
            ],
            [
                Vec3::new(14.141, 2.934, 1.895),
                Vec3::new(14.224, 3.010, 2.161),
            ],
        )
    }

    #[test]
    fn reference_scene_tdoa_matches_hand_arithmetic() {
        // Step by step: center, difference, unit vector, scaled dot product.
        let (m1, m2) = ([14.141, 2.934, 1.895], [14.224, 3.010, 2.161]);
        let s = [0.811, 5.702, 1.547];
        let o: Vec<f64> = (0..3).map(|i| 0.5 * (m1[i] + m2[i])).collect();
        let v: Vec<f64> = (0..3).map(|i| s[i] - o[i]).collect();
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let dot: f64 = (0..3).map(|i| (m1[i] - m2[i]) * v[i] / n).sum();
        let oracle = 16_000.0 / 350.5 * dot;
        assert_abs_diff_eq!(oracle, 3.444, epsilon = 0.005);

        let tau = compute_tdoa(&reference_scene(), 0, 16_000.0).unwrap();
        assert_abs_diff_eq!(tau, oracle, epsilon = 1e-12);
    }

    #[test]
    fn reference_scene_rt60() {
        let rt = predict_rt60(&reference_scene()).unwrap();
        assert_abs_diff_eq!(rt, 0.450, epsilon = 0.001);
    }

    #[test]
    fn rt60_scaling_laws() {
        let mut s = reference_scene();
        let base = predict_rt60(&s).unwrap();
        s.alpha *= 2.0;
        assert_abs_diff_eq!(predict_rt60(&s).unwrap(), base / 2.0, epsilon = 1e-12);
        // cube of side L: V / (half area) = L / 3
        let cube = sabine_rt60(&Vec3::new(6.0, 6.0, 6.0), 0.5, 343.0).unwrap();
        let expected = 12.0 * std::f64::consts::LN_10 / (0.5 * 343.0) * 2.0;
        assert_abs_diff_eq!(cube, expected, epsilon = 1e-12);
        s.alpha = 0.0;
        assert!(predict_rt60(&s).is_err());
    }

    #[test]
    fn tdoa_symmetry_and_endfire() {
        let o = Vec3::new(3.0, 3.0, 1.5);
        let [m1, m2] = place_mics(&o, 0.2, 0.0, 0.0, 0.0);
        // broadside plane x = 3
        let t = tdoa_samples(&Vec3::new(3.0, 5.0, 2.0), &m1, &m2, 343.0, 16_000.0).unwrap();
        assert_abs_diff_eq!(t, 0.0, epsilon = 1e-12);
        // far along the axis beyond m1 (negative x side)
        let t = tdoa_samples(&Vec3::new(-1e6, 3.0, 1.5), &m1, &m2, 343.0, 16_000.0).unwrap();
        assert_abs_diff_eq!(t, 16_000.0 * 0.2 / 343.0, epsilon = 1e-9);
        assert!(tdoa_samples(&o, &m1, &m2, 343.0, 16_000.0).is_err());
    }

    #[test]
    fn measure_synthetic_exponential_decay() {
        let fs = 16_000.0;
        for target in [0.2, 0.45, 0.8] {
            let decay = 3.0 * std::f64::consts::LN_10 / target;
            let h: Vec<f64> = (0..16_000)
                .map(|n| {
                    let t = n as f64 / fs;
                    // deterministic broadband carrier
                    let noise = ((n as f64 * 12.9898).sin() * 43_758.545_3).fract() - 0.5;
                    noise * (-decay * t).exp()
                })
                .collect();
            let m = measure_rt60(&h, fs).unwrap();
            assert!((m - target).abs() / target < 0.05, "{m} vs {target}");
        }
    }

    #[test]
    fn measure_rejects_flat_or_silent() {
        assert!(measure_rt60(&vec![0.0; 100], 16_000.0).is_err());
        let flat = vec![0.1; 1000];
        assert!(matches!(
            measure_rt60(&flat, 16_000.0),
            Err(Error::InsufficientDecay(_))
        ));
    }

    #[test]
    fn lag_of_shifted_pulse() {
        let pulse = |center: f64| -> Vec<f64> {
            (0..400)
                .map(|n| crate::engine::kernel_value(n as f64 - center, 64.0))
                .collect()
        };
        let a = pulse(150.0);
        let b = pulse(153.4);
        let lag = direct_path_lag(&a, &b, 20, 12).unwrap();
        assert!((lag - 3.4).abs() < 0.2, "{lag}");
        let lag = direct_path_lag(&b, &a, 20, 12).unwrap();
        assert!((lag + 3.4).abs() < 0.2, "{lag}");
    }
}
