//! Full linear convolution: direct form for short inputs, FFT overlap-add for
//! signals much longer than the filter.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Full convolution of `x` with `h` (length `x.len() + h.len() - 1`).
///
/// Uses overlap-add when the signal is more than twice as long as the
/// filter, the direct sum otherwise.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    if x.len() > 2 * h.len() {
        convolve_overlap_add(x, h)
    } else {
        convolve_direct(x, h)
    }
}

pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &hj) in y[i..i + h.len()].iter_mut().zip(h) {
            *o += xi * hj;
        }
    }
    y
}

/// Overlap-add with blocks sized so each FFT is the next power of two above
/// twice the filter length.
pub fn convolve_overlap_add(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let fft_len = (2 * h.len()).next_power_of_two();
    let block = fft_len - h.len() + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut h_spec: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    h_spec.resize(fft_len, Complex64::new(0.0, 0.0));
    fwd.process(&mut h_spec);

    let scale = 1.0 / fft_len as f64;
    let mut y = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    for (b, chunk) in x.chunks(block).enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (c, &v) in buf.iter_mut().zip(chunk) {
            c.re = v;
        }
        fwd.process(&mut buf);
        for (c, hs) in buf.iter_mut().zip(&h_spec) {
            *c *= hs;
        }
        inv.process(&mut buf);
        let start = b * block;
        let valid = (chunk.len() + h.len() - 1).min(out_len - start);
        for (o, c) in y[start..start + valid].iter_mut().zip(&buf) {
            *o += c.re * scale;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn impulse_is_identity() {
        let h = [0.5, -0.25, 0.125, 1.0];
        let y = convolve(&[1.0], &h);
        assert_eq!(y, h.to_vec());
    }

    #[test]
    fn small_example() {
        assert_eq!(
            convolve(&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.5]),
            vec![0.0, 1.0, 2.5, 4.0, 1.5]
        );
        assert!(convolve(&[], &[1.0]).is_empty());
    }

    proptest! {
        #[test]
        fn overlap_add_matches_direct(
            x in prop::collection::vec(-1.0f64..1.0, 1..700),
            h in prop::collection::vec(-1.0f64..1.0, 1..120),
        ) {
            let a = convolve_direct(&x, &h);
            let b = convolve_overlap_add(&x, &h);
            prop_assert_eq!(a.len(), b.len());
            let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() <= 1e-10 * scale);
            }
        }
    }
}
