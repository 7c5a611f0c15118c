use bird::acoustics::{compute_tdoa, predict_rt60};
use bird::packager::SceneMetadata;
use bird::rng::SeedStream;
use bird::scene::{sample_scene, ParamRanges, SceneSpec, WALL_MARGIN};
use proptest::prelude::*;

/// Largest |TDOA| the default ranges allow: fs * d_max / c_min.
fn tdoa_bound() -> f64 {
    let r = ParamRanges::default();
    16_000.0 * r.d.1 / r.c.0
}

/// Sabine RT60 evaluated independently at the two corners of the default
/// ranges that minimize and maximize it.
fn rt60_extremes() -> (f64, f64) {
    let r = ParamRanges::default();
    let sabine = |lx: f64, ly: f64, lz: f64, alpha: f64, c: f64| {
        24.0 * 10f64.ln() * lx * ly * lz / (c * alpha * 2.0 * (lx * ly + ly * lz + lz * lx))
    };
    (
        sabine(r.lx.0, r.ly.0, r.lz.0, r.alpha.1, r.c.1),
        sabine(r.lx.1, r.ly.1, r.lz.1, r.alpha.0, r.c.0),
    )
}

#[test]
fn analytic_extremes() {
    assert!((tdoa_bound() - 16_000.0 * 0.30 / 340.0).abs() < 1e-12);
    assert!(tdoa_bound() < 14.2);
    let (lo, hi) = rt60_extremes();
    assert!((lo - 0.133).abs() < 0.0015, "{lo}");
    assert!((hi - 1.060).abs() < 0.0015, "{hi}");
}

/// Kolmogorov-Smirnov distance between `values` and U(lo, hi).
fn ks_uniform(values: &mut [f64], lo: f64, hi: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = (v - lo) / (hi - lo);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn parameters_are_uniform_over_their_ranges() {
    let r = ParamRanges::default();
    let scenes: Vec<_> = (0..10_000)
        .map(|i| sample_scene(&r, SeedStream::new(31, i)).unwrap())
        .collect();
    let checks: [(&str, fn(&SceneSpec) -> f64, (f64, f64)); 6] = [
        ("lx", |s| s.room.x, r.lx),
        ("ly", |s| s.room.y, r.ly),
        ("lz", |s| s.room.z, r.lz),
        ("alpha", |s| s.alpha, r.alpha),
        ("c", |s| s.c, r.c),
        ("d", |s| s.spacing, r.d),
    ];
    for (name, get, (lo, hi)) in checks {
        let mut v: Vec<f64> = scenes.iter().map(get).collect();
        assert!(v.iter().all(|&x| x >= lo && x <= hi), "{name}");
        let ks = ks_uniform(&mut v, lo, hi);
        assert!(ks < 0.02, "{name}: KS {ks}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sampled_scenes_respect_ranges(seed in any::<u64>(), index in any::<u64>()) {
        let r = ParamRanges::default();
        let s = sample_scene(&r, SeedStream::new(seed, index)).unwrap();
        prop_assert!(s.validate().is_ok());
        for (v, (lo, hi)) in [(s.room.x, r.lx), (s.room.y, r.ly), (s.room.z, r.lz), (s.alpha, r.alpha), (s.c, r.c), (s.spacing, r.d)] {
            prop_assert!(v >= lo && v <= hi);
        }
        for p in s.sources.iter().chain(std::iter::once(&s.mic_center)) {
            for a in 0..3 {
                prop_assert!(p[a] >= WALL_MARGIN && p[a] <= s.room[a] - WALL_MARGIN);
            }
        }
        for m in &s.mics {
            for a in 0..3 {
                prop_assert!(m[a] > 0.0 && m[a] < s.room[a]);
            }
        }
        prop_assert!(((s.mics[0] - s.mics[1]).norm() - s.spacing).abs() < 1e-9);
        prop_assert!(((s.mics[0] + s.mics[1]) / 2.0 - s.mic_center).norm() < 1e-9);
    }

    #[test]
    fn tdoa_and_rt60_stay_within_analytic_bounds(seed in any::<u64>(), index in 0u64..1_000_000) {
        let s = sample_scene(&ParamRanges::default(), SeedStream::new(seed, index)).unwrap();
        for i in 0..4 {
            let tau = compute_tdoa(&s, i, 16_000.0).unwrap();
            prop_assert!(tau.abs() <= 16_000.0 * s.spacing / s.c + 1e-9);
            prop_assert!(tau.abs() <= tdoa_bound());
        }
        let (lo, hi) = rt60_extremes();
        let rt = predict_rt60(&s).unwrap();
        prop_assert!(rt >= lo - 1e-12 && rt <= hi + 1e-12);
    }

    #[test]
    fn metadata_round_trip_is_exact(seed in any::<u64>()) {
        let s = sample_scene(&ParamRanges::default(), SeedStream::new(seed, 0)).unwrap();
        let meta = SceneMetadata::from(&s);
        let back = SceneMetadata::from_json(&meta.to_json()).unwrap();
        prop_assert_eq!(&back, &meta);
        let rebuilt: SceneSpec = back.to_scene();
        prop_assert_eq!(SceneMetadata::from(&rebuilt), meta);
    }

    #[test]
    fn sampling_is_a_pure_function_of_seed_and_index(seed in any::<u64>(), index in any::<u64>()) {
        let r = ParamRanges::default();
        prop_assert_eq!(
            sample_scene(&r, SeedStream::new(seed, index)).unwrap(),
            sample_scene(&r, SeedStream::new(seed, index)).unwrap()
        );
    }
}
