//! Random shoebox scenes: room, absorption, speed of sound, four sources and
//! a rotated microphone pair.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::{SeedStream, UnitSource};

pub type Vec3 = Vector3<f64>;

/// Clearance kept between every source / array center and the room surfaces.
pub const WALL_MARGIN: f64 = 0.5;

pub const NUM_SOURCES: usize = 4;
pub const NUM_MICS: usize = 2;

/// Sampling intervals for the scene parameters. Lengths in meters, speed of
/// sound in m/s, absorption dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRanges {
    pub lx: (f64, f64),
    pub ly: (f64, f64),
    pub lz: (f64, f64),
    pub alpha: (f64, f64),
    pub c: (f64, f64),
    pub d: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            lx: (5.0, 15.0),
            ly: (5.0, 15.0),
            lz: (3.0, 4.0),
            alpha: (0.2, 0.8),
            c: (340.0, 355.0),
            d: (0.01, 0.30),
        }
    }
}

/// Keys accepted in a ranges config file. Any subset may be given; missing
/// keys keep their default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangesFile {
    lx_min: Option<f64>,
    lx_max: Option<f64>,
    ly_min: Option<f64>,
    ly_max: Option<f64>,
    lz_min: Option<f64>,
    lz_max: Option<f64>,
    alpha_min: Option<f64>,
    alpha_max: Option<f64>,
    c_min: Option<f64>,
    c_max: Option<f64>,
    d_min: Option<f64>,
    d_max: Option<f64>,
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lx", self.lx),
            ("ly", self.ly),
            ("lz", self.lz),
            ("alpha", self.alpha),
            ("c", self.c),
            ("d", self.d),
        ];
        for (name, (lo, hi)) in named {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::Config(format!("{name} range must be finite")));
            }
            if lo >= hi {
                return Err(Error::Config(format!(
                    "{name} range needs min < max (got {lo} >= {hi})"
                )));
            }
            if lo <= 0.0 {
                return Err(Error::Config(format!(
                    "{name} range must be strictly positive (got min {lo})"
                )));
            }
        }
        if self.alpha.1 > 1.0 {
            return Err(Error::Config(format!(
                "alpha range must lie in (0, 1] (got max {})",
                self.alpha.1
            )));
        }
        // Sources and the array center need a non-empty box, and both mics
        // must stay inside the room at any orientation.
        for (name, (lo, _)) in [("lx", self.lx), ("ly", self.ly), ("lz", self.lz)] {
            if lo <= 2.0 * WALL_MARGIN {
                return Err(Error::Config(format!(
                    "{name} min must exceed {} m to leave room for the wall margin",
                    2.0 * WALL_MARGIN
                )));
            }
        }
        if self.d.1 / 2.0 >= WALL_MARGIN {
            return Err(Error::Config(format!(
                "d max must be below {} m so both microphones stay inside the room",
                2.0 * WALL_MARGIN
            )));
        }
        Ok(())
    }

    /// Parses `key = value` lines (`lx_min`, `alpha_max`, `c_min`, ...). Lines
    /// starting with `#` are comments.
    pub fn parse_config(text: &str) -> Result<Self> {
        let file: RangesFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("ranges file: {e}")))?;
        let mut r = Self::default();
        let pick = |slot: &mut (f64, f64), lo: Option<f64>, hi: Option<f64>| {
            if let Some(v) = lo {
                slot.0 = v;
            }
            if let Some(v) = hi {
                slot.1 = v;
            }
        };
        pick(&mut r.lx, file.lx_min, file.lx_max);
        pick(&mut r.ly, file.ly_min, file.ly_max);
        pick(&mut r.lz, file.lz_min, file.lz_max);
        pick(&mut r.alpha, file.alpha_min, file.alpha_max);
        pick(&mut r.c, file.c_min, file.c_max);
        pick(&mut r.d, file.d_min, file.d_max);
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_config(&text)
    }
}

/// One virtual scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// Room dimensions `[Lx, Ly, Lz]`.
    pub room: Vec3,
    pub alpha: f64,
    pub c: f64,
    pub sources: [Vec3; NUM_SOURCES],
    pub mic_center: Vec3,
    pub spacing: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub mics: [Vec3; NUM_MICS],
}

impl SceneSpec {
    /// Builds a scene from explicit microphone positions (as stored in corpus
    /// metadata). Spacing and center follow from the pair; the orientation is
    /// the roll-free rotation that maps the x axis onto the pair direction.
    pub fn from_positions(
        room: Vec3,
        alpha: f64,
        c: f64,
        sources: [Vec3; NUM_SOURCES],
        mics: [Vec3; NUM_MICS],
    ) -> Self {
        let spacing = (mics[1] - mics[0]).norm();
        let mic_center = (mics[0] + mics[1]) / 2.0;
        let (yaw, pitch, roll) = orientation_from_mics(&mics[0], &mics[1]);
        Self {
            room,
            alpha,
            c,
            sources,
            mic_center,
            spacing,
            yaw,
            pitch,
            roll,
            mics,
        }
    }

    /// Checks the geometric invariants every scene must satisfy.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Geometry(format!(
                "absorption {} outside (0, 1]",
                self.alpha
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Geometry(format!("speed of sound {}", self.c)));
        }
        if self.room.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Geometry(format!("room dimensions {:?}", self.room)));
        }
        let inside = |p: &Vec3| (0..3).all(|a| p[a] > 0.0 && p[a] < self.room[a]);
        for (i, s) in self.sources.iter().enumerate() {
            if !inside(s) {
                return Err(Error::Geometry(format!(
                    "source {} outside the room",
                    i + 1
                )));
            }
        }
        for (k, m) in self.mics.iter().enumerate() {
            if !inside(m) {
                return Err(Error::Geometry(format!(
                    "microphone {} outside the room",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// Draws one scene from `ranges` using the stream identified by `seed`.
pub fn sample_scene(ranges: &ParamRanges, seed: SeedStream) -> Result<SceneSpec> {
    ranges.validate()?;
    let mut rng = seed.rng();
    Ok(draw_scene(ranges, &mut rng))
}

/// Same as [`sample_scene`] with a caller-supplied unit source.
pub fn sample_scene_with(ranges: &ParamRanges, unit: &mut impl UnitSource) -> Result<SceneSpec> {
    ranges.validate()?;
    Ok(draw_scene(ranges, unit))
}

// Draw order is part of the corpus format: L, alpha, c, sources 1-4, array
// center, spacing, yaw, pitch, roll.
fn draw_scene(ranges: &ParamRanges, unit: &mut impl UnitSource) -> SceneSpec {
    let room = Vec3::new(
        unit.uniform(ranges.lx.0, ranges.lx.1),
        unit.uniform(ranges.ly.0, ranges.ly.1),
        unit.uniform(ranges.lz.0, ranges.lz.1),
    );
    let alpha = unit.uniform(ranges.alpha.0, ranges.alpha.1);
    let c = unit.uniform(ranges.c.0, ranges.c.1);

    let sources = [
        inner_point(unit, &room),
        inner_point(unit, &room),
        inner_point(unit, &room),
        inner_point(unit, &room),
    ];
    let mic_center = inner_point(unit, &room);
    let spacing = unit.uniform(ranges.d.0, ranges.d.1);
    // Angles live on [0, 2pi); only a forced unit draw of 1 can reach 2pi.
    let mut angle = || {
        let a = unit.uniform(0.0, TAU);
        if a >= TAU {
            0.0
        } else {
            a
        }
    };
    let yaw = angle();
    let pitch = angle();
    let roll = angle();

    let mics = place_mics(&mic_center, spacing, yaw, pitch, roll);
    SceneSpec {
        room,
        alpha,
        c,
        sources,
        mic_center,
        spacing,
        yaw,
        pitch,
        roll,
        mics,
    }
}

fn inner_point(unit: &mut impl UnitSource, room: &Vec3) -> Vec3 {
    Vec3::new(
        unit.uniform(WALL_MARGIN, room.x - WALL_MARGIN),
        unit.uniform(WALL_MARGIN, room.y - WALL_MARGIN),
        unit.uniform(WALL_MARGIN, room.z - WALL_MARGIN),
    )
}

/// `R_x(roll) · R_y(pitch) · R_z(yaw)`.
pub fn rotation(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    #[rustfmt::skip]
    let rx = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, cr, -sr,
        0.0, sr, cr,
    );
    #[rustfmt::skip]
    let ry = Matrix3::new(
        cp, 0.0, sp,
        0.0, 1.0, 0.0,
        -sp, 0.0, cp,
    );
    #[rustfmt::skip]
    let rz = Matrix3::new(
        cy, -sy, 0.0,
        sy, cy, 0.0,
        0.0, 0.0, 1.0,
    );
    rx * ry * rz
}

/// Positions the pair `[-d/2, 0, 0]`, `[+d/2, 0, 0]` rotated by the given
/// angles and translated to `center`.
pub fn place_mics(center: &Vec3, spacing: f64, yaw: f64, pitch: f64, roll: f64) -> [Vec3; 2] {
    let r = rotation(yaw, pitch, roll);
    let u1 = Vec3::new(-spacing / 2.0, 0.0, 0.0);
    let u2 = Vec3::new(spacing / 2.0, 0.0, 0.0);
    [r * u1 + center, r * u2 + center]
}

/// A (yaw, pitch, roll = 0) triple whose rotation maps the x axis onto the
/// direction `m2 - m1`. Angles are wrapped to `[0, 2pi)`.
pub fn orientation_from_mics(m1: &Vec3, m2: &Vec3) -> (f64, f64, f64) {
    let diff = m2 - m1;
    let n = diff.norm();
    if n == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = diff / n;
    let yaw = u.y.clamp(-1.0, 1.0).asin();
    let pitch = (-u.z).atan2(u.x);
    let wrap = |a: f64| {
        let w = a.rem_euclid(TAU);
        if w >= TAU {
            0.0
        } else {
            w
        }
    };
    (wrap(yaw), wrap(pitch), 0.0)
}
