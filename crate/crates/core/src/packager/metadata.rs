//! JSON metadata stored alongside each response set.

use serde::{Deserialize, Serialize};

use crate::scene::{SceneSpec, Vec3};

/// Scene parameters as written into a corpus file: room size, absorption,
/// speed of sound, microphone and source positions. Numbers are written
/// with full `f64` round-trip precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMetadata {
    #[serde(rename = "L")]
    pub room: [f64; 3],
    pub alpha: f64,
    pub c: f64,
    pub mics: [[f64; 3]; 2],
    pub srcs: [[f64; 3]; 4],
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl From<&SceneSpec> for SceneMetadata {
    fn from(s: &SceneSpec) -> Self {
        Self {
            room: arr(&s.room),
            alpha: s.alpha,
            c: s.c,
            mics: [arr(&s.mics[0]), arr(&s.mics[1])],
            srcs: [
                arr(&s.sources[0]),
                arr(&s.sources[1]),
                arr(&s.sources[2]),
                arr(&s.sources[3]),
            ],
        }
    }
}

impl SceneMetadata {
    /// Rebuilds a scene. Spacing and center come from the microphone pair;
    /// the orientation is a roll-free equivalent of the original one.
    pub fn to_scene(&self) -> SceneSpec {
        SceneSpec::from_positions(
            vec3(&self.room),
            self.alpha,
            self.c,
            [
                vec3(&self.srcs[0]),
                vec3(&self.srcs[1]),
                vec3(&self.srcs[2]),
                vec3(&self.srcs[3]),
            ],
            [vec3(&self.mics[0]), vec3(&self.mics[1])],
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metadata serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE_METADATA: &str = r#"{
        "L": [14.83, 11.49, 3.01],
        "alpha": 0.36,
        "c": 350.5,
        "mics": [[14.141, 2.934, 1.895],
                 [14.224, 3.010, 2.161]],
        "srcs": [[0.811, 5.702, 1.547],
                 [6.658, 4.000, 2.582],
                 [5.340, 9.433, 1.775],
                 [12.164, 8.109, 2.161]]
    }"#;

    #[test]
    fn reference_scene_round_trip() {
        let m = SceneMetadata::from_json(REFERENCE_METADATA).unwrap();
        let text = m.to_json();
        assert!(text.starts_with(r#"{"L":[14.83,11.49,3.01],"alpha":0.36,"c":350.5,"mics":"#));
        let back = SceneMetadata::from_json(&text).unwrap();
        assert_eq!(back, m);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 5);
    }

    #[test]
    fn missing_or_extra_keys_rejected() {
        assert!(SceneMetadata::from_json(r#"{"L":[1,2,3],"alpha":0.3,"c":340}"#).is_err());
        let extra = REFERENCE_METADATA.replacen("\"c\"", "\"x\": 1, \"c\"", 1);
        assert!(SceneMetadata::from_json(&extra).is_err());
    }

    #[test]
    fn scene_round_trip_is_exact() {
        let s = crate::scene::sample_scene(&Default::default(), crate::rng::SeedStream::new(5, 5))
            .unwrap();
        let m = SceneMetadata::from(&s);
        let back = SceneMetadata::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let rebuilt = back.to_scene();
        assert_eq!(rebuilt.sources, s.sources);
        assert_eq!(rebuilt.mics, s.mics);
        assert!((rebuilt.spacing - s.spacing).abs() < 1e-12);
        assert!((rebuilt.mic_center - s.mic_center).norm() < 1e-12);
    }
}
