//! Scene configuration files and binary frame records.

mod config;
mod frame;

use thiserror::Error;

pub use config::{
    BlockConfig, DomainConfig, OutputConfig, ParamsConfig, PhaseConfig, PlaneConfig, SceneConfig, ScopeConfig, ShapeConfig,
};
pub use frame::{FrameRecord, FRAME_VERSION};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a frame file (bad magic)")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch (stored {stored:?}, computed {computed:#010x})")]
    Crc { stored: Option<u32>, computed: u32 },
    #[error("malformed frame: {0}")]
    Malformed(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    const MINIMAL: &str = r#"{
        "domain": {"box": {"min": [0, 0, 0], "max": [1, 1, 1]}},
        "phases": [{"id": 7, "density": 1000}],
        "blocks": [{"shape": {"box": {"min": [0.4, 0.4, 0.4], "max": [0.5, 0.5, 0.5]}}, "spacing": 0.1, "phase": 7}]
    }"#;

    #[test]
    fn minimal_scene_has_one_particle() {
        let cfg = SceneConfig::from_json(MINIMAL).unwrap();
        let (sim, state) = cfg.build().unwrap();
        assert_eq!(state.len(), 1);
        assert!((state.positions[0] - Vec3::splat(0.45)).length() < 1e-15);
        assert!((state.nu[0] - 1e-3).abs() < 1e-18);
        assert_eq!(sim.planes.len(), 6);
    }

    #[test]
    fn missing_phase_names_the_field() {
        let text = MINIMAL.replace("\"phase\": 7", "\"phase\": 3");
        match SceneConfig::from_json(&text) {
            Err(ConfigError::Field { field, .. }) => assert_eq!(field, "blocks[0].phase"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = SceneConfig::from_json("{\n  \"domain\": ,\n}").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn frame_round_trip_and_corruption() {
        let f = FrameRecord {
            step: 3,
            time: 0.015,
            positions: vec![Vec3::new(0.1, 0.2, 0.3), Vec3::splat(-1.0)],
            velocities: vec![Vec3::X, Vec3::new(f64::MIN_POSITIVE, 0.0, -0.0)],
            psi: vec![1e-3, 2e-3],
            volumes: vec![1e-4, 1e-4],
            areas: vec![0.0, 3.5e-3],
            phase: vec![0, 1],
            worst_rel_error: 4e-3,
            newton_iters: 2,
            wall_ms: 0.0,
        };
        let bytes = f.to_bytes().unwrap();
        assert_eq!(bytes.len(), FrameRecord::encoded_len(2));
        let g = FrameRecord::from_bytes(&bytes).unwrap();
        assert_eq!(g.to_bytes().unwrap(), bytes);
        assert!(matches!(
            FrameRecord::from_bytes(&bytes[..bytes.len() - 9]),
            Err(FrameError::Crc { .. })
        ));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(FrameRecord::from_bytes(&flipped), Err(FrameError::Crc { .. })));
        assert!(matches!(FrameRecord::from_bytes(b"PNG\0\0\0\0\0"), Err(FrameError::BadMagic)));
    }
}
