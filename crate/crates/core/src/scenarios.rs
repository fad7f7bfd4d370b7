//! Scripted user inputs: piecewise-constant end-effector twists applied from
//! random collision-free start configurations.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::Twist;
use crate::error::{Error, Result};
use crate::robot::{forward_kinematics, sphere_centers, JointConfig, JointLimits, RobotGeometry};
use crate::world::Esdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub twist: Twist,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub id: usize,
    pub initial: JointConfig,
    pub segments: Vec<Segment>,
}

impl Movement {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Twist active at time `t`; the last segment stays active past the end.
    pub fn twist_at(&self, t: f64) -> Twist {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration;
            if t < end - 1e-9 {
                return s.twist;
            }
        }
        self.segments.last().map_or([0.0; 3], |s| s.twist)
    }

    /// Number of control cycles needed to cover the movement.
    pub fn ticks(&self, ts: f64) -> usize {
        (self.duration() / ts).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementSet {
    pub seed: u64,
    pub environment: String,
    pub movements: Vec<Movement>,
}

impl MovementSet {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.movements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.movements.is_empty()
    }

    /// The first `n` movements.
    pub fn truncated(&self, n: usize) -> Self {
        Self { movements: self.movements.iter().take(n).cloned().collect(), ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_mov: usize,
    pub n_segments: usize,
    /// Total movement duration (s).
    pub duration: f64,
    pub max_tries: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { n_mov: 40, n_segments: 2, duration: 20.0, max_tries: 1000 }
    }
}

/// Every sphere at least `clearance` inside free space, and inside the map.
pub fn is_collision_free(q: &JointConfig, geom: &RobotGeometry, esdf: &Esdf, clearance: f64) -> bool {
    sphere_centers(q, geom).into_iter().all(|c| {
        let d = esdf.query(c);
        !d.out_of_map && d.distance >= clearance
    })
}

pub fn generate_movements(
    seed: u64,
    cfg: &GeneratorConfig,
    environment: &str,
    esdf: &Esdf,
    geom: &RobotGeometry,
    limits: &JointLimits,
) -> Result<MovementSet> {
    if cfg.n_mov == 0 || cfg.n_segments == 0 {
        return Err(Error::InvalidConfig("n_mov and n_segments must be at least 1".into()));
    }
    if !(cfg.duration > 0.0) {
        return Err(Error::InvalidConfig("movement duration must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vmax = limits.ee_speed_max;
    let seg_duration = cfg.duration / cfg.n_segments as f64;
    let mut movements = Vec::with_capacity(cfg.n_mov);
    for id in 0..cfg.n_mov {
        let mut initial = None;
        for _ in 0..cfg.max_tries {
            let q = JointConfig::from_array(std::array::from_fn(|j| {
                rng.random_range(limits.position_min[j]..=limits.position_max[j])
            }));
            if is_collision_free(&q, geom, esdf, geom.sphere_radius) {
                initial = Some(q);
                break;
            }
        }
        let initial = initial.ok_or(Error::TooCluttered(cfg.max_tries))?;
        let segments = (0..cfg.n_segments)
            .map(|_| {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let level = rng.random_range(1..=3u32);
                let speed = level as f64 / 3.0 * vmax;
                Segment { twist: [speed * phi.cos(), speed * phi.sin(), 0.0], duration: seg_duration }
            })
            .collect();
        movements.push(Movement { id, initial, segments });
    }
    Ok(MovementSet { seed, environment: environment.to_string(), movements })
}

/// One row per movement: start pose and the segment velocity vectors.
pub fn describe(set: &MovementSet, geom: &RobotGeometry) -> String {
    let mut out = String::new();
    for m in &set.movements {
        let p = forward_kinematics(&m.initial, geom);
        let _ = write!(out, "{:>3}  start ({:+.3}, {:+.3}, {:+.3})", m.id, p.x, p.y, p.theta);
        for s in &m.segments {
            let _ = write!(out, "  [{:+.3}, {:+.3}] x {:.1}s", s.twist[0], s.twist[1], s.duration);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::EnvironmentSpec;

    fn setup() -> (Esdf, RobotGeometry, JointLimits) {
        let esdf = Esdf::build(&EnvironmentSpec::operating_room().rasterize().unwrap()).unwrap();
        (esdf, RobotGeometry::default(), JointLimits::default())
    }

    #[test]
    fn default_corpus_shape() {
        let (esdf, geom, lim) = setup();
        let set = generate_movements(1, &GeneratorConfig::default(), "default", &esdf, &geom, &lim).unwrap();
        assert_eq!(set.len(), 40);
        let levels = [0.2, 0.4, 0.6];
        for m in &set.movements {
            assert_eq!(m.segments.len(), 2);
            assert!((m.duration() - 20.0).abs() < 1e-12);
            assert!(m.segments.iter().all(|s| s.duration == 10.0));
            assert!(is_collision_free(&m.initial, &geom, &esdf, 0.4));
            for s in &m.segments {
                let v = s.twist[0].hypot(s.twist[1]);
                assert!(levels.iter().any(|l| (v - l).abs() < 1e-12), "{v}");
                assert_eq!(s.twist[2], 0.0);
            }
        }
        let again = generate_movements(1, &GeneratorConfig::default(), "default", &esdf, &geom, &lim).unwrap();
        assert_eq!(set, again);
        let other = generate_movements(2, &GeneratorConfig::default(), "default", &esdf, &geom, &lim).unwrap();
        assert_ne!(set, other);
    }

    #[test]
    fn twist_lookup_across_segments() {
        let m = Movement {
            id: 0,
            initial: JointConfig::default(),
            segments: vec![
                Segment { twist: [0.1, 0.0, 0.0], duration: 10.0 },
                Segment { twist: [0.0, 0.2, 0.0], duration: 10.0 },
            ],
        };
        assert_eq!(m.twist_at(0.0), [0.1, 0.0, 0.0]);
        assert_eq!(m.twist_at(199.0 * 0.05), [0.1, 0.0, 0.0]);
        assert_eq!(m.twist_at(200.0 * 0.05), [0.0, 0.2, 0.0]);
        assert_eq!(m.twist_at(25.0), [0.0, 0.2, 0.0]);
        assert_eq!(m.ticks(0.05), 400);
    }

    #[test]
    fn cluttered_environment_errors() {
        let mut spec = EnvironmentSpec::operating_room();
        spec.obstacles.push(crate::world::Rect::new("block", [-4.0, -4.0], [4.0, 1.9]));
        let esdf = Esdf::build(&spec.rasterize().unwrap()).unwrap();
        let cfg = GeneratorConfig { n_mov: 1, max_tries: 50, ..Default::default() };
        let err = generate_movements(3, &cfg, "blocked", &esdf, &RobotGeometry::default(), &JointLimits::default());
        assert!(matches!(err, Err(Error::TooCluttered(50))));
    }

    #[test]
    fn describe_rows() {
        let (esdf, geom, lim) = setup();
        let empty = MovementSet { seed: 0, environment: "default".into(), movements: vec![] };
        assert_eq!(describe(&empty, &geom), "");
        let one = generate_movements(5, &GeneratorConfig { n_mov: 1, ..Default::default() }, "default", &esdf, &geom, &lim).unwrap();
        let text = describe(&one, &geom);
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.matches('[').count(), 2);
    }

    #[test]
    fn json_round_trip() {
        let (esdf, geom, lim) = setup();
        let set = generate_movements(4, &GeneratorConfig { n_mov: 3, ..Default::default() }, "default", &esdf, &geom, &lim).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.json");
        set.save(&path).unwrap();
        assert_eq!(MovementSet::load(&path).unwrap(), set);
    }
}
