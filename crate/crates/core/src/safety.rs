//! Virtual walls: axis-aligned keep-out boxes, an optional keep-in workspace
//! box and joint position limits, checked against the end-effector box of the
//! commanded next state every tick.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::kinematics::{ArmModel, JointVector, Pose};

/// Axis-aligned box in the base frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
}

impl Aabb {
    pub fn new(center: [f64; 3], half_extents: [f64; 3]) -> Self {
        Aabb {
            center: Vector3::from(center),
            half_extents: Vector3::from(half_extents),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.center.iter().all(|v| v.is_finite())
            && self.half_extents.iter().all(|v| v.is_finite() && *v > 0.0)
    }

    /// `true` when `inner` lies entirely inside `self` (faces may touch).
    pub fn contains(&self, inner: &Aabb) -> bool {
        (0..3).all(|i| {
            (inner.center[i] - self.center[i]).abs() + inner.half_extents[i] <= self.half_extents[i]
        })
    }

    pub fn contains_point(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| (p[i] - self.center[i]).abs() <= self.half_extents[i])
    }
}

/// Closed overlap test: boxes whose faces touch intersect.
pub fn boxes_intersect(a: &Aabb, b: &Aabb) -> bool {
    (0..3).all(|i| (a.center[i] - b.center[i]).abs() <= a.half_extents[i] + b.half_extents[i])
}

/// Smallest per-axis overlap of two boxes; 0 when they are apart.
pub fn penetration_depth(a: &Aabb, b: &Aabb) -> f64 {
    (0..3)
        .map(|i| a.half_extents[i] + b.half_extents[i] - (a.center[i] - b.center[i]).abs())
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    pub enabled: bool,
    pub walls: Vec<Aabb>,
    pub workspace: Option<Aabb>,
    pub ee_half_extents: Vector3<f64>,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            enabled: true,
            walls: Vec::new(),
            workspace: None,
            ee_half_extents: Vector3::new(0.05, 0.05, 0.05),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Wall(usize),
    Workspace,
    JointLimit(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl SafetyConfig {
    pub fn ee_box(&self, ee: &Pose) -> Aabb {
        Aabb {
            center: ee.position,
            half_extents: self.ee_half_extents,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (i, w) in self.walls.iter().enumerate() {
            if !w.is_valid() {
                return Err(ConfigError::invalid(
                    &format!("safety.walls[{i}]"),
                    "half_extents must be positive and finite",
                ));
            }
        }
        if let Some(ws) = &self.workspace {
            if !ws.is_valid() {
                return Err(ConfigError::invalid(
                    "safety.workspace",
                    "half_extents must be positive and finite",
                ));
            }
        }
        if !self
            .ee_half_extents
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            return Err(ConfigError::invalid(
                "safety.ee_half_extents",
                "must be positive and finite",
            ));
        }
        Ok(())
    }

    /// Parses a document holding a `[safety]` table.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        #[derive(Deserialize)]
        struct Doc {
            safety: SafetyTable,
        }
        let doc: Doc = toml::from_str(text)?;
        doc.safety.into_config()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text).map_err(|e| e.in_file(path))
    }
}

/// TOML shape of the `safety` table.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyTable {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default)]
    pub workspace: Option<BoxTable>,
    #[serde(default)]
    pub walls: Vec<BoxTable>,
    #[serde(default)]
    pub ee_half_extents: Option<[f64; 3]>,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoxTable {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
}

impl SafetyTable {
    pub fn into_config(self) -> Result<SafetyConfig, ConfigError> {
        let cfg = SafetyConfig {
            enabled: self.enabled,
            walls: self
                .walls
                .iter()
                .map(|b| Aabb::new(b.center, b.half_extents))
                .collect(),
            workspace: self.workspace.map(|b| Aabb::new(b.center, b.half_extents)),
            ee_half_extents: self
                .ee_half_extents
                .map(Vector3::from)
                .unwrap_or_else(|| SafetyConfig::default().ee_half_extents),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Verdict for a commanded next state.
pub fn check_safety(
    cfg: &SafetyConfig,
    ee_pose: &Pose,
    q: &JointVector,
    model: &ArmModel,
) -> Result<(), SafetyViolation> {
    if !cfg.enabled {
        return Ok(());
    }
    for i in 0..7 {
        if q[i] < model.q_min[i] || q[i] > model.q_max[i] {
            return Err(SafetyViolation {
                kind: ViolationKind::JointLimit(i),
                detail: format!(
                    "joint {i} at {:.4} rad outside [{:.4}, {:.4}]",
                    q[i], model.q_min[i], model.q_max[i]
                ),
            });
        }
    }
    let ee = cfg.ee_box(ee_pose);
    for (i, wall) in cfg.walls.iter().enumerate() {
        if boxes_intersect(&ee, wall) {
            return Err(SafetyViolation {
                kind: ViolationKind::Wall(i),
                detail: format!("end-effector box touches wall {i}"),
            });
        }
    }
    if let Some(ws) = &cfg.workspace {
        if !ws.contains(&ee) {
            return Err(SafetyViolation {
                kind: ViolationKind::Workspace,
                detail: "end-effector box leaves the workspace".to_string(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersect_cases() {
        let a = Aabb::new([0.0; 3], [0.4; 3]);
        assert!(boxes_intersect(&a, &a));
        let b = Aabb::new([1.0, 0.0, 0.0], [0.4; 3]);
        assert!(!boxes_intersect(&a, &b));
        let c = Aabb::new([0.8, 0.0, 0.0], [0.4; 3]);
        assert!(boxes_intersect(&a, &c));
    }

    #[test]
    fn no_walls_is_ok() {
        let m = ArmModel::panda();
        let cfg = SafetyConfig::default();
        assert!(check_safety(&cfg, &Pose::identity(), &m.q_home, &m).is_ok());
    }

    #[test]
    fn wall_and_workspace_and_limits() {
        let m = ArmModel::panda();
        let mut cfg = SafetyConfig::default();
        cfg.walls.push(Aabb::new([0.5, 0.0, 0.3], [0.1; 3]));
        let inside = Pose::new(Vector3::new(0.45, 0.0, 0.3), Default::default());
        let v = check_safety(&cfg, &inside, &m.q_home, &m).unwrap_err();
        assert_eq!(v.kind, ViolationKind::Wall(0));

        cfg.workspace = Some(Aabb::new([0.0, 0.0, 0.5], [0.3; 3]));
        let far = Pose::new(Vector3::new(0.0, 0.0, 0.9), Default::default());
        let v = check_safety(&cfg, &far, &m.q_home, &m).unwrap_err();
        assert_eq!(v.kind, ViolationKind::Workspace);

        let mut q = m.q_home;
        q[3] = 0.5;
        let home = Pose::new(Vector3::new(0.0, 0.0, 0.5), Default::default());
        let v = check_safety(&cfg, &home, &q, &m).unwrap_err();
        assert_eq!(v.kind, ViolationKind::JointLimit(3));

        cfg.enabled = false;
        assert!(check_safety(&cfg, &inside, &q, &m).is_ok());
    }

    #[test]
    fn parses_table() {
        let cfg = SafetyConfig::from_toml_str(
            r#"
            [safety]
            enabled = true
            ee_half_extents = [0.04, 0.04, 0.06]
            workspace = { center = [0.4, 0.0, 0.4], half_extents = [0.5, 0.6, 0.4] }
            [[safety.walls]]
            center = [0.5, 0.0, 0.3]
            half_extents = [0.1, 0.1, 0.1]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.walls.len(), 1);
        assert!(cfg.workspace.is_some());
        assert_eq!(cfg.ee_half_extents, Vector3::new(0.04, 0.04, 0.06));

        let err = SafetyConfig::from_toml_str(
            "[safety]\n[[safety.walls]]\ncenter=[0,0,0]\nhalf_extents=[0.1,0.0,0.1]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("safety.walls[0]"), "{err}");
    }
}
