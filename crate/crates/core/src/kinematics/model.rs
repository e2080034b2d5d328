use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{JointVector, Pose};
use crate::config::ConfigError;

/// One row of modified Denavit–Hartenberg parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub theta_offset: f64,
}

/// Kinematic and plant description of a 7-DOF revolute arm.
///
/// Immutable once loaded; share it behind an `Arc` across threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub joints: [DhRow; 7],
    pub ee_offset: Pose,
    pub q_min: JointVector,
    pub q_max: JointVector,
    pub dq_max: JointVector,
    pub tau_max: JointVector,
    pub inertia: JointVector,
    pub viscous_friction: JointVector,
    /// Configuration the simulated arm starts in.
    pub q_home: JointVector,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmFile {
    arm: ArmTable,
    ee_offset: EeTable,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmTable {
    dh_a: Vec<f64>,
    dh_d: Vec<f64>,
    dh_alpha: Vec<f64>,
    dh_theta_offset: Vec<f64>,
    q_min: Vec<f64>,
    q_max: Vec<f64>,
    dq_max: Vec<f64>,
    tau_max: Vec<f64>,
    inertia: Vec<f64>,
    viscous_friction: Vec<f64>,
    #[serde(default)]
    q_home: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EeTable {
    position: Vec<f64>,
    quaternion_wxyz: Vec<f64>,
}

fn seven(key: &str, v: &[f64]) -> Result<JointVector, ConfigError> {
    if v.len() != 7 {
        return Err(ConfigError::invalid(
            key,
            format!("expected 7 values, found {}", v.len()),
        ));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(ConfigError::invalid(
            key,
            format!("entry {i} is not finite"),
        ));
    }
    Ok(JointVector::from_column_slice(v))
}

impl ArmModel {
    /// The Panda-like parameter set shipped in `config/panda.toml`.
    pub fn panda() -> Self {
        Self::from_toml_str(include_str!("../../../../config/panda.toml"))
            .expect("bundled arm config is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text).map_err(|e| e.in_file(path))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ArmFile = toml::from_str(text)?;
        let a = seven("arm.dh_a", &file.arm.dh_a)?;
        let d = seven("arm.dh_d", &file.arm.dh_d)?;
        let alpha = seven("arm.dh_alpha", &file.arm.dh_alpha)?;
        let offset = seven("arm.dh_theta_offset", &file.arm.dh_theta_offset)?;
        let joints = std::array::from_fn(|i| DhRow {
            a: a[i],
            d: d[i],
            alpha: alpha[i],
            theta_offset: offset[i],
        });
        let pos = &file.ee_offset.position;
        if pos.len() != 3 {
            return Err(ConfigError::invalid(
                "ee_offset.position",
                format!("expected 3 values, found {}", pos.len()),
            ));
        }
        let quat = &file.ee_offset.quaternion_wxyz;
        if quat.len() != 4 {
            return Err(ConfigError::invalid(
                "ee_offset.quaternion_wxyz",
                format!("expected 4 values, found {}", quat.len()),
            ));
        }
        let ee_offset = Pose::from_wxyz(
            [pos[0], pos[1], pos[2]],
            [quat[0], quat[1], quat[2], quat[3]],
        )
        .ok_or_else(|| {
            ConfigError::invalid("ee_offset", "position or quaternion degenerate".to_string())
        })?;
        let q_min = seven("arm.q_min", &file.arm.q_min)?;
        let q_max = seven("arm.q_max", &file.arm.q_max)?;
        let q_home = match &file.arm.q_home {
            Some(v) => seven("arm.q_home", v)?,
            None => (q_min + q_max) * 0.5,
        };
        let model = ArmModel {
            joints,
            ee_offset,
            q_min,
            q_max,
            dq_max: seven("arm.dq_max", &file.arm.dq_max)?,
            tau_max: seven("arm.tau_max", &file.arm.tau_max)?,
            inertia: seven("arm.inertia", &file.arm.inertia)?,
            viscous_friction: seven("arm.viscous_friction", &file.arm.viscous_friction)?,
            q_home,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for i in 0..7 {
            if self.q_min[i] >= self.q_max[i] {
                return Err(ConfigError::invalid(
                    "arm.q_min",
                    format!("joint {i}: min {} >= max {}", self.q_min[i], self.q_max[i]),
                ));
            }
        }
        let positive = [
            ("arm.dq_max", &self.dq_max),
            ("arm.tau_max", &self.tau_max),
            ("arm.inertia", &self.inertia),
            ("arm.viscous_friction", &self.viscous_friction),
        ];
        for (key, v) in positive {
            if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(ConfigError::invalid(
                    key,
                    format!("joint {i}: must be positive and finite"),
                ));
            }
        }
        if !self.within_position_limits(&self.q_home) {
            return Err(ConfigError::invalid(
                "arm.q_home",
                "outside position limits".to_string(),
            ));
        }
        Ok(())
    }

    pub fn within_position_limits(&self, q: &JointVector) -> bool {
        (0..7).all(|i| q[i] >= self.q_min[i] && q[i] <= self.q_max[i])
    }

    /// Zero-length chain with every joint rotating about base z. Handy in tests.
    pub fn zero_geometry() -> Self {
        let row = DhRow {
            a: 0.0,
            d: 0.0,
            alpha: 0.0,
            theta_offset: 0.0,
        };
        let mut m = Self::panda();
        m.joints = [row; 7];
        m.ee_offset = Pose::identity();
        m.q_min = JointVector::repeat(-10.0);
        m.q_max = JointVector::repeat(10.0);
        m.q_home = JointVector::zeros();
        m
    }
}
