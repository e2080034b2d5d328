//! Joint-space dynamic movement primitives.
//!
//! Per joint, with phase `x` (starting at 1):
//!
//! ```text
//! τ·ẋ = −αx·x
//! τ·ż = α·(β·(g − y) − z) + f(x)
//! τ·ẏ = z
//! f(x) = x·(g − y₀)·Σ wᵢ·ψᵢ(x) / Σ ψᵢ(x),   ψᵢ(x) = exp(−hᵢ·(x − cᵢ)²)
//! ```
//!
//! Centers are the phase values at evenly spaced times over `[0, τ]`, and each
//! width is chosen so that neighbouring kernels cross at 0.5. Integration is
//! semi-implicit Euler, and the fit uses finite differences that are exactly
//! consistent with that integrator, so a demo generated by the rollout itself
//! fits back to zero forcing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::JointVector;

pub const MIN_BASIS: u32 = 2;
pub const MAX_BASIS: u32 = 64;
pub const DEFAULT_REGULARIZATION: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmpParams {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_x: f64,
    pub n_basis: u32,
}

impl Default for DmpParams {
    fn default() -> Self {
        DmpParams {
            alpha: 25.0,
            beta: 25.0 / 4.0,
            alpha_x: 8.0 / 3.0,
            n_basis: 10,
        }
    }
}

/// Parameters of a joint DMP as carried in a skill.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDmpSpec {
    /// `n_basis × 7`, basis-major: `weights[b * 7 + joint]`.
    pub weights: Vec<f64>,
    pub goal: JointVector,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_x: f64,
    pub n_basis: u32,
}

impl JointDmpSpec {
    pub fn params(&self) -> DmpParams {
        DmpParams {
            alpha: self.alpha,
            beta: self.beta,
            alpha_x: self.alpha_x,
            n_basis: self.n_basis,
        }
    }

    pub fn zero_weights(goal: JointVector, tau: f64, params: DmpParams) -> Self {
        JointDmpSpec {
            weights: vec![0.0; params.n_basis as usize * 7],
            goal,
            tau,
            alpha: params.alpha,
            beta: params.beta,
            alpha_x: params.alpha_x,
            n_basis: params.n_basis,
        }
    }

    pub fn weight(&self, basis: usize, joint: usize) -> f64 {
        self.weights[basis * 7 + joint]
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmpError {
    #[error("demonstration is degenerate: {0}")]
    DegenerateDemo(&'static str),
    #[error("n_basis must be in [{MIN_BASIS}, {MAX_BASIS}], got {0}")]
    BasisCount(u32),
}

/// Gaussian kernel centers and widths on the phase variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl Basis {
    pub fn new(n: u32, alpha_x: f64) -> Self {
        let n = n.max(2) as usize;
        let centers: Vec<f64> = (0..n)
            .map(|i| (-alpha_x * i as f64 / (n - 1) as f64).exp())
            .collect();
        let mut widths: Vec<f64> = centers
            .windows(2)
            .map(|w| 4.0 * std::f64::consts::LN_2 / ((w[1] - w[0]) * (w[1] - w[0])))
            .collect();
        widths.push(*widths.last().expect("at least two centers"));
        Basis { centers, widths }
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Normalized kernel activations `ψᵢ(x) / Σ ψ`.
    pub fn activations(&self, x: f64, out: &mut [f64]) {
        let mut sum = 0.0;
        for (i, o) in out.iter_mut().enumerate() {
            let d = x - self.centers[i];
            *o = (-self.widths[i] * d * d).exp();
            sum += *o;
        }
        if sum > 1e-300 {
            out.iter_mut().for_each(|o| *o /= sum);
        } else {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }
}

/// Runtime state of a joint DMP being rolled out.
#[derive(Clone, Debug, PartialEq)]
pub struct DmpRuntime {
    spec: JointDmpSpec,
    basis: Basis,
    y0: JointVector,
    y: JointVector,
    z: JointVector,
    x: f64,
    scratch: Vec<f64>,
}

impl DmpRuntime {
    pub fn new(spec: JointDmpSpec, start: JointVector) -> Self {
        let basis = Basis::new(spec.n_basis, spec.alpha_x);
        let n = spec.n_basis as usize;
        DmpRuntime {
            spec,
            basis,
            y0: start,
            y: start,
            z: JointVector::zeros(),
            x: 1.0,
            scratch: vec![0.0; n],
        }
    }

    pub fn phase(&self) -> f64 {
        self.x
    }

    pub fn goal(&self) -> JointVector {
        self.spec.goal
    }

    pub fn set_goal(&mut self, goal: JointVector) {
        self.spec.goal = goal;
    }

    pub fn position(&self) -> JointVector {
        self.y
    }

    /// Advances by `dt` and returns the new desired position and velocity.
    pub fn step(&mut self, dt: f64) -> (JointVector, JointVector) {
        let DmpRuntime {
            spec,
            basis,
            y0,
            y,
            z,
            x,
            scratch,
        } = self;
        let tau = spec.tau;
        basis.activations(*x, scratch);
        for j in 0..7 {
            let g = spec.goal[j];
            let weighted: f64 = scratch
                .iter()
                .enumerate()
                .map(|(b, psi)| psi * spec.weights[b * 7 + j])
                .sum();
            let f = *x * (g - y0[j]) * weighted;
            let zdot = (spec.alpha * (spec.beta * (g - y[j]) - z[j]) + f) / tau;
            z[j] += zdot * dt;
            y[j] += z[j] / tau * dt;
        }
        *x += -spec.alpha_x * *x / tau * dt;
        (*y, *z / tau)
    }
}

/// Fits forcing weights to a uniformly sampled joint demonstration.
///
/// `tau` becomes the demo duration and the goal its final sample.
pub fn dmp_fit(
    samples: &[JointVector],
    dt: f64,
    params: &DmpParams,
    regularization: f64,
) -> Result<JointDmpSpec, DmpError> {
    if !(MIN_BASIS..=MAX_BASIS).contains(&params.n_basis) {
        return Err(DmpError::BasisCount(params.n_basis));
    }
    if samples.len() < 10 {
        return Err(DmpError::DegenerateDemo("fewer than 10 samples"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DmpError::DegenerateDemo("zero duration"));
    }
    if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(DmpError::DegenerateDemo("non-finite sample"));
    }
    let n = samples.len();
    let tau = (n - 1) as f64 * dt;
    let y0 = samples[0];
    let goal = samples[n - 1];
    let nb = params.n_basis as usize;
    let basis = Basis::new(params.n_basis, params.alpha_x);

    // One equation per integrator step n -> n+1.
    let rows = n - 1;
    let mut phase = Vec::with_capacity(rows);
    let mut x = 1.0;
    for _ in 0..rows {
        phase.push(x);
        x += -params.alpha_x * x / tau * dt;
    }
    let mut acts = DMatrix::<f64>::zeros(rows, nb);
    let mut buf = vec![0.0; nb];
    for (r, &xr) in phase.iter().enumerate() {
        basis.activations(xr, &mut buf);
        for b in 0..nb {
            acts[(r, b)] = buf[b] * xr;
        }
    }

    let mut weights = vec![0.0; nb * 7];
    for j in 0..7 {
        let scale = goal[j] - y0[j];
        let mut target = DVector::<f64>::zeros(rows);
        for r in 0..rows {
            let prev = if r == 0 {
                samples[0][j]
            } else {
                samples[r - 1][j]
            };
            let cur = samples[r][j];
            let next = samples[r + 1][j];
            let vel = (cur - prev) / dt;
            let acc = (next - 2.0 * cur + prev) / (dt * dt);
            target[r] =
                tau * tau * acc - params.alpha * (params.beta * (goal[j] - cur) - tau * vel);
        }
        let features = &acts * scale;
        let lhs =
            features.transpose() * &features + DMatrix::<f64>::identity(nb, nb) * regularization;
        let rhs = features.transpose() * target;
        let w = lhs
            .cholesky()
            .map(|c| c.solve(&rhs))
            .unwrap_or_else(|| DVector::zeros(nb));
        for b in 0..nb {
            weights[b * 7 + j] = w[b];
        }
    }
    Ok(JointDmpSpec {
        weights,
        goal,
        tau,
        alpha: params.alpha,
        beta: params.beta,
        alpha_x: params.alpha_x,
        n_basis: params.n_basis,
    })
}

/// Rolls a DMP out from `start` for `steps` ticks, returning every position
/// including the start.
pub fn rollout(spec: &JointDmpSpec, start: JointVector, dt: f64, steps: usize) -> Vec<JointVector> {
    let mut rt = DmpRuntime::new(spec.clone(), start);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start);
    for _ in 0..steps {
        out.push(rt.step(dt).0);
    }
    out
}
