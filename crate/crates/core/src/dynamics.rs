//! Piecewise-constant time evolution and state-transfer fidelity for the
//! Landau-Zener model and its three-level generalization.
//!
//! Units: ħ = 1, energies in units of the gap δ, times in units of 1/δ.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MctError, Result};
use crate::linalg::{expm_hermitian, ComplexMatrix};

/// Fidelities may leave [0, 1] by at most this much through round-off.
pub const FIDELITY_ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelId {
    /// Two-level `H0 = (δ/2)σx`, `Hc = σz`.
    #[serde(rename = "LZ")]
    Lz,
    /// Three-level chain with couplings Δ_A, Δ_B and detuning -δ on level 2.
    #[serde(rename = "GENERALIZED_LZ3")]
    GeneralizedLz3,
}

impl ModelId {
    pub fn dim(self) -> usize {
        match self {
            ModelId::Lz => 2,
            ModelId::GeneralizedLz3 => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Lz => "LZ",
            ModelId::GeneralizedLz3 => "GENERALIZED_LZ3",
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = MctError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "LZ" => Ok(ModelId::Lz),
            "GENERALIZED_LZ3" | "GLZ3" | "GENERALIZED_LZ" => Ok(ModelId::GeneralizedLz3),
            other => Err(MctError::param(format!("unknown model id {other:?}"))),
        }
    }
}

/// Drift/control Hamiltonians plus the transfer states.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    pub model_id: ModelId,
    pub h0: ComplexMatrix,
    pub hc: ComplexMatrix,
    pub initial_state: Vec<Complex64>,
    pub target_state: Vec<Complex64>,
    pub delta: f64,
    pub delta_a: f64,
    pub delta_b: f64,
}

impl ControlProblem {
    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    /// `H0 + eps * Hc`.
    pub fn hamiltonian(&self, eps: f64) -> ComplexMatrix {
        self.h0 + self.hc.scale(eps)
    }

    /// Replaces the transfer states with computational basis states.
    pub fn with_transfer(mut self, initial: usize, target: usize) -> Result<Self> {
        let n = self.dim();
        if initial >= n || target >= n {
            return Err(MctError::param(format!(
                "basis states {initial} -> {target} out of range for a {n}-level model"
            )));
        }
        self.initial_state = basis(n, initial);
        self.target_state = basis(n, target);
        Ok(self)
    }
}

fn basis(n: usize, k: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    v[k] = Complex64::new(1.0, 0.0);
    v
}

/// Constructs the model matrices. For LZ the Δ parameters are ignored.
///
/// The three-level model transfers `|0⟩ → |2⟩` unless overridden with
/// [`ControlProblem::with_transfer`].
pub fn build_problem(model_id: ModelId, delta: f64, delta_a: f64, delta_b: f64) -> Result<ControlProblem> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(MctError::param(format!("energy gap must be positive, got {delta}")));
    }
    if !delta_a.is_finite() || !delta_b.is_finite() {
        return Err(MctError::param("couplings must be finite"));
    }
    let problem = match model_id {
        ModelId::Lz => ControlProblem {
            model_id,
            h0: ComplexMatrix::from_real_rows(&[vec![0.0, 0.5 * delta], vec![0.5 * delta, 0.0]]),
            hc: ComplexMatrix::diag(&[1.0, -1.0]),
            initial_state: basis(2, 0),
            target_state: basis(2, 1),
            delta,
            delta_a,
            delta_b,
        },
        ModelId::GeneralizedLz3 => ControlProblem {
            model_id,
            h0: ComplexMatrix::from_real_rows(&[
                vec![0.0, 0.5 * delta_a, 0.0],
                vec![0.5 * delta_a, 0.0, 0.5 * delta_b],
                vec![0.0, 0.5 * delta_b, -delta],
            ]),
            hc: ComplexMatrix::diag(&[1.0, 0.0, 1.0]),
            initial_state: basis(3, 0),
            target_state: basis(3, 2),
            delta,
            delta_a,
            delta_b,
        },
    };
    Ok(problem)
}

/// Piecewise-constant control: `amplitudes[k]` acts on the k-th of
/// `amplitudes.len()` equal segments of the total time.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub amplitudes: Vec<f64>,
    pub total_time: f64,
}

impl Protocol {
    pub fn new(amplitudes: Vec<f64>, total_time: f64) -> Self {
        Self { amplitudes, total_time }
    }

    pub fn n_segments(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn segment_duration(&self) -> f64 {
        self.total_time / self.amplitudes.len() as f64
    }
}

/// `exp(-i h dt)`.
pub fn segment_propagator(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    expm_hermitian(h, dt)
}

/// Full propagator `U = U_N ... U_2 U_1`, segment 1 acting first.
pub fn propagate(problem: &ControlProblem, protocol: &Protocol) -> Result<ComplexMatrix> {
    if protocol.amplitudes.is_empty() {
        return Err(MctError::param("protocol needs at least one segment"));
    }
    if !(protocol.total_time > 0.0) || !protocol.total_time.is_finite() {
        return Err(MctError::param(format!(
            "total time must be positive, got {}",
            protocol.total_time
        )));
    }
    let dt = protocol.segment_duration();
    let mut u = ComplexMatrix::identity(problem.dim());
    for &eps in &protocol.amplitudes {
        u = segment_propagator(&problem.hamiltonian(eps), dt)? * u;
    }
    Ok(u)
}

/// `|⟨f|U|i⟩|²`.
pub fn fidelity(problem: &ControlProblem, protocol: &Protocol) -> Result<f64> {
    let u = propagate(problem, protocol)?;
    transfer_fidelity(problem, &u)
}

pub(crate) fn transfer_fidelity(problem: &ControlProblem, u: &ComplexMatrix) -> Result<f64> {
    let evolved = u.mul_vec(&problem.initial_state);
    let amp: Complex64 = problem
        .target_state
        .iter()
        .zip(&evolved)
        .map(|(f, psi)| f.conj() * psi)
        .sum();
    clamp_fidelity(amp.norm_sqr())
}

pub(crate) fn clamp_fidelity(f: f64) -> Result<f64> {
    if !f.is_finite() || !(-FIDELITY_ROUNDOFF..=1.0 + FIDELITY_ROUNDOFF).contains(&f) {
        return Err(MctError::Numeric(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Closed-form LZ fidelity for a constant control `eps` held for `t`:
/// `(δ²/Ω²) sin²(Ω t / 2)` with `Ω = sqrt(δ² + 4 eps²)`.
pub fn rabi_oracle(delta: f64, eps: f64, t: f64) -> f64 {
    let omega = (delta * delta + 4.0 * eps * eps).sqrt();
    let s = (0.5 * omega * t).sin();
    delta * delta / (omega * omega) * s * s
}

/// Minimum control time `π/δ` of the LZ transfer.
pub fn analytic_mct(delta: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(MctError::param(format!("energy gap must be positive, got {delta}")));
    }
    Ok(PI / delta)
}
