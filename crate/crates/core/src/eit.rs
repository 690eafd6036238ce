//! Conditional reflectivity of the cascade EIT scheme.
//!
//! The probe couples |g⟩ → |e⟩ with detuning δ, the control Ω_p couples
//! |e⟩ → |r⟩ with two-photon detuning δ_r, and an excited ancilla shifts the
//! Rydberg level by V. Collective effects enter through Δ and Γ.

use faer::linalg::solvers::Solve;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EitParameters {
    /// Probe detuning δ.
    pub delta: f64,
    /// Cooperative shift Δ.
    pub shift: f64,
    /// Cooperative decay correction Γ.
    pub decay: f64,
    /// Two-photon detuning δ_r.
    pub delta_r: f64,
    /// Rydberg dephasing γ_r.
    pub gamma_r: f64,
    /// Control Rabi frequency Ω_p.
    pub omega_p: f64,
    /// Ancilla-induced Rydberg shift V.
    pub v: f64,
}

impl Default for EitParameters {
    fn default() -> Self {
        EitParameters {
            delta: 0.0,
            shift: 0.0,
            decay: 0.0,
            delta_r: 0.0,
            gamma_r: 0.0,
            omega_p: 1.0,
            v: 0.0,
        }
    }
}

impl EitParameters {
    pub fn validate(&self) -> Result<()> {
        let all = [self.delta, self.shift, self.decay, self.delta_r, self.gamma_r, self.omega_p, self.v];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("EIT parameters must be finite"));
        }
        if self.gamma_r < 0.0 {
            return Err(Error::invalid(format!("gamma_r must be non-negative, got {}", self.gamma_r)));
        }
        if self.decay <= -1.0 {
            return Err(Error::invalid(format!("total linewidth 1 + Gamma must be positive, got Gamma = {}", self.decay)));
        }
        Ok(())
    }

    /// Half the total collective linewidth, (γ + Γ)/2.
    pub fn half_width(&self) -> f64 {
        0.5 * (1.0 + self.decay)
    }

    fn a(&self) -> C64 {
        C64::new(self.half_width(), -(self.delta - self.shift))
    }

    fn b(&self) -> C64 {
        C64::new(0.5 * self.gamma_r, -(self.delta_r + self.v))
    }
}

/// Steady-state probe coherence ρ_eg for probe drive Ω_k.
pub fn eit_coherence(p: &EitParameters, omega_k: C64) -> Result<C64> {
    p.validate()?;
    let b = p.b();
    let den = p.a() * b + p.omega_p * p.omega_p;
    if den == C64::new(0.0, 0.0) {
        return Err(Error::Singularity("EIT denominator vanishes".into()));
    }
    Ok(I * omega_k * b / den)
}

/// Linear steady state of the three-level amplitude equations, solved
/// numerically as an independent check of [`eit_coherence`]:
///
/// ```text
/// ċ_e = −((γ+Γ)/2 − i(δ−Δ)) c_e + iΩ_k + iΩ_p c_r
/// ċ_r = −(γ_r/2 − i(δ_r+V)) c_r + iΩ_p* c_e
/// ```
pub fn steady_state_coherence(p: &EitParameters, omega_k: C64) -> Result<C64> {
    p.validate()?;
    let om = C64::new(p.omega_p, 0.0);
    let m = faer::Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => p.a(),
        (0, 1) => -I * om,
        (1, 0) => -I * om.conj(),
        _ => p.b(),
    });
    let mut rhs = faer::Mat::from_fn(2, 1, |i, _| if i == 0 { I * omega_k } else { C64::new(0.0, 0.0) });
    m.partial_piv_lu().solve_in_place(rhs.as_mut());
    let ce = rhs[(0, 0)];
    if !ce.is_finite() {
        return Err(Error::Singularity("three-level steady state is singular".into()));
    }
    Ok(ce)
}

/// Collective reflection coefficient
/// r = i(γ+Γ)D / (−iD(γ+Γ − 2i(δ−Δ)) + 2|Ω_p|²) with D = δ_r + V + iγ_r/2.
pub fn reflection_coefficient(p: &EitParameters) -> Result<C64> {
    p.validate()?;
    let d = C64::new(p.delta_r + p.v, 0.5 * p.gamma_r);
    let w = 1.0 + p.decay;
    let den = -I * d * C64::new(w, -2.0 * (p.delta - p.shift)) + 2.0 * p.omega_p * p.omega_p;
    if den == C64::new(0.0, 0.0) {
        return Err(Error::Singularity("EIT denominator vanishes".into()));
    }
    Ok(I * w * d / den)
}

/// Scattering map from the coherence: r = i((γ+Γ)/2) ρ / Ω_k.
pub fn reflection_from_coherence(p: &EitParameters, rho: C64, omega_k: C64) -> C64 {
    I * p.half_width() * rho / omega_k
}

/// (r_U, r_C): the array without (V = 0) and with (V = v_on) the ancilla shift.
pub fn conditional_pair(p_base: &EitParameters, v_on: f64) -> Result<(C64, C64)> {
    if !(v_on > 0.0) {
        return Err(Error::invalid(format!("V_on must be positive, got {v_on}")));
    }
    let r_u = reflection_coefficient(&EitParameters { v: 0.0, ..*p_base })?;
    let r_c = reflection_coefficient(&EitParameters { v: v_on, ..*p_base })?;
    Ok((r_u, r_c))
}

/// Worst-case pair for an inhomogeneous shift: evaluated at the smallest V.
pub fn conditional_pair_worst_case(p_base: &EitParameters, v_per_atom: &[f64]) -> Result<(C64, C64)> {
    let v_min = v_per_atom.iter().copied().fold(f64::INFINITY, f64::min);
    if !v_min.is_finite() {
        return Err(Error::invalid("per-atom shifts must be a non-empty finite list"));
    }
    conditional_pair(p_base, v_min)
}

/// Single-atom EIT polarizability α_i = ρ/(2Ω_k) with Δ = Γ = 0, for the
/// per-atom-V mode of the coupled-dipole solver. Reduces to
/// −(1/2)/(δ + i/2) when Ω_p = 0.
pub fn atomic_polarizability(p: &EitParameters, v_atom: f64) -> Result<C64> {
    let single = EitParameters { shift: 0.0, decay: 0.0, v: v_atom, ..*p };
    Ok(eit_coherence(&single, C64::new(1.0, 0.0))? / 2.0)
}

pub fn per_atom_polarizabilities(p: &EitParameters, v_per_atom: &[f64]) -> Result<Vec<C64>> {
    v_per_atom.iter().map(|&v| atomic_polarizability(p, v)).collect()
}
