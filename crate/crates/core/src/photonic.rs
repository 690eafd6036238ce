//! Coherent-state algebra for conditional scattering and cat-state fidelity.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Coherent amplitudes of the right- and left-propagating modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoModeCoherent {
    pub alpha_r: C64,
    pub alpha_l: C64,
}

impl TwoModeCoherent {
    pub fn new(alpha_r: C64, alpha_l: C64) -> Self {
        TwoModeCoherent { alpha_r, alpha_l }
    }

    pub fn mean_photons(&self) -> f64 {
        self.alpha_r.norm_sqr() + self.alpha_l.norm_sqr()
    }
}

pub fn beam_splitter(r: C64, t: C64, s: TwoModeCoherent) -> Result<TwoModeCoherent> {
    check_passive(r, t)?;
    Ok(TwoModeCoherent {
        alpha_r: t * s.alpha_r + r * s.alpha_l,
        alpha_l: r * s.alpha_r + t * s.alpha_l,
    })
}

fn check_passive(r: C64, t: C64) -> Result<()> {
    let p = r.norm_sqr() + t.norm_sqr();
    if !(p <= 1.0 + 1e-9) {
        return Err(Error::invalid(format!("|r|² + |t|² = {p} exceeds 1")));
    }
    Ok(())
}

/// One branch of the conditional state: the two guided modes plus the
/// power fraction lost to other spatial modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub modes: TwoModeCoherent,
    /// 1 − |r|² − |t|², clamped to [0, 1].
    pub sc_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalState {
    /// Array uncoupled, |U⟩.
    pub branch_u: Branch,
    /// Array coupled, |C⟩.
    pub branch_c: Branch,
    pub weights: [C64; 2],
}

pub fn conditional_scatter(r_u: C64, t_u: C64, r_c: C64, t_c: C64, s: TwoModeCoherent) -> Result<ConditionalState> {
    let branch = |r: C64, t: C64| -> Result<Branch> {
        Ok(Branch {
            modes: beam_splitter(r, t, s)?,
            sc_weight: (1.0 - r.norm_sqr() - t.norm_sqr()).clamp(0.0, 1.0),
        })
    };
    let w = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Ok(ConditionalState {
        branch_u: branch(r_u, t_u)?,
        branch_c: branch(r_c, t_c)?,
        weights: [w, w],
    })
}

impl ConditionalState {
    pub fn with_weights(mut self, w_u: C64, w_c: C64) -> Result<Self> {
        let norm = w_u.norm_sqr() + w_c.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("branch weights must be normalized, got {norm}")));
        }
        self.weights = [w_u, w_c];
        Ok(self)
    }
}

/// ⟨a|b⟩ = exp(−½(|a|² + |b|²) + a*b).
pub fn coherent_overlap(a: C64, b: C64) -> C64 {
    (-0.5 * (a.norm_sqr() + b.norm_sqr()) + a.conj() * b).exp()
}

/// Ancilla projection onto (|U⟩ ± |C⟩)/√2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    #[default]
    Even,
    Odd,
}

impl Outcome {
    fn sign(self) -> f64 {
        match self {
            Outcome::Even => 1.0,
            Outcome::Odd => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatFidelityReport {
    pub fidelity: f64,
    /// 1 − ½|α|²|ε|² − ¼(|α|² Im ε)², ε = r_C + 1.
    pub approx_fidelity: f64,
    /// 1 − |ε|²|α|²/8, a coarser leading-order law.
    pub coarse_approx_fidelity: f64,
    pub alpha_sq: f64,
    pub outcome: Outcome,
}

type Mode3 = [C64; 3];

fn overlap3(a: &Mode3, b: &Mode3) -> C64 {
    coherent_overlap(a[0], b[0]) * coherent_overlap(a[1], b[1]) * coherent_overlap(a[2], b[2])
}

fn branch_modes(b: &Branch, alpha: C64) -> Mode3 {
    [b.modes.alpha_r, b.modes.alpha_l, alpha * b.sc_weight.sqrt()]
}

/// Fidelity of the projected light state with the ideal cat
/// (|α, 0⟩ ± |0, −α⟩)/norm, after an ancilla projection with `Even` outcome.
pub fn cat_fidelity(cond: &ConditionalState, alpha: C64) -> CatFidelityReport {
    cat_fidelity_with_outcome(cond, alpha, Outcome::Even)
}

/// Both states are normalized; the scattered parts of the two branches are
/// treated as the same spatial mode.
pub fn cat_fidelity_with_outcome(cond: &ConditionalState, alpha: C64, outcome: Outcome) -> CatFidelityReport {
    let zero = C64::new(0.0, 0.0);
    let s = outcome.sign();
    let bu = branch_modes(&cond.branch_u, alpha);
    let bc = branch_modes(&cond.branch_c, alpha);
    let [wu, wc] = cond.weights;
    let wc = wc * s;
    let e1: Mode3 = [alpha, zero, zero];
    let e2: Mode3 = [zero, -alpha, zero];

    let norm_psi = wu.norm_sqr() + wc.norm_sqr() + 2.0 * (wu.conj() * wc * overlap3(&bu, &bc)).re;
    let norm_tgt = 2.0 + 2.0 * s * overlap3(&e1, &e2).re;
    let amp = e1_plus(&e1, &e2, s, &bu) * wu + e1_plus(&e1, &e2, s, &bc) * wc;
    let fidelity = if norm_psi > 0.0 && norm_tgt > 0.0 {
        (amp.norm_sqr() / (norm_psi * norm_tgt)).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let a2 = alpha.norm_sqr();
    let eps = if a2 > 0.0 { cond.branch_c.modes.alpha_l / alpha + 1.0 } else { zero };
    CatFidelityReport {
        fidelity,
        approx_fidelity: approx_fidelity(eps, a2),
        coarse_approx_fidelity: coarse_approx_fidelity(eps, a2),
        alpha_sq: a2,
        outcome,
    }
}

/// ⟨e1| + s⟨e2| applied to a branch.
fn e1_plus(e1: &Mode3, e2: &Mode3, s: f64, b: &Mode3) -> C64 {
    overlap3(e1, b) + s * overlap3(e2, b)
}

/// Second-order expansion of the exact fidelity in ε = r_C + 1 for t_C = 0,
/// no scattering loss and |α|² ≫ 1.
pub fn approx_fidelity(eps: C64, alpha_sq: f64) -> f64 {
    1.0 - 0.5 * alpha_sq * eps.norm_sqr() - 0.25 * (alpha_sq * eps.im).powi(2)
}

pub fn coarse_approx_fidelity(eps: C64, alpha_sq: f64) -> f64 {
    1.0 - eps.norm_sqr() * alpha_sq / 8.0
}
