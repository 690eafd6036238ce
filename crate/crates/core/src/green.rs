//! Scalar-projected free-space dyadic Green function and its lattice sums.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::LatticeGeometry;
use crate::{Error, Result, K0};

/// Tolerance on |value(R) − value(R/2)| for the collective shifts, in γ.
pub const SHIFT_TOLERANCE: f64 = 1e-3;

/// G(r_a, r_b) projected on `dipole_axis`, with k = 2π/λ.
///
/// The bracket uses the standard `(1 + (ikr − 1)/(k²r²))` first term; the
/// variant printed without the `−1` has the wrong static limit.
pub fn green_scalar(r_a: [f64; 3], r_b: [f64; 3], dipole_axis: [f64; 3]) -> Result<C64> {
    let d = [r_a[0] - r_b[0], r_a[1] - r_b[1], r_a[2] - r_b[2]];
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if !(r2 > 0.0) {
        return Err(Error::invalid("green function evaluated at coincident points"));
    }
    Ok(green_kernel(d, dipole_axis))
}

/// Kernel on a separation vector; the caller guarantees d ≠ 0.
#[inline]
pub(crate) fn green_kernel(d: [f64; 3], axis: [f64; 3]) -> C64 {
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let r = r2.sqrt();
    let rd = d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2];
    let kr = K0 * r;
    let inv = 1.0 / (kr * kr);
    let (s, c) = kr.sin_cos();
    let pref = C64::new(c, s) / (4.0 * std::f64::consts::PI * r);
    let a = C64::new(1.0 - inv, kr * inv);
    let b = C64::new((3.0 - kr * kr) * inv, -3.0 * kr * inv);
    pref * (a + b * (rd * rd / r2))
}

/// Zero-diagonal N×N interaction matrix over the active atoms, row-major.
#[derive(Clone, Debug)]
pub struct GreenMatrix {
    n: usize,
    entries: Vec<C64>,
    /// Wavenumber used to build the matrix, 1/λ units.
    pub k: f64,
}

impl GreenMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn to_faer(&self) -> faer::Mat<C64> {
        faer::Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Largest |G_ij − G_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        worst
    }
}

pub fn green_matrix(geom: &LatticeGeometry) -> Result<GreenMatrix> {
    let pos = geom.active_positions();
    if pos.is_empty() {
        return Err(Error::invalid("green matrix of a geometry with no active atoms"));
    }
    Ok(green_matrix_from_positions(&pos, geom.dipole_axis()))
}

pub(crate) fn green_matrix_from_positions(pos: &[[f64; 3]], axis: [f64; 3]) -> GreenMatrix {
    let n = pos.len();
    let mut entries = vec![C64::new(0.0, 0.0); n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, e) in row.iter_mut().enumerate() {
            if i != j {
                let d = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1], pos[i][2] - pos[j][2]];
                *e = green_kernel(d, axis);
            }
        }
    });
    GreenMatrix { n, entries, k: K0 }
}

/// Momentum-dependent cooperative shift and decay correction of an
/// infinite square lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectiveMode {
    /// Transverse wavevector in k₀ units.
    pub k_perp: [f64; 2],
    /// Δ_k in γ.
    pub delta_k: f64,
    /// Γ_k in γ; the total linewidth is γ + Γ_k.
    pub gamma_k: f64,
    /// max(|ΔΔ|, |ΔΓ|) between radius R and R/2.
    pub convergence: f64,
}

/// Δ_k = −(3/2)λ Re G_k, Γ_k = 3λ Im G_k with G_k the windowed lattice sum.
///
/// These are the prefactors for which the infinite array reflects perfectly
/// at δ = Δ with the kernel normalization of [`green_scalar`].
pub fn collective_shift(k_perp: [f64; 2], spacing: f64, truncation_radius: f64) -> Result<CollectiveMode> {
    let mode = collective_shift_unchecked(k_perp, spacing, truncation_radius)?;
    if !(mode.convergence < SHIFT_TOLERANCE) {
        return Err(Error::Convergence {
            message: format!(
                "lattice sum at k_perp = ({}, {}) not converged within R = {truncation_radius} λ",
                k_perp[0], k_perp[1]
            ),
            estimate: mode.convergence,
            partial: None,
        });
    }
    Ok(mode)
}

/// Same as [`collective_shift`] but returns the estimate without judging it.
pub fn collective_shift_unchecked(
    k_perp: [f64; 2],
    spacing: f64,
    truncation_radius: f64,
) -> Result<CollectiveMode> {
    if !(spacing > 0.0 && spacing < 1.0) {
        return Err(Error::invalid(format!("spacing must lie in (0, 1) λ, got {spacing}")));
    }
    if !(truncation_radius >= 20.0) {
        return Err(Error::invalid(format!(
            "truncation radius must be at least 20 λ, got {truncation_radius}"
        )));
    }
    let full = lattice_sum(k_perp, spacing, truncation_radius);
    let half = lattice_sum(k_perp, spacing, truncation_radius / 2.0);
    let (d1, g1) = shifts_from_sum(full);
    let (d2, g2) = shifts_from_sum(half);
    Ok(CollectiveMode {
        k_perp,
        delta_k: d1,
        gamma_k: g1,
        convergence: (d1 - d2).abs().max((g1 - g2).abs()),
    })
}

fn shifts_from_sum(s: C64) -> (f64, f64) {
    (-1.5 * s.re, 3.0 * s.im)
}

/// Σ_{j≠0} w(|r_j|/R) e^{i k⊥·r_j} G(r_j) over the square lattice with
/// x̂ dipoles, where w is a C∞ taper equal to 1 inside R/2 and 0 beyond R.
/// A sharp cutoff of the oscillating 2D sum does not converge.
pub fn lattice_sum(k_perp: [f64; 2], spacing: f64, radius: f64) -> C64 {
    let m = (radius / spacing).ceil() as i64;
    let kx = K0 * k_perp[0];
    let ky = K0 * k_perp[1];
    let rows: Vec<C64> = (-m..=m)
        .into_par_iter()
        .map(|j| {
            let y = j as f64 * spacing;
            let mut acc = C64::new(0.0, 0.0);
            for i in -m..=m {
                if i == 0 && j == 0 {
                    continue;
                }
                let x = i as f64 * spacing;
                let rho = x.hypot(y);
                if rho >= radius {
                    continue;
                }
                let w = taper(rho / radius);
                let (s, c) = (kx * x + ky * y).sin_cos();
                acc += green_kernel([x, y, 0.0], [1.0, 0.0, 0.0]) * C64::new(c, s) * w;
            }
            acc
        })
        .collect();
    rows.into_iter().sum()
}

fn taper(x: f64) -> f64 {
    if x <= 0.5 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let t = (x - 0.5) / 0.5;
    let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let up = f(t);
    1.0 - up / (up + f(1.0 - t))
}
