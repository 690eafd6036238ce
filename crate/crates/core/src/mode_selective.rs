//! Reflectivity versus transverse momentum for arrays with a periodic
//! polarizability modulation.

use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupled_dipole::{DriveField, ScatteringSetup, COUPLING, single_atom_polarizability};
use crate::geometry::LatticeGeometry;
use crate::green::green_matrix_from_positions;
use crate::linalg::LuSolver;
use crate::{quad, Error, Result, K0};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileKind {
    Uniform,
    /// Modulation wavevector in units of k₀.
    Periodic { k_a: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermittivityProfile {
    pub alpha0: C64,
    /// α_i / α₀ per active atom, in [0, 1].
    pub weights: Vec<f64>,
    pub kind: ProfileKind,
}

impl PermittivityProfile {
    pub fn alpha(&self) -> Vec<C64> {
        self.weights.iter().map(|w| self.alpha0 * *w).collect()
    }
}

pub fn uniform_profile(geom: &LatticeGeometry, alpha0: C64) -> PermittivityProfile {
    PermittivityProfile { alpha0, weights: vec![1.0; geom.n_active()], kind: ProfileKind::Uniform }
}

/// α_i = α₀ (1 + cos(2 K_a·r_i)) / 2 with K_a in units of k₀.
pub fn periodic_profile(geom: &LatticeGeometry, k_a: [f64; 2], alpha0: C64) -> Result<PermittivityProfile> {
    if !(k_a[0].hypot(k_a[1]) < 1.0) {
        return Err(Error::invalid("|K_a| must be below k0"));
    }
    let weights = geom
        .active_positions()
        .iter()
        .map(|r| 0.5 * (1.0 + (2.0 * K0 * (k_a[0] * r[0] + k_a[1] * r[1])).cos()))
        .collect();
    Ok(PermittivityProfile { alpha0, weights, kind: ProfileKind::Periodic { k_a } })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMethod {
    RealSpace,
    /// Eigenmode expansion keeping the full mode coupling.
    Eigenmode,
    /// Eigenmode expansion with off-diagonal overlaps dropped.
    EigenmodeDiagonal,
}

impl SpectrumMethod {
    pub fn name(self) -> &'static str {
        match self {
            SpectrumMethod::RealSpace => "real-space",
            SpectrumMethod::Eigenmode => "eigenmode",
            SpectrumMethod::EigenmodeDiagonal => "eigenmode-diagonal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectivitySpectrum {
    /// k_⊥ along the modulation axis x, in units of k₀.
    pub k_perp: Vec<f64>,
    pub r2: Vec<f64>,
    pub method: SpectrumMethod,
    /// For eigenmode spectra: max |r²_diagonal − r²_full| over the grid.
    pub discrepancy: Option<f64>,
}

impl ReflectivitySpectrum {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k_perp_over_k0,r2,method\n");
        for (k, r) in self.k_perp.iter().zip(&self.r2) {
            let _ = writeln!(s, "{:.12e},{:.12e},{}", k, r, self.method.name());
        }
        s
    }

    /// Grid index of the smallest |r|².
    pub fn argmin(&self) -> usize {
        (0..self.r2.len()).fold(0, |b, i| if self.r2[i] < self.r2[b] { i } else { b })
    }

    /// |r|² at the grid point closest to `k`.
    pub fn at(&self, k: f64) -> f64 {
        let i = (0..self.k_perp.len())
            .min_by(|&a, &b| (self.k_perp[a] - k).abs().total_cmp(&(self.k_perp[b] - k).abs()))
            .expect("non-empty spectrum");
        self.r2[i]
    }
}

/// Checks a geometry, profile and grid without solving anything.
pub fn validate_spectrum_inputs(geom: &LatticeGeometry, profile: &PermittivityProfile, k_grid: &[f64]) -> Result<()> {
    check_grid(k_grid)?;
    check_profile(geom, profile)
}

fn check_grid(k_grid: &[f64]) -> Result<()> {
    if k_grid.is_empty() {
        return Err(Error::invalid("k grid is empty"));
    }
    if k_grid.iter().any(|k| !(k.abs() < 1.0)) {
        return Err(Error::invalid("k grid must lie strictly inside the light cone |k_perp| < k0"));
    }
    Ok(())
}

fn check_profile(geom: &LatticeGeometry, profile: &PermittivityProfile) -> Result<()> {
    if geom.n_active() == 0 {
        return Err(Error::invalid("geometry has no active atoms"));
    }
    if profile.weights.len() != geom.n_active() {
        return Err(Error::invalid("profile length does not match the active atoms"));
    }
    if let ProfileKind::Periodic { k_a } = profile.kind {
        let period = PI / (K0 * k_a[0].hypot(k_a[1]));
        let side = geom.side_x().min(geom.ny as f64 * geom.spacing);
        if k_a != [0.0, 0.0] && side < 4.0 * period {
            return Err(Error::invalid(format!(
                "array side {side:.3} is shorter than four modulation periods ({:.3})",
                4.0 * period
            )));
        }
    }
    Ok(())
}

/// Detuning of the uniform array's collective resonance at normal incidence
/// under plane-wave drive, and the polarizability there.
pub fn uniform_resonance(geom: &LatticeGeometry) -> Result<(f64, C64)> {
    let setup = ScatteringSetup::new(geom, &DriveField::plane_wave(0.0))?;
    let active: Vec<usize> = geom.active_indices().collect();
    let d = setup.locate_resonance(&active)?;
    Ok((d, single_atom_polarizability(d)))
}

/// Detection waist shared with the normal-incidence plane-wave projection.
fn detection_waist(geom: &LatticeGeometry) -> f64 {
    geom.nx.min(geom.ny) as f64 * geom.spacing / 4.0
}

/// Solves the coupled-dipole system for plane-wave drive e^{i k x} at each
/// grid point and projects the reflected far field onto the specularly
/// reflected Gaussian mode of the same tilt.
pub fn reflectivity_spectrum_realspace(
    geom: &LatticeGeometry,
    profile: &PermittivityProfile,
    k_grid: &[f64],
) -> Result<ReflectivitySpectrum> {
    check_grid(k_grid)?;
    check_profile(geom, profile)?;
    let pos = geom.active_positions();
    let axis = geom.dipole_axis();
    let g = green_matrix_from_positions(&pos, axis);
    let alpha = profile.alpha();
    let n = pos.len();
    let m = Mat::from_fn(n, n, |i, j| {
        let off = -COUPLING * alpha[i] * g.get(i, j);
        if i == j {
            off + 1.0
        } else {
            off
        }
    });
    let lu = LuSolver::new(&m)?;
    let proj = KProjector::new(geom);
    let r2 = k_grid
        .iter()
        .map(|&kx| {
            let rhs: Vec<C64> = pos.iter().zip(&alpha).map(|(r, a)| a * C64::from_polar(1.0, K0 * kx * r[0])).collect();
            let p = lu.solve(&rhs);
            let w = proj.weights(&pos, axis, K0 * kx);
            w.iter().zip(&p).map(|(a, b)| a * b).sum::<C64>().norm_sqr()
        })
        .collect();
    Ok(ReflectivitySpectrum { k_perp: k_grid.to_vec(), r2, method: SpectrumMethod::RealSpace, discrepancy: None })
}

/// Angular-spectrum projection of the reflected field onto a tilted Gaussian
/// detection mode, normalized to the plane-wave drive.
struct KProjector {
    waist: f64,
    /// (q_x, q_y, weight of d²q/k_z) over the propagating disk.
    nodes: Vec<(f64, f64, f64)>,
}

impl KProjector {
    fn new(geom: &LatticeGeometry) -> Self {
        let waist = detection_waist(geom);
        let extent = geom.side_x().max(geom.ny as f64 * geom.spacing).max(4.0 * waist);
        // d²q/k_z = k sinθ dθ dφ in polar angles, free of the 1/k_z edge singularity.
        let theta = quad::composite(0.0, PI / 2.0, 4 + (K0 * extent / 4.0).ceil() as usize);
        let n_phi = 16 + (2.0 * K0 * extent).ceil() as usize;
        let mut nodes = Vec::with_capacity(theta.len() * n_phi);
        for &(th, w) in &theta {
            let q = K0 * th.sin();
            for j in 0..n_phi {
                let phi = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                let dphi = 2.0 * PI / n_phi as f64;
                let (qx, qy) = (q * phi.cos(), q * phi.sin());
                nodes.push((qx, qy, K0 * th.sin() * w * dphi));
            }
        }
        KProjector { waist, nodes }
    }

    fn spectrum(&self, qx: f64, qy: f64, kx: f64) -> f64 {
        let w = self.waist;
        w * w / (4.0 * PI) * (-((qx - kx).powi(2) + qy * qy) * w * w / 4.0).exp()
    }

    /// Functional W with r = Σ_j W_j p_j for reflection into the tilted mode.
    fn weights(&self, pos: &[[f64; 3]], axis: [f64; 3], kx: f64) -> Vec<C64> {
        let a0 = self.spectrum(kx, 0.0, kx);
        let nodes: Vec<(f64, f64, f64)> = self
            .nodes
            .iter()
            .filter_map(|&(qx, qy, wt)| {
                let a = self.spectrum(qx, qy, kx);
                let qa = qx * axis[0] + qy * axis[1];
                (a >= 1e-16 * a0).then(|| (qx, qy, a * wt * (1.0 - qa * qa / (K0 * K0))))
            })
            .collect();
        // ⟨u|E_inc⟩ / (2π)² for a unit plane wave is A(k_∥).
        let scale = C64::new(0.0, COUPLING / (8.0 * PI * PI) / a0);
        pos.par_iter()
            .map(|r| {
                let s: C64 = nodes.iter().map(|&(qx, qy, c)| C64::from_polar(c, -(qx * r[0] + qy * r[1]))).sum();
                s * scale
            })
            .collect()
    }

    #[cfg(test)]
    fn mode_norm(&self, kx: f64) -> f64 {
        self.nodes
            .iter()
            .map(|&(qx, qy, w)| self.spectrum(qx, qy, kx).powi(2) * w * (K0 * K0 - qx * qx - qy * qy).sqrt())
            .sum()
    }
}

/// Eigenmode expansion of the profile-weighted interaction F^{1/2} G F^{1/2}.
///
/// The drive e^{i k x} is expanded in the eigenvectors u_m, each mode responds
/// with α₀ / (1 − C α₀ μ_m), and the reflected field is read out with the same
/// detection functional as the real-space method. The diagonal variant drops
/// the non-orthogonality of the u_m (expansion coefficients u_m† √F e).
pub fn reflectivity_spectrum_eigenmode(
    geom: &LatticeGeometry,
    profile: &PermittivityProfile,
    k_grid: &[f64],
    method: SpectrumMethod,
) -> Result<ReflectivitySpectrum> {
    check_grid(k_grid)?;
    check_profile(geom, profile)?;
    if method == SpectrumMethod::RealSpace {
        return Err(Error::invalid("eigenmode spectrum needs an eigenmode method"));
    }
    let pos = geom.active_positions();
    let n = pos.len();
    let g = green_matrix_from_positions(&pos, geom.dipole_axis());
    let sf: Vec<f64> = profile.weights.iter().map(|w| w.max(0.0).sqrt()).collect();
    let kmat = Mat::from_fn(n, n, |i, j| g.get(i, j) * (sf[i] * sf[j]));
    let eig = kmat
        .eigen()
        .map_err(|e| Error::numerical(format!("eigendecomposition failed: {e:?}")))?;
    let mut u = eig.U().to_owned();
    let mu: Vec<C64> = (0..n).map(|m| eig.S().column_vector()[m]).collect();
    for m in 0..n {
        let norm = (0..n).map(|i| u[(i, m)].norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::numerical("eigenvector with zero norm"));
        }
        for i in 0..n {
            u[(i, m)] /= norm;
        }
    }
    let lu = LuSolver::new(&u).map_err(|e| e.context("eigenvector basis"))?;
    let ca = COUPLING * profile.alpha0;
    let aeff: Vec<C64> = mu.iter().map(|m| profile.alpha0 / (1.0 - ca * m)).collect();
    let axis = geom.dipole_axis();
    let proj = KProjector::new(geom);

    let spectra: Vec<(f64, f64)> = k_grid
        .iter()
        .map(|&k| {
            let kx = K0 * k;
            let e: Vec<C64> = pos.iter().zip(&sf).map(|(r, s)| C64::from_polar(*s, kx * r[0])).collect();
            let w: Vec<C64> = proj.weights(&pos, axis, kx).iter().zip(&sf).map(|(w, s)| w * *s).collect();
            // f_m = (W √F) u_m; dual = U⁻¹ √F e; the diagonal variant takes U⁻¹ ≈ U†.
            let f: Vec<C64> = (0..n).map(|m| (0..n).map(|i| w[i] * u[(i, m)]).sum()).collect();
            let h: Vec<C64> = (0..n).map(|m| (0..n).map(|i| u[(i, m)].conj() * e[i]).sum()).collect();
            let dual = lu.solve(&e);
            let full: C64 = (0..n).map(|m| f[m] * dual[m] * aeff[m]).sum();
            let diag: C64 = (0..n).map(|m| f[m] * h[m] * aeff[m]).sum();
            (full.norm_sqr(), diag.norm_sqr())
        })
        .collect();
    let discrepancy = spectra.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let r2 = spectra
        .iter()
        .map(|&(full, diag)| if method == SpectrumMethod::Eigenmode { full } else { diag })
        .collect();
    Ok(ReflectivitySpectrum { k_perp: k_grid.to_vec(), r2, method, discrepancy: Some(discrepancy) })
}

/// Evenly spaced grid of `n` points on [−k_max, k_max].
pub fn symmetric_grid(k_max: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0];
    }
    (0..n).map(|i| -k_max + 2.0 * k_max * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_square_lattice;

    #[test]
    fn profile_values() {
        let g = build_square_lattice(9, 9, 0.2).unwrap();
        let a0 = C64::new(0.0, 1.0);
        let p = periodic_profile(&g, [0.0, 0.0], a0).unwrap();
        assert!(p.alpha().iter().all(|a| *a == a0));
        let p = periodic_profile(&g, [0.4, 0.0], a0).unwrap();
        for (r, w) in g.active_positions().iter().zip(&p.weights) {
            assert_eq!(*w, 0.5 * (1.0 + (2.0 * K0 * 0.4 * r[0]).cos()));
        }
        // K_a·r = π/4 makes the cosine argument π/2.
        let g1 = build_square_lattice(2, 1, 0.625).unwrap();
        let p = periodic_profile(&g1, [0.4, 0.0], a0).unwrap();
        let x = g1.active_positions()[1][0];
        assert!((2.0 * K0 * 0.4 * x - PI / 2.0).abs() < 1e-12);
        assert!((p.alpha()[1] - a0 / 2.0).norm() < 1e-15);
        assert!(periodic_profile(&g, [1.0, 0.0], a0).is_err());
    }

    #[test]
    fn grid_and_size_checks() {
        let g = build_square_lattice(9, 9, 0.2).unwrap();
        let p = periodic_profile(&g, [0.4, 0.0], C64::new(0.0, 1.0)).unwrap();
        assert!(reflectivity_spectrum_realspace(&g, &p, &[0.0]).is_err());
        let u = uniform_profile(&g, C64::new(0.0, 1.0));
        assert!(reflectivity_spectrum_realspace(&g, &u, &[1.0]).is_err());
        assert!(reflectivity_spectrum_realspace(&g, &u, &[]).is_err());
    }

    #[test]
    fn detection_mode_norm() {
        let g = build_square_lattice(25, 25, 0.2).unwrap();
        let proj = KProjector::new(&g);
        let w = proj.waist;
        // ∫|A|² d²q over the plane is w²/(8π); the disk holds nearly all of it at k = 0.
        let exact = w * w / (8.0 * PI);
        assert!((proj.mode_norm(0.0) / exact - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normal_incidence_matches_plane_projection() {
        let g = build_square_lattice(25, 25, 0.2).unwrap();
        let d = -0.1;
        let a0 = single_atom_polarizability(d);
        let spec = reflectivity_spectrum_realspace(&g, &uniform_profile(&g, a0), &[0.0]).unwrap();
        let setup = ScatteringSetup::new(&g, &DriveField::plane_wave(0.0)).unwrap();
        let active: Vec<usize> = g.active_indices().collect();
        let r = setup.reflection_uniform(&active, d).unwrap();
        assert!((spec.r2[0] - r.norm_sqr()).abs() < 2e-3, "{} vs {}", spec.r2[0], r.norm_sqr());
    }

    #[test]
    fn single_atom_methods_share_response() {
        let g = build_square_lattice(1, 1, 0.2).unwrap();
        let ratio = |d: f64| {
            let p = uniform_profile(&g, single_atom_polarizability(d));
            let a = reflectivity_spectrum_realspace(&g, &p, &[0.3]).unwrap().r2[0];
            let b = reflectivity_spectrum_eigenmode(&g, &p, &[0.3], SpectrumMethod::Eigenmode).unwrap();
            let c = reflectivity_spectrum_eigenmode(&g, &p, &[0.3], SpectrumMethod::EigenmodeDiagonal).unwrap();
            assert!((b.r2[0] - c.r2[0]).abs() < 1e-15);
            a / b.r2[0]
        };
        let (r1, r2) = (ratio(0.0), ratio(1.7));
        assert!((r1 / r2 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cosine_profile_spectrum_is_even() {
        let g = build_square_lattice(25, 25, 0.2).unwrap();
        let p = periodic_profile(&g, [0.4, 0.0], single_atom_polarizability(0.0)).unwrap();
        let ks = [-0.5, -0.2, 0.2, 0.5];
        let s = reflectivity_spectrum_realspace(&g, &p, &ks).unwrap();
        assert!((s.r2[0] - s.r2[3]).abs() < 1e-10 * s.r2[0].max(1e-3));
        assert!((s.r2[1] - s.r2[2]).abs() < 1e-10 * s.r2[1].max(1e-3));
        let e = reflectivity_spectrum_eigenmode(&g, &p, &ks, SpectrumMethod::Eigenmode).unwrap();
        assert!((e.r2[0] - e.r2[3]).abs() < 1e-8);
        assert!(s.r2.iter().chain(&e.r2).all(|v| *v <= 1.0 + 1e-6));
    }

    #[test]
    fn eigenmode_expansion_matches_realspace() {
        let g = build_square_lattice(25, 25, 0.2).unwrap();
        let a0 = single_atom_polarizability(-0.03);
        let ks = [0.0, 0.3, 0.6];
        for p in [uniform_profile(&g, a0), periodic_profile(&g, [0.4, 0.0], a0).unwrap()] {
            let rs = reflectivity_spectrum_realspace(&g, &p, &ks).unwrap();
            let full = reflectivity_spectrum_eigenmode(&g, &p, &ks, SpectrumMethod::Eigenmode).unwrap();
            let diag = reflectivity_spectrum_eigenmode(&g, &p, &ks, SpectrumMethod::EigenmodeDiagonal).unwrap();
            for i in 0..ks.len() {
                assert!((rs.r2[i] - full.r2[i]).abs() < 1e-9);
                if p.kind == ProfileKind::Uniform {
                    assert!((rs.r2[i] - diag.r2[i]).abs() < 0.05, "{} vs {}", rs.r2[i], diag.r2[i]);
                }
            }
            let d = diag.discrepancy.unwrap();
            assert!(d >= 0.0 && d == full.discrepancy.unwrap());
        }
    }

    #[test]
    fn csv_layout() {
        let s = ReflectivitySpectrum { k_perp: vec![0.5], r2: vec![0.25], method: SpectrumMethod::RealSpace, discrepancy: None };
        assert_eq!(s.to_csv(), "k_perp_over_k0,r2,method\n5.000000000000e-1,2.500000000000e-1,real-space\n");
        for (a, b) in symmetric_grid(0.8, 5).iter().zip([-0.8, -0.4, 0.0, 0.4, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
