//! Fidelity scans over array size and missing-atom fraction.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupled_dipole::{single_atom_polarizability, DriveField, OpticalResponse, ScatteringSetup};
use crate::geometry::{apply_defects, build_square_lattice};
use crate::photonic::{cat_fidelity, conditional_scatter, TwoModeCoherent};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// What the abscissa measures, with units.
    pub abscissa_label: String,
    pub abscissa: Vec<f64>,
    pub fidelity_mean: Vec<f64>,
    pub fidelity_stderr: Vec<f64>,
    pub realizations_used: Vec<usize>,
    /// Detuning δ (γ) at which each point was evaluated.
    pub detuning: Vec<f64>,
    pub config_digest: String,
}

impl ScanResult {
    fn empty(label: &str, digest: String) -> Self {
        ScanResult {
            abscissa_label: label.into(),
            abscissa: vec![],
            fidelity_mean: vec![],
            fidelity_stderr: vec![],
            realizations_used: vec![],
            detuning: vec![],
            config_digest: digest,
        }
    }

    pub fn len(&self) -> usize {
        self.abscissa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissa.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# abscissa: {}; fidelity dimensionless; detuning in gamma", self.abscissa_label);
        let _ = writeln!(s, "# config_digest: {}", self.config_digest);
        s.push_str("abscissa,mean,stderr,n,detuning\n");
        for i in 0..self.len() {
            let _ = writeln!(
                s,
                "{:.12e},{:.12e},{:.12e},{},{:.12e}",
                self.abscissa[i], self.fidelity_mean[i], self.fidelity_stderr[i], self.realizations_used[i], self.detuning[i]
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scan result serializes")
    }
}

/// How the coupled branch enters the cat fidelity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityModel {
    /// Only the Gaussian-mode amplitudes r, t; the off-mode power is not
    /// carried as a separate mode.
    #[default]
    GaussianStructure,
    /// Off-mode power kept as a third coherent mode of weight 1 − |r|² − |t|².
    WithScattering,
}

/// Cat fidelity for an ideal transparent |U⟩ branch and a coupled branch
/// with amplitudes (r, t).
pub fn branch_fidelity(r: C64, t: C64, alpha: C64, model: FidelityModel) -> Result<f64> {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    // Amplitudes slightly above unit power are the bookkeeping overshoot
    // already reported by the response; rescale them onto the unit sphere.
    let p = r.norm_sqr() + t.norm_sqr();
    let (r, t) = if p > 1.0 { (r / p.sqrt(), t / p.sqrt()) } else { (r, t) };
    let mut cond = conditional_scatter(zero, one, r, t, TwoModeCoherent::new(alpha, zero))?;
    if model == FidelityModel::GaussianStructure {
        cond.branch_c.sc_weight = 0.0;
    }
    Ok(cat_fidelity(&cond, alpha).fidelity)
}

pub fn response_fidelity(resp: &OpticalResponse, alpha: C64, model: FidelityModel) -> Result<f64> {
    branch_fidelity(resp.r, resp.t, alpha, model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeScanConfig {
    pub sizes: Vec<(usize, usize)>,
    pub spacing: f64,
    pub waist: f64,
    pub alpha: C64,
    #[serde(default = "with_scattering")]
    pub model: FidelityModel,
}

fn with_scattering() -> FidelityModel {
    FidelityModel::WithScattering
}

/// Fidelity at the collective resonance of each array size. The abscissa is
/// the array length n·a; the error column carries the reflected-plane fit
/// residual.
pub fn fidelity_vs_size(cfg: &SizeScanConfig) -> Result<ScanResult> {
    if cfg.sizes.is_empty() {
        return Err(Error::invalid("size list is empty"));
    }
    let drive = DriveField::gaussian(cfg.waist, 0.0)?;
    let mut out = ScanResult::empty("array length n*a in lambda", digest(cfg));
    for &(nx, ny) in &cfg.sizes {
        let ctx = |e: Error| e.context(&format!("size {nx}x{ny}"));
        let geom = build_square_lattice(nx, ny, cfg.spacing).map_err(ctx)?;
        let setup = ScatteringSetup::new(&geom, &drive).map_err(ctx)?;
        let active: Vec<usize> = geom.active_indices().collect();
        let d = setup.locate_resonance(&active).map_err(ctx)?;
        let alpha = vec![single_atom_polarizability(d); active.len()];
        let resp = setup.response(&active, &alpha).map_err(ctx)?;
        out.abscissa.push(geom.side_x());
        out.fidelity_mean.push(response_fidelity(&resp, cfg.alpha, cfg.model)?);
        out.fidelity_stderr.push(resp.fit_residual);
        out.realizations_used.push(1);
        out.detuning.push(d);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectScanConfig {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub waist: f64,
    pub alpha: C64,
    pub fractions: Vec<f64>,
    pub seed: u64,
    pub stderr_tol: f64,
    pub min_real: usize,
    pub max_real: usize,
    /// Realizations per convergence check; independent of the worker count.
    pub batch: usize,
    pub model: FidelityModel,
}

impl Default for DefectScanConfig {
    fn default() -> Self {
        DefectScanConfig {
            nx: 23,
            ny: 23,
            spacing: 0.2,
            waist: 1.56,
            alpha: C64::new(3.0, 0.0),
            fractions: vec![0.0, 0.02, 0.05, 0.1],
            seed: 0,
            stderr_tol: 0.002,
            min_real: 50,
            max_real: 5000,
            batch: 10,
            model: FidelityModel::GaussianStructure,
        }
    }
}

impl DefectScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("defect fractions must lie in [0, 1]"));
        }
        if self.min_real < 2 {
            return Err(Error::invalid("min_real must be at least 2"));
        }
        if self.max_real < self.min_real || self.batch == 0 {
            return Err(Error::invalid("need batch ≥ 1 and max_real ≥ min_real"));
        }
        if !(self.stderr_tol > 0.0) {
            return Err(Error::invalid("stderr_tol must be positive"));
        }
        Ok(())
    }
}

/// Seed of realization `k` at fraction index `f`: the first eight bytes of
/// SHA-256(master ‖ f ‖ k), so each realization is fixed regardless of how
/// many others run.
pub fn realization_seed(master: u64, fraction_index: usize, realization: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((fraction_index as u64).to_le_bytes());
    h.update((realization as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Monte Carlo over missing-atom masks at the defect-free resonance detuning.
pub fn fidelity_vs_defects(cfg: &DefectScanConfig) -> Result<ScanResult> {
    cfg.validate()?;
    let base = build_square_lattice(cfg.nx, cfg.ny, cfg.spacing)?;
    let drive = DriveField::gaussian(cfg.waist, 0.0)?;
    let setup = ScatteringSetup::new(&base, &drive)?;
    let all: Vec<usize> = base.active_indices().collect();
    let d_star = setup.locate_resonance(&all)?;
    let alpha0 = single_atom_polarizability(d_star);

    let one = |fi: usize, f: f64, k: usize| -> Result<f64> {
        let geom = apply_defects(&base, f, realization_seed(cfg.seed, fi, k))?;
        let active: Vec<usize> = geom.active_indices().collect();
        let (r, t) = if active.is_empty() {
            (C64::new(0.0, 0.0), C64::new(1.0, 0.0))
        } else {
            let p = setup.solve(&active, &vec![alpha0; active.len()])?;
            setup.amplitudes(&active, &p)
        };
        branch_fidelity(r, t, cfg.alpha, cfg.model)
    };

    let mut out = ScanResult::empty("missing-atom fraction", digest(cfg));
    for (fi, &f) in cfg.fractions.iter().enumerate() {
        let mut samples: Vec<f64> = Vec::new();
        let (mean, se) = loop {
            if f == 0.0 {
                samples.push(one(fi, f, 0)?);
                break (samples[0], 0.0);
            }
            let start = samples.len();
            let batch: Vec<Result<f64>> = (start..start + cfg.batch).into_par_iter().map(|k| one(fi, f, k)).collect();
            for v in batch {
                samples.push(v?);
            }
            let (m, s) = mean_stderr(&samples);
            if samples.len() >= cfg.min_real && s < cfg.stderr_tol {
                break (m, s);
            }
            if samples.len() >= cfg.max_real {
                let mut partial = out.clone();
                partial.abscissa.push(f);
                partial.fidelity_mean.push(m);
                partial.fidelity_stderr.push(s);
                partial.realizations_used.push(samples.len());
                partial.detuning.push(d_star);
                return Err(Error::Convergence {
                    message: format!("fraction {f}: stderr above {} after {} realizations", cfg.stderr_tol, samples.len()),
                    estimate: s,
                    partial: Some(Box::new(partial)),
                });
            }
        };
        out.abscissa.push(f);
        out.fidelity_mean.push(mean);
        out.fidelity_stderr.push(se);
        out.realizations_used.push(samples.len());
        out.detuning.push(d_star);
    }
    Ok(out)
}

/// Mean and standard error with compensated two-pass sums.
pub fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = kahan(x.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = kahan(x.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn kahan(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in it {
        let y = v - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// (1 − ε)^N · F_light: an array whose atoms each depolarize with
/// probability ε.
pub fn depolarization_fidelity(epsilon: f64, n_atoms: usize, light_fid: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&epsilon) || !(0.0..=1.0).contains(&light_fid) {
        return Err(Error::invalid("epsilon and light fidelity must lie in [0, 1]"));
    }
    Ok((1.0 - epsilon).powi(n_atoms as i32) * light_fid)
}

/// SHA-256 of the JSON form of a configuration.
pub fn digest<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}
