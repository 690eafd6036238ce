//! Finite square atom arrays in the z = 0 plane.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGeometry {
    pub nx: usize,
    pub ny: usize,
    /// Lattice constant a/λ.
    pub spacing: f64,
    positions: Vec<[f64; 3]>,
    active: Vec<bool>,
    dipole_axis: [f64; 3],
    defect_seed: Option<u64>,
    defect_fraction: f64,
}

/// Reproducibility record of a geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub defect_seed: Option<u64>,
    pub defect_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 3]>>,
}

/// Centered `nx × ny` square lattice with all sites occupied.
pub fn build_square_lattice(nx: usize, ny: usize, spacing: f64) -> Result<LatticeGeometry> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid(format!("atom counts must be positive, got {nx}×{ny}")));
    }
    if !(spacing > 0.0 && spacing < 1.0) {
        return Err(Error::invalid(format!("spacing must lie in (0, 1) λ, got {spacing}")));
    }
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let mut positions = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            positions.push([(i as f64 - cx) * spacing, (j as f64 - cy) * spacing, 0.0]);
        }
    }
    Ok(LatticeGeometry {
        nx,
        ny,
        spacing,
        active: vec![true; nx * ny],
        positions,
        dipole_axis: [1.0, 0.0, 0.0],
        defect_seed: None,
        defect_fraction: 0.0,
    })
}

/// Deactivates `round(fraction · N_active)` atoms (ties to even), drawn
/// uniformly without replacement from a ChaCha stream seeded by `seed`.
pub fn apply_defects(geom: &LatticeGeometry, fraction: f64, seed: u64) -> Result<LatticeGeometry> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("defect fraction must lie in [0, 1], got {fraction}")));
    }
    let mut out = geom.clone();
    out.defect_seed = Some(seed);
    out.defect_fraction = fraction;
    let sites: Vec<usize> = geom.active_indices().collect();
    let count = defect_count(sites.len(), fraction);
    if count == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in rand::seq::index::sample(&mut rng, sites.len(), count) {
        out.active[sites[k]] = false;
    }
    Ok(out)
}

/// Number of atoms removed by [`apply_defects`].
pub fn defect_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round_ties_even() as usize
}

impl LatticeGeometry {
    pub fn site_count(&self) -> usize {
        self.positions.len()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// All site positions, occupied or not, row-major with x fastest.
    pub fn site_positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn active_positions(&self) -> Vec<[f64; 3]> {
        self.active_indices().map(|i| self.positions[i]).collect()
    }

    pub fn site_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn dipole_axis(&self) -> [f64; 3] {
        self.dipole_axis
    }

    pub fn with_dipole_axis(mut self, axis: [f64; 3]) -> Result<Self> {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(norm > 0.0) || axis[2].abs() > 1e-12 * norm {
            return Err(Error::invalid("dipole axis must be a non-zero in-plane vector"));
        }
        self.dipole_axis = [axis[0] / norm, axis[1] / norm, 0.0];
        Ok(self)
    }

    /// Center-to-center extent (n − 1)·a along x.
    pub fn extent_x(&self) -> f64 {
        (self.nx as f64 - 1.0) * self.spacing
    }

    /// Array length n·a along x, the abscissa of the size scans.
    pub fn side_x(&self) -> f64 {
        self.nx as f64 * self.spacing
    }

    pub fn defect_fraction(&self) -> f64 {
        self.defect_fraction
    }

    pub fn record(&self, with_positions: bool) -> GeometryRecord {
        GeometryRecord {
            nx: self.nx,
            ny: self.ny,
            spacing: self.spacing,
            defect_seed: self.defect_seed,
            defect_fraction: self.defect_fraction,
            positions: with_positions.then(|| self.active_positions()),
        }
    }

    /// Rebuilds a geometry from its record by replaying the defect draw.
    pub fn from_record(rec: &GeometryRecord) -> Result<Self> {
        let base = build_square_lattice(rec.nx, rec.ny, rec.spacing)?;
        match rec.defect_seed {
            Some(seed) => apply_defects(&base, rec.defect_fraction, seed),
            None => Ok(base),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_atom_at_origin() {
        let g = build_square_lattice(1, 1, 0.2).unwrap();
        assert_eq!(g.active_positions(), vec![[0.0, 0.0, 0.0]]);
        assert_eq!(g.dipole_axis(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn reference_array_sizes() {
        let g = build_square_lattice(23, 23, 0.2).unwrap();
        assert_eq!(g.n_active(), 529);
        let p = g.active_positions();
        let xmax = p.iter().map(|r| r[0]).fold(f64::MIN, f64::max);
        let xmin = p.iter().map(|r| r[0]).fold(f64::MAX, f64::min);
        assert!((xmax - xmin - 4.4).abs() < 1e-12);
        assert!((g.extent_x() - 4.4).abs() < 1e-12);
        assert_eq!(build_square_lattice(25, 25, 0.2).unwrap().n_active(), 625);
    }

    #[test]
    fn lattice_positions_follow_grid() {
        let g = build_square_lattice(4, 3, 0.3).unwrap();
        let p0 = g.site_positions()[0];
        for j in 0..3 {
            for i in 0..4 {
                let p = g.site_positions()[g.site_index(i, j)];
                assert!((p[0] - p0[0] - i as f64 * 0.3).abs() < 1e-12);
                assert!((p[1] - p0[1] - j as f64 * 0.3).abs() < 1e-12);
                assert_eq!(p[2], 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_square_lattice(0, 3, 0.2).is_err());
        assert!(build_square_lattice(3, 3, 0.0).is_err());
        assert!(build_square_lattice(3, 3, 1.0).is_err());
        let g = build_square_lattice(3, 3, 0.2).unwrap();
        assert!(apply_defects(&g, -0.1, 1).is_err());
        assert!(apply_defects(&g, 1.5, 1).is_err());
    }

    #[test]
    fn defect_counts() {
        let g23 = build_square_lattice(23, 23, 0.2).unwrap();
        assert_eq!(apply_defects(&g23, 0.02, 5).unwrap().n_active(), 529 - 11);
        // 0.1 · 625 = 62.5 rounds to even.
        let g25 = build_square_lattice(25, 25, 0.2).unwrap();
        assert_eq!(defect_count(625, 0.10), 62);
        assert_eq!(apply_defects(&g25, 0.10, 5).unwrap().n_active(), 625 - 62);
    }

    #[test]
    fn zero_fraction_is_identity_on_sites() {
        let g = build_square_lattice(23, 23, 0.2).unwrap();
        let d = apply_defects(&g, 0.0, 99).unwrap();
        assert_eq!(d.active(), g.active());
        assert_eq!(d.site_positions(), g.site_positions());
    }

    #[test]
    fn record_round_trip() {
        let g = apply_defects(&build_square_lattice(9, 7, 0.25).unwrap(), 0.3, 42).unwrap();
        let json = serde_json::to_string(&g.record(false)).unwrap();
        let back: GeometryRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(LatticeGeometry::from_record(&back).unwrap(), g);
    }

    proptest! {
        #[test]
        fn defects_are_deterministic_and_exact(n in 1usize..20, f in 0.0f64..=1.0, seed in any::<u64>()) {
            let g = build_square_lattice(n, n, 0.2).unwrap();
            let a = apply_defects(&g, f, seed).unwrap();
            let b = apply_defects(&g, f, seed).unwrap();
            prop_assert_eq!(a.active(), b.active());
            prop_assert_eq!(g.n_active() - a.n_active(), defect_count(n * n, f));
        }

        #[test]
        fn active_positions_distinct(nx in 1usize..12, ny in 1usize..12, a in 0.05f64..0.95) {
            let g = build_square_lattice(nx, ny, a).unwrap();
            let p = g.active_positions();
            for i in 0..p.len() {
                for j in 0..i {
                    let d = (p[i][0] - p[j][0]).hypot(p[i][1] - p[j][1]);
                    prop_assert!(d > 0.5 * a);
                }
            }
        }
    }
}
