//! State-vector reference simulator for small registers.

use num_complex::Complex64 as C64;

use super::pauli::Pauli;
use super::tableau::{Sign, StabilizerTableau};
use crate::{Error, Result};

pub const MAX_DENSE_QUBITS: usize = 20;

/// Amplitudes indexed by basis states with qubit q at bit q.
#[derive(Clone, Debug)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn zero_state(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_DENSE_QUBITS {
            return Err(Error::invalid(format!("dense simulation supports 1..={MAX_DENSE_QUBITS} qubits")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[0] = C64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn h(&mut self, q: usize) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = 1usize << q;
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let (a, b) = (self.amps[i], self.amps[i | m]);
                self.amps[i] = (a + b) * s;
                self.amps[i | m] = (a - b) * s;
            }
        }
    }

    pub fn x(&mut self, q: usize) {
        let m = 1usize << q;
        for i in 0..self.amps.len() {
            if i & m == 0 {
                self.amps.swap(i, i | m);
            }
        }
    }

    pub fn z(&mut self, q: usize) {
        let m = 1usize << q;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & m != 0 {
                *a = -*a;
            }
        }
    }

    pub fn cnot(&mut self, c: usize, t: usize) {
        let (mc, mt) = (1usize << c, 1usize << t);
        for i in 0..self.amps.len() {
            if i & mc != 0 && i & mt == 0 {
                self.amps.swap(i, i | mt);
            }
        }
    }

    /// Projects qubit q onto |±⟩ and renormalizes.
    pub fn project_x(&mut self, q: usize, outcome: Sign) -> Result<()> {
        let m = 1usize << q;
        let s = outcome.value() as f64;
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let a = 0.5 * (self.amps[i] + self.amps[i | m] * s);
                self.amps[i] = a;
                self.amps[i | m] = a * s;
            }
        }
        let norm = self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::invalid("projection has zero probability"));
        }
        for a in &mut self.amps {
            *a /= norm;
        }
        Ok(())
    }

    /// P|ψ⟩.
    pub fn apply_pauli(&self, p: &Pauli) -> Vec<C64> {
        let ph = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][p.phase as usize];
        let (x, z) = (p.x as usize, p.z as usize);
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            // X^x Z^z |i⟩ = (−1)^{z·i} |i ⊕ x⟩
            let s = if (z & i).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[i ^ x] += ph * a * s;
        }
        out
    }

    pub fn expectation(&self, p: &Pauli) -> C64 {
        let v = self.apply_pauli(p);
        self.amps.iter().zip(&v).map(|(a, b)| a.conj() * b).sum()
    }

    /// Every generator of `t` has expectation +1 in this state, so both
    /// describe the same state up to a global phase.
    pub fn matches(&self, t: &StabilizerTableau, tol: f64) -> bool {
        t.n() == self.n && t.generators().iter().all(|g| (self.expectation(g) - 1.0).norm() < tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_pair() {
        let mut s = StateVector::zero_state(2).unwrap();
        s.h(0);
        s.cnot(0, 1);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[0].re - r).abs() < 1e-15 && (s.amplitudes()[3].re - r).abs() < 1e-15);
        assert!((s.expectation(&"-YY".parse().unwrap()) - 1.0).norm() < 1e-14);
        s.project_x(0, Sign::Minus).unwrap();
        assert!((s.expectation(&"-XI".parse().unwrap()) - 1.0).norm() < 1e-14);
        assert!((s.expectation(&"+XX".parse().unwrap()) - 1.0).norm() < 1e-14);
        assert!(s.clone().project_x(0, Sign::Plus).is_err());
    }

    #[test]
    fn size_limits() {
        assert!(StateVector::zero_state(0).is_err());
        assert!(StateVector::zero_state(MAX_DENSE_QUBITS + 1).is_err());
    }
}
