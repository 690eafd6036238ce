use serde::{Deserialize, Serialize};

use super::pauli::{Pauli, MAX_QUBITS};
use crate::{Error, Result};

/// Eigenvalue label of a single-qubit measurement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// Stabilizer state of `n` qubits as `n` commuting, independent generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizerTableau {
    n: usize,
    gens: Vec<Pauli>,
}

impl StabilizerTableau {
    /// |0…0⟩.
    pub fn zero_state(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::invalid(format!("qubit count must lie in 1..={MAX_QUBITS}")));
        }
        Ok(StabilizerTableau { n, gens: (0..n).map(Pauli::z).collect() })
    }

    /// Builds a tableau from generators, checking that they define a state.
    pub fn from_generators(n: usize, gens: Vec<Pauli>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::invalid(format!("qubit count must lie in 1..={MAX_QUBITS}")));
        }
        let mask = if n == 128 { u128::MAX } else { (1u128 << n) - 1 };
        if gens.iter().any(|g| (g.x | g.z) & !mask != 0) {
            return Err(Error::invalid("generator acts outside the register"));
        }
        let t = StabilizerTableau { n, gens };
        t.check()?;
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[Pauli] {
        &self.gens
    }

    /// Generator strings, qubit 0 first.
    pub fn to_strings(&self) -> Vec<String> {
        self.gens.iter().map(|g| g.to_string_n(self.n)).collect()
    }

    fn qubit(&self, q: usize) -> Result<()> {
        if q >= self.n {
            return Err(Error::invalid(format!("qubit {q} outside a {}-qubit register", self.n)));
        }
        Ok(())
    }

    pub fn h(&mut self, q: usize) -> Result<()> {
        self.qubit(q)?;
        let m = 1u128 << q;
        for g in &mut self.gens {
            let (xb, zb) = (g.x & m, g.z & m);
            // H (XZ) H = ZX = −XZ
            if xb != 0 && zb != 0 {
                g.phase = (g.phase + 2) % 4;
            }
            g.x = (g.x & !m) | zb;
            g.z = (g.z & !m) | xb;
        }
        Ok(())
    }

    pub fn x(&mut self, q: usize) -> Result<()> {
        self.qubit(q)?;
        for g in &mut self.gens {
            if g.z_bit(q) {
                g.phase = (g.phase + 2) % 4;
            }
        }
        Ok(())
    }

    pub fn z(&mut self, q: usize) -> Result<()> {
        self.qubit(q)?;
        for g in &mut self.gens {
            if g.x_bit(q) {
                g.phase = (g.phase + 2) % 4;
            }
        }
        Ok(())
    }

    /// CNOT: X_c → X_c X_t, Z_t → Z_c Z_t. Phase free in X-then-Z ordering.
    pub fn cnot(&mut self, c: usize, t: usize) -> Result<()> {
        self.qubit(c)?;
        self.qubit(t)?;
        if c == t {
            return Err(Error::invalid("CNOT control equals target"));
        }
        for g in &mut self.gens {
            if g.x_bit(c) {
                g.x ^= 1 << t;
            }
            if g.z_bit(t) {
                g.z ^= 1 << c;
            }
        }
        Ok(())
    }

    /// Projects qubit `q` onto the ±1 eigenspace of X. Returns whether the
    /// outcome was already fixed by the state; a fixed outcome opposite to
    /// the requested one is an error.
    pub fn measure_x(&mut self, q: usize, outcome: Sign) -> Result<bool> {
        self.qubit(q)?;
        let obs = Pauli::x(q);
        let target = if outcome == Sign::Plus { obs } else { obs.negate() };
        match self.gens.iter().position(|g| !g.commutes(&obs)) {
            Some(k) => {
                let pivot = self.gens[k];
                for (i, g) in self.gens.iter_mut().enumerate() {
                    if i != k && !g.commutes(&obs) {
                        *g = *g * pivot;
                    }
                }
                self.gens[k] = target;
                Ok(false)
            }
            None => match self.expectation(&obs) {
                Some(v) if v == outcome.value() => {
                    // Every generator commutes with X_q, so none carries Z_q;
                    // make ±X_q itself a generator.
                    let k = self.gens.iter().position(|g| g.x_bit(q)).expect("X_q lies in the group");
                    let pivot = self.gens[k];
                    for (i, g) in self.gens.iter_mut().enumerate() {
                        if i != k && g.x_bit(q) {
                            *g = *g * pivot;
                        }
                    }
                    self.gens[k] = target;
                    Ok(true)
                }
                _ => Err(Error::invalid(format!("X outcome {outcome:?} on qubit {q} has zero probability"))),
            },
        }
    }

    /// Drops qubit `q` after it has been measured in the X basis: the
    /// generator ±X_q is removed and the remaining generators are freed of
    /// their X_q factors.
    pub fn remove_measured_x(&self, q: usize) -> Result<StabilizerTableau> {
        self.qubit(q)?;
        if self.n == 1 {
            return Err(Error::invalid("cannot remove the only qubit"));
        }
        let k = self
            .gens
            .iter()
            .position(|g| g.x == 1 << q && g.z == 0)
            .ok_or_else(|| Error::invalid(format!("qubit {q} is not in an X eigenstate")))?;
        let anc = self.gens[k];
        let mut out = Vec::with_capacity(self.n - 1);
        for (i, g) in self.gens.iter().enumerate() {
            if i == k {
                continue;
            }
            let mut g = *g;
            if g.z_bit(q) {
                return Err(Error::invalid("generator anticommutes with the measured X"));
            }
            if g.x_bit(q) {
                g = g * anc;
            }
            out.push(Pauli { x: squeeze(g.x, q), z: squeeze(g.z, q), phase: g.phase });
        }
        StabilizerTableau::from_generators(self.n - 1, out)
    }

    /// Some(±1) if ±P is in the stabilizer group, None if P is not
    /// determined by the state.
    pub fn expectation(&self, p: &Pauli) -> Option<i8> {
        if self.gens.iter().any(|g| !g.commutes(p)) {
            return None;
        }
        let basis = echelon(&self.gens, self.n);
        let mut r = *p;
        for (bit, row) in &basis {
            if get_bit(&r, *bit, self.n) {
                r = r * *row;
            }
        }
        if !r.is_identity_up_to_phase() {
            return None;
        }
        // P · g = i^k I with g in the group; P² = I so g = i^k P.
        match r.phase {
            0 => Some(1),
            2 => Some(-1),
            _ => None,
        }
    }

    /// Both groups contain each other's generators with the same signs.
    pub fn same_state(&self, other: &StabilizerTableau) -> bool {
        self.n == other.n && other.gens.iter().all(|g| self.expectation(g) == Some(1))
    }

    /// Commuting, Hermitian, independent generators.
    pub fn check(&self) -> Result<()> {
        if self.gens.len() != self.n {
            return Err(Error::invalid(format!("{} generators for {} qubits", self.gens.len(), self.n)));
        }
        for (i, a) in self.gens.iter().enumerate() {
            if !a.is_hermitian() {
                return Err(Error::invalid(format!("generator {i} is not Hermitian")));
            }
            if self.gens[i + 1..].iter().any(|b| !a.commutes(b)) {
                return Err(Error::invalid(format!("generator {i} anticommutes with a later one")));
            }
        }
        if echelon(&self.gens, self.n).len() != self.n {
            return Err(Error::invalid("generators are not independent"));
        }
        if self.gens.iter().any(|g| g.is_identity_up_to_phase()) {
            return Err(Error::invalid("generator is ± identity"));
        }
        Ok(())
    }
}

fn squeeze(v: u128, q: usize) -> u128 {
    let low = v & ((1u128 << q) - 1);
    let high = if q + 1 >= 128 { 0 } else { v >> (q + 1) };
    low | (high << q)
}

fn get_bit(p: &Pauli, bit: usize, n: usize) -> bool {
    if bit < n {
        p.x_bit(bit)
    } else {
        p.z_bit(bit - n)
    }
}

/// Reduced rows (pivot bit, group element) spanning the generators.
fn echelon(gens: &[Pauli], n: usize) -> Vec<(usize, Pauli)> {
    let mut rows: Vec<Pauli> = gens.to_vec();
    let mut basis = Vec::new();
    for bit in 0..2 * n {
        let Some(k) = rows.iter().position(|r| get_bit(r, bit, n)) else { continue };
        let pivot = rows.swap_remove(k);
        for r in rows.iter_mut() {
            if get_bit(r, bit, n) {
                *r = *r * pivot;
            }
        }
        for (_, b) in basis.iter_mut() {
            if get_bit(b, bit, n) {
                *b = *b * pivot;
            }
        }
        basis.push((bit, pivot));
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: usize, gens: &[&str]) -> StabilizerTableau {
        StabilizerTableau::from_generators(n, gens.iter().map(|s| s.parse().unwrap()).collect()).unwrap()
    }

    #[test]
    fn bell_state_from_gates() {
        let mut s = StabilizerTableau::zero_state(2).unwrap();
        s.h(0).unwrap();
        s.cnot(0, 1).unwrap();
        assert!(s.same_state(&t(2, &["+XX", "+ZZ"])));
        assert_eq!(s.expectation(&"-YY".parse().unwrap()), Some(1));
        assert_eq!(s.expectation(&"+ZI".parse().unwrap()), None);
        s.x(1).unwrap();
        assert!(s.same_state(&t(2, &["+XX", "-ZZ"])));
        s.z(0).unwrap();
        assert!(s.same_state(&t(2, &["-XX", "-ZZ"])));
    }

    #[test]
    fn hadamard_maps_y_to_minus_y() {
        let mut s = t(1, &["+Y"]);
        s.h(0).unwrap();
        assert!(s.same_state(&t(1, &["-Y"])));
    }

    #[test]
    fn invalid_generators_rejected() {
        let p = |s: &str| s.parse::<Pauli>().unwrap();
        assert!(StabilizerTableau::from_generators(2, vec![p("XI"), p("ZI")]).is_err());
        assert!(StabilizerTableau::from_generators(2, vec![p("ZZ"), p("ZZ")]).is_err());
        assert!(StabilizerTableau::from_generators(1, vec![p("XZ")]).is_err());
        assert!(StabilizerTableau::zero_state(0).is_err());
    }

    #[test]
    fn measurement_and_removal() {
        // |+⟩|0⟩ then CNOT: GHZ₂; measuring X on qubit 0 leaves |±⟩ on qubit 1.
        let mut s = StabilizerTableau::zero_state(2).unwrap();
        s.h(0).unwrap();
        s.cnot(0, 1).unwrap();
        let mut m = s.clone();
        assert!(!m.measure_x(0, Sign::Minus).unwrap());
        let rest = m.remove_measured_x(0).unwrap();
        assert!(rest.same_state(&t(1, &["-X"])));
        // Deterministic outcomes.
        let mut p = t(1, &["+X"]);
        assert!(p.measure_x(0, Sign::Plus).unwrap());
        assert!(p.measure_x(0, Sign::Minus).is_err());
    }

    #[test]
    fn squeeze_bits() {
        assert_eq!(squeeze(0b1011, 1), 0b101);
        assert_eq!(squeeze(0b1011, 0), 0b101);
        assert_eq!(squeeze(1 << 127, 127), 0);
    }
}
