use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Largest register a [`Pauli`] can describe.
pub const MAX_QUBITS: usize = 128;

/// i^phase · ∏_q X_q^{x_q} Z_q^{z_q}, each qubit's factors in X-then-Z order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pauli {
    pub x: u128,
    pub z: u128,
    pub phase: u8,
}

impl Pauli {
    pub const IDENTITY: Pauli = Pauli { x: 0, z: 0, phase: 0 };

    pub fn x(q: usize) -> Self {
        Pauli { x: 1 << q, z: 0, phase: 0 }
    }

    pub fn z(q: usize) -> Self {
        Pauli { x: 0, z: 1 << q, phase: 0 }
    }

    pub fn y(q: usize) -> Self {
        Pauli { x: 1 << q, z: 1 << q, phase: 1 }
    }

    pub fn is_identity_up_to_phase(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn commutes(&self, o: &Pauli) -> bool {
        ((self.x & o.z) ^ (self.z & o.x)).count_ones() % 2 == 0
    }

    /// Hermitian Paulis carry a real sign relative to the XYZ product.
    pub fn is_hermitian(&self) -> bool {
        (self.phase as u32 + (self.x & self.z).count_ones()) % 2 == 0
    }

    /// ±1 for Hermitian operators: the sign in front of the ⊗{I,X,Y,Z} string.
    pub fn sign(&self) -> i8 {
        let k = (self.phase as i32 - (self.x & self.z).count_ones() as i32).rem_euclid(4);
        match k {
            0 => 1,
            2 => -1,
            _ => panic!("sign of a non-Hermitian Pauli"),
        }
    }

    pub fn negate(mut self) -> Self {
        self.phase = (self.phase + 2) % 4;
        self
    }

    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    pub(crate) fn x_bit(&self, q: usize) -> bool {
        (self.x >> q) & 1 == 1
    }

    pub(crate) fn z_bit(&self, q: usize) -> bool {
        (self.z >> q) & 1 == 1
    }

    /// Text form such as `+XIZ`, qubit 0 first, padded to `n` qubits.
    pub fn to_string_n(&self, n: usize) -> String {
        let mut s = String::with_capacity(n + 1);
        s.push(if self.sign() > 0 { '+' } else { '-' });
        for q in 0..n {
            s.push(match (self.x_bit(q), self.z_bit(q)) {
                (false, false) => 'I',
                (true, false) => 'X',
                (false, true) => 'Z',
                (true, true) => 'Y',
            });
        }
        s
    }
}

impl std::ops::Mul for Pauli {
    type Output = Pauli;

    fn mul(self, o: Pauli) -> Pauli {
        // Z^a X^b = (−1)^{ab} X^b Z^a per qubit.
        let swaps = (self.z & o.x).count_ones() as u8;
        Pauli {
            x: self.x ^ o.x,
            z: self.z ^ o.z,
            phase: (self.phase + o.phase + 2 * (swaps % 2)) % 4,
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = (128 - (self.x | self.z).leading_zeros()) as usize;
        f.write_str(&self.to_string_n(n.max(1)))
    }
}

impl FromStr for Pauli {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (neg, body) = match s.as_bytes().first() {
            Some(b'+') => (false, &s[1..]),
            Some(b'-') => (true, &s[1..]),
            _ => (false, s),
        };
        if body.len() > MAX_QUBITS {
            return Err(Error::invalid(format!("Pauli string longer than {MAX_QUBITS} qubits")));
        }
        let mut p = Pauli::IDENTITY;
        for (q, c) in body.chars().enumerate() {
            let f = match c {
                'I' => Pauli::IDENTITY,
                'X' => Pauli::x(q),
                'Y' => Pauli::y(q),
                'Z' => Pauli::z(q),
                _ => return Err(Error::invalid(format!("bad Pauli letter {c:?}"))),
            };
            p = p * f;
        }
        Ok(if neg { p.negate() } else { p })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Pauli {
        s.parse().unwrap()
    }

    #[test]
    fn single_qubit_algebra() {
        assert_eq!(Pauli::x(0) * Pauli::x(0), Pauli::IDENTITY);
        // XY = iZ, YZ = iX, ZX = iY
        let xy = Pauli::x(0) * Pauli::y(0);
        assert_eq!((xy.x, xy.z, xy.phase), (0, 1, 1));
        let yz = Pauli::y(0) * Pauli::z(0);
        assert_eq!((yz.x, yz.z, yz.phase), (1, 0, 1));
        assert_eq!(Pauli::z(0) * Pauli::x(0), Pauli { x: 1, z: 1, phase: 2 });
        assert_eq!(Pauli::y(0) * Pauli::y(0), Pauli::IDENTITY);
    }

    #[test]
    fn parse_and_print() {
        for s in ["+XYZI", "-ZZ", "+I", "-YIY"] {
            assert_eq!(p(s).to_string_n(s.len() - 1), s);
        }
        assert!(p("+XYZ").is_hermitian());
        assert!(!(Pauli::x(0) * Pauli::z(0)).is_hermitian());
        assert!("XQ".parse::<Pauli>().is_err());
    }

    #[test]
    fn commutation() {
        assert!(p("XX").commutes(&p("ZZ")));
        assert!(!p("XI").commutes(&p("ZI")));
        assert!(p("XYZ").commutes(&p("XYZ")));
        assert!(!p("Y").commutes(&p("Z")));
    }
}
