//! Composite Gauss–Legendre quadrature.

const NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Abscissae and weights of an 8-point rule on each of `panels` equal
/// sub-intervals of [a, b].
pub(crate) fn composite(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(8 * panels);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            out.push((mid - half * x, half * w));
            out.push((mid + half * x, half * w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval() {
        let s: f64 = composite(-1.0, 3.0, 5).iter().map(|p| p.1).sum();
        assert!((s - 4.0).abs() < 1e-14);
    }

    #[test]
    fn exact_for_degree_15() {
        let s: f64 = composite(0.0, 1.0, 1).iter().map(|&(x, w)| w * x.powi(15)).sum();
        assert!((s - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn oscillatory_integral() {
        // ∫₀^π sin(20x) dx = (1 − cos 20π)/20 = 0
        let s: f64 = composite(0.0, std::f64::consts::PI, 20)
            .iter()
            .map(|&(x, w)| w * (20.0 * x).sin())
            .sum();
        assert!(s.abs() < 1e-12);
    }
}
