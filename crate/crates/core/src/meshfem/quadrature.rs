//! Symmetric Gauss rules on the reference triangle, in barycentric form.
//!
//! Weights sum to one; multiply by the triangle area to integrate.

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn orbit3(a: f64, w: f64, pts: &mut Vec<[f64; 3]>, ws: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        pts.push(p);
        ws.push(w);
    }
}

impl QuadratureRule {
    pub fn centroid() -> Self {
        Self {
            degree: 1,
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    pub fn three_point() -> Self {
        let (mut p, mut w) = (Vec::new(), Vec::new());
        orbit3(1.0 / 6.0, 1.0 / 3.0, &mut p, &mut w);
        Self { degree: 2, points: p, weights: w }
    }

    pub fn six_point() -> Self {
        let (mut p, mut w) = (Vec::new(), Vec::new());
        orbit3(0.445_948_490_915_964_9, 0.223_381_589_678_011_47, &mut p, &mut w);
        orbit3(0.091_576_213_509_770_74, 0.109_951_743_655_321_87, &mut p, &mut w);
        Self { degree: 4, points: p, weights: w }
    }

    pub fn seven_point() -> Self {
        let s = 15f64.sqrt();
        let (mut p, mut w) = (vec![[1.0 / 3.0; 3]], vec![9.0 / 40.0]);
        orbit3((6.0 - s) / 21.0, (155.0 - s) / 1200.0, &mut p, &mut w);
        orbit3((6.0 + s) / 21.0, (155.0 + s) / 1200.0, &mut p, &mut w);
        Self { degree: 5, points: p, weights: w }
    }

    /// Cheapest available rule exact for polynomials of total degree `d`.
    pub fn for_degree(d: usize) -> Self {
        match d {
            0 | 1 => Self::centroid(),
            2 => Self::three_point(),
            3 | 4 => Self::six_point(),
            5 => Self::seven_point(),
            _ => panic!("no triangle rule of degree {d}"),
        }
    }
}

/// Three-point Gauss-Legendre rule on `[0, 1]`, exact to degree 5.
pub fn gauss_segment() -> [(f64, f64); 3] {
    let r = (0.6f64).sqrt() / 2.0;
    [(0.5 - r, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + r, 5.0 / 18.0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // ∫_T λ0^a λ1^b λ2^c / |T| = 2 a! b! c! / (a+b+c+2)!
    fn exact(a: u32, b: u32, c: u32) -> f64 {
        2.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)
    }

    #[test]
    fn rules_are_exact_to_their_degree() {
        for rule in [
            QuadratureRule::centroid(),
            QuadratureRule::three_point(),
            QuadratureRule::six_point(),
            QuadratureRule::seven_point(),
        ] {
            let d = rule.degree as u32;
            for a in 0..=d {
                for b in 0..=d - a {
                    for c in 0..=d - a - b {
                        let q: f64 = rule
                            .points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                            .sum();
                        assert!((q - exact(a, b, c)).abs() < 1e-14, "deg {d} monomial {a}{b}{c}");
                    }
                }
            }
        }
    }

    #[test]
    fn segment_rule_degree_five() {
        for k in 0..=5 {
            let q: f64 = gauss_segment().iter().map(|(t, w)| w * t.powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
