//! Symmetric Gauss quadrature rules on the reference triangle
//! {(x,y): x,y ≥ 0, x+y ≤ 1}.
//!
//! Points are stored in barycentric coordinates (λ1, λ2, λ3); weights are
//! normalized so they sum to the reference area 1/2.

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rule exact for polynomials up to the requested total degree (1..=5).
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule> {
    let (points, weights): (Vec<[f64; 3]>, Vec<f64>) = match degree {
        1 => (
            vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
            vec![1.0],
        ),
        2 => {
            let mut p = Vec::new();
            for k in 0..3 {
                let mut bary = [1.0 / 6.0; 3];
                bary[k] = 2.0 / 3.0;
                p.push(bary);
            }
            (p, vec![1.0 / 3.0; 3])
        }
        3 => {
            let mut p = vec![[1.0 / 3.0; 3]];
            let mut w = vec![-27.0 / 48.0];
            for k in 0..3 {
                let mut bary = [0.2; 3];
                bary[k] = 0.6;
                p.push(bary);
                w.push(25.0 / 48.0);
            }
            (p, w)
        }
        4 => {
            let mut p = Vec::new();
            let mut w = Vec::new();
            for (a, wa) in [
                (0.445948490915965, 0.223381589678011),
                (0.091576213509771, 0.109951743655322),
            ] {
                for k in 0..3 {
                    let mut bary = [a; 3];
                    bary[k] = 1.0 - 2.0 * a;
                    p.push(bary);
                    w.push(wa);
                }
            }
            (p, w)
        }
        5 => {
            let mut p = vec![[1.0 / 3.0; 3]];
            let mut w = vec![0.225];
            for (a, wa) in [
                (0.470142064105115, 0.132394152788506),
                (0.101286507323456, 0.125939180544827),
            ] {
                for k in 0..3 {
                    let mut bary = [a; 3];
                    bary[k] = 1.0 - 2.0 * a;
                    p.push(bary);
                    w.push(wa);
                }
            }
            (p, w)
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unsupported quadrature degree {degree} (supported: 1..=5)"
            )))
        }
    };
    // Stored weights above integrate over the unit-area triangle; rescale to
    // the reference triangle of area 1/2.
    let weights = weights.into_iter().map(|w| 0.5 * w).collect();
    Ok(QuadratureRule {
        points,
        weights,
        degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// ∫ x^i y^j over the reference triangle = i! j! / (i+j+2)!.
    fn monomial_exact(i: usize, j: usize) -> f64 {
        factorial(i) * factorial(j) / factorial(i + j + 2)
    }

    fn integrate_monomial(rule: &QuadratureRule, i: usize, j: usize) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| {
                let (x, y) = (p[1], p[2]);
                w * x.powi(i as i32) * y.powi(j as i32)
            })
            .sum()
    }

    #[test]
    fn weights_sum_to_half() {
        for degree in 1..=5 {
            let rule = quadrature_rule(degree).unwrap();
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 0.5).abs() < 1e-14, "degree {degree}");
        }
    }

    #[test]
    fn degree_one_is_centroid() {
        let rule = quadrature_rule(1).unwrap();
        assert_eq!(rule.len(), 1);
        assert!((rule.weights[0] - 0.5).abs() < 1e-15);
        for lambda in rule.points[0] {
            assert!((lambda - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn degree_two_structure() {
        let rule = quadrature_rule(2).unwrap();
        assert_eq!(rule.len(), 3);
        for w in &rule.weights {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exactness_up_to_declared_degree() {
        for degree in 1..=5 {
            let rule = quadrature_rule(degree).unwrap();
            for i in 0..=degree {
                for j in 0..=(degree - i) {
                    let got = integrate_monomial(&rule, i, j);
                    let want = monomial_exact(i, j);
                    assert!(
                        (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                        "degree {degree}, x^{i} y^{j}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn degree_five_seven_points_and_x2y3() {
        let rule = quadrature_rule(5).unwrap();
        assert_eq!(rule.len(), 7);
        let got = integrate_monomial(&rule, 2, 3);
        assert!((got - 1.0 / 420.0).abs() < 1e-12);
    }

    #[test]
    fn unsupported_degree_rejected() {
        assert!(quadrature_rule(0).is_err());
        assert!(quadrature_rule(6).is_err());
    }

    proptest! {
        #[test]
        fn barycentric_coordinates_valid(degree in 1usize..=5) {
            let rule = quadrature_rule(degree).unwrap();
            for p in &rule.points {
                let s: f64 = p.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-14);
                for lambda in p {
                    prop_assert!(*lambda > 0.0 || degree == 3);
                }
            }
        }
    }
}
