//! Product rules on the simplex `{0 <= s <= t <= 1}`.
//!
//! The simplex is collapsed onto the unit square by `s = t * u`. The `u`
//! direction uses Gauss–Legendre nodes; the `t` direction absorbs the Jacobian
//! `t` into a Gauss–Jacobi rule with weight `t`, so an `n`-point rule
//! integrates every bivariate polynomial of total degree `2n - 1` exactly.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

pub const DEFAULT_ORDER: usize = 20;

/// One node of a simplex rule, in `(t, s)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexNode {
    pub t: f64,
    pub s: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<SimplexNode>,
}

impl QuadratureRule {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter(
                "quadrature order must be positive".into(),
            ));
        }
        let (ut, wt) = gauss_jacobi(order, 0.0, 1.0);
        let (uu, wu) = gauss_jacobi(order, 0.0, 0.0);
        let mut nodes = Vec::with_capacity(order * order);
        for (&xt, &wt) in ut.iter().zip(&wt) {
            // weight (1 + x) on [-1, 1] -> 4 t on [0, 1] after dx = 2 dt
            let t = 0.5 * (1.0 + xt);
            let wt = 0.25 * wt;
            for (&xu, &wu) in uu.iter().zip(&wu) {
                let u = 0.5 * (1.0 + xu);
                nodes.push(SimplexNode {
                    t,
                    s: t * u,
                    weight: wt * 0.5 * wu,
                });
            }
        }
        Ok(Self { order, nodes })
    }

    /// Process-wide rule of [`DEFAULT_ORDER`].
    pub fn shared_default() -> &'static QuadratureRule {
        static RULE: OnceLock<QuadratureRule> = OnceLock::new();
        RULE.get_or_init(|| QuadratureRule::new(DEFAULT_ORDER).expect("default order is valid"))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[SimplexNode] {
        &self.nodes
    }

    pub fn weight_sum(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// `∫₀¹ dt ∫₀ᵗ ds f(t, s)`.
    pub fn integrate<F>(&self, mut f: F) -> f64
    where
        F: FnMut(f64, f64) -> f64,
    {
        self.nodes.iter().map(|n| n.weight * f(n.t, n.s)).sum()
    }
}

/// Gauss–Jacobi nodes and weights on `[-1, 1]` for the weight
/// `(1 - x)^a (1 + x)^b`, by Golub–Welsch. Only integer-valued `a, b`
/// are used here, which keeps the moment `mu0` elementary.
fn gauss_jacobi(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        jac[(k, k)] = if s == 0.0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + a + b;
            let beta = 4.0 * m * (m + a) * (m + b) * (m + a + b) / (s * s * (s + 1.0) * (s - 1.0));
            jac[(k, k + 1)] = beta.sqrt();
            jac[(k + 1, k)] = beta.sqrt();
        }
    }
    let mu0 = 2f64.powf(a + b + 1.0) * gamma_int(a) * gamma_int(b) / gamma_int(a + b + 1.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

/// `Γ(m + 1) = m!` for small non-negative integer `m`.
fn gamma_int(m: f64) -> f64 {
    (1..=m.round() as u64).map(|k| k as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_exact(a: i32, b: i32) -> f64 {
        1.0 / (f64::from(b + 1) * f64::from(a + b + 2))
    }

    #[test]
    fn weights_sum_to_simplex_area() {
        for order in [1, 2, 5, 20, 32, 64] {
            let rule = QuadratureRule::new(order).unwrap();
            assert!((rule.weight_sum() - 0.5).abs() <= 0.5e-14, "order {order}");
        }
    }

    #[test]
    fn exact_to_degree_two_n_minus_one() {
        for order in [1usize, 2, 3, 6, 10] {
            let rule = QuadratureRule::new(order).unwrap();
            let top = 2 * order as i32 - 1;
            for a in 0..=top {
                for b in 0..=(top - a) {
                    let got = rule.integrate(|t, s| t.powi(a) * s.powi(b));
                    let want = monomial_exact(a, b);
                    assert!(
                        (got - want).abs() <= 1e-13 * want.max(1e-3),
                        "order {order} t^{a} s^{b}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn nodes_lie_in_simplex() {
        let rule = QuadratureRule::new(7).unwrap();
        assert_eq!(rule.nodes().len(), 49);
        for n in rule.nodes() {
            assert!(n.t > 0.0 && n.t < 1.0);
            assert!(n.s > 0.0 && n.s < n.t);
            assert!(n.weight > 0.0);
        }
    }

    #[test]
    fn zero_order_rejected() {
        assert!(QuadratureRule::new(0).is_err());
    }
}
