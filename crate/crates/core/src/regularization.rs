//! Mollified kernels and the estimates that compare them with the original.
//!
//! The bump is `f(x) = exp(-1/(1 - |x|²))` on the unit ball, `f_δ(x) = f(δx)`,
//! and `f̃_δ = f_δ * f_δ`. All convolutions are continuous integrals done with
//! the trapezoid rule on a uniform grid; no lattice sums are involved.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::FieldSpec;
use crate::lattice::{japanese, GeneralKernel, HoppingSymbol};
use crate::phase::{flux_triangle, Triangle};
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// Grid step used when none is given, in units of `1/δ`.
pub const DEFAULT_STEP: f64 = 0.02;
/// Coarsest step accepted, in units of `1/δ`.
pub const MAX_STEP: f64 = 0.05;

/// The unit bump.
pub fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// `‖f‖₂²` on `R^d`, from a grid four times finer than the default.
pub fn bump_norm_sq(dim: usize) -> f64 {
    static CACHE: [OnceLock<f64>; 2] = [OnceLock::new(), OnceLock::new()];
    let compute = move || {
        let h = DEFAULT_STEP / 4.0;
        let k = (1.0 / h).ceil() as i64;
        let mut total = 0.0;
        let mut idx = vec![-k; dim];
        loop {
            let r2: f64 = idx.iter().map(|&i| (i as f64 * h).powi(2)).sum();
            total += bump(r2).powi(2);
            if !advance(&mut idx, k) {
                break;
            }
        }
        total * h.powi(dim as i32)
    };
    match dim {
        1 | 2 => *CACHE[dim - 1].get_or_init(compute),
        _ => compute(),
    }
}

fn advance(idx: &mut [i64], k: i64) -> bool {
    for c in idx.iter_mut().rev() {
        if *c < k {
            *c += 1;
            return true;
        }
        *c = -k;
    }
    false
}

fn is_positive_half(idx: &[i64]) -> bool {
    idx.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    dim: usize,
    delta: f64,
    step: f64,
}

impl Mollifier {
    /// `step` is the absolute grid spacing; it is checked against
    /// `0.05/δ` when the mollifier is used.
    pub fn new(dim: usize, delta: f64, step: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!(
                "mollifier dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta = {delta}")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step = {step}")));
        }
        Ok(Self { dim, delta, step })
    }

    pub fn with_default_step(dim: usize, delta: f64) -> Result<Self> {
        Self::new(dim, delta, DEFAULT_STEP / delta)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn check_resolution(&self) -> Result<()> {
        let limit = MAX_STEP / self.delta;
        if self.step > limit {
            return Err(Error::UnderResolved {
                step: self.step,
                limit,
            });
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("mollifier argument".into()));
        }
        Ok(())
    }

    /// `f_δ(x)`.
    pub fn f_delta(&self, x: &[f64]) -> f64 {
        bump(x.iter().map(|c| (self.delta * c).powi(2)).sum())
    }

    /// `‖f_δ‖₂² = δ^{-d} ‖f‖₂²`.
    pub fn norm_sq(&self) -> f64 {
        bump_norm_sq(self.dim) / self.delta.powi(self.dim as i32)
    }

    /// Half-width of the grid index range covering `|y| < 1/δ`.
    fn reach(&self) -> i64 {
        (1.0 / (self.delta * self.step)).ceil() as i64
    }

    /// `(f_δ * f_δ)(x)`. The grid is centred at `x/2` and summed in `±k`
    /// pairs, so `f̃_δ(-x) = f̃_δ(x)` holds exactly.
    pub fn tilde_f(&self, x: &[f64]) -> Result<f64> {
        self.check_resolution()?;
        self.check_point(x)?;
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r * self.delta >= 2.0 {
            return Ok(0.0);
        }
        let h = self.step;
        let a: Vec<f64> = x.iter().map(|c| 0.5 * c).collect();
        let k = self.reach();
        let d = self.dim;
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        let mut term = |idx: &[i64]| {
            for i in 0..d {
                let w = idx[i] as f64 * h;
                plus[i] = a[i] + w;
                minus[i] = a[i] - w;
            }
            self.f_delta(&plus) * self.f_delta(&minus)
        };
        let origin = vec![0; d];
        let mut total = term(&origin);
        let mut idx = vec![-k; d];
        loop {
            if is_positive_half(&idx) {
                let neg: Vec<i64> = idx.iter().map(|c| -c).collect();
                total += term(&idx) + term(&neg);
            }
            if !advance(&mut idx, k) {
                break;
            }
        }
        Ok(total * h.powi(d as i32))
    }

    /// `f̃_δ(x) / f̃_δ(0)`.
    pub fn ratio(&self, x: &[f64]) -> Result<f64> {
        let zero = self.tilde_f(&vec![0.0; self.dim])?;
        Ok(self.tilde_f(x)? / zero)
    }
}

#[derive(Debug, Clone)]
pub struct MollifiedKernel {
    pub kernel: GeneralKernel,
    /// Every off-diagonal entry vanished.
    pub annihilated: bool,
    /// `f̃_δ(h)/f̃_δ(0)` per support offset, clamped to `[0, 1]`.
    pub ratios: BTreeMap<Vec<i64>, f64>,
}

/// `K_δ(γ, γ') = λ(γ - γ') f̃_δ(γ - γ') / f̃_δ(0)`.
pub fn mollified_kernel(symbol: &HoppingSymbol, moll: &Mollifier) -> Result<MollifiedKernel> {
    if symbol.dim() != moll.dim() {
        return Err(Error::DimensionMismatch {
            expected: moll.dim(),
            got: symbol.dim(),
        });
    }
    let mut ratios = BTreeMap::new();
    for (h, _) in symbol.iter() {
        let x: Vec<f64> = h.iter().map(|&c| c as f64).collect();
        // the quadrature can overshoot 1 by rounding; the exact ratio cannot
        ratios.insert(h.clone(), moll.ratio(&x)?.clamp(0.0, 1.0));
    }
    let annihilated = symbol
        .iter()
        .filter(|(h, _)| h.iter().any(|&c| c != 0))
        .all(|(h, _)| ratios[h] == 0.0);
    let table = ratios.clone();
    let s = symbol.clone();
    let entry = move |g: &[i64], gp: &[i64]| -> Complex64 {
        let h: Vec<i64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
        match table.get(&h) {
            Some(r) => s.get(&h) * *r,
            None => Complex64::new(0.0, 0.0),
        }
    };
    let support = symbol
        .iter()
        .map(|(h, v)| (h.clone(), v.norm() * ratios[h]))
        .collect();
    let kernel = GeneralKernel::new(
        symbol.dim(),
        support,
        Arc::new(entry),
        format!("{} mollified at delta={}", symbol.label(), moll.delta()),
    )?;
    Ok(MollifiedKernel {
        kernel,
        annihilated,
        ratios,
    })
}

/// `max |f̃_δ(x) - f̃_δ(0)| / (|x|^α δ^{α-d})` over the nonzero samples.
pub fn mollifier_difference_bound(
    moll: &Mollifier,
    alpha: f64,
    samples: &[Vec<f64>],
) -> Result<f64> {
    if !(1.0..=2.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} outside [1, 2]"
        )));
    }
    let zero = moll.tilde_f(&vec![0.0; moll.dim()])?;
    let scale = moll.delta().powf(alpha - moll.dim() as f64);
    let mut best = 0.0f64;
    for x in samples {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let diff = (moll.tilde_f(x)? - zero).abs();
        if r > 0.0 {
            best = best.max(diff / (r.powf(alpha) * scale));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurDifference {
    /// `Σ_γ |λ(γ)| |f̃_δ(γ)/f̃_δ(0) - 1|`
    pub lhs: f64,
    /// `(C / ‖f‖₂²) δ^a ‖T‖_a` with `a = min(α, 2)` and `C` measured on the
    /// symbol's support.
    pub rhs: f64,
    pub constant: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl SchurDifference {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-15
    }
}

/// Schur bound on `‖T_{K_δ} - T_K‖` against its predicted `δ^a` profile.
pub fn schur_difference_certificate(
    symbol: &HoppingSymbol,
    moll: &Mollifier,
    alpha: f64,
) -> Result<SchurDifference> {
    if symbol.dim() != moll.dim() {
        return Err(Error::DimensionMismatch {
            expected: moll.dim(),
            got: symbol.dim(),
        });
    }
    if !(alpha >= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} below 1")));
    }
    let a = alpha.min(2.0);
    let zero = moll.tilde_f(&vec![0.0; moll.dim()])?;
    let mut lhs = 0.0;
    let mut samples = Vec::new();
    for (h, v) in symbol.iter() {
        let x: Vec<f64> = h.iter().map(|&c| c as f64).collect();
        lhs += v.norm() * (moll.tilde_f(&x)? / zero - 1.0).abs();
        samples.push(x);
    }
    let constant = mollifier_difference_bound(moll, a, &samples)?;
    let rhs =
        constant / bump_norm_sq(moll.dim()) * moll.delta().powf(a) * symbol.schur_alpha_norm(a);
    Ok(SchurDifference {
        lhs,
        rhs,
        constant,
        alpha: a,
        delta: moll.delta(),
    })
}

/// `∫ f_δ(x - y) f_δ(y - x') Φ(x, y, x') dy` on a grid centred at the
/// midpoint of `x` and `x'`.
pub fn linear_term_integral(
    moll: &Mollifier,
    field: &FieldSpec,
    x: &[f64],
    xp: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    moll.check_resolution()?;
    moll.check_point(x)?;
    moll.check_point(xp)?;
    if field.dim() != moll.dim() {
        return Err(Error::DimensionMismatch {
            expected: moll.dim(),
            got: field.dim(),
        });
    }
    let d = moll.dim();
    let h = moll.step();
    let c: Vec<f64> = x.iter().zip(xp).map(|(a, b)| 0.5 * (a + b)).collect();
    let half: Vec<f64> = x.iter().zip(xp).map(|(a, b)| 0.5 * (b - a)).collect();
    let half_len = half.iter().map(|v| v * v).sum::<f64>().sqrt();
    if half_len * moll.delta() >= 1.0 {
        return Ok(0.0);
    }
    let k = moll.reach();
    let term = |idx: &[i64]| -> Result<f64> {
        let y: Vec<f64> = (0..d).map(|i| c[i] + idx[i] as f64 * h).collect();
        let dx: Vec<f64> = (0..d).map(|i| x[i] - y[i]).collect();
        let dxp: Vec<f64> = (0..d).map(|i| y[i] - xp[i]).collect();
        let w = moll.f_delta(&dx) * moll.f_delta(&dxp);
        if w == 0.0 {
            return Ok(0.0);
        }
        let flux = flux_triangle(field, &Triangle::new(x.to_vec(), y, xp.to_vec()), rule)?;
        Ok(w * flux)
    };
    let origin = vec![0; d];
    let mut total = term(&origin)?;
    let mut idx = vec![-k; d];
    loop {
        if is_positive_half(&idx) {
            let neg: Vec<i64> = idx.iter().map(|c| -c).collect();
            total += term(&idx)? + term(&neg)?;
        }
        if !advance(&mut idx, k) {
            break;
        }
    }
    Ok(total * h.powi(d as i32))
}

/// `δ^{-d} ‖f‖₂² |x - x'|`, the size the linear term is compared against.
pub fn linear_term_scale(moll: &Mollifier, x: &[f64], xp: &[f64]) -> f64 {
    let dist = x
        .iter()
        .zip(xp)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    moll.norm_sq() * dist
}

/// `Σ |λ(γ)| ⟨γ⟩^α` of the mollified kernel, from its support bounds.
pub fn mollified_schur_norm(kernel: &MollifiedKernel, alpha: f64) -> f64 {
    kernel
        .kernel
        .support()
        .iter()
        .map(|(h, b)| b * japanese(h).powf(alpha))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_norm_matches_reference() {
        // ∫ exp(-2/(1-x²)) dx over (-1, 1)
        let n1 = bump_norm_sq(1);
        assert!((n1 - 0.133_086_120_844_993).abs() < 1e-12, "{n1}");
        assert!(bump_norm_sq(2) > 0.0);
    }

    #[test]
    fn tilde_f_support_and_symmetry() {
        let m = Mollifier::with_default_step(2, 0.5).unwrap();
        assert_eq!(m.tilde_f(&[4.0, 0.0]).unwrap(), 0.0);
        assert_eq!(m.tilde_f(&[3.0, 3.0]).unwrap(), 0.0);
        for x in [[0.3, -1.1], [2.5, 0.7], [-0.01, 3.2]] {
            let neg = [-x[0], -x[1]];
            assert_eq!(m.tilde_f(&x).unwrap(), m.tilde_f(&neg).unwrap());
        }
    }

    #[test]
    fn normalization_identity() {
        for dim in [1, 2] {
            for delta in [0.5, 0.25, 0.125] {
                let m = Mollifier::with_default_step(dim, delta).unwrap();
                let v = m.tilde_f(&vec![0.0; dim]).unwrap() / m.norm_sq();
                assert!((v - 1.0).abs() < 1e-10, "d={dim} δ={delta}: {v}");
            }
        }
    }

    #[test]
    fn under_resolved_grid_rejected() {
        let m = Mollifier::new(1, 0.5, 0.2).unwrap();
        assert!(matches!(
            m.tilde_f(&[0.0]),
            Err(Error::UnderResolved { .. })
        ));
        assert!(Mollifier::new(3, 0.5, 0.01).is_err());
    }

    #[test]
    fn mollified_kernel_properties() {
        let s = HoppingSymbol::harper(2);
        let m = Mollifier::with_default_step(2, 0.25).unwrap();
        let k = mollified_kernel(&s, &m).unwrap();
        assert!(!k.annihilated);
        for (h, r) in &k.ratios {
            assert!(*r <= 1.0 && *r > 0.0, "{h:?}");
        }
        let far = Mollifier::with_default_step(2, 2.5).unwrap();
        assert!(mollified_kernel(&s, &far).unwrap().annihilated);
        let id = mollified_kernel(&HoppingSymbol::identity(2), &m).unwrap();
        assert_eq!(id.ratios[&vec![0, 0]], 1.0);
    }

    #[test]
    fn schur_difference_for_identity_is_zero() {
        let m = Mollifier::with_default_step(1, 0.5).unwrap();
        let c = schur_difference_certificate(&HoppingSymbol::identity(1), &m, 2.0).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.holds());
    }

    #[test]
    fn linear_term_degenerate_segment() {
        let m = Mollifier::with_default_step(2, 0.5).unwrap();
        let rule = QuadratureRule::shared_default();
        let v = linear_term_integral(
            &m,
            &FieldSpec::constant_unit(2),
            &[0.3, 0.2],
            &[0.3, 0.2],
            rule,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }
}
