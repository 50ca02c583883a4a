//! Edge sweeps over the field strength, scaling-law fits, bound
//! certificates, and the mid-convexity / modulus-of-continuity chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{FieldKind, FieldSpec};
use crate::lattice::{bare_matrix, build_peierls_matrix, LatticeBox, LatticeKernel};
use crate::quadrature::QuadratureRule;
use crate::spectral::{edge, EdgeResult, SolverOptions, Which};
use crate::{Error, Result};

/// Multiplier applied to `tol · ‖T‖_Schur` to get the noise floor.
pub const NOISE_SAFETY: f64 = 1e3;

/// `{2^-k : k = 3..=10}`, increasing.
pub fn default_grid() -> Vec<f64> {
    dyadic_grid(3, 10)
}

/// `{2^-k : k = lo..=hi}`, increasing.
pub fn dyadic_grid(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).rev().map(|k| 0.5f64.powi(k as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSweep {
    pub which: Which,
    pub eps: Vec<f64>,
    pub edges: Vec<f64>,
    /// `|ℰ(ε) - ℰ(0)|`.
    pub deltas: Vec<f64>,
    pub residuals: Vec<f64>,
    pub flagged: Vec<bool>,
    pub base: f64,
    pub base_residual: f64,
    pub noise_floor: f64,
    pub field_kind: Option<FieldKind>,
    /// Schur norm of the unperturbed matrix.
    pub schur0: f64,
}

impl EdgeSweep {
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    /// `(ε, ΔE)` above the noise floor.
    pub fn usable(&self) -> Vec<(f64, f64)> {
        (0..self.len())
            .filter(|&i| !self.flagged[i])
            .map(|i| (self.eps[i], self.deltas[i]))
            .collect()
    }

    /// Assembles a sweep from edge values, flagging `ΔE` below `noise_floor`.
    pub fn from_edges(
        which: Which,
        base: EdgeResult,
        points: Vec<(f64, EdgeResult)>,
        noise_floor: f64,
        field_kind: Option<FieldKind>,
        schur0: f64,
    ) -> Self {
        let deltas: Vec<f64> = points
            .iter()
            .map(|(_, r)| (r.value - base.value).abs())
            .collect();
        Self {
            which,
            eps: points.iter().map(|p| p.0).collect(),
            edges: points.iter().map(|p| p.1.value).collect(),
            flagged: deltas.iter().map(|&d| d < noise_floor).collect(),
            deltas,
            residuals: points.iter().map(|p| p.1.residual).collect(),
            base: base.value,
            base_residual: base.residual,
            noise_floor,
            field_kind,
            schur0,
        }
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty eps grid".into()));
    }
    for (i, &e) in grid.iter().enumerate() {
        if !(e > 0.0 && e <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "grid point {e} outside (0, 1/2]"
            )));
        }
        if i > 0 && e <= grid[i - 1] {
            return Err(Error::InvalidParameter(
                "eps grid must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// Edge values at arbitrary `|ε| <= 1/2`, in input order. Points are
/// computed in parallel; each uses the same seed so results do not depend on
/// scheduling.
pub fn edge_samples<K: LatticeKernel + ?Sized>(
    source: &K,
    field: &FieldSpec,
    which: Which,
    xs: &[f64],
    lattice: &LatticeBox,
    opts: &SolverOptions,
    rule: &QuadratureRule,
) -> Vec<Result<EdgeResult>> {
    xs.par_iter()
        .map(|&e| {
            if !(e.abs() <= 0.5) {
                return Err(Error::InvalidParameter(format!(
                    "eps {e} outside [-1/2, 1/2]"
                )));
            }
            let m = build_peierls_matrix(source, field, e, lattice, rule)?;
            edge(&m, which, opts)
        })
        .collect()
}

/// `ℰ(ε)` over `eps_grid` and `ℰ(0)` on a fixed box.
pub fn sweep_edges<K: LatticeKernel + ?Sized>(
    source: &K,
    field: &FieldSpec,
    which: Which,
    eps_grid: &[f64],
    lattice: &LatticeBox,
    opts: &SolverOptions,
    rule: &QuadratureRule,
) -> Result<EdgeSweep> {
    validate_grid(eps_grid)?;
    let bare = bare_matrix(source, lattice)?;
    let schur0 = bare.schur_norm();
    let noise_floor = NOISE_SAFETY * opts.tol * schur0.max(f64::MIN_POSITIVE);
    let empty = |base: EdgeResult| {
        EdgeSweep::from_edges(
            which,
            base,
            Vec::new(),
            noise_floor,
            Some(field.kind()),
            schur0,
        )
    };

    let base = match edge(&bare, which, opts) {
        Ok(b) => b,
        Err(e) => {
            let nan = EdgeResult {
                value: f64::NAN,
                which,
                residual: f64::NAN,
                matvecs: 0,
                method: crate::spectral::Method::Iterative,
            };
            return Err(Error::SweepAborted {
                eps: 0.0,
                source: Box::new(e),
                partial: Box::new(empty(nan)),
            });
        }
    };
    let results = edge_samples(source, field, which, eps_grid, lattice, opts, rule);
    let mut points = Vec::with_capacity(eps_grid.len());
    for (&e, r) in eps_grid.iter().zip(results) {
        match r {
            Ok(r) => points.push((e, r)),
            Err(err) => {
                let partial = EdgeSweep::from_edges(
                    which,
                    base,
                    points,
                    noise_floor,
                    Some(field.kind()),
                    schur0,
                );
                return Err(Error::SweepAborted {
                    eps: e,
                    source: Box::new(err),
                    partial: Box::new(partial),
                });
            }
        }
    }
    Ok(EdgeSweep::from_edges(
        which,
        base,
        points,
        noise_floor,
        Some(field.kind()),
        schur0,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `C ε^p`
    Power,
    /// `C ε ln(1/ε)`
    PowerLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: FitModel,
    pub c: f64,
    /// Fitted exponent; fixed at 1 for [`FitModel::PowerLog`].
    pub p: f64,
    /// Euclidean norm of the log-space residuals.
    pub residual: f64,
    pub points_used: usize,
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    let usable = points.iter().filter(|(e, d)| *e > 0.0 && *d > 0.0).count();
    if usable < 3 || usable != points.len() {
        return Err(Error::InsufficientPoints {
            need: 3,
            got: usable.min(points.len()),
        });
    }
    if points.iter().any(|(e, d)| !e.is_finite() || !d.is_finite()) {
        return Err(Error::NonFinite("fit data".into()));
    }
    Ok(())
}

/// Least squares of `ln ΔE` against `ln ε`.
pub fn fit_power_points(points: &[(f64, f64)]) -> Result<FitReport> {
    check_points(points)?;
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "fit needs at least two distinct eps".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let p = sxy / sxx;
    let lnc = my - p * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - lnc - p * x).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(FitReport {
        model: FitModel::Power,
        c: lnc.exp(),
        p,
        residual,
        points_used: points.len(),
    })
}

/// Least squares of `ln ΔE - ln(ε ln(1/ε))` against a constant.
pub fn fit_power_log_points(points: &[(f64, f64)]) -> Result<FitReport> {
    check_points(points)?;
    if let Some((e, _)) = points.iter().find(|(e, _)| *e >= (-1.0f64).exp()) {
        return Err(Error::InvalidParameter(format!("eps {e} not below 1/e")));
    }
    let r: Vec<f64> = points
        .iter()
        .map(|(e, d)| d.ln() - (e * (1.0 / e).ln()).ln())
        .collect();
    let lnc = r.iter().sum::<f64>() / r.len() as f64;
    let residual = r.iter().map(|v| (v - lnc).powi(2)).sum::<f64>().sqrt();
    Ok(FitReport {
        model: FitModel::PowerLog,
        c: lnc.exp(),
        p: 1.0,
        residual,
        points_used: points.len(),
    })
}

pub fn fit_power(sweep: &EdgeSweep) -> Result<FitReport> {
    fit_power_points(&sweep.usable())
}

pub fn fit_power_log(sweep: &EdgeSweep) -> Result<FitReport> {
    fit_power_log_points(&sweep.usable())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `ΔE <= C ‖T‖_α ε^{α/2}`, `1 <= α < 2`
    Holder,
    /// `ΔE <= C ‖T‖_2 ε ln(1/ε)`, `α >= 2`
    Log,
    /// `ΔE <= C ‖T‖_2 ε`, `α >= 2`, constant or slowly varying field
    Lipschitz,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Holder => "holder",
            Regime::Log => "log",
            Regime::Lipschitz => "lipschitz",
        })
    }
}

/// Schur norms of the unperturbed kernel: `‖T‖_α` and `‖T‖_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurNorms {
    pub alpha: f64,
    pub two: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub regime: Regime,
    pub alpha: f64,
    pub which: Which,
    pub norm: f64,
    pub eps: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Maximum over the third of the grid closest to `ε = 0`.
    pub last_third_max: f64,
    pub finite: bool,
    pub diverging: bool,
    pub passed: bool,
}

/// Ratios of `ΔE` to the bound's `ε`-profile, with a divergence diagnostic.
/// Points below the noise floor count as `ΔE = 0`.
pub fn verify_theorem_bound(
    sweep: &EdgeSweep,
    alpha: f64,
    norms: SchurNorms,
    regime: Regime,
) -> Result<Certificate> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite("alpha".into()));
    }
    match regime {
        Regime::Holder if !(1.0..2.0).contains(&alpha) => {
            return Err(Error::InvalidParameter(format!(
                "holder regime needs 1 <= alpha < 2, got {alpha}"
            )))
        }
        Regime::Log | Regime::Lipschitz if alpha < 2.0 => {
            return Err(Error::InvalidParameter(format!(
                "{regime} regime needs alpha >= 2, got {alpha}"
            )))
        }
        _ => {}
    }
    if regime == Regime::Lipschitz
        && !matches!(
            sweep.field_kind,
            Some(FieldKind::Constant) | Some(FieldKind::SlowlyVarying)
        )
    {
        return Err(Error::InvalidParameter(format!(
            "lipschitz regime needs a constant or slowly varying field, sweep has {}",
            sweep
                .field_kind
                .map_or("unknown".to_string(), |k| k.to_string())
        )));
    }
    if sweep.is_empty() {
        return Err(Error::InsufficientPoints { need: 1, got: 0 });
    }
    let norm = match regime {
        Regime::Holder => norms.alpha,
        _ => norms.two,
    };
    let ratios: Vec<f64> = (0..sweep.len())
        .map(|i| {
            let e = sweep.eps[i];
            let d = if sweep.flagged[i] {
                0.0
            } else {
                sweep.deltas[i]
            };
            if d == 0.0 {
                return 0.0;
            }
            let g = match regime {
                Regime::Holder => e.powf(alpha / 2.0),
                Regime::Log => e * (1.0 / e).ln(),
                Regime::Lipschitz => e,
            };
            d / (norm * g)
        })
        .collect();
    let finite = ratios.iter().all(|r| r.is_finite());
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median_ratio = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    // grid is increasing, so the points nearest zero come first
    let third = n.div_ceil(3);
    let last_third_max = ratios[..third].iter().copied().fold(0.0, f64::max);
    let diverging = !(last_third_max <= 2.0 * median_ratio);
    Ok(Certificate {
        regime,
        alpha,
        which: sweep.which,
        norm,
        eps: sweep.eps.clone(),
        ratios,
        max_ratio,
        median_ratio,
        last_third_max,
        finite,
        diverging,
        passed: finite && !diverging,
    })
}

fn uniform_step(xs: &[f64]) -> Result<f64> {
    let h = xs[1] - xs[0];
    if !(h > 0.0) {
        return Err(Error::NonUniformGrid);
    }
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::NonUniformGrid);
        }
    }
    Ok(h)
}

/// `max [ℰ(m) - ½ℰ(a) - ½ℰ(b)] / |(b - a)/2|^β` over grid pairs whose
/// midpoint `m` is a grid node, floored at zero.
pub fn midconvex_defect(samples: &[(f64, f64)], beta: f64) -> Result<f64> {
    if samples.len() < 5 {
        return Err(Error::InsufficientPoints {
            need: 5,
            got: samples.len(),
        });
    }
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::InvalidParameter(format!("beta = {beta}")));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    uniform_step(&xs)?;
    let n = samples.len();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in (i + 2..n).step_by(2) {
            let m = (i + j) / 2;
            let half = 0.5 * (samples[j].0 - samples[i].0);
            let defect = samples[m].1 - 0.5 * samples[i].1 - 0.5 * samples[j].1;
            best = best.max(defect / half.abs().powf(beta));
        }
    }
    Ok(best)
}

/// Smallest `N` with `η 2^N > 1`; equals `floor(ln(1/η)/ln 2) + 1` and keeps
/// `1 < η 2^N <= 2` exact.
pub fn n_eta(eta: f64) -> u32 {
    let mut n = 0;
    let mut v = eta;
    while v <= 1.0 {
        v *= 2.0;
        n += 1;
    }
    n
}

/// Explicit modulus of continuity for a function bounded by `s` that is
/// almost mid-convex with constants `(m, beta)`.
pub fn nenciu_modulus(m: f64, s: f64, beta: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} outside (0, 1/2)"
        )));
    }
    if !(0.5..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} outside [1/2, 1]"
        )));
    }
    if !(m >= 0.0 && m.is_finite() && s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need finite M, S >= 0, got M = {m}, S = {s}"
        )));
    }
    if beta < 1.0 {
        Ok((2.0 * s + m / (1.0 - 2f64.powf(beta - 1.0))) * eta.powf(beta))
    } else {
        Ok(2.0 * s * eta + m * eta * f64::from(n_eta(eta)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InductionCheck {
    pub left: f64,
    pub right: f64,
    pub left_expected: f64,
    pub right_expected: f64,
    pub exact: bool,
}

/// The two telescoped midpoints after `n` halvings of `[a, b]`.
pub fn induction_identity_check(a: f64, b: f64, n: u32) -> InductionCheck {
    let mut geometric = 0.0;
    for k in 1..=n {
        geometric += 0.5f64.powi(k as i32);
    }
    let tail = 0.5f64.powi(n as i32);
    let left = geometric * a + tail * b;
    let right = tail * a + geometric * b;
    let left_expected = a + tail * (b - a);
    let right_expected = b - tail * (b - a);
    InductionCheck {
        left,
        right,
        left_expected,
        right_expected,
        exact: left == left_expected && right == right_expected,
    }
}
