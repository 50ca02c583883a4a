//! Spectral edges of Hermitian matrices.
//!
//! Large matrices go through a Krylov–Schur iteration (Arnoldi with full
//! reorthogonalization and thick restarts); small ones through a dense
//! Hermitian eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::PeierlsMatrix;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_MATVECS: usize = 5000;
pub const DEFAULT_DENSE_CAP: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Sup,
    Inf,
    Norm,
}

impl std::fmt::Display for Which {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Which::Sup => "sup",
            Which::Inf => "inf",
            Which::Norm => "norm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iterative,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Auto,
    Iterative,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Residual tolerance, relative to the Schur norm of the matrix.
    pub tol: f64,
    pub seed: u64,
    pub max_matvecs: usize,
    pub method: MethodChoice,
    /// `Auto` switches to the dense solver below this size.
    pub dense_below: usize,
    /// Hard cap on dense solves.
    pub dense_cap: usize,
    pub krylov_dim: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            seed: 0,
            max_matvecs: DEFAULT_MAX_MATVECS,
            method: MethodChoice::Auto,
            dense_below: 200,
            dense_cap: DEFAULT_DENSE_CAP,
            krylov_dim: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeResult {
    pub value: f64,
    pub which: Which,
    /// `‖M x - value x‖` for the returned unit Ritz vector.
    pub residual: f64,
    pub matvecs: usize,
    pub method: Method,
}

/// `sup σ(M)`, `inf σ(M)` or `‖M‖` for a Hermitian matrix.
pub fn edge(matrix: &PeierlsMatrix, which: Which, opts: &SolverOptions) -> Result<EdgeResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(
            "solver tolerance must be positive".into(),
        ));
    }
    let n = matrix.dim();
    if n == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    let dense = match opts.method {
        MethodChoice::Dense => true,
        MethodChoice::Iterative => false,
        MethodChoice::Auto => n <= opts.dense_below,
    };
    let one = |sign: f64| -> Result<EdgeResult> {
        if dense {
            dense_largest(matrix, sign, opts.dense_cap)
        } else {
            krylov_largest(matrix, sign, opts)
        }
    };
    let mut r = match which {
        Which::Sup => one(1.0)?,
        Which::Inf => {
            let mut r = one(-1.0)?;
            r.value = -r.value;
            r
        }
        Which::Norm => {
            let top = one(1.0)?;
            let mut bottom = one(-1.0)?;
            bottom.value = -bottom.value;
            let mut r = if top.value.abs() >= bottom.value.abs() {
                top
            } else {
                bottom
            };
            r.value = r.value.abs();
            r.matvecs = top.matvecs + bottom.matvecs;
            r
        }
    };
    r.which = which;
    Ok(r)
}

/// Ascending eigenvalues by a dense Hermitian solve.
pub fn dense_eigenvalues(matrix: &PeierlsMatrix, cap: usize) -> Result<Vec<f64>> {
    let n = matrix.dim();
    if n > cap {
        return Err(Error::SizeCap { size: n, cap });
    }
    let mut values: Vec<f64> = hermitian_part(matrix.to_dense())
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalues".into()));
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

fn hermitian_part(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let adj = m.adjoint();
    (m + adj).map(|v| v * 0.5)
}

fn dense_largest(matrix: &PeierlsMatrix, sign: f64, cap: usize) -> Result<EdgeResult> {
    let n = matrix.dim();
    if n > cap {
        return Err(Error::SizeCap { size: n, cap });
    }
    let m = hermitian_part(matrix.to_dense()).map(|v| v * sign);
    let eig = SymmetricEigen::new(m.clone());
    let (idx, value) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    if !value.is_finite() {
        return Err(Error::NonFinite("eigenvalues".into()));
    }
    let x = eig.eigenvectors.column(idx).into_owned();
    let r = &m * &x - x.map(|v| v * value);
    Ok(EdgeResult {
        value,
        which: Which::Sup,
        residual: r.norm(),
        matvecs: 0,
        method: Method::Dense,
    })
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest eigenvalue of `sign * M` by Krylov–Schur.
///
/// Invariant between steps: `A V[..p] = V[..p] H + V[p] b^T` with orthonormal
/// columns `V[..=p]`.
fn krylov_largest(matrix: &PeierlsMatrix, sign: f64, opts: &SolverOptions) -> Result<EdgeResult> {
    let n = matrix.dim();
    let scale = matrix.schur_norm().max(f64::MIN_POSITIVE);
    let target = opts.tol * scale;
    let m = opts.krylov_dim.clamp(4, n.max(1));
    let keep = (m / 2).max(1);
    let apply = |x: &[Complex64], out: &mut [Complex64]| {
        matrix.matvec(x, out);
        if sign != 1.0 {
            out.iter_mut().for_each(|v| *v *= sign);
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v0: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let nv = norm(&v0);
    v0.iter_mut().for_each(|v| *v /= nv);

    let mut basis: Vec<Vec<Complex64>> = vec![v0];
    let mut h = DMatrix::<Complex64>::zeros(0, 0);
    let mut b: Vec<Complex64> = Vec::new();
    let mut matvecs = 0usize;
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut last;

    loop {
        // expand to m columns
        let mut invariant = false;
        while h.nrows() < m {
            let p = h.nrows();
            apply(&basis[p], &mut w);
            matvecs += 1;
            let mut coeffs = vec![Complex64::new(0.0, 0.0); p + 1];
            for _ in 0..2 {
                for (c, v) in coeffs.iter_mut().zip(&basis) {
                    let proj = dot(v, &w);
                    *c += proj;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= proj * vi);
                }
            }
            let beta = norm(&w);
            let mut grown = DMatrix::<Complex64>::zeros(p + 1, p + 1);
            grown.view_mut((0, 0), (p, p)).copy_from(&h);
            for (j, bj) in b.iter().enumerate() {
                grown[(p, j)] = *bj;
            }
            for (i, c) in coeffs.iter().enumerate() {
                grown[(i, p)] = *c;
            }
            h = grown;
            b = vec![Complex64::new(0.0, 0.0); p + 1];
            b[p] = Complex64::new(beta, 0.0);
            if beta <= 1e-13 * scale || basis.len() == n {
                invariant = true;
                break;
            }
            basis.push(w.iter().map(|x| x / beta).collect());
            if matvecs >= opts.max_matvecs {
                break;
            }
        }

        let p = h.nrows();
        let eig = SymmetricEigen::new(hermitian_part(h.clone()));
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let top = order[0];
        let theta = eig.eigenvalues[top];
        if !theta.is_finite() {
            return Err(Error::NonFinite("Ritz value".into()));
        }
        let y = eig.eigenvectors.column(top);
        let estimate = if invariant {
            0.0
        } else {
            b.iter()
                .zip(y.iter())
                .map(|(bj, yj)| bj * yj)
                .sum::<Complex64>()
                .norm()
        };

        if estimate <= target || invariant {
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            for (j, v) in basis.iter().take(p).enumerate() {
                let c = y[j];
                x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
            }
            let nx = norm(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            apply(&x, &mut w);
            matvecs += 1;
            let residual = w
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - theta * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            last = (theta, residual);
            if residual <= target || invariant {
                return Ok(EdgeResult {
                    value: theta,
                    which: Which::Sup,
                    residual,
                    matvecs,
                    method: Method::Iterative,
                });
            }
        } else {
            last = (theta, estimate);
        }
        if matvecs >= opts.max_matvecs {
            return Err(Error::NoConvergence {
                value: last.0,
                residual: last.1,
                iterations: matvecs,
            });
        }

        // thick restart on the `keep` largest Ritz pairs
        let k = keep.min(p - 1).max(1);
        let mut new_basis = Vec::with_capacity(m + 1);
        let mut new_b = Vec::with_capacity(k);
        let mut new_h = DMatrix::<Complex64>::zeros(k, k);
        for (i, &col) in order.iter().take(k).enumerate() {
            let y = eig.eigenvectors.column(col);
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            for (j, bv) in basis.iter().take(p).enumerate() {
                let c = y[j];
                v.iter_mut().zip(bv).for_each(|(vi, bi)| *vi += c * bi);
            }
            new_basis.push(v);
            new_b.push(b.iter().zip(y.iter()).map(|(bj, yj)| bj * yj).sum());
            new_h[(i, i)] = Complex64::new(eig.eigenvalues[col], 0.0);
        }
        new_basis.push(basis.pop().expect("residual direction"));
        basis = new_basis;
        b = new_b;
        h = new_h;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub gaps: Vec<SpectralGap>,
}

pub const DEFAULT_GAP_THRESHOLD: f64 = 0.02;

/// All eigenvalues plus the gaps between consecutive ones wider than
/// `gap_threshold` times the spectral width. A relative threshold keeps
/// ordinary level spacing of a finite box out of the gap table.
pub fn full_spectrum(
    matrix: &PeierlsMatrix,
    gap_threshold: f64,
    cap: usize,
) -> Result<SpectrumReport> {
    let eigenvalues = dense_eigenvalues(matrix, cap)?;
    let width = match (eigenvalues.first(), eigenvalues.last()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0.0,
    };
    let min_gap = gap_threshold * width;
    let gaps = eigenvalues
        .windows(2)
        .filter(|w| w[1] - w[0] > min_gap && w[1] > w[0])
        .map(|w| SpectralGap {
            lower: w[0],
            upper: w[1],
            width: w[1] - w[0],
        })
        .collect();
    Ok(SpectrumReport { eigenvalues, gaps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPoint {
    pub radius: usize,
    pub size: usize,
    pub value: f64,
    pub residual: f64,
    /// Change from the previous radius; `None` for the first.
    pub change: Option<f64>,
}

/// Edge values for a growing family of boxes.
pub fn truncation_study<F>(
    radii: &[usize],
    which: Which,
    opts: &SolverOptions,
    mut build: F,
) -> Result<Vec<TruncationPoint>>
where
    F: FnMut(usize) -> Result<PeierlsMatrix>,
{
    let mut out: Vec<TruncationPoint> = Vec::with_capacity(radii.len());
    for &radius in radii {
        let matrix = build(radius)?;
        let r = edge(&matrix, which, opts)?;
        let change = out.last().map(|p| r.value - p.value);
        out.push(TruncationPoint {
            radius,
            size: matrix.dim(),
            value: r.value,
            residual: r.residual,
            change,
        });
    }
    Ok(out)
}

/// Largest eigenvalue and its eigenvector by a dense solve.
pub fn dense_top_eigenvector(
    matrix: &PeierlsMatrix,
    cap: usize,
) -> Result<(f64, DVector<Complex64>)> {
    let n = matrix.dim();
    if n > cap {
        return Err(Error::SizeCap { size: n, cap });
    }
    let eig = SymmetricEigen::new(hermitian_part(matrix.to_dense()));
    let (idx, value) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidParameter("empty matrix".into()))?;
    Ok((value, eig.eigenvectors.column(idx).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use crate::lattice::{bare_matrix, build_peierls_matrix, HoppingSymbol, LatticeBox};
    use crate::quadrature::QuadratureRule;

    fn iterative() -> SolverOptions {
        SolverOptions {
            method: MethodChoice::Iterative,
            ..Default::default()
        }
    }

    #[test]
    fn diagonal_matrix_edges() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 1.0, 2.5, 0.0]));
        let m = PeierlsMatrix::from_real_dense(&d, "diag").unwrap();
        for opts in [SolverOptions::default(), iterative()] {
            assert!((edge(&m, Which::Sup, &opts).unwrap().value - 2.5).abs() < 1e-12);
            assert!((edge(&m, Which::Inf, &opts).unwrap().value + 3.0).abs() < 1e-12);
            assert!((edge(&m, Which::Norm, &opts).unwrap().value - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn iterative_agrees_with_dense_on_harper() {
        let rule = QuadratureRule::shared_default();
        let lattice = LatticeBox::new(2, 10);
        let m = build_peierls_matrix(
            &HoppingSymbol::harper(2),
            &FieldSpec::constant_unit(2),
            0.2,
            &lattice,
            rule,
        )
        .unwrap();
        let dense = dense_eigenvalues(&m, 3000).unwrap();
        for which in [Which::Sup, Which::Inf] {
            let r = edge(&m, which, &iterative()).unwrap();
            let want = if which == Which::Sup {
                *dense.last().unwrap()
            } else {
                dense[0]
            };
            assert!(
                (r.value - want).abs() < 1e-9,
                "{which}: {} vs {want}",
                r.value
            );
            assert!(r.residual <= 1e-10 * m.schur_norm());
            assert_eq!(r.method, Method::Iterative);
        }
    }

    #[test]
    fn identity_operator_has_unit_edges() {
        let m = bare_matrix(&HoppingSymbol::identity(2), &LatticeBox::new(2, 5)).unwrap();
        let r = edge(&m, Which::Sup, &iterative()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dense_cap_enforced() {
        let m = bare_matrix(&HoppingSymbol::harper(2), &LatticeBox::new(2, 3)).unwrap();
        let opts = SolverOptions {
            method: MethodChoice::Dense,
            dense_cap: 10,
            ..Default::default()
        };
        assert!(matches!(
            edge(&m, Which::Sup, &opts),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn matvec_cap_reports_no_convergence() {
        let m = bare_matrix(&HoppingSymbol::harper(2), &LatticeBox::new(2, 20)).unwrap();
        let opts = SolverOptions {
            max_matvecs: 10,
            krylov_dim: 6,
            ..iterative()
        };
        match edge(&m, Which::Sup, &opts) {
            Err(Error::NoConvergence {
                value, iterations, ..
            }) => {
                assert!(value.is_finite());
                assert!(iterations >= 10);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let m = bare_matrix(
            &HoppingSymbol::long_range(2, 4.6, 3.0),
            &LatticeBox::new(2, 12),
        )
        .unwrap();
        let a = edge(&m, Which::Sup, &iterative()).unwrap();
        let b = edge(&m, Which::Sup, &iterative()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spectrum_gaps() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0005, 1.0, 1.2]));
        let m = PeierlsMatrix::from_real_dense(&d, "diag").unwrap();
        let s = full_spectrum(&m, DEFAULT_GAP_THRESHOLD, 100).unwrap();
        assert_eq!(s.gaps.len(), 2);
        assert!((s.gaps[0].lower - 0.0005).abs() < 1e-15);
        assert!((s.gaps[1].width - 0.2).abs() < 1e-12);
    }
}
