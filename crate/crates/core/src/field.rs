//! Magnetic field models.
//!
//! A field is an antisymmetric matrix-valued function `B(x)` on `R^d`. Three
//! shapes are supported: constant fields (closed-form fluxes), general bounded
//! fields given pointwise, and slowly varying perturbations generated by a
//! vector potential `A` together with its Jacobian.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pointwise antisymmetric field `B(x)`.
pub trait MagneticField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Writes `B(x)` row-major into `out` (`dim * dim` entries).
    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Upper bound on `sup_x ||B(x)||` (operator norm), if known.
    fn bound(&self) -> Option<f64>;

    fn label(&self) -> String;
}

/// Vector potential `A` with analytic Jacobian, used for slowly varying fields.
pub trait VectorPotential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn potential(&self, x: &[f64], out: &mut [f64]);

    /// Writes `∂A_i/∂x_j` into `out[i * dim + j]`.
    fn jacobian(&self, x: &[f64], out: &mut [f64]);

    /// Upper bound on `sup_x ||dA(x)||`, if known.
    fn field_bound(&self) -> Option<f64> {
        None
    }

    fn label(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Constant,
    General,
    SlowlyVarying,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldKind::Constant => "constant",
            FieldKind::General => "general",
            FieldKind::SlowlyVarying => "slowly_varying",
        })
    }
}

/// Constant antisymmetric field, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField {
    dim: usize,
    b: Vec<f64>,
}

impl ConstantField {
    /// Builds a constant field from its rows. Entries must be antisymmetric to
    /// `1e-12` relative; the stored matrix is exactly antisymmetrized.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "field dimension must be positive".into(),
            ));
        }
        let mut b = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            b.extend_from_slice(row);
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("constant field".into()));
        }
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..dim {
            for k in 0..dim {
                let defect = (b[j * dim + k] + b[k * dim + j]).abs();
                if defect > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::NotAntisymmetric(format!(
                        "B[{j}][{k}] + B[{k}][{j}] = {defect:e}"
                    )));
                }
            }
        }
        for j in 0..dim {
            b[j * dim + j] = 0.0;
            for k in (j + 1)..dim {
                let v = 0.5 * (b[j * dim + k] - b[k * dim + j]);
                b[j * dim + k] = v;
                b[k * dim + j] = -v;
            }
        }
        Ok(Self { dim, b })
    }

    /// The unit field: `B_jk = 1` for `j < k`.
    pub fn unit(dim: usize) -> Self {
        let mut b = vec![0.0; dim * dim];
        for j in 0..dim {
            for k in (j + 1)..dim {
                b[j * dim + k] = 1.0;
                b[k * dim + j] = -1.0;
            }
        }
        Self { dim, b }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.b[j * self.dim + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.b
    }

    /// `Σ_jk u_j v_k B_jk`.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> f64 {
        contract(&self.b, self.dim, u, v)
    }

    pub fn operator_norm(&self) -> f64 {
        operator_norm(&self.b, self.dim)
    }
}

/// `B_12(x) = 1 + a sin(k x_1) sin(k x_2)` in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineModulatedField {
    pub amplitude: f64,
    pub wavenumber: f64,
}

impl MagneticField for SineModulatedField {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let b12 =
            1.0 + self.amplitude * (self.wavenumber * x[0]).sin() * (self.wavenumber * x[1]).sin();
        out[0] = 0.0;
        out[1] = b12;
        out[2] = -b12;
        out[3] = 0.0;
    }

    fn bound(&self) -> Option<f64> {
        Some(1.0 + self.amplitude.abs())
    }

    fn label(&self) -> String {
        format!(
            "sine_modulated(a={}, k={})",
            self.amplitude, self.wavenumber
        )
    }
}

/// `A(x) = (-sin(x_2) / 2, sin(x_1) / 2)`, so `dA = (cos x_1 + cos x_2) / 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SinePotential;

impl VectorPotential for SinePotential {
    fn dim(&self) -> usize {
        2
    }

    fn potential(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -0.5 * x[1].sin();
        out[1] = 0.5 * x[0].sin();
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = -0.5 * x[1].cos();
        out[2] = 0.5 * x[0].cos();
        out[3] = 0.0;
    }

    fn field_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn label(&self) -> String {
        "sine_potential".into()
    }
}

/// `A(x) = (-x_2 / 2, x_1 / 2)`: the unit constant field in symmetric gauge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SymmetricGaugePotential;

impl VectorPotential for SymmetricGaugePotential {
    fn dim(&self) -> usize {
        2
    }

    fn potential(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -0.5 * x[1];
        out[1] = 0.5 * x[0];
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[0.0, -0.5, 0.5, 0.0]);
    }

    fn field_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn label(&self) -> String {
        "symmetric_gauge".into()
    }
}

#[derive(Debug, Clone)]
pub enum FieldSpec {
    Constant(ConstantField),
    General(Arc<dyn MagneticField>),
    SlowlyVarying(Arc<dyn VectorPotential>),
}

impl FieldSpec {
    pub fn constant_unit(dim: usize) -> Self {
        FieldSpec::Constant(ConstantField::unit(dim))
    }

    pub fn general<F: MagneticField + 'static>(field: F) -> Self {
        FieldSpec::General(Arc::new(field))
    }

    pub fn slowly_varying<A: VectorPotential + 'static>(potential: A) -> Self {
        FieldSpec::SlowlyVarying(Arc::new(potential))
    }

    pub fn dim(&self) -> usize {
        match self {
            FieldSpec::Constant(c) => c.dim(),
            FieldSpec::General(f) => f.dim(),
            FieldSpec::SlowlyVarying(a) => a.dim(),
        }
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            FieldSpec::Constant(_) => FieldKind::Constant,
            FieldSpec::General(_) => FieldKind::General,
            FieldSpec::SlowlyVarying(_) => FieldKind::SlowlyVarying,
        }
    }

    pub fn label(&self) -> String {
        match self {
            FieldSpec::Constant(c) => format!("constant{:?}", c.as_slice()),
            FieldSpec::General(f) => f.label(),
            FieldSpec::SlowlyVarying(a) => a.label(),
        }
    }

    /// Sup-norm bound `C_B` (operator norm of `B(x)`, uniformly in `x`).
    pub fn bound(&self) -> Option<f64> {
        match self {
            FieldSpec::Constant(c) => Some(c.operator_norm()),
            FieldSpec::General(f) => f.bound(),
            FieldSpec::SlowlyVarying(a) => a.field_bound(),
        }
    }

    /// Evaluates the two-form at `x` into `out`. For slowly varying fields this
    /// is `dA(x)` built from the Jacobian, without the `eps` rescaling.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FieldSpec::Constant(c) => out.copy_from_slice(c.as_slice()),
            FieldSpec::General(f) => f.eval(x, out),
            FieldSpec::SlowlyVarying(a) => {
                let d = a.dim();
                a.jacobian(x, out);
                curl_in_place(out, d);
            }
        }
    }

    /// Checks `B_jk(x) = -B_kj(x)` at every sample to `tol` (absolute).
    pub fn check_antisymmetry(&self, samples: &[Vec<f64>], tol: f64) -> Result<()> {
        let d = self.dim();
        let mut buf = vec![0.0; d * d];
        for x in samples {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            self.eval(x, &mut buf);
            for j in 0..d {
                for k in 0..d {
                    let defect = (buf[j * d + k] + buf[k * d + j]).abs();
                    if !(defect <= tol) {
                        return Err(Error::NotAntisymmetric(format!(
                            "at {x:?}: B[{j}][{k}] + B[{k}][{j}] = {defect:e}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// For slowly varying fields, compares the analytic Jacobian against a
    /// central difference of the potential at every sample. Returns the
    /// largest deviation; other field kinds return `0`.
    pub fn jacobian_deviation(&self, samples: &[Vec<f64>], step: f64) -> Result<f64> {
        let FieldSpec::SlowlyVarying(a) = self else {
            return Ok(0.0);
        };
        let d = a.dim();
        let mut jac = vec![0.0; d * d];
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        let mut worst = 0.0f64;
        for x in samples {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            a.jacobian(x, &mut jac);
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                a.potential(&xp, &mut plus);
                a.potential(&xm, &mut minus);
                for i in 0..d {
                    let fd = (plus[i] - minus[i]) / (2.0 * step);
                    worst = worst.max((fd - jac[i * d + j]).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Turns a Jacobian `J[i][j] = ∂A_i/∂x_j` into `B_jk = ∂_j A_k - ∂_k A_j`.
pub(crate) fn curl_in_place(jac: &mut [f64], d: usize) {
    for j in 0..d {
        jac[j * d + j] = 0.0;
        for k in (j + 1)..d {
            let bjk = jac[k * d + j] - jac[j * d + k];
            jac[j * d + k] = bjk;
            jac[k * d + j] = -bjk;
        }
    }
}

pub(crate) fn contract(b: &[f64], d: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..d {
        if u[j] == 0.0 {
            continue;
        }
        let row = &b[j * d..(j + 1) * d];
        let mut inner = 0.0;
        for k in 0..d {
            inner += row[k] * v[k];
        }
        acc += u[j] * inner;
    }
    acc
}

fn operator_norm(b: &[f64], d: usize) -> f64 {
    let m = DMatrix::from_row_slice(d, d, b);
    m.singular_values()
        .iter()
        .fold(0.0f64, |acc, s| acc.max(*s))
}
