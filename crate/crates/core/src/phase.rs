//! Fluxes through triangles and the Peierls phases derived from them.
//!
//! The flux of `B` through the oriented triangle `<x, y, z>` is
//!
//! ```text
//! Φ(x, y, z) = Σ_jk (y_j - x_j)(z_k - y_k) ∫₀¹dt ∫₀ᵗds B_jk(x + t(y - x) + s(z - y))
//! ```
//!
//! and the transverse-gauge phase is `φ(y, z) = -Φ(0, y, z)`. Constant fields
//! use the closed form `½ Σ_jk (y_j - x_j)(z_k - y_k) B_jk`.

use serde::{Deserialize, Serialize};

use crate::field::{contract, FieldSpec};
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl Triangle {
    pub fn new(x: impl Into<Vec<f64>>, y: impl Into<Vec<f64>>, z: impl Into<Vec<f64>>) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
            z: z.into(),
        }
    }
}

fn check_dim(field: &FieldSpec, pts: &[&[f64]]) -> Result<usize> {
    let d = field.dim();
    for p in pts {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }
    Ok(d)
}

/// Flux through `<x, y, z>` with the field evaluated at `arg_scale * p`.
/// `arg_scale = 1` is the plain flux; slowly varying fields use `arg_scale = eps`.
fn flux_scaled(
    field: &FieldSpec,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    rule: &QuadratureRule,
    arg_scale: f64,
) -> Result<f64> {
    let d = check_dim(field, &[x, y, z])?;
    let u: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
    if u.iter().all(|c| *c == 0.0) || v.iter().all(|c| *c == 0.0) {
        return Ok(0.0);
    }
    let value = match field {
        FieldSpec::Constant(c) => 0.5 * c.contract(&u, &v),
        _ => {
            let mut buf = vec![0.0; d * d];
            let mut p = vec![0.0; d];
            rule.integrate(|t, s| {
                for i in 0..d {
                    p[i] = arg_scale * (x[i] + t * u[i] + s * v[i]);
                }
                field.eval(&p, &mut buf);
                contract(&buf, d, &u, &v)
            })
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("flux of {}", field.label())));
    }
    Ok(value)
}

/// Flux of the field through the triangle. The rule is ignored for constant fields.
pub fn flux_triangle(field: &FieldSpec, tri: &Triangle, rule: &QuadratureRule) -> Result<f64> {
    flux_scaled(field, &tri.x, &tri.y, &tri.z, rule, 1.0)
}

/// `φ(y, z) = -Φ(0, y, z)` for constant or general fields.
pub fn transverse_gauge_phase(
    field: &FieldSpec,
    y: &[f64],
    z: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    if matches!(field, FieldSpec::SlowlyVarying(_)) {
        return Err(Error::UnsupportedField("slowly varying"));
    }
    let origin = vec![0.0; field.dim()];
    Ok(-flux_scaled(field, &origin, y, z, rule, 1.0)?)
}

/// `φ(x, x') = -eps Φ^{B_eps}(0, x, x')` with `B_eps(p) = dA(eps p)`.
pub fn slowly_varying_phase(
    field: &FieldSpec,
    eps: f64,
    x: &[f64],
    xp: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    if !matches!(field, FieldSpec::SlowlyVarying(_)) {
        return Err(Error::UnsupportedField("non slowly-varying"));
    }
    check_dim(field, &[x, xp])?;
    if eps == 0.0 {
        return Ok(0.0);
    }
    let origin = vec![0.0; field.dim()];
    Ok(-eps * flux_scaled(field, &origin, x, xp, rule, eps)?)
}

/// The phase carried by the `(x, x')` kernel entry at field strength `eps`:
/// `eps * φ^A` for constant and general fields, `φ^{A_eps}` for slowly
/// varying ones.
pub fn peierls_phase(
    field: &FieldSpec,
    eps: f64,
    x: &[f64],
    xp: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    match field {
        FieldSpec::SlowlyVarying(_) => slowly_varying_phase(field, eps, x, xp, rule),
        _ => {
            check_dim(field, &[x, xp])?;
            if eps == 0.0 {
                return Ok(0.0);
            }
            Ok(eps * transverse_gauge_phase(field, x, xp, rule)?)
        }
    }
}

/// `φ(x, y) + φ(y, x') - φ(x, x') + Φ^{eps B}(x, y, x')`, which vanishes up
/// to quadrature error by Stokes' theorem.
pub fn cocycle_defect(
    field: &FieldSpec,
    eps: f64,
    x: &[f64],
    y: &[f64],
    xp: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    if matches!(field, FieldSpec::SlowlyVarying(_)) {
        return Err(Error::UnsupportedField("slowly varying"));
    }
    let phases = peierls_phase(field, eps, x, y, rule)? + peierls_phase(field, eps, y, xp, rule)?
        - peierls_phase(field, eps, x, xp, rule)?;
    Ok(phases + eps * flux_scaled(field, x, y, xp, rule, 1.0)?)
}

/// Both sides of `|Φ^{eps B}(x,y,x')| <= (C_B |eps| / 2) |x - x'| |x - y|^½ |y - x'|^½`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl AreaBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-10
    }
}

pub fn area_bound_certificate(
    field: &FieldSpec,
    eps: f64,
    x: &[f64],
    y: &[f64],
    xp: &[f64],
    rule: &QuadratureRule,
) -> Result<AreaBound> {
    let bound = field.bound().ok_or(Error::MissingFieldBound)?;
    let lhs = (eps * flux_scaled(field, x, y, xp, rule, 1.0)?).abs();
    let rhs = 0.5 * bound * eps.abs() * dist(x, xp) * (dist(x, y) * dist(y, xp)).sqrt();
    Ok(AreaBound { lhs, rhs })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}
