//! Run configuration shared by the command-line driver and tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::field::{
    ConstantField, FieldSpec, SineModulatedField, SinePotential, SymmetricGaugePotential,
};
use crate::lattice::{HoppingSymbol, SymbolFile};
use crate::phase::Triangle;
use crate::quadrature::DEFAULT_ORDER;
use crate::scaling::{dyadic_grid, Regime};
use crate::spectral::{SolverOptions, Which, DEFAULT_GAP_THRESHOLD};
use crate::{Error, Result};

/// Field models that can be written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldModel {
    /// Arbitrary antisymmetric constant matrix.
    Constant { matrix: Vec<Vec<f64>> },
    /// `B_12 = 1` (and `B_jk = 1` for `j < k` in higher dimensions).
    UnitConstant { dim: usize },
    /// `B_12(x) = 1 + a sin(k x_1) sin(k x_2)` in two dimensions.
    SineModulated { amplitude: f64, wavenumber: f64 },
    /// `A(x) = (-sin(x_2)/2, sin(x_1)/2)`, slowly varying.
    SinePotential,
    /// `A(x) = (-x_2/2, x_1/2)`, slowly varying.
    SymmetricGauge,
}

impl FieldModel {
    pub fn build(&self) -> Result<FieldSpec> {
        Ok(match self {
            FieldModel::Constant { matrix } => FieldSpec::Constant(ConstantField::new(matrix)?),
            FieldModel::UnitConstant { dim } => {
                if *dim < 2 || *dim > 16 {
                    return Err(Error::InvalidParameter(format!(
                        "unit constant field needs 2 <= dim <= 16, got {dim}"
                    )));
                }
                FieldSpec::constant_unit(*dim)
            }
            FieldModel::SineModulated {
                amplitude,
                wavenumber,
            } => {
                if !amplitude.is_finite() || !wavenumber.is_finite() {
                    return Err(Error::NonFinite("sine-modulated field parameters".into()));
                }
                FieldSpec::general(SineModulatedField {
                    amplitude: *amplitude,
                    wavenumber: *wavenumber,
                })
            }
            FieldModel::SinePotential => FieldSpec::slowly_varying(SinePotential),
            FieldModel::SymmetricGauge => FieldSpec::slowly_varying(SymmetricGaugePotential),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicRange {
    /// Smallest exponent `k` in `2^-k`.
    pub from: u32,
    /// Largest exponent.
    pub to: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsGrid {
    List(Vec<f64>),
    Dyadic { dyadic: DyadicRange },
    Uniform { uniform: UniformRange },
}

impl Default for EpsGrid {
    fn default() -> Self {
        EpsGrid::Dyadic {
            dyadic: DyadicRange { from: 3, to: 10 },
        }
    }
}

impl EpsGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            EpsGrid::List(v) => {
                if v.iter().any(|e| !e.is_finite()) {
                    return Err(Error::NonFinite("eps grid".into()));
                }
                Ok(v.clone())
            }
            EpsGrid::Dyadic { dyadic } => {
                if dyadic.from > dyadic.to || dyadic.to > 60 {
                    return Err(Error::InvalidParameter(format!(
                        "dyadic range {}..={} is empty or too deep",
                        dyadic.from, dyadic.to
                    )));
                }
                Ok(dyadic_grid(dyadic.from, dyadic.to))
            }
            EpsGrid::Uniform { uniform } => {
                let UniformRange { start, stop, count } = *uniform;
                if !start.is_finite() || !stop.is_finite() || count == 0 || count > 100_000 {
                    return Err(Error::InvalidParameter(
                        "uniform grid needs finite ends and 1..=100000 points".into(),
                    ));
                }
                if count == 1 {
                    return Ok(vec![start]);
                }
                let h = (stop - start) / (count - 1) as f64;
                Ok((0..count).map(|i| start + h * i as f64).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxOptions {
    pub triangles: Vec<Triangle>,
    /// Field strength used for phases and cocycle defects.
    #[serde(default = "one")]
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ButterflyOptions {
    #[serde(default = "default_gap")]
    pub gap_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    pub regime: Regime,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Read the sweep from this CSV instead of computing it.
    #[serde(default)]
    pub sweep_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearTermOptions {
    pub x: Vec<f64>,
    pub xp: Vec<f64>,
    pub delta: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessOptions {
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    /// Exponent for the mollifier difference constant, in `[1, 2]`.
    #[serde(default = "two")]
    pub alpha: f64,
    /// Sample radii in units of `1/δ`.
    #[serde(default = "default_radii")]
    pub sample_radii: Vec<f64>,
    #[serde(default)]
    pub linear_term: Option<LinearTermOptions>,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            deltas: default_deltas(),
            dims: default_dims(),
            alpha: 2.0,
            sample_radii: default_radii(),
            linear_term: None,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn default_gap() -> f64 {
    DEFAULT_GAP_THRESHOLD
}
fn default_deltas() -> Vec<f64> {
    vec![0.5, 0.25, 0.125]
}
fn default_dims() -> Vec<usize> {
    vec![1, 2]
}
fn default_radii() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9]
}
fn default_order() -> usize {
    DEFAULT_ORDER
}
fn default_which() -> Vec<Which> {
    vec![Which::Sup]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    /// Symbol JSON, relative to the config file.
    #[serde(default)]
    pub symbol: Option<PathBuf>,
    #[serde(default)]
    pub field: Option<FieldModel>,
    #[serde(default)]
    pub eps_grid: EpsGrid,
    #[serde(default)]
    pub box_radius: Option<usize>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_which")]
    pub which: Vec<Which>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub flux: Option<FluxOptions>,
    #[serde(default)]
    pub butterfly: Option<ButterflyOptions>,
    #[serde(default)]
    pub verify: Option<VerifyOptions>,
    #[serde(default)]
    pub fit: Option<FitOptions>,
    #[serde(default)]
    pub harness: Option<HarnessOptions>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Flux,
    Butterfly,
    Sweep,
    Fit,
    Verify,
    Harness,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks that everything `command` needs is present and well formed.
    pub fn validate(&self, command: Command) -> Result<()> {
        if self.quadrature_order == 0 || self.quadrature_order > 256 {
            return Err(Error::InvalidParameter(
                "quadrature_order must be in 1..=256".into(),
            ));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(Error::InvalidParameter(
                "solver.tol must be in (0, 1)".into(),
            ));
        }
        if self.solver.krylov_dim < 2 || self.solver.max_matvecs == 0 {
            return Err(Error::InvalidParameter(
                "solver needs krylov_dim >= 2 and max_matvecs > 0".into(),
            ));
        }
        if self.which.is_empty() {
            return Err(Error::InvalidParameter(
                "which must name at least one edge".into(),
            ));
        }
        if let Some(f) = &self.field {
            f.build()?;
        }
        let grid = self.eps_grid.values()?;
        let need_field = || self.field.as_ref().ok_or_else(|| missing("field"));
        let need_box = || match self.box_radius {
            Some(r) if r <= 200 => Ok(r),
            Some(r) => Err(Error::InvalidParameter(format!("box_radius {r} above 200"))),
            None => Err(missing("box_radius")),
        };
        let need_symbol = || self.symbol.as_ref().ok_or_else(|| missing("symbol"));
        let sweep_grid = || -> Result<()> {
            for (i, &e) in grid.iter().enumerate() {
                if !(e > 0.0 && e <= 0.5) || (i > 0 && e <= grid[i - 1]) {
                    return Err(Error::InvalidParameter(
                        "eps_grid must be strictly increasing inside (0, 1/2]".into(),
                    ));
                }
            }
            Ok(())
        };
        match command {
            Command::Flux => {
                need_field()?;
                let opts = self.flux.as_ref().ok_or_else(|| missing("flux"))?;
                if !opts.eps.is_finite() {
                    return Err(Error::NonFinite("flux.eps".into()));
                }
            }
            Command::Butterfly => {
                need_field()?;
                need_box()?;
                need_symbol()?;
                if grid.iter().any(|e| e.abs() > 1e6) {
                    return Err(Error::InvalidParameter(
                        "butterfly eps values must be finite and moderate".into(),
                    ));
                }
            }
            Command::Sweep | Command::Verify => {
                need_field()?;
                need_box()?;
                need_symbol()?;
                sweep_grid()?;
                if command == Command::Verify {
                    let v = self.verify.as_ref().ok_or_else(|| missing("verify"))?;
                    if !v.alpha.is_finite() {
                        return Err(Error::NonFinite("verify.alpha".into()));
                    }
                }
            }
            Command::Fit => {
                let from_csv = self
                    .fit
                    .as_ref()
                    .and_then(|f| f.sweep_csv.as_ref())
                    .is_some();
                if !from_csv {
                    need_field()?;
                    need_box()?;
                    need_symbol()?;
                    sweep_grid()?;
                }
            }
            Command::Harness => {
                let h = self.harness.clone().unwrap_or_default();
                if h.deltas.is_empty() || h.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                    return Err(Error::InvalidParameter(
                        "harness.deltas must be positive".into(),
                    ));
                }
                if h.dims.is_empty() || h.dims.iter().any(|d| *d != 1 && *d != 2) {
                    return Err(Error::InvalidParameter(
                        "harness.dims must be 1 or 2".into(),
                    ));
                }
                if !(1.0..=2.0).contains(&h.alpha) {
                    return Err(Error::InvalidParameter(
                        "harness.alpha must be in [1, 2]".into(),
                    ));
                }
                if h.sample_radii.iter().any(|r| !(*r > 0.0 && *r < 2.0)) {
                    return Err(Error::InvalidParameter(
                        "harness.sample_radii must lie in (0, 2)".into(),
                    ));
                }
                if let Some(lt) = &h.linear_term {
                    if lt.x.len() != 2 || lt.xp.len() != 2 {
                        return Err(Error::InvalidParameter(
                            "linear_term points must be two-dimensional".into(),
                        ));
                    }
                    if !(lt.delta > 0.0) || !(lt.step > 0.0) {
                        return Err(Error::InvalidParameter(
                            "linear_term delta and step must be positive".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Loads the symbol file, resolving relative paths against `base`.
    pub fn load_symbol(&self, base: &Path) -> Result<HoppingSymbol> {
        let path = self.symbol.as_ref().ok_or_else(|| missing("symbol"))?;
        let path = if path.is_absolute() {
            path.clone()
        } else {
            base.join(path)
        };
        let text = std::fs::read_to_string(&path)?;
        let file: SymbolFile = serde_json::from_str(&text)?;
        HoppingSymbol::from_file(&file)
    }
}

fn missing(key: &str) -> Error {
    Error::InvalidParameter(format!("config is missing `{key}`"))
}
