use std::fs::File;
use std::io::BufWriter;

use magedge::config::HarnessOptions;
use magedge::field::FieldSpec;
use magedge::io::{
    fmt_f64, read_sweep_csv, sweep_from_rows, write_sweep_csv, write_versioned_json, CsvOut,
};
use magedge::lattice::{build_peierls_matrix, HoppingSymbol, LatticeBox};
use magedge::phase::{area_bound_certificate, cocycle_defect, flux_triangle, peierls_phase};
use magedge::quadrature::QuadratureRule;
use magedge::regularization::{
    linear_term_integral, linear_term_scale, mollifier_difference_bound,
    schur_difference_certificate, Mollifier,
};
use magedge::scaling::{
    fit_power, fit_power_log, sweep_edges, verify_theorem_bound, Certificate, EdgeSweep, FitReport,
    Regime, SchurNorms,
};
use magedge::spectral::{full_spectrum, SpectralGap, Which};
use magedge::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::{Ctx, Outcome};

struct Setup {
    symbol: HoppingSymbol,
    field: FieldSpec,
    lattice: LatticeBox,
    rule: QuadratureRule,
}

fn setup(ctx: &Ctx) -> Result<Setup> {
    let symbol = ctx.config.load_symbol(&ctx.base_dir)?;
    let field = ctx
        .config
        .field
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("missing field".into()))?
        .build()?;
    if field.dim() != symbol.dim() {
        return Err(Error::DimensionMismatch {
            expected: symbol.dim(),
            got: field.dim(),
        });
    }
    let radius = ctx
        .config
        .box_radius
        .ok_or_else(|| Error::InvalidParameter("missing box_radius".into()))?;
    Ok(Setup {
        lattice: LatticeBox::new(symbol.dim(), radius),
        rule: QuadratureRule::new(ctx.config.quadrature_order)?,
        symbol,
        field,
    })
}

fn sweep_file(which: Which) -> String {
    format!("sweep_{which}.csv")
}

fn write_sweep(ctx: &Ctx, sweep: &EdgeSweep, outputs: &mut Vec<String>) -> Result<()> {
    let name = sweep_file(sweep.which);
    write_sweep_csv(sweep, BufWriter::new(File::create(ctx.path(&name))?))?;
    outputs.push(name);
    Ok(())
}

/// Runs one sweep per configured edge, writing each CSV. A partial sweep is
/// still written when the eigensolver gives up part-way.
fn run_sweeps(ctx: &mut Ctx, s: &Setup, outputs: &mut Vec<String>) -> Result<Vec<EdgeSweep>> {
    let grid = ctx.config.eps_grid.values()?;
    let mut sweeps = Vec::new();
    for which in ctx.config.which.clone() {
        let res = ctx.timed(format!("sweep_{which}"), |c| {
            c.log(format!(
                "sweeping {which} over {} points on {} sites",
                grid.len(),
                s.lattice.len()
            ));
            sweep_edges(
                &s.symbol,
                &s.field,
                which,
                &grid,
                &s.lattice,
                &c.config.solver,
                &s.rule,
            )
        });
        match res {
            Ok(sweep) => {
                write_sweep(ctx, &sweep, outputs)?;
                sweeps.push(sweep);
            }
            Err(Error::SweepAborted {
                eps,
                source,
                partial,
            }) => {
                write_sweep(ctx, &partial, outputs)?;
                return Err(Error::SweepAborted {
                    eps,
                    source,
                    partial,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(sweeps)
}

#[derive(Serialize)]
struct FluxRow {
    index: usize,
    flux: f64,
    phase: f64,
    cocycle_defect: f64,
    area_lhs: Option<f64>,
    area_rhs: Option<f64>,
}

pub fn flux(ctx: &mut Ctx) -> Result<Outcome> {
    let field = ctx
        .config
        .field
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("missing field".into()))?
        .build()?;
    let opts = ctx
        .config
        .flux
        .clone()
        .ok_or_else(|| Error::InvalidParameter("missing flux section".into()))?;
    let rule = QuadratureRule::new(ctx.config.quadrature_order)?;
    let rows = ctx.timed("flux", |_| {
        opts.triangles
            .iter()
            .enumerate()
            .map(|(index, t)| {
                let flux = flux_triangle(&field, t, &rule)?;
                let phase = peierls_phase(&field, opts.eps, &t.y, &t.z, &rule)?;
                let cocycle = cocycle_defect(&field, opts.eps, &t.x, &t.y, &t.z, &rule)?;
                let area = match field.bound() {
                    Some(_) => Some(area_bound_certificate(
                        &field, opts.eps, &t.x, &t.y, &t.z, &rule,
                    )?),
                    None => None,
                };
                Ok(FluxRow {
                    index,
                    flux,
                    phase,
                    cocycle_defect: cocycle,
                    area_lhs: area.map(|a| a.lhs),
                    area_rhs: area.map(|a| a.rhs),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let passed = rows.iter().all(|r| match (r.area_lhs, r.area_rhs) {
        (Some(l), Some(rhs)) => l <= rhs + 1e-10,
        _ => true,
    });
    let mut out = CsvOut::new(
        BufWriter::new(File::create(ctx.path("flux.csv"))?),
        &[
            "index",
            "flux",
            "phase_yz",
            "cocycle_defect",
            "area_lhs",
            "area_rhs",
        ],
    )?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &rows {
        out.row([
            r.index.to_string(),
            fmt_f64(r.flux),
            fmt_f64(r.phase),
            fmt_f64(r.cocycle_defect),
            opt(r.area_lhs),
            opt(r.area_rhs),
        ])?;
    }
    out.finish()?;
    Ok(Outcome {
        passed,
        outputs: vec!["flux.csv".into()],
    })
}

#[derive(Serialize)]
struct GapEntry {
    eps: f64,
    gaps: Vec<SpectralGap>,
}

#[derive(Serialize)]
struct ButterflyReport {
    scenario: String,
    sites: usize,
    gap_threshold: f64,
    rows: usize,
    gap_tables: Vec<GapEntry>,
}

pub fn butterfly(ctx: &mut Ctx) -> Result<Outcome> {
    let s = setup(ctx)?;
    let grid = ctx.config.eps_grid.values()?;
    let threshold = ctx
        .config
        .butterfly
        .as_ref()
        .map_or(magedge::spectral::DEFAULT_GAP_THRESHOLD, |b| {
            b.gap_threshold
        });
    let cap = ctx.config.solver.dense_cap;
    if s.lattice.len() > cap {
        return Err(Error::SizeCap {
            size: s.lattice.len(),
            cap,
        });
    }
    let spectra = ctx.timed("spectra", |c| {
        c.log(format!(
            "dense spectra at {} eps values on {} sites",
            grid.len(),
            s.lattice.len()
        ));
        grid.par_iter()
            .map(|&e| {
                let m = build_peierls_matrix(&s.symbol, &s.field, e, &s.lattice, &s.rule)?;
                full_spectrum(&m, threshold, cap)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = CsvOut::new(
        BufWriter::new(File::create(ctx.path("butterfly.csv"))?),
        &["eps", "eigenvalue"],
    )?;
    let mut rows = 0;
    for (e, spec) in grid.iter().zip(&spectra) {
        for v in &spec.eigenvalues {
            out.row([fmt_f64(*e), fmt_f64(*v)])?;
            rows += 1;
        }
    }
    out.finish()?;
    let mut gaps = CsvOut::new(
        BufWriter::new(File::create(ctx.path("gaps.csv"))?),
        &["eps", "lower", "upper", "width"],
    )?;
    for (e, spec) in grid.iter().zip(&spectra) {
        for g in &spec.gaps {
            gaps.row([
                fmt_f64(*e),
                fmt_f64(g.lower),
                fmt_f64(g.upper),
                fmt_f64(g.width),
            ])?;
        }
    }
    gaps.finish()?;
    let report = ButterflyReport {
        scenario: ctx.config.scenario.clone(),
        sites: s.lattice.len(),
        gap_threshold: threshold,
        rows,
        gap_tables: grid
            .iter()
            .zip(spectra)
            .map(|(&eps, spec)| GapEntry {
                eps,
                gaps: spec.gaps,
            })
            .collect(),
    };
    write_versioned_json(&ctx.path("butterfly.json"), &report)?;
    Ok(Outcome {
        passed: true,
        outputs: vec![
            "butterfly.csv".into(),
            "gaps.csv".into(),
            "butterfly.json".into(),
        ],
    })
}

#[derive(Serialize)]
struct SweepSummary {
    which: Which,
    base: f64,
    noise_floor: f64,
    schur0: f64,
    points: usize,
    flagged: usize,
    max_residual: f64,
}

#[derive(Serialize)]
struct SweepReport {
    scenario: String,
    sites: usize,
    sweeps: Vec<SweepSummary>,
}

fn summarize(s: &EdgeSweep) -> SweepSummary {
    SweepSummary {
        which: s.which,
        base: s.base,
        noise_floor: s.noise_floor,
        schur0: s.schur0,
        points: s.len(),
        flagged: s.flagged.iter().filter(|f| **f).count(),
        max_residual: s.residuals.iter().copied().fold(s.base_residual, f64::max),
    }
}

pub fn sweep(ctx: &mut Ctx) -> Result<Outcome> {
    let s = setup(ctx)?;
    let mut outputs = Vec::new();
    let sweeps = run_sweeps(ctx, &s, &mut outputs)?;
    let report = SweepReport {
        scenario: ctx.config.scenario.clone(),
        sites: s.lattice.len(),
        sweeps: sweeps.iter().map(summarize).collect(),
    };
    write_versioned_json(&ctx.path("sweep.json"), &report)?;
    outputs.push("sweep.json".into());
    Ok(Outcome {
        passed: true,
        outputs,
    })
}

#[derive(Serialize)]
struct FitEntry {
    which: Which,
    power: Option<FitReport>,
    power_log: Option<FitReport>,
    errors: Vec<String>,
    /// Model with the smaller log-space residual.
    preferred: Option<&'static str>,
}

#[derive(Serialize)]
struct FitFile {
    scenario: String,
    fits: Vec<FitEntry>,
}

pub fn fit(ctx: &mut Ctx) -> Result<Outcome> {
    let mut outputs = Vec::new();
    let csv = ctx.config.fit.as_ref().and_then(|f| f.sweep_csv.clone());
    let sweeps = match csv {
        Some(path) => {
            let path = ctx.resolve(&path);
            let rows = read_sweep_csv(File::open(&path)?)?;
            vec![sweep_from_rows(&rows, ctx.config.which[0])?]
        }
        None => {
            let s = setup(ctx)?;
            run_sweeps(ctx, &s, &mut outputs)?
        }
    };
    let mut fits = Vec::new();
    for sweep in &sweeps {
        let mut errors = Vec::new();
        let power = fit_power(sweep)
            .map_err(|e| errors.push(format!("power: {e}")))
            .ok();
        let power_log = fit_power_log(sweep)
            .map_err(|e| errors.push(format!("power_log: {e}")))
            .ok();
        let preferred = match (&power, &power_log) {
            (Some(a), Some(b)) => Some(if a.residual <= b.residual {
                "power"
            } else {
                "power_log"
            }),
            (Some(_), None) => Some("power"),
            (None, Some(_)) => Some("power_log"),
            (None, None) => None,
        };
        fits.push(FitEntry {
            which: sweep.which,
            power,
            power_log,
            errors,
            preferred,
        });
    }
    let passed = fits.iter().all(|f| f.power.is_some());
    write_versioned_json(
        &ctx.path("fit.json"),
        &FitFile {
            scenario: ctx.config.scenario.clone(),
            fits,
        },
    )?;
    outputs.push("fit.json".into());
    Ok(Outcome { passed, outputs })
}

#[derive(Serialize)]
struct VerifyFile {
    scenario: String,
    regime: Regime,
    alpha: f64,
    schur_norms: SchurNorms,
    passed: bool,
    certificates: Vec<Certificate>,
}

pub fn verify(ctx: &mut Ctx) -> Result<Outcome> {
    let s = setup(ctx)?;
    let v = ctx
        .config
        .verify
        .clone()
        .ok_or_else(|| Error::InvalidParameter("missing verify section".into()))?;
    let norms = SchurNorms {
        alpha: s.symbol.schur_alpha_norm(v.alpha.min(2.0)),
        two: s.symbol.schur_alpha_norm(2.0),
    };
    let mut outputs = Vec::new();
    let sweeps = run_sweeps(ctx, &s, &mut outputs)?;
    let certificates = sweeps
        .iter()
        .map(|sw| verify_theorem_bound(sw, v.alpha, norms, v.regime))
        .collect::<Result<Vec<_>>>()?;
    let passed = certificates.iter().all(|c| c.passed);
    for c in &certificates {
        ctx.log(format!(
            "{} {}: max ratio {:.4e}, last-third max {:.4e}, median {:.4e}: {}",
            c.regime,
            c.which,
            c.max_ratio,
            c.last_third_max,
            c.median_ratio,
            if c.passed { "pass" } else { "FAIL" }
        ));
    }
    let file = VerifyFile {
        scenario: ctx.config.scenario.clone(),
        regime: v.regime,
        alpha: v.alpha,
        schur_norms: norms,
        passed,
        certificates,
    };
    write_versioned_json(&ctx.path("certificates.json"), &file)?;
    outputs.push("certificates.json".into());
    Ok(Outcome { passed, outputs })
}

#[derive(Serialize)]
struct DeltaRow {
    dim: usize,
    delta: f64,
    normalization_defect: f64,
    difference_constant: f64,
    schur_lhs: f64,
    schur_rhs: f64,
    schur_lhs_over_delta_sq: f64,
}

#[derive(Serialize)]
struct Check {
    name: String,
    value: f64,
    limit: f64,
    passed: bool,
}

#[derive(Serialize)]
struct HarnessFile {
    scenario: String,
    alpha: f64,
    rows: Vec<DeltaRow>,
    checks: Vec<Check>,
    passed: bool,
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

pub fn harness(ctx: &mut Ctx) -> Result<Outcome> {
    let h: HarnessOptions = ctx.config.harness.clone().unwrap_or_default();
    let rule = QuadratureRule::new(ctx.config.quadrature_order)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &dim in &h.dims {
        let symbol = HoppingSymbol::harper(dim);
        let mut constants = Vec::new();
        let mut scaled = Vec::new();
        for &delta in &h.deltas {
            let moll = Mollifier::with_default_step(dim, delta)?;
            let zero = moll.tilde_f(&vec![0.0; dim])?;
            let normalization_defect = (zero / moll.norm_sq() - 1.0).abs();
            let samples: Vec<Vec<f64>> = h
                .sample_radii
                .iter()
                .map(|u| {
                    let mut x = vec![0.0; dim];
                    x[0] = u / delta;
                    x
                })
                .collect();
            let difference_constant = ctx.timed(format!("grav_constant_d{dim}_{delta}"), |_| {
                mollifier_difference_bound(&moll, h.alpha, &samples)
            })?;
            let schur = schur_difference_certificate(&symbol, &moll, 2.0)?;
            checks.push(Check {
                name: format!("schur difference bound d={dim} delta={delta}"),
                value: schur.lhs,
                limit: schur.rhs,
                passed: schur.holds(),
            });
            checks.push(Check {
                name: format!("normalization identity d={dim} delta={delta}"),
                value: normalization_defect,
                limit: 1e-10,
                passed: normalization_defect <= 1e-10,
            });
            constants.push(difference_constant);
            scaled.push(schur.lhs / (delta * delta));
            rows.push(DeltaRow {
                dim,
                delta,
                normalization_defect,
                difference_constant,
                schur_lhs: schur.lhs,
                schur_rhs: schur.rhs,
                schur_lhs_over_delta_sq: schur.lhs / (delta * delta),
            });
        }
        let c_spread = spread(&constants);
        checks.push(Check {
            name: format!("difference constant spread d={dim}"),
            value: c_spread,
            limit: 2.0,
            passed: c_spread.is_finite() && c_spread <= 2.0,
        });
        let s_spread = spread(&scaled);
        checks.push(Check {
            name: format!("schur lhs / delta^2 spread d={dim}"),
            value: s_spread,
            limit: 2.0,
            passed: s_spread.is_finite() && s_spread <= 2.0,
        });
    }
    if let Some(lt) = &h.linear_term {
        let moll = Mollifier::new(2, lt.delta, lt.step)?;
        let field = FieldSpec::constant_unit(2);
        let value = ctx.timed("linear_term", |_| {
            linear_term_integral(&moll, &field, &lt.x, &lt.xp, &rule)
        })?;
        let scale = linear_term_scale(&moll, &lt.x, &lt.xp);
        checks.push(Check {
            name: "constant-field linear term".into(),
            value: value.abs(),
            limit: 1e-8 * scale,
            passed: value.abs() <= 1e-8 * scale,
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        ctx.log(format!(
            "{}: {:.4e} vs {:.4e}: {}",
            c.name,
            c.value,
            c.limit,
            if c.passed { "pass" } else { "FAIL" }
        ));
    }
    let file = HarnessFile {
        scenario: ctx.config.scenario.clone(),
        alpha: h.alpha,
        rows,
        checks,
        passed,
    };
    write_versioned_json(&ctx.path("harness.json"), &file)?;
    Ok(Outcome {
        passed,
        outputs: vec!["harness.json".into()],
    })
}
