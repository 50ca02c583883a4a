//! Lattice kernels on `Z^d` and their Peierls-transformed compressions to
//! finite boxes.
//!
//! The matrix entry at row `γ`, column `γ'` is `e^{iφ(γ, γ')} K(γ, γ')` where
//! `φ` is the phase returned by [`crate::phase::peierls_phase`]. The phase is
//! evaluated once per unordered pair and mirrored, so assembled matrices are
//! exactly Hermitian.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{FieldKind, FieldSpec};
use crate::phase::peierls_phase;
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// `⟨γ⟩ = (1 + |γ|²)^½`.
pub fn japanese(offset: &[i64]) -> f64 {
    (1.0 + norm_sq(offset)).sqrt()
}

fn norm_sq(offset: &[i64]) -> f64 {
    offset.iter().map(|&c| (c as f64) * (c as f64)).sum()
}

fn to_f64(site: &[i64]) -> Vec<f64> {
    site.iter().map(|&c| c as f64).collect()
}

/// Tail model for a truncated symbol: `|λ(γ)| <= amplitude ⟨γ⟩^{-rate}` beyond
/// the stored support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailModel {
    pub rate: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// `|γ|`
    Norm,
    /// `⟨γ⟩²`
    JapaneseSquared,
}

/// Fourier coefficients `λ(γ)` of a translation-invariant lattice operator.
#[derive(Debug, Clone, PartialEq)]
pub struct HoppingSymbol {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, Complex64>,
    tail: Option<TailModel>,
    label: String,
}

impl HoppingSymbol {
    /// Validates `λ(-γ) = conj λ(γ)` to `1e-12` relative and stores the exactly
    /// self-adjoint version. Zero coefficients are dropped.
    pub fn new<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i64>, Complex64)>,
    {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "symbol dimension must be positive".into(),
            ));
        }
        let mut raw: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (key, value) in entries {
            if key.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: key.len(),
                });
            }
            if !value.re.is_finite() || !value.im.is_finite() {
                return Err(Error::NonFinite(format!("symbol coefficient at {key:?}")));
            }
            *raw.entry(key).or_default() += value;
        }
        raw.retain(|_, v| *v != Complex64::new(0.0, 0.0));
        let scale = raw.values().fold(0.0f64, |m, v| m.max(v.norm()));
        let mut coeffs = BTreeMap::new();
        for (key, value) in &raw {
            let neg: Vec<i64> = key.iter().map(|c| -c).collect();
            let partner = raw.get(&neg).copied().unwrap_or_default();
            if (partner - value.conj()).norm() > 1e-12 * scale {
                return Err(Error::NonHermitian(format!(
                    "λ({neg:?}) = {partner} but conj λ({key:?}) = {}",
                    value.conj()
                )));
            }
            // keep the lexicographically larger key, mirror it to the smaller
            if *key >= neg {
                let v = if *key == neg {
                    Complex64::new(value.re, 0.0)
                } else {
                    *value
                };
                coeffs.insert(key.clone(), v);
                coeffs.insert(neg, v.conj());
            }
        }
        Ok(Self {
            dim,
            coeffs,
            tail: None,
            label: "symbol".into(),
        })
    }

    pub fn with_tail(mut self, tail: TailModel) -> Self {
        self.tail = Some(tail);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `λ(0) = 1`.
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, [(vec![0; dim], Complex64::new(1.0, 0.0))])
            .expect("identity symbol is valid")
            .with_label("identity")
    }

    /// Nearest-neighbour hopping `λ(±e_j) = 1`.
    pub fn harper(dim: usize) -> Self {
        let mut entries = Vec::new();
        for j in 0..dim {
            for sign in [1, -1] {
                let mut e = vec![0; dim];
                e[j] = sign;
                entries.push((e, Complex64::new(1.0, 0.0)));
            }
        }
        Self::new(dim, entries)
            .expect("harper symbol is valid")
            .with_label("harper")
    }

    /// `λ(γ) = ⟨γ⟩^{-rate}` for `|γ| <= radius`, with the matching tail model.
    pub fn long_range(dim: usize, rate: f64, radius: f64) -> Self {
        let r = radius.floor() as i64;
        let mut entries = Vec::new();
        let mut cur = vec![-r; dim];
        loop {
            if norm_sq(&cur) <= radius * radius {
                entries.push((cur.clone(), Complex64::new(japanese(&cur).powf(-rate), 0.0)));
            }
            if !advance(&mut cur, -r, r) {
                break;
            }
        }
        Self::new(dim, entries)
            .expect("long-range symbol is valid")
            .with_tail(TailModel {
                rate,
                amplitude: 1.0,
            })
            .with_label(format!("long_range(rate={rate}, radius={radius})"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn tail(&self) -> Option<TailModel> {
        self.tail
    }

    pub fn get(&self, offset: &[i64]) -> Complex64 {
        self.coeffs.get(offset).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    /// Largest `|γ|` in the support.
    pub fn support_radius(&self) -> f64 {
        self.coeffs
            .keys()
            .map(|k| norm_sq(k).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.coeffs.values().all(|v| v.im == 0.0)
    }

    pub fn negated(&self) -> Self {
        Self {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(k, v)| (k.clone(), -v)).collect(),
            tail: self.tail,
            label: format!("-{}", self.label),
        }
    }

    /// `Σ_γ |λ(γ)| ⟨γ⟩^α`, the Schur α-norm of the operator on `Z^d`.
    pub fn schur_alpha_norm(&self, alpha: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, v)| v.norm() * japanese(k).powf(alpha))
            .sum()
    }

    pub fn weighted_l1(&self, weight: Weight) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, v)| {
                let w = match weight {
                    Weight::Norm => norm_sq(k).sqrt(),
                    Weight::JapaneseSquared => 1.0 + norm_sq(k),
                };
                v.norm() * w
            })
            .sum()
    }

    /// Upper bound on the Schur α-mass discarded by the truncation,
    /// `Σ_{|γ| > r} amplitude ⟨γ⟩^{α - rate}`. Zero without a tail model,
    /// infinite when the tail is not summable.
    pub fn tail_bound(&self, alpha: f64) -> f64 {
        let Some(tail) = self.tail else {
            return 0.0;
        };
        let d = self.dim as f64;
        let s = tail.rate - alpha;
        if s <= d {
            return f64::INFINITY;
        }
        // |γ| > r forces |γ|_∞ > r / √d; shells of fixed |γ|_∞ = k hold
        // (2k+1)^d - (2k-1)^d points, each with ⟨γ⟩ >= ⟨k⟩.
        let k0 = (self.support_radius() / d.sqrt()).floor() as u64 + 1;
        let kmax = k0 + 20_000;
        let mut sum = 0.0;
        for k in k0..=kmax {
            let kf = k as f64;
            let count = (2.0 * kf + 1.0).powf(d) - (2.0 * kf - 1.0).powf(d);
            sum += count * (1.0 + kf * kf).powf(-0.5 * s);
        }
        let kf = kmax as f64;
        let rest = 2.0 * d * 3f64.powf(d - 1.0) * kf.powf(d - s) / (s - d);
        tail.amplitude * (sum + rest)
    }
}

fn advance(cur: &mut [i64], lo: i64, hi: i64) -> bool {
    for c in cur.iter_mut().rev() {
        if *c < hi {
            *c += 1;
            return true;
        }
        *c = lo;
    }
    false
}

pub type EntryFn = dyn Fn(&[i64], &[i64]) -> Complex64 + Send + Sync;

/// A kernel `K(γ, γ')` that need not be translation invariant. Entries vanish
/// unless `γ - γ'` lies in `support`, where each offset carries an upper bound
/// on `|K|`.
#[derive(Clone)]
pub struct GeneralKernel {
    dim: usize,
    support: Vec<(Vec<i64>, f64)>,
    entry: Arc<EntryFn>,
    label: String,
}

impl fmt::Debug for GeneralKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralKernel")
            .field("dim", &self.dim)
            .field("support", &self.support.len())
            .field("label", &self.label)
            .finish()
    }
}

impl GeneralKernel {
    pub fn new(
        dim: usize,
        support: Vec<(Vec<i64>, f64)>,
        entry: Arc<EntryFn>,
        label: impl Into<String>,
    ) -> Result<Self> {
        for (k, _) in &support {
            if k.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: k.len(),
                });
            }
        }
        Ok(Self {
            dim,
            support,
            entry,
            label: label.into(),
        })
    }

    pub fn from_symbol(symbol: &HoppingSymbol) -> Self {
        let s = symbol.clone();
        Self {
            dim: symbol.dim,
            support: symbol.iter().map(|(k, v)| (k.clone(), v.norm())).collect(),
            entry: Arc::new(move |g, gp| {
                let h: Vec<i64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
                s.get(&h)
            }),
            label: symbol.label.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> &[(Vec<i64>, f64)] {
        &self.support
    }

    pub fn entry(&self, row: &[i64], col: &[i64]) -> Complex64 {
        (self.entry)(row, col)
    }

    /// `Σ_h bound(h) ⟨h⟩^α`, an upper bound on the Schur α-norm.
    pub fn schur_alpha_bound(&self, alpha: f64) -> f64 {
        self.support
            .iter()
            .map(|(k, b)| b * japanese(k).powf(alpha))
            .sum()
    }

    /// Largest `|K(γ, γ') - conj K(γ', γ)|` over all supported pairs in `lattice`.
    pub fn hermiticity_defect(&self, lattice: &LatticeBox) -> f64 {
        let mut worst = 0.0f64;
        for g in lattice.sites() {
            for (h, _) in &self.support {
                let gp: Vec<i64> = g.iter().zip(h).map(|(a, b)| a - b).collect();
                if lattice.index_of(&gp).is_some() {
                    let d = (self.entry(g, &gp) - self.entry(&gp, g).conj()).norm();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }
}

/// Anything that can be compressed to a box and dressed with phases.
pub trait LatticeKernel: Sync {
    fn dim(&self) -> usize;
    fn offsets(&self) -> Vec<Vec<i64>>;
    fn entry(&self, row: &[i64], col: &[i64]) -> Complex64;
    fn label(&self) -> String;
    /// Whether `entry(γ', γ) = conj entry(γ, γ')` holds exactly by construction.
    fn exactly_hermitian(&self) -> bool;
}

impl LatticeKernel for HoppingSymbol {
    fn dim(&self) -> usize {
        self.dim
    }
    fn offsets(&self) -> Vec<Vec<i64>> {
        self.coeffs.keys().cloned().collect()
    }
    fn entry(&self, row: &[i64], col: &[i64]) -> Complex64 {
        let h: Vec<i64> = row.iter().zip(col).map(|(a, b)| a - b).collect();
        self.get(&h)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
    fn exactly_hermitian(&self) -> bool {
        true
    }
}

impl LatticeKernel for GeneralKernel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn offsets(&self) -> Vec<Vec<i64>> {
        self.support.iter().map(|(k, _)| k.clone()).collect()
    }
    fn entry(&self, row: &[i64], col: &[i64]) -> Complex64 {
        (self.entry)(row, col)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
    fn exactly_hermitian(&self) -> bool {
        false
    }
}

/// The box `{-R, ..., R}^d`, enumerated lexicographically with the last
/// coordinate running fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBox {
    dim: usize,
    radius: usize,
    sites: Vec<Vec<i64>>,
}

impl LatticeBox {
    pub fn new(dim: usize, radius: usize) -> Self {
        let r = radius as i64;
        let mut sites = Vec::with_capacity((2 * radius + 1).pow(dim as u32));
        let mut cur = vec![-r; dim];
        loop {
            sites.push(cur.clone());
            if !advance(&mut cur, -r, r) {
                break;
            }
        }
        Self { dim, radius, sites }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Vec<i64>] {
        &self.sites
    }

    pub fn site(&self, index: usize) -> &[i64] {
        &self.sites[index]
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if site.len() != self.dim {
            return None;
        }
        let r = self.radius as i64;
        let side = 2 * r + 1;
        let mut idx = 0i64;
        for &c in site {
            if c < -r || c > r {
                return None;
            }
            idx = idx * side + (c + r);
        }
        Some(idx as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseVariant {
    None,
    Transverse,
    SlowlyVarying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub field: String,
    pub field_kind: Option<FieldKind>,
    pub eps: f64,
    pub dim: Option<usize>,
    pub radius: Option<usize>,
    pub phase: PhaseVariant,
}

impl Provenance {
    pub fn explicit(label: impl Into<String>) -> Self {
        Self {
            source: label.into(),
            field: "none".into(),
            field_kind: None,
            eps: 0.0,
            dim: None,
            radius: None,
            phase: PhaseVariant::None,
        }
    }
}

const PARALLEL_ROWS: usize = 8192;

/// Compressed-row Hermitian matrix with its provenance.
#[derive(Debug, Clone)]
pub struct PeierlsMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    provenance: Provenance,
    lattice: Option<Arc<LatticeBox>>,
}

impl PartialEq for PeierlsMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.row_ptr == other.row_ptr
            && self.cols == other.cols
            && self.vals == other.vals
    }
}

impl PeierlsMatrix {
    /// Assembles an `n × n` matrix from `(row, col, value)` triplets; duplicate
    /// positions are summed.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
        provenance: Provenance,
    ) -> Result<Self> {
        let mut rows: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); n];
        for (r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::InvalidParameter(format!(
                    "entry ({r}, {c}) outside a {n} x {n} matrix"
                )));
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFinite(format!("matrix entry ({r}, {c})")));
            }
            *rows[r].entry(c).or_default() += v;
        }
        let rows = rows.into_iter().map(|m| m.into_iter().collect()).collect();
        Ok(Self::from_rows(n, rows, provenance, None))
    }

    pub fn from_dense(m: &DMatrix<Complex64>, label: impl Into<String>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let n = m.nrows();
        let triplets = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
        let triplets = triplets
            .filter(|&(i, j)| m[(i, j)] != Complex64::new(0.0, 0.0))
            .map(|(i, j)| (i, j, m[(i, j)]));
        Self::from_triplets(n, triplets, Provenance::explicit(label))
    }

    pub fn from_real_dense(m: &DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        Self::from_dense(&m.map(|v| Complex64::new(v, 0.0)), label)
    }

    fn from_rows(
        n: usize,
        rows: Vec<Vec<(usize, Complex64)>>,
        provenance: Provenance,
        lattice: Option<Arc<LatticeBox>>,
    ) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
            provenance,
            lattice,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn lattice(&self) -> Option<&LatticeBox> {
        self.lattice.as_deref()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(pos) => self.vals[range.start + pos],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `(row_ptr, cols)`.
    pub fn pattern(&self) -> (&[usize], &[usize]) {
        (&self.row_ptr, &self.cols)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.vals
    }

    /// `out = M x`. Rows are independent, so the parallel path gives the
    /// same bits as the serial one.
    pub fn matvec(&self, x: &[Complex64], out: &mut [Complex64]) {
        let row = |i: usize| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            acc
        };
        if self.n >= PARALLEL_ROWS {
            out.par_iter_mut()
                .enumerate()
                .with_min_len(1024)
                .for_each(|(i, o)| *o = row(i));
        } else {
            out.iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Largest absolute row sum; bounds the operator norm of a Hermitian matrix.
    pub fn schur_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `Σ_j |M_ij| ⟨γ_i - γ_j⟩^α` for one row; needs lattice sites.
    pub fn row_schur_norm(&self, i: usize, alpha: f64) -> Option<f64> {
        let lattice = self.lattice.as_ref()?;
        let g = lattice.site(i);
        Some(
            self.row(i)
                .map(|(j, v)| {
                    let h: Vec<i64> = g.iter().zip(lattice.site(j)).map(|(a, b)| a - b).collect();
                    v.norm() * japanese(&h).powf(alpha)
                })
                .sum(),
        )
    }

    /// `max |M_ab - conj M_ba|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v = -*v);
        out
    }

    /// Entrywise complex conjugate.
    pub fn conjugated(&self) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    /// `D M D*` with `D = diag(e^{i χ_a})`.
    pub fn conjugate_by_phases(&self, chi: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                out.vals[k] = self.vals[k] * Complex64::from_polar(1.0, chi[i] - chi[j]);
            }
        }
        out
    }
}

/// Compression of `source` to `lattice` with Peierls phases of strength `eps`.
pub fn build_peierls_matrix<K: LatticeKernel + ?Sized>(
    source: &K,
    field: &FieldSpec,
    eps: f64,
    lattice: &LatticeBox,
    rule: &QuadratureRule,
) -> Result<PeierlsMatrix> {
    let d = lattice.dim();
    if source.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: source.dim(),
        });
    }
    if field.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: field.dim(),
        });
    }
    if !eps.is_finite() {
        return Err(Error::NonFinite("eps".into()));
    }
    let phase = match field {
        FieldSpec::SlowlyVarying(_) => PhaseVariant::SlowlyVarying,
        _ => PhaseVariant::Transverse,
    };
    let provenance = Provenance {
        source: source.label(),
        field: field.label(),
        field_kind: Some(field.kind()),
        eps,
        dim: Some(d),
        radius: Some(lattice.radius()),
        phase,
    };
    let phase_fn = |a: &[i64], b: &[i64]| -> Result<f64> {
        if eps == 0.0 {
            Ok(0.0)
        } else {
            peierls_phase(field, eps, &to_f64(a), &to_f64(b), rule)
        }
    };
    assemble(source, lattice, provenance, phase_fn)
}

/// The compression of `source` without phases.
pub fn bare_matrix<K: LatticeKernel + ?Sized>(
    source: &K,
    lattice: &LatticeBox,
) -> Result<PeierlsMatrix> {
    if source.dim() != lattice.dim() {
        return Err(Error::DimensionMismatch {
            expected: lattice.dim(),
            got: source.dim(),
        });
    }
    let provenance = Provenance {
        source: source.label(),
        field: "none".into(),
        field_kind: None,
        eps: 0.0,
        dim: Some(lattice.dim()),
        radius: Some(lattice.radius()),
        phase: PhaseVariant::None,
    };
    assemble(source, lattice, provenance, |_, _| Ok(0.0))
}

fn assemble<K, P>(
    source: &K,
    lattice: &LatticeBox,
    provenance: Provenance,
    phase: P,
) -> Result<PeierlsMatrix>
where
    K: LatticeKernel + ?Sized,
    P: Fn(&[i64], &[i64]) -> Result<f64> + Sync,
{
    let offsets = source.offsets();
    let exact = source.exactly_hermitian();
    let dressed = |a: &[i64], b: &[i64]| -> Result<Complex64> {
        let k = source.entry(a, b);
        let phi = phase(a, b)?;
        Ok(if phi == 0.0 {
            k
        } else {
            Complex64::from_polar(1.0, phi) * k
        })
    };
    let rows: Vec<Vec<(usize, Complex64)>> = (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let g = lattice.site(i);
            let mut row = Vec::with_capacity(offsets.len());
            for h in &offsets {
                let gp: Vec<i64> = g.iter().zip(h).map(|(a, b)| a - b).collect();
                let Some(j) = lattice.index_of(&gp) else {
                    continue;
                };
                let value = if i == j {
                    let k = source.entry(g, g);
                    if !exact && k.im.abs() > 1e-12 * k.norm().max(1.0) {
                        return Err(Error::NonHermitian(format!(
                            "diagonal entry at {g:?} is {k}"
                        )));
                    }
                    Complex64::new(k.re, 0.0)
                } else if i < j {
                    dressed(g, &gp)?
                } else {
                    if !exact {
                        let forward = source.entry(g, &gp);
                        let back = source.entry(&gp, g).conj();
                        if (forward - back).norm()
                            > 1e-12 * forward.norm().max(back.norm()).max(1e-300)
                        {
                            return Err(Error::NonHermitian(format!(
                                "K({g:?}, {gp:?}) = {forward} but conj K({gp:?}, {g:?}) = {back}"
                            )));
                        }
                    }
                    dressed(&gp, g)?.conj()
                };
                if value != Complex64::new(0.0, 0.0) {
                    row.push((j, value));
                }
            }
            row.sort_by_key(|e| e.0);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(PeierlsMatrix::from_rows(
        lattice.len(),
        rows,
        provenance,
        Some(Arc::new(lattice.clone())),
    ))
}

/// Absorbs `e^{i eps0 φ^A}` into the symbol, so that sweeps near `eps0` can
/// be run as sweeps near zero. Refused for slowly varying fields, whose phase
/// is not linear in the field strength.
pub fn recenter_kernel(
    symbol: &HoppingSymbol,
    field: &FieldSpec,
    eps0: f64,
    rule: &QuadratureRule,
) -> Result<GeneralKernel> {
    if matches!(field, FieldSpec::SlowlyVarying(_)) {
        return Err(Error::UnsupportedField("slowly varying"));
    }
    if field.dim() != symbol.dim() {
        return Err(Error::DimensionMismatch {
            expected: symbol.dim(),
            got: field.dim(),
        });
    }
    let s = symbol.clone();
    let f = field.clone();
    let rule = rule.clone();
    let entry = move |g: &[i64], gp: &[i64]| -> Complex64 {
        let h: Vec<i64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
        let k = s.get(&h);
        if eps0 == 0.0 || k == Complex64::new(0.0, 0.0) || g == gp {
            return k;
        }
        // canonical orientation keeps the kernel exactly Hermitian
        let phi = if g < gp {
            peierls_phase(&f, eps0, &to_f64(g), &to_f64(gp), &rule)
        } else {
            peierls_phase(&f, eps0, &to_f64(gp), &to_f64(g), &rule).map(|p| -p)
        };
        // dimensions were checked above; the remaining failure is a non-finite field
        Complex64::from_polar(1.0, phi.unwrap_or(f64::NAN)) * k
    };
    GeneralKernel::new(
        symbol.dim(),
        symbol.iter().map(|(k, v)| (k.clone(), v.norm())).collect(),
        Arc::new(entry),
        format!("{}@eps0={eps0}", symbol.label()),
    )
}

/// Largest deviation between the sorted spectra of `M` and `D M D*`,
/// `D = diag(e^{iχ(γ)})`.
pub fn gauge_conjugation_check<F>(matrix: &PeierlsMatrix, chi: F, dense_cap: usize) -> Result<f64>
where
    F: Fn(&[i64]) -> f64,
{
    let phases: Vec<f64> = match matrix.lattice() {
        Some(l) => l.sites().iter().map(|s| chi(s)).collect(),
        None => (0..matrix.dim()).map(|i| chi(&[i as i64])).collect(),
    };
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("gauge function".into()));
    }
    let conj = matrix.conjugate_by_phases(&phases);
    let a = crate::spectral::dense_eigenvalues(matrix, dense_cap)?;
    let b = crate::spectral::dense_eigenvalues(&conj, dense_cap)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// On-disk symbol layout: integer-vector keys like `"1,0"` mapped to `[re, im]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolFile {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub coefficients: BTreeMap<String, [f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailModel>,
}

pub fn parse_offset_key(key: &str, dim: usize) -> Result<Vec<i64>> {
    let parts: std::result::Result<Vec<i64>, _> =
        key.split(',').map(|p| p.trim().parse::<i64>()).collect();
    let parts = parts.map_err(|e| Error::Parse(format!("bad offset key {key:?}: {e}")))?;
    if parts.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: parts.len(),
        });
    }
    // keep |γ|² representable
    if parts.iter().any(|c| c.unsigned_abs() > 1 << 20) {
        return Err(Error::Parse(format!("offset key {key:?} out of range")));
    }
    Ok(parts)
}

impl HoppingSymbol {
    pub fn from_file(file: &SymbolFile) -> Result<Self> {
        let entries = file
            .coefficients
            .iter()
            .map(|(k, [re, im])| {
                Ok((
                    parse_offset_key(k, file.dimension)?,
                    Complex64::new(*re, *im),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut s = Self::new(file.dimension, entries)?;
        if let Some(label) = &file.label {
            s.label = label.clone();
        }
        if let Some(tail) = file.tail {
            if !(tail.rate.is_finite() && tail.amplitude.is_finite() && tail.amplitude >= 0.0) {
                return Err(Error::InvalidParameter("tail model must be finite".into()));
            }
            s.tail = Some(tail);
        }
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SymbolFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> SymbolFile {
        SymbolFile {
            dimension: self.dim,
            label: Some(self.label.clone()),
            coefficients: self
                .coeffs
                .iter()
                .map(|(k, v)| {
                    let key = k.iter().map(i64::to_string).collect::<Vec<_>>().join(",");
                    (key, [v.re, v.im])
                })
                .collect(),
            tail: self.tail,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("symbol serializes")
    }
}

/// Maps lattice sites to matrix indices for a box; convenience for callers
/// that look entries up by coordinates.
pub fn site_index(lattice: &LatticeBox) -> HashMap<Vec<i64>, usize> {
    lattice
        .sites()
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect()
}
