//! CSV and JSON readers and writers.
//!
//! Floats are written in their shortest round-trip form with `.` as the
//! decimal separator, so output is byte-stable across runs.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lattice::{PeierlsMatrix, Provenance};
use crate::scaling::EdgeSweep;
use crate::spectral::{EdgeResult, Method, Which};
use crate::{Error, Result, SCHEMA_VERSION};

/// Plain decimal in `[1e-4, 1e15)`, exponent form elsewhere.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// A CSV writer that takes pre-formatted fields.
pub struct CsvOut<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvOut<W> {
    pub fn new(w: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        inner.write_record(header).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletRow {
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

pub fn write_triplets_csv<W: Write>(matrix: &PeierlsMatrix, w: W) -> Result<()> {
    let mut out = CsvOut::new(w, &["row", "col", "re", "im"])?;
    for (i, j, v) in matrix.triplets() {
        out.row([i.to_string(), j.to_string(), fmt_f64(v.re), fmt_f64(v.im)])?;
    }
    out.finish()
}

pub fn read_triplets_csv<R: Read>(r: R) -> Result<Vec<TripletRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let row: TripletRow = rec.map_err(csv_err)?;
        if !row.re.is_finite() || !row.im.is_finite() {
            return Err(Error::NonFinite(format!(
                "triplet ({}, {})",
                row.row, row.col
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads triplets into a matrix. Without `n`, the size is one past the
/// largest index. Non-Hermitian input is rejected.
pub fn matrix_from_triplets_csv<R: Read>(
    r: R,
    n: Option<usize>,
    label: &str,
) -> Result<PeierlsMatrix> {
    let rows = read_triplets_csv(r)?;
    let n = match n {
        Some(n) => n,
        None => rows
            .iter()
            .map(|t| t.row.max(t.col).saturating_add(1))
            .max()
            .unwrap_or(0),
    };
    if n > 1 << 24 {
        return Err(Error::Parse(format!("matrix size {n} too large")));
    }
    let m = PeierlsMatrix::from_triplets(
        n,
        rows.iter()
            .map(|t| (t.row, t.col, Complex64::new(t.re, t.im))),
        Provenance::explicit(label),
    )?;
    let defect = m.hermiticity_defect();
    if defect > 1e-12 * m.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NonHermitian(format!(
            "triplet matrix defect {defect}"
        )));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub eps: f64,
    pub edge: f64,
    pub delta_edge: f64,
    pub residual: f64,
    pub flagged: bool,
}

/// The unperturbed edge is written first, as the `eps = 0` row.
pub fn write_sweep_csv<W: Write>(sweep: &EdgeSweep, w: W) -> Result<()> {
    let mut out = CsvOut::new(w, &["eps", "edge", "delta_edge", "residual", "flagged"])?;
    out.row([
        "0".to_string(),
        fmt_f64(sweep.base),
        "0".into(),
        fmt_f64(sweep.base_residual),
        "false".into(),
    ])?;
    for i in 0..sweep.len() {
        out.row([
            fmt_f64(sweep.eps[i]),
            fmt_f64(sweep.edges[i]),
            fmt_f64(sweep.deltas[i]),
            fmt_f64(sweep.residuals[i]),
            sweep.flagged[i].to_string(),
        ])?;
    }
    out.finish()
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let row: SweepRow = rec.map_err(csv_err)?;
        if !row.eps.is_finite() || !row.delta_edge.is_finite() {
            return Err(Error::NonFinite("sweep row".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Rebuilds a sweep from CSV rows. The `eps = 0` row, if present, supplies
/// the base edge; the rest must be strictly increasing in `(0, 1/2]`.
pub fn sweep_from_rows(rows: &[SweepRow], which: Which) -> Result<EdgeSweep> {
    let base = EdgeResult {
        value: f64::NAN,
        which,
        residual: 0.0,
        matvecs: 0,
        method: Method::Iterative,
    };
    let mut sweep = EdgeSweep::from_edges(which, base, Vec::new(), 0.0, None, f64::NAN);
    for row in rows {
        if row.eps == 0.0 {
            sweep.base = row.edge;
            sweep.base_residual = row.residual;
            continue;
        }
        if !(row.eps > 0.0 && row.eps <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "eps {} outside (0, 1/2]",
                row.eps
            )));
        }
        if sweep.eps.last().is_some_and(|&last| row.eps <= last) {
            return Err(Error::InvalidParameter(
                "sweep eps must be strictly increasing".into(),
            ));
        }
        if !(row.delta_edge >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "negative delta_edge at eps {}",
                row.eps
            )));
        }
        sweep.eps.push(row.eps);
        sweep.edges.push(row.edge);
        sweep.deltas.push(row.delta_edge);
        sweep.residuals.push(row.residual);
        sweep.flagged.push(row.flagged);
    }
    Ok(sweep)
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with a leading `schema_version` field; `value` must serialize
/// to an object.
pub fn to_versioned_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body: value,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_versioned_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_versioned_json(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{bare_matrix, HoppingSymbol, LatticeBox};

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(0.125), "0.125");
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(1e-10), "1e-10");
        assert_eq!(fmt_f64(-3.0), "-3");
        for v in [1.0 / 3.0, 2e-300, 6.02e23, -0.1] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn triplet_roundtrip() {
        let m = bare_matrix(&HoppingSymbol::harper(2), &LatticeBox::new(2, 2)).unwrap();
        let mut buf = Vec::new();
        write_triplets_csv(&m, &mut buf).unwrap();
        let back = matrix_from_triplets_csv(buf.as_slice(), Some(m.dim()), "back").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn triplet_errors() {
        assert!(
            matrix_from_triplets_csv("row,col,re,im\n0,1,1,0\n".as_bytes(), None, "x").is_err()
        );
        assert!(
            matrix_from_triplets_csv("row,col,re,im\n0,x,1,0\n".as_bytes(), None, "x").is_err()
        );
        assert!(matrix_from_triplets_csv("row,col,re,im\n0,0,1\n".as_bytes(), None, "x").is_err());
        assert!(
            matrix_from_triplets_csv("row,col,re,im\n3,0,1,0\n".as_bytes(), Some(2), "x").is_err()
        );
        let ok =
            matrix_from_triplets_csv("row,col,re,im\n0,1,0,1\n1,0,0,-1\n".as_bytes(), None, "x")
                .unwrap();
        assert_eq!(ok.dim(), 2);
    }

    #[test]
    fn sweep_rows() {
        let text = "eps,edge,delta_edge,residual,flagged\n0,4,0,0,false\n0.125,3.75,0.25,0,false\n0.25,3.5,0.5,0,false\n";
        let rows = read_sweep_csv(text.as_bytes()).unwrap();
        let s = sweep_from_rows(&rows, Which::Sup).unwrap();
        assert_eq!(s.base, 4.0);
        assert_eq!(s.deltas, vec![0.25, 0.5]);
        let mut buf = Vec::new();
        write_sweep_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
        let bad = "eps,edge,delta_edge,residual,flagged\n0.25,0,0,0,false\n0.125,0,0,0,false\n";
        assert!(sweep_from_rows(&read_sweep_csv(bad.as_bytes()).unwrap(), Which::Sup).is_err());
    }

    #[test]
    fn versioned_json_leads_with_schema() {
        #[derive(Serialize)]
        struct R {
            x: f64,
        }
        let s = to_versioned_json(&R { x: 1.5 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["x"], 1.5);
    }
}
