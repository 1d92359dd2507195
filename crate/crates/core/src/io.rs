//! CSV interchange for matrices, datasets and band data.
//!
//! Numbers are written in scientific notation with 17 significant digits,
//! which round-trips every `f64`. Exact zeros are written as `0`.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::maxent::BandSpec;

/// Full-precision scientific rendering, `0` for exact zeros.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{other:?}")),
        }
    } else {
        Error::Parse(e.to_string())
    }
}

fn parse_field(field: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse {what} `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: {what} is not finite")));
    }
    Ok(v)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Writes one matrix row per line, no header.
pub fn write_matrix_csv<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| format_float(v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless rectangular numeric CSV.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = line_of(&rec);
        let row = rec.iter().map(|f| parse_field(f, line, "entry")).collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Parse("matrix CSV is empty".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
}

/// Reads a dataset with header `t,u,y`. Rows must be ordered by increasing `t`.
/// The noise variance is left unknown.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    let (ct, cu, cy) = (
        column_index(&headers, "t")?,
        column_index(&headers, "u")?,
        column_index(&headers, "y")?,
    );
    let (mut u, mut y) = (Vec::new(), Vec::new());
    let mut last_t = f64::NEG_INFINITY;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = line_of(&rec);
        let get = |c: usize, what: &str| {
            rec.get(c)
                .ok_or_else(|| Error::Parse(format!("line {line}: missing {what}")))
                .and_then(|f| parse_field(f, line, what))
        };
        let t = get(ct, "t")?;
        if t <= last_t {
            return Err(Error::Parse(format!("line {line}: t must be increasing")));
        }
        last_t = t;
        u.push(get(cu, "u")?);
        y.push(get(cy, "y")?);
    }
    Dataset::new(u, y, None)
}

/// Writes a dataset with header `t,u,y`, `t` starting at 1.
pub fn write_dataset_csv<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "u", "y"]).map_err(csv_err)?;
    for (i, (u, y)) in data.u().iter().zip(data.y()).enumerate() {
        w.write_record([(i + 1).to_string(), format_float(*u), format_float(*y)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads band data as `t,s,value` triples (1-based, header required).
///
/// Each unordered pair may appear once or in both orders with equal values.
/// The dimension is the largest index seen unless given; the bandwidth is
/// the largest `|t-s|`.
pub fn read_band_csv<R: Read>(input: R, dim: Option<usize>) -> Result<BandSpec> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    let (ct, cs, cv) = (
        column_index(&headers, "t")?,
        column_index(&headers, "s")?,
        column_index(&headers, "value")?,
    );
    let mut triples = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = line_of(&rec);
        let index = |c: usize, what: &str| -> Result<usize> {
            let f = rec.get(c).ok_or_else(|| Error::Parse(format!("line {line}: missing {what}")))?;
            match f.trim().parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i),
                _ => Err(Error::Parse(format!("line {line}: {what} must be a positive integer"))),
            }
        };
        let t = index(ct, "t")?;
        let s = index(cs, "s")?;
        let v = rec
            .get(cv)
            .ok_or_else(|| Error::Parse(format!("line {line}: missing value")))
            .and_then(|f| parse_field(f, line, "value"))?;
        triples.push((t, s, v));
    }
    let max_index = triples.iter().map(|&(t, s, _)| t.max(s)).max().unwrap_or(0);
    let dim = dim.unwrap_or(max_index);
    if dim == 0 || max_index > dim {
        return Err(Error::Dimension(format!(
            "band indices up to {max_index} do not fit dimension {dim}"
        )));
    }
    let bandwidth = triples.iter().map(|&(t, s, _)| t.abs_diff(s)).max().unwrap_or(0);
    let mut bands: Vec<Vec<Option<f64>>> = (0..=bandwidth).map(|k| vec![None; dim - k]).collect();
    for (t, s, v) in triples {
        let (lo, k) = (t.min(s) - 1, t.abs_diff(s));
        match bands[k][lo] {
            Some(prev) if prev != v => {
                return Err(Error::Parse(format!("conflicting values for entry ({t}, {s})")))
            }
            _ => bands[k][lo] = Some(v),
        }
    }
    let bands = bands
        .into_iter()
        .enumerate()
        .map(|(k, band)| {
            band.into_iter()
                .enumerate()
                .map(|(j, v)| {
                    v.ok_or_else(|| {
                        Error::Parse(format!("missing band entry ({}, {})", j + k + 1, j + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    BandSpec::new(bands)
}

/// Writes band data as `t,s,value` triples with `t >= s`.
pub fn write_band_csv<W: Write>(out: W, spec: &BandSpec) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "value"]).map_err(csv_err)?;
    for k in 0..=spec.bandwidth() {
        for (j, &v) in spec.band(k).iter().enumerate() {
            w.write_record([(j + k + 1).to_string(), (j + 1).to_string(), format_float(v)])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
