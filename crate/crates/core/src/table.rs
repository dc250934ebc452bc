//! CSV tables for bound, label and oracle output.
//!
//! Floats use the shortest representation that parses back to the same
//! value, so reading a table and writing it again reproduces the bytes.

use std::io::{Read, Write};

use crate::bounds::GridEntry;
use crate::error::{Error, Result};
use crate::oracle::ValueGrid;
use crate::reachability::ReachTable;

/// One row of a bound table. `flags` is a `|`-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub point: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub k_upper: Option<usize>,
    pub argmax_lower: Option<(usize, usize)>,
    pub flags: String,
}

pub fn bound_rows(entries: &[GridEntry]) -> Vec<BoundRow> {
    entries
        .iter()
        .map(|e| match &e.result {
            Ok(iv) => {
                let mut flags = Vec::new();
                if iv.snapped {
                    flags.push("snapped");
                }
                if !iv.qp_converged {
                    flags.push("qp_unconverged");
                }
                BoundRow {
                    point: e.point.iter().copied().collect(),
                    lower: iv.lower,
                    upper: iv.upper,
                    k_upper: Some(iv.k_upper),
                    argmax_lower: Some(iv.argmax_lower),
                    flags: flags.join("|"),
                }
            }
            Err(_) => BoundRow {
                point: e.point.iter().copied().collect(),
                lower: f64::NAN,
                upper: f64::NAN,
                k_upper: None,
                argmax_lower: None,
                flags: "error".into(),
            },
        })
        .collect()
}

/// Rows for a value grid, with the value in both bound columns.
pub fn value_grid_rows(grid: &ValueGrid) -> Vec<BoundRow> {
    (0..grid.len())
        .map(|k| BoundRow {
            point: grid.node_point(k).iter().copied().collect(),
            lower: grid.values[k],
            upper: grid.values[k],
            k_upper: None,
            argmax_lower: None,
            flags: "oracle".into(),
        })
        .collect()
}

fn coord_header(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn write_bounds<W: Write>(w: W, n: usize, rows: &[BoundRow]) -> Result<()> {
    let mut out = writer(w);
    let mut header = coord_header(n);
    header.extend(["lower", "upper", "k_upper", "argmax_lower", "flags"].map(String::from));
    out.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.point.iter().map(|v| v.to_string()).collect();
        rec.push(r.lower.to_string());
        rec.push(r.upper.to_string());
        rec.push(r.k_upper.map(|k| k.to_string()).unwrap_or_default());
        rec.push(r.argmax_lower.map(|(k, i)| format!("{k}:{i}")).unwrap_or_default());
        rec.push(r.flags.clone());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Invalid(format!("`{s}` is not a number")))
}

pub fn read_bounds<R: Read>(r: R) -> Result<(usize, Vec<BoundRow>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let n = header.len().checked_sub(5).filter(|&n| n > 0).ok_or_else(|| Error::Invalid("bound table header is too short".into()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let point = (0..n).map(|i| parse_f64(&rec[i])).collect::<Result<Vec<_>>>()?;
        let k_upper = match &rec[n + 2] {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Invalid(format!("bad level index `{s}`")))?),
        };
        let argmax_lower = match &rec[n + 3] {
            "" => None,
            s => {
                let (k, i) = s.split_once(':').ok_or_else(|| Error::Invalid(format!("bad tuple `{s}`")))?;
                let bad = |_| Error::Invalid(format!("bad tuple `{s}`"));
                Some((k.parse().map_err(bad)?, i.parse().map_err(bad)?))
            }
        };
        rows.push(BoundRow {
            point,
            lower: parse_f64(&rec[n])?,
            upper: parse_f64(&rec[n + 1])?,
            k_upper,
            argmax_lower,
            flags: rec[n + 4].to_string(),
        });
    }
    Ok((n, rows))
}

pub fn write_labels<W: Write>(w: W, table: &ReachTable) -> Result<()> {
    let mut out = writer(w);
    let n = table.points.first().map(|p| p.len()).unwrap_or(0);
    let mut header = coord_header(n);
    header.push("label".into());
    out.write_record(&header)?;
    for (p, l) in table.points.iter().zip(&table.labels) {
        let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        rec.push(l.code().to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One row of an oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub point: Vec<f64>,
    pub lower: f64,
    pub oracle: f64,
    pub upper: f64,
    pub eps: f64,
    pub flags: String,
}

pub fn write_oracle<W: Write>(w: W, n: usize, rows: &[OracleRow]) -> Result<()> {
    let mut out = writer(w);
    let mut header = coord_header(n);
    header.extend(["lower", "oracle", "upper", "eps", "flags"].map(String::from));
    out.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.point.iter().map(|v| v.to_string()).collect();
        for v in [r.lower, r.oracle, r.upper, r.eps] {
            rec.push(v.to_string());
        }
        rec.push(r.flags.clone());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
