//! CSV curve files: one curve per row, `T` comma-separated values, with an
//! optional first row `t:,x_1,...,x_T` carrying the grid abscissae.
//!
//! Abscissae on any increasing range are mapped affinely onto `[0, 1]`.
//! Non-equispaced abscissae are linearly resampled onto the equispaced grid
//! of the same size.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fcurve::{interp_linear, FunctionalSample, Grid};
use crate::lrcov::{csv_err, format_float};

pub const GRID_TOKEN: &str = "t:";

/// Relative spacing tolerance under which header abscissae count as
/// equispaced (written abscissae are rounded decimals).
const EQUISPACED_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CurveFile {
    pub sample: FunctionalSample,
    /// Whether the file carried a `t:` grid row.
    pub has_grid: bool,
    /// Whether irregular abscissae forced a resample.
    pub resampled: bool,
}

fn parse_field(s: &str, line: u64, col: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("field {} is not a number: {s:?}", col + 1),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("field {} is not finite", col + 1),
        });
    }
    Ok(v)
}

fn parse_header(record: &csv::StringRecord, line: u64) -> Result<Vec<f64>> {
    let first = record.get(0).unwrap_or("").trim();
    let rest = &first[GRID_TOKEN.len()..];
    let mut xs = Vec::with_capacity(record.len());
    if !rest.trim().is_empty() {
        xs.push(parse_field(rest, line, 0)?);
    }
    for (i, f) in record.iter().enumerate().skip(1) {
        xs.push(parse_field(f, line, i)?);
    }
    if xs.len() < 2 {
        return Err(Error::Parse {
            line,
            msg: "grid row needs at least 2 abscissae".into(),
        });
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parse {
            line,
            msg: "grid abscissae must be strictly increasing".into(),
        });
    }
    Ok(xs)
}

/// Reads a curve CSV.
pub fn read_sample<R: Read>(input: R) -> Result<CurveFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut abscissae: Option<Vec<f64>> = None;
    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Parse {
                    line,
                    msg: format!("{other:?}"),
                },
            }
        })?;
        let line = rec.position().map_or(idx as u64 + 1, |p| p.line());
        if idx == 0 && rec.get(0).is_some_and(|f| f.trim().starts_with(GRID_TOKEN)) {
            let xs = parse_header(&rec, line)?;
            width = Some(xs.len());
            abscissae = Some(xs);
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                line,
                msg: format!("row {line} has {} fields, expected {w}", rec.len()),
            });
        }
        for (i, f) in rec.iter().enumerate() {
            values.push(parse_field(f, line, i)?);
        }
        rows += 1;
    }
    let width = width.ok_or(Error::Parse {
        line: 0,
        msg: "no curves in file".into(),
    })?;
    if rows == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "no curves in file".into(),
        });
    }
    let grid = Grid::new(width).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let mut data = Array2::from_shape_vec((rows, width), values).expect("row lengths checked");

    let mut resampled = false;
    if let Some(xs) = &abscissae {
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        let unit: Vec<f64> = xs.iter().map(|x| (x - lo) / (hi - lo)).collect();
        let h = grid.spacing();
        let equispaced = unit
            .iter()
            .enumerate()
            .all(|(i, u)| (u - grid.point(i)).abs() <= EQUISPACED_TOL * h);
        if !equispaced {
            let target = grid.points();
            for mut row in data.rows_mut() {
                let ys = row.to_vec();
                for (v, x) in row.iter_mut().zip(target.iter()) {
                    *v = interp_linear(&unit, &ys, *x);
                }
            }
            resampled = true;
        }
    }
    Ok(CurveFile {
        sample: FunctionalSample::new(grid, data)?,
        has_grid: abscissae.is_some(),
        resampled,
    })
}

/// Writes a sample, optionally preceded by the `t:` grid row.
pub fn write_sample<W: Write>(s: &FunctionalSample, out: W, with_grid: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    if with_grid {
        let points = s.grid().points();
        let header = std::iter::once(GRID_TOKEN.to_string()).chain(points.iter().map(|x| format_float(*x)));
        w.write_record(header).map_err(csv_err)?;
    }
    for row in s.data().rows() {
        w.write_record(row.iter().map(|v| format_float(*v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless numeric matrix (e.g. a surface CSV).
pub fn read_matrix<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                line,
                msg: format!("row {line} has {} fields, expected {w}", rec.len()),
            });
        }
        for (i, f) in rec.iter().enumerate() {
            values.push(parse_field(f, line, i)?);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, width.unwrap_or(0)), values).expect("row lengths checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcurve::make_grid;
    use crate::simgen::{bridge_sample, RngSeed};
    use approx::assert_abs_diff_eq;

    #[test]
    fn plain_rows() {
        let f = read_sample("1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert!(!f.has_grid);
        assert_eq!(f.sample.len(), 2);
        assert_eq!(f.sample.grid(), make_grid(3).unwrap());
        assert_eq!(f.sample.data()[[1, 2]], 6.0);
    }

    #[test]
    fn grid_header_variants() {
        let a = read_sample("t:,0,0.5,1\n1,2,3\n".as_bytes()).unwrap();
        let b = read_sample("t:0,0.5,1\n1,2,3\n".as_bytes()).unwrap();
        assert!(a.has_grid && b.has_grid);
        assert_eq!(a.sample, b.sample);
        assert!(!a.resampled);

        // Month indices 1..=5 map onto [0, 1] without resampling.
        let c = read_sample("t:,1,2,3,4,5\n0,1,2,3,4\n".as_bytes()).unwrap();
        assert!(!c.resampled);
        assert_eq!(c.sample.grid().len(), 5);
    }

    #[test]
    fn irregular_grid_is_resampled() {
        let f = read_sample("t:,0,0.25,1\n0,0.5,2\n".as_bytes()).unwrap();
        assert!(f.resampled);
        // Piecewise-linear through (0,0), (0.25,0.5), (1,2): value at 0.5 is 1.
        assert_abs_diff_eq!(f.sample.data()[[0, 1]], 1.0, epsilon = 1e-12);
        assert_eq!(f.sample.data()[[0, 0]], 0.0);
        assert_eq!(f.sample.data()[[0, 2]], 2.0);
    }

    #[test]
    fn errors_name_the_line() {
        let err = read_sample("1,2,3\n4,5\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("row 2"));
            }
            other => panic!("{other:?}"),
        }
        let err = read_sample("1,2,3\n4,x,6\n7,8,9\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(matches!(read_sample("".as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(read_sample("t:,0,1\n".as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(read_sample("t:,0,1\n1,2,3\n".as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_sample("t:,0,0,1\n1,2,3\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_sample("5\n6\n".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        let g = make_grid(37).unwrap();
        let s = bridge_sample(g, 5, RngSeed::new(2, 3)).unwrap();
        for with_grid in [false, true] {
            let mut buf = Vec::new();
            write_sample(&s, &mut buf, with_grid).unwrap();
            let back = read_sample(buf.as_slice()).unwrap();
            assert_eq!(back.sample, s);
            assert_eq!(back.has_grid, with_grid);
            assert!(!back.resampled);
        }
    }

    #[test]
    fn matrix_reader() {
        let m = read_matrix("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(m, ndarray::array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(read_matrix("1,2\n3\n".as_bytes()).is_err());
    }
}
