//! ValueField as CSV: a header `t,x,V` (or `t,x1,…,xn,V`) and one record
//! per space-time node, time-major in ascending time, nodes in grid order.
//! Floats are written with 17 significant digits, so a write/read cycle is
//! lossless.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid, ValueField};

use super::fmt_f64;

fn header(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    if n == 1 {
        cols.push("x".into());
    } else {
        cols.extend((1..=n).map(|k| format!("x{k}")));
    }
    cols.push("V".into());
    cols
}

pub fn write_value_field_csv<W: Write>(field: &ValueField, mut out: W) -> Result<()> {
    let grid = field.grid();
    let n = grid.dim();
    let mut line = header(n).join(",");
    line.push('\n');
    out.write_all(line.as_bytes())?;
    let mut x = vec![0.0; n];
    for k in 0..=grid.steps() {
        let t = fmt_f64(grid.time(k));
        for (i, v) in field.slice(k).iter().enumerate() {
            grid.point_into(i, &mut x);
            line.clear();
            line.push_str(&t);
            for c in &x {
                line.push(',');
                line.push_str(&fmt_f64(*c));
            }
            line.push(',');
            line.push_str(&fmt_f64(*v));
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

pub fn value_field_to_csv_string(field: &ValueField) -> String {
    let mut buf = Vec::new();
    write_value_field_csv(field, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Distinct values of `coords` in ascending order.
fn distinct(mut coords: Vec<f64>) -> Vec<f64> {
    coords.sort_by(f64::total_cmp);
    coords.dedup_by(|a, b| close(*a, *b));
    coords
}

/// Reads a field written by [`write_value_field_csv`]. The grid is
/// recovered from the coordinates, and every record is checked against it.
pub fn read_value_field_csv<R: Read>(input: R) -> Result<ValueField> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let head: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if head.len() < 3 {
        return Err(Error::Parse(format!("expected columns t, x…, V; got {}", head.len())));
    }
    let n = head.len() - 2;
    if head != header(n) {
        return Err(Error::Parse(format!(
            "unexpected header {head:?}, expected {:?}",
            header(n)
        )));
    }
    let mut rows: Vec<f64> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != n + 2 {
            return Err(Error::Parse(format!(
                "record {} has {} fields, expected {}",
                r + 1,
                record.len(),
                n + 2
            )));
        }
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("record {}: `{field}` is not a number", r + 1)))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("record {}: non-finite value", r + 1)));
            }
            rows.push(v);
        }
    }
    let width = n + 2;
    let count = rows.len() / width;
    if count == 0 {
        return Err(Error::Parse("no records".into()));
    }
    let times = distinct(rows.chunks(width).map(|r| r[0]).collect());
    let first_time = rows[0];
    let first_slice: Vec<&[f64]> = rows.chunks(width).take_while(|r| close(r[0], first_time)).collect();
    let mut axes = Vec::with_capacity(n);
    for k in 0..n {
        let coords = distinct(first_slice.iter().map(|r| r[1 + k]).collect());
        axes.push(Axis::new(coords[0], coords[coords.len() - 1], coords.len()));
    }
    if times.len() < 2 {
        return Err(Error::Parse("need at least two time levels".into()));
    }
    let grid = Grid::new(axes, times[0], times[times.len() - 1], times.len() - 1)?;
    let nodes = grid.len();
    if count != nodes * (grid.steps() + 1) {
        return Err(Error::Parse(format!(
            "{count} records do not fill a {} × {nodes} space-time grid",
            grid.steps() + 1
        )));
    }
    let mut x = vec![0.0; n];
    let mut values = Vec::with_capacity(count);
    for (j, row) in rows.chunks(width).enumerate() {
        let (k, i) = (j / nodes, j % nodes);
        grid.point_into(i, &mut x);
        if !close(row[0], grid.time(k)) || row[1..=n].iter().zip(&x).any(|(a, b)| !close(*a, *b)) {
            return Err(Error::Parse(format!(
                "record {} is at ({}, {:?}), expected ({}, {x:?}) on a uniform grid",
                j + 1,
                row[0],
                &row[1..=n],
                grid.time(k)
            )));
        }
        values.push(row[n + 1]);
    }
    ValueField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> ValueField {
        let axes = (0..n).map(|k| Axis::new(-1.0 - k as f64, 2.0, 4 + k)).collect();
        let grid = Grid::new(axes, 0.1, 0.7, 3).unwrap();
        let len = grid.len() * 4;
        let values = (0..len).map(|j| (j as f64 * 0.37).sin() / 3.0).collect();
        ValueField::new(grid, values).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for n in 1..=2 {
            let field = sample(n);
            let text = value_field_to_csv_string(&field);
            let back = read_value_field_csv(text.as_bytes()).unwrap();
            assert_eq!(back.grid().axes(), field.grid().axes());
            assert_eq!(back.values(), field.values());
            assert_eq!(value_field_to_csv_string(&back), text);
        }
    }

    #[test]
    fn header_layout() {
        let text = value_field_to_csv_string(&sample(1));
        assert!(text.starts_with("t,x,V\n"));
        let text = value_field_to_csv_string(&sample(2));
        assert!(text.starts_with("t,x1,x2,V\n"));
    }

    #[test]
    fn rejects_damaged_input() {
        let text = value_field_to_csv_string(&sample(1));
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        assert!(read_value_field_csv(lines.join("\n").as_bytes()).is_err());
        assert!(read_value_field_csv("t,x,V\n".as_bytes()).is_err());
        assert!(read_value_field_csv("t,x,V\n0,0,nan\n".as_bytes()).is_err());
        assert!(read_value_field_csv("a,b\n1,2\n".as_bytes()).is_err());
        let mut moved: Vec<String> = text.lines().map(str::to_string).collect();
        let fields: Vec<&str> = moved[2].split(',').collect();
        moved[2] = format!("{},{},{}", fields[0], "1.2500000000000000e0", fields[2]);
        assert!(read_value_field_csv(moved.join("\n").as_bytes()).is_err());
    }
}
