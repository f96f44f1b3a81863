use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::{Error, Result};

fn expected_header(d: usize) -> Vec<String> {
    let mut h = vec!["s".to_string()];
    h.extend((0..d).map(|j| format!("x{j}")));
    h.push("a".into());
    h.push("y".into());
    h
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses a dataset with header `s,x0,...,x{d-1},a,y`. `origin` only labels
/// error messages.
pub fn read_dataset<R: Read>(reader: R, origin: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| parse_err(origin, 1, e.to_string()))?,
        None => return Err(parse_err(origin, 1, "empty file")),
    };
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 {
        return Err(parse_err(origin, 1, "header needs at least s,a,y"));
    }
    let d = cols.len() - 3;
    if cols != expected_header(d) {
        return Err(parse_err(
            origin,
            1,
            format!("header must be `{}`", expected_header(d).join(",")),
        ));
    }

    let mut s = Vec::new();
    let mut xs = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(origin, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 3 {
            return Err(parse_err(
                origin,
                line,
                format!("expected {} fields, got {}", d + 3, rec.len()),
            ));
        }
        let mut vals = Vec::with_capacity(d + 3);
        for (field, name) in rec.iter().zip(expected_header(d)) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(origin, line, format!("column {name}: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(origin, line, format!("column {name}: non-finite value")));
            }
            vals.push(v);
        }
        let group = vals[0];
        if group != 0.0 && group != 1.0 {
            return Err(parse_err(origin, line, format!("s must be 0 or 1, got {group}")));
        }
        s.push(group as u8);
        xs.extend_from_slice(&vals[1..=d]);
        a.push(vals[d + 1]);
        y.push(vals[d + 2]);
    }
    let n = s.len();
    let x = Array2::from_shape_vec((n, d), xs).expect("row-major covariates");
    Dataset::from_columns(s, x, a, y).map_err(|e| match e {
        Error::Contract(msg) => parse_err(origin, 0, msg),
        other => other,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_dataset(file, path)
}

/// Writes the CSV form; floats use the shortest exact representation.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(expected_header(dataset.d()))?;
    let x = dataset.x();
    for i in 0..dataset.len() {
        let mut row = Vec::with_capacity(dataset.d() + 3);
        row.push(dataset.s()[i].to_string());
        row.extend(x.row(i).iter().map(|v| v.to_string()));
        row.push(dataset.a()[i].to_string());
        row.push(dataset.y()[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = BufWriter::new(File::create(path.as_ref())?);
    write_dataset(dataset, file)
}
