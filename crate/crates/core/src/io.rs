//! CSV input for user data and plot-ready CSV tables for results.
//!
//! Floats are written with 17 significant digits so every value round-trips.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::calibration::MinPenPath;
use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, PointSet};

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// `{:.16e}`, except for non-finite values.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.headers.len(), "row width does not match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Float values of a column; integer cells are converted, others skipped.
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let Some(j) = self.column(name) else { return Vec::new() };
        self.rows
            .iter()
            .filter_map(|r| match &r[j] {
                Cell::Float(v) => Some(*v),
                Cell::Int(v) => Some(*v as f64),
                _ => None,
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.headers).map_err(csv_write_error)?;
        for row in &self.rows {
            out.write_record(row.iter().map(Cell::render)).map_err(csv_write_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(File::create(path)?)
    }
}

fn csv_write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("csv write failed: {other:?}")),
    }
}

fn csv_read_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            Error::Csv { line, message: format!("expected {expected_len} fields, found {len}") }
        }
        csv::ErrorKind::Utf8 { err, .. } => Error::Csv { line, message: format!("invalid utf-8: {err}") },
        other => Error::Csv { line, message: format!("{other:?}") },
    }
}

fn parse_field(field: &str, line: u64, column: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
        line,
        message: format!("column {}: cannot parse {field:?} as a number", column + 1),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv { line, message: format!("column {}: non-finite value {field:?}", column + 1) });
    }
    Ok(v)
}

/// A regression dataset read from CSV.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub response_name: String,
    pub points: PointSet,
    pub y: Vec<f64>,
}

/// Reads `d` feature columns followed by one response column, with a header
/// row. A first row made only of numbers is reported as a missing header.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_read_error)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Csv { line: 1, message: "empty input, expected a header row".into() });
    }
    if headers.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::Csv { line: 1, message: "missing header row (first row is numeric)".into() });
    }
    let width = headers.len();
    if width < 2 {
        return Err(Error::Csv { line: 1, message: "need at least one feature column and a response column".into() });
    }
    let d = width - 1;
    let mut features = Vec::new();
    let mut y = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_read_error)?;
        let line = record.position().map_or(0, |p| p.line());
        for (j, field) in record.iter().enumerate() {
            let v = parse_field(field, line, j)?;
            if j < d {
                features.push(v);
            } else {
                y.push(v);
            }
        }
    }
    let n = y.len();
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 observations, found {n}")));
    }
    Ok(Dataset {
        feature_names: headers.iter().take(d).map(str::to_string).collect(),
        response_name: headers[d].to_string(),
        points: PointSet::new(features, n, d)?,
        y,
    })
}

pub fn read_dataset_path(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}

/// Reads an `n × n` kernel matrix, without a header row.
pub fn read_kernel<R: Read>(reader: R) -> Result<KernelMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_read_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record.iter().enumerate().map(|(j, f)| parse_field(f, line, j)).collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Csv { line: 1, message: "empty kernel file".into() });
    }
    if rows[0].len() != n {
        return Err(Error::Csv {
            line: 1,
            message: format!("kernel must be square: {n} rows but {} columns", rows[0].len()),
        });
    }
    KernelMatrix::from_rows(&rows)
}

pub fn read_kernel_path(path: impl AsRef<Path>) -> Result<KernelMatrix> {
    read_kernel(File::open(path)?)
}

/// The minimal-penalty path; the `log10_C_over_sigma2` column is present
/// only when `sigma2` is known.
pub fn path_table(path: &MinPenPath, sigma2: Option<f64>) -> Table {
    let mut t = match sigma2 {
        Some(_) => Table::new(["C", "log10_C_over_sigma2", "lambda_index", "df"]),
        None => Table::new(["C", "lambda_index", "df"]),
    };
    for p in &path.points {
        let mut row = vec![Cell::Float(p.c)];
        if let Some(s2) = sigma2 {
            row.push(Cell::Float((p.c / s2).log10()));
        }
        row.push(p.lambda_id.into());
        row.push(p.df.into());
        t.push(row);
    }
    t
}

/// Per-observation fitted values next to the response.
pub fn fitted_table(y: &[f64], fitted: &[f64]) -> Table {
    let mut t = Table::new(["index", "y", "fitted"]);
    for (i, (yi, fi)) in y.iter().zip(fitted).enumerate() {
        t.push(vec![i.into(), (*yi).into(), (*fi).into()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::PathPoint;

    fn data_csv(rows: usize) -> String {
        let mut s = String::from("x1,x2,y\n");
        for i in 0..rows {
            s += &format!("{},{},{}\n", i as f64 * 0.5, -(i as f64), (i * i) as f64);
        }
        s
    }

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn reads_a_dataset() {
        let ds = read_dataset(data_csv(12).as_bytes()).unwrap();
        assert_eq!(ds.points.len(), 12);
        assert_eq!(ds.points.dim(), 2);
        assert_eq!(ds.feature_names, ["x1", "x2"]);
        assert_eq!(ds.response_name, "y");
        assert_eq!(ds.points.point(3), &[1.5, -3.0]);
        assert_eq!(ds.y[4], 16.0);
    }

    #[test]
    fn dataset_errors_carry_line_numbers() {
        let mut s = data_csv(12);
        s = s.replace("2,-4,16", "2,abc,16");
        match read_dataset(s.as_bytes()) {
            Err(Error::Csv { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("column 2"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let short = data_csv(12).replace("1.5,-3,9\n", "1.5,-3\n");
        assert!(matches!(read_dataset(short.as_bytes()), Err(Error::Csv { line: 5, .. })));
        let no_header = data_csv(12).replacen("x1,x2,y\n", "", 1);
        assert!(matches!(read_dataset(no_header.as_bytes()), Err(Error::Csv { line: 1, .. })));
        assert!(matches!(read_dataset(data_csv(5).as_bytes()), Err(Error::InvalidInput(_))));
        assert!(read_dataset("".as_bytes()).is_err());
    }

    #[test]
    fn reads_a_kernel() {
        let k = read_kernel("2,1\n1,3\n".as_bytes()).unwrap();
        assert_eq!(k.n(), 2);
        assert_eq!(k.get(0, 1), 1.0);
        assert!(read_kernel("2,1\n".as_bytes()).is_err());
        assert!(read_kernel("2,1\n5,3\n".as_bytes()).is_err());
    }

    #[test]
    fn path_table_columns() {
        let path = MinPenPath {
            points: vec![PathPoint { c: 0.5, lambda_id: 0, df: 40.0 }, PathPoint { c: 2.0, lambda_id: 7, df: 3.0 }],
        };
        let t = path_table(&path, Some(1.0));
        assert_eq!(t.headers, ["C", "log10_C_over_sigma2", "lambda_index", "df"]);
        let csv = t.to_csv_string();
        assert!(csv.contains(",7,"));
        assert_eq!(t.floats("df"), [40.0, 3.0]);
        assert_eq!(path_table(&path, None).headers.len(), 3);
    }
}
