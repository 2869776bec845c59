//! Plain CSV input and output.
//!
//! Samples are comma-separated, one observation per row. A header is detected when the
//! first row does not parse as numbers. With `weighted`, the last column holds weights.
//! Time series may carry a leading ISO-8601 date column.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;

use crate::ballgrid::BallGrid;
use crate::contribution::ContributionCurve;
use crate::quantile::{QuantileMap, Sample};
use crate::{Error, Result};

/// Parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Array2<f64>,
}

fn is_numeric_row(rec: &csv::StringRecord) -> bool {
    rec.iter().all(|f| f.trim().parse::<f64>().is_ok())
}

fn records(text: &str) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    reader
        .records()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .filter(|r| !matches!(r, Ok(rec) if rec.iter().all(str::is_empty)))
        .collect()
}

/// Parses a numeric CSV table.
pub fn parse_table(text: &str) -> Result<Table> {
    let mut recs = records(text)?;
    let header = match recs.first() {
        Some(first) if !is_numeric_row(first) => {
            Some(recs.remove(0).iter().map(str::to_string).collect::<Vec<_>>())
        }
        _ => None,
    };
    if recs.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let width = recs[0].len();
    if let Some(h) = &header {
        if h.len() != width {
            return Err(Error::Parse(format!(
                "header has {} columns, data has {width}",
                h.len()
            )));
        }
    }
    let mut values = Vec::with_capacity(recs.len() * width);
    for (i, rec) in recs.iter().enumerate() {
        if rec.len() != width {
            return Err(Error::Parse(format!(
                "row {} has {} columns, expected {width}",
                i + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: '{field}' is not a number", i + 1)))?;
            values.push(v);
        }
    }
    let rows = Array2::from_shape_vec((recs.len(), width), values)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Table { header, rows })
}

/// Parses a sample; with `weighted` the last column becomes the weight vector.
pub fn parse_sample(text: &str, weighted: bool) -> Result<Sample> {
    let table = parse_table(text)?;
    if !weighted {
        return Sample::new(table.rows);
    }
    let cols = table.rows.ncols();
    if cols < 2 {
        return Err(Error::Parse("a weighted sample needs a data column and a weight column".into()));
    }
    let data = table.rows.slice(ndarray::s![.., ..cols - 1]).to_owned();
    let weights = table.rows.column(cols - 1).to_vec();
    Sample::with_weights(data, weights)
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    std::fs::File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

pub fn read_sample(path: &Path, weighted: bool) -> Result<Sample> {
    parse_sample(&read_text(path)?, weighted)
}

/// A time series with optional dates.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub dates: Option<Vec<NaiveDate>>,
    pub values: Array2<f64>,
}

impl Series {
    /// Row index of `date`.
    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.as_ref()?.iter().position(|d| *d == date)
    }
}

/// Parses a time series; a non-numeric first column is read as ISO-8601 dates.
pub fn parse_series(text: &str) -> Result<Series> {
    let mut recs = records(text)?;
    let dated = |rec: &csv::StringRecord| rec.get(0).is_some_and(|f| NaiveDate::parse_from_str(f, "%Y-%m-%d").is_ok());
    if recs.first().is_some_and(|r| !is_numeric_row(r) && !dated(r)) {
        recs.remove(0);
    }
    if recs.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let has_dates = dated(&recs[0]);
    let skip = usize::from(has_dates);
    let width = recs[0].len() - skip;
    if width == 0 {
        return Err(Error::Parse("no value columns".into()));
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in recs.iter().enumerate() {
        if rec.len() != width + skip {
            return Err(Error::Parse(format!("row {} has {} columns", i + 1, rec.len())));
        }
        if has_dates {
            let d = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|_| Error::Parse(format!("row {}: bad date '{}'", i + 1, &rec[0])))?;
            if dates.last().is_some_and(|p| *p >= d) {
                return Err(Error::Parse(format!("row {}: dates must increase", i + 1)));
            }
            dates.push(d);
        }
        for field in rec.iter().skip(skip) {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: '{field}' is not a number", i + 1)))?,
            );
        }
    }
    Ok(Series {
        dates: has_dates.then_some(dates),
        values: Array2::from_shape_vec((recs.len(), width), values)
            .map_err(|e| Error::Parse(e.to_string()))?,
    })
}

pub fn read_series(path: &Path) -> Result<Series> {
    parse_series(&read_text(path)?)
}

/// Shortest representation that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn write_rows(out: &mut String, header: &[String], rows: impl Iterator<Item = Vec<f64>>) {
    let _ = writeln!(out, "{}", header.join(","));
    for r in rows {
        let line: Vec<String> = r.into_iter().map(num).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
}

fn columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("{prefix}{k}")).collect()
}

/// Sample as CSV with header `x1..xd` and, when weighted, `weight`.
pub fn sample_csv(sample: &Sample) -> String {
    let mut header = columns("x", sample.dim());
    let w = sample.weights();
    if w.is_some() {
        header.push("weight".into());
    }
    let mut out = String::new();
    write_rows(
        &mut out,
        &header,
        sample.observations().rows().into_iter().enumerate().map(|(i, r)| {
            let mut v = r.to_vec();
            if let Some(w) = w {
                v.push(w[i]);
            }
            v
        }),
    );
    out
}

/// Raw matrix as CSV with the given column prefix.
pub fn matrix_csv(rows: &Array2<f64>, prefix: &str) -> String {
    let mut out = String::new();
    write_rows(
        &mut out,
        &columns(prefix, rows.ncols()),
        rows.rows().into_iter().map(|r| r.to_vec()),
    );
    out
}

/// Curve as `p,value,kind`.
pub fn curve_csv(curve: &ContributionCurve) -> String {
    let mut out = String::from("p,value,kind\n");
    for (p, v) in curve.levels.iter().zip(&curve.values) {
        let _ = writeln!(out, "{},{},{}", num(*p), num(*v), curve.kind);
    }
    out
}

/// Grid points and their images: `grid_x1..,image_x1..`.
pub fn map_csv(map: &QuantileMap) -> String {
    let d = map.grid.dim();
    let mut header = columns("grid_x", d);
    header.extend(columns("image_x", d));
    let mut out = String::new();
    write_rows(
        &mut out,
        &header,
        map.grid
            .points()
            .rows()
            .into_iter()
            .zip(map.images.rows())
            .map(|(g, y)| g.iter().chain(y.iter()).copied().collect()),
    );
    out
}

/// Grid points with their radius.
pub fn grid_csv(grid: &BallGrid) -> String {
    let mut header = columns("x", grid.dim());
    header.push("radius".into());
    let mut out = String::new();
    write_rows(
        &mut out,
        &header,
        grid.points().rows().into_iter().enumerate().map(|(i, r)| {
            let mut v = r.to_vec();
            v.push(grid.point_radius(i));
            v
        }),
    );
    out
}
