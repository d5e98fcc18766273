//! Plain-text dataset ingestion.
//!
//! Every format is comma-separated numbers, one observation per line; lines
//! starting with `#` and blank lines are skipped.

use std::path::Path;

use clap::ValueEnum;
use uniqtest_core::estimators::CurvePoint;
use uniqtest_core::geometry::{Angle, SpherePoint};

use crate::CliError;

/// Sphere rows may deviate from unit norm by at most this much before
/// they are rejected rather than renormalized.
pub const SPHERE_NORM_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    /// One angle per line.
    Circle,
    /// `p + 1` coordinates of a unit vector per line.
    Sphere,
    /// Two columns: time and length.
    Curve,
    /// `q` feature columns.
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum AngleUnit {
    #[default]
    Rad,
    Deg,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Circle(Vec<Angle>),
    Sphere(Vec<SpherePoint>),
    Curve(Vec<CurvePoint>),
    Euclidean(Vec<Vec<f64>>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Circle(v) => v.len(),
            Dataset::Sphere(v) => v.len(),
            Dataset::Curve(v) => v.len(),
            Dataset::Euclidean(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A numeric row and the 1-based line it came from.
struct Row {
    line: u64,
    values: Vec<f64>,
}

fn read_rows(text: &str, source: &str) -> Result<Vec<Row>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(source, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let values = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::data(source, format!("line {line}: `{field}` is not a finite number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(Row { line, values });
    }
    if rows.is_empty() {
        return Err(CliError::data(source, "no observations"));
    }
    Ok(rows)
}

fn expect_columns(rows: &[Row], want: usize, source: &str) -> Result<(), CliError> {
    match rows.iter().find(|r| r.values.len() != want) {
        Some(r) => Err(CliError::data(
            source,
            format!("line {}: expected {want} columns, found {}", r.line, r.values.len()),
        )),
        None => Ok(()),
    }
}

/// Parses `text` as a dataset of the given kind; `source` names it in errors.
pub fn parse(text: &str, kind: DataKind, unit: AngleUnit, source: &str) -> Result<Dataset, CliError> {
    let rows = read_rows(text, source)?;
    Ok(match kind {
        DataKind::Circle => {
            expect_columns(&rows, 1, source)?;
            Dataset::Circle(
                rows.iter()
                    .map(|r| match unit {
                        AngleUnit::Rad => Angle::new(r.values[0]),
                        AngleUnit::Deg => Angle::from_degrees(r.values[0]),
                    })
                    .collect(),
            )
        }
        DataKind::Sphere => {
            let dim = rows[0].values.len();
            if dim < 2 {
                return Err(CliError::data(source, "sphere rows need at least 2 coordinates"));
            }
            expect_columns(&rows, dim, source)?;
            let mut pts = Vec::with_capacity(rows.len());
            for r in &rows {
                let norm = r.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > SPHERE_NORM_TOLERANCE {
                    return Err(CliError::data(
                        source,
                        format!("line {}: norm {norm} is not within {SPHERE_NORM_TOLERANCE} of 1", r.line),
                    ));
                }
                let p = SpherePoint::new(r.values.clone())
                    .map_err(|e| CliError::data(source, format!("line {}: {e}", r.line)))?;
                pts.push(p);
            }
            Dataset::Sphere(pts)
        }
        DataKind::Curve => {
            expect_columns(&rows, 2, source)?;
            Dataset::Curve(
                rows.iter()
                    .map(|r| CurvePoint {
                        t: r.values[0],
                        length: r.values[1],
                    })
                    .collect(),
            )
        }
        DataKind::Euclidean => {
            let q = rows[0].values.len();
            expect_columns(&rows, q, source)?;
            Dataset::Euclidean(rows.into_iter().map(|r| r.values).collect())
        }
    })
}

pub fn load(path: &Path, kind: DataKind, unit: AngleUnit) -> Result<Dataset, CliError> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(&source, e.to_string()))?;
    parse(&text, kind, unit, &source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degrees_and_comments() {
        let ds = parse("# headings\n\n90\n  180 \n", DataKind::Circle, AngleUnit::Deg, "t").unwrap();
        let Dataset::Circle(a) = ds else { panic!() };
        assert_eq!(a.len(), 2);
        assert!((a[0].value() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn sphere_rows_are_renormalized_within_tolerance() {
        let ds = parse("1.005,0,0\n0,0.998,0\n", DataKind::Sphere, AngleUnit::Rad, "s").unwrap();
        let Dataset::Sphere(p) = ds else { panic!() };
        assert_eq!(p[0].coords(), &[1.0, 0.0, 0.0]);
        let err = parse("1.02,0,0\n", DataKind::Sphere, AngleUnit::Rad, "s").unwrap_err();
        assert!(err.to_string().contains("norm"), "{err}");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = parse("1,2\n3\n", DataKind::Euclidean, AngleUnit::Rad, "e").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn non_numbers_are_rejected() {
        assert!(parse("1,x\n", DataKind::Curve, AngleUnit::Rad, "c").is_err());
        assert!(parse("nan\n", DataKind::Circle, AngleUnit::Rad, "c").is_err());
        assert!(parse("# only a comment\n", DataKind::Circle, AngleUnit::Rad, "c").is_err());
    }
}
