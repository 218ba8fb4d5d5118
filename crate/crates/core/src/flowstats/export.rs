use super::schema::FeatureSchema;
use super::{FeatureVector, FlowError};
use crate::activity::{Activity, ActivitySet};

/// Integers print exactly; other reals with 17 significant digits.
pub fn format_real(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}

/// Header row of schema names then the five label columns, one row per
/// vector.
pub fn export_features(vectors: &[FeatureVector], schema: &FeatureSchema) -> Result<String, FlowError> {
    let mut out = String::new();
    let header: Vec<&str> = schema
        .names
        .iter()
        .map(String::as_str)
        .chain(Activity::ALL.iter().map(|a| a.column()))
        .collect();
    out.push_str(&csv_line(header.iter().copied()));
    for (row, v) in vectors.iter().enumerate() {
        if v.values.len() != schema.len() {
            return Err(FlowError::SchemaMismatch {
                row,
                expected: schema.len(),
                found: v.values.len(),
            });
        }
        let cells = v
            .values
            .iter()
            .map(|x| format_real(*x))
            .chain(v.labels.0.iter().map(|b| if *b { "1".into() } else { "0".into() }));
        out.push_str(&csv_line(cells));
    }
    Ok(out)
}

fn csv_line<S: AsRef<str>>(cells: impl Iterator<Item = S>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let cells: Vec<S> = cells.collect();
    w.write_record(cells.iter().map(|c| c.as_ref())).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 input")
}

/// A feature CSV read back: schema, rows and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<ActivitySet>,
}

impl FeatureTable {
    pub fn from_csv(text: &str) -> Result<Self, FlowError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let parse_err = |line: u64, reason: String| FlowError::Parse { line, reason };
        let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let cols: Vec<String> = header.iter().map(str::to_string).collect();
        if cols.len() < 5 {
            return Err(parse_err(1, "fewer than five columns".into()));
        }
        let n_attr = cols.len() - 5;
        let tail: Vec<&str> = cols[n_attr..].iter().map(String::as_str).collect();
        let expected: Vec<&str> = Activity::ALL.iter().map(|a| a.column()).collect();
        if tail != expected {
            return Err(parse_err(1, format!("last five columns must be {}", expected.join(","))));
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut values = Vec::with_capacity(n_attr);
            for field in rec.iter().take(n_attr) {
                values.push(field.parse::<f64>().map_err(|_| parse_err(line, format!("not a number: {field:?}")))?);
            }
            let mut set = ActivitySet::EMPTY;
            for (a, field) in Activity::ALL.iter().zip(rec.iter().skip(n_attr)) {
                match field {
                    "1" => set.insert(*a),
                    "0" => {}
                    other => return Err(parse_err(line, format!("label must be 0 or 1, got {other:?}"))),
                }
            }
            rows.push(values);
            labels.push(set);
        }
        Ok(FeatureTable {
            schema: FeatureSchema {
                version: super::schema::SCHEMA_VERSION,
                names: cols[..n_attr].to_vec(),
            },
            rows,
            labels,
        })
    }
}
