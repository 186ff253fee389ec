//! Predict records as JSON lines.

use std::io::{self, BufRead, Write};

use ppgas_core::inference::SweepOutput;
use ppgas_core::values::Value;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

/// One predicted value of one particle in one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRecord {
    pub sweep: usize,
    pub particle: usize,
    /// Normalized within the sweep.
    pub weight: f64,
    /// Source text of the predicted expression.
    pub label: String,
    pub value: Json,
}

fn real(x: f64) -> Json {
    if x.is_finite() {
        json!(x)
    } else {
        // JSON has no non-finite numbers.
        Json::String(format!("{x}"))
    }
}

/// Scalars map to JSON scalars; lists, vectors and matrices to nested arrays.
/// Procedures and distributions are written as their printed form.
pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Bool(b) => json!(b),
        Value::Int(i) => json!(i),
        Value::Float(x) => real(*x),
        Value::Str(s) => json!(s.as_ref()),
        Value::Symbol(s) => json!(s.as_ref()),
        Value::List(items) => Json::Array(items.iter().map(value_to_json).collect()),
        Value::Vector(xs) => Json::Array(xs.iter().copied().map(real).collect()),
        Value::Matrix(m) => Json::Array(
            (0..m.rows())
                .map(|i| Json::Array(m.row(i).iter().copied().map(real).collect()))
                .collect(),
        ),
        other => Json::String(other.to_string()),
    }
}

/// Records of one sweep, in particle then program order.
pub fn sweep_records(sweep: &SweepOutput) -> Vec<PredictRecord> {
    sweep
        .particles
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            p.predicts.iter().map(move |out| PredictRecord {
                sweep: sweep.sweep,
                particle: i,
                weight: p.weight,
                label: out.label.to_string(),
                value: value_to_json(&out.value),
            })
        })
        .collect()
}

pub fn write_records<'a>(mut w: impl Write, records: impl IntoIterator<Item = &'a PredictRecord>) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses records, skipping blank lines.
pub fn read_records(r: impl BufRead) -> io::Result<Vec<PredictRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ppgas_core::values::Matrix;
    use std::rc::Rc;

    #[test]
    fn nested_values_become_arrays() {
        assert_eq!(value_to_json(&Value::Int(3)), json!(3));
        assert_eq!(value_to_json(&Value::Vector(Rc::from(vec![1.0, 2.5]))), json!([1.0, 2.5]));
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(value_to_json(&Value::Matrix(Rc::new(m))), json!([[1.0, 2.0], [3.0, 4.0]]));
        assert_eq!(value_to_json(&Value::Float(f64::INFINITY)), json!("inf"));
    }

    #[test]
    fn records_round_trip() {
        let records = vec![
            PredictRecord {
                sweep: 0,
                particle: 1,
                weight: 0.1 + 0.2,
                label: "(x 1)".into(),
                value: json!([0.123_456_789_012_345_68, -1e-300]),
            },
            PredictRecord {
                sweep: 2,
                particle: 0,
                weight: 1.0,
                label: "omega".into(),
                value: json!(7),
            },
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        assert_eq!(read_records(&buf[..]).unwrap(), records);
    }
}
