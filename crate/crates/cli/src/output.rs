//! Tables and summaries, written the same way on every run.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::CliResult;

/// Result of one command: an optional table, a JSON summary and an optional one-line answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Map<String, Value>,
    pub headline: Option<String>,
}

impl Artifact {
    pub fn new(name: &str) -> Self {
        Artifact {
            name: name.to_string(),
            header: Vec::new(),
            rows: Vec::new(),
            summary: Map::new(),
            headline: None,
        }
    }

    pub fn header<S: AsRef<str>>(mut self, cols: &[S]) -> Self {
        self.header = cols.iter().map(|c| c.as_ref().to_string()).collect();
        self
    }

    pub fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }

    pub fn set_num(&mut self, key: &str, v: f64) {
        self.set(key, jnum(v));
    }

    pub fn csv_bytes(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| crate::error::CliError::Io(e.to_string()))
    }

    pub fn summary_line(&self) -> String {
        Value::Object(self.summary.clone()).to_string()
    }

    /// With `out`, writes the files and prints the headline (or summary); without, prints
    /// the table and then the headline (or summary).
    pub fn emit(&self, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
        let has_table = !self.header.is_empty();
        let last = self.headline.clone().unwrap_or_else(|| self.summary_line());
        match out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                if has_table {
                    std::fs::write(dir.join(format!("{}.csv", self.name)), self.csv_bytes()?)?;
                }
                let mut json = serde_json::to_string_pretty(&Value::Object(self.summary.clone()))?;
                json.push('\n');
                std::fs::write(dir.join(format!("{}.json", self.name)), json)?;
            }
            None if has_table => stdout.write_all(&self.csv_bytes()?)?,
            None => {}
        }
        writeln!(stdout, "{last}")?;
        Ok(())
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small or large values.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// JSON has no infinities; those become the strings "inf", "-inf" and "nan".
pub fn jnum(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(format!("{v}").to_lowercase()))
}

pub fn jopt(v: Option<f64>) -> Value {
    v.map(jnum).unwrap_or(Value::Null)
}

/// Column names `base` in one dimension, `base_1..base_n` otherwise.
pub fn coord_cols(base: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![base.to_string()]
    } else {
        (1..=n).map(|m| format!("{base}_{m}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -3.5, 1e-9, 2.5e17, 123456.0, -0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1e-9), "1e-9");
        assert_eq!(jnum(f64::INFINITY), Value::String("inf".into()));
    }

    #[test]
    fn csv_uses_lf_and_quotes() {
        let mut a = Artifact::new("t").header(&["a", "b"]);
        a.rows.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(String::from_utf8(a.csv_bytes().unwrap()).unwrap(), "a,b\n1,\"x,y\"\n");
    }
}
