use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{Map, Number, Value};

use crate::Format;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<qnc_core::Error> for CliError {
    fn from(e: qnc_core::Error) -> Self {
        let code = match e {
            qnc_core::Error::EnumerationCapExceeded { .. } | qnc_core::Error::InvalidConfig(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

pub fn fmt_float(x: f64) -> String {
    let r = round12(x);
    if r != 0.0 && (r.abs() < 1e-4 || r.abs() >= 1e15) {
        format!("{r:e}")
    } else {
        r.to_string()
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round12).and_then(Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub struct Sink {
    pub path: Option<PathBuf>,
    pub format: Format,
    pub timestamp: bool,
}

impl Sink {
    fn write(&self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.path {
            Some(path) => std::fs::write(path, bytes)
                .map_err(|e| CliError::io(format!("writing {}: {e}", path.display()))),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::io(e.to_string()))
            }
        }
    }

    /// Writes `body` (a JSON object) with floats rounded and an optional
    /// `generated_at` field.
    pub fn json(&self, mut body: Map<String, Value>) -> Result<(), CliError> {
        if self.timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            body.insert("generated_at".into(), Value::from(secs));
        }
        let mut value = Value::Object(body);
        round_value(&mut value);
        let mut text = serde_json::to_string_pretty(&value).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        self.write(text.as_bytes())
    }

    pub fn csv(&self, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| CliError::io(e.to_string()))?;
        for row in rows {
            w.write_record(row).map_err(|e| CliError::io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(e.to_string()))?;
        self.write(&bytes)
    }
}

/// Converts any serializable value into a JSON value.
pub fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}
