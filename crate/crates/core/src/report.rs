//! Machine-readable run reports and per-iteration history files.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mesh::TetMesh;
use crate::vomt::VomtReport;
use crate::vsem::SolverReport;

/// The JSON schema the reports conform to, shipped at `schema/` in the
/// repository root.
pub const RUN_REPORT_SCHEMA: &str = include_str!("../../../schema/run_report.schema.json");

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub tets: usize,
    pub total_measure: f64,
}

impl MeshStats {
    pub fn of(mesh: &TetMesh) -> Self {
        Self {
            vertices: mesh.vertex_count(),
            tets: mesh.tet_count(),
            total_measure: mesh.total_measure(),
        }
    }
}

/// Summary record of one CLI run; serialized as pretty JSON with a fixed
/// field order, so identical runs produce identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: String,
    pub mesh: MeshStats,
    pub config: Value,
    pub stretch_mean: f64,
    pub stretch_std: f64,
    pub energy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    pub foldings: usize,
    pub termination: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_seconds: Option<f64>,
    pub history_files: Vec<String>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// One row of the `iter,E_V,eps_norm,sigma_mean,sigma_std[,cost]` history.
#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub iter: usize,
    pub energy: f64,
    pub eps_norm: Option<f64>,
    pub sigma_mean: f64,
    pub sigma_std: f64,
    pub cost: Option<f64>,
}

pub fn history_rows(report: &SolverReport) -> Vec<HistoryRow> {
    report
        .energy
        .iter()
        .enumerate()
        .map(|(m, &e)| HistoryRow {
            iter: m,
            energy: e,
            eps_norm: (m > 0).then(|| report.eps_norm[m - 1]),
            sigma_mean: report.stretch_mean[m],
            sigma_std: report.stretch_std[m],
            cost: None,
        })
        .collect()
}

pub fn vomt_history_rows(report: &VomtReport) -> Vec<HistoryRow> {
    report
        .cost
        .iter()
        .enumerate()
        .map(|(m, &c)| HistoryRow {
            iter: m,
            energy: report.energy[m],
            eps_norm: (m > 0).then(|| report.eps_norm[m - 1]),
            sigma_mean: report.stretch_mean[m],
            sigma_std: report.stretch_std[m],
            cost: Some(c),
        })
        .collect()
}

pub fn history_csv(rows: &[HistoryRow], with_cost: bool) -> String {
    let mut out = String::from("iter,E_V,eps_norm,sigma_mean,sigma_std");
    if with_cost {
        out.push_str(",cost");
    }
    out.push('\n');
    let full = crate::io::fmt_full;
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}",
            row.iter,
            full(row.energy),
            row.eps_norm.map(full).unwrap_or_default(),
            full(row.sigma_mean),
            full(row.sigma_std),
        ));
        if with_cost {
            out.push(',');
            out.push_str(&row.cost.map(full).unwrap_or_default());
        }
        out.push('\n');
    }
    out
}

pub fn write_history(path: &Path, rows: &[HistoryRow], with_cost: bool) -> Result<()> {
    std::fs::write(path, history_csv(rows, with_cost)).map_err(|e| Error::io(path, e))
}

/// Validate a JSON value against the subset of JSON Schema used by the
/// shipped schema: `type` (including union types), `required`, `properties`,
/// `items` and `enum`. Returns the first violation found.
pub fn validate_against_schema(schema: &Value, instance: &Value) -> std::result::Result<(), String> {
    validate_at(schema, instance, "$")
}

fn validate_at(schema: &Value, instance: &Value, path: &str) -> std::result::Result<(), String> {
    if let Some(types) = schema.get("type") {
        let allowed: Vec<&str> = match types {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(|v| v.as_str()).collect(),
            _ => vec![],
        };
        let actual = json_type(instance);
        let matches = allowed.iter().any(|&t| {
            t == actual || (t == "number" && actual == "integer")
        });
        if !matches {
            return Err(format!("{path}: expected {allowed:?}, found {actual}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(|v| v.as_array()) {
        if !options.contains(instance) {
            return Err(format!("{path}: value not in enum"));
        }
    }
    if let Some(required) = schema.get("required").and_then(|v| v.as_array()) {
        for key in required.iter().filter_map(|v| v.as_str()) {
            if instance.get(key).is_none() {
                return Err(format!("{path}: missing required field '{key}'"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(|v| v.as_object()) {
        for (key, sub) in props {
            if let Some(value) = instance.get(key) {
                validate_at(sub, value, &format!("{path}.{key}"))?;
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(array) = instance.as_array() {
            for (idx, value) in array.iter().enumerate() {
                validate_at(items, value, &format!("{path}[{idx}]"))?;
            }
        }
    }
    Ok(())
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                "integer"
            } else {
                "number"
            }
        }
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            mode: "param".into(),
            mesh: MeshStats {
                vertices: 4,
                tets: 1,
                total_measure: 4.18879,
            },
            config: serde_json::json!({"tolerance": 1e-9, "max_iters": 5}),
            stretch_mean: 1.0,
            stretch_std: 0.0,
            energy: 0.25,
            cost: None,
            foldings: 0,
            termination: "max-iters".into(),
            timing_seconds: None,
            history_files: vec!["history.csv".into()],
            notes: vec![],
        }
    }

    #[test]
    fn report_validates_against_shipped_schema() {
        let schema: Value = serde_json::from_str(RUN_REPORT_SCHEMA).unwrap();
        let report = sample_report();
        let value: Value = serde_json::from_str(&report.to_json()).unwrap();
        validate_against_schema(&schema, &value).unwrap();

        // a non-finite number serializes as null and is rejected
        let mut bad = sample_report();
        bad.energy = f64::NAN;
        let value: Value = serde_json::from_str(&bad.to_json()).unwrap();
        assert!(validate_against_schema(&schema, &value).is_err());
    }

    #[test]
    fn history_csv_shape() {
        let rows = vec![
            HistoryRow {
                iter: 0,
                energy: 7.0,
                eps_norm: None,
                sigma_mean: 1.1,
                sigma_std: 0.2,
                cost: None,
            },
            HistoryRow {
                iter: 1,
                energy: 6.5,
                eps_norm: Some(0.25),
                sigma_mean: 1.05,
                sigma_std: 0.1,
                cost: None,
            },
        ];
        let csv = history_csv(&rows, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "iter,E_V,eps_norm,sigma_mean,sigma_std");
        assert!(lines[1].starts_with("0,") && lines[1].contains(",,"));
    }
}
