//! Trace CSV and key-value metadata files.

use std::fmt::Write as _;

use hippo_core::simulator::Trace;

pub const TRACE_HEADER: &str = "t,active_count,rel_loss,consensus_res,reg_res,lyapunov,comm_cost,comp_cost";

/// Floats use the shortest scientific form that round-trips, so equal
/// traces give byte-identical files.
pub fn trace_csv(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * (trace.rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let lyap = r.lyapunov.map(|v| format!("{v:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{},{:e},{:e}",
            r.t,
            r.active.len(),
            r.rel_loss,
            r.consensus_res,
            r.reg_res,
            lyap,
            r.comm_cost,
            r.comp_cost
        );
    }
    out
}

/// Parsed row of a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: usize,
    pub active_count: usize,
    pub rel_loss: f64,
    pub consensus_res: f64,
    pub reg_res: f64,
    pub lyapunov: Option<f64>,
    pub comm_cost: f64,
    pub comp_cost: f64,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err("unexpected trace header".into());
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(format!("line {}: expected 8 fields", k + 2));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("line {}: bad number {s:?}", k + 2));
            let int = |s: &str| s.parse::<usize>().map_err(|_| format!("line {}: bad integer {s:?}", k + 2));
            Ok(CsvRow {
                t: int(f[0])?,
                active_count: int(f[1])?,
                rel_loss: num(f[2])?,
                consensus_res: num(f[3])?,
                reg_res: num(f[4])?,
                lyapunov: if f[5].is_empty() { None } else { Some(num(f[5])?) },
                comm_cost: num(f[6])?,
                comp_cost: num(f[7])?,
            })
        })
        .collect()
}

/// `key=value` lines in insertion order; multi-line values are written one
/// line per `key=` entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            for line in v.lines() {
                let _ = writeln!(out, "{k}={line}");
            }
            if v.is_empty() {
                let _ = writeln!(out, "{k}=");
            }
        }
        out
    }
}
