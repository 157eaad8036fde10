use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use bridgestab_core::InequalityReport;
use serde_json::{json, Map, Value};

use crate::config::{Diagnostic, ExperimentConfig};
use crate::runner::{RunOutput, TableInfo};

pub const REPORT_FILE: &str = "report.jsonl";
pub const SUMMARY_FILE: &str = "summary.txt";

const ASSUMPTIONS: [&str; 2] = [
    "the integrability condition on the continuum marginals has no grid counterpart and is not checked",
    "marginal densities are taken bounded below: smooth with full support on the grid",
];

fn tagged(kind: &str, digest: &str, body: Value) -> Value {
    let mut m = Map::new();
    m.insert("kind".into(), json!(kind));
    m.insert("config_digest".into(), json!(digest));
    if let Value::Object(b) = body {
        m.extend(b);
    }
    Value::Object(m)
}

fn header(cfg: &ExperimentConfig, warnings: &[Diagnostic]) -> Value {
    let d = cfg.digest();
    tagged(
        "run",
        &d,
        json!({
            "scenario": cfg.scenario.name(),
            "seed": cfg.seed,
            "assumptions": ASSUMPTIONS,
            "diagnostics": warnings,
        }),
    )
}

fn report_line(digest: &str, r: &InequalityReport) -> Value {
    tagged("report", digest, serde_json::to_value(r).expect("report serializes"))
}

fn table_line(digest: &str, t: &TableInfo) -> Value {
    tagged("table", digest, json!({ "name": t.name, "file": t.file, "rows": t.rows, "flags": t.flags }))
}

fn write_lines(path: &Path, lines: &[Value]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// `report.jsonl`: run header, reports, tables, artifacts.
pub fn write_report(dir: &Path, cfg: &ExperimentConfig, warnings: &[Diagnostic], out: &RunOutput) -> io::Result<()> {
    let d = cfg.digest();
    let mut lines = vec![header(cfg, warnings)];
    lines.extend(out.reports.iter().map(|r| report_line(&d, r)));
    lines.extend(out.tables.iter().map(|t| table_line(&d, t)));
    lines.extend(out.artifacts.iter().map(|a| tagged("artifact", &d, json!({ "file": a }))));
    write_lines(&dir.join(REPORT_FILE), &lines)
}

/// A run stopped by an error still leaves its header and the error in `report.jsonl`.
pub fn write_error(
    dir: &Path,
    cfg: &ExperimentConfig,
    warnings: &[Diagnostic],
    class: &str,
    message: &str,
) -> io::Result<()> {
    let d = cfg.digest();
    let lines = [header(cfg, warnings), tagged("error", &d, json!({ "class": class, "message": message }))];
    write_lines(&dir.join(REPORT_FILE), &lines)
}

#[derive(Default)]
struct Tally {
    total: usize,
    pass: usize,
    vacuous: usize,
    min_rel: f64,
}

/// Per-name counts as a fixed-width table.
pub fn summary(cfg: &ExperimentConfig, out: &RunOutput) -> String {
    let mut by: BTreeMap<&str, Tally> = BTreeMap::new();
    for r in &out.reports {
        let t = by.entry(r.name.as_str()).or_insert(Tally { min_rel: f64::INFINITY, ..Default::default() });
        t.total += 1;
        if r.pass {
            if r.vacuous {
                t.vacuous += 1;
            } else {
                t.pass += 1;
            }
        }
        if !r.vacuous {
            t.min_rel = t.min_rel.min(r.relative_slack);
        }
    }
    let mut s = format!(
        "scenario {}  seed {}  config {}\n\n",
        cfg.scenario.name(),
        cfg.seed.map_or("none".into(), |x| x.to_string()),
        cfg.digest()
    );
    s += &format!(
        "{:<28} {:>6} {:>6} {:>8} {:>6} {:>14}\n",
        "report", "total", "pass", "vacuous", "fail", "min rel slack"
    );
    let (mut tot, mut pass, mut vac) = (0, 0, 0);
    for (name, t) in &by {
        let fail = t.total - t.pass - t.vacuous;
        let rel = if t.min_rel.is_finite() { format!("{:.4e}", t.min_rel) } else { "-".into() };
        s += &format!("{name:<28} {:>6} {:>6} {:>8} {fail:>6} {rel:>14}\n", t.total, t.pass, t.vacuous);
        tot += t.total;
        pass += t.pass;
        vac += t.vacuous;
    }
    s += &format!("{:<28} {tot:>6} {pass:>6} {vac:>8} {:>6}\n", "all", tot - pass - vac);
    for t in &out.tables {
        s += &format!("\ntable {} ({} rows): {}", t.name, t.rows, t.file);
        for (k, v) in &t.flags {
            s += &format!("  {k}={v}");
        }
    }
    if !out.tables.is_empty() {
        s.push('\n');
    }
    s
}

pub fn write_summary(dir: &Path, text: &str) -> io::Result<()> {
    std::fs::write(dir.join(SUMMARY_FILE), text)
}
