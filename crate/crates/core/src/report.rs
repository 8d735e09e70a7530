//! Result files: per-step field samples and reports, and a summary table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driver::StepReport;
use crate::error::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.csv";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// File-name form of a load level.
pub fn delta_tag(delta: f64) -> String {
    format!("{delta}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serialize(format!("{}: {other:?}", path.display())),
    }
}

/// `fields_<δ>.csv`.
pub fn write_fields_csv(report: &StepReport, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("fields_{}.csv", delta_tag(report.delta)));
    let s = &report.samples;
    let mut out = String::new();
    if s.dim == 1 {
        out.push_str("x,u,eps,eps_p,p,sigma,force\n");
        for r in &s.rows {
            let cols = [
                r.x[0],
                r.u[0],
                r.eps[0],
                r.eps_p[0],
                r.p,
                r.sigma[0],
                r.force.unwrap_or(f64::NAN),
            ];
            let line: Vec<String> = cols.iter().map(|&v| fmt_num(v)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
    } else {
        out.push_str("x,y,u,v,eps_xx,eps_yy,eps_xy,eps_p_xx,eps_p_yy,eps_p_xy,p,sigma_xx,sigma_yy,sigma_xy\n");
        for r in &s.rows {
            let cols = [
                r.x[0], r.x[1], r.u[0], r.u[1], r.eps[0], r.eps[1], r.eps[2], r.eps_p[0], r.eps_p[1], r.eps_p[2], r.p,
                r.sigma[0], r.sigma[1], r.sigma[2],
            ];
            let line: Vec<String> = cols.iter().map(|&v| fmt_num(v)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
    }
    write_file(&path, &out)?;
    Ok(path)
}

/// `step_<δ>.json`.
pub fn write_step_json(report: &StepReport, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("step_{}.json", delta_tag(report.delta)));
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Serialize(e.to_string()))?;
    write_file(&path, &text)?;
    Ok(path)
}

/// Field samples and JSON report of one step.
pub fn write_step_report(report: &StepReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_fields_csv(report, dir)?;
    write_step_json(report, dir)?;
    Ok(())
}

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub delta: f64,
    pub jump: f64,
    pub position: Option<f64>,
    pub angle_deg: Option<f64>,
    pub cohesive_energy: f64,
    pub cohesive_force: f64,
    pub total_energy: f64,
    pub bc_loss: f64,
    pub flagged: bool,
}

impl SummaryRow {
    pub fn of(r: &StepReport) -> Self {
        Self {
            delta: r.delta,
            jump: r.band.jump_norm,
            position: r.band.position,
            angle_deg: r.band.tilt_deg,
            cohesive_energy: r.cohesive_energy,
            cohesive_force: r.cohesive_force,
            total_energy: r.breakdown.total,
            bc_loss: r.breakdown.bc_loss,
            flagged: r.flagged,
        }
    }
}

const SUMMARY_HEADER: &str =
    "delta,jump,position,angle_deg,cohesive_energy,cohesive_force,total_energy,bc_loss,flagged";

pub fn summary_csv(reports: &[StepReport]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in reports.iter().map(SummaryRow::of) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_num(r.delta),
            fmt_num(r.jump),
            fmt_opt(r.position),
            fmt_opt(r.angle_deg),
            fmt_num(r.cohesive_energy),
            fmt_num(r.cohesive_force),
            fmt_num(r.total_energy),
            fmt_num(r.bc_loss),
            r.flagged
        );
    }
    out
}

/// Writes every step's files plus `summary.csv` into `dir`.
pub fn write_program(reports: &[StepReport], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in reports {
        write_step_report(r, dir)?;
    }
    write_file(&dir.join(SUMMARY_FILE), &summary_csv(reports))
}

pub fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>> {
    let path = dir.join(SUMMARY_FILE);
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
    rdr.deserialize()
        .map(|row| row.map_err(|e| csv_err(&path, e)))
        .collect()
}

/// Plain-text table of a summary.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut out = format!(
        "{:>8} {:>10} {:>10} {:>8} {:>10} {:>10} {:>10} {:>9}  {}\n",
        "delta", "jump", "position", "angle", "psi", "t_c", "energy", "bc_loss", "status"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>8.4} {:>10.5} {:>10} {:>8} {:>10.5} {:>10.5} {:>10.5} {:>9.2e}  {}",
            r.delta,
            r.jump,
            opt(r.position),
            opt(r.angle_deg),
            r.cohesive_energy,
            r.cohesive_force,
            r.total_energy,
            r.bc_loss,
            if r.flagged { "FLAGGED" } else { "ok" }
        );
    }
    out
}
