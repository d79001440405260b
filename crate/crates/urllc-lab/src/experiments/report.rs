//! Report assembly: re-reads sweep CSVs and checks simulations against the
//! analytic curves.
//!
//! Two checks matter. Rows whose analytic column is exact (or that carry an
//! estimator-consistent closed form in `analytic_matched`) contribute to the
//! largest gap in decades, |log10 sim − log10 reference|. Rows whose
//! analytic column is a one-sided bound are checked for violations: the
//! simulated outage must not undercut the bound by more than three standard
//! errors. Any violation makes the report fail.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::sweep::CSV_HEADER;
use super::ExperimentError;

/// One parsed CSV row; empty columns become `None`.
#[derive(Debug, Clone)]
struct ParsedRow {
    preset: String,
    sweep_var: String,
    sweep_value: f64,
    metric: String,
    collaboration: String,
    mode: String,
    analytic_kind: String,
    analytic: Option<f64>,
    analytic_matched: Option<f64>,
    sim_estimate: Option<f64>,
    sim_std_error: Option<f64>,
    config_hash: String,
}

fn parse_opt_f64(field: &str, line_no: usize, name: &str) -> Result<Option<f64>, ExperimentError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|e| ExperimentError::CorruptResults(format!("line {line_no}, {name}: {e}")))
}

fn parse_row(line: &str, line_no: usize) -> Result<ParsedRow, ExperimentError> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 20 {
        return Err(ExperimentError::CorruptResults(format!(
            "line {line_no}: expected 20 columns, got {}",
            f.len()
        )));
    }
    Ok(ParsedRow {
        preset: f[0].to_string(),
        sweep_var: f[1].to_string(),
        sweep_value: parse_opt_f64(f[2], line_no, "sweep_value")?.ok_or_else(|| {
            ExperimentError::CorruptResults(format!("line {line_no}: empty sweep_value"))
        })?,
        metric: f[3].to_string(),
        collaboration: f[8].to_string(),
        mode: f[9].to_string(),
        analytic_kind: f[11].to_string(),
        analytic: parse_opt_f64(f[12], line_no, "analytic")?,
        analytic_matched: parse_opt_f64(f[13], line_no, "analytic_matched")?,
        sim_estimate: parse_opt_f64(f[14], line_no, "sim_estimate")?,
        sim_std_error: parse_opt_f64(f[15], line_no, "sim_std_error")?,
        config_hash: f[19].to_string(),
    })
}

/// Checks for one result file.
#[derive(Debug, Clone, Serialize)]
pub struct PresetReport {
    pub preset: String,
    pub file: String,
    pub config_hash: String,
    pub rows: usize,
    pub sim_rows: usize,
    /// Largest |log10 sim − log10 reference| over rows with an exact or
    /// estimator-consistent reference (absent when no such row has both).
    pub max_gap_decades: Option<f64>,
    /// Where that largest gap occurred.
    pub max_gap_at: Option<String>,
    /// Rows carrying a one-sided analytic bound and a simulated estimate.
    pub bound_rows: usize,
    /// Human-readable descriptions of bound violations (must be empty).
    pub bound_violations: Vec<String>,
}

/// All per-file reports plus the overall verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ReportOutcome {
    pub reports: Vec<PresetReport>,
}

impl ReportOutcome {
    pub fn total_violations(&self) -> usize {
        self.reports.iter().map(|r| r.bound_violations.len()).sum()
    }

    pub fn passed(&self) -> bool {
        self.total_violations() == 0
    }

    /// Plain-text rendering, one line per file plus a verdict line.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:>5} {:>5} {:>14} {:>7} {:>10}  file\n",
            "preset", "rows", "sim", "max-gap (dec)", "bounds", "violations"
        ));
        for r in &self.reports {
            let gap = r
                .max_gap_decades
                .map(|g| format!("{g:.4}"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<8} {:>5} {:>5} {:>14} {:>7} {:>10}  {}\n",
                r.preset,
                r.rows,
                r.sim_rows,
                gap,
                r.bound_rows,
                r.bound_violations.len(),
                r.file
            ));
            if let Some(at) = &r.max_gap_at {
                out.push_str(&format!("         largest gap at {at}\n"));
            }
            for v in &r.bound_violations {
                out.push_str(&format!("         VIOLATION: {v}\n"));
            }
        }
        if self.passed() {
            out.push_str("all simulated points respect the analytic bounds\n");
        } else {
            out.push_str(&format!(
                "{} bound violation(s) detected\n",
                self.total_violations()
            ));
        }
        out
    }
}

fn summarize_one(path: &Path) -> Result<PresetReport, ExperimentError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(ExperimentError::SchemaMismatch(format!(
            "{}: header does not match the expected column layout",
            path.display()
        )));
    }
    let mut rows: Vec<ParsedRow> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse_row(line, i + 2)?);
    }
    if rows.is_empty() {
        return Err(ExperimentError::CorruptResults(format!(
            "{}: no result rows",
            path.display()
        )));
    }
    let preset = rows[0].preset.clone();
    let hash = rows[0].config_hash.clone();
    for r in &rows {
        if r.preset != preset {
            return Err(ExperimentError::CorruptResults(format!(
                "{}: rows mix presets '{preset}' and '{}'",
                path.display(),
                r.preset
            )));
        }
        if r.config_hash != hash {
            return Err(ExperimentError::CorruptResults(format!(
                "{}: rows mix configuration hashes; stale or merged artifact",
                path.display()
            )));
        }
    }

    let mut sim_rows = 0;
    let mut bound_rows = 0;
    let mut max_gap: Option<(f64, String)> = None;
    let mut violations = Vec::new();
    for r in &rows {
        let Some(sim) = r.sim_estimate else { continue };
        sim_rows += 1;
        let reference = r
            .analytic_matched
            .or_else(|| (r.analytic_kind == "exact").then_some(r.analytic).flatten());
        if let Some(reference) = reference {
            if sim > 0.0 && reference > 0.0 {
                let gap = (sim.log10() - reference.log10()).abs();
                if max_gap.as_ref().is_none_or(|(g, _)| gap > *g) {
                    let at = format!(
                        "{} {}={} {}",
                        r.metric,
                        r.sweep_var,
                        r.sweep_value,
                        if r.mode.is_empty() { &r.collaboration } else { &r.mode }
                    );
                    max_gap = Some((gap, at));
                }
            }
        }
        if r.analytic_kind == "bound" {
            if let Some(bound) = r.analytic {
                bound_rows += 1;
                let se = r.sim_std_error.unwrap_or(0.0);
                if sim + 3.0 * se < bound {
                    violations.push(format!(
                        "{} at {}={} ({}): sim {sim:.4e} + 3·{se:.4e} below bound {bound:.4e}",
                        r.metric, r.sweep_var, r.sweep_value, r.collaboration
                    ));
                }
            }
        }
    }

    Ok(PresetReport {
        preset,
        file: path.display().to_string(),
        config_hash: hash,
        rows: rows.len(),
        sim_rows,
        max_gap_decades: max_gap.as_ref().map(|(g, _)| *g),
        max_gap_at: max_gap.map(|(_, at)| at),
        bound_rows,
        bound_violations: violations,
    })
}

/// Summarizes a set of sweep CSVs. Parsing or consistency problems in any
/// file abort the whole report; bound violations do not (they are the
/// report's finding, surfaced via [`ReportOutcome::passed`]).
pub fn summarize_files<P: AsRef<Path>>(paths: &[P]) -> Result<ReportOutcome, ExperimentError> {
    if paths.is_empty() {
        return Err(ExperimentError::InvalidSpec("report needs at least one CSV".into()));
    }
    let mut reports = Vec::with_capacity(paths.len());
    for p in paths {
        reports.push(summarize_one(p.as_ref())?);
    }
    Ok(ReportOutcome { reports })
}
