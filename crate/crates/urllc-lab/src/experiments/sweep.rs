//! Sweep execution: analytic curves, Monte Carlo runs, and CSV artifacts.
//!
//! `run_sweep` walks the grid of a [`SweepSpec`], evaluates the closed-form
//! curves at every point, runs each configured simulation plan alongside
//! them, and writes one flat CSV plus a small JSON summary. The CSV body is
//! a pure function of the spec (plans carry their own seeds), so re-running
//! the same spec reproduces it byte for byte regardless of worker count.
//!
//! On a mid-run failure the rows produced so far are preserved under
//! `<out>.partial` and the error is propagated.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::presets::{SweepFamily, SweepSpec};
use super::ExperimentError;
use crate::analysis::{
    self, DelayModel, LinkParams, TierGeometry, ZetaTable, ZETA_SEED,
};
use crate::config::NetworkConfig;
use crate::fitting;
use crate::geometry::Window;
use crate::montecarlo::{
    self, Collaboration, Fading, Link, Mode, SimPlan, TerminatedBy,
};
use crate::numerics::QuadratureSpec;

/// Column layout shared by every sweep CSV. `analytic` is the closed-form
/// curve (`analytic_kind` says whether it is exact or a one-sided bound on
/// the outage from below), `analytic_matched` is the closed form the
/// estimator itself converges to, where one exists.
pub const CSV_HEADER: &str = "preset,sweep_var,sweep_value,metric,k,payload_bytes,theta,\
link,collaboration,mode,fading,analytic_kind,analytic,analytic_matched,\
sim_estimate,sim_std_error,trials,events,terminated_by,config_hash";

/// Extra core radius (km) kept beyond the trim margin in load sweeps.
const LOAD_CORE_RADIUS_KM: f64 = 0.6;

/// One CSV row before rendering; preset name, sweep variable, and config
/// hash are uniform across a file and added at render time.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub metric: String,
    pub k: usize,
    pub payload_bytes: Option<f64>,
    pub theta: Option<f64>,
    pub link: &'static str,
    pub collaboration: &'static str,
    pub mode: &'static str,
    pub fading: &'static str,
    pub analytic_kind: &'static str,
    pub analytic: Option<f64>,
    pub analytic_matched: Option<f64>,
    pub sim_estimate: Option<f64>,
    pub sim_std_error: Option<f64>,
    pub trials: Option<u64>,
    pub events: Option<u64>,
    pub terminated_by: &'static str,
}

impl ResultRow {
    /// A row with every optional column absent; callers fill in what the
    /// metric provides.
    pub(crate) fn blank(sweep_value: f64, metric: String, k: usize) -> Self {
        Self {
            sweep_value,
            metric,
            k,
            payload_bytes: None,
            theta: None,
            link: "",
            collaboration: "",
            mode: "",
            fading: "",
            analytic_kind: "none",
            analytic: None,
            analytic_matched: None,
            sim_estimate: None,
            sim_std_error: None,
            trials: None,
            events: None,
            terminated_by: "",
        }
    }
}

/// What `run_sweep` produced besides the CSV itself.
#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub name: String,
    pub csv_path: String,
    pub rows: usize,
    pub grid_points: usize,
    pub config_hash: String,
    pub workers: usize,
    pub wall_ms: u128,
}

pub fn link_name(link: Link) -> &'static str {
    match link {
        Link::Uplink => "uplink",
        Link::Downlink => "downlink",
    }
}

pub fn collaboration_name(c: Collaboration) -> &'static str {
    match c {
        Collaboration::NonCollaborative => "non-collaborative",
        Collaboration::Collaborative => "collaborative",
    }
}

pub fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::ModelMatched => "model-matched",
        Mode::SystemLevel => "system-level",
    }
}

pub fn fading_name(f: Fading) -> &'static str {
    match f {
        Fading::Independent => "independent",
        Fading::DistanceCorrelated => "distance-correlated",
    }
}

pub fn terminated_name(t: TerminatedBy) -> &'static str {
    match t {
        TerminatedBy::Events => "events",
        TerminatedBy::TrialCap => "trial-cap",
    }
}

/// Nine significant digits, scientific notation.
fn fmt_sci(v: f64) -> String {
    format!("{v:.8e}")
}

/// Integers render plainly (grid points, payload bytes); everything else in
/// scientific notation.
fn fmt_plain(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        fmt_sci(v)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_sci).unwrap_or_default()
}

fn fmt_opt_u(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn render_row(preset: &str, sweep_var: &str, hash: &str, r: &ResultRow) -> String {
    format!(
        "{preset},{sweep_var},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{hash}",
        fmt_plain(r.sweep_value),
        r.metric,
        r.k,
        r.payload_bytes.map(fmt_plain).unwrap_or_default(),
        fmt_opt(r.theta),
        r.link,
        r.collaboration,
        r.mode,
        r.fading,
        r.analytic_kind,
        fmt_opt(r.analytic),
        fmt_opt(r.analytic_matched),
        fmt_opt(r.sim_estimate),
        fmt_opt(r.sim_std_error),
        fmt_opt_u(r.trials),
        fmt_opt_u(r.events),
        r.terminated_by,
    )
}

fn render_body(spec: &SweepSpec, hash: &str, rows: &[ResultRow]) -> String {
    let mut body = String::with_capacity(64 + 160 * rows.len());
    body.push_str(CSV_HEADER);
    body.push('\n');
    for row in rows {
        body.push_str(&render_row(&spec.name, spec.variable.csv_name(), hash, row));
        body.push('\n');
    }
    body
}

/// First 16 hex characters of the SHA-256 over the spec's canonical JSON
/// plus the loaded ζ-table text.
pub fn config_hash(spec: &SweepSpec, zeta_text: &str) -> String {
    let spec_json = serde_json::to_string(spec).expect("sweep specs always serialize");
    let mut hasher = Sha256::new();
    hasher.update(spec_json.as_bytes());
    hasher.update(b"\n");
    hasher.update(zeta_text.as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn load_zeta_table(spec: &SweepSpec) -> Result<(ZetaTable, String), ExperimentError> {
    match &spec.zeta_table {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let table = ZetaTable::from_csv(&text)?;
            Ok((table, text))
        }
        None => Ok((ZetaTable::empty(), String::new())),
    }
}

fn write_atomic(out: &Path, body: &str) -> Result<(), ExperimentError> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&parent)?;
    tmp.write_all(body.as_bytes())?;
    tmp.flush()?;
    tmp.persist(out).map_err(|e| ExperimentError::Io(e.error))?;
    Ok(())
}

/// Runs a validated sweep and writes the CSV to `out` (atomically) plus a
/// JSON summary next to it. Orchestration is single-threaded; `workers`
/// is handed to the Monte Carlo layer.
pub fn run_sweep(
    spec: &SweepSpec,
    out: &Path,
    workers: usize,
) -> Result<SweepOutcome, ExperimentError> {
    spec.validate()?;
    let started = Instant::now();
    let (table, zeta_text) = load_zeta_table(spec)?;
    let hash = config_hash(spec, &zeta_text);

    let mut rows: Vec<ResultRow> = Vec::new();
    let result = match spec.family {
        SweepFamily::UplinkReliability | SweepFamily::DownlinkReliability => {
            reliability_rows(spec, &table, workers, &mut rows)
        }
        SweepFamily::TotalDelay => delay_rows(spec, &table, workers, &mut rows),
        SweepFamily::LoadPmf => load_rows(spec, workers, &mut rows),
    };

    let body = render_body(spec, &hash, &rows);
    match result {
        Ok(()) => {
            write_atomic(out, &body)?;
            let outcome = SweepOutcome {
                name: spec.name.clone(),
                csv_path: out.display().to_string(),
                rows: rows.len(),
                grid_points: spec.grid.len(),
                config_hash: hash,
                workers,
                wall_ms: started.elapsed().as_millis(),
            };
            let summary = serde_json::to_string_pretty(&outcome)
                .expect("outcome always serializes");
            fs::write(out.with_extension("summary.json"), summary)?;
            Ok(outcome)
        }
        Err(e) => {
            let partial = PathBuf::from(format!("{}.partial", out.display()));
            if let Err(werr) = write_atomic(&partial, &body) {
                warn!("could not persist partial results to {}: {werr}", partial.display());
            }
            Err(e)
        }
    }
}

/// Closed-form outage at one grid point: exact for the non-collaborative
/// uplink, a lower bound on the outage everywhere else.
pub fn analytic_outage(
    cfg: &NetworkConfig,
    table: &ZetaTable,
    theta: f64,
    link: Link,
    collaboration: Collaboration,
    quad: &QuadratureSpec,
) -> Result<(f64, &'static str), ExperimentError> {
    let k = cfg.cell_size;
    Ok(match (link, collaboration) {
        (Link::Uplink, Collaboration::NonCollaborative) => {
            let lp = LinkParams::standard(cfg, table);
            (1.0 - analysis::uplink_reliability_noncollab(k, theta, &lp), "exact")
        }
        (Link::Uplink, Collaboration::Collaborative) => {
            let lp = LinkParams::standard(cfg, table);
            (1.0 - analysis::uplink_reliability_collab_bound(k, theta, &lp), "bound")
        }
        (Link::Downlink, Collaboration::NonCollaborative) => (
            1.0 - analysis::downlink_reliability_noncollab_bound(k, theta, cfg, table, quad)?,
            "bound",
        ),
        (Link::Downlink, Collaboration::Collaborative) => (
            1.0 - analysis::downlink_reliability_collab_bound(k, theta, cfg, table, quad)?,
            "bound",
        ),
    })
}

/// The closed form a given estimator converges to, if one exists: the exact
/// product form for matched non-collaborative uplink runs, its
/// occupancy-consistent variant for system-level ones.
pub fn matched_outage(
    cfg: &NetworkConfig,
    table: &ZetaTable,
    theta: f64,
    plan: &SimPlan,
) -> Option<f64> {
    if plan.link != Link::Uplink || plan.collaboration != Collaboration::NonCollaborative {
        return None;
    }
    let lp = match plan.mode {
        Mode::ModelMatched => LinkParams::standard(cfg, table),
        Mode::SystemLevel => LinkParams::system_consistent(cfg, table),
    };
    Some(1.0 - analysis::uplink_reliability_noncollab(cfg.cell_size, theta, &lp))
}

fn reliability_rows(
    spec: &SweepSpec,
    table: &ZetaTable,
    workers: usize,
    rows: &mut Vec<ResultRow>,
) -> Result<(), ExperimentError> {
    let quad = QuadratureSpec::default();
    let link = match spec.family {
        SweepFamily::UplinkReliability => Link::Uplink,
        _ => Link::Downlink,
    };
    let metric = format!("{}-outage", link_name(link));
    for &g in &spec.grid {
        let cfg = spec.network_at(g);
        for &xi in &spec.payloads {
            let theta = spec.theta_at(g, xi)?;
            if spec.plans.is_empty() {
                for collaboration in
                    [Collaboration::NonCollaborative, Collaboration::Collaborative]
                {
                    let (outage, kind) =
                        analytic_outage(&cfg, table, theta, link, collaboration, &quad)?;
                    let mut row = ResultRow::blank(g, metric.clone(), cfg.cell_size);
                    row.payload_bytes = Some(xi);
                    row.theta = Some(theta);
                    row.link = link_name(link);
                    row.collaboration = collaboration_name(collaboration);
                    row.analytic_kind = kind;
                    row.analytic = Some(outage);
                    rows.push(row);
                }
                continue;
            }
            for plan in &spec.plans {
                let (outage, kind) =
                    analytic_outage(&cfg, table, theta, link, plan.collaboration, &quad)?;
                let est = match link {
                    Link::Uplink => montecarlo::estimate_uplink_reliability(
                        &cfg, table, plan, theta, workers,
                    )?,
                    Link::Downlink => montecarlo::estimate_downlink_reliability(
                        &cfg, table, plan, theta, workers,
                    )?,
                };
                let mut row = ResultRow::blank(g, metric.clone(), cfg.cell_size);
                row.payload_bytes = Some(xi);
                row.theta = Some(theta);
                row.link = link_name(link);
                row.collaboration = collaboration_name(plan.collaboration);
                row.mode = mode_name(plan.mode);
                row.fading = fading_name(plan.fading);
                row.analytic_kind = kind;
                row.analytic = Some(outage);
                row.analytic_matched = matched_outage(&cfg, table, theta, plan);
                row.sim_estimate = Some(est.estimate);
                row.sim_std_error = Some(est.std_error);
                row.trials = Some(est.trials);
                row.events = Some(est.events);
                row.terminated_by = terminated_name(est.terminated_by);
                rows.push(row);
            }
        }
    }
    Ok(())
}

/// Builds the delay model for one grid point from the closed-form stage
/// reliabilities under the given cooperation mode.
fn delay_model_at(
    cfg: &NetworkConfig,
    table: &ZetaTable,
    spec: &SweepSpec,
    theta: f64,
    collaboration: Collaboration,
    quad: &QuadratureSpec,
) -> Result<DelayModel, ExperimentError> {
    let k = cfg.cell_size;
    let lp = LinkParams::standard(cfg, table);
    let rho_ap = analysis::uplink_noncollision_ap(cfg, table);
    let collaborative = collaboration == Collaboration::Collaborative;
    let eta_ul_k = if collaborative {
        analysis::uplink_reliability_collab_bound(k, theta, &lp)
    } else {
        analysis::uplink_reliability_noncollab(k, theta, &lp)
    };
    let eta_dl_k = if collaborative {
        analysis::downlink_reliability_collab_bound(k, theta, cfg, table, quad)?
    } else {
        analysis::downlink_reliability_noncollab_bound(k, theta, cfg, table, quad)?
    };
    Ok(DelayModel {
        params: spec.base.delay.clone(),
        rho_ul_k: analysis::uplink_noncollision_user(rho_ap, k),
        eta_ul_k,
        eta_dl_k,
        ap_success: DelayModel::default_ap_success(k, theta, &lp),
    })
}

fn delay_rows(
    spec: &SweepSpec,
    table: &ZetaTable,
    workers: usize,
    rows: &mut Vec<ResultRow>,
) -> Result<(), ExperimentError> {
    let quad = QuadratureSpec::default();
    for &g in &spec.grid {
        let cfg = spec.network_at(g);
        let k = cfg.cell_size;
        for &xi in &spec.payloads {
            let theta = spec.theta_at(g, xi)?;
            if spec.plans.is_empty() {
                for collaboration in
                    [Collaboration::NonCollaborative, Collaboration::Collaborative]
                {
                    let collaborative = collaboration == Collaboration::Collaborative;
                    let model = delay_model_at(&cfg, table, spec, theta, collaboration, &quad)?;
                    let mean = analysis::mean_uplink_delay(&model, k, collaborative, &quad)?
                        + analysis::mean_downlink_delay(&model, k, collaborative)?;
                    let mut row = ResultRow::blank(g, "delay-mean-ms".into(), k);
                    row.payload_bytes = Some(xi);
                    row.theta = Some(theta);
                    row.link = "total";
                    row.collaboration = collaboration_name(collaboration);
                    row.analytic_kind = "exact";
                    row.analytic = Some(mean);
                    rows.push(row);
                }
                continue;
            }
            for plan in &spec.plans {
                let collaborative = plan.collaboration == Collaboration::Collaborative;
                let model = delay_model_at(&cfg, table, spec, theta, plan.collaboration, &quad)?;
                let mean = analysis::mean_uplink_delay(&model, k, collaborative, &quad)?
                    + analysis::mean_downlink_delay(&model, k, collaborative)?;
                let est =
                    montecarlo::estimate_total_delay(&model, k, plan, spec.budget_ms, workers)?;

                let mut mean_row = ResultRow::blank(g, "delay-mean-ms".into(), k);
                mean_row.payload_bytes = Some(xi);
                mean_row.theta = Some(theta);
                mean_row.link = "total";
                mean_row.collaboration = collaboration_name(plan.collaboration);
                mean_row.mode = mode_name(plan.mode);
                mean_row.fading = fading_name(plan.fading);
                mean_row.analytic_kind = "exact";
                mean_row.analytic = Some(mean);
                mean_row.sim_estimate = Some(est.mean_ms);
                mean_row.sim_std_error = Some(est.mean_std_error);
                mean_row.trials = Some(est.exceed.trials);
                mean_row.terminated_by = terminated_name(est.exceed.terminated_by);
                rows.push(mean_row);

                let mut exceed_row = ResultRow::blank(g, "delay-exceed".into(), k);
                exceed_row.payload_bytes = Some(xi);
                exceed_row.theta = Some(theta);
                exceed_row.link = "total";
                exceed_row.collaboration = collaboration_name(plan.collaboration);
                exceed_row.mode = mode_name(plan.mode);
                exceed_row.fading = fading_name(plan.fading);
                exceed_row.sim_estimate = Some(est.exceed.estimate);
                exceed_row.sim_std_error = Some(est.exceed.std_error);
                exceed_row.trials = Some(est.exceed.trials);
                exceed_row.events = Some(est.exceed.events);
                exceed_row.terminated_by = terminated_name(est.exceed.terminated_by);
                rows.push(exceed_row);
            }
        }
    }
    Ok(())
}

/// Empirical standard error of the histogram mean.
fn histogram_se(hist: &[u64]) -> Option<f64> {
    let total: u64 = hist.iter().sum();
    if total < 2 {
        return None;
    }
    let n = total as f64;
    let mean = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum::<f64>()
        / n;
    let ss = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| c as f64 * (v as f64 - mean).powi(2))
        .sum::<f64>();
    Some((ss / (n - 1.0) / n).sqrt())
}

fn load_rows(
    spec: &SweepSpec,
    workers: usize,
    rows: &mut Vec<ResultRow>,
) -> Result<(), ExperimentError> {
    for &g in &spec.grid {
        let cfg = spec.network_at(g);
        let k = cfg.cell_size;
        let window = Window::new(montecarlo::core_margin(&cfg) + LOAD_CORE_RADIUS_KM);
        let hist = montecarlo::estimate_load_pmf_with_window(
            &cfg,
            &window,
            spec.realizations,
            spec.seed,
            workers,
        )?;
        let geom = TierGeometry::from_network(&cfg);
        for tier in 0..cfg.tiers() {
            let samples = hist.samples(tier);
            let emp_mean = hist.empirical_mean(tier);
            let zeta = match fitting::fit_zeta(&hist.per_tier[tier], emp_mean) {
                Ok(fit) => fit.zeta,
                Err(e) => {
                    warn!(
                        "ζ fit failed for tier {} at grid point {g} ({e}); using seed value",
                        tier + 1
                    );
                    ZETA_SEED
                }
            };
            let a = analysis::nb_scale(
                k,
                cfg.user_density_per_km2,
                geom.lambda_tilde_m[tier],
                zeta,
            );
            let tv = hist.tv_distance(tier, |n| analysis::load_pmf_value(n, a, zeta));

            let mut mean_row =
                ResultRow::blank(g, format!("load-mean-tier{}", tier + 1), k);
            mean_row.mode = mode_name(Mode::SystemLevel);
            mean_row.analytic_kind = "exact";
            mean_row.analytic = Some(analysis::mean_load(tier, &cfg));
            mean_row.sim_estimate = Some(emp_mean);
            mean_row.sim_std_error = histogram_se(&hist.per_tier[tier]);
            mean_row.trials = Some(samples);
            rows.push(mean_row);

            let mut tv_row = ResultRow::blank(g, format!("load-tv-tier{}", tier + 1), k);
            tv_row.mode = mode_name(Mode::SystemLevel);
            tv_row.sim_estimate = Some(tv);
            tv_row.trials = Some(samples);
            rows.push(tv_row);

            let mut zeta_row =
                ResultRow::blank(g, format!("load-zeta-tier{}", tier + 1), k);
            zeta_row.mode = mode_name(Mode::SystemLevel);
            zeta_row.sim_estimate = Some(zeta);
            zeta_row.trials = Some(samples);
            rows.push(zeta_row);
        }
    }
    Ok(())
}
