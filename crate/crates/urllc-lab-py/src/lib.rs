//! Python bindings: the network model, short-packet thresholds, the analytic
//! reliability/delay formulas, and the Monte Carlo estimators, exposed as the
//! `urllc_lab_py` extension module.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use urllc_lab::analysis::{
    self, downlink_reliability_collab_bound, downlink_reliability_limit,
    downlink_reliability_noncollab_bound, load_pmf, mean_load, uplink_noncollision_ap,
    uplink_noncollision_user, uplink_reliability_collab_bound, uplink_reliability_limit,
    uplink_reliability_noncollab, DelayModel, LinkParams, TierGeometry, ZetaEntry,
};
use urllc_lab::config::{DelayParams, NetworkConfig};
use urllc_lab::experiments::{self, sweep::terminated_name};
use urllc_lab::fitting;
use urllc_lab::montecarlo::{
    estimate_downlink_reliability, estimate_load_pmf, estimate_total_delay,
    estimate_uplink_reliability, Collaboration, Fading, Link, Mode, ReliabilityEstimate, SimPlan,
    StopRule,
};
use urllc_lab::numerics::QuadratureSpec;
use urllc_lab::shortpacket::{self, ShortPacketParams};

const QUAD: QuadratureSpec =
    QuadratureSpec { rel_tol: 1e-10, abs_tol: 1e-13, max_subdivisions: 60 };

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn parse_collaboration(s: &str) -> PyResult<Collaboration> {
    match s {
        "non-collaborative" => Ok(Collaboration::NonCollaborative),
        "collaborative" => Ok(Collaboration::Collaborative),
        other => Err(value_err(format!(
            "unknown collaboration '{other}' (expected 'non-collaborative' or 'collaborative')"
        ))),
    }
}

fn parse_mode(s: &str) -> PyResult<Mode> {
    match s {
        "model-matched" => Ok(Mode::ModelMatched),
        "system-level" => Ok(Mode::SystemLevel),
        other => Err(value_err(format!(
            "unknown mode '{other}' (expected 'model-matched' or 'system-level')"
        ))),
    }
}

fn parse_fading(s: &str) -> PyResult<Fading> {
    match s {
        "independent" => Ok(Fading::Independent),
        "distance-correlated" => Ok(Fading::DistanceCorrelated),
        other => Err(value_err(format!(
            "unknown fading '{other}' (expected 'independent' or 'distance-correlated')"
        ))),
    }
}

fn estimate_dict<'py>(
    py: Python<'py>,
    est: &ReliabilityEstimate,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("outage", est.estimate)?;
    d.set_item("reliability", est.reliability())?;
    d.set_item("std_error", est.std_error)?;
    d.set_item("trials", est.trials)?;
    d.set_item("events", est.events)?;
    d.set_item("terminated_by", terminated_name(est.terminated_by))?;
    Ok(d)
}

/// Two-tier (or n-tier) network configuration.
#[pyclass(name = "Network", skip_from_py_object)]
#[derive(Clone)]
struct Network {
    inner: NetworkConfig,
}

#[pymethods]
impl Network {
    /// Reference two-tier network: 20 W macro APs at 1/km², 5 W small cells
    /// at 250/km², α = 4, 20 RRUs, unit (uplink) association biases.
    #[new]
    #[pyo3(signature = (user_density_per_km2=125.0, cell_size=4))]
    fn new(user_density_per_km2: f64, cell_size: usize) -> PyResult<Self> {
        let inner = NetworkConfig::two_tier(user_density_per_km2, cell_size);
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Same network with power-proportional biases (downlink association).
    fn with_power_biases(&self) -> Self {
        Self { inner: self.inner.clone().with_power_biases() }
    }

    /// Same network with unit biases (uplink association).
    fn with_unit_biases(&self) -> Self {
        Self { inner: self.inner.clone().with_unit_biases() }
    }

    fn with_cell_size(&self, cell_size: usize) -> PyResult<Self> {
        let inner = self.inner.clone().with_cell_size(cell_size);
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn with_user_density(&self, user_density_per_km2: f64) -> PyResult<Self> {
        let inner = self.inner.clone().with_user_density(user_density_per_km2);
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn cell_size(&self) -> usize {
        self.inner.cell_size
    }

    #[getter]
    fn user_density_per_km2(&self) -> f64 {
        self.inner.user_density_per_km2
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn tiers(&self) -> usize {
        self.inner.tiers()
    }

    /// Effective transformed density λ̃ = Σ_m w_m^{2/α} λ_m under the current
    /// biases.
    #[getter]
    fn lambda_tilde(&self) -> f64 {
        TierGeometry::from_network(&self.inner).lambda_tilde
    }

    /// Mean load K·μ/λ̃_m of a tier-m access point.
    fn mean_load(&self, tier: usize) -> PyResult<f64> {
        if tier >= self.inner.tiers() {
            return Err(value_err(format!("tier {tier} out of range")));
        }
        Ok(mean_load(tier, &self.inner))
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(tiers={}, user_density={}, K={}, alpha={}, delta={}, biases={:?})",
            self.inner.tiers(),
            self.inner.user_density_per_km2,
            self.inner.cell_size,
            self.inner.alpha,
            self.inner.delta,
            self.inner.biases,
        )
    }
}

/// Short-packet link-budget parameters.
#[pyclass(name = "Packet", skip_from_py_object)]
#[derive(Clone)]
struct Packet {
    inner: ShortPacketParams,
}

#[pymethods]
impl Packet {
    #[new]
    #[pyo3(signature = (payload_bytes=32.0, duration_ms=0.05, bandwidth_hz=20e6, error_prob=2e-8))]
    fn new(
        payload_bytes: f64,
        duration_ms: f64,
        bandwidth_hz: f64,
        error_prob: f64,
    ) -> PyResult<Self> {
        let inner =
            ShortPacketParams { payload_bytes, duration_ms, bandwidth_hz, error_prob };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// SIR threshold θ implied by the finite-blocklength rate target.
    fn sir_threshold(&self) -> PyResult<f64> {
        shortpacket::sir_threshold(&self.inner).map_err(value_err)
    }

    #[getter]
    fn blocklength(&self) -> f64 {
        self.inner.blocklength()
    }

    fn __repr__(&self) -> String {
        format!(
            "Packet(payload_bytes={}, duration_ms={}, bandwidth_hz={}, error_prob={})",
            self.inner.payload_bytes,
            self.inner.duration_ms,
            self.inner.bandwidth_hz,
            self.inner.error_prob,
        )
    }
}

/// Fitted load-model shape parameters keyed by (tier, cell size, load ratio).
#[pyclass(name = "ZetaTable", skip_from_py_object)]
#[derive(Clone)]
struct ZetaTablePy {
    inner: analysis::ZetaTable,
}

#[pymethods]
impl ZetaTablePy {
    /// Empty table: every lookup falls back to the seed value 3.5.
    #[new]
    fn new() -> Self {
        Self { inner: analysis::ZetaTable::empty() }
    }

    /// Loads a table previously written by the `fit-zeta` command.
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        Ok(Self { inner: analysis::ZetaTable::from_csv(&text).map_err(value_err)? })
    }

    /// Fits shape parameters for both bias views of `network` from fresh load
    /// realizations.
    #[staticmethod]
    #[pyo3(signature = (network, realizations=4000, seed=20_260_823, workers=1))]
    fn fitted(network: &Network, realizations: u64, seed: u64, workers: usize) -> PyResult<Self> {
        let mut table = analysis::ZetaTable::empty();
        for view in [
            network.inner.clone().with_unit_biases(),
            network.inner.clone().with_power_biases(),
        ] {
            let geom = TierGeometry::from_network(&view);
            let hist =
                estimate_load_pmf(&view, realizations, seed, workers).map_err(value_err)?;
            for tier in 0..view.tiers() {
                let fit = fitting::fit_zeta(&hist.per_tier[tier], mean_load(tier, &view))
                    .map_err(value_err)?;
                table.insert(ZetaEntry {
                    tier,
                    cell_size: view.cell_size,
                    mu_over_lambda_tilde_m: view.user_density_per_km2
                        / geom.lambda_tilde_m[tier],
                    zeta: fit.zeta,
                    samples: hist.samples(tier),
                    tv_distance: fit.tv_distance,
                });
            }
        }
        Ok(Self { inner: table })
    }

    fn __len__(&self) -> usize {
        self.inner.entries.len()
    }
}

fn table_of(table: Option<&ZetaTablePy>) -> analysis::ZetaTable {
    table.map(|t| t.inner.clone()).unwrap_or_else(analysis::ZetaTable::empty)
}

/// Probability that a tier-m access point serves exactly n users.
#[pyfunction]
#[pyo3(signature = (network, tier, n, table=None))]
fn load_pmf_value(network: &Network, tier: usize, n: u64, table: Option<&ZetaTablePy>) -> f64 {
    load_pmf(tier, n, &network.inner, &table_of(table))
}

/// Exact non-collaborative uplink outage probability (or the
/// system-consistent variant of the closed form).
#[pyfunction]
#[pyo3(signature = (network, theta, table=None, system_consistent=false))]
fn uplink_outage(
    network: &Network,
    theta: f64,
    table: Option<&ZetaTablePy>,
    system_consistent: bool,
) -> f64 {
    let table = table_of(table);
    let link = if system_consistent {
        LinkParams::system_consistent(&network.inner, &table)
    } else {
        LinkParams::standard(&network.inner, &table)
    };
    1.0 - uplink_reliability_noncollab(network.inner.cell_size, theta, &link)
}

/// Upper bound on the collaborative uplink reliability.
#[pyfunction]
#[pyo3(signature = (network, theta, table=None))]
fn uplink_collab_bound(network: &Network, theta: f64, table: Option<&ZetaTablePy>) -> f64 {
    let link = LinkParams::standard(&network.inner, &table_of(table));
    uplink_reliability_collab_bound(network.inner.cell_size, theta, &link)
}

/// Upper bound on the downlink reliability (selection or joint transmission).
#[pyfunction]
#[pyo3(signature = (network, theta, collaboration="non-collaborative", table=None))]
fn downlink_bound(
    network: &Network,
    theta: f64,
    collaboration: &str,
    table: Option<&ZetaTablePy>,
) -> PyResult<f64> {
    let table = table_of(table);
    let k = network.inner.cell_size;
    match parse_collaboration(collaboration)? {
        Collaboration::NonCollaborative => {
            downlink_reliability_noncollab_bound(k, theta, &network.inner, &table, &QUAD)
                .map_err(value_err)
        }
        Collaboration::Collaborative => {
            downlink_reliability_collab_bound(k, theta, &network.inner, &table, &QUAD)
                .map_err(value_err)
        }
    }
}

/// Dense-cooperation reliability limits (uplink needs the collision-free
/// probability of the network; the downlink limit is density-free).
#[pyfunction]
#[pyo3(signature = (network, theta, link="uplink", table=None))]
fn reliability_limit(
    network: &Network,
    theta: f64,
    link: &str,
    table: Option<&ZetaTablePy>,
) -> PyResult<f64> {
    let cfg = &network.inner;
    match link {
        "uplink" => {
            let rho = LinkParams::standard(cfg, &table_of(table)).rho_ul;
            Ok(uplink_reliability_limit(theta, cfg.delta, rho, cfg.alpha))
        }
        "downlink" => Ok(downlink_reliability_limit(theta, cfg.delta, cfg.alpha)),
        other => Err(value_err(format!("unknown link '{other}'"))),
    }
}

fn build_plan(
    link: Link,
    mode: &str,
    collaboration: &str,
    fading: &str,
    seed: u64,
    target_events: u64,
    max_trials: u64,
) -> PyResult<SimPlan> {
    let mut plan = SimPlan::new(seed);
    plan.link = link;
    plan.mode = parse_mode(mode)?;
    plan.collaboration = parse_collaboration(collaboration)?;
    plan.fading = parse_fading(fading)?;
    plan.stop = StopRule { target_events, max_trials };
    plan.validate().map_err(value_err)?;
    Ok(plan)
}

/// Monte Carlo uplink reliability under the given plan.
#[pyfunction]
#[pyo3(signature = (network, theta, mode="model-matched", collaboration="non-collaborative",
                    fading="independent", table=None, seed=20_260_823, target_events=200,
                    max_trials=20_000_000, workers=1))]
#[allow(clippy::too_many_arguments)]
fn simulate_uplink<'py>(
    py: Python<'py>,
    network: &Network,
    theta: f64,
    mode: &str,
    collaboration: &str,
    fading: &str,
    table: Option<&ZetaTablePy>,
    seed: u64,
    target_events: u64,
    max_trials: u64,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let plan =
        build_plan(Link::Uplink, mode, collaboration, fading, seed, target_events, max_trials)?;
    let est = estimate_uplink_reliability(&network.inner, &table_of(table), &plan, theta, workers)
        .map_err(value_err)?;
    estimate_dict(py, &est)
}

/// Monte Carlo downlink reliability under the given plan.
#[pyfunction]
#[pyo3(signature = (network, theta, mode="model-matched", collaboration="non-collaborative",
                    fading="independent", table=None, seed=20_260_823, target_events=200,
                    max_trials=20_000_000, workers=1))]
#[allow(clippy::too_many_arguments)]
fn simulate_downlink<'py>(
    py: Python<'py>,
    network: &Network,
    theta: f64,
    mode: &str,
    collaboration: &str,
    fading: &str,
    table: Option<&ZetaTablePy>,
    seed: u64,
    target_events: u64,
    max_trials: u64,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let plan = build_plan(
        Link::Downlink,
        mode,
        collaboration,
        fading,
        seed,
        target_events,
        max_trials,
    )?;
    let est =
        estimate_downlink_reliability(&network.inner, &table_of(table), &plan, theta, workers)
            .map_err(value_err)?;
    estimate_dict(py, &est)
}

fn stage_model(
    cfg: &NetworkConfig,
    table: &analysis::ZetaTable,
    theta: f64,
    collaborative: bool,
) -> PyResult<DelayModel> {
    let k = cfg.cell_size;
    let link = LinkParams::standard(cfg, table);
    let rho_ul_k = uplink_noncollision_user(uplink_noncollision_ap(cfg, table), k);
    let (eta_ul_k, eta_dl_k) = if collaborative {
        (
            uplink_reliability_collab_bound(k, theta, &link),
            downlink_reliability_collab_bound(k, theta, cfg, table, &QUAD).map_err(value_err)?,
        )
    } else {
        (
            uplink_reliability_noncollab(k, theta, &link),
            downlink_reliability_noncollab_bound(k, theta, cfg, table, &QUAD)
                .map_err(value_err)?,
        )
    };
    Ok(DelayModel {
        params: DelayParams::default(),
        rho_ul_k,
        eta_ul_k,
        eta_dl_k,
        ap_success: DelayModel::default_ap_success(k, theta, &link),
    })
}

/// Mean one-way delays (uplink_ms, downlink_ms) from the analytic stage model.
#[pyfunction]
#[pyo3(signature = (network, theta, collaborative=false, table=None))]
fn mean_delay_ms(
    network: &Network,
    theta: f64,
    collaborative: bool,
    table: Option<&ZetaTablePy>,
) -> PyResult<(f64, f64)> {
    let model = stage_model(&network.inner, &table_of(table), theta, collaborative)?;
    let k = network.inner.cell_size;
    let ul = analysis::mean_uplink_delay(&model, k, collaborative, &QUAD).map_err(value_err)?;
    let dl = analysis::mean_downlink_delay(&model, k, collaborative).map_err(value_err)?;
    Ok((ul, dl))
}

/// Monte Carlo round-trip delay under the analytic stage model.
#[pyfunction]
#[pyo3(signature = (network, theta, collaborative=false, budget_ms=1.0, table=None,
                    seed=20_260_823, target_events=200, max_trials=1_000_000, workers=1))]
#[allow(clippy::too_many_arguments)]
fn simulate_round_trip_delay<'py>(
    py: Python<'py>,
    network: &Network,
    theta: f64,
    collaborative: bool,
    budget_ms: f64,
    table: Option<&ZetaTablePy>,
    seed: u64,
    target_events: u64,
    max_trials: u64,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let model = stage_model(&network.inner, &table_of(table), theta, collaborative)?;
    let mut plan = SimPlan::new(seed);
    plan.collaboration = if collaborative {
        Collaboration::Collaborative
    } else {
        Collaboration::NonCollaborative
    };
    plan.stop = StopRule { target_events, max_trials };
    let est = estimate_total_delay(&model, network.inner.cell_size, &plan, budget_ms, workers)
        .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("mean_ms", est.mean_ms)?;
    d.set_item("mean_std_error", est.mean_std_error)?;
    d.set_item("budget_ms", est.budget_ms)?;
    d.set_item("exceed_probability", est.exceed.estimate)?;
    d.set_item("exceed_std_error", est.exceed.std_error)?;
    d.set_item("trials", est.exceed.trials)?;
    d.set_item("events", est.exceed.events)?;
    d.set_item("terminated_by", terminated_name(est.exceed.terminated_by))?;
    Ok(d)
}

/// Per-tier load histograms over independent network realizations:
/// result[tier][n] counts core access points serving exactly n users.
#[pyfunction]
#[pyo3(signature = (network, realizations=2000, seed=20_260_823, workers=1))]
fn load_histograms(
    network: &Network,
    realizations: u64,
    seed: u64,
    workers: usize,
) -> PyResult<Vec<Vec<u64>>> {
    let hist =
        estimate_load_pmf(&network.inner, realizations, seed, workers).map_err(value_err)?;
    Ok(hist.per_tier)
}

/// Fits the load-model shape parameter to a histogram; returns
/// (zeta, tv_distance).
#[pyfunction]
fn fit_zeta(histogram: Vec<u64>, mean_target: f64) -> PyResult<(f64, f64)> {
    let fit = fitting::fit_zeta(&histogram, mean_target).map_err(value_err)?;
    Ok((fit.zeta, fit.tv_distance))
}

/// Names of the built-in sweep presets.
#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    experiments::preset_names()
}

/// Runs a built-in preset sweep and writes its CSV; returns a run summary.
#[pyfunction]
#[pyo3(signature = (name, out, workers=1, seed=None, max_trials=None, target_events=None))]
fn run_preset<'py>(
    py: Python<'py>,
    name: &str,
    out: &str,
    workers: usize,
    seed: Option<u64>,
    max_trials: Option<u64>,
    target_events: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut spec = experiments::preset(name).map_err(value_err)?;
    if let Some(s) = seed {
        spec.seed = s;
        for plan in &mut spec.plans {
            plan.seed = s;
        }
    }
    for plan in &mut spec.plans {
        if let Some(m) = max_trials {
            plan.stop.max_trials = m;
        }
        if let Some(t) = target_events {
            plan.stop.target_events = t;
        }
    }
    if let Some(m) = max_trials {
        spec.realizations = m;
    }
    let outcome = experiments::run_sweep(&spec, std::path::Path::new(out), workers)
        .map_err(|e| match &e {
            experiments::ExperimentError::Io(_) => io_err(e),
            _ => value_err(e),
        })?;
    let d = PyDict::new(py);
    d.set_item("name", outcome.name)?;
    d.set_item("csv_path", outcome.csv_path)?;
    d.set_item("rows", outcome.rows)?;
    d.set_item("grid_points", outcome.grid_points)?;
    d.set_item("config_hash", outcome.config_hash)?;
    d.set_item("workers", outcome.workers)?;
    d.set_item("wall_ms", outcome.wall_ms)?;
    Ok(d)
}

#[pymodule]
fn urllc_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<Packet>()?;
    m.add_class::<ZetaTablePy>()?;
    m.add_function(wrap_pyfunction!(load_pmf_value, m)?)?;
    m.add_function(wrap_pyfunction!(uplink_outage, m)?)?;
    m.add_function(wrap_pyfunction!(uplink_collab_bound, m)?)?;
    m.add_function(wrap_pyfunction!(downlink_bound, m)?)?;
    m.add_function(wrap_pyfunction!(reliability_limit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_uplink, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_downlink, m)?)?;
    m.add_function(wrap_pyfunction!(mean_delay_ms, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_round_trip_delay, m)?)?;
    m.add_function(wrap_pyfunction!(load_histograms, m)?)?;
    m.add_function(wrap_pyfunction!(fit_zeta, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    Ok(())
}
