//! Named sweep presets and the sweep-specification type.
//!
//! A [`SweepSpec`] pins everything that determines a sweep's output: the base
//! configuration, the swept variable and its grid, payload variants, the
//! Monte Carlo plans, and stopping/seeding. Re-running an identical spec
//! yields a byte-identical CSV body. The shipped presets (`fig2`,
//! `fig4a`–`fig9b`) cover the standard experiment set: per-tier load
//! statistics, uplink/downlink outage in both cooperation modes with
//! independent and distance-correlated fading, and round-trip delay.

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::config::LabConfig;
use crate::config::NetworkConfig;
use crate::montecarlo::{Collaboration, Fading, Link, Mode, SimPlan};

/// Which knob the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Mean users per small-cell AP, μ/λ₂ (dimensionless).
    LoadRatio,
    /// Virtual-cell size K (integer grid).
    CellSize,
    /// Payload ξ in bytes.
    PayloadBytes,
    /// Resource-unit scheduling probability δ (1/δ must stay integral).
    RruProbability,
    /// SIR threshold θ directly (bypasses the short-packet mapping).
    Threshold,
}

impl SweepVariable {
    pub fn csv_name(self) -> &'static str {
        match self {
            SweepVariable::LoadRatio => "load-ratio",
            SweepVariable::CellSize => "cell-size",
            SweepVariable::PayloadBytes => "payload-bytes",
            SweepVariable::RruProbability => "rru-probability",
            SweepVariable::Threshold => "threshold",
        }
    }
}

/// What the rows of a sweep measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    /// Uplink outage 1 − η^ul_K (exact product form or collaborative bound).
    UplinkReliability,
    /// Downlink outage 1 − η^dl_K (closed-form bounds).
    DownlinkReliability,
    /// Round-trip delay D^ul + D^dl: mean and budget-exceedance rows.
    TotalDelay,
    /// Per-tier load statistics: empirical mean and total-variation distance
    /// against the fitted negative-binomial law.
    LoadPmf,
}

fn default_payloads() -> Vec<f64> {
    vec![32.0]
}

fn default_realizations() -> u64 {
    2500
}

fn default_budget_ms() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    PRESET_SEED
}

/// Everything that determines a sweep's output (see module docs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub name: String,
    pub base: LabConfig,
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    /// Payload variants (bytes) crossed with the grid; each adds one curve.
    #[serde(default = "default_payloads")]
    pub payloads: Vec<f64>,
    pub family: SweepFamily,
    /// Monte Carlo plans run at every grid point; empty = analytic-only.
    #[serde(default)]
    pub plans: Vec<SimPlan>,
    /// Network realizations per grid point (load sweeps only).
    #[serde(default = "default_realizations")]
    pub realizations: u64,
    /// Delay budget for exceedance rows (delay sweeps only).
    #[serde(default = "default_budget_ms")]
    pub budget_ms: f64,
    /// Optional path to a fitted ζ table (CSV); absent = seed value.
    #[serde(default)]
    pub zeta_table: Option<String>,
    /// Seed for sweeps that run no plans (the load realization loop).
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.base
            .validate()
            .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
        if self.grid.is_empty() {
            return Err(ExperimentError::InvalidSpec("grid must be nonempty".into()));
        }
        if !self.grid.iter().all(|v| v.is_finite()) {
            return Err(ExperimentError::InvalidSpec("grid values must be finite".into()));
        }
        if self.grid.len() > 1 {
            let increasing = self.grid.windows(2).all(|w| w[0] < w[1]);
            let decreasing = self.grid.windows(2).all(|w| w[0] > w[1]);
            if !increasing && !decreasing {
                return Err(ExperimentError::InvalidSpec(
                    "grid must be strictly monotone".into(),
                ));
            }
        }
        if self.variable == SweepVariable::CellSize {
            for &v in &self.grid {
                if v < 1.0 || v > 64.0 || (v - v.round()).abs() > 1e-9 {
                    return Err(ExperimentError::InvalidSpec(format!(
                        "cell-size grid values must be integers in [1, 64], got {v}"
                    )));
                }
            }
        }
        if self.payloads.is_empty() || self.payloads.iter().any(|&x| !(x > 0.0)) {
            return Err(ExperimentError::InvalidSpec(
                "payloads must be a nonempty list of positive byte counts".into(),
            ));
        }
        if self.variable == SweepVariable::PayloadBytes && self.payloads.len() > 1 {
            return Err(ExperimentError::InvalidSpec(
                "payload variants conflict with sweeping the payload itself".into(),
            ));
        }
        if !(self.budget_ms > 0.0) {
            return Err(ExperimentError::InvalidSpec("budget_ms must be positive".into()));
        }
        if self.family == SweepFamily::LoadPmf && self.realizations < 1 {
            return Err(ExperimentError::InvalidSpec(
                "load sweeps need at least one realization".into(),
            ));
        }
        let expected_link = match self.family {
            SweepFamily::UplinkReliability => Some(Link::Uplink),
            SweepFamily::DownlinkReliability => Some(Link::Downlink),
            // Delay rows draw both legs; load rows run no SIR plans.
            SweepFamily::TotalDelay | SweepFamily::LoadPmf => None,
        };
        for plan in &self.plans {
            plan.validate().map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
            if let Some(link) = expected_link {
                if plan.link != link {
                    return Err(ExperimentError::InvalidSpec(format!(
                        "plan link {:?} does not match the sweep family",
                        plan.link
                    )));
                }
            }
        }
        if self.family == SweepFamily::LoadPmf && !self.plans.is_empty() {
            return Err(ExperimentError::InvalidSpec(
                "load sweeps run their own realization loop; plans must be empty".into(),
            ));
        }
        Ok(())
    }

    /// The network configuration at one grid point (the swept variable
    /// applied to the base).
    pub fn network_at(&self, value: f64) -> NetworkConfig {
        let n = self.base.network.clone();
        match self.variable {
            SweepVariable::LoadRatio => {
                let lambda2 = *n.densities_per_km2.last().expect("validated: ≥1 tier");
                n.with_user_density(value * lambda2)
            }
            SweepVariable::CellSize => n.with_cell_size(value.round() as usize),
            SweepVariable::RruProbability => {
                let mut n = n;
                n.delta = value;
                n
            }
            SweepVariable::PayloadBytes | SweepVariable::Threshold => n,
        }
    }

    /// The SIR threshold at one grid point for a given payload variant, or
    /// the grid value itself when θ is swept directly.
    pub fn theta_at(&self, value: f64, payload_bytes: f64) -> Result<f64, ExperimentError> {
        if self.variable == SweepVariable::Threshold {
            return Ok(value);
        }
        let xi = if self.variable == SweepVariable::PayloadBytes { value } else { payload_bytes };
        let packet = self.base.packet.clone().with_payload_bytes(xi);
        Ok(crate::shortpacket::sir_threshold(&packet)?)
    }
}

/// Optional user config file: a catalog of named sweep specs. `--preset`
/// looks here first, then in the built-ins.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PresetFile {
    #[serde(default)]
    pub presets: std::collections::BTreeMap<String, SweepSpec>,
}

impl PresetFile {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let file: PresetFile = serde_json::from_str(&text)
            .map_err(|e| ExperimentError::InvalidSpec(format!("config parse error: {e}")))?;
        for spec in file.presets.values() {
            spec.validate()?;
        }
        Ok(file)
    }
}

const PRESET_SEED: u64 = 20_260_823;

fn ratio_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

fn cell_grid() -> Vec<f64> {
    (1..=5).map(|i| i as f64).collect()
}

fn base_config(mu: f64, cell_size: usize) -> LabConfig {
    let mut base = LabConfig::default();
    base.network = NetworkConfig::two_tier(mu, cell_size);
    base
}

fn plan(mode: Mode, fading: Fading, collaboration: Collaboration, link: Link) -> SimPlan {
    let mut p = SimPlan::new(PRESET_SEED);
    p.mode = mode;
    p.fading = fading;
    p.collaboration = collaboration;
    p.link = link;
    p
}

fn reliability_spec(
    name: &str,
    family: SweepFamily,
    link: Link,
    collaboration: Collaboration,
    fading: Fading,
    over_ratio: bool,
) -> SweepSpec {
    let (variable, grid, mu, k) = if over_ratio {
        (SweepVariable::LoadRatio, ratio_grid(), 125.0, 4)
    } else {
        (SweepVariable::CellSize, cell_grid(), 125.0, 4)
    };
    SweepSpec {
        name: name.into(),
        base: base_config(mu, k),
        variable,
        grid,
        payloads: default_payloads(),
        family,
        plans: vec![plan(Mode::ModelMatched, fading, collaboration, link)],
        realizations: default_realizations(),
        budget_ms: default_budget_ms(),
        zeta_table: None,
        seed: PRESET_SEED,
    }
}

/// Names of the built-in presets, in catalog order.
pub fn preset_names() -> Vec<&'static str> {
    vec![
        "fig2", "fig4a", "fig4b", "fig5a", "fig5b", "fig6a", "fig6b", "fig7a", "fig7b", "fig8a",
        "fig8b", "fig9a", "fig9b",
    ]
}

/// Looks up a built-in preset by name.
pub fn preset(name: &str) -> Result<SweepSpec, ExperimentError> {
    use Collaboration::{Collaborative, NonCollaborative};
    use Fading::{DistanceCorrelated, Independent};
    let spec = match name {
        // Per-tier user-count statistics versus the cell size, with
        // power-proportional association biases.
        "fig2" => {
            let mut base = base_config(125.0, 4);
            base.network = base.network.with_power_biases();
            SweepSpec {
                name: name.into(),
                base,
                variable: SweepVariable::CellSize,
                grid: cell_grid(),
                payloads: default_payloads(),
                family: SweepFamily::LoadPmf,
                plans: Vec::new(),
                realizations: default_realizations(),
                budget_ms: default_budget_ms(),
                zeta_table: None,
                seed: PRESET_SEED,
            }
        }
        // Uplink outage, non-collaborative: three payload curves vs load.
        "fig4a" => {
            let mut s = reliability_spec(
                name,
                SweepFamily::UplinkReliability,
                Link::Uplink,
                NonCollaborative,
                Independent,
                true,
            );
            s.payloads = vec![8.0, 32.0, 64.0];
            s
        }
        "fig4b" => reliability_spec(
            name,
            SweepFamily::UplinkReliability,
            Link::Uplink,
            NonCollaborative,
            Independent,
            false,
        ),
        "fig5a" => reliability_spec(
            name,
            SweepFamily::UplinkReliability,
            Link::Uplink,
            Collaborative,
            Independent,
            true,
        ),
        "fig5b" => reliability_spec(
            name,
            SweepFamily::UplinkReliability,
            Link::Uplink,
            Collaborative,
            Independent,
            false,
        ),
        "fig6a" => reliability_spec(
            name,
            SweepFamily::DownlinkReliability,
            Link::Downlink,
            NonCollaborative,
            Independent,
            true,
        ),
        "fig6b" => reliability_spec(
            name,
            SweepFamily::DownlinkReliability,
            Link::Downlink,
            NonCollaborative,
            Independent,
            false,
        ),
        "fig7a" => reliability_spec(
            name,
            SweepFamily::DownlinkReliability,
            Link::Downlink,
            Collaborative,
            Independent,
            true,
        ),
        "fig7b" => reliability_spec(
            name,
            SweepFamily::DownlinkReliability,
            Link::Downlink,
            Collaborative,
            Independent,
            false,
        ),
        // Correlated-fading downlink, both cooperation modes, vs load.
        "fig8a" => reliability_spec(
            name,
            SweepFamily::DownlinkReliability,
            Link::Downlink,
            NonCollaborative,
            DistanceCorrelated,
            true,
        ),
        "fig8b" => reliability_spec(
            name,
            SweepFamily::DownlinkReliability,
            Link::Downlink,
            Collaborative,
            DistanceCorrelated,
            true,
        ),
        // Round-trip delay with a 1 ms budget, both cooperation modes.
        "fig9a" => SweepSpec {
            name: name.into(),
            base: base_config(125.0, 5),
            variable: SweepVariable::LoadRatio,
            grid: ratio_grid(),
            payloads: default_payloads(),
            family: SweepFamily::TotalDelay,
            plans: vec![
                plan(Mode::ModelMatched, Independent, NonCollaborative, Link::Uplink),
                plan(Mode::ModelMatched, Independent, Collaborative, Link::Uplink),
            ],
            realizations: default_realizations(),
            budget_ms: 1.0,
            zeta_table: None,
            seed: PRESET_SEED,
        },
        "fig9b" => SweepSpec {
            name: name.into(),
            base: base_config(50.0, 5),
            variable: SweepVariable::CellSize,
            grid: cell_grid(),
            payloads: default_payloads(),
            family: SweepFamily::TotalDelay,
            plans: vec![
                plan(Mode::ModelMatched, Independent, NonCollaborative, Link::Uplink),
                plan(Mode::ModelMatched, Independent, Collaborative, Link::Uplink),
            ],
            realizations: default_realizations(),
            budget_ms: 1.0,
            zeta_table: None,
            seed: PRESET_SEED,
        },
        other => return Err(ExperimentError::UnknownPreset(other.into())),
    };
    spec.validate()?;
    Ok(spec)
}
