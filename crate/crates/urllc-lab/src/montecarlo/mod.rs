//! Monte Carlo estimators for reliabilities, shot-signal transforms, load
//! histograms, and delays, with a rare-event stopping rule.
//!
//! Two fidelity levels are provided. *Model-matched* estimators sample exactly
//! the stochastic model underlying the closed forms (independent member
//! distances, Poisson interferer fields without exclusion zones, Bernoulli
//! collision gates), so their estimates converge to the formulas with no
//! modeling gap. *System-level* estimators realize the full two-tier network —
//! every user associates, picks RRUs, and transmits — and quantify how far the
//! tractable model sits from the system it approximates.
//!
//! Trials are embarrassingly parallel and deterministic: trial i always uses
//! the RNG stream (seed, i), and per-chunk outcomes are reduced in trial
//! order, so results are bit-identical for any worker count.

pub mod delay;
pub mod downlink;
pub mod load;
pub mod shot;
pub mod uplink;

pub use delay::{estimate_delay, estimate_total_delay, DelayEstimate};
pub use downlink::{estimate_downlink_reliability, MatchedDownlinkParams};
pub use load::{core_margin, estimate_load_pmf, estimate_load_pmf_with_window, LoadHistograms};
pub use uplink::{estimate_uplink_reliability, DEFAULT_FIELD_POINTS};

use crate::analysis::AnalysisError;
use crate::geometry::GeometryError;
use crate::numerics::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),
    #[error("insufficient points: {0}")]
    InsufficientPoints(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Estimator fidelity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ModelMatched,
    SystemLevel,
}

/// Fading model for the member links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fading {
    /// All channel gains i.i.d. exp(1).
    Independent,
    /// Member gains H_k = H_1/(1+d_k^α) + (d_k^α/(1+d_k^α))·H with
    /// d_k = ‖V_k − V_1‖ and H a fresh exp(1) draw per member.
    DistanceCorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Collaboration {
    NonCollaborative,
    Collaborative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    Uplink,
    Downlink,
}

/// How many uplink copies each user transmits in the system-level model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CopyModel {
    /// One copy per virtual-cell member at power 1/K (default).
    PerMember,
    /// A single full-power copy towards one uniformly chosen member.
    SingleCopy,
}

/// Rare-event stopping rule: run until the counted event occurred
/// `target_events` times, but never beyond `max_trials` trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub target_events: u64,
    pub max_trials: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { target_events: 200, max_trials: 20_000_000 }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<(), MonteCarloError> {
        if self.target_events < 1 {
            return Err(MonteCarloError::InvalidPlan("target_events must be ≥ 1".into()));
        }
        if self.max_trials < self.target_events {
            return Err(MonteCarloError::InvalidPlan(
                "max_trials must be ≥ target_events".into(),
            ));
        }
        Ok(())
    }
}

/// Everything that determines a simulation run's random outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimPlan {
    pub mode: Mode,
    pub fading: Fading,
    pub collaboration: Collaboration,
    pub link: Link,
    pub stop: StopRule,
    pub seed: u64,
}

impl SimPlan {
    /// Model-matched, independent fading, non-collaborative uplink defaults.
    pub fn new(seed: u64) -> Self {
        Self {
            mode: Mode::ModelMatched,
            fading: Fading::Independent,
            collaboration: Collaboration::NonCollaborative,
            link: Link::Uplink,
            stop: StopRule::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), MonteCarloError> {
        self.stop.validate()
    }
}

/// What ended a counting run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminatedBy {
    Events,
    TrialCap,
}

/// Counting-estimator output. `estimate` is the probability of the *counted*
/// event — the outage, for reliability runs; use [`reliability`] for the
/// complement.
///
/// [`reliability`]: ReliabilityEstimate::reliability
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
    pub events: u64,
    pub terminated_by: TerminatedBy,
}

impl ReliabilityEstimate {
    /// Success probability 1 − estimate (same standard error).
    pub fn reliability(&self) -> f64 {
        1.0 - self.estimate
    }
}

/// Sample-mean estimator output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

/// Chunk size of the deterministic driver. Chunks are computed in parallel
/// and reduced in trial order; the stopping rule is applied by prefix scan so
/// a run that terminates on events has exactly `target_events` of them.
pub(crate) const CHUNK_TRIALS: u64 = 4096;

pub(crate) fn build_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool construction cannot fail with a positive thread count")
}

fn finish_counting(trials: u64, events: u64, terminated_by: TerminatedBy) -> ReliabilityEstimate {
    let p = events as f64 / trials as f64;
    ReliabilityEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
        events,
        terminated_by,
    }
}

/// Runs `trial` until the stop rule fires, counting `true` outcomes.
pub fn run_counting<F>(
    seed: u64,
    stop: StopRule,
    workers: usize,
    trial: F,
) -> ReliabilityEstimate
where
    F: Fn(&mut RngStream) -> bool + Sync,
{
    run_counting_impl(seed, stop, workers, trial, None)
}

/// As [`run_counting`], also recording the per-trial outcomes (for runs small
/// enough that a trace is useful).
pub fn run_counting_captured<F>(
    seed: u64,
    stop: StopRule,
    workers: usize,
    trial: F,
) -> (ReliabilityEstimate, Vec<bool>)
where
    F: Fn(&mut RngStream) -> bool + Sync,
{
    let mut trace = Vec::new();
    let est = run_counting_impl(seed, stop, workers, trial, Some(&mut trace));
    (est, trace)
}

fn run_counting_impl<F>(
    seed: u64,
    stop: StopRule,
    workers: usize,
    trial: F,
    mut capture: Option<&mut Vec<bool>>,
) -> ReliabilityEstimate
where
    F: Fn(&mut RngStream) -> bool + Sync,
{
    let pool = build_pool(workers);
    let mut trials = 0u64;
    let mut events = 0u64;
    loop {
        let this_chunk = CHUNK_TRIALS.min(stop.max_trials - trials);
        let outcomes: Vec<bool> = pool.install(|| {
            (trials..trials + this_chunk)
                .into_par_iter()
                .map(|i| {
                    let mut rng = RngStream::new(seed, i);
                    trial(&mut rng)
                })
                .collect()
        });
        for &hit in &outcomes {
            trials += 1;
            if let Some(trace) = capture.as_deref_mut() {
                trace.push(hit);
            }
            if hit {
                events += 1;
                if events == stop.target_events {
                    return finish_counting(trials, events, TerminatedBy::Events);
                }
            }
        }
        if trials >= stop.max_trials {
            return finish_counting(trials, events, TerminatedBy::TrialCap);
        }
    }
}

/// Runs exactly `trials` trials of a scalar-valued trial function and returns
/// the sample mean with its standard error. Deterministic for any worker
/// count: chunk sums are reduced in trial order.
pub fn run_mean<F>(seed: u64, trials: u64, workers: usize, trial: F) -> MeanEstimate
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    let out = run_mean_multi(seed, trials, workers, 1, |rng, values| {
        values[0] = trial(rng);
    });
    out.into_iter().next().expect("one component requested")
}

/// Vector-valued variant of [`run_mean`]: each trial fills `dim` components
/// from one shared realization (used for evaluating a transform on a whole
/// argument grid with common random numbers).
pub fn run_mean_multi<F>(
    seed: u64,
    trials: u64,
    workers: usize,
    dim: usize,
    trial: F,
) -> Vec<MeanEstimate>
where
    F: Fn(&mut RngStream, &mut [f64]) + Sync,
{
    assert!(trials >= 1, "mean estimation needs at least one trial");
    let pool = build_pool(workers);
    let mut sum = vec![0.0f64; dim];
    let mut sum_sq = vec![0.0f64; dim];
    let mut done = 0u64;
    while done < trials {
        let this_chunk = CHUNK_TRIALS.min(trials - done);
        let chunk: Vec<Vec<f64>> = pool.install(|| {
            (done..done + this_chunk)
                .into_par_iter()
                .map(|i| {
                    let mut rng = RngStream::new(seed, i);
                    let mut values = vec![0.0f64; dim];
                    trial(&mut rng, &mut values);
                    values
                })
                .collect()
        });
        for values in &chunk {
            for d in 0..dim {
                sum[d] += values[d];
                sum_sq[d] += values[d] * values[d];
            }
        }
        done += this_chunk;
    }
    let n = trials as f64;
    (0..dim)
        .map(|d| {
            let mean = sum[d] / n;
            let var = ((sum_sq[d] / n) - mean * mean).max(0.0);
            MeanEstimate {
                mean,
                std_error: (var / n).sqrt(),
                trials,
            }
        })
        .collect()
}

/// Per-run JSON summary: the plan echo plus the outcome and wall time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub plan: SimPlan,
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
    pub events: u64,
    pub terminated_by: TerminatedBy,
    pub wall_time_ms: f64,
}

impl RunSummary {
    pub fn new(plan: &SimPlan, est: &ReliabilityEstimate, wall_time_ms: f64) -> Self {
        Self {
            plan: *plan,
            estimate: est.estimate,
            std_error: est.std_error,
            trials: est.trials,
            events: est.events,
            terminated_by: est.terminated_by,
            wall_time_ms,
        }
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<(), MonteCarloError> {
        let text = serde_json::to_string_pretty(self)
            .expect("summary serialization cannot fail");
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Draws unit-mean member channel gains for the distance-correlated model:
/// the first member's gain H_1 anchors the rest via
/// H_k = H_1/(1+d_k^α) + (d_k^α/(1+d_k^α))·H with d_k = ‖V_k − V_1‖ and a
/// fresh exp(1) draw H per member.
pub(crate) fn correlated_gains(
    rng: &mut RngStream,
    positions: &[crate::geometry::Point],
    alpha: f64,
    out: &mut Vec<f64>,
) {
    out.clear();
    if positions.is_empty() {
        return;
    }
    let anchor = rng.exp1();
    out.push(anchor);
    for p in &positions[1..] {
        let da = p.dist(&positions[0]).powf(alpha);
        let w = 1.0 / (1.0 + da);
        out.push(w * anchor + (1.0 - w) * rng.exp1());
    }
}

/// Path loss in the transformed 1-D geometry: a point at squared weighted
/// distance `y` is received at `y^{−α/2}`.
pub(crate) fn path_loss_1d(y: f64, alpha: f64) -> f64 {
    if (alpha - 4.0).abs() < 1e-12 {
        1.0 / (y * y)
    } else {
        y.powf(-alpha / 2.0)
    }
}

/// Mean of the shot sum from all field points beyond `t` (1-D intensity
/// `rate`, unit-mean marks) — added back as a deterministic offset so field
/// truncation does not bias interference low.
pub(crate) fn field_tail_mean(t: f64, rate: f64, alpha: f64) -> f64 {
    if rate <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    rate * t.powf(1.0 - alpha / 2.0) / (alpha / 2.0 - 1.0)
}

/// Member fading gains for the matched models. Correlated mode lifts the 1-D
/// squared distances to the plane (radius √y_k, uniform angle) so that gain
/// correlation decays with inter-member separation.
pub(crate) fn draw_member_gains(
    rng: &mut RngStream,
    ys: &[f64],
    fading: Fading,
    alpha: f64,
) -> Vec<f64> {
    match fading {
        Fading::Independent => ys.iter().map(|_| rng.exp1()).collect(),
        Fading::DistanceCorrelated => {
            let positions: Vec<crate::geometry::Point> = ys
                .iter()
                .map(|&y| {
                    let r = y.sqrt();
                    let phi = 2.0 * std::f64::consts::PI * rng.uniform();
                    crate::geometry::Point { x: r * phi.cos(), y: r * phi.sin() }
                })
                .collect();
            let mut gains = Vec::with_capacity(ys.len());
            correlated_gains(rng, &positions, alpha, &mut gains);
            gains
        }
    }
}

/// Writes the captured per-trial outcomes as CSV (`trial,outage`).
pub fn write_trial_trace(
    path: &std::path::Path,
    trace: &[bool],
) -> Result<(), MonteCarloError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "trial,outage")?;
    for (i, &hit) in trace.iter().enumerate() {
        writeln!(out, "{},{}", i, u8::from(hit))?;
    }
    Ok(())
}
