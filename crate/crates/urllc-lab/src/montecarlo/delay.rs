//! End-to-end delay estimator.
//!
//! A delivered packet pays one slot per attempt of each over-the-air stage
//! (uplink: channel access then transmission; downlink: transmission only)
//! plus an exponential backhaul relay. Attempt counts are geometric with the
//! per-stage success probabilities; the backhaul stage depends on the
//! cooperation mode: a collaborative cell relays once over a shared link,
//! while a non-collaborative uplink relays from every access point that
//! decoded (the fastest of a Binomial(K, q)-sized set of exponential relays,
//! conditioned on at least one decode) and a non-collaborative downlink takes
//! the fastest of K independent relays. Each trial yields the delay and its
//! comparison against a budget, so the mean and the exceedance probability
//! come from one set of shared draws.

use rayon::prelude::*;

use super::{
    build_pool, Collaboration, Link, MonteCarloError, ReliabilityEstimate, SimPlan, StopRule,
    TerminatedBy, CHUNK_TRIALS,
};
use crate::analysis::DelayModel;
use crate::numerics::RngStream;
use serde::{Deserialize, Serialize};

/// Joint output of a delay run: sample mean and budget-exceedance estimate
/// from the same trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    pub mean_ms: f64,
    pub mean_std_error: f64,
    /// Probability estimate of `delay > budget_ms` (the counted event).
    pub exceed: ReliabilityEstimate,
    pub budget_ms: f64,
}

/// Number of attempts until first success for a per-attempt success
/// probability `p` (inverse-CDF draw; mean 1/p).
fn sample_attempts(p: f64, rng: &mut RngStream) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    let u = rng.uniform();
    1.0 + ((1.0 - u).ln() / (1.0 - p).ln()).floor()
}

fn check_prob(name: &str, p: f64) -> Result<(), MonteCarloError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MonteCarloError::InvalidPlan(format!(
            "{name} must lie in (0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Estimates the delay distribution of the plan's link and cooperation mode.
/// Stops once `stop.target_events` budget exceedances have been seen (or at
/// the trial cap).
pub fn estimate_delay(
    model: &DelayModel,
    cell_size: usize,
    plan: &SimPlan,
    budget_ms: f64,
    workers: usize,
) -> Result<DelayEstimate, MonteCarloError> {
    plan.validate()?;
    if cell_size < 1 {
        return Err(MonteCarloError::InvalidPlan("cell_size must be ≥ 1".into()));
    }
    if !(budget_ms > 0.0) || !budget_ms.is_finite() {
        return Err(MonteCarloError::InvalidPlan("budget_ms must be positive".into()));
    }
    let slot = model.params.slot_ms;
    let beta = model.params.backhaul_rate_per_ms;
    if !(slot > 0.0) || !(beta > 0.0) {
        return Err(MonteCarloError::InvalidPlan(
            "slot_ms and backhaul_rate_per_ms must be positive".into(),
        ));
    }
    match plan.link {
        Link::Uplink => {
            check_prob("rho_ul_k", model.rho_ul_k)?;
            check_prob("eta_ul_k", model.eta_ul_k)?;
            if plan.collaboration == Collaboration::NonCollaborative {
                check_prob("ap_success", model.ap_success)?;
            }
        }
        Link::Downlink => check_prob("eta_dl_k", model.eta_dl_k)?,
    }

    let model = model.clone();
    let link = plan.link;
    let collaboration = plan.collaboration;
    let trial = move |rng: &mut RngStream| -> (f64, bool) {
        let delay = match link {
            Link::Uplink => uplink_delay_trial(&model, cell_size, collaboration, rng),
            Link::Downlink => downlink_delay_trial(&model, cell_size, collaboration, rng),
        };
        (delay, delay > budget_ms)
    };

    Ok(run_delay_impl(plan.seed, plan.stop, workers, budget_ms, trial))
}

/// Estimates the round-trip delay D^ul + D^dl, both legs drawn in one trial
/// under the given cooperation mode. The plan's link field is ignored.
pub fn estimate_total_delay(
    model: &DelayModel,
    cell_size: usize,
    plan: &SimPlan,
    budget_ms: f64,
    workers: usize,
) -> Result<DelayEstimate, MonteCarloError> {
    plan.validate()?;
    if cell_size < 1 {
        return Err(MonteCarloError::InvalidPlan("cell_size must be ≥ 1".into()));
    }
    if !(budget_ms > 0.0) || !budget_ms.is_finite() {
        return Err(MonteCarloError::InvalidPlan("budget_ms must be positive".into()));
    }
    if !(model.params.slot_ms > 0.0) || !(model.params.backhaul_rate_per_ms > 0.0) {
        return Err(MonteCarloError::InvalidPlan(
            "slot_ms and backhaul_rate_per_ms must be positive".into(),
        ));
    }
    check_prob("rho_ul_k", model.rho_ul_k)?;
    check_prob("eta_ul_k", model.eta_ul_k)?;
    check_prob("eta_dl_k", model.eta_dl_k)?;
    if plan.collaboration == Collaboration::NonCollaborative {
        check_prob("ap_success", model.ap_success)?;
    }
    let model = model.clone();
    let collaboration = plan.collaboration;
    let trial = move |rng: &mut RngStream| -> (f64, bool) {
        let delay = uplink_delay_trial(&model, cell_size, collaboration, rng)
            + downlink_delay_trial(&model, cell_size, collaboration, rng);
        (delay, delay > budget_ms)
    };
    Ok(run_delay_impl(plan.seed, plan.stop, workers, budget_ms, trial))
}

fn uplink_delay_trial(
    model: &DelayModel,
    cell_size: usize,
    collaboration: Collaboration,
    rng: &mut RngStream,
) -> f64 {
    let slot = model.params.slot_ms;
    let beta = model.params.backhaul_rate_per_ms;
    let slots = sample_attempts(model.rho_ul_k, rng) + sample_attempts(model.eta_ul_k, rng);
    let backhaul = match collaboration {
        Collaboration::Collaborative => rng.exp1() / beta,
        Collaboration::NonCollaborative => {
            // Fastest relay among the APs that decoded; delivery implies at
            // least one did.
            let mut decoded = 0u32;
            while decoded == 0 {
                decoded =
                    (0..cell_size).filter(|_| rng.uniform() < model.ap_success).count() as u32;
            }
            rng.exp1() / (beta * f64::from(decoded))
        }
    };
    slots * slot + backhaul
}

fn downlink_delay_trial(
    model: &DelayModel,
    cell_size: usize,
    collaboration: Collaboration,
    rng: &mut RngStream,
) -> f64 {
    let slot = model.params.slot_ms;
    let beta = model.params.backhaul_rate_per_ms;
    let slots = sample_attempts(model.eta_dl_k, rng);
    let backhaul = match collaboration {
        // The payload must reach every member before joint transmission:
        // slowest of K relays.
        Collaboration::Collaborative => {
            (0..cell_size).map(|_| rng.exp1()).fold(0.0, f64::max) / beta
        }
        Collaboration::NonCollaborative => rng.exp1() / (beta * cell_size as f64),
    };
    slots * slot + backhaul
}

/// Chunked deterministic driver for (value, exceed) trials; mirrors the
/// counting driver's prefix-scan stopping so results are worker-independent.
fn run_delay_impl<F>(
    seed: u64,
    stop: StopRule,
    workers: usize,
    budget_ms: f64,
    trial: F,
) -> DelayEstimate
where
    F: Fn(&mut RngStream) -> (f64, bool) + Sync,
{
    let pool = build_pool(workers);
    let mut trials = 0u64;
    let mut events = 0u64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let terminated_by = 'outer: loop {
        let this_chunk = CHUNK_TRIALS.min(stop.max_trials - trials);
        let outcomes: Vec<(f64, bool)> = pool.install(|| {
            (trials..trials + this_chunk)
                .into_par_iter()
                .map(|i| {
                    let mut rng = RngStream::new(seed, i);
                    trial(&mut rng)
                })
                .collect()
        });
        for &(value, hit) in &outcomes {
            trials += 1;
            sum += value;
            sumsq += value * value;
            if hit {
                events += 1;
                if events == stop.target_events {
                    break 'outer TerminatedBy::Events;
                }
            }
        }
        if trials >= stop.max_trials {
            break TerminatedBy::TrialCap;
        }
    };
    let n = trials as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    let p = events as f64 / n;
    DelayEstimate {
        mean_ms: mean,
        mean_std_error: (var / n).sqrt(),
        exceed: ReliabilityEstimate {
            estimate: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
            trials,
            events,
            terminated_by,
        },
        budget_ms,
    }
}
