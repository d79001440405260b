//! Downlink reliability estimators.
//!
//! The model-matched estimator works in the transformed 1-D geometry with
//! power-proportional weights, where every received power is `h·y^{−α/2}`
//! independent of the transmitter's tier. Member distances are the first K
//! points of one Poisson process (jointly, not independent marginals), and
//! external interferers are the beyond-K points thinned by the probability of
//! being busy and scheduled on the typical user's resource unit. In the
//! non-collaborative mode the typical user decodes K parallel attempts, each
//! seeing every *other* member as interference — the worst case in which all
//! member transmissions overlap in frequency; the collaborative mode combines
//! all member powers against the external field only. With shared draws the
//! collaborative outcome therefore dominates the non-collaborative one trial
//! by trial, which the tests assert without tolerance.
//!
//! The system-level estimator realizes the planar network, derives each AP's
//! busy state from the actual user loads, and applies the same two decoding
//! conventions with per-trial member gains.

use super::{
    draw_member_gains, field_tail_mean, path_loss_1d, run_counting, Collaboration, Fading, Link,
    Mode, MonteCarloError, ReliabilityEstimate, SimPlan,
};
use super::{correlated_gains, StopRule};
use crate::analysis::{busy_mix, TierGeometry, ZetaTable};
use crate::association::{associate_all_users, RealizationIndex};
use crate::config::NetworkConfig;
use crate::geometry::{realize_network, Point, Window};
use crate::numerics::RngStream;

pub use super::uplink::DEFAULT_FIELD_POINTS;

/// Inputs of the matched downlink model, derived from a network
/// configuration's load statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedDownlinkParams {
    /// Aggregate transformed density of the power-weighted association.
    pub lambda_tilde: f64,
    /// Probability that a beyond-K point interferes: busy and on the typical
    /// user's resource unit (δ · Σ_m ϑ_m (1 − p_{m,0})).
    pub thin: f64,
    pub alpha: f64,
}

impl MatchedDownlinkParams {
    /// Derives the matched parameters: power-proportional biases, tier-mixed
    /// busy probability from the fitted (or seed) load model.
    pub fn from_network(cfg: &NetworkConfig, table: &ZetaTable) -> Self {
        let dl = cfg.clone().with_power_biases();
        let geo = TierGeometry::from_network(&dl);
        Self { lambda_tilde: geo.lambda_tilde, thin: dl.delta * busy_mix(&dl, table), alpha: dl.alpha }
    }
}

/// One matched draw: per-member received powers (gain × path loss, jointly
/// distributed distances) and the external interference with the truncated
/// tail compensated in mean.
fn draw_matched_trial(
    rng: &mut RngStream,
    params: &MatchedDownlinkParams,
    cell_size: usize,
    fading: Fading,
    npts: usize,
    signals: &mut Vec<f64>,
) -> f64 {
    let rate = std::f64::consts::PI * params.lambda_tilde;
    let mut ys = Vec::with_capacity(cell_size);
    let mut y = 0.0;
    for _ in 0..cell_size {
        y += rng.exp1() / rate;
        ys.push(y);
    }
    let gains = draw_member_gains(rng, &ys, fading, params.alpha);
    signals.clear();
    for k in 0..cell_size {
        signals.push(gains[k] * path_loss_1d(ys[k], params.alpha));
    }
    // External field: beyond-K points of the same process, each kept with the
    // busy-and-scheduled probability. Tier marks collapse into `thin` because
    // transformed path loss is tier-independent.
    let mut i_ext = 0.0;
    if params.thin > 0.0 {
        for _ in 0..npts {
            y += rng.exp1() / rate;
            if rng.uniform() < params.thin {
                i_ext += rng.exp1() * path_loss_1d(y, params.alpha);
            }
        }
        i_ext += field_tail_mean(y, rate * params.thin, params.alpha);
    }
    i_ext
}

fn noncollab_outcome(signals: &[f64], i_ext: f64, theta: f64) -> bool {
    let total: f64 = signals.iter().sum();
    signals.iter().any(|&s| s >= theta * (i_ext + (total - s)))
}

fn collab_outcome(signals: &[f64], i_ext: f64, theta: f64) -> bool {
    signals.iter().sum::<f64>() >= theta * i_ext
}

/// Matched downlink estimator. Counts outages.
pub fn estimate_downlink_matched(
    params: &MatchedDownlinkParams,
    cell_size: usize,
    theta: f64,
    collaboration: Collaboration,
    fading: Fading,
    npts: usize,
    seed: u64,
    stop: StopRule,
    workers: usize,
) -> ReliabilityEstimate {
    let params = *params;
    run_counting(seed, stop, workers, move |rng| {
        let mut signals = Vec::with_capacity(cell_size);
        let i_ext = draw_matched_trial(rng, &params, cell_size, fading, npts, &mut signals);
        match collaboration {
            Collaboration::NonCollaborative => !noncollab_outcome(&signals, i_ext, theta),
            Collaboration::Collaborative => !collab_outcome(&signals, i_ext, theta),
        }
    })
}

/// Full system-level downlink estimator: power-biased association, busy
/// states from the realized user loads, external interferers thinned per
/// trial by the resource-unit probability δ.
pub fn estimate_downlink_system(
    cfg: &NetworkConfig,
    theta: f64,
    window: &Window,
    collaboration: Collaboration,
    fading: Fading,
    seed: u64,
    stop: StopRule,
    workers: usize,
) -> Result<ReliabilityEstimate, MonteCarloError> {
    let dl = cfg.clone().with_power_biases();
    dl.validate().map_err(|e| MonteCarloError::InvalidPlan(e.to_string()))?;
    let window = *window;
    let k = dl.cell_size;
    Ok(run_counting(seed, stop, workers, move |rng| {
        let (signals, i_ext) = match draw_system_trial(rng, &dl, &window, k, fading) {
            Some(draw) => draw,
            None => return true, // degenerate draw: the cell cannot even be built
        };
        match collaboration {
            Collaboration::NonCollaborative => !noncollab_outcome(&signals, i_ext, theta),
            Collaboration::Collaborative => !collab_outcome(&signals, i_ext, theta),
        }
    }))
}

/// Draws one planar network trial: member received powers at the typical user
/// and the external interference from busy, δ-scheduled access points.
fn draw_system_trial(
    rng: &mut RngStream,
    dl: &NetworkConfig,
    window: &Window,
    k: usize,
    fading: Fading,
) -> Option<(Vec<f64>, f64)> {
    let real = realize_network(dl, window, rng);
    if real.total_aps() < k {
        return None;
    }
    let index = RealizationIndex::build(&real);
    let cell = index.virtual_cell(dl, Point::ORIGIN).expect("member count checked above");
    let loads = associate_all_users(&real, dl).expect("member count checked above");
    let member_pos: Vec<Point> = cell.members.iter().map(|m| real.ap(m.tier, m.index)).collect();
    let gains = match fading {
        Fading::Independent => (0..k).map(|_| rng.exp1()).collect::<Vec<_>>(),
        Fading::DistanceCorrelated => {
            let mut g = Vec::with_capacity(k);
            correlated_gains(rng, &member_pos, dl.alpha, &mut g);
            g
        }
    };
    let signals: Vec<f64> = cell
        .members
        .iter()
        .enumerate()
        .map(|(rank, m)| dl.powers_w[m.tier] * gains[rank] * m.distance_km.powf(-dl.alpha))
        .collect();
    let mut i_ext = 0.0;
    for (tier, pts) in real.aps.iter().enumerate() {
        for (idx, p) in pts.iter().enumerate() {
            if cell.contains(tier, idx) || loads.count(tier, idx) == 0 {
                continue;
            }
            if rng.uniform() < dl.delta {
                let d = p.dist(&Point::ORIGIN);
                i_ext += dl.powers_w[tier] * rng.exp1() * d.powf(-dl.alpha);
            }
        }
    }
    Some((signals, i_ext))
}

/// Plan-driven entry point for downlink reliability.
pub fn estimate_downlink_reliability(
    cfg: &NetworkConfig,
    table: &ZetaTable,
    plan: &SimPlan,
    theta: f64,
    workers: usize,
) -> Result<ReliabilityEstimate, MonteCarloError> {
    plan.validate()?;
    if plan.link != Link::Downlink {
        return Err(MonteCarloError::InvalidPlan("plan.link must be downlink".into()));
    }
    match plan.mode {
        Mode::ModelMatched => {
            let params = MatchedDownlinkParams::from_network(cfg, table);
            Ok(estimate_downlink_matched(
                &params,
                cfg.cell_size,
                theta,
                plan.collaboration,
                plan.fading,
                DEFAULT_FIELD_POINTS,
                plan.seed,
                plan.stop,
                workers,
            ))
        }
        Mode::SystemLevel => {
            let window = Window::for_network(&cfg.clone().with_power_biases());
            estimate_downlink_system(
                cfg,
                theta,
                &window,
                plan.collaboration,
                plan.fading,
                plan.seed,
                plan.stop,
                workers,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{downlink_reliability_collab_bound, downlink_reliability_noncollab_bound};
    use crate::numerics::QuadratureSpec;

    #[test]
    fn matched_without_interferers_always_succeeds() {
        // No users anywhere: every AP idle, so the lone member never fails.
        let cfg = NetworkConfig::two_tier(0.0, 1);
        let params = MatchedDownlinkParams::from_network(&cfg, &ZetaTable::empty());
        assert_eq!(params.thin, 0.0);
        let stop = StopRule { target_events: 1, max_trials: 10_000 };
        let est = estimate_downlink_matched(
            &params,
            1,
            3.981,
            Collaboration::NonCollaborative,
            Fading::Independent,
            DEFAULT_FIELD_POINTS,
            11,
            stop,
            2,
        );
        assert_eq!(est.events, 0);
        assert_eq!(est.reliability(), 1.0);
    }

    #[test]
    fn matched_single_member_matches_closed_form() {
        // For one member the closed-form bound is exact: conditioning on the
        // nearest distance, the thinned external field has Laplace transform
        // exp(−πλ̃·thin·ℓ(θ)·y), and averaging over y ~ Exp(πλ̃) gives
        // 1/(1 + thin·ℓ(θ)).
        let cfg = NetworkConfig::two_tier(125.0, 1);
        let table = ZetaTable::empty();
        let theta = 3.981;
        let params = MatchedDownlinkParams::from_network(&cfg, &table);
        let stop = StopRule { target_events: 300, max_trials: 2_000_000 };
        let est = estimate_downlink_matched(
            &params,
            1,
            theta,
            Collaboration::NonCollaborative,
            Fading::Independent,
            DEFAULT_FIELD_POINTS,
            17,
            stop,
            2,
        );
        let want =
            downlink_reliability_noncollab_bound(1, theta, &cfg, &table, &QuadratureSpec::default())
                .unwrap();
        assert!(
            (est.reliability() - want).abs() < 4.0 * est.std_error,
            "sim {} vs closed form {want} (se {})",
            est.reliability(),
            est.std_error
        );
    }

    #[test]
    fn collaboration_dominates_trial_by_trial() {
        // Shared draws: if any single attempt clears θ·(external + intra),
        // the combined signal clears θ·external. Exact, no tolerance.
        let cfg = NetworkConfig::two_tier(125.0, 3);
        let params = MatchedDownlinkParams::from_network(&cfg, &ZetaTable::empty());
        let theta = 10.0;
        let mut noncollab_failures = 0u32;
        let mut signals = Vec::new();
        for trial in 0..20_000u64 {
            let mut rng = RngStream::new(99, trial);
            let i_ext =
                draw_matched_trial(&mut rng, &params, 3, Fading::Independent, 48, &mut signals);
            let nc = noncollab_outcome(&signals, i_ext, theta);
            let c = collab_outcome(&signals, i_ext, theta);
            assert!(c || !nc, "trial {trial}: non-collaborative success without collaborative");
            noncollab_failures += u32::from(!nc);
        }
        assert!(noncollab_failures > 0, "test exercised no failures");
    }

    #[test]
    fn system_collaboration_dominates_trial_by_trial() {
        let cfg = NetworkConfig::two_tier(30.0, 2).with_power_biases();
        let window = Window::new(0.45);
        let theta = 2.0;
        let mut failures = 0u32;
        for trial in 0..300u64 {
            let mut rng = RngStream::new(7, trial);
            let (signals, i_ext) =
                draw_system_trial(&mut rng, &cfg, &window, 2, Fading::Independent).unwrap();
            let nc = noncollab_outcome(&signals, i_ext, theta);
            let c = collab_outcome(&signals, i_ext, theta);
            assert!(c || !nc, "trial {trial}: non-collaborative success without collaborative");
            failures += u32::from(!nc);
        }
        assert!(failures > 0, "test exercised no failures");
    }

    #[test]
    fn system_without_users_always_succeeds() {
        let cfg = NetworkConfig::two_tier(0.0, 1);
        let stop = StopRule { target_events: 1, max_trials: 1_000 };
        let est = estimate_downlink_system(
            &cfg,
            3.981,
            &Window::new(0.5),
            Collaboration::NonCollaborative,
            Fading::Independent,
            5,
            stop,
            2,
        )
        .unwrap();
        assert_eq!(est.events, 0, "idle network: no interference, gain > 0 a.s.");
        assert_eq!(est.reliability(), 1.0);
    }

    #[test]
    fn collab_estimate_respects_closed_form_bound() {
        let cfg = NetworkConfig::two_tier(125.0, 2);
        let table = ZetaTable::empty();
        let theta = 1.0;
        let params = MatchedDownlinkParams::from_network(&cfg, &table);
        let stop = StopRule { target_events: 200, max_trials: 5_000_000 };
        let est = estimate_downlink_matched(
            &params,
            2,
            theta,
            Collaboration::Collaborative,
            Fading::Independent,
            DEFAULT_FIELD_POINTS,
            23,
            stop,
            2,
        );
        let bound =
            downlink_reliability_collab_bound(2, theta, &cfg, &table, &QuadratureSpec::default())
                .unwrap();
        assert!(
            est.reliability() <= bound + 4.0 * est.std_error,
            "reliability {} exceeds bound {bound} (se {})",
            est.reliability(),
            est.std_error
        );
    }

    #[test]
    fn correlated_fading_hurts_attempt_diversity() {
        // At high density the member positions nearly coincide, so the
        // correlated gains collapse to one shared gain and the best-of-K
        // selection loses its diversity: outage grows markedly.
        let cfg = NetworkConfig::two_tier(125.0, 3);
        let params = MatchedDownlinkParams::from_network(&cfg, &ZetaTable::empty());
        let theta = 1.0;
        let stop = StopRule { target_events: 1_000, max_trials: 2_000_000 };
        let run = |fading, seed| {
            estimate_downlink_matched(
                &params,
                3,
                theta,
                Collaboration::NonCollaborative,
                fading,
                DEFAULT_FIELD_POINTS,
                seed,
                stop,
                2,
            )
        };
        let indep = run(Fading::Independent, 41);
        let corr = run(Fading::DistanceCorrelated, 42);
        assert!(
            corr.estimate > indep.estimate + 4.0 * (corr.std_error + indep.std_error),
            "correlated outage {} not above independent {}",
            corr.estimate,
            indep.estimate
        );
    }

    #[test]
    fn matched_deterministic_across_workers() {
        let cfg = NetworkConfig::two_tier(125.0, 2);
        let params = MatchedDownlinkParams::from_network(&cfg, &ZetaTable::empty());
        let stop = StopRule { target_events: 50, max_trials: 200_000 };
        let run = |workers| {
            estimate_downlink_matched(
                &params,
                2,
                3.981,
                Collaboration::NonCollaborative,
                Fading::Independent,
                DEFAULT_FIELD_POINTS,
                63,
                stop,
                workers,
            )
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn dispatcher_validates_link() {
        let cfg = NetworkConfig::two_tier(50.0, 2);
        let plan = SimPlan::new(1); // defaults to uplink
        assert!(matches!(
            estimate_downlink_reliability(&cfg, &ZetaTable::empty(), &plan, 1.0, 1),
            Err(MonteCarloError::InvalidPlan(_))
        ));
    }
}
