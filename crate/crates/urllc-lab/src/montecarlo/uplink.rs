//! Uplink reliability estimators.
//!
//! The model-matched estimators draw the tractable model exactly: member
//! distances with independent Gamma(k, πλ̃) marginals, collision gates with
//! the closed-form non-collision probability, and interferers as a plane PPP
//! of density μ_a = active_ratio·λ̃ with no exclusion zone. In the default
//! non-collaborative path the fading and field randomness are integrated out
//! analytically per member (their conditional success probability given the
//! member distance is exact), so the estimator is unbiased for the closed-form
//! product with zero truncation error; an explicit-field variant draws every
//! gain individually for cross-validation and for correlated fading.
//!
//! The system-level estimator realizes the whole network: every user
//! associates (unit biases), picks one RRU per member, and transmits one copy
//! per member at power 1/K (or a single full-power copy); the typical user
//! succeeds if any member decodes it collision-free at SIR ≥ θ.

use super::{
    correlated_gains, draw_member_gains, field_tail_mean, path_loss_1d, run_counting,
    Collaboration, CopyModel, Fading, Link, Mode, MonteCarloError, ReliabilityEstimate, SimPlan,
    StopRule,
};
use crate::analysis::{LinkParams, TierGeometry, ZetaTable};
use crate::association::{select_rrus, RealizationIndex};
use crate::config::NetworkConfig;
use crate::geometry::{realize_network, Point, Window};
use crate::numerics::{sample_gamma, sinc, RngStream};

/// Default number of explicitly sampled interference-field points.
pub const DEFAULT_FIELD_POINTS: usize = 64;

/// How the collision gate enters the collaborative matched model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateModel {
    /// One gate for the whole cell: with probability ρ^ul the combined
    /// signal is scheduled cleanly, otherwise the trial fails (default; its
    /// success probability is dominated by the closed-form upper bound).
    CellGate,
    /// Independent per-member gates; only gated members contribute signal.
    PerMemberFlags,
}

/// Draws one truncated interference field: `npts` nearest points of a 1-D
/// PPP with intensity `field_rate`, exp(1) marks, plus the beyond-truncation
/// mean.
fn draw_field(rng: &mut RngStream, field_rate: f64, npts: usize, alpha: f64) -> f64 {
    if field_rate <= 0.0 {
        return 0.0;
    }
    let mut y = 0.0;
    let mut acc = 0.0;
    for _ in 0..npts {
        y += rng.exp1() / field_rate;
        acc += rng.exp1() * path_loss_1d(y, alpha);
    }
    acc + field_tail_mean(y, field_rate, alpha)
}

/// Non-collaborative matched estimator with the fading and field randomness
/// integrated out per member (exact conditional success probabilities).
/// Counts outages.
pub fn estimate_uplink_matched_noncollab(
    link: &LinkParams,
    cell_size: usize,
    lambda_tilde: f64,
    theta: f64,
    seed: u64,
    stop: StopRule,
    workers: usize,
) -> ReliabilityEstimate {
    let z = 2.0 / link.alpha;
    let rate = std::f64::consts::PI * lambda_tilde;
    let coef = std::f64::consts::PI * link.active_ratio * lambda_tilde * theta.powf(z) / sinc(z);
    let link = *link;
    run_counting(seed, stop, workers, move |rng| {
        for k in 1..=cell_size {
            let y = sample_gamma(k as f64, rate, rng);
            let p = link.rho_ul * (-coef * y).exp();
            if rng.uniform() < p {
                return false;
            }
        }
        true
    })
}

/// Non-collaborative matched estimator with explicit gains, gates, and
/// per-member interference fields. Supports correlated fading (member
/// positions take the transformed radius √y_k with uniform angles).
pub fn estimate_uplink_matched_noncollab_explicit(
    link: &LinkParams,
    cell_size: usize,
    lambda_tilde: f64,
    theta: f64,
    fading: Fading,
    npts: usize,
    seed: u64,
    stop: StopRule,
    workers: usize,
) -> ReliabilityEstimate {
    let rate = std::f64::consts::PI * lambda_tilde;
    let field_rate = std::f64::consts::PI * link.active_ratio * lambda_tilde;
    let link = *link;
    run_counting(seed, stop, workers, move |rng| {
        let mut ys = Vec::with_capacity(cell_size);
        for k in 1..=cell_size {
            ys.push(sample_gamma(k as f64, rate, rng));
        }
        let gains = draw_member_gains(rng, &ys, fading, link.alpha);
        for k in 0..cell_size {
            let gate = rng.uniform() < link.rho_ul;
            let interference = draw_field(rng, field_rate, npts, link.alpha);
            if gate && gains[k] * path_loss_1d(ys[k], link.alpha) >= theta * interference {
                return false;
            }
        }
        true
    })
}

/// Collaborative matched estimator: joint member distances (one transformed
/// process), combined signal, one shared interference field.
pub fn estimate_uplink_matched_collab(
    link: &LinkParams,
    cell_size: usize,
    lambda_tilde: f64,
    theta: f64,
    gate_model: GateModel,
    fading: Fading,
    npts: usize,
    seed: u64,
    stop: StopRule,
    workers: usize,
) -> ReliabilityEstimate {
    let rate = std::f64::consts::PI * lambda_tilde;
    let field_rate = std::f64::consts::PI * link.active_ratio * lambda_tilde;
    let link = *link;
    run_counting(seed, stop, workers, move |rng| {
        let mut ys = Vec::with_capacity(cell_size);
        let mut y = 0.0;
        for _ in 0..cell_size {
            y += rng.exp1() / rate;
            ys.push(y);
        }
        let gains = draw_member_gains(rng, &ys, fading, link.alpha);
        let interference = draw_field(rng, field_rate, npts, link.alpha);
        match gate_model {
            GateModel::CellGate => {
                let gate = rng.uniform() < link.rho_ul;
                let signal: f64 = (0..cell_size)
                    .map(|k| gains[k] * path_loss_1d(ys[k], link.alpha))
                    .sum();
                !(gate && signal >= theta * interference)
            }
            GateModel::PerMemberFlags => {
                let mut any = false;
                let mut signal = 0.0;
                for k in 0..cell_size {
                    if rng.uniform() < link.rho_ul {
                        any = true;
                        signal += gains[k] * path_loss_1d(ys[k], link.alpha);
                    }
                }
                !(any && signal >= theta * interference)
            }
        }
    })
}

/// Full system-level uplink estimator. The typical user sits at the origin of
/// an explicit window; all users associate with unit biases and pick RRUs.
pub fn estimate_uplink_system(
    cfg: &NetworkConfig,
    theta: f64,
    window: &Window,
    copy_model: CopyModel,
    collaboration: Collaboration,
    fading: Fading,
    seed: u64,
    stop: StopRule,
    workers: usize,
) -> Result<ReliabilityEstimate, MonteCarloError> {
    let ul = cfg.clone().with_unit_biases();
    ul.validate().map_err(|e| MonteCarloError::InvalidPlan(e.to_string()))?;
    let window = *window;
    let k = ul.cell_size;
    Ok(run_counting(seed, stop, workers, move |rng| {
        let real = realize_network(&ul, &window, rng);
        if real.total_aps() < k {
            return true; // degenerate draw: the cell cannot even be built
        }
        let index = RealizationIndex::build(&real);
        let typical = index
            .virtual_cell(&ul, Point::ORIGIN)
            .expect("member count checked above");
        let mut cells = Vec::with_capacity(real.users.len() + 1);
        cells.push(typical);
        for &user in &real.users {
            cells.push(index.virtual_cell(&ul, user).expect("member count checked above"));
        }
        let assignment = select_rrus(cells.len(), &ul, rng);
        let active_rank: Option<Vec<usize>> = match copy_model {
            CopyModel::PerMember => None,
            CopyModel::SingleCopy => {
                Some((0..cells.len()).map(|_| rng.below(k as u32) as usize).collect())
            }
        };
        let tx_power = match copy_model {
            CopyModel::PerMember => 1.0 / k as f64,
            CopyModel::SingleCopy => 1.0,
        };
        let member_positions: Vec<Point> =
            cells[0].members.iter().map(|m| real.ap(m.tier, m.index)).collect();
        let signal_gains = match fading {
            Fading::Independent => (0..k).map(|_| rng.exp1()).collect::<Vec<_>>(),
            Fading::DistanceCorrelated => {
                let mut gains = Vec::with_capacity(k);
                correlated_gains(rng, &member_positions, ul.alpha, &mut gains);
                gains
            }
        };
        let mut combined_signal = 0.0;
        let mut combined_interference = 0.0;
        let mut any_clear = false;
        let mut success = false;
        for rank in 0..k {
            if let Some(ranks) = &active_rank {
                if ranks[0] != rank {
                    continue;
                }
            }
            let member = &cells[0].members[rank];
            let rru = assignment.pick(0, rank);
            let ap_pos = member_positions[rank];
            // Interference at this member: every other user's active copies on
            // the same RRU, with fresh fading per (user, copy, receiver). A
            // copy aimed at this very AP on this RRU is a collision.
            let mut interference = 0.0;
            let mut collided = false;
            for (u, cell) in cells.iter().enumerate().skip(1) {
                let user_pos = real.users[u - 1];
                for (jrank, other) in cell.members.iter().enumerate() {
                    if let Some(ranks) = &active_rank {
                        if ranks[u] != jrank {
                            continue;
                        }
                    }
                    if assignment.pick(u, jrank) != rru {
                        continue;
                    }
                    if other.tier == member.tier && other.index == member.index {
                        collided = true;
                    }
                    let d = user_pos.dist(&ap_pos);
                    interference += tx_power * rng.exp1() * d.powf(-ul.alpha);
                }
            }
            if collided {
                continue; // the AP cannot decode a collided RRU
            }
            let signal = tx_power * signal_gains[rank] * member.distance_km.powf(-ul.alpha);
            any_clear = true;
            combined_signal += signal;
            combined_interference += interference;
            if signal >= theta * interference {
                success = true;
            }
        }
        match collaboration {
            Collaboration::NonCollaborative => !success,
            // Joint reception over the collision-free members: powers add on
            // both the signal and the interference side.
            Collaboration::Collaborative => {
                !(any_clear && combined_signal >= theta * combined_interference)
            }
        }
    }))
}

/// Plan-driven entry point: dispatches on mode, collaboration, and fading,
/// deriving the matched-model parameters (non-collision probability and
/// active-interferer density) from the configuration's load model.
pub fn estimate_uplink_reliability(
    cfg: &NetworkConfig,
    table: &ZetaTable,
    plan: &SimPlan,
    theta: f64,
    workers: usize,
) -> Result<ReliabilityEstimate, MonteCarloError> {
    plan.validate()?;
    if plan.link != Link::Uplink {
        return Err(MonteCarloError::InvalidPlan("plan.link must be uplink".into()));
    }
    match plan.mode {
        Mode::ModelMatched => {
            let link = LinkParams::standard(cfg, table);
            let lambda_tilde = TierGeometry::from_network(&cfg.clone().with_unit_biases())
                .lambda_tilde;
            Ok(match (plan.collaboration, plan.fading) {
                (Collaboration::NonCollaborative, Fading::Independent) => {
                    estimate_uplink_matched_noncollab(
                        &link,
                        cfg.cell_size,
                        lambda_tilde,
                        theta,
                        plan.seed,
                        plan.stop,
                        workers,
                    )
                }
                (Collaboration::NonCollaborative, Fading::DistanceCorrelated) => {
                    estimate_uplink_matched_noncollab_explicit(
                        &link,
                        cfg.cell_size,
                        lambda_tilde,
                        theta,
                        plan.fading,
                        DEFAULT_FIELD_POINTS,
                        plan.seed,
                        plan.stop,
                        workers,
                    )
                }
                (Collaboration::Collaborative, fading) => estimate_uplink_matched_collab(
                    &link,
                    cfg.cell_size,
                    lambda_tilde,
                    theta,
                    GateModel::CellGate,
                    fading,
                    DEFAULT_FIELD_POINTS,
                    plan.seed,
                    plan.stop,
                    workers,
                ),
            })
        }
        Mode::SystemLevel => {
            let window = Window::for_network(&cfg.clone().with_unit_biases());
            estimate_uplink_system(
                cfg,
                theta,
                &window,
                CopyModel::PerMember,
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
    use crate::analysis::uplink_reliability_noncollab;

    const FAST_STOP: StopRule = StopRule { target_events: 200, max_trials: 2_000_000 };

    #[test]
    fn zero_threshold_reduces_to_collision_only() {
        // With θ → 0 the SIR test always passes; reliability is ρ^ul_K.
        let link = LinkParams { rho_ul: 0.7, active_ratio: 0.2, alpha: 4.0 };
        let stop = StopRule { target_events: 400, max_trials: 2_000_000 };
        let est = estimate_uplink_matched_noncollab(&link, 3, 251.0, 0.0, 21, stop, 2);
        let want = 1.0 - 0.3f64.powi(3);
        assert!(
            (est.reliability() - want).abs() < 4.0 * est.std_error,
            "{} vs ρ_K = {want} (se {})",
            est.reliability(),
            est.std_error
        );
    }

    #[test]
    fn lone_user_without_interferers_always_succeeds() {
        let link = LinkParams { rho_ul: 1.0, active_ratio: 0.0, alpha: 4.0 };
        let stop = StopRule { target_events: 1, max_trials: 20_000 };
        let est = estimate_uplink_matched_noncollab(&link, 1, 251.0, 3.981, 3, stop, 1);
        assert_eq!(est.events, 0);
        assert_eq!(est.reliability(), 1.0);
        assert_eq!(est.terminated_by, super::super::TerminatedBy::TrialCap);
    }

    #[test]
    fn conditional_estimator_matches_product_form() {
        let cfg = NetworkConfig::two_tier(125.0, 4);
        let table = ZetaTable::empty();
        let link = LinkParams::standard(&cfg, &table);
        let theta = 0.420603;
        let est = estimate_uplink_matched_noncollab(&link, 4, 251.0, theta, 77, FAST_STOP, 2);
        let want = uplink_reliability_noncollab(4, theta, &link);
        assert!(
            (est.reliability() - want).abs() < 4.0 * est.std_error,
            "sim {} vs formula {want} (se {})",
            est.reliability(),
            est.std_error
        );
    }

    #[test]
    fn explicit_field_agrees_with_conditional() {
        let link = LinkParams { rho_ul: 0.74, active_ratio: 0.04, alpha: 4.0 };
        let theta = 3.981;
        let stop = StopRule { target_events: 500, max_trials: 2_000_000 };
        let a = estimate_uplink_matched_noncollab(&link, 2, 251.0, theta, 5, stop, 2);
        let b = estimate_uplink_matched_noncollab_explicit(
            &link,
            2,
            251.0,
            theta,
            Fading::Independent,
            DEFAULT_FIELD_POINTS,
            6,
            stop,
            2,
        );
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(
            (a.estimate - b.estimate).abs() < 4.0 * se,
            "conditional {} vs explicit {} (se {se})",
            a.estimate,
            b.estimate
        );
    }

    #[test]
    fn collab_estimate_respects_closed_form_bound() {
        let cfg = NetworkConfig::two_tier(125.0, 3);
        let table = ZetaTable::empty();
        let link = LinkParams::standard(&cfg, &table);
        let theta = 1.0;
        let est = estimate_uplink_matched_collab(
            &link,
            3,
            251.0,
            theta,
            GateModel::CellGate,
            Fading::Independent,
            DEFAULT_FIELD_POINTS,
            13,
            FAST_STOP,
            2,
        );
        let bound = crate::analysis::uplink_reliability_collab_bound(3, theta, &link);
        assert!(
            est.reliability() <= bound + 4.0 * est.std_error,
            "reliability {} exceeds bound {bound} (se {})",
            est.reliability(),
            est.std_error
        );
    }

    #[test]
    fn system_level_lone_user_always_succeeds() {
        let cfg = NetworkConfig::two_tier(0.0, 1);
        let stop = StopRule { target_events: 1, max_trials: 1_500 };
        let est = estimate_uplink_system(
            &cfg,
            3.981,
            &Window::new(0.5),
            CopyModel::PerMember,
            Collaboration::NonCollaborative,
            Fading::Independent,
            9,
            stop,
            2,
        )
        .unwrap();
        assert_eq!(est.events, 0, "no other users: no collisions, no interference");
        assert_eq!(est.reliability(), 1.0);
    }

    #[test]
    fn system_level_deterministic_across_workers() {
        let cfg = NetworkConfig::two_tier(50.0, 2);
        let stop = StopRule { target_events: 40, max_trials: 3_000 };
        let run = |workers| {
            estimate_uplink_system(
                &cfg,
                1.0,
                &Window::new(0.45),
                CopyModel::PerMember,
                Collaboration::NonCollaborative,
                Fading::Independent,
                31,
                stop,
                workers,
            )
            .unwrap()
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn dispatcher_validates_link() {
        let cfg = NetworkConfig::two_tier(50.0, 2);
        let table = ZetaTable::empty();
        let mut plan = SimPlan::new(1);
        plan.link = Link::Downlink;
        assert!(matches!(
            estimate_uplink_reliability(&cfg, &table, &plan, 1.0, 1),
            Err(MonteCarloError::InvalidPlan(_))
        ));
    }
}
