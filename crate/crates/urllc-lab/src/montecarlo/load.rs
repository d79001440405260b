//! Empirical cell-load histograms from full network realizations.
//!
//! Each realization drops both tiers and the users in a disc window,
//! associates every user to its K-member virtual cell, and tallies per-AP
//! loads. Only APs in the window core — at least a few typical cell radii
//! away from the boundary — are counted, so edge cells with clipped user
//! populations do not bias the histogram.

use super::{build_pool, MonteCarloError};
use crate::analysis::TierGeometry;
use crate::association::associate_all_users;
use crate::config::NetworkConfig;
use crate::geometry::{realize_network, Window};
use crate::numerics::RngStream;
use rayon::prelude::*;

/// How many nominal K-th-neighbor distances to trim from the window edge.
pub const CORE_MARGIN_FACTOR: f64 = 4.0;

/// Pooled per-tier load histograms: `per_tier[m][n]` = number of observed
/// tier-m core APs carrying exactly n users.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadHistograms {
    pub per_tier: Vec<Vec<u64>>,
    pub realizations: u64,
}

impl LoadHistograms {
    pub fn samples(&self, tier: usize) -> u64 {
        self.per_tier[tier].iter().sum()
    }

    pub fn empirical_mean(&self, tier: usize) -> f64 {
        let total = self.samples(tier);
        if total == 0 {
            return 0.0;
        }
        self.per_tier[tier]
            .iter()
            .enumerate()
            .map(|(n, &c)| n as f64 * c as f64)
            .sum::<f64>()
            / total as f64
    }

    /// Total-variation distance between the tier histogram and an analytic
    /// PMF (the analytic mass beyond the histogram support is included).
    pub fn tv_distance(&self, tier: usize, pmf: impl Fn(u64) -> f64) -> f64 {
        let total = self.samples(tier).max(1) as f64;
        let mut sum = 0.0;
        let mut model_mass = 0.0;
        for (n, &c) in self.per_tier[tier].iter().enumerate() {
            let p = pmf(n as u64);
            model_mass += p;
            sum += (c as f64 / total - p).abs();
        }
        0.5 * (sum + (1.0 - model_mass).max(0.0))
    }
}

/// The core-region margin: a few times the typical K-th member distance,
/// inflated by the largest bias so the trim covers every tier.
pub fn core_margin(cfg: &NetworkConfig) -> f64 {
    let geom = TierGeometry::from_network(cfg);
    let max_bias_scale = cfg
        .biases
        .iter()
        .map(|w| w.powf(1.0 / cfg.alpha))
        .fold(0.0f64, f64::max);
    CORE_MARGIN_FACTOR
        * max_bias_scale
        * (cfg.cell_size as f64 / (std::f64::consts::PI * geom.lambda_tilde)).sqrt()
}

/// Estimates the per-tier load PMF over `realizations` independent network
/// draws in an explicit window.
pub fn estimate_load_pmf_with_window(
    cfg: &NetworkConfig,
    window: &Window,
    realizations: u64,
    seed: u64,
    workers: usize,
) -> Result<LoadHistograms, MonteCarloError> {
    if realizations < 1 {
        return Err(MonteCarloError::InsufficientPoints("need at least one realization".into()));
    }
    let margin = core_margin(cfg);
    if margin >= window.radius_km {
        return Err(MonteCarloError::InsufficientPoints(format!(
            "window radius {:.3} km does not exceed the core margin {:.3} km",
            window.radius_km, margin
        )));
    }
    let core_sq = (window.radius_km - margin).powi(2);
    let tiers = cfg.tiers();
    let pool = build_pool(workers);
    let locals: Vec<Vec<Vec<u64>>> = pool.install(|| {
        (0..realizations)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::new(seed, r);
                let mut hist = vec![Vec::new(); tiers];
                let real = realize_network(cfg, window, &mut rng);
                if real.total_aps() < cfg.cell_size {
                    return hist; // vanishingly rare for any practical window
                }
                let loads = associate_all_users(&real, cfg)
                    .expect("association cannot fail when enough APs exist");
                for m in 0..tiers {
                    for (i, ap) in real.aps[m].iter().enumerate() {
                        if ap.sq_norm() > core_sq {
                            continue;
                        }
                        let n = loads.count(m, i) as usize;
                        if n >= hist[m].len() {
                            hist[m].resize(n + 1, 0);
                        }
                        hist[m][n] += 1;
                    }
                }
                hist
            })
            .collect()
    });
    let mut per_tier = vec![Vec::new(); tiers];
    for local in locals {
        for m in 0..tiers {
            if local[m].len() > per_tier[m].len() {
                per_tier[m].resize(local[m].len(), 0);
            }
            for (n, &c) in local[m].iter().enumerate() {
                per_tier[m][n] += c;
            }
        }
    }
    Ok(LoadHistograms { per_tier, realizations })
}

/// As [`estimate_load_pmf_with_window`] with the default window for the
/// configured densities.
pub fn estimate_load_pmf(
    cfg: &NetworkConfig,
    realizations: u64,
    seed: u64,
    workers: usize,
) -> Result<LoadHistograms, MonteCarloError> {
    let window = Window::for_network(cfg);
    estimate_load_pmf_with_window(cfg, &window, realizations, seed, workers)
}
