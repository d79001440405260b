//! Closed-form and semi-analytical expressions: load distribution, void
//! probability, interference Laplace transforms, tail bound, non-collision and
//! communication reliabilities (with limits and bounds), and delay means.
//!
//! A note on the truncated-sum transform: the direct single-integral form for
//! the Laplace transform of the K-nearest truncated shot sum S_K is not
//! exposed here — its integrand grows without bound and the integral diverges
//! under quadrature. E[e^{−s·S_K}] is instead provided by the Monte Carlo
//! estimator in [`crate::montecarlo`].

use crate::config::{DelayParams, NetworkConfig};
use crate::numerics::{
    ell, integrate, integrate_semi_infinite, sinc, NumericsError, QuadratureSpec,
};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("degenerate reliability: {0}")]
    DegenerateReliability(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("zeta table parse error: {0}")]
    ZetaTableParse(String),
}

/// Effective densities of the weighted-distance transform.
///
/// λ̃ = Σ_m w_m^{2/α} λ_m; λ̃_m = λ̃ / w_m^{2/α}; ϑ_m = w_m^{2/α} λ_m / λ̃ is
/// the probability that any given virtual-cell member belongs to tier m.
#[derive(Debug, Clone, PartialEq)]
pub struct TierGeometry {
    pub lambda_tilde: f64,
    pub lambda_tilde_m: Vec<f64>,
    pub vartheta: Vec<f64>,
}

impl TierGeometry {
    pub fn new(densities: &[f64], biases: &[f64], alpha: f64) -> Self {
        let terms: Vec<f64> = densities
            .iter()
            .zip(biases)
            .map(|(&l, &w)| w.powf(2.0 / alpha) * l)
            .collect();
        let lambda_tilde: f64 = terms.iter().sum();
        let lambda_tilde_m = biases
            .iter()
            .map(|&w| lambda_tilde / w.powf(2.0 / alpha))
            .collect();
        let vartheta = terms.iter().map(|&t| t / lambda_tilde).collect();
        Self { lambda_tilde, lambda_tilde_m, vartheta }
    }

    pub fn from_network(cfg: &NetworkConfig) -> Self {
        Self::new(&cfg.densities_per_km2, &cfg.biases, cfg.alpha)
    }
}

/// Seed value of the load-model shape parameter (exact for the Gamma
/// cell-area model at K = 1).
pub const ZETA_SEED: f64 = 3.5;

/// One fitted shape-parameter record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaEntry {
    pub tier: usize,
    pub cell_size: usize,
    pub mu_over_lambda_tilde_m: f64,
    pub zeta: f64,
    pub samples: u64,
    pub tv_distance: f64,
}

/// Fitted shape parameters keyed by (tier, K, μ/λ̃_m); misses fall back to the
/// seed value 3.5.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZetaTable {
    pub entries: Vec<ZetaEntry>,
}

impl ZetaTable {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: ZetaEntry) {
        self.entries
            .retain(|e| !(e.tier == entry.tier && e.cell_size == entry.cell_size
                && relative_close(e.mu_over_lambda_tilde_m, entry.mu_over_lambda_tilde_m)));
        self.entries.push(entry);
    }

    pub fn lookup(&self, tier: usize, cell_size: usize, ratio: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| {
                e.tier == tier
                    && e.cell_size == cell_size
                    && relative_close(e.mu_over_lambda_tilde_m, ratio)
            })
            .map(|e| e.zeta)
    }

    /// Fitted value if present, otherwise the 3.5 seed.
    pub fn zeta_or_seed(&self, tier: usize, cell_size: usize, ratio: f64) -> f64 {
        self.lookup(tier, cell_size, ratio).unwrap_or(ZETA_SEED)
    }

    pub fn to_csv<W: std::io::Write>(&self, out: &mut W) -> Result<(), AnalysisError> {
        writeln!(out, "tier,K,mu_over_lambda_tilde,zeta,samples,tv_distance")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{:.9e},{:.9e},{},{:.9e}",
                e.tier, e.cell_size, e.mu_over_lambda_tilde_m, e.zeta, e.samples, e.tv_distance
            )?;
        }
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self, AnalysisError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(AnalysisError::ZetaTableParse(format!(
                    "line {}: expected 6 columns, got {}",
                    i + 1,
                    f.len()
                )));
            }
            let parse_f = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| AnalysisError::ZetaTableParse(format!("line {}: {e}", i + 1)))
            };
            let parse_u = |s: &str| {
                s.parse::<u64>()
                    .map_err(|e| AnalysisError::ZetaTableParse(format!("line {}: {e}", i + 1)))
            };
            entries.push(ZetaEntry {
                tier: parse_u(f[0])? as usize,
                cell_size: parse_u(f[1])? as usize,
                mu_over_lambda_tilde_m: parse_f(f[2])?,
                zeta: parse_f(f[3])?,
                samples: parse_u(f[4])?,
                tv_distance: parse_f(f[5])?,
            });
        }
        Ok(Self { entries })
    }
}

fn relative_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-300)
}

/// Negative-binomial shape ratio a = Kμ/(ζ·λ̃_m).
pub fn nb_scale(cell_size: usize, mu: f64, lambda_tilde_m: f64, zeta: f64) -> f64 {
    cell_size as f64 * mu / (zeta * lambda_tilde_m)
}

/// Core load-model PMF value: P[N = n] for the Gamma-mixed Poisson
/// (negative-binomial) cell-load law with shape ζ and scale a.
pub fn load_pmf_value(n: u64, a: f64, zeta: f64) -> f64 {
    if a == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (ln_gamma(nf + zeta) - ln_gamma(nf + 1.0) - ln_gamma(zeta) + nf * a.ln()
        - (nf + zeta) * (1.0 + a).ln())
    .exp()
}

/// P[N_m = n] for a tier-m AP under the config's biases, using the fitted (or
/// seed) shape parameter.
pub fn load_pmf(tier: usize, n: u64, cfg: &NetworkConfig, table: &ZetaTable) -> f64 {
    let geom = TierGeometry::from_network(cfg);
    let ratio = cfg.user_density_per_km2 / geom.lambda_tilde_m[tier];
    let zeta = table.zeta_or_seed(tier, cfg.cell_size, ratio);
    let a = nb_scale(cfg.cell_size, cfg.user_density_per_km2, geom.lambda_tilde_m[tier], zeta);
    load_pmf_value(n, a, zeta)
}

/// Tier-m void probability P[N_m = 0] = (1 + a)^{−ζ}.
pub fn void_prob(tier: usize, cfg: &NetworkConfig, table: &ZetaTable) -> f64 {
    load_pmf(tier, 0, cfg, table)
}

/// Mean tier-m load Kμ/λ̃_m (independent of ζ).
pub fn mean_load(tier: usize, cfg: &NetworkConfig) -> f64 {
    let geom = TierGeometry::from_network(cfg);
    cfg.cell_size as f64 * cfg.user_density_per_km2 / geom.lambda_tilde_m[tier]
}

/// Activity mixture Σ_m ϑ_m (1 − p_{m,0}): the probability a virtual-cell slot
/// of the transformed process points at a busy AP.
pub fn busy_mix(cfg: &NetworkConfig, table: &ZetaTable) -> f64 {
    let geom = TierGeometry::from_network(cfg);
    geom.vartheta
        .iter()
        .enumerate()
        .map(|(m, &v)| v * (1.0 - void_prob(m, cfg, table)))
        .sum()
}

/// Laplace transform of the beyond-K shot sum S_{−K} = Σ_{j>K} h_j Y_j^{−α/2}:
///
/// E[e^{−s S_{−K}}] = ∫₀^∞ Gamma(K, πλ̃)(y) · exp(−πλ̃·y·ℓ(s·y^{−α/2}, 2/α)) dy.
///
/// Evaluated with the exponent rewritten as
/// y·(1 + ℓ(s y^{−α/2}, 2/α)) = y + s^{2/α}/sinc(2/α) − ∫₀¹ y·s/(s + t^{α/2} y^{α/2}) dt,
/// which is algebraically identical but keeps every factor bounded for small y.
pub fn laplace_s_minus_k(
    s: f64,
    cell_size: usize,
    lambda_tilde: f64,
    alpha: f64,
    quad: &QuadratureSpec,
) -> Result<f64, AnalysisError> {
    assert!(s >= 0.0, "laplace transform argument must be nonnegative");
    if s == 0.0 {
        return Ok(1.0);
    }
    let z = 2.0 / alpha;
    let k = cell_size as f64;
    let rate = std::f64::consts::PI * lambda_tilde;
    let const_term = s.powf(z) / sinc(z);
    let inner_spec = QuadratureSpec { rel_tol: 1e-9, abs_tol: 1e-13, max_subdivisions: 40 };
    let mut inner_failed = false;
    let value = integrate_semi_infinite(
        |y: f64| {
            if y <= 0.0 {
                return if cell_size == 1 { rate * (-rate * const_term).exp() } else { 0.0 };
            }
            let ya = y.powf(alpha / 2.0);
            let tail = match integrate(|t: f64| y * s / (s + t.powf(1.0 / z) * ya), 0.0, 1.0, &inner_spec)
            {
                Ok(v) => v,
                Err(_) => {
                    inner_failed = true;
                    0.0
                }
            };
            let exponent = k * rate.ln() - ln_gamma(k) + (k - 1.0) * y.ln()
                - rate * (y + const_term - tail);
            exponent.exp()
        },
        quad,
    )?;
    if inner_failed {
        return Err(AnalysisError::Numerics(NumericsError::QuadratureNonconvergence {
            achieved: f64::NAN,
            requested: inner_spec.rel_tol,
        }));
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Scaled closed form of the beyond-K transform at s = φ·Y_K^{α/2}:
/// [1 + ℓ(φ, 2/α)]^{−K}.
pub fn laplace_scaled_s_minus_k(
    phi: f64,
    cell_size: usize,
    alpha: f64,
    quad: &QuadratureSpec,
) -> Result<f64, AnalysisError> {
    assert!(phi >= 0.0);
    let l = ell(phi, 2.0 / alpha, quad)?;
    Ok((1.0 + l).powi(-(cell_size as i32)))
}

/// E[exp(−s·Y_k^{α/2})] for Y_k ~ Gamma(k, πλ̃): the building block of the
/// tail bound.
fn laplace_gamma_power(
    s: f64,
    k: usize,
    lambda_tilde: f64,
    alpha: f64,
    quad: &QuadratureSpec,
) -> Result<f64, AnalysisError> {
    if s == 0.0 {
        return Ok(1.0);
    }
    let rate = std::f64::consts::PI * lambda_tilde;
    let kf = k as f64;
    let value = integrate_semi_infinite(
        |y: f64| {
            if y <= 0.0 {
                return if k == 1 { rate } else { 0.0 };
            }
            (kf * rate.ln() - ln_gamma(kf) + (kf - 1.0) * y.ln() - rate * y
                - s * y.powf(alpha / 2.0))
            .exp()
        },
        quad,
    )?;
    Ok(value.clamp(0.0, 1.0))
}

/// Upper bound on the tail P[S_K ≥ y] of the K-nearest truncated shot sum:
///
/// 1 − Π_{k=1}^{K} [1 − E exp(−z_k·y·Y_k^{α/2})],  z_k = 2k/(K(K+1)).
pub fn tail_bound_s_k(
    y: f64,
    cell_size: usize,
    lambda_tilde: f64,
    alpha: f64,
    quad: &QuadratureSpec,
) -> Result<f64, AnalysisError> {
    assert!(y >= 0.0);
    let kk = cell_size as f64;
    let mut product = 1.0;
    for k in 1..=cell_size {
        let zk = 2.0 * k as f64 / (kk * (kk + 1.0));
        product *= 1.0 - laplace_gamma_power(zk * y, k, lambda_tilde, alpha, quad)?;
    }
    Ok((1.0 - product).clamp(0.0, 1.0))
}

/// Closed form of the per-tier non-collision kernel
/// Σ_{n≥1} p_n (1−δ)^{n−1} = [(1+aδ)^{−ζ} − (1+a)^{−ζ}]/(1−δ),
/// via the probability generating function of the load law.
pub fn noncollision_kernel(a: f64, zeta: f64, delta: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if delta > 1.0 - 1e-12 {
        // δ → 1 limit: only single-occupancy cells avoid collisions.
        return zeta * a * (1.0 + a).powf(-zeta - 1.0);
    }
    ((1.0 + a * delta).powf(-zeta) - (1.0 + a).powf(-zeta)) / (1.0 - delta)
}

/// Size-biased variant of the kernel: conditions on the probed slot belonging
/// to a user (load seen from a user's perspective), giving (1+aδ)^{−ζ−1}.
pub fn noncollision_kernel_size_biased(a: f64, zeta: f64, delta: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let _ = delta;
    (1.0 + a * delta).powf(-zeta - 1.0)
}

/// Uplink association context: unit biases, regardless of how the config's
/// bias vector is set (uplink cells are nearest-AP cells).
fn uplink_view(cfg: &NetworkConfig) -> (NetworkConfig, TierGeometry) {
    let ul = cfg.clone().with_unit_biases();
    let geom = TierGeometry::from_network(&ul);
    (ul, geom)
}

/// Per-AP uplink non-collision reliability ρ^ul: the probability that a busy
/// AP decodes its scheduled user without an RRU collision, mixed over tiers
/// with uplink (unit-bias) association probabilities ϑ_m = λ_m/Σλ.
pub fn uplink_noncollision_ap(cfg: &NetworkConfig, table: &ZetaTable) -> f64 {
    let (ul, geom) = uplink_view(cfg);
    geom.vartheta
        .iter()
        .enumerate()
        .map(|(m, &v)| {
            let ratio = ul.user_density_per_km2 / geom.lambda_tilde_m[m];
            let zeta = table.zeta_or_seed(m, ul.cell_size, ratio);
            let a = nb_scale(ul.cell_size, ul.user_density_per_km2, geom.lambda_tilde_m[m], zeta);
            v * noncollision_kernel(a, zeta, ul.delta)
        })
        .sum()
}

/// Size-biased per-AP non-collision reliability (user-perspective load).
pub fn uplink_noncollision_ap_size_biased(cfg: &NetworkConfig, table: &ZetaTable) -> f64 {
    let (ul, geom) = uplink_view(cfg);
    geom.vartheta
        .iter()
        .enumerate()
        .map(|(m, &v)| {
            let ratio = ul.user_density_per_km2 / geom.lambda_tilde_m[m];
            let zeta = table.zeta_or_seed(m, ul.cell_size, ratio);
            let a = nb_scale(ul.cell_size, ul.user_density_per_km2, geom.lambda_tilde_m[m], zeta);
            v * noncollision_kernel_size_biased(a, zeta, ul.delta)
        })
        .sum()
}

/// User-level uplink non-collision reliability ρ^ul_K = 1 − (1 − ρ^ul)^K.
pub fn uplink_noncollision_user(rho_ul: f64, cell_size: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&rho_ul));
    1.0 - (1.0 - rho_ul).powi(cell_size as i32)
}

/// Interference/collision parameters entering the uplink reliability product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Per-attempt collision-free probability ρ^ul.
    pub rho_ul: f64,
    /// Density of concurrently active co-channel interferers relative to the
    /// effective AP density λ̃. In the standard load model this is δ·(1−p₀)
    /// with p₀ the (tier-mixed) void probability.
    pub active_ratio: f64,
    /// Path-loss exponent.
    pub alpha: f64,
}

impl LinkParams {
    /// Standard load-model parameters: ρ^ul from the probability generating
    /// function closed form, interferer density δ(1−p₀)λ̃ with the void
    /// probability mixed over tiers (the per-tier values are logged when they
    /// differ).
    pub fn standard(cfg: &NetworkConfig, table: &ZetaTable) -> Self {
        let (ul, geom) = uplink_view(cfg);
        let voids: Vec<f64> = (0..ul.tiers()).map(|m| void_prob(m, &ul, table)).collect();
        if voids.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-12) {
            log::debug!("per-tier void probabilities differ ({voids:?}); using the ϑ-mixture");
        }
        let p0: f64 = geom
            .vartheta
            .iter()
            .zip(&voids)
            .map(|(&v, &p)| v * p)
            .sum();
        Self {
            rho_ul: uplink_noncollision_ap(cfg, table),
            active_ratio: cfg.delta * (1.0 - p0),
            alpha: cfg.alpha,
        }
    }

    /// System-consistent parameters: non-collision probability from the
    /// size-biased (user-perspective) load, and interferer density equal to
    /// the actual density of transmitted copies, K·μ·δ. These track full
    /// system-level simulations much more closely than the standard model,
    /// whose per-AP-perspective ρ^ul vanishes at light load.
    pub fn system_consistent(cfg: &NetworkConfig, table: &ZetaTable) -> Self {
        let (ul, geom) = uplink_view(cfg);
        let _ = ul;
        Self {
            rho_ul: uplink_noncollision_ap_size_biased(cfg, table),
            active_ratio: cfg.cell_size as f64 * cfg.user_density_per_km2 * cfg.delta
                / geom.lambda_tilde,
            alpha: cfg.alpha,
        }
    }
}

/// Non-collaborative uplink communication reliability:
/// 1 − Π_{k=1}^{K} { 1 − ρ^ul · c^{−k} },  c = 1 + θ^{2/α}·active_ratio/sinc(2/α).
pub fn uplink_reliability_noncollab(cell_size: usize, theta: f64, link: &LinkParams) -> f64 {
    let z = 2.0 / link.alpha;
    let c = 1.0 + theta.powf(z) * link.active_ratio / sinc(z);
    let mut product = 1.0;
    for k in 1..=cell_size as i32 {
        product *= 1.0 - link.rho_ul * c.powi(-k);
    }
    1.0 - product
}

/// Large-K limit of the non-collaborative uplink reliability:
/// 1 − exp[−ρ^ul·sinc(2/α)/(δ·θ^{2/α})].
pub fn uplink_reliability_limit(theta: f64, delta: f64, rho_ul: f64, alpha: f64) -> f64 {
    let z = 2.0 / alpha;
    1.0 - (-rho_ul * sinc(z) / (delta * theta.powf(z))).exp()
}

/// Upper bound on the collaborative uplink reliability:
/// ρ^ul · (1 − Π_{k=1}^{K} [1 − (1 + active_ratio·(z_k θ)^{2/α}/sinc(2/α))^{−k}]),
/// z_k = 2k/(K(K+1)).
pub fn uplink_reliability_collab_bound(cell_size: usize, theta: f64, link: &LinkParams) -> f64 {
    let z = 2.0 / link.alpha;
    let kk = cell_size as f64;
    let mut product = 1.0;
    for k in 1..=cell_size {
        let zk = 2.0 * k as f64 / (kk * (kk + 1.0));
        let term = (1.0 + link.active_ratio * (zk * theta).powf(z) / sinc(z)).powi(-(k as i32));
        product *= 1.0 - term;
    }
    link.rho_ul * (1.0 - product)
}

/// Upper bound on the non-collaborative downlink reliability:
/// 1 − Π_{k=1}^{K} { 1 − [1 + δ·ℓ(θ, 2/α)·Σ_m ϑ_m (1 − p_{m,0})]^{−k} },
/// with power-proportional biases (downlink association).
pub fn downlink_reliability_noncollab_bound(
    cell_size: usize,
    theta: f64,
    cfg: &NetworkConfig,
    table: &ZetaTable,
    quad: &QuadratureSpec,
) -> Result<f64, AnalysisError> {
    let dl = cfg.clone().with_power_biases().with_cell_size(cell_size);
    let act = busy_mix(&dl, table);
    let base = 1.0 + dl.delta * ell(theta, 2.0 / dl.alpha, quad)? * act;
    let mut product = 1.0;
    for k in 1..=cell_size as i32 {
        product *= 1.0 - base.powi(-k);
    }
    Ok((1.0 - product).clamp(0.0, 1.0))
}

/// Large-K limit of the downlink reliability:
/// 1 − exp[−sinc(2/α)/(δ·θ^{2/α})]; independent of all densities.
pub fn downlink_reliability_limit(theta: f64, delta: f64, alpha: f64) -> f64 {
    let z = 2.0 / alpha;
    1.0 - (-sinc(z) / (delta * theta.powf(z))).exp()
}

/// Upper bound on the collaborative downlink reliability:
/// 1 − {1 − B^{−K}}^K with B = 1 + δ·ℓ(θ/K^{α/2+1}, 2/α)·Σ_m ϑ_m (1 − p_{m,0}).
pub fn downlink_reliability_collab_bound(
    cell_size: usize,
    theta: f64,
    cfg: &NetworkConfig,
    table: &ZetaTable,
    quad: &QuadratureSpec,
) -> Result<f64, AnalysisError> {
    let dl = cfg.clone().with_power_biases().with_cell_size(cell_size);
    let act = busy_mix(&dl, table);
    let kf = cell_size as f64;
    let scaled_theta = theta / kf.powf(dl.alpha / 2.0 + 1.0);
    let b = 1.0 + dl.delta * ell(scaled_theta, 2.0 / dl.alpha, quad)? * act;
    let inner = 1.0 - b.powi(-(cell_size as i32));
    Ok((1.0 - inner.powi(cell_size as i32)).clamp(0.0, 1.0))
}

/// Inputs of the delay means: timing parameters plus the success
/// probabilities of each delay stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub params: DelayParams,
    /// User-level uplink non-collision reliability ρ^ul_K (channel access).
    pub rho_ul_k: f64,
    /// Uplink communication reliability η^ul_K (transmission).
    pub eta_ul_k: f64,
    /// Downlink communication reliability η^dl_K (transmission).
    pub eta_dl_k: f64,
    /// Per-AP uplink decode probability q feeding the backhaul stage.
    pub ap_success: f64,
}

impl DelayModel {
    /// Default per-AP decode probability: ρ^ul·c^{−k} averaged over the K
    /// member ranks (override `ap_success` to use a different convention).
    pub fn default_ap_success(cell_size: usize, theta: f64, link: &LinkParams) -> f64 {
        let z = 2.0 / link.alpha;
        let c = 1.0 + theta.powf(z) * link.active_ratio / sinc(z);
        (1..=cell_size as i32)
            .map(|k| link.rho_ul * c.powi(-k))
            .sum::<f64>()
            / cell_size as f64
    }
}

/// Harmonic number H_K = Σ_{k=1}^{K} 1/k (mean of the max of K unit
/// exponentials).
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// Mean uplink delay: slot·(1/ρ^ul_K + 1/η^ul_K) plus the backhaul stage.
///
/// Collaborative cells relay over a single backhaul: mean 1/β. Non-collaborative
/// cells relay from every AP that decoded; conditioning on at least one decode
/// (the message is lost otherwise, which the reliability terms account for),
/// the mean of the fastest relay is
/// ∫₀^∞ [(1−q+q·e^{−βx})^K − (1−q)^K] dx / (1 − (1−q)^K).
pub fn mean_uplink_delay(
    delay: &DelayModel,
    cell_size: usize,
    collaborative: bool,
    quad: &QuadratureSpec,
) -> Result<f64, AnalysisError> {
    if !(delay.rho_ul_k > 0.0) || !(delay.eta_ul_k > 0.0) {
        return Err(AnalysisError::DegenerateReliability(
            "uplink access/transmission success probabilities must be positive".into(),
        ));
    }
    let slot = delay.params.slot_ms;
    let beta = delay.params.backhaul_rate_per_ms;
    let access = slot * (1.0 / delay.rho_ul_k + 1.0 / delay.eta_ul_k);
    let backhaul = if collaborative {
        1.0 / beta
    } else {
        let q = delay.ap_success;
        if !(q > 0.0) {
            return Err(AnalysisError::DegenerateReliability(
                "per-AP success probability must be positive for non-collaborative backhaul".into(),
            ));
        }
        let k = cell_size as f64;
        let floor = (1.0 - q).powf(k);
        integrate_semi_infinite(
            |x: f64| (1.0 - q + q * (-beta * x).exp()).powf(k) - floor,
            quad,
        )? / (1.0 - floor)
    };
    Ok(access + backhaul)
}

/// Mean downlink delay: slot/η^dl_K plus backhaul — collaborative cells wait
/// for all K relays (mean H_K/β), non-collaborative for the fastest (1/(βK)).
pub fn mean_downlink_delay(
    delay: &DelayModel,
    cell_size: usize,
    collaborative: bool,
) -> Result<f64, AnalysisError> {
    if !(delay.eta_dl_k > 0.0) {
        return Err(AnalysisError::DegenerateReliability(
            "downlink transmission success probability must be positive".into(),
        ));
    }
    let beta = delay.params.backhaul_rate_per_ms;
    let backhaul = if collaborative {
        harmonic(cell_size) / beta
    } else {
        1.0 / (beta * cell_size as f64)
    };
    Ok(delay.params.slot_ms / delay.eta_dl_k + backhaul)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const QUAD: QuadratureSpec =
        QuadratureSpec { rel_tol: 1e-10, abs_tol: 1e-14, max_subdivisions: 60 };

    fn ref_cfg(mu: f64, k: usize) -> NetworkConfig {
        NetworkConfig::two_tier(mu, k)
    }

    #[test]
    fn tier_geometry_consistency() {
        for biases in [vec![1.0, 1.0], vec![20.0, 5.0]] {
            let geom = TierGeometry::new(&[1.0, 250.0], &biases, 4.0);
            let sum: f64 = geom.vartheta.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "ϑ must sum to 1");
            for m in 0..2 {
                let back = biases[m].powf(0.5) * geom.lambda_tilde_m[m];
                assert!((back - geom.lambda_tilde).abs() / geom.lambda_tilde < 1e-12);
            }
        }
    }

    #[test]
    fn load_pmf_normalizes_and_has_exact_mean() {
        let table = ZetaTable::empty();
        for (mu, k) in [(50.0, 1), (125.0, 3), (250.0, 5)] {
            let cfg = ref_cfg(mu, k);
            for tier in 0..2 {
                let want_mean = mean_load(tier, &cfg);
                let mut total = 0.0;
                let mut mean = 0.0;
                for n in 0..20_000u64 {
                    let p = load_pmf(tier, n, &cfg, &table);
                    total += p;
                    mean += n as f64 * p;
                    if p < 1e-18 && n as f64 > 10.0 * want_mean {
                        break;
                    }
                }
                assert!((total - 1.0).abs() < 1e-10, "Σp = {total}");
                assert!((mean - want_mean).abs() < 1e-8, "mean {mean} vs {want_mean}");
            }
        }
    }

    #[test]
    fn void_probability_reference_value() {
        // K=1, ζ=3.5, μ/λ̃_m = 1 → (1 + 1/3.5)^{−3.5} ≈ 0.41494.
        let v = load_pmf_value(0, 1.0 / 3.5, 3.5);
        assert!((v - 0.41494).abs() < 1e-5, "p₀ = {v}");
        let cfg = ref_cfg(251.0, 1); // μ = λ̃_m makes the ratio 1
        let table = ZetaTable::empty();
        assert!((void_prob(0, &cfg, &table) - v).abs() < 1e-12);
    }

    #[test]
    fn void_probability_monotone_in_k_and_mu() {
        let table = ZetaTable::empty();
        let mut prev = 1.0;
        for k in 1..=8 {
            let v = void_prob(1, &ref_cfg(100.0, k), &table);
            assert!(v < prev, "void must decrease in K");
            prev = v;
        }
        assert_eq!(void_prob(0, &ref_cfg(0.0, 3), &table), 1.0, "no users → all void");
    }

    #[test]
    fn laplace_beyond_k_reference_values() {
        // Frozen independent quadrature oracle values at λ̃ = 1, α = 4.
        let cases = [
            (1, 0.1, 4.201820e-01),
            (1, 1.0, 2.464975e-02),
            (1, 10.0, 1.099661e-06),
            (2, 0.1, 5.743577e-01),
            (2, 1.0, 5.221898e-02),
            (2, 10.0, 4.261023e-06),
            (3, 0.1, 6.780016e-01),
            (3, 1.0, 8.770950e-02),
            (3, 10.0, 1.250261e-05),
        ];
        for (k, s, want) in cases {
            let got = laplace_s_minus_k(s, k, 1.0, 4.0, &QUAD).unwrap();
            assert!(
                (got - want).abs() / want < 1e-5,
                "K={k} s={s}: {got:.6e} vs {want:.6e}"
            );
        }
        assert_eq!(laplace_s_minus_k(0.0, 2, 1.0, 4.0, &QUAD).unwrap(), 1.0);
    }

    #[test]
    fn laplace_scaled_closed_form() {
        let one = laplace_scaled_s_minus_k(1.0, 1, 4.0, &QUAD).unwrap();
        let want = 1.0 / (1.0 + std::f64::consts::FRAC_PI_4);
        assert!((one - want).abs() < 1e-9, "{one} vs {want}");
        let three = laplace_scaled_s_minus_k(1.0, 3, 4.0, &QUAD).unwrap();
        assert!((three - want.powi(3)).abs() < 1e-9);
        assert!((three - 0.17570930014143168).abs() < 1e-9);
        assert_eq!(laplace_scaled_s_minus_k(0.0, 4, 4.0, &QUAD).unwrap(), 1.0);
    }

    #[test]
    fn tail_bound_basics() {
        assert!((tail_bound_s_k(0.0, 3, 1.0, 4.0, &QUAD).unwrap() - 1.0).abs() < 1e-12);
        // Nonincreasing in y.
        let mut prev = 1.0;
        for y in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let b = tail_bound_s_k(y, 2, 1.0, 4.0, &QUAD).unwrap();
            assert!(b <= prev + 1e-12, "bound must not increase: {b} after {prev}");
            prev = b;
        }
        // K = 1 reduces to the single Gamma-power Laplace transform.
        let direct = laplace_gamma_power(2.0, 1, 1.0, 4.0, &QUAD).unwrap();
        let via_bound = tail_bound_s_k(2.0, 1, 1.0, 4.0, &QUAD).unwrap();
        assert!((via_bound - direct).abs() < 1e-10);
    }

    #[test]
    fn noncollision_ap_closed_form_vs_brute_sum() {
        let table = ZetaTable::empty();
        for (mu, k, delta) in [(125.0, 4, 0.05), (50.0, 2, 0.25), (250.0, 1, 0.5)] {
            let mut cfg = ref_cfg(mu, k);
            cfg.delta = delta;
            let closed = uplink_noncollision_ap(&cfg, &table);
            let geom = TierGeometry::from_network(&cfg);
            let mut brute = 0.0;
            for m in 0..2 {
                let zeta = ZETA_SEED;
                let a = nb_scale(k, mu, geom.lambda_tilde_m[m], zeta);
                let mut s = 0.0;
                for n in 1..=100_000u64 {
                    s += load_pmf_value(n, a, zeta) * (1.0 - delta).powi(n as i32 - 1);
                }
                brute += geom.vartheta[m] * s;
            }
            assert!((closed - brute).abs() < 1e-10, "closed {closed} vs brute {brute}");
        }
    }

    #[test]
    fn noncollision_ap_limits() {
        let table = ZetaTable::empty();
        assert_eq!(uplink_noncollision_ap(&ref_cfg(0.0, 3), &table), 0.0, "no users");
        // δ → 0⁺: only occupancy matters.
        let mut cfg = ref_cfg(125.0, 2);
        cfg.delta = 1e-9;
        let got = uplink_noncollision_ap(&cfg, &table);
        let want = busy_mix(&cfg.clone().with_unit_biases(), &table);
        assert!((got - want).abs() < 1e-6, "{got} vs occupancy-only {want}");
    }

    #[test]
    fn noncollision_user_identity() {
        assert!((uplink_noncollision_user(0.9, 3) - 0.999).abs() < 1e-12);
        assert_eq!(uplink_noncollision_user(0.0, 7), 0.0);
        assert_eq!(uplink_noncollision_user(0.35, 1), 0.35);
    }

    #[test]
    fn uplink_noncollab_reference_value() {
        // K=1, δ=0.05, θ=3.981, α=4, p₀=0.2, ρ^ul=0.95 → 0.8442.
        let link = LinkParams { rho_ul: 0.95, active_ratio: 0.05 * 0.8, alpha: 4.0 };
        let got = uplink_reliability_noncollab(1, 3.981, &link);
        assert!((got - 0.8442).abs() < 1e-4, "η = {got}");
        assert_eq!(
            uplink_reliability_noncollab(3, 1.0, &LinkParams { rho_ul: 0.0, active_ratio: 0.05, alpha: 4.0 }),
            0.0
        );
    }

    #[test]
    fn uplink_limit_reference_values() {
        let a = uplink_reliability_limit(3.981, 0.5, 0.9, 4.0);
        assert!((a - 0.436910).abs() < 1e-5, "limit = {a}");
        assert!((a - 0.4370).abs() < 1.5e-4);
        let b = uplink_reliability_limit(3.981, 0.1, 0.95, 4.0);
        assert!((b - 0.9517).abs() < 1e-4, "limit = {b}");
        assert_eq!(uplink_reliability_limit(1.0, 0.1, 0.0, 4.0), 0.0);
    }

    #[test]
    fn limits_match_large_k_products() {
        // Finite-K product at K = 200 with the void probability at its
        // large-K limit (0) vs the closed-form limits, at the small-θ
        // operating point where the exponential approximation is sharp.
        let theta = 0.420603;
        let delta = 0.05;
        let rho = 0.95;
        let fin = uplink_reliability_noncollab(
            200,
            theta,
            &LinkParams { rho_ul: rho, active_ratio: delta, alpha: 4.0 },
        );
        let lim = uplink_reliability_limit(theta, delta, rho, 4.0);
        assert!((fin - lim).abs() < 1e-3, "uplink finite {fin} vs limit {lim}");

        let fin_dl = uplink_reliability_noncollab(
            200,
            theta,
            &LinkParams { rho_ul: 1.0, active_ratio: delta, alpha: 4.0 },
        );
        let lim_dl = downlink_reliability_limit(theta, delta, 4.0);
        assert!((fin_dl - lim_dl).abs() < 1e-3, "downlink finite {fin_dl} vs limit {lim_dl}");
    }

    #[test]
    fn collab_bound_k1_reduces_to_noncollab_form() {
        // At K = 1 the weight z_1 = 1 and both expressions collapse to ρ/c
        // with c = 1 + active_ratio·θ^{2/α}/sinc(2/α).
        let link = LinkParams { rho_ul: 0.8, active_ratio: 0.04, alpha: 4.0 };
        let theta: f64 = 2.0;
        let z = 2.0 / link.alpha;
        let c = 1.0 + link.active_ratio * theta.powf(z) / sinc(z);
        let bound = uplink_reliability_collab_bound(1, theta, &link);
        let noncollab = uplink_reliability_noncollab(1, theta, &link);
        assert!((bound - link.rho_ul / c).abs() < 1e-12);
        assert!((bound - noncollab).abs() < 1e-12);
        assert_eq!(
            uplink_reliability_collab_bound(3, 1.0, &LinkParams { rho_ul: 0.0, ..link }),
            0.0
        );
    }

    #[test]
    fn downlink_limit_reference_value() {
        let v = downlink_reliability_limit(3.981, 0.05, 4.0);
        assert!((v - 0.99830).abs() < 1e-5, "limit = {v}");
        // Density independence: the formula takes no densities at all; the
        // caller-facing invariant is bit-identical output under density change.
        let w = downlink_reliability_limit(3.981, 0.05, 4.0);
        assert_eq!(v.to_bits(), w.to_bits());
    }

    #[test]
    fn downlink_noncollab_bound_edges() {
        let table = ZetaTable::empty();
        let mut cfg = ref_cfg(125.0, 3);
        cfg.delta = 1e-300; // δ → 0: no interference survives the thinning
        let v = downlink_reliability_noncollab_bound(3, 1.0, &cfg, &table, &QUAD).unwrap();
        assert!((v - 1.0).abs() < 1e-9);

        let cfg = ref_cfg(125.0, 3);
        let mut prev = 0.0;
        for k in 1..=5 {
            let v = downlink_reliability_noncollab_bound(k, 1.0, &cfg, &table, &QUAD).unwrap();
            assert!(v >= prev - 1e-12, "bound must be nondecreasing in K");
            prev = v;
        }
    }

    #[test]
    fn downlink_collab_bound_edges() {
        let table = ZetaTable::empty();
        let cfg = ref_cfg(125.0, 3);
        let v = downlink_reliability_collab_bound(3, 1e-12, &cfg, &table, &QUAD).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "θ → 0 gives 1, got {v}");
        let mut prev = 1.0;
        for theta in [0.1, 0.5, 1.0, 2.0, 4.0, 16.0] {
            let v = downlink_reliability_collab_bound(3, theta, &cfg, &table, &QUAD).unwrap();
            assert!(v <= prev + 1e-12, "bound must be nonincreasing in θ");
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    fn delay_model(rho: f64, eta_ul: f64, eta_dl: f64, q: f64) -> DelayModel {
        DelayModel {
            params: DelayParams { backhaul_rate_per_ms: 5.0, slot_ms: 0.05 },
            rho_ul_k: rho,
            eta_ul_k: eta_ul,
            eta_dl_k: eta_dl,
            ap_success: q,
        }
    }

    #[test]
    fn uplink_delay_reference_values() {
        // q = 1: backhaul = 1/(βK) = 0.04 ms at β = 5, K = 5.
        let dm = delay_model(1.0, 1.0, 1.0, 1.0);
        let v = mean_uplink_delay(&dm, 5, false, &QUAD).unwrap();
        assert!((v - (0.05 + 0.05 + 0.04)).abs() < 1e-8, "total {v}");
        // Access term 1/0.999 slots.
        let dm = delay_model(0.999, 1.0, 1.0, 1.0);
        let v = mean_uplink_delay(&dm, 1, true, &QUAD).unwrap();
        let access = 0.05 / 0.999;
        assert!((v - (access + 0.05 + 0.2)).abs() < 1e-9);
        // Conditional backhaul mean, q=0.9, K=2, β=5: (0.036+0.081)/0.99.
        let dm = delay_model(1.0, 1.0, 1.0, 0.9);
        let v = mean_uplink_delay(&dm, 2, false, &QUAD).unwrap();
        let backhaul = v - 0.1;
        assert!((backhaul - 0.117 / 0.99).abs() < 1e-8, "backhaul {backhaul}");
    }

    #[test]
    fn uplink_backhaul_matches_binomial_sum_oracle() {
        let beta = 5.0;
        for (q, k) in [(0.3, 3usize), (0.7, 4), (0.95, 5), (0.5, 1)] {
            let dm = delay_model(1.0, 1.0, 1.0, q);
            let got = mean_uplink_delay(&dm, k, false, &QUAD).unwrap() - 0.1;
            // Oracle: E[min of J exponentials | J ≥ 1], J ~ Binomial(k, q):
            // Σ_j C(k,j)(1−q)^{k−j} q^j/(βj) / (1−(1−q)^k).
            let mut num = 0.0;
            for j in 1..=k {
                let binom = (ln_gamma(k as f64 + 1.0)
                    - ln_gamma(j as f64 + 1.0)
                    - ln_gamma((k - j) as f64 + 1.0))
                .exp();
                num += binom * (1.0 - q).powi((k - j) as i32) * q.powi(j as i32)
                    / (beta * j as f64);
            }
            let want = num / (1.0 - (1.0 - q).powi(k as i32));
            assert!((got - want).abs() < 1e-9, "q={q} K={k}: {got} vs {want}");
        }
    }

    #[test]
    fn uplink_backhaul_continuous_at_full_success() {
        let dm = delay_model(1.0, 1.0, 1.0, 1.0 - 1e-9);
        let v = mean_uplink_delay(&dm, 4, false, &QUAD).unwrap() - 0.1;
        assert!((v - 1.0 / (5.0 * 4.0)).abs() < 1e-6, "q→1 backhaul {v}");
    }

    #[test]
    fn downlink_delay_reference_values() {
        let dm = delay_model(1.0, 1.0, 1.0, 1.0);
        // K = 1: both branches 1/β.
        let a = mean_downlink_delay(&dm, 1, true).unwrap();
        let b = mean_downlink_delay(&dm, 1, false).unwrap();
        assert!((a - b).abs() < 1e-12);
        // K = 5 collaborative: H_5/5 = 0.456667 ms; non-collaborative 0.04 ms.
        let c = mean_downlink_delay(&dm, 5, true).unwrap() - 0.05;
        assert!((c - 0.456667).abs() < 1e-6, "collab backhaul {c}");
        let hk = harmonic(5);
        assert!((hk - 2.283333333333333).abs() < 1e-9);
        let d = mean_downlink_delay(&dm, 5, false).unwrap() - 0.05;
        assert!((d - 0.04).abs() < 1e-12);
    }

    #[test]
    fn degenerate_reliability_errors() {
        let dm = delay_model(0.0, 1.0, 1.0, 1.0);
        assert!(mean_uplink_delay(&dm, 2, true, &QUAD).is_err());
        let dm = delay_model(1.0, 1.0, 0.0, 1.0);
        assert!(mean_downlink_delay(&dm, 2, true).is_err());
        let dm = delay_model(1.0, 1.0, 1.0, 0.0);
        assert!(mean_uplink_delay(&dm, 2, false, &QUAD).is_err());
    }

    #[test]
    fn zeta_table_round_trip_and_lookup() {
        let mut table = ZetaTable::empty();
        table.insert(ZetaEntry {
            tier: 1,
            cell_size: 4,
            mu_over_lambda_tilde_m: 0.498,
            zeta: 14.03,
            samples: 75_000,
            tv_distance: 0.0022,
        });
        table.insert(ZetaEntry {
            tier: 0,
            cell_size: 1,
            mu_over_lambda_tilde_m: 0.2,
            zeta: 3.47,
            samples: 50_000,
            tv_distance: 0.004,
        });
        assert_eq!(table.lookup(1, 4, 0.498), Some(14.03));
        assert_eq!(table.lookup(1, 4, 0.499), None, "ratio mismatch must miss");
        assert_eq!(table.zeta_or_seed(0, 2, 0.2), ZETA_SEED);
        let mut buf = Vec::new();
        table.to_csv(&mut buf).unwrap();
        let back = ZetaTable::from_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.entries.len(), 2);
        assert_eq!(back.lookup(1, 4, 0.498), Some(14.03));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn user_noncollision_is_any_of_k_independent_aps(rho in 0.0f64..1.0, k in 1usize..10) {
            // Inclusion–exclusion over independent per-AP events.
            let direct = uplink_noncollision_user(rho, k);
            let complement = 1.0 - (1.0 - rho).powi(k as i32);
            prop_assert!((direct - complement).abs() < 1e-15);
        }

        #[test]
        fn uplink_noncollab_monotone(theta in 0.05f64..20.0, ratio in 0.001f64..0.5, rho in 0.05f64..1.0) {
            let link = LinkParams { rho_ul: rho, active_ratio: ratio, alpha: 4.0 };
            let mut prev = 0.0;
            for k in 1..=6 {
                let v = uplink_reliability_noncollab(k, theta, &link);
                prop_assert!(v >= prev - 1e-12, "nondecreasing in K");
                prev = v;
            }
            let hi = uplink_reliability_noncollab(3, theta * 1.5, &link);
            prop_assert!(hi <= uplink_reliability_noncollab(3, theta, &link) + 1e-12);
            let denser = LinkParams { active_ratio: ratio * 1.5, ..link };
            prop_assert!(
                uplink_reliability_noncollab(3, theta, &denser)
                    <= uplink_reliability_noncollab(3, theta, &link) + 1e-12
            );
        }

        #[test]
        fn diminishing_returns_ratio(theta in 0.1f64..5.0, ratio in 0.005f64..0.3) {
            // The outage ratio (1−η_K)/(1−η_{K−1}) = 1 − ρ·c^{−K} increases
            // strictly in K and approaches 1 once K ≫ 1/ln c. Outages are
            // built as products directly — 1 − η underflows for small c.
            let rho = 0.9f64;
            let c = 1.0 + ratio * theta.sqrt() / sinc(0.5);
            let outage = |k: usize| (1..=k as i32).map(|j| 1.0 - rho * c.powi(-j)).product::<f64>();
            let outage_ratio = |k: usize| outage(k) / outage(k - 1);
            prop_assert!(outage_ratio(40) > outage_ratio(2));
            let k_star = ((100.0 * rho).ln() / c.ln()).ceil() as usize + 1;
            prop_assert!(outage_ratio(k_star) > 0.99, "ratio at K={k_star} too small");
        }
    }
}
