//! Poisson point process sampling on a disc and the weighted-distance
//! transform that reduces biased multi-tier association to a one-dimensional
//! point process.
//!
//! Ranking APs by biased received power w_m‖A‖^{−α} is equivalent to ranking
//! them by the scaled distance w_m^{−1/α}‖A‖. Squaring and superposing the
//! scaled tiers yields a homogeneous 1-D process of intensity
//! π·λ̃ with λ̃ = Σ_m w_m^{2/α} λ_m, so the k-th entry's squared weighted
//! distance is Gamma(k, πλ̃) distributed — the backbone identity used by the
//! analysis formulas and the model-matched simulators.

use crate::config::NetworkConfig;
use crate::numerics::RngStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("realization holds {available} APs but {requested} were requested")]
    InsufficientPoints { requested: usize, available: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A planar point in km.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn sq_norm(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sq_dist(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Observation disc centered at the origin; a finite stand-in for the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub radius_km: f64,
}

impl Window {
    pub fn new(radius_km: f64) -> Self {
        assert!(radius_km > 0.0, "window radius must be positive");
        Self { radius_km }
    }

    /// Default window for a network: sized so the expected total AP count is
    /// at least max(5000, 50·K). Far-field truncation error of interference
    /// functionals decays like R^{2−α}, which is negligible at this size; all
    /// reliability statistics are measured at the central typical user.
    pub fn for_network(cfg: &NetworkConfig) -> Self {
        let lambda_total = cfg.total_ap_density();
        let target = 5000.0f64.max(50.0 * cfg.cell_size as f64);
        let radius = if lambda_total > 0.0 {
            (target / (std::f64::consts::PI * lambda_total)).sqrt()
        } else {
            1.0
        };
        Self { radius_km: radius }
    }

    pub fn area_km2(&self) -> f64 {
        std::f64::consts::PI * self.radius_km * self.radius_km
    }
}

/// One sampled network: AP points per tier plus user points. The typical user
/// sits at the origin and is not part of `users` (adding it there is the
/// caller's choice; the stationarity argument lets the origin stand for a
/// typical location).
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub aps: Vec<Vec<Point>>,
    pub users: Vec<Point>,
}

impl Realization {
    pub fn total_aps(&self) -> usize {
        self.aps.iter().map(Vec::len).sum()
    }

    pub fn ap(&self, tier: usize, index: usize) -> Point {
        self.aps[tier][index]
    }
}

/// One entry of the weighted-distance transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEntry {
    pub tier: usize,
    pub index: usize,
    /// Squared weighted distance w_m^{−2/α}·‖A‖².
    pub sq_weighted_dist: f64,
}

/// Samples a homogeneous Poisson point process of the given density on the
/// window: Poisson-distributed count, independent uniform placement.
pub fn sample_ppp(density: f64, window: &Window, rng: &mut RngStream) -> Vec<Point> {
    assert!(density >= 0.0, "density must be nonnegative");
    let n = rng.poisson(density * window.area_km2());
    let mut points = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let r = window.radius_km * rng.uniform().sqrt();
        let phi = 2.0 * std::f64::consts::PI * rng.uniform();
        points.push(Point { x: r * phi.cos(), y: r * phi.sin() });
    }
    points
}

/// Samples all AP tiers and the user process independently.
pub fn realize_network(cfg: &NetworkConfig, window: &Window, rng: &mut RngStream) -> Realization {
    let aps = cfg
        .densities_per_km2
        .iter()
        .map(|&lambda| sample_ppp(lambda, window, rng))
        .collect();
    let users = sample_ppp(cfg.user_density_per_km2, window, rng);
    Realization { aps, users }
}

/// Sorts every AP by weighted distance w_m^{−1/α}‖A − pos‖ from `pos`,
/// ascending; ties break by tier index, then insertion order.
pub fn weighted_entries_at(
    realization: &Realization,
    biases: &[f64],
    alpha: f64,
    pos: Point,
) -> Vec<WeightedEntry> {
    let mut entries = Vec::with_capacity(realization.total_aps());
    for (tier, points) in realization.aps.iter().enumerate() {
        // w^{−2/α} applied to squared distances.
        let scale = biases[tier].powf(-2.0 / alpha);
        for (index, p) in points.iter().enumerate() {
            entries.push(WeightedEntry { tier, index, sq_weighted_dist: scale * p.sq_dist(&pos) });
        }
    }
    entries.sort_by(|a, b| {
        a.sq_weighted_dist
            .partial_cmp(&b.sq_weighted_dist)
            .unwrap()
            .then(a.tier.cmp(&b.tier))
            .then(a.index.cmp(&b.index))
    });
    entries
}

/// Weighted-distance transform centered at the typical user (the origin).
pub fn weighted_distance_transform(
    realization: &Realization,
    biases: &[f64],
    alpha: f64,
) -> Vec<WeightedEntry> {
    weighted_entries_at(realization, biases, alpha, Point::ORIGIN)
}

/// Effective 1-D density λ̃ = Σ_m w_m^{2/α} λ_m of the transformed process.
pub fn effective_density(densities: &[f64], biases: &[f64], alpha: f64) -> f64 {
    densities
        .iter()
        .zip(biases)
        .map(|(&lambda, &w)| w.powf(2.0 / alpha) * lambda)
        .sum()
}

/// Dumps a realization as CSV with columns `kind,tier,x_km,y_km` (tier is
/// empty for users).
pub fn dump_realization_csv<W: std::io::Write>(
    realization: &Realization,
    out: &mut W,
) -> Result<(), GeometryError> {
    writeln!(out, "kind,tier,x_km,y_km")?;
    for (tier, points) in realization.aps.iter().enumerate() {
        for p in points {
            writeln!(out, "ap,{tier},{:.9e},{:.9e}", p.x, p.y)?;
        }
    }
    for p in &realization.users {
        writeln!(out, "user,,{:.9e},{:.9e}", p.x, p.y)?;
    }
    Ok(())
}
