//! Virtual-cell construction, per-AP load accounting, and the RRU
//! selection/collision model.
//!
//! Every user associates with its K biased-nearest APs simultaneously (its
//! *virtual cell*) and picks one radio resource unit (RRU) uniformly at random
//! per member AP. Two users that picked the same RRU at a shared AP collide
//! there; a member decodes only if its owner's pick is unique at that AP.

use crate::config::NetworkConfig;
use crate::geometry::{Point, Realization};
use crate::numerics::RngStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssociationError {
    #[error("virtual cell of size {requested} requested but only {available} APs available")]
    InsufficientPoints { requested: usize, available: usize },
}

/// One member AP of a virtual cell, in association order (rank 0 = best).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMember {
    pub tier: usize,
    pub index: usize,
    /// Euclidean distance from the owner in km.
    pub distance_km: f64,
    /// Squared weighted distance w^{−2/α}‖A‖² used for the ranking.
    pub sq_weighted_dist: f64,
}

/// Ordered K serving APs of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualCell {
    pub members: Vec<CellMember>,
}

impl VirtualCell {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, tier: usize, index: usize) -> bool {
        self.members.iter().any(|m| m.tier == tier && m.index == index)
    }
}

/// Per-AP association counts and void flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadMap {
    /// counts[tier][index] = number of users whose virtual cell contains the AP.
    pub counts: Vec<Vec<u32>>,
}

impl LoadMap {
    pub fn zeros(realization: &Realization) -> Self {
        Self { counts: realization.aps.iter().map(|t| vec![0u32; t.len()]).collect() }
    }

    pub fn count(&self, tier: usize, index: usize) -> u32 {
        self.counts[tier][index]
    }

    /// An AP is void when no user associates with it; void APs transmit
    /// nothing and are thinned out of downlink interference.
    pub fn is_void(&self, tier: usize, index: usize) -> bool {
        self.counts[tier][index] == 0
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| u64::from(c)).sum()
    }
}

/// Uniform-grid spatial index over one tier's points for exact K-nearest
/// queries via ring expansion.
pub struct GridIndex {
    cell: f64,
    nx: i64,
    ny: i64,
    min_x: f64,
    min_y: f64,
    buckets: Vec<Vec<u32>>,
    points: Vec<Point>,
}

impl GridIndex {
    pub fn build(points: &[Point]) -> Self {
        let n = points.len().max(1);
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for p in points {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
        let span_x = (max_x - min_x).max(1e-9);
        let span_y = (max_y - min_y).max(1e-9);
        // Aim for ~2 points per bucket.
        let cell = ((span_x * span_y / n as f64) * 2.0).sqrt().max(1e-9);
        let nx = ((span_x / cell).ceil() as i64 + 1).max(1);
        let ny = ((span_y / cell).ceil() as i64 + 1).max(1);
        let mut buckets = vec![Vec::new(); (nx * ny) as usize];
        for (i, p) in points.iter().enumerate() {
            let bx = (((p.x - min_x) / cell) as i64).clamp(0, nx - 1);
            let by = (((p.y - min_y) / cell) as i64).clamp(0, ny - 1);
            buckets[(by * nx + bx) as usize].push(i as u32);
        }
        Self { cell, nx, ny, min_x, min_y, buckets, points: points.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Exact k nearest points to `pos` by Euclidean distance; returns
    /// (squared distance, point index) sorted ascending, fewer than `k`
    /// entries if the index holds fewer points.
    pub fn knn(&self, pos: Point, k: usize, out: &mut Vec<(f64, u32)>) {
        out.clear();
        if k == 0 || self.points.is_empty() {
            return;
        }
        let k = k.min(self.points.len());
        let cx = (((pos.x - self.min_x) / self.cell) as i64).clamp(0, self.nx - 1);
        let cy = (((pos.y - self.min_y) / self.cell) as i64).clamp(0, self.ny - 1);
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            // Any point in a bucket at Chebyshev ring r lies at distance
            // ≥ (r−1)·cell from pos, so once k candidates are collected and
            // that lower bound exceeds the current k-th distance, stop.
            if out.len() == k {
                let bound = (ring - 1).max(0) as f64 * self.cell;
                if bound * bound > out[k - 1].0 {
                    break;
                }
            }
            let visit = |bx: i64, by: i64, out: &mut Vec<(f64, u32)>| {
                if bx < 0 || by < 0 || bx >= self.nx || by >= self.ny {
                    return;
                }
                for &idx in &self.buckets[(by * self.nx + bx) as usize] {
                    let d2 = self.points[idx as usize].sq_dist(&pos);
                    if out.len() < k {
                        out.push((d2, idx));
                        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                    } else if d2 < out[k - 1].0 {
                        out[k - 1] = (d2, idx);
                        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                    }
                }
            };
            if ring == 0 {
                visit(cx, cy, out);
                continue;
            }
            for bx in (cx - ring)..=(cx + ring) {
                visit(bx, cy - ring, out);
                visit(bx, cy + ring, out);
            }
            for by in (cy - ring + 1)..(cy + ring) {
                visit(cx - ring, by, out);
                visit(cx + ring, by, out);
            }
        }
    }
}

/// Per-tier grid indexes for one realization.
pub struct RealizationIndex {
    tiers: Vec<GridIndex>,
}

impl RealizationIndex {
    pub fn build(realization: &Realization) -> Self {
        Self { tiers: realization.aps.iter().map(|pts| GridIndex::build(pts)).collect() }
    }

    /// Builds the virtual cell of a user at `pos` under the config's biases.
    pub fn virtual_cell(
        &self,
        cfg: &NetworkConfig,
        pos: Point,
    ) -> Result<VirtualCell, AssociationError> {
        let k = cfg.cell_size;
        let total: usize = self.tiers.iter().map(GridIndex::len).sum();
        if total < k {
            return Err(AssociationError::InsufficientPoints { requested: k, available: total });
        }
        let mut candidates: Vec<CellMember> = Vec::with_capacity(k * self.tiers.len());
        let mut scratch = Vec::with_capacity(k);
        for (tier, index) in self.tiers.iter().enumerate() {
            let scale = cfg.biases[tier].powf(-2.0 / cfg.alpha);
            index.knn(pos, k, &mut scratch);
            for &(d2, idx) in scratch.iter() {
                candidates.push(CellMember {
                    tier,
                    index: idx as usize,
                    distance_km: d2.sqrt(),
                    sq_weighted_dist: scale * d2,
                });
            }
        }
        candidates.sort_by(|a, b| {
            a.sq_weighted_dist
                .partial_cmp(&b.sq_weighted_dist)
                .unwrap()
                .then(a.tier.cmp(&b.tier))
                .then(a.index.cmp(&b.index))
        });
        candidates.truncate(k);
        Ok(VirtualCell { members: candidates })
    }
}

/// Builds one user's virtual cell: the K best APs under biased received power
/// w_m‖A‖^{−α}, equivalently the K smallest weighted distances.
pub fn build_virtual_cell(
    realization: &Realization,
    cfg: &NetworkConfig,
    pos: Point,
) -> Result<VirtualCell, AssociationError> {
    RealizationIndex::build(realization).virtual_cell(cfg, pos)
}

/// Virtual cells of every user plus the resulting per-AP load map.
pub struct Associations {
    pub cells: Vec<VirtualCell>,
    pub loads: LoadMap,
}

/// Associates every user of the realization and returns cells + loads.
pub fn associate_all(
    realization: &Realization,
    cfg: &NetworkConfig,
) -> Result<Associations, AssociationError> {
    let index = RealizationIndex::build(realization);
    let mut loads = LoadMap::zeros(realization);
    let mut cells = Vec::with_capacity(realization.users.len());
    for &user in &realization.users {
        let cell = index.virtual_cell(cfg, user)?;
        for m in &cell.members {
            loads.counts[m.tier][m.index] += 1;
        }
        cells.push(cell);
    }
    Ok(Associations { cells, loads })
}

/// Associates every user and returns only the load map.
pub fn associate_all_users(
    realization: &Realization,
    cfg: &NetworkConfig,
) -> Result<LoadMap, AssociationError> {
    Ok(associate_all(realization, cfg)?.loads)
}

/// RRU picks: each user holds exactly one uniform pick in {0..R−1} per member
/// AP, stored flat as picks[user·K + member_rank].
#[derive(Debug, Clone, PartialEq)]
pub struct RruAssignment {
    pub picks: Vec<u32>,
    pub cell_size: usize,
    pub rru_count: u32,
}

impl RruAssignment {
    pub fn pick(&self, user: usize, member_rank: usize) -> u32 {
        self.picks[user * self.cell_size + member_rank]
    }

    pub fn users(&self) -> usize {
        if self.cell_size == 0 { 0 } else { self.picks.len() / self.cell_size }
    }
}

/// Draws independent uniform RRU picks for `n_users` users.
pub fn select_rrus(n_users: usize, cfg: &NetworkConfig, rng: &mut RngStream) -> RruAssignment {
    let k = cfg.cell_size;
    let r = cfg.rru_count();
    let mut picks = Vec::with_capacity(n_users * k);
    for _ in 0..n_users * k {
        picks.push(rng.below(r));
    }
    RruAssignment { picks, cell_size: k, rru_count: r }
}

/// Per-(AP, RRU) occupancy counts over all users' picks.
pub struct OccupancyMap {
    counts: Vec<u16>,
    offsets: Vec<usize>,
    rru_count: usize,
}

impl OccupancyMap {
    pub fn build(
        realization: &Realization,
        cells: &[VirtualCell],
        assignment: &RruAssignment,
    ) -> Self {
        let rru_count = assignment.rru_count as usize;
        let mut offsets = Vec::with_capacity(realization.aps.len() + 1);
        let mut acc = 0usize;
        for tier in &realization.aps {
            offsets.push(acc);
            acc += tier.len() * rru_count;
        }
        offsets.push(acc);
        let mut counts = vec![0u16; acc];
        for (user, cell) in cells.iter().enumerate() {
            for (rank, m) in cell.members.iter().enumerate() {
                let slot = offsets[m.tier] + m.index * rru_count + assignment.pick(user, rank) as usize;
                counts[slot] = counts[slot].saturating_add(1);
            }
        }
        Self { counts, offsets, rru_count }
    }

    /// How many users picked `rru` at the given AP.
    pub fn count(&self, tier: usize, index: usize, rru: u32) -> u32 {
        u32::from(self.counts[self.offsets[tier] + index * self.rru_count + rru as usize])
    }
}

/// Non-collision flags for one associated user: member `rank` is collision-free
/// iff no *other* user picked the owner's RRU at that AP.
pub fn detect_collisions(
    assignment: &RruAssignment,
    cells: &[VirtualCell],
    occupancy: &OccupancyMap,
    user: usize,
) -> Vec<bool> {
    let cell = &cells[user];
    cell.members
        .iter()
        .enumerate()
        .map(|(rank, m)| occupancy.count(m.tier, m.index, assignment.pick(user, rank)) == 1)
        .collect()
}

/// Non-collision flags for a probe user whose picks are *not* part of the
/// occupancy map (the typical user at the origin).
pub fn detect_collisions_external(
    cell: &VirtualCell,
    probe_picks: &[u32],
    occupancy: &OccupancyMap,
) -> Vec<bool> {
    cell.members
        .iter()
        .zip(probe_picks)
        .map(|(m, &rru)| occupancy.count(m.tier, m.index, rru) == 0)
        .collect()
}
