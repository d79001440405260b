//! Network-level configuration shared by every module, plus the JSON config
//! bundle consumed by the CLI.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Two-tier (or n-tier) network parameters.
///
/// The association rule ranks access points by biased received power
/// w_m·‖A‖^{−α}; uplink association uses unit biases (nearest APs), downlink
/// association biases by transmit power (strongest APs). `delta` is the
/// probability that a given radio resource unit (RRU) is selected; its inverse
/// is the integer RRU count per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Per-tier transmit power in watts.
    pub powers_w: Vec<f64>,
    /// Per-tier AP density in APs/km².
    pub densities_per_km2: Vec<f64>,
    /// Per-tier association bias w_m (dimensionless).
    pub biases: Vec<f64>,
    /// User density in users/km².
    pub user_density_per_km2: f64,
    /// Path-loss exponent (> 2).
    pub alpha: f64,
    /// RRU selection probability; 1/delta must be a whole number of RRUs.
    pub delta: f64,
    /// Virtual-cell size K: how many APs each user associates with.
    pub cell_size: usize,
}

impl NetworkConfig {
    /// Reference two-tier network: 20 W macro APs at 1/km², 5 W small-cell APs
    /// at 250/km², α = 4, 20 RRUs (δ = 0.05), unit (uplink) biases.
    pub fn two_tier(user_density_per_km2: f64, cell_size: usize) -> Self {
        Self {
            powers_w: vec![20.0, 5.0],
            densities_per_km2: vec![1.0, 250.0],
            biases: vec![1.0, 1.0],
            user_density_per_km2,
            alpha: 4.0,
            delta: 0.05,
            cell_size,
        }
    }

    /// Same network with power-proportional biases (downlink association).
    pub fn with_power_biases(mut self) -> Self {
        self.biases = self.powers_w.clone();
        self
    }

    /// Same network with unit biases (uplink association).
    pub fn with_unit_biases(mut self) -> Self {
        self.biases = vec![1.0; self.powers_w.len()];
        self
    }

    pub fn with_cell_size(mut self, k: usize) -> Self {
        self.cell_size = k;
        self
    }

    pub fn with_user_density(mut self, mu: f64) -> Self {
        self.user_density_per_km2 = mu;
        self
    }

    pub fn tiers(&self) -> usize {
        self.densities_per_km2.len()
    }

    pub fn total_ap_density(&self) -> f64 {
        self.densities_per_km2.iter().sum()
    }

    /// Integer RRU count R = 1/delta.
    pub fn rru_count(&self) -> u32 {
        (1.0 / self.delta).round() as u32
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.tiers();
        if n == 0 {
            return Err(ConfigError::Invalid("at least one tier is required".into()));
        }
        if self.powers_w.len() != n || self.biases.len() != n {
            return Err(ConfigError::Invalid(
                "powers_w, densities_per_km2 and biases must have equal length".into(),
            ));
        }
        if self.powers_w.iter().any(|&p| !(p > 0.0)) {
            return Err(ConfigError::Invalid("tier powers must be positive".into()));
        }
        if self.densities_per_km2.iter().any(|&d| !(d >= 0.0)) {
            return Err(ConfigError::Invalid("tier densities must be nonnegative".into()));
        }
        if self.biases.iter().any(|&w| !(w > 0.0)) {
            return Err(ConfigError::Invalid("association biases must be positive".into()));
        }
        if !(self.user_density_per_km2 >= 0.0) {
            return Err(ConfigError::Invalid("user density must be nonnegative".into()));
        }
        if !(self.alpha > 2.0) {
            return Err(ConfigError::Invalid(format!(
                "path-loss exponent must exceed 2, got {}",
                self.alpha
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(ConfigError::Invalid(format!("delta must lie in (0,1], got {}", self.delta)));
        }
        let r = 1.0 / self.delta;
        if (r - r.round()).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "1/delta must be a whole RRU count; got 1/{} = {}",
                self.delta, r
            )));
        }
        if self.cell_size < 1 {
            return Err(ConfigError::Invalid("virtual-cell size K must be at least 1".into()));
        }
        Ok(())
    }
}

/// Backhaul/slot timing parameters for the delay model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    /// Backhaul service rate β in messages/ms.
    pub backhaul_rate_per_ms: f64,
    /// Duration of one RRU slot in ms.
    pub slot_ms: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        Self { backhaul_rate_per_ms: 5.0, slot_ms: 0.05 }
    }
}

impl DelayParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.backhaul_rate_per_ms > 0.0) {
            return Err(ConfigError::Invalid("backhaul rate must be positive".into()));
        }
        if !(self.slot_ms > 0.0) {
            return Err(ConfigError::Invalid("slot duration must be positive".into()));
        }
        Ok(())
    }
}

/// Top-level JSON configuration: network + link budget + delay parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub packet: crate::shortpacket::ShortPacketParams,
    #[serde(default)]
    pub delay: DelayParams,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::two_tier(125.0, 4),
            packet: crate::shortpacket::ShortPacketParams::default(),
            delay: DelayParams::default(),
        }
    }
}

impl LabConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: LabConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network.validate()?;
        self.delay.validate()?;
        self.packet
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_validates() {
        let cfg = NetworkConfig::two_tier(125.0, 4);
        cfg.validate().unwrap();
        assert_eq!(cfg.rru_count(), 20);
        assert_eq!(cfg.tiers(), 2);
    }

    #[test]
    fn rejects_non_integer_rru_count() {
        let mut cfg = NetworkConfig::two_tier(125.0, 4);
        cfg.delta = 0.3; // 1/0.3 is not an integer
        assert!(cfg.validate().is_err());
        cfg.delta = 0.25;
        cfg.validate().unwrap();
        assert_eq!(cfg.rru_count(), 4);
    }

    #[test]
    fn rejects_bad_alpha_and_k() {
        let mut cfg = NetworkConfig::two_tier(125.0, 4);
        cfg.alpha = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::two_tier(125.0, 0);
        cfg.alpha = 4.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bias_variants() {
        let cfg = NetworkConfig::two_tier(125.0, 2).with_power_biases();
        assert_eq!(cfg.biases, vec![20.0, 5.0]);
        let cfg = cfg.with_unit_biases();
        assert_eq!(cfg.biases, vec![1.0, 1.0]);
    }

    #[test]
    fn lab_config_round_trips_through_json() {
        let cfg = LabConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: LabConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
