//! Finite-blocklength link budget: converts payload size, slot duration,
//! bandwidth, and decoding error probability into the SIR threshold θ used by
//! every reliability formula and simulator.

use crate::numerics::{self, NumericsError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShortPacketError {
    #[error("short-packet parameters invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Short-packet link parameters.
///
/// The blocklength is the time-bandwidth product τ·B; below ~100 symbols the
/// normal-approximation rate expression underlying [`sir_threshold`] loses
/// accuracy, so such configurations are accepted with a warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortPacketParams {
    /// Payload size ξ in bytes.
    pub payload_bytes: f64,
    /// Transmission duration τ in ms.
    pub duration_ms: f64,
    /// Bandwidth B in Hz.
    pub bandwidth_hz: f64,
    /// Decoding error probability ε.
    pub error_prob: f64,
}

impl Default for ShortPacketParams {
    fn default() -> Self {
        Self { payload_bytes: 32.0, duration_ms: 0.05, bandwidth_hz: 20e6, error_prob: 2e-8 }
    }
}

impl ShortPacketParams {
    pub fn with_payload_bytes(mut self, xi: f64) -> Self {
        self.payload_bytes = xi;
        self
    }

    /// Blocklength τ·B in channel symbols.
    pub fn blocklength(&self) -> f64 {
        self.duration_ms * 1e-3 * self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<(), ShortPacketError> {
        if !(self.payload_bytes > 0.0) {
            return Err(ShortPacketError::Invalid("payload must be positive".into()));
        }
        if !(self.duration_ms > 0.0) {
            return Err(ShortPacketError::Invalid("duration must be positive".into()));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(ShortPacketError::Invalid("bandwidth must be positive".into()));
        }
        if !(self.error_prob > 0.0 && self.error_prob < 1.0) {
            return Err(ShortPacketError::Invalid(format!(
                "decoding error probability must lie in (0,1), got {}",
                self.error_prob
            )));
        }
        if self.blocklength() < 100.0 {
            log::warn!(
                "blocklength {:.1} symbols is below 100; the short-blocklength rate \
                 approximation degrades here",
                self.blocklength()
            );
        }
        Ok(())
    }
}

/// SIR threshold for a short packet:
/// θ = exp[ 8ξ·ln2 / (τB) + Q⁻¹(ε) / √(τB) ] − 1.
///
/// The payload is stored in bytes and converted to bits (×8); ln 2 converts
/// bits to nats so the exponential inverts a nat-domain rate. Channel
/// dispersion is deliberately omitted. Strictly increasing in ξ, strictly
/// decreasing in the blocklength τB and in ε.
pub fn sir_threshold(params: &ShortPacketParams) -> Result<f64, ShortPacketError> {
    params.validate()?;
    let n = params.blocklength();
    let rate_nats = 8.0 * params.payload_bytes * std::f64::consts::LN_2 / n;
    let backoff = numerics::inverse_q(params.error_prob)? / n.sqrt();
    Ok((rate_nats + backoff).exp() - 1.0)
}
