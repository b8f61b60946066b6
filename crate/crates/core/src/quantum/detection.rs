use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Seed used whenever a command is not given one.
pub const DEFAULT_SEED: u64 = 20_210_611;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub coincidence_window_ps: f64,
    pub integration_time_s: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 0.8,
            dark_rate_hz: 100.0,
            coincidence_window_ps: 1000.0,
            integration_time_s: 10.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(domain("detector efficiency must lie in (0, 1]"));
        }
        if !(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite()) {
            return Err(domain("dark rate must be finite and >= 0"));
        }
        if !(self.coincidence_window_ps > 0.0 && self.coincidence_window_ps.is_finite()) {
            return Err(domain("coincidence window must be positive"));
        }
        if !(self.integration_time_s > 0.0 && self.integration_time_s.is_finite()) {
            return Err(domain("integration time must be positive"));
        }
        Ok(())
    }

    /// Expected counts in one integration bin for an incident photon rate.
    pub fn expected_counts(&self, incident_rate_hz: f64) -> f64 {
        (incident_rate_hz * self.efficiency + self.dark_rate_hz) * self.integration_time_s
    }
}

/// Independent generator for task `stream` of a run seeded with `seed`.
/// Streams do not overlap, so results do not depend on scheduling.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One Poisson draw with mean `mean` (0 for a zero mean).
pub fn poisson_draw<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(domain(format!("poisson mean {mean} must be finite and >= 0")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| domain(format!("poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Poisson-distributed counts for one integration bin.
pub fn sample_counts(mean_rate_hz: f64, detector: &DetectorModel, seed: u64) -> Result<u64> {
    if !(mean_rate_hz >= 0.0 && mean_rate_hz.is_finite()) {
        return Err(domain("mean rate must be finite and >= 0"));
    }
    detector.validate()?;
    poisson_draw(detector.expected_counts(mean_rate_hz), &mut rng_for(seed, 0))
}
