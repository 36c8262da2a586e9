//! Gaussian-mechanism differential privacy for client updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::GradientUpdate;

fn default_delta() -> f64 {
    1e-5
}

fn default_clip() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    1.0
}

/// Clip-then-noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseMechanism {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_clip")]
    pub clip_c: f64,
    #[serde(default)]
    pub enabled: bool,
}

impl Default for NoiseMechanism {
    /// Disabled, but carrying ε = 1, δ = 1e-5, C = 1 for when it's switched on.
    fn default() -> Self {
        NoiseMechanism {
            epsilon: default_epsilon(),
            delta: default_delta(),
            clip_c: default_clip(),
            enabled: false,
        }
    }
}

impl NoiseMechanism {
    pub fn gaussian(epsilon: f64, delta: f64, clip_c: f64) -> Result<Self> {
        let m = NoiseMechanism {
            epsilon,
            delta,
            clip_c,
            enabled: true,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::InvalidArgument {
                field: field.into(),
                reason,
            })
        };
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", format!("{} must be positive", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", format!("{} is outside (0, 1)", self.delta));
        }
        if !(self.clip_c > 0.0 && self.clip_c.is_finite()) {
            return bad("clip_c", format!("{} must be positive", self.clip_c));
        }
        Ok(())
    }

    /// `C · sqrt(2 ln(1.25/δ)) / ε`.
    pub fn sigma(&self) -> f64 {
        self.clip_c * (2.0 * (1.25 / self.delta).ln()).sqrt() / self.epsilon
    }
}

/// Rescales `v` onto the ball of radius `c` if it lies outside.
pub fn clip_to_norm(v: &[f64], c: f64) -> Vec<f64> {
    let norm = crate::fl::l2_norm(v);
    if norm <= c {
        return v.to_vec();
    }
    let mut out: Vec<f64> = v.iter().map(|x| x * (c / norm)).collect();
    // Rounding can leave the result a hair above c.
    while crate::fl::l2_norm(&out) > c {
        out.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
    }
    out
}

/// Clips the delta to `clip_c`, then adds N(0, σ²) per coordinate.
/// Disabled mechanisms pass the update through untouched.
pub fn dp_sanitize(update: &GradientUpdate, mech: &NoiseMechanism, rng_seed: u64) -> Result<GradientUpdate> {
    mech.validate()?;
    if !mech.enabled {
        return Ok(update.clone());
    }
    let normal = Normal::new(0.0, mech.sigma()).map_err(|e| Error::InvalidArgument {
        field: "sigma".into(),
        reason: e.to_string(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noisy = clip_to_norm(update.delta(), mech.clip_c)
        .into_iter()
        .map(|x| x + normal.sample(&mut rng))
        .collect();
    update.with_delta(noisy)
}

/// Basic (additive) composition across rounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub per_round: Vec<(f64, f64)>,
    pub total_epsilon: f64,
    pub total_delta: f64,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }
}

pub fn compose_budget(ledger: &PrivacyLedger, spend: (f64, f64)) -> Result<PrivacyLedger> {
    let (eps, delta) = spend;
    if !(eps > 0.0 && eps.is_finite()) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument {
            field: "spend".into(),
            reason: format!("({eps}, {delta}) must be positive"),
        });
    }
    let mut next = ledger.clone();
    next.per_round.push(spend);
    next.total_epsilon = next.per_round.iter().map(|s| s.0).sum();
    next.total_delta = next.per_round.iter().map(|s| s.1).sum();
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upd(delta: Vec<f64>) -> GradientUpdate {
        GradientUpdate::new(0, 0, delta).unwrap()
    }

    #[test]
    fn sigma_closed_form() {
        let m = NoiseMechanism::gaussian(1.0, 1e-5, 1.0).unwrap();
        assert!((m.sigma() - 4.8448).abs() < 1e-4, "{}", m.sigma());
        assert!((m.sigma() - (2.0 * 125000f64.ln()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn disabled_is_passthrough() {
        let u = upd(vec![3.0, -4.0]);
        assert_eq!(dp_sanitize(&u, &NoiseMechanism::default(), 1).unwrap(), u);
    }

    #[test]
    fn invalid_mechanisms_are_rejected() {
        assert!(NoiseMechanism::gaussian(0.0, 1e-5, 1.0).is_err());
        assert!(NoiseMechanism::gaussian(1.0, 1.0, 1.0).is_err());
        assert!(NoiseMechanism::gaussian(1.0, 0.0, 1.0).is_err());
        assert!(NoiseMechanism::gaussian(1.0, 1e-5, -1.0).is_err());
    }

    #[test]
    fn clipping_respects_the_bound() {
        let c = clip_to_norm(&[3.0, 4.0], 1.0);
        assert!(crate::fl::l2_norm(&c) <= 1.0);
        assert!((c[0] - 0.6).abs() < 1e-12 && (c[1] - 0.8).abs() < 1e-12);
        assert_eq!(clip_to_norm(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
    }

    #[test]
    fn deterministic_in_seed() {
        let m = NoiseMechanism::gaussian(1.0, 1e-5, 1.0).unwrap();
        let u = upd(vec![0.1, 0.2, 0.3]);
        assert_eq!(dp_sanitize(&u, &m, 9).unwrap(), dp_sanitize(&u, &m, 9).unwrap());
        assert_ne!(dp_sanitize(&u, &m, 9).unwrap(), dp_sanitize(&u, &m, 10).unwrap());
    }

    #[test]
    fn ledger_is_additive() {
        let empty = PrivacyLedger::new();
        assert_eq!((empty.total_epsilon, empty.total_delta), (0.0, 0.0));
        let mut l = empty;
        for _ in 0..10 {
            l = compose_budget(&l, (0.1, 1e-6)).unwrap();
        }
        assert!((l.total_epsilon - 1.0).abs() < 1e-12);
        let h = compose_budget(&compose_budget(&PrivacyLedger::new(), (0.5, 1e-6)).unwrap(), (0.25, 1e-6)).unwrap();
        assert_eq!(h.total_epsilon, 0.75);
        assert!((h.total_delta - 2e-6).abs() < 1e-18);
        assert!(compose_budget(&h, (0.0, 1e-6)).is_err());
    }
}
