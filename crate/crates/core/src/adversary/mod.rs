//! Adversaries: Byzantine update corruption, gradient inversion, and the
//! harvest-now-decrypt-later eavesdropper with a classical order-finding
//! stand-in for period finding.

pub mod harvest;
pub mod rsa;
pub mod shor;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::{GradientUpdate, ModelParams};

pub use harvest::{harvest_decrypt, DecryptionReport, RecoveredUpdate};
pub use rsa::{rsa_toy_cipher, rsa_toy_keygen, Direction, RsaPublicKey, RsaToyKey};
pub use shor::{factor_from_order, factor_modulus, shor_order_find, FactorOutcome, OrderOutcome, QuantumOracle};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    #[default]
    None,
    SignFlip,
    Scale { lambda: f64 },
    /// Acts on the attacker's dataset before training, not on updates.
    LabelFlip,
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default)]
    pub kind: AttackKind,
    #[serde(default)]
    pub attacker_ids: BTreeSet<u32>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, attacker_ids: impl IntoIterator<Item = u32>) -> Self {
        AttackSpec {
            kind,
            attacker_ids: attacker_ids.into_iter().collect(),
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_attacker(&self, client_id: u32) -> bool {
        self.kind != AttackKind::None && self.attacker_ids.contains(&client_id)
    }

    /// Checks parameters and that every attacker is one of `n_clients`.
    pub fn validate(&self, n_clients: usize) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::InvalidArgument {
                field: field.into(),
                reason,
            })
        };
        match self.kind {
            AttackKind::Scale { lambda } if lambda == 0.0 || !lambda.is_finite() => {
                return bad("lambda", format!("{lambda} must be finite and nonzero"))
            }
            AttackKind::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                return bad("sigma", format!("{sigma} must be finite and non-negative"))
            }
            _ => {}
        }
        if let Some(id) = self.attacker_ids.iter().find(|&&id| id as usize >= n_clients) {
            return bad("attacker_ids", format!("client {id} does not exist (n_clients = {n_clients})"));
        }
        Ok(())
    }
}

/// Corrupts an honest update. The caller decides who is an attacker.
pub fn byzantine_transform(honest: &GradientUpdate, spec: &AttackSpec, rng_seed: u64) -> Result<GradientUpdate> {
    let delta = honest.delta();
    let out = match spec.kind {
        AttackKind::None => return Ok(honest.clone()),
        AttackKind::LabelFlip => return Err(Error::LabelFlipOnUpdate),
        AttackKind::SignFlip => delta.iter().map(|v| -v).collect(),
        AttackKind::Scale { lambda } => delta.iter().map(|v| lambda * v).collect(),
        AttackKind::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument {
                field: "sigma".into(),
                reason: e.to_string(),
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            delta.iter().map(|v| v + normal.sample(&mut rng)).collect()
        }
    };
    honest.with_delta(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inversion {
    Reconstructed(Vec<f64>),
    Inapplicable,
}

/// Recovers the training input behind a single-sample, single-step update.
///
/// The raw gradient is `r·(x ∥ 1)` for residual `r`, and the update is a
/// negative multiple of it, so the weight part divided by the bias part is
/// `x` whatever the learning rate.
pub fn model_inversion_attack(update: &GradientUpdate, known_params: &ModelParams) -> Inversion {
    let delta = update.delta();
    let d = known_params.dim();
    if delta.len() != d + 1 {
        return Inversion::Inapplicable;
    }
    let g_b = delta[d];
    if g_b.abs() < 1e-9 {
        return Inversion::Inapplicable;
    }
    Inversion::Reconstructed(delta[..d].iter().map(|g| g / g_b).collect())
}
