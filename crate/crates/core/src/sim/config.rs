use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};

use crate::adversary::AttackSpec;
use crate::agg::{AggRule, ClipPolicy, Quantizer};
use crate::dp::NoiseMechanism;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fl::{DataSpec, TrainingConfig};
use crate::kem::KemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CryptoSuite {
    Plaintext,
    RsaToy,
    Pqc,
}

impl CryptoSuite {
    pub fn code(self) -> u8 {
        match self {
            CryptoSuite::Plaintext => 0,
            CryptoSuite::RsaToy => 1,
            CryptoSuite::Pqc => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CryptoSuite::Plaintext => "plaintext",
            CryptoSuite::RsaToy => "rsa_toy",
            CryptoSuite::Pqc => "pqc",
        }
    }
}

fn default_seed() -> u64 {
    42
}

fn default_kem_rank() -> usize {
    2
}

fn default_rsa_bits() -> u32 {
    32
}

fn default_quant_scale() -> f64 {
    1024.0
}

/// A complete, declarative scenario. Everything a run does follows from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_clients: usize,
    pub rounds: u32,
    pub crypto_suite: CryptoSuite,
    #[serde(default)]
    pub agg_rule: AggRule,
    #[serde(default)]
    pub clip: ClipPolicy,
    #[serde(default)]
    pub dp: NoiseMechanism,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Module rank of the aggregator's KEM key.
    #[serde(default = "default_kem_rank")]
    pub kem_rank: usize,
    #[serde(default = "default_rsa_bits")]
    pub rsa_bits: u32,
    #[serde(default = "default_quant_scale")]
    pub quant_scale: f64,
    /// Client work in phases A and B may fan out; results do not depend on it.
    #[serde(default)]
    pub exec: Exec,
}

impl ScenarioConfig {
    /// Defaults everywhere except the three required fields.
    pub fn new(n_clients: usize, rounds: u32, crypto_suite: CryptoSuite) -> Self {
        ScenarioConfig {
            n_clients,
            rounds,
            crypto_suite,
            agg_rule: AggRule::default(),
            clip: ClipPolicy::default(),
            dp: NoiseMechanism::default(),
            attack: AttackSpec::default(),
            data: DataSpec::default(),
            training: TrainingConfig::default(),
            seed: default_seed(),
            kem_rank: default_kem_rank(),
            rsa_bits: default_rsa_bits(),
            quant_scale: default_quant_scale(),
            exec: Exec::default(),
        }
    }

    pub fn kem_params(&self) -> KemParams {
        KemParams::with_rank(self.kem_rank)
    }

    pub fn quantizer(&self) -> Result<Quantizer> {
        Quantizer::new(self.quant_scale)
    }

    /// Field-level validation; errors carry the dotted path of the culprit.
    pub fn validate(&self) -> Result<()> {
        let cfg = |field: &str, message: String| Error::Config {
            field: field.into(),
            message,
        };
        let nested = |prefix: &str, e: Error| match e {
            Error::InvalidArgument { field, reason } => cfg(&format!("{prefix}.{field}"), reason),
            other => cfg(prefix, other.to_string()),
        };
        if self.n_clients == 0 {
            return Err(cfg("n_clients", "must be at least 1".into()));
        }
        if self.n_clients > u32::MAX as usize - 1 {
            return Err(cfg("n_clients", "too many clients".into()));
        }
        if self.rounds == 0 {
            return Err(cfg("rounds", "must be at least 1".into()));
        }
        self.agg_rule.validate().map_err(|e| nested("agg_rule", e))?;
        if let AggRule::Krum { f } = self.agg_rule {
            if self.n_clients < 2 * f + 3 {
                return Err(cfg(
                    "agg_rule.f",
                    format!("krum needs n_clients >= 2f + 3 (n_clients = {}, f = {f})", self.n_clients),
                ));
            }
        }
        self.clip.validate().map_err(|e| nested("clip", e))?;
        self.dp.validate().map_err(|e| nested("dp", e))?;
        self.attack.validate(self.n_clients).map_err(|e| nested("attack", e))?;
        if self.data.dim == 0 {
            return Err(cfg("data.dim", "must be at least 1".into()));
        }
        if self.data.samples_per_client == 0 {
            return Err(cfg("data.samples_per_client", "must be at least 1".into()));
        }
        if !(self.data.separation >= 0.0 && self.data.separation.is_finite()) {
            return Err(cfg("data.separation", "must be finite and non-negative".into()));
        }
        self.training.validate().map_err(|e| nested("training", e))?;
        if !(2..=4).contains(&self.kem_rank) {
            return Err(cfg("kem_rank", format!("{} is outside 2..=4", self.kem_rank)));
        }
        if !(16..=32).contains(&self.rsa_bits) {
            return Err(cfg(
                "rsa_bits",
                format!("{} is outside 16..=32 (payload blocks need a modulus above 2^8)", self.rsa_bits),
            ));
        }
        if self.quantizer().is_err() {
            return Err(cfg("quant_scale", format!("{} must be positive and finite", self.quant_scale)));
        }
        Ok(())
    }

    /// SHA3-256 of the canonical JSON encoding.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha3_256::digest(&json).into()
    }

    /// True when the two configs differ at most in their crypto settings.
    pub fn same_except_crypto(&self, other: &ScenarioConfig) -> bool {
        let strip = |c: &ScenarioConfig| ScenarioConfig {
            crypto_suite: CryptoSuite::Plaintext,
            kem_rank: default_kem_rank(),
            rsa_bits: default_rsa_bits(),
            ..c.clone()
        };
        strip(self) == strip(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_fills_defaults() {
        let c: ScenarioConfig =
            serde_json::from_str(r#"{"n_clients":3,"rounds":2,"crypto_suite":"plaintext"}"#).unwrap();
        assert_eq!(c, ScenarioConfig::new(3, 2, CryptoSuite::Plaintext));
        c.validate().unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.clip.percentile, 95.0);
    }

    #[test]
    fn validation_names_fields() {
        let mut c = ScenarioConfig::new(3, 2, CryptoSuite::Pqc);
        c.clip.percentile = 150.0;
        match c.validate() {
            Err(Error::Config { field, message }) => {
                assert_eq!(field, "clip.percentile");
                assert!(message.contains("(0, 100]"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let mut c = ScenarioConfig::new(0, 2, CryptoSuite::Pqc);
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "n_clients"));
        c.n_clients = 4;
        c.agg_rule = AggRule::Krum { f: 1 };
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "agg_rule.f"));
        let mut c = ScenarioConfig::new(3, 1, CryptoSuite::RsaToy);
        c.quant_scale = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "quant_scale"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::new(3, 2, CryptoSuite::Pqc);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert!(!a.same_except_crypto(&b));
        let c = ScenarioConfig {
            crypto_suite: CryptoSuite::Plaintext,
            kem_rank: 3,
            ..a.clone()
        };
        assert!(a.same_except_crypto(&c));
    }
}
