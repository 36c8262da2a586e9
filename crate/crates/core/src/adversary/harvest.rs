//! Replays a recorded transcript through the eavesdropper.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rsa::{decrypt_payload, RsaPublicKey};
use super::shor::{factor_modulus, inv_mod, QuantumOracle};
use crate::agg::Quantizer;
use crate::sim::transcript::{tag, Phase, RoundTranscript, SessionInfo};

pub const METHOD_UNENCRYPTED: &str = "unencrypted";
pub const METHOD_NO_ATTACK: &str = "no applicable quantum attack implemented";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredUpdate {
    pub round: u32,
    pub client_id: u32,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecryptionReport {
    /// Gradient uploads seen on the wire.
    pub total_messages: usize,
    pub recovered: usize,
    pub recovered_plaintexts: Vec<RecoveredUpdate>,
    pub method: String,
}

fn decode_f64s(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

/// Private exponent from a factored modulus.
fn break_key(pk: &RsaPublicKey, oracle: &QuantumOracle) -> Option<(u64, String)> {
    let (p, q) = factor_modulus(pk.n_modulus, oracle, pk.n_modulus).ok()?;
    let d = inv_mod(pk.e_pub, (p - 1) * (q - 1))?;
    Some((d, format!("order finding factored n = {} = {p}·{q}", pk.n_modulus)))
}

/// Opens every gradient upload the oracle can reach. Uploads under the
/// lattice suite stay sealed.
pub fn harvest_decrypt(transcripts: &[RoundTranscript], oracle: &QuantumOracle) -> DecryptionReport {
    let mut quantizer = Quantizer::default();
    let mut rsa_keys: BTreeMap<u32, RsaPublicKey> = BTreeMap::new();
    for m in transcripts.iter().flat_map(|t| &t.messages).filter(|m| m.phase == Phase::Setup) {
        match m.body_tag() {
            Some(tag::SESSION) => {
                if let Ok(info) = SessionInfo::from_bytes(m.body()) {
                    if let Ok(q) = Quantizer::new(info.quant_scale) {
                        quantizer = q;
                    }
                }
            }
            Some(tag::RSA_PUBLIC_KEY) => {
                if let Ok(pk) = RsaPublicKey::from_bytes(m.body()) {
                    rsa_keys.insert(m.sender, pk);
                }
            }
            _ => {}
        }
    }

    // Each harvested public key is broken once, up front.
    let broken: Vec<(u64, String, RsaPublicKey)> = rsa_keys
        .values()
        .filter_map(|pk| break_key(pk, oracle).map(|(d, how)| (d, how, *pk)))
        .collect();

    let mut report = DecryptionReport::default();
    let mut methods: Vec<String> = Vec::new();
    let mut note = |m: &str| {
        if !methods.iter().any(|x| x == m) {
            methods.push(m.to_string());
        }
    };
    for t in transcripts {
        for m in t.messages.iter().filter(|m| m.phase == Phase::Upload) {
            report.total_messages += 1;
            let delta = match m.body_tag() {
                Some(tag::UPLOAD_PLAINTEXT) => {
                    note(METHOD_UNENCRYPTED);
                    decode_f64s(m.body())
                }
                Some(tag::UPLOAD_RSA) => broken.iter().find_map(|(d, how, pk)| {
                    let plain = decrypt_payload(pk, *d, m.body()).ok()?;
                    let delta = quantizer.decode(&plain)?;
                    note(how);
                    Some(delta)
                }),
                _ => {
                    note(METHOD_NO_ATTACK);
                    None
                }
            };
            if let Some(delta) = delta {
                report.recovered += 1;
                report.recovered_plaintexts.push(RecoveredUpdate {
                    round: t.round,
                    client_id: m.sender,
                    delta,
                });
            }
        }
    }
    report.method = methods.join("; ");
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::rsa::RsaToyKey;
    use crate::sim::transcript::{WireMessage, AGGREGATOR};

    #[test]
    fn empty_transcript() {
        let r = harvest_decrypt(&[], &QuantumOracle::default());
        assert_eq!((r.total_messages, r.recovered), (0, 0));
        assert!(r.recovered_plaintexts.is_empty());
    }

    #[test]
    fn opens_rsa_uploads_and_skips_others() {
        let key = RsaToyKey::from_primes(65_519, 65_521).unwrap();
        let q = Quantizer::default();
        let mut setup = RoundTranscript::new(0);
        setup
            .messages
            .push(WireMessage::new(AGGREGATOR, Phase::Setup, tag::RSA_PUBLIC_KEY, &key.public().to_bytes()));
        let mut round = RoundTranscript::new(1);
        let delta = vec![0.5, -0.25, 1.0];
        let ct = key.public().encrypt_payload(&q.encode(&delta)).unwrap();
        round.messages.push(WireMessage::new(3, Phase::Upload, tag::UPLOAD_RSA, &ct));
        round.messages.push(WireMessage::new(4, Phase::Upload, tag::UPLOAD_PQC, &[0; 40]));
        let r = harvest_decrypt(&[setup, round], &QuantumOracle::default());
        assert_eq!((r.total_messages, r.recovered), (2, 1));
        assert_eq!(r.recovered_plaintexts[0], RecoveredUpdate { round: 1, client_id: 3, delta });
        assert!(r.method.contains("65519·65521"), "{}", r.method);
        assert!(r.method.contains(METHOD_NO_ATTACK));
    }

    #[test]
    fn oracle_bound_blocks_recovery() {
        let key = RsaToyKey::from_primes(65_519, 65_521).unwrap();
        let mut setup = RoundTranscript::new(0);
        setup
            .messages
            .push(WireMessage::new(AGGREGATOR, Phase::Setup, tag::RSA_PUBLIC_KEY, &key.public().to_bytes()));
        let mut round = RoundTranscript::new(1);
        let ct = key.public().encrypt_payload(&[1, 2]).unwrap();
        round.messages.push(WireMessage::new(0, Phase::Upload, tag::UPLOAD_RSA, &ct));
        let r = harvest_decrypt(&[setup, round], &QuantumOracle { max_modulus_bits: 16 });
        assert_eq!((r.total_messages, r.recovered), (1, 0));
    }
}
