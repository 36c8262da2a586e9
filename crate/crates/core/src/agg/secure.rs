//! Signature-gated secure aggregation.
//!
//! A client quantizes its delta to 16-bit fixed point, encapsulates a fresh
//! secret to the aggregator's KEM key, XORs the payload with a keystream
//! derived from that secret, and signs the framed bytes. The aggregator
//! drops every submission whose signature fails (the gate contributes zero),
//! decrypts the rest, then clips and combines them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha3::digest::XofReader;

use super::{aggregate, AggRule, ClipPolicy};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fl::GradientUpdate;
use crate::hash::{hash32, xof256};
use crate::kem::{kem_decapsulate, kem_encapsulate, KemCiphertext, KemKeyPair, KemPublicKey, SharedSecret};
use crate::sig::{sig_sign, sig_verify_bytes, SigKeyPair, SigPublicKey};

/// Signed 16-bit fixed point with `scale` units per 1.0, saturating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub scale: f64,
}

impl Default for Quantizer {
    fn default() -> Self {
        Quantizer { scale: 1024.0 }
    }
}

impl Quantizer {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument {
                field: "quant_scale".into(),
                reason: format!("{scale} must be positive and finite"),
            });
        }
        Ok(Quantizer { scale })
    }

    /// One quantization step in real units.
    pub fn step(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn quantize(&self, values: &[f64]) -> Vec<i16> {
        values
            .iter()
            .map(|v| (v * self.scale).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
            .collect()
    }

    pub fn dequantize(&self, values: &[i16]) -> Vec<f64> {
        values.iter().map(|&v| v as f64 / self.scale).collect()
    }

    pub fn encode(&self, values: &[f64]) -> Vec<u8> {
        self.quantize(values).iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn decode(&self, bytes: &[u8]) -> Option<Vec<f64>> {
        if bytes.len() % 2 != 0 {
            return None;
        }
        let q: Vec<i16> = bytes
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        Some(self.dequantize(&q))
    }
}

fn apply_keystream(secret: &SharedSecret, round: u32, client_id: u32, data: &mut [u8]) {
    let mut ks = vec![0u8; data.len()];
    xof256(
        b"pqfl/keystream",
        &[secret.as_bytes(), &round.to_le_bytes(), &client_id.to_le_bytes()],
    )
    .read(&mut ks);
    data.iter_mut().zip(ks).for_each(|(d, k)| *d ^= k);
}

/// One client's encrypted, signed round submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedCipherUpdate {
    pub round: u32,
    pub client_id: u32,
    pub kem_ciphertext: Vec<u8>,
    pub payload: Vec<u8>,
    pub signature: Vec<u8>,
}

fn put_block(out: &mut Vec<u8>, block: &[u8]) {
    out.extend_from_slice(&(block.len() as u32).to_le_bytes());
    out.extend_from_slice(block);
}

fn take_u32(bytes: &[u8], pos: &mut usize) -> Option<u32> {
    let v = bytes.get(*pos..*pos + 4)?;
    *pos += 4;
    Some(u32::from_le_bytes(v.try_into().ok()?))
}

fn take_block<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    let len = take_u32(bytes, pos)? as usize;
    let v = bytes.get(*pos..pos.checked_add(len)?)?;
    *pos += len;
    Some(v)
}

impl SignedCipherUpdate {
    /// Everything the signature covers: `round ∥ client_id ∥ len ∥ ct ∥ len ∥ payload`.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.kem_ciphertext.len() + self.payload.len());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.client_id.to_le_bytes());
        put_block(&mut out, &self.kem_ciphertext);
        put_block(&mut out, &self.payload);
        out
    }

    /// Wire layout: `round u32 ∥ client_id u32 ∥ (u32 len ∥ bytes)` for the
    /// KEM ciphertext, payload and signature, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        put_block(&mut out, &self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let malformed = || Error::Malformed {
            what: "signed cipher update",
            reason: "truncated or over-long framing".into(),
        };
        let mut pos = 0;
        let round = take_u32(bytes, &mut pos).ok_or_else(malformed)?;
        let client_id = take_u32(bytes, &mut pos).ok_or_else(malformed)?;
        let kem_ciphertext = take_block(bytes, &mut pos).ok_or_else(malformed)?.to_vec();
        let payload = take_block(bytes, &mut pos).ok_or_else(malformed)?.to_vec();
        let signature = take_block(bytes, &mut pos).ok_or_else(malformed)?.to_vec();
        if pos != bytes.len() {
            return Err(malformed());
        }
        Ok(SignedCipherUpdate {
            round,
            client_id,
            kem_ciphertext,
            payload,
            signature,
        })
    }
}

/// Client side: quantize, encrypt to the aggregator and sign.
pub fn seal_update(
    update: &GradientUpdate,
    quantizer: &Quantizer,
    aggregator_pk: &KemPublicKey,
    signer: &SigKeyPair,
    rng_seed: &[u8; 32],
) -> Result<SignedCipherUpdate> {
    let (ct, secret) = kem_encapsulate(aggregator_pk, &hash32(b"pqfl/seal/encaps", &[rng_seed]))?;
    let mut payload = quantizer.encode(update.delta());
    apply_keystream(&secret, update.round(), update.client_id(), &mut payload);
    let mut sub = SignedCipherUpdate {
        round: update.round(),
        client_id: update.client_id(),
        kem_ciphertext: ct.to_bytes(),
        payload,
        signature: Vec::new(),
    };
    let sig = sig_sign(signer, &sub.signed_bytes(), &hash32(b"pqfl/seal/sign", &[rng_seed]))?;
    sub.signature = sig.to_bytes(signer.public().params());
    Ok(sub)
}

/// Aggregator side for one submission: `None` when the signature does not
/// verify or the verified contents do not decode.
pub fn open_submission(
    sub: &SignedCipherUpdate,
    verify_key: &SigPublicKey,
    kem_keypair: &KemKeyPair,
    quantizer: &Quantizer,
) -> Option<GradientUpdate> {
    if !sig_verify_bytes(verify_key, &sub.signed_bytes(), &sub.signature) {
        return None;
    }
    let ct = KemCiphertext::from_bytes(kem_keypair.public().params(), &sub.kem_ciphertext).ok()?;
    let secret = kem_decapsulate(kem_keypair, &ct).ok()?;
    let mut plain = sub.payload.clone();
    apply_keystream(&secret, sub.round, sub.client_id, &mut plain);
    let delta = quantizer.decode(&plain)?;
    GradientUpdate::new(sub.client_id, sub.round, delta).ok()
}

/// Aggregated round update with the gate's verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalUpdate {
    pub vector: Vec<f64>,
    pub contributors: Vec<u32>,
    pub excluded: Vec<u32>,
}

/// Verifies, decrypts and aggregates a round of submissions. Submissions
/// are opened independently (in parallel under [`Exec::Parallel`]) and
/// folded in ascending client id order.
#[allow(clippy::too_many_arguments)]
pub fn verified_secure_aggregate(
    submissions: &[SignedCipherUpdate],
    verify_keys: &BTreeMap<u32, SigPublicKey>,
    kem_keypair: &KemKeyPair,
    rule: &AggRule,
    policy: &ClipPolicy,
    quantizer: &Quantizer,
    exec: Exec,
) -> Result<GlobalUpdate> {
    if submissions.is_empty() {
        return Err(Error::EmptyUpdates);
    }
    let keys = submissions
        .iter()
        .map(|s| verify_keys.get(&s.client_id).ok_or(Error::UnknownClient(s.client_id)))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(&SignedCipherUpdate, &SigPublicKey)> = submissions.iter().zip(keys).collect();
    let mut opened: Vec<(u32, Option<GradientUpdate>)> = exec.map(&pairs, |(sub, key)| {
        (sub.client_id, open_submission(sub, key, kem_keypair, quantizer))
    });
    opened.sort_by_key(|(id, _)| *id);
    let mut contributors = Vec::new();
    let mut excluded = Vec::new();
    let mut updates = Vec::new();
    for (id, u) in opened {
        match u {
            Some(u) => {
                contributors.push(id);
                updates.push(u);
            }
            None => excluded.push(id),
        }
    }
    if updates.is_empty() {
        return Err(Error::NoVerifiedContributors);
    }
    let vector = aggregate(&updates, rule, policy)?;
    Ok(GlobalUpdate {
        vector,
        contributors,
        excluded,
    })
}
