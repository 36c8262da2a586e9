//! Module-LWE key encapsulation.
//!
//! Key generation publishes `t = A·s + e` with `A` expanded from a public
//! seed. Encapsulation is LPR-style public-key encryption of a random 256-bit
//! message, made deterministic in the message and wrapped in a
//! Fujisaki–Okamoto re-encryption check with implicit rejection: a ciphertext
//! that fails the check decapsulates to a pseudorandom secret keyed by a
//! per-key value, never to an error.

use serde::{Deserialize, Serialize};
use sha3::digest::XofReader;

use crate::bits;
use crate::error::{Error, Result};
use crate::hash::{hash32, xof256};
use crate::ring::{sample_cbd, sample_uniform, Poly, PolyMat, PolyVec, RingParams};

const MSG_BYTES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KemParams {
    pub ring: RingParams,
    pub k: usize,
    pub eta1: u32,
    pub eta2: u32,
    pub du: u32,
    pub dv: u32,
}

impl Default for KemParams {
    fn default() -> Self {
        KemParams {
            ring: RingParams::kem_default(),
            k: 2,
            eta1: 3,
            eta2: 2,
            du: 10,
            dv: 4,
        }
    }
}

impl KemParams {
    /// Default parameters at a different module rank.
    pub fn with_rank(k: usize) -> Self {
        KemParams {
            k,
            eta1: if k == 2 { 3 } else { 2 },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidKemParams(m));
        let qbits = 32 - self.ring.q().leading_zeros();
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if ![2, 3].contains(&self.eta1) || ![2, 3].contains(&self.eta2) {
            return bad(format!("eta1={}, eta2={} must be 2 or 3", self.eta1, self.eta2));
        }
        for (name, d) in [("du", self.du), ("dv", self.dv)] {
            if d < 1 || d > qbits || d > 16 {
                return bad(format!("{name}={d} must lie in [1, min(16, {qbits})]"));
            }
        }
        if self.ring.n() < MSG_BYTES * 8 {
            return bad(format!("n={} cannot carry a 256-bit message", self.ring.n()));
        }
        Ok(())
    }

    pub fn public_key_len(&self) -> usize {
        32 + self.k * self.ring.n() * self.ring.coeff_bytes()
    }

    pub fn ciphertext_len(&self) -> usize {
        let n = self.ring.n();
        bits::packed_len(self.k * n, self.du) + bits::packed_len(n, self.dv)
    }
}

fn compress(x: u32, d: u32, q: u32) -> u32 {
    let scaled = ((x as u64) << d) + (q as u64 / 2);
    ((scaled / q as u64) as u32) & ((1 << d) - 1)
}

fn decompress(y: u32, d: u32, q: u32) -> u32 {
    ((y as u64 * q as u64 + (1u64 << (d - 1))) >> d) as u32
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemPublicKey {
    params: KemParams,
    seed_a: [u8; 32],
    t: PolyVec,
    matrix: PolyMat,
    hash: [u8; 32],
}

#[derive(Debug, Clone)]
pub struct KemKeyPair {
    public: KemPublicKey,
    s: PolyVec,
    z_reject: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemCiphertext {
    du: u32,
    dv: u32,
    u: Vec<Vec<u32>>,
    v: Vec<u32>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SharedSecret(pub [u8; 32]);

impl std::fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SharedSecret(..)")
    }
}

impl SharedSecret {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

fn expand_matrix(params: &KemParams, seed: &[u8; 32]) -> PolyMat {
    let k = params.k;
    let entries = (0..k * k)
        .map(|idx| sample_uniform(params.ring, seed, ((idx / k) << 8 | (idx % k)) as u32))
        .collect();
    PolyMat::new(k, k, entries).expect("k*k entries share params")
}

fn cbd_vec(params: &KemParams, seed: &[u8; 32], first_nonce: u32, eta: u32) -> Result<PolyVec> {
    let entries = (0..params.k as u32)
        .map(|i| sample_cbd(params.ring, seed, first_nonce + i, eta))
        .collect::<Result<_>>()?;
    PolyVec::new(entries)
}

impl KemPublicKey {
    fn assemble(params: KemParams, seed_a: [u8; 32], t: PolyVec) -> Self {
        let matrix = expand_matrix(&params, &seed_a);
        let mut pk = KemPublicKey {
            params,
            seed_a,
            t,
            matrix,
            hash: [0; 32],
        };
        pk.hash = hash32(b"pqfl/kem/pk", &[&pk.to_bytes()]);
        pk
    }

    pub fn params(&self) -> &KemParams {
        &self.params
    }

    pub fn seed_a(&self) -> &[u8; 32] {
        &self.seed_a
    }

    pub fn t(&self) -> &PolyVec {
        &self.t
    }

    pub fn matrix(&self) -> &PolyMat {
        &self.matrix
    }

    /// `seed_A ∥ t`, coefficients 16-bit little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.seed_a.to_vec();
        out.extend(self.t.to_bytes());
        out
    }

    pub fn from_bytes(params: KemParams, bytes: &[u8]) -> Result<Self> {
        params.validate()?;
        if bytes.len() != params.public_key_len() {
            return Err(Error::Malformed {
                what: "KEM public key",
                reason: format!("expected {} bytes, got {}", params.public_key_len(), bytes.len()),
            });
        }
        let seed_a: [u8; 32] = bytes[..32].try_into().expect("32 bytes");
        let t = PolyVec::from_bytes(params.ring, params.k, &bytes[32..])?;
        Ok(Self::assemble(params, seed_a, t))
    }

    fn encrypt(&self, m: &[u8; MSG_BYTES], coins: &[u8; 32]) -> Result<KemCiphertext> {
        let p = &self.params;
        let q = p.ring.q();
        let r = cbd_vec(p, coins, 0, p.eta1)?;
        let e1 = cbd_vec(p, coins, p.k as u32, p.eta2)?;
        let e2 = sample_cbd(p.ring, coins, 2 * p.k as u32, p.eta2)?;
        let r_hat = r.ntt();
        let u = self.matrix.mul_vec_ntt(&r_hat, true)?.add(&e1)?;
        let half = q.div_ceil(2);
        let msg = Poly::from_coeffs(
            p.ring,
            (0..p.ring.n())
                .map(|i| {
                    if i < MSG_BYTES * 8 && (m[i / 8] >> (i % 8)) & 1 == 1 {
                        half
                    } else {
                        0
                    }
                })
                .collect(),
        )?;
        let tr = crate::ring::dot_ntt(&self.t.ntt(), &r_hat)?.inverse();
        let v = tr.add(&e2)?.add(&msg)?;
        Ok(KemCiphertext {
            du: p.du,
            dv: p.dv,
            u: u
                .entries()
                .iter()
                .map(|poly| poly.coeffs().iter().map(|&c| compress(c, p.du, q)).collect())
                .collect(),
            v: v.coeffs().iter().map(|&c| compress(c, p.dv, q)).collect(),
        })
    }
}

impl KemKeyPair {
    pub fn public(&self) -> &KemPublicKey {
        &self.public
    }

    pub fn secret(&self) -> &PolyVec {
        &self.s
    }

    fn decrypt(&self, ct: &KemCiphertext) -> Result<[u8; MSG_BYTES]> {
        let p = &self.public.params;
        let q = p.ring.q();
        let u = PolyVec::new(
            ct.u.iter()
                .map(|row| {
                    Poly::from_coeffs(p.ring, row.iter().map(|&c| decompress(c, p.du, q)).collect())
                })
                .collect::<Result<_>>()?,
        )?;
        let v = Poly::from_coeffs(p.ring, ct.v.iter().map(|&c| decompress(c, p.dv, q)).collect())?;
        let w = v.sub(&self.s.dot(&u)?)?;
        let mut m = [0u8; MSG_BYTES];
        for (i, &c) in w.coeffs().iter().take(MSG_BYTES * 8).enumerate() {
            if compress(c, 1, q) == 1 {
                m[i / 8] |= 1 << (i % 8);
            }
        }
        Ok(m)
    }
}

impl KemCiphertext {
    /// `packed-u ∥ packed-v`, each compressed value little-endian bit-packed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let flat: Vec<u32> = self.u.iter().flatten().copied().collect();
        let mut out = bits::pack(&flat, self.du);
        out.extend(bits::pack(&self.v, self.dv));
        out
    }

    pub fn from_bytes(params: &KemParams, bytes: &[u8]) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed {
            what: "KEM ciphertext",
            reason,
        };
        if bytes.len() != params.ciphertext_len() {
            return Err(malformed(format!(
                "expected {} bytes, got {}",
                params.ciphertext_len(),
                bytes.len()
            )));
        }
        let n = params.ring.n();
        let split = bits::packed_len(params.k * n, params.du);
        let flat = bits::unpack(&bytes[..split], params.du, params.k * n)
            .ok_or_else(|| malformed("u block".into()))?;
        let v = bits::unpack(&bytes[split..], params.dv, n)
            .ok_or_else(|| malformed("v block".into()))?;
        Ok(KemCiphertext {
            du: params.du,
            dv: params.dv,
            u: flat.chunks(n).map(<[u32]>::to_vec).collect(),
            v,
        })
    }
}

fn ct_hash(ct_bytes: &[u8]) -> [u8; 32] {
    hash32(b"pqfl/kem/ct", &[ct_bytes])
}

pub fn kem_keygen(params: KemParams, rng_seed: &[u8; 32]) -> Result<KemKeyPair> {
    keygen_with(params, rng_seed, false).map(|(kp, _)| kp)
}

/// Key generation that also returns the noise vector `e`, optionally forced
/// to zero.
pub(crate) fn keygen_with(
    params: KemParams,
    rng_seed: &[u8; 32],
    zero_noise: bool,
) -> Result<(KemKeyPair, PolyVec)> {
    params.validate()?;
    let mut expanded = [0u8; 96];
    xof256(b"pqfl/kem/keygen", &[rng_seed]).read(&mut expanded);
    let seed_a: [u8; 32] = expanded[..32].try_into().expect("32");
    let sigma: [u8; 32] = expanded[32..64].try_into().expect("32");
    let z_reject: [u8; 32] = expanded[64..].try_into().expect("32");
    let matrix = expand_matrix(&params, &seed_a);
    let s = cbd_vec(&params, &sigma, 0, params.eta1)?;
    let e = if zero_noise {
        PolyVec::zero(params.ring, params.k)
    } else {
        cbd_vec(&params, &sigma, params.k as u32, params.eta1)?
    };
    let t = matrix.mul_vec(&s)?.add(&e)?;
    let public = KemPublicKey::assemble(params, seed_a, t);
    Ok((KemKeyPair { public, s, z_reject }, e))
}

pub fn kem_encapsulate(pk: &KemPublicKey, rng_seed: &[u8; 32]) -> Result<(KemCiphertext, SharedSecret)> {
    let m = hash32(b"pqfl/kem/msg", &[rng_seed, &pk.hash]);
    let coins = hash32(b"pqfl/kem/coins", &[&m, &pk.hash]);
    let ct = pk.encrypt(&m, &coins)?;
    let key = hash32(b"pqfl/kem/shared", &[&m, &ct_hash(&ct.to_bytes())]);
    Ok((ct, SharedSecret(key)))
}

pub fn kem_decapsulate(kp: &KemKeyPair, ct: &KemCiphertext) -> Result<SharedSecret> {
    let p = &kp.public.params;
    if ct.du != p.du
        || ct.dv != p.dv
        || ct.u.len() != p.k
        || ct.u.iter().any(|r| r.len() != p.ring.n())
        || ct.v.len() != p.ring.n()
        || ct.u.iter().flatten().any(|&c| c >> p.du != 0)
        || ct.v.iter().any(|&c| c >> p.dv != 0)
    {
        return Err(Error::Malformed {
            what: "KEM ciphertext",
            reason: "shape does not match key parameters".into(),
        });
    }
    let m = kp.decrypt(ct)?;
    let coins = hash32(b"pqfl/kem/coins", &[&m, &kp.public.hash]);
    let recomputed = kp.public.encrypt(&m, &coins)?;
    let h = ct_hash(&ct.to_bytes());
    if &recomputed == ct {
        Ok(SharedSecret(hash32(b"pqfl/kem/shared", &[&m, &h])))
    } else {
        Ok(SharedSecret(hash32(b"pqfl/kem/reject", &[&kp.z_reject, &h])))
    }
}
