//! Fiat–Shamir-with-aborts signatures over Module-SIS.
//!
//! A signature is `(z, c)` with `z = y + c·s1`, where `y` is a fresh masking
//! vector and `c` a sparse ±1 challenge hashed from `HighBits(A·y)` and the
//! message. Signing restarts until `z` leaks nothing about `s1` and the
//! verifier's recomputation `A·z − c·t = A·y − c·s2` has the same high bits.
//! The full `t` is published, so there is no hint vector.

use serde::{Deserialize, Serialize};
use sha3::digest::XofReader;

use crate::bits;
use crate::error::{Error, Result};
use crate::hash::{hash32, xof256};
use crate::ring::{reduce_signed, sample_uniform, Poly, PolyMat, PolyVec, RingParams};

/// Attempts after which signing gives up; only reachable with broken
/// parameters.
pub const MAX_SIGN_ATTEMPTS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigParams {
    pub ring: RingParams,
    pub k: usize,
    pub l: usize,
    /// Masking bound; `‖y‖∞ < gamma1`. Must be a power of two.
    pub gamma1: u32,
    /// Rejection margin, normally `tau · eta`.
    pub beta: u32,
    /// Secret coefficients lie in `[-eta, eta]`.
    pub eta: u32,
    /// Nonzero coefficients in a challenge.
    pub tau: u32,
    /// High/low split position: `w = HighBits(w)·2^d + LowBits(w)`.
    pub d: u32,
}

impl Default for SigParams {
    fn default() -> Self {
        SigParams {
            ring: RingParams::sig_default(),
            k: 4,
            l: 4,
            gamma1: 1 << 17,
            beta: 39 * 2,
            eta: 2,
            tau: 39,
            d: 17,
        }
    }
}

impl SigParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSigParams(m));
        let qbits = 32 - self.ring.q().leading_zeros();
        if self.k < 1 || self.l < 1 {
            return bad(format!("k={}, l={} must be positive", self.k, self.l));
        }
        if !(self.gamma1 > self.beta && self.beta > 0) {
            return bad(format!("need gamma1 > beta > 0 (gamma1={}, beta={})", self.gamma1, self.beta));
        }
        if !self.gamma1.is_power_of_two() || self.gamma1 as u64 * 2 >= self.ring.q() as u64 {
            return bad(format!("gamma1={} must be a power of two below q/2", self.gamma1));
        }
        if self.eta < 1 || self.eta > 127 {
            return bad(format!("eta={} must lie in [1, 127]", self.eta));
        }
        if self.tau < 1 || self.tau > 64 || self.tau as usize > self.ring.n() {
            return bad(format!("tau={} must lie in [1, min(64, n)]", self.tau));
        }
        if self.d < 2 || self.d >= qbits || (1u32 << (self.d - 1)) <= self.beta {
            return bad(format!("d={} must satisfy 2^(d-1) > beta and d < log2 q", self.d));
        }
        Ok(())
    }

    /// Width of one packed `z` coefficient (two's complement).
    pub fn z_bits(&self) -> u32 {
        self.gamma1.trailing_zeros() + 1
    }

    pub fn signature_len(&self) -> usize {
        bits::packed_len(self.l * self.ring.n(), self.z_bits()) + 32
    }

    pub fn public_key_len(&self) -> usize {
        32 + self.k * self.ring.n() * self.ring.coeff_bytes()
    }

    fn z_bound(&self) -> i64 {
        (self.gamma1 - self.beta) as i64
    }
}

/// Splits `w` into `(HighBits, LowBits)` with `w ≡ high·2^d + low (mod q)`.
///
/// The low part is the centered residue mod `2^d`. When that rounds `w` up
/// to `q − 1` or beyond, the value is folded into bucket 0 with
/// `low = w − q`, so high bits are well defined around the wrap.
pub fn decompose(w: u32, d: u32, q: u32) -> (u32, i64) {
    let size = 1i64 << d;
    let mut low = w as i64 & (size - 1);
    if low > size / 2 {
        low -= size;
    }
    let base = w as i64 - low;
    if base >= q as i64 - 1 {
        (0, w as i64 - q as i64)
    } else {
        ((base >> d) as u32, low)
    }
}

fn high_bits(v: &PolyVec, d: u32) -> Vec<u32> {
    v.entries()
        .iter()
        .flat_map(|p| {
            let q = p.params().q();
            p.coeffs().iter().map(move |&c| decompose(c, d, q).0)
        })
        .collect()
}

fn low_bits_norm(v: &PolyVec, d: u32) -> u64 {
    v.entries()
        .iter()
        .flat_map(|p| {
            let q = p.params().q();
            p.coeffs().iter().map(move |&c| decompose(c, d, q).1.unsigned_abs())
        })
        .max()
        .unwrap_or(0)
}

fn challenge_seed(high: &[u32], message: &[u8]) -> [u8; 32] {
    let bytes: Vec<u8> = high.iter().flat_map(|h| h.to_le_bytes()).collect();
    hash32(b"pqfl/sig/challenge", &[&bytes, message])
}

/// Expands a challenge seed into a polynomial with exactly `tau` coefficients
/// equal to ±1 and the rest zero.
pub fn sample_in_ball(ring: RingParams, seed: &[u8; 32], tau: u32) -> Poly {
    let n = ring.n();
    let mut stream = xof256(b"pqfl/sig/ball", &[seed]);
    let mut sign_bytes = [0u8; 8];
    stream.read(&mut sign_bytes);
    let mut signs = u64::from_le_bytes(sign_bytes);
    let mut c = vec![0i64; n];
    for i in n - tau as usize..n {
        let j = loop {
            let mut b = [0u8; 2];
            stream.read(&mut b);
            let j = u16::from_le_bytes(b) as usize & (n - 1);
            if j <= i {
                break j;
            }
        };
        c[i] = c[j];
        c[j] = if signs & 1 == 1 { -1 } else { 1 };
        signs >>= 1;
    }
    Poly::from_signed(ring, &c).expect("n coefficients")
}

fn sample_small(ring: RingParams, seed: &[u8; 32], nonce: u32, eta: u32) -> Poly {
    let bound = 2 * eta + 1;
    let limit = 256 - 256 % bound;
    let mut stream = xof256(b"pqfl/sig/small", &[seed, &nonce.to_le_bytes()]);
    let mut out = Vec::with_capacity(ring.n());
    while out.len() < ring.n() {
        let mut b = [0u8; 1];
        stream.read(&mut b);
        if (b[0] as u32) < limit {
            out.push(eta as i64 - (b[0] as u32 % bound) as i64);
        }
    }
    Poly::from_signed(ring, &out).expect("n coefficients")
}

fn sample_mask(params: &SigParams, stream_seed: &[u8; 32], index: u32) -> Poly {
    let g = params.gamma1;
    let span = 2 * g - 1;
    let bits = params.z_bits();
    let mask = (1u32 << bits) - 1;
    let mut stream = xof256(b"pqfl/sig/mask", &[stream_seed, &index.to_le_bytes()]);
    let mut out = Vec::with_capacity(params.ring.n());
    while out.len() < params.ring.n() {
        let mut b = [0u8; 4];
        stream.read(&mut b[..3]);
        let v = u32::from_le_bytes(b) & mask;
        if v < span {
            out.push(v as i64 - (g as i64 - 1));
        }
    }
    Poly::from_signed(params.ring, &out).expect("n coefficients")
}

fn expand_matrix(params: &SigParams, seed: &[u8; 32]) -> PolyMat {
    let entries = (0..params.k * params.l)
        .map(|idx| {
            let (i, j) = (idx / params.l, idx % params.l);
            sample_uniform(params.ring, seed, (i << 8 | j) as u32 | 0x1_0000)
        })
        .collect();
    PolyMat::new(params.k, params.l, entries).expect("entries share params")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigPublicKey {
    params: SigParams,
    seed_a: [u8; 32],
    t: PolyVec,
    matrix: PolyMat,
}

#[derive(Debug, Clone)]
pub struct SigKeyPair {
    public: SigPublicKey,
    s1: PolyVec,
    s2: PolyVec,
    signing_seed: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    z: PolyVec,
    c_seed: [u8; 32],
}

impl SigPublicKey {
    pub fn params(&self) -> &SigParams {
        &self.params
    }

    pub fn t(&self) -> &PolyVec {
        &self.t
    }

    pub fn matrix(&self) -> &PolyMat {
        &self.matrix
    }

    /// `seed_A ∥ t` with plain coefficient serialization.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.seed_a.to_vec();
        out.extend(self.t.to_bytes());
        out
    }

    pub fn from_bytes(params: SigParams, bytes: &[u8]) -> Result<Self> {
        params.validate()?;
        if bytes.len() != params.public_key_len() {
            return Err(Error::Malformed {
                what: "signature public key",
                reason: format!("expected {} bytes, got {}", params.public_key_len(), bytes.len()),
            });
        }
        let seed_a: [u8; 32] = bytes[..32].try_into().expect("32");
        let t = PolyVec::from_bytes(params.ring, params.k, &bytes[32..])?;
        Ok(SigPublicKey {
            params,
            seed_a,
            t,
            matrix: expand_matrix(&params, &seed_a),
        })
    }
}

impl SigKeyPair {
    pub fn public(&self) -> &SigPublicKey {
        &self.public
    }

    pub fn s1(&self) -> &PolyVec {
        &self.s1
    }

    pub fn s2(&self) -> &PolyVec {
        &self.s2
    }
}

impl Signature {
    pub fn new(z: PolyVec, c_seed: [u8; 32]) -> Self {
        Signature { z, c_seed }
    }

    pub fn z(&self) -> &PolyVec {
        &self.z
    }

    pub fn c_seed(&self) -> &[u8; 32] {
        &self.c_seed
    }

    pub fn challenge(&self, params: &SigParams) -> Poly {
        sample_in_ball(params.ring, &self.c_seed, params.tau)
    }

    /// Packed `z` (two's complement, `log2(gamma1) + 1` bits per
    /// coefficient, little-endian bit stream) followed by the challenge seed.
    pub fn to_bytes(&self, params: &SigParams) -> Vec<u8> {
        let bits_w = params.z_bits();
        let mask = (1u64 << bits_w) - 1;
        let q = params.ring.q();
        let flat: Vec<u32> = self
            .z
            .entries()
            .iter()
            .flat_map(|p| p.coeffs().iter().map(move |&c| crate::ring::centered(c, q)))
            .map(|v| (v as u64 & mask) as u32)
            .collect();
        let mut out = bits::pack(&flat, bits_w);
        out.extend_from_slice(&self.c_seed);
        out
    }

    pub fn from_bytes(params: &SigParams, bytes: &[u8]) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed {
            what: "signature",
            reason,
        };
        if bytes.len() != params.signature_len() {
            return Err(malformed(format!(
                "expected {} bytes, got {}",
                params.signature_len(),
                bytes.len()
            )));
        }
        let n = params.ring.n();
        let bits_w = params.z_bits();
        let split = bytes.len() - 32;
        let flat = bits::unpack(&bytes[..split], bits_w, params.l * n)
            .ok_or_else(|| malformed("z block".into()))?;
        let sign_bit = 1u32 << (bits_w - 1);
        let q = params.ring.q();
        let entries = flat
            .chunks(n)
            .map(|chunk| {
                let vals: Vec<u32> = chunk
                    .iter()
                    .map(|&v| {
                        let signed = if v & sign_bit != 0 {
                            v as i64 - (1i64 << bits_w)
                        } else {
                            v as i64
                        };
                        reduce_signed(signed, q)
                    })
                    .collect();
                Poly::from_coeffs(params.ring, vals)
            })
            .collect::<Result<_>>()?;
        Ok(Signature {
            z: PolyVec::new(entries)?,
            c_seed: bytes[split..].try_into().expect("32"),
        })
    }
}

pub fn sig_keygen(params: SigParams, rng_seed: &[u8; 32]) -> Result<SigKeyPair> {
    params.validate()?;
    let mut expanded = [0u8; 96];
    xof256(b"pqfl/sig/keygen", &[rng_seed]).read(&mut expanded);
    let seed_a: [u8; 32] = expanded[..32].try_into().expect("32");
    let secret_seed: [u8; 32] = expanded[32..64].try_into().expect("32");
    let signing_seed: [u8; 32] = expanded[64..].try_into().expect("32");
    let matrix = expand_matrix(&params, &seed_a);
    let s1 = PolyVec::new(
        (0..params.l as u32)
            .map(|i| sample_small(params.ring, &secret_seed, i, params.eta))
            .collect(),
    )?;
    let s2 = PolyVec::new(
        (0..params.k as u32)
            .map(|i| sample_small(params.ring, &secret_seed, 0x100 + i, params.eta))
            .collect(),
    )?;
    let t = matrix.mul_vec(&s1)?.add(&s2)?;
    Ok(SigKeyPair {
        public: SigPublicKey {
            params,
            seed_a,
            t,
            matrix,
        },
        s1,
        s2,
        signing_seed,
    })
}

pub fn sig_sign(kp: &SigKeyPair, message: &[u8], rng_seed: &[u8; 32]) -> Result<Signature> {
    sig_sign_counted(kp, message, rng_seed).map(|(s, _)| s)
}

/// Signs and also reports how many attempts the rejection loop took
/// (1 means the first candidate was accepted).
pub fn sig_sign_counted(kp: &SigKeyPair, message: &[u8], rng_seed: &[u8; 32]) -> Result<(Signature, u32)> {
    let p = kp.public.params;
    let stream_seed = hash32(b"pqfl/sig/stream", &[&kp.signing_seed, rng_seed, message]);
    for attempt in 1..=MAX_SIGN_ATTEMPTS {
        let y = PolyVec::new(
            (0..p.l as u32)
                .map(|i| sample_mask(&p, &stream_seed, attempt * p.l as u32 + i))
                .collect(),
        )?;
        let w = kp.public.matrix.mul_vec(&y)?;
        let w1 = high_bits(&w, p.d);
        let c_seed = challenge_seed(&w1, message);
        let c = sample_in_ball(p.ring, &c_seed, p.tau);
        let z = y.add(&kp.s1.scale(&c)?)?;
        if z.inf_norm() as i64 >= p.z_bound() {
            continue;
        }
        let r = w.sub(&kp.s2.scale(&c)?)?;
        if low_bits_norm(&r, p.d) >= (1u64 << (p.d - 1)) - p.beta as u64 || high_bits(&r, p.d) != w1 {
            continue;
        }
        return Ok((Signature { z, c_seed }, attempt));
    }
    Err(Error::SigningAborted(MAX_SIGN_ATTEMPTS))
}

/// Accepts iff `‖z‖∞ < gamma1 − beta` and the challenge re-derives from
/// `HighBits(A·z − c·t)`. Never errors; anything malformed is a reject.
pub fn sig_verify(pk: &SigPublicKey, message: &[u8], sig: &Signature) -> bool {
    let p = &pk.params;
    if sig.z.len() != p.l || sig.z.entries().iter().any(|e| e.params() != p.ring) {
        return false;
    }
    if sig.z.inf_norm() as i64 >= p.z_bound() {
        return false;
    }
    let c = sig.challenge(p);
    let az = match pk.matrix.mul_vec(&sig.z) {
        Ok(v) => v,
        Err(_) => return false,
    };
    let ct = match pk.t.scale(&c) {
        Ok(v) => v,
        Err(_) => return false,
    };
    match az.sub(&ct) {
        Ok(w) => challenge_seed(&high_bits(&w, p.d), message) == sig.c_seed,
        Err(_) => false,
    }
}

/// [`sig_verify`] on encoded signature bytes.
pub fn sig_verify_bytes(pk: &SigPublicKey, message: &[u8], sig_bytes: &[u8]) -> bool {
    match Signature::from_bytes(&pk.params, sig_bytes) {
        Ok(sig) => sig_verify(pk, message, &sig),
        Err(_) => false,
    }
}
