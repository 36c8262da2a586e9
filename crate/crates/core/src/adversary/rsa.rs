//! Textbook RSA with moduli below 2^32: the classical baseline whose
//! ciphertexts the eavesdropper can later open.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::shor::{gcd, inv_mod, pow_mod};
use crate::error::{Error, Result};

/// The half of the key that travels on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaPublicKey {
    pub n_modulus: u64,
    pub e_pub: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaToyKey {
    pub n_modulus: u64,
    pub e_pub: u64,
    pub d_priv: u64,
    /// Kept for test assertions.
    pub p: u64,
    pub q_factor: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Encrypt,
    Decrypt,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut i = 3;
    while i * i <= n {
        if n % i == 0 {
            return false;
        }
        i += 2;
    }
    true
}

impl RsaToyKey {
    /// Key from chosen primes, with `e` the first prime from 17 upward
    /// coprime to `φ(n)`.
    pub fn from_primes(p: u64, q: u64) -> Result<Self> {
        if !is_prime(p) || !is_prime(q) || p == q {
            return Err(Error::InvalidArgument {
                field: "primes".into(),
                reason: format!("{p} and {q} must be distinct primes"),
            });
        }
        let n = p * q;
        if n > u32::MAX as u64 {
            return Err(Error::ModulusTooLarge { modulus: n, max_bits: 32 });
        }
        let phi = (p - 1) * (q - 1);
        let mut e = 17;
        while gcd(e, phi) != 1 {
            e += 2;
            while !is_prime(e) {
                e += 2;
            }
        }
        if e >= phi {
            return Err(Error::InvalidArgument {
                field: "primes".into(),
                reason: format!("φ({n}) = {phi} is too small for a public exponent"),
            });
        }
        let d = inv_mod(e, phi).expect("e coprime to phi");
        Ok(RsaToyKey {
            n_modulus: n,
            e_pub: e,
            d_priv: d,
            p,
            q_factor: q,
        })
    }

    pub fn public(&self) -> RsaPublicKey {
        RsaPublicKey {
            n_modulus: self.n_modulus,
            e_pub: self.e_pub,
        }
    }
}

fn random_prime(rng: &mut ChaCha8Rng, bits: u32) -> u64 {
    let lo = 1u64 << (bits - 1);
    let hi = 1u64 << bits;
    loop {
        let c = rng.gen_range(lo..hi) | 1;
        if c < hi && is_prime(c) {
            return c;
        }
    }
}

/// Two primes of about `bits / 2` bits each.
pub fn rsa_toy_keygen(bits: u32, rng_seed: u64) -> Result<RsaToyKey> {
    if !(8..=32).contains(&bits) {
        return Err(Error::InvalidArgument {
            field: "rsa_bits".into(),
            reason: format!("{bits} is outside 8..=32"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    loop {
        let p = random_prime(&mut rng, bits / 2);
        let q = random_prime(&mut rng, bits - bits / 2);
        if p == q {
            continue;
        }
        if let Ok(key) = RsaToyKey::from_primes(p, q) {
            return Ok(key);
        }
    }
}

/// `block^e mod n` or `block^d mod n`.
pub fn rsa_toy_cipher(key: &RsaToyKey, block: u64, direction: Direction) -> Result<u64> {
    let exp = match direction {
        Direction::Encrypt => key.e_pub,
        Direction::Decrypt => key.d_priv,
    };
    raw(key.n_modulus, exp, block)
}

fn raw(n: u64, exp: u64, block: u64) -> Result<u64> {
    if block >= n {
        return Err(Error::BlockOutOfRange { block, modulus: n });
    }
    Ok(pow_mod(block, exp, n))
}

impl RsaPublicKey {
    /// Plaintext bytes per block: the largest width whose values stay below `n`.
    pub fn block_bytes(&self) -> usize {
        let bits = 64 - self.n_modulus.leading_zeros() as usize;
        (bits.saturating_sub(1)) / 8
    }

    pub fn to_bytes(&self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[..4].copy_from_slice(&(self.n_modulus as u32).to_le_bytes());
        out[4..].copy_from_slice(&(self.e_pub as u32).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 8 {
            return Err(Error::Malformed {
                what: "RSA public key",
                reason: format!("expected 8 bytes, got {}", bytes.len()),
            });
        }
        Ok(RsaPublicKey {
            n_modulus: u32::from_le_bytes(bytes[..4].try_into().unwrap()) as u64,
            e_pub: u32::from_le_bytes(bytes[4..].try_into().unwrap()) as u64,
        })
    }

    /// `len u32 ∥ c_0 ∥ c_1 ∥ …` with each ciphertext block as a u32, the
    /// plaintext split into little-endian blocks of [`Self::block_bytes`].
    pub fn encrypt_payload(&self, plain: &[u8]) -> Result<Vec<u8>> {
        let width = self.block_bytes();
        if width == 0 {
            return Err(Error::InvalidArgument {
                field: "rsa_bits".into(),
                reason: format!("modulus {} is too small to carry a byte", self.n_modulus),
            });
        }
        let mut out = Vec::with_capacity(4 + 4 * plain.len().div_ceil(width));
        out.extend_from_slice(&(plain.len() as u32).to_le_bytes());
        for chunk in plain.chunks(width) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            let c = raw(self.n_modulus, self.e_pub, u64::from_le_bytes(buf))?;
            out.extend_from_slice(&(c as u32).to_le_bytes());
        }
        Ok(out)
    }
}

/// Inverse of [`RsaPublicKey::encrypt_payload`] given the private exponent.
pub fn decrypt_payload(public: &RsaPublicKey, d_priv: u64, bytes: &[u8]) -> Result<Vec<u8>> {
    let malformed = |reason: String| Error::Malformed {
        what: "RSA payload",
        reason,
    };
    let width = public.block_bytes();
    if bytes.len() < 4 || width == 0 {
        return Err(malformed("missing length".into()));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let blocks = &bytes[4..];
    if blocks.len() % 4 != 0 || blocks.len() / 4 != len.div_ceil(width) {
        return Err(malformed(format!("{} block bytes for a {len}-byte plaintext", blocks.len())));
    }
    let mut out = Vec::with_capacity(len);
    for c in blocks.chunks_exact(4) {
        let m = raw(public.n_modulus, d_priv, u32::from_le_bytes(c.try_into().unwrap()) as u64)?;
        out.extend_from_slice(&m.to_le_bytes()[..width]);
    }
    out.truncate(len);
    Ok(out)
}
