use sha3::digest::XofReader;

use super::{reduce_signed, Poly, RingParams};
use crate::error::{Error, Result};
use crate::hash::{xof128, xof256};

/// Uniform polynomial expanded from `(seed, nonce)` by rejection sampling on
/// a SHAKE128 stream. Each candidate takes `ceil(log2 q / 8)` bytes, masked
/// to the bit length of q.
pub fn sample_uniform(params: RingParams, seed: &[u8; 32], nonce: u32) -> Poly {
    let q = params.q();
    let bits = 32 - q.leading_zeros();
    let width = bits.div_ceil(8) as usize;
    let mask = if bits == 32 { u32::MAX } else { (1u32 << bits) - 1 };
    let mut reader = xof128(&[seed, &nonce.to_le_bytes()]);
    let mut coeffs = Vec::with_capacity(params.n());
    let mut buf = [0u8; 168];
    while coeffs.len() < params.n() {
        reader.read(&mut buf);
        for chunk in buf.chunks_exact(width) {
            let mut b = [0u8; 4];
            b[..width].copy_from_slice(chunk);
            let v = u32::from_le_bytes(b) & mask;
            if v < q {
                coeffs.push(v);
                if coeffs.len() == params.n() {
                    break;
                }
            }
        }
    }
    Poly::from_coeffs(params, coeffs).expect("sampled coefficients are in range")
}

/// Centered binomial polynomial: each coefficient is `Σ a_i − Σ b_i` over
/// `eta` pairs of fresh bits, stored mod q.
pub fn sample_cbd(params: RingParams, seed: &[u8; 32], nonce: u32, eta: u32) -> Result<Poly> {
    if eta != 2 && eta != 3 {
        return Err(Error::UnsupportedEta(eta));
    }
    let total_bits = 2 * eta as usize * params.n();
    let mut bytes = vec![0u8; total_bits.div_ceil(8)];
    xof256(b"pqfl/cbd", &[seed, &nonce.to_le_bytes()]).read(&mut bytes);
    let bit = |i: usize| ((bytes[i / 8] >> (i % 8)) & 1) as i64;
    let eta = eta as usize;
    let coeffs: Vec<i64> = (0..params.n())
        .map(|j| {
            let base = 2 * eta * j;
            let a: i64 = (0..eta).map(|i| bit(base + i)).sum();
            let b: i64 = (0..eta).map(|i| bit(base + eta + i)).sum();
            a - b
        })
        .collect();
    let q = params.q();
    Poly::from_coeffs(params, coeffs.iter().map(|&v| reduce_signed(v, q)).collect())
}
