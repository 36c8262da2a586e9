//! Negacyclic number-theoretic transform.
//!
//! `X^n + 1` is split by Cooley–Tukey butterflies into `m` factors
//! `X^b - γ_i` where `b = n / m` and `m` is the largest power of two with
//! `2m | q - 1` (capped at `n`). For Dilithium-class moduli this is a full
//! transform (`b = 1`); for q = 3329 at n = 256 it stops one layer early
//! (`b = 2`) and products are finished with small base multiplications.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::RingParams;

#[derive(Debug)]
pub(crate) struct NttPlan {
    pub n: usize,
    pub q: u32,
    /// Degree of each residue block.
    pub base: usize,
    /// `zetas[k] = ζ^{brv(k)}`, `ζ` a primitive `2m`-th root of unity.
    zetas: Vec<u32>,
    zetas_inv: Vec<u32>,
    /// `gammas[i] = ζ^{2·brv(i) + 1}`: block `i` lives modulo `X^b - gammas[i]`.
    gammas: Vec<u32>,
    m_inv: u32,
}

#[inline]
pub(crate) fn mul_mod(a: u32, b: u32, q: u32) -> u32 {
    ((a as u64 * b as u64) % q as u64) as u32
}

#[inline]
pub(crate) fn add_mod(a: u32, b: u32, q: u32) -> u32 {
    let s = a + b;
    if s >= q {
        s - q
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub_mod(a: u32, b: u32, q: u32) -> u32 {
    if a >= b {
        a - b
    } else {
        a + q - b
    }
}

pub(crate) fn pow_mod(mut base: u32, mut exp: u64, q: u32) -> u32 {
    let mut acc = 1u32 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

fn prime_factors(mut v: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= v {
        if v % p == 0 {
            out.push(p);
            while v % p == 0 {
                v /= p;
            }
        }
        p += 1;
    }
    if v > 1 {
        out.push(v);
    }
    out
}

fn smallest_generator(q: u32) -> u32 {
    let order = (q - 1) as u64;
    let factors = prime_factors(order);
    (2..q)
        .find(|&g| factors.iter().all(|&f| pow_mod(g, order / f, q) != 1))
        .expect("a prime modulus has a generator")
}

/// Number of residue blocks `m` the transform can split into, or `None` when
/// `q ≢ 1 (mod n)`.
pub(crate) fn split_count(n: usize, q: u32) -> Option<usize> {
    let mut m = n;
    while m >= 1 && (q as u64 - 1) % (2 * m as u64) != 0 {
        m /= 2;
    }
    if m == 0 || m * 2 < n {
        None
    } else {
        Some(m)
    }
}

impl NttPlan {
    fn build(params: RingParams) -> NttPlan {
        let (n, q) = (params.n(), params.q());
        let m = split_count(n, q).expect("RingParams are validated on construction");
        let levels = m.trailing_zeros();
        let g = smallest_generator(q);
        let zeta = pow_mod(g, (q as u64 - 1) / (2 * m as u64), q);
        let zetas: Vec<u32> = (0..m)
            .map(|k| pow_mod(zeta, bit_reverse(k, levels) as u64, q))
            .collect();
        let zetas_inv = zetas.iter().map(|&z| pow_mod(z, q as u64 - 2, q)).collect();
        let gammas = (0..m)
            .map(|i| pow_mod(zeta, 2 * bit_reverse(i, levels) as u64 + 1, q))
            .collect();
        let m_inv = pow_mod(m as u32 % q, q as u64 - 2, q);
        NttPlan {
            n,
            q,
            base: n / m,
            zetas,
            zetas_inv,
            gammas,
            m_inv,
        }
    }

    pub fn forward(&self, a: &mut [u32]) {
        let q = self.q;
        let mut len = self.n / 2;
        let mut k = 1;
        while len >= self.base {
            for start in (0..self.n).step_by(2 * len) {
                let z = self.zetas[k];
                k += 1;
                for j in start..start + len {
                    let t = mul_mod(z, a[j + len], q);
                    a[j + len] = sub_mod(a[j], t, q);
                    a[j] = add_mod(a[j], t, q);
                }
            }
            len /= 2;
        }
    }

    pub fn inverse(&self, a: &mut [u32]) {
        let q = self.q;
        let mut len = self.base;
        while len <= self.n / 2 {
            let first_k = self.n / (2 * len);
            for (block, start) in (0..self.n).step_by(2 * len).enumerate() {
                let z_inv = self.zetas_inv[first_k + block];
                for j in start..start + len {
                    let u = a[j];
                    let v = a[j + len];
                    a[j] = add_mod(u, v, q);
                    a[j + len] = mul_mod(sub_mod(u, v, q), z_inv, q);
                }
            }
            len *= 2;
        }
        for c in a.iter_mut() {
            *c = mul_mod(*c, self.m_inv, q);
        }
    }

    /// Blockwise product of two transformed operands.
    pub fn pointwise(&self, a: &[u32], b: &[u32], out: &mut [u32]) {
        let q = self.q;
        let bsz = self.base;
        if bsz == 1 {
            for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                *o = mul_mod(x, y, q);
            }
            return;
        }
        for (i, gamma) in self.gammas.iter().enumerate() {
            let lo = i * bsz;
            let (ab, bb) = (&a[lo..lo + bsz], &b[lo..lo + bsz]);
            let ob = &mut out[lo..lo + bsz];
            ob.iter_mut().for_each(|c| *c = 0);
            for (x, &ax) in ab.iter().enumerate() {
                for (y, &by) in bb.iter().enumerate() {
                    let p = mul_mod(ax, by, q);
                    if x + y < bsz {
                        ob[x + y] = add_mod(ob[x + y], p, q);
                    } else {
                        ob[x + y - bsz] = add_mod(ob[x + y - bsz], mul_mod(p, *gamma, q), q);
                    }
                }
            }
        }
    }
}

type PlanCache = RwLock<HashMap<RingParams, Arc<NttPlan>>>;

pub(crate) fn plan(params: RingParams) -> Arc<NttPlan> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(p) = cache.read().expect("plan cache poisoned").get(&params) {
        return Arc::clone(p);
    }
    let built = Arc::new(NttPlan::build(params));
    cache
        .write()
        .expect("plan cache poisoned")
        .entry(params)
        .or_insert(built)
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts() {
        assert_eq!(split_count(256, 3329), Some(128));
        assert_eq!(split_count(256, 8380417), Some(256));
        assert_eq!(split_count(4, 17), Some(4));
        assert_eq!(split_count(256, 7681), Some(256));
        assert_eq!(split_count(256, 12289), Some(256));
        assert_eq!(split_count(8, 7), None);
    }

    #[test]
    fn roots_have_the_right_order() {
        let p = plan(RingParams::new(256, 3329).unwrap());
        // gamma blocks are the 128 distinct roots of X^128 + 1.
        let mut g = p.gammas.clone();
        g.sort_unstable();
        g.dedup();
        assert_eq!(g.len(), 128);
        for &x in &p.gammas {
            assert_eq!(pow_mod(x, 128, 3329), 3328);
        }
        assert_eq!(p.base, 2);
    }

    #[test]
    fn pow_mod_small() {
        assert_eq!(pow_mod(3, 4, 17), 81 % 17);
        assert_eq!(pow_mod(5, 0, 17), 1);
    }
}
