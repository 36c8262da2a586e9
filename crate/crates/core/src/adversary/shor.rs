//! Classical order finding in place of quantum period finding, plus the
//! post-processing that turns an order into factors.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Caps the moduli the simulated attacker will take on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantumOracle {
    pub max_modulus_bits: u32,
}

impl Default for QuantumOracle {
    fn default() -> Self {
        QuantumOracle { max_modulus_bits: 32 }
    }
}

impl QuantumOracle {
    fn check(&self, n: u64) -> Result<()> {
        let fits = self.max_modulus_bits >= 64 || n <= 1u64 << self.max_modulus_bits;
        if !fits || n > u32::MAX as u64 {
            return Err(Error::ModulusTooLarge {
                modulus: n,
                max_bits: self.max_modulus_bits.min(32),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderOutcome {
    Order(u64),
    /// `gcd(a, n) > 1` already exposes a factor.
    SharedFactor(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorOutcome {
    Factors(u64, u64),
    Retry,
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn mul_mod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, n: u64) -> u64 {
    let mut acc = 1 % n;
    base %= n;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, n);
        }
        base = mul_mod(base, base, n);
        exp >>= 1;
    }
    acc
}

/// Inverse of `a` modulo `n` when `gcd(a, n) = 1`.
pub(crate) fn inv_mod(a: u64, n: u64) -> Option<u64> {
    let (mut r0, mut r1) = (n as i128, (a % n) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    (r0 == 1).then(|| t0.rem_euclid(n as i128) as u64)
}

/// Smallest `r > 0` with `a^r ≡ 1 (mod n)`, by baby-step giant-step.
fn multiplicative_order(a: u64, n: u64) -> u64 {
    let m = (n as f64).sqrt().ceil() as u64 + 1;
    let mut baby: HashMap<u64, u64> = HashMap::with_capacity(m as usize);
    let mut cur = 1u64;
    for j in 0..m {
        if j > 0 && cur == 1 {
            return j;
        }
        baby.entry(cur).or_insert(j);
        cur = mul_mod(cur, a, n);
    }
    // a^(i·m + j) = 1  <=>  a^j = (a^-m)^i
    let giant = pow_mod(inv_mod(a, n).expect("coprime"), m, n);
    let mut gamma = giant;
    for i in 1..=m {
        if let Some(&j) = baby.get(&gamma) {
            return i * m + j;
        }
        gamma = mul_mod(gamma, giant, n);
    }
    unreachable!("the order of a unit is below n")
}

/// Order of `a` modulo `n`, or the factor `gcd(a, n)` when it is nontrivial.
pub fn shor_order_find(a: u64, n: u64, oracle: &QuantumOracle) -> Result<OrderOutcome> {
    oracle.check(n)?;
    if !(1 < a && a < n) {
        return Err(Error::InvalidArgument {
            field: "a".into(),
            reason: format!("{a} is not in (1, {n})"),
        });
    }
    let g = gcd(a, n);
    if g > 1 {
        return Ok(OrderOutcome::SharedFactor(g));
    }
    Ok(OrderOutcome::Order(multiplicative_order(a, n)))
}

/// Factors from an even order whose half-power is not `-1`.
pub fn factor_from_order(a: u64, r: u64, n: u64) -> FactorOutcome {
    if r == 0 || r % 2 == 1 {
        return FactorOutcome::Retry;
    }
    let x = pow_mod(a, r / 2, n);
    if x == n - 1 {
        return FactorOutcome::Retry;
    }
    let p = gcd((x + n - 1) % n, n);
    if p == 1 || p == n {
        return FactorOutcome::Retry;
    }
    FactorOutcome::Factors(p, n / p)
}

/// Full loop: random bases until one yields a split. Returns `(p, q)` with
/// `p <= q`.
pub fn factor_modulus(n: u64, oracle: &QuantumOracle, rng_seed: u64) -> Result<(u64, u64)> {
    oracle.check(n)?;
    if n < 4 {
        return Err(Error::InvalidArgument {
            field: "n".into(),
            reason: format!("{n} has no nontrivial factorization"),
        });
    }
    if n % 2 == 0 {
        return Ok((2, n / 2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..200 {
        let a = rng.gen_range(2..n);
        let found = match shor_order_find(a, n, oracle)? {
            OrderOutcome::SharedFactor(g) => Some((g, n / g)),
            OrderOutcome::Order(r) => match factor_from_order(a, r, n) {
                FactorOutcome::Factors(p, q) => Some((p, q)),
                FactorOutcome::Retry => None,
            },
        };
        if let Some((p, q)) = found {
            return Ok((p.min(q), p.max(q)));
        }
    }
    Err(Error::InvalidArgument {
        field: "n".into(),
        reason: format!("no split of {n} found; it may be a prime power"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Powers of `a` until 1.
    fn naive_order(a: u64, n: u64) -> u64 {
        let mut x = a % n;
        let mut r = 1;
        while x != 1 {
            x = x * a % n;
            r += 1;
        }
        r
    }

    #[test]
    fn order_examples() {
        let o = QuantumOracle::default();
        assert_eq!(shor_order_find(2, 15, &o).unwrap(), OrderOutcome::Order(4));
        assert_eq!(shor_order_find(2, 21, &o).unwrap(), OrderOutcome::Order(6));
        assert_eq!(shor_order_find(5, 15, &o).unwrap(), OrderOutcome::SharedFactor(5));
        assert!(shor_order_find(1, 15, &o).is_err());
        assert!(matches!(
            shor_order_find(2, (1 << 33) + 1, &o),
            Err(Error::ModulusTooLarge { .. })
        ));
        assert!(shor_order_find(2, 1 << 20 | 1, &QuantumOracle { max_modulus_bits: 16 }).is_err());
    }

    #[test]
    fn baby_giant_matches_iteration() {
        for n in [15u64, 21, 35, 77, 143, 3233, 10403, 65_021] {
            for a in 2..60.min(n) {
                if gcd(a, n) == 1 {
                    assert_eq!(multiplicative_order(a, n), naive_order(a, n), "a={a} n={n}");
                }
            }
        }
    }

    #[test]
    fn factoring_examples() {
        assert_eq!(factor_from_order(2, 4, 15), FactorOutcome::Factors(3, 5));
        assert_eq!(factor_from_order(2, 3, 15), FactorOutcome::Retry);
        // 14 ≡ -1 (mod 15)
        assert_eq!(factor_from_order(14, 2, 15), FactorOutcome::Retry);
        assert_eq!(factor_modulus(3233, &QuantumOracle::default(), 1).unwrap(), (53, 61));
    }

    #[test]
    fn factors_multiply_back() {
        let o = QuantumOracle::default();
        for (seed, n) in [(1u64, 3233u64), (2, 65_021 * 3), (3, 4_292_870_399)] {
            let (p, q) = factor_modulus(n, &o, seed).unwrap();
            assert_eq!(p * q, n);
            assert!(p > 1 && q > 1);
        }
    }
}
