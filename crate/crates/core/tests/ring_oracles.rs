use pqfl_core::ring::{
    ntt_forward, ntt_inverse, poly_add, poly_mul_negacyclic, sample_cbd, sample_uniform, centered,
    NttPoly, Poly, RingParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(n²) negacyclic product, reducing with X^n = -1 by hand.
fn schoolbook(a: &Poly, b: &Poly) -> Vec<u32> {
    let n = a.params().n();
    let q = a.params().q() as i128;
    let mut acc = vec![0i128; n];
    for (i, &x) in a.coeffs().iter().enumerate() {
        for (j, &y) in b.coeffs().iter().enumerate() {
            let p = x as i128 * y as i128;
            if i + j < n {
                acc[i + j] += p;
            } else {
                acc[i + j - n] -= p;
            }
        }
    }
    acc.iter().map(|v| v.rem_euclid(q) as u32).collect()
}

fn random_poly(rng: &mut ChaCha8Rng, p: RingParams) -> Poly {
    Poly::from_coeffs(p, (0..p.n()).map(|_| rng.gen_range(0..p.q())).collect()).unwrap()
}

fn all_params() -> [RingParams; 4] {
    [
        RingParams::new(4, 17).unwrap(),
        RingParams::kem_default(),
        RingParams::sig_default(),
        RingParams::new(64, 7681).unwrap(),
    ]
}

#[test]
fn ntt_product_matches_schoolbook() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in all_params() {
        for _ in 0..200 {
            let a = random_poly(&mut rng, p);
            let b = random_poly(&mut rng, p);
            let fast = poly_mul_negacyclic(&a, &b).unwrap();
            assert_eq!(fast.coeffs(), schoolbook(&a, &b).as_slice());
            let via_domain = ntt_inverse(&ntt_forward(&a).pointwise(&ntt_forward(&b)).unwrap());
            assert_eq!(via_domain, fast);
        }
    }
}

#[test]
fn ntt_roundtrips_both_ways() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for p in all_params() {
        for _ in 0..1000 {
            let a = random_poly(&mut rng, p);
            assert_eq!(ntt_inverse(&ntt_forward(&a)), a);
            let hat = NttPoly::from_values(p, random_poly(&mut rng, p).coeffs().to_vec()).unwrap();
            assert_eq!(ntt_forward(&ntt_inverse(&hat)), hat);
        }
    }
}

#[test]
fn inverse_transform_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = RingParams::kem_default();
    for _ in 0..100 {
        let a = NttPoly::from_values(p, random_poly(&mut rng, p).coeffs().to_vec()).unwrap();
        let b = NttPoly::from_values(p, random_poly(&mut rng, p).coeffs().to_vec()).unwrap();
        let lhs = ntt_inverse(&a.add(&b).unwrap());
        let rhs = poly_add(&ntt_inverse(&a), &ntt_inverse(&b)).unwrap();
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn additive_inverse_cancels() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for p in all_params() {
        let a = random_poly(&mut rng, p);
        let q = p.q();
        let neg = Poly::from_coeffs(p, a.coeffs().iter().map(|&c| (q - c) % q).collect()).unwrap();
        assert_eq!(poly_add(&a, &neg).unwrap(), Poly::zero(p));
    }
}

/// Pearson chi-square on 64 equiprobable bins over 10^5 coefficients. The
/// 0.999 quantile of chi-square with 63 degrees of freedom is 103.44.
#[test]
fn uniform_sampler_passes_chi_square() {
    let p = RingParams::kem_default();
    let bins = 64usize;
    let q = p.q() as usize;
    let mut counts = vec![0u64; bins];
    let mut total = 0usize;
    let mut nonce = 0;
    while total < 100_000 {
        for &c in sample_uniform(p, &[42; 32], nonce).coeffs() {
            counts[c as usize * bins / q] += 1;
            total += 1;
        }
        nonce += 1;
    }
    // Bin widths differ by at most one residue; use exact expectations.
    let chi2: f64 = (0..bins)
        .map(|b| {
            let width = (0..q).filter(|&c| c * bins / q == b).count();
            let expected = total as f64 * width as f64 / q as f64;
            (counts[b] as f64 - expected).powi(2) / expected
        })
        .sum();
    assert!(chi2 < 103.44, "chi2 = {chi2}");
}

#[test]
fn cbd_mean_is_centered() {
    let p = RingParams::kem_default();
    for eta in [2u32, 3] {
        let mut sum = 0i64;
        let mut count = 0usize;
        let mut nonce = 0;
        while count < 100_000 {
            for c in sample_cbd(p, &[9; 32], nonce, eta).unwrap().coeffs() {
                sum += centered(*c, p.q());
                count += 1;
            }
            nonce += 1;
        }
        let sigma = (eta as f64 / 2.0).sqrt();
        let se = sigma / (count as f64).sqrt();
        let mean = sum as f64 / count as f64;
        assert!(mean.abs() < 3.0 * se, "eta {eta}: mean {mean}, 3se {}", 3.0 * se);
    }
}

fn arb_poly(p: RingParams) -> impl Strategy<Value = Poly> {
    proptest::collection::vec(0..p.q(), p.n()).prop_map(move |c| Poly::from_coeffs(p, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multiplication_is_associative_and_distributive(
        a in arb_poly(RingParams::kem_default()),
        b in arb_poly(RingParams::kem_default()),
        c in arb_poly(RingParams::kem_default()),
    ) {
        let ab_c = a.mul(&b).unwrap().mul(&c).unwrap();
        let a_bc = a.mul(&b.mul(&c).unwrap()).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);
        let lhs = a.mul(&b.add(&c).unwrap()).unwrap();
        let rhs = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn outputs_stay_in_range(
        a in arb_poly(RingParams::sig_default()),
        b in arb_poly(RingParams::sig_default()),
    ) {
        let q = a.params().q();
        for r in [a.add(&b).unwrap(), a.sub(&b).unwrap(), a.mul(&b).unwrap(), a.neg()] {
            prop_assert!(r.coeffs().iter().all(|&c| c < q));
        }
    }
}
