use pqfl_core::hash::derive_seed;
use pqfl_core::ring::{Poly, PolyVec};
use pqfl_core::sig::{
    sig_keygen, sig_sign, sig_sign_counted, sig_verify, sig_verify_bytes, SigParams, Signature,
};
use pqfl_core::Exec;

fn seed(tag: &str, i: u64) -> [u8; 32] {
    derive_seed(tag, i, &[])
}

fn message(i: u64) -> Vec<u8> {
    derive_seed("msg", i, &[]).repeat(1 + (i % 3) as usize)
}

#[test]
fn signing_is_deterministic() {
    let kp = sig_keygen(SigParams::default(), &seed("k", 0)).unwrap();
    let a = sig_sign(&kp, b"hello", &seed("s", 0)).unwrap();
    let b = sig_sign(&kp, b"hello", &seed("s", 0)).unwrap();
    assert_eq!(a, b);
    let kp2 = sig_keygen(SigParams::default(), &seed("k", 0)).unwrap();
    assert_eq!(kp.public(), kp2.public());
}

#[test]
fn completeness_bounds_binding_and_restarts() {
    let p = SigParams::default();
    let kp = sig_keygen(p, &seed("k", 1)).unwrap();
    let bound = (p.gamma1 - p.beta) as u64;
    let results = Exec::Parallel.map_range(1000, |i| {
        let m = message(i as u64);
        let (sig, attempts) = sig_sign_counted(&kp, &m, &seed("s", i as u64)).unwrap();
        let ok = sig_verify(kp.public(), &m, &sig);
        let mut tampered = m.clone();
        let bit = (i * 37) % (m.len() * 8);
        tampered[bit / 8] ^= 1 << (bit % 8);
        let rejected = !sig_verify(kp.public(), &tampered, &sig);
        (ok, rejected, (sig.z().inf_norm() as u64) < bound, attempts)
    });
    assert!(results.iter().all(|r| r.0), "completeness");
    assert!(results.iter().all(|r| r.1), "binding");
    assert!(results.iter().all(|r| r.2), "z bound");
    let mean = results.iter().map(|r| r.3 as f64).sum::<f64>() / results.len() as f64;
    assert!((1.0..=20.0).contains(&mean), "mean attempts {mean}");
}

#[test]
fn oversized_z_is_rejected() {
    let p = SigParams::default();
    let kp = sig_keygen(p, &seed("k", 2)).unwrap();
    let sig = sig_sign(&kp, b"m", &seed("s", 2)).unwrap();
    let mut coeffs: Vec<Vec<i64>> = sig.z().entries().iter().map(Poly::centered_coeffs).collect();
    coeffs[1][7] = (p.gamma1 - p.beta) as i64;
    let z = PolyVec::new(coeffs.iter().map(|c| Poly::from_signed(p.ring, c).unwrap()).collect()).unwrap();
    assert!(!sig_verify(kp.public(), b"m", &Signature::new(z, *sig.c_seed())));
}

#[test]
fn perturbing_z_breaks_the_signature() {
    let p = SigParams::default();
    let kp = sig_keygen(p, &seed("k", 3)).unwrap();
    let rejected: usize = Exec::Parallel
        .map_range(1000, |i| {
            let m = message(i as u64 + 5000);
            let sig = sig_sign(&kp, &m, &seed("s", i as u64)).unwrap();
            let mut coeffs: Vec<Vec<i64>> =
                sig.z().entries().iter().map(Poly::centered_coeffs).collect();
            let (row, col) = (i % p.l, (i * 53) % p.ring.n());
            coeffs[row][col] += 1;
            let z = PolyVec::new(coeffs.iter().map(|c| Poly::from_signed(p.ring, c).unwrap()).collect())
                .unwrap();
            usize::from(!sig_verify(kp.public(), &m, &Signature::new(z, *sig.c_seed())))
        })
        .into_iter()
        .sum();
    assert!(rejected >= 999, "rejected {rejected}/1000");
}

#[test]
fn signature_bytes_roundtrip_and_garbage_rejects() {
    let p = SigParams::default();
    let kp = sig_keygen(p, &seed("k", 4)).unwrap();
    let sig = sig_sign(&kp, b"payload", &seed("s", 4)).unwrap();
    let bytes = sig.to_bytes(&p);
    assert_eq!(bytes.len(), p.signature_len());
    assert_eq!(Signature::from_bytes(&p, &bytes).unwrap(), sig);
    assert!(sig_verify_bytes(kp.public(), b"payload", &bytes));
    assert!(!sig_verify_bytes(kp.public(), b"payload", &bytes[1..]));
    assert!(!sig_verify_bytes(kp.public(), b"payload", &vec![0xff; bytes.len()]));
    let other = sig_keygen(p, &seed("k", 5)).unwrap();
    assert!(!sig_verify_bytes(other.public(), b"payload", &bytes));
}
