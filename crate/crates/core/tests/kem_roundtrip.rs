use pqfl_core::hash::derive_seed;
use pqfl_core::kem::{kem_decapsulate, kem_encapsulate, kem_keygen, KemCiphertext, KemParams, KemPublicKey};
use pqfl_core::Exec;

fn seed(tag: &str, i: u64) -> [u8; 32] {
    derive_seed(tag, i, &[])
}

#[test]
fn keygen_and_encaps_are_deterministic() {
    let p = KemParams::default();
    let a = kem_keygen(p, &seed("k", 1)).unwrap();
    let b = kem_keygen(p, &seed("k", 1)).unwrap();
    assert_eq!(a.public(), b.public());
    assert_eq!(a.secret(), b.secret());
    let x = kem_encapsulate(a.public(), &seed("e", 1)).unwrap();
    let y = kem_encapsulate(a.public(), &seed("e", 1)).unwrap();
    assert_eq!(x, y);
    let z = kem_encapsulate(a.public(), &seed("e", 2)).unwrap();
    assert_ne!(x.0, z.0);
    assert_ne!(x.1, z.1);
}

#[test]
fn roundtrips_over_many_keys() {
    for k in [2usize, 3] {
        let p = KemParams::with_rank(k);
        let failures: usize = Exec::Parallel
            .map_range(500, |i| {
                let kp = kem_keygen(p, &seed("rk", i as u64)).unwrap();
                let (ct, ss) = kem_encapsulate(kp.public(), &seed("re", i as u64)).unwrap();
                usize::from(kem_decapsulate(&kp, &ct).unwrap() != ss)
            })
            .into_iter()
            .sum();
        assert_eq!(failures, 0, "rank {k}");
    }
}

#[test]
fn public_key_and_ciphertext_bytes_roundtrip() {
    let p = KemParams::default();
    let kp = kem_keygen(p, &seed("b", 0)).unwrap();
    let pk = KemPublicKey::from_bytes(p, &kp.public().to_bytes()).unwrap();
    assert_eq!(&pk, kp.public());
    let (ct, ss) = kem_encapsulate(&pk, &seed("b", 1)).unwrap();
    let parsed = KemCiphertext::from_bytes(&p, &ct.to_bytes()).unwrap();
    assert_eq!(parsed, ct);
    assert_eq!(kem_decapsulate(&kp, &parsed).unwrap(), ss);
    assert!(KemPublicKey::from_bytes(p, &kp.public().to_bytes()[1..]).is_err());
}

#[test]
fn tampered_ciphertexts_fall_back_to_implicit_rejection() {
    let p = KemParams::default();
    let kp = kem_keygen(p, &seed("t", 0)).unwrap();
    let mut rejected = Vec::new();
    for trial in 0..100u64 {
        let (ct, ss) = kem_encapsulate(kp.public(), &seed("t", trial + 1)).unwrap();
        let mut bytes = ct.to_bytes();
        let bit = (trial as usize * 131) % (bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        let bad = KemCiphertext::from_bytes(&p, &bytes).unwrap();
        let first = kem_decapsulate(&kp, &bad).unwrap();
        assert_ne!(first, ss, "trial {trial}");
        assert_eq!(kem_decapsulate(&kp, &bad).unwrap(), first);
        rejected.push(first);
    }
    let mut distinct = rejected.clone();
    distinct.sort_by_key(|s| *s.as_bytes());
    distinct.dedup();
    assert_eq!(distinct.len(), rejected.len());
}
