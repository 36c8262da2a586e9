use pqfl_core::dp::{dp_sanitize, NoiseMechanism};
use pqfl_core::fl::{l2_norm, GradientUpdate};
use pqfl_core::Exec;
use proptest::prelude::*;

#[test]
fn empirical_sigma_within_two_percent() {
    let m = NoiseMechanism::gaussian(1.0, 1e-5, 1.0).unwrap();
    let zero = GradientUpdate::new(0, 0, vec![0.0; 10]).unwrap();
    // 10^5 draws of a 10-dim update = 10^6 coordinates.
    let sums = Exec::Parallel.map_range(100, |chunk| {
        let mut s = (0.0, 0.0);
        for k in 0..1000u64 {
            for v in dp_sanitize(&zero, &m, chunk as u64 * 1000 + k).unwrap().delta() {
                s.0 += v;
                s.1 += v * v;
            }
        }
        s
    });
    let n = 1e6;
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = s1 / n;
    let sd = (s2 / n - mean * mean).sqrt();
    assert!((sd / m.sigma() - 1.0).abs() < 0.02, "sd {sd} vs sigma {}", m.sigma());
}

#[test]
fn noise_is_centered_on_the_clipped_update() {
    let m = NoiseMechanism::gaussian(1.0, 1e-5, 1.0).unwrap();
    let u = GradientUpdate::new(0, 0, vec![3.0, 4.0]).unwrap();
    let clipped = [0.6, 0.8];
    let n = 100_000usize;
    let draws = Exec::Parallel.map_range(n, |k| dp_sanitize(&u, &m, k as u64).unwrap().into_delta());
    for j in 0..2 {
        let mean = draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
        let se = m.sigma() / (n as f64).sqrt();
        assert!((mean - clipped[j]).abs() < 3.0 * se, "coord {j}: mean {mean}");
    }
}

proptest! {
    #[test]
    fn clip_bound_before_noise(v in prop::collection::vec(-100.0f64..100.0, 1..20), c in 0.01f64..10.0) {
        let clipped = pqfl_core::dp::clip_to_norm(&v, c);
        prop_assert!(l2_norm(&clipped) <= c);
        if l2_norm(&v) <= c {
            prop_assert_eq!(clipped, v);
        }
    }
}
