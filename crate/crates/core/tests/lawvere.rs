use learning_diagrams::compiler::{contractivity_check, random_trial, FiniteLawvere};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_space(rng: &mut impl Rng, n: usize) -> FiniteLawvere {
    let w = (0..n * n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..4.0) }).collect();
    FiniteLawvere::closure(n, w)
}

/// Quotient distance by relaxing over the original points, with free
/// moves between points of the same fiber.
fn quotient_oracle(s: &FiniteLawvere, q: &[usize], m: usize) -> Vec<f64> {
    let n = s.len();
    let mut out = vec![f64::INFINITY; m * m];
    for start in 0..n {
        let mut dist = vec![f64::INFINITY; n];
        for a in 0..n {
            if q[a] == q[start] {
                dist[a] = 0.0;
            }
        }
        for _ in 0..=n {
            for a in 0..n {
                for b in 0..n {
                    let step = if q[a] == q[b] { 0.0 } else { s.d(a, b) };
                    if dist[a] + step < dist[b] {
                        dist[b] = dist[a] + step;
                    }
                }
            }
        }
        for b in 0..n {
            let cell = &mut out[q[start] * m + q[b]];
            *cell = cell.min(dist[b]);
        }
    }
    out
}

#[test]
fn triangle_inequality_on_1000_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(1..=9);
        let s = random_space(&mut rng, n);
        for _ in 0..50 {
            let (a, b, c) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            assert_eq!(s.d(a, a), 0.0);
            assert!(s.d(a, c) <= s.d(a, b) + s.d(b, c) + 1e-12, "({a},{b},{c})");
            checked += 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quotient_matches_pointwise_relaxation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=8);
        let s = random_space(&mut rng, n);
        let m = rng.gen_range(1..=n);
        let mut q: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
        q[..m].copy_from_slice(&(0..m).collect::<Vec<_>>());
        let quot = s.quotient(&q, m);
        let want = quotient_oracle(&s, &q, m);
        for i in 0..m {
            for j in 0..m {
                prop_assert!((quot.d(i, j) - want[i * m + j]).abs() <= 1e-12);
            }
        }
        // q is 1-Lipschitz and the quotient is itself a Lawvere space
        for a in 0..n {
            for b in 0..n {
                prop_assert!(quot.d(q[a], q[b]) <= s.d(a, b) + 1e-12);
            }
        }
        let flat: Vec<f64> = (0..m * m).map(|k| quot.d(k / m, k % m)).collect();
        prop_assert!(FiniteLawvere::new(m, flat).is_ok());
    }

    #[test]
    fn generated_trials_satisfy_their_preconditions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for identity in [false, true] {
            let t = random_trial(&mut rng, identity);
            let out = contractivity_check(&t).unwrap();
            prop_assert!(out.holds);
            if identity {
                prop_assert_eq!(out.upper, out.lower);
            }
        }
    }
}
