use std::f64::consts::PI;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hierlap::bounds::{b1_exact, b2_bound, constant_c, NeighborhoodSelector, SequenceStats};
use hierlap::perturb::{trial_rng, AlphaTable, FieldSampler, NoiseFamily, NoiseSpec};
use hierlap::pointproc::Window;
use hierlap::tree::{Continuation, RadixSequence};

fn order(r: &RadixSequence, j: usize) -> BigUint {
    r.order_unbounded(j)
}

#[test]
fn b1_matches_the_double_sum() {
    let radices = RadixSequence::new(vec![2, 3, 2, 2], Continuation::Constant(2)).unwrap();
    let level = 4;
    let n = radices.order_usize(level).unwrap();
    for lambda in [0.3, 1.0, 2.5] {
        let p = lambda / n as f64;
        for k in 0..level {
            let mut brute = 0.0;
            for g in 0..n {
                for h in 0..n {
                    if radices.split_level(g, h).unwrap() <= k {
                        brute += p * p;
                    }
                }
            }
            let exact = b1_exact(lambda, &order(&radices, k), &order(&radices, level)).unwrap();
            assert!(
                (brute - exact).abs() <= 1e-12 * exact,
                "k={k}: {brute} vs {exact}"
            );
        }
    }
}

#[test]
fn b1_grows_with_k() {
    let radices = RadixSequence::constant(3, 8).unwrap();
    let vals: Vec<f64> = (0..8)
        .map(|k| b1_exact(1.7, &order(&radices, k), &order(&radices, 8)).unwrap())
        .collect();
    assert!(vals.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn b2_is_dominated_by_its_bound() {
    let alpha = AlphaTable::p_adic(2, 2.0).unwrap();
    let noise = NoiseSpec::iid(NoiseFamily::Uniform).unwrap();
    let c = PI;
    for level in [2usize, 3, 4] {
        let radices = RadixSequence::constant(2, level).unwrap();
        let stats = SequenceStats::new(&radices, alpha.gamma, level).unwrap();
        let k = NeighborhoodSelector::new(stats)
            .unwrap()
            .choice(level)
            .unwrap()
            .k;
        let window = Window::new(&radices, 0.0, c, level).unwrap();
        let tol = FieldSampler::default_tolerance(&radices, c, level);
        let sampler = FieldSampler::new(&radices, &alpha, &noise, level, tol).unwrap();
        let per_ball = radices.order_usize(k).unwrap();
        let trials = 1_000_000u64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        let (mut out, mut scratch) = (Vec::new(), Vec::new());
        let mut balls = vec![0u64; sampler.leaves() / per_ball];
        for t in 0..trials {
            let mut rng = trial_rng(31, t);
            sampler.sample_into(&mut rng, &mut out, &mut scratch);
            balls.iter_mut().for_each(|b| *b = 0);
            for (g, &u) in out.iter().enumerate() {
                if window.contains(u) {
                    balls[g / per_ball] += 1;
                }
            }
            // ordered pairs g ≠ h sharing the level-k ball
            let pairs: f64 = balls
                .iter()
                .map(|&b| (b * b.saturating_sub(1)) as f64)
                .sum();
            sum += pairs;
            sum_sq += pairs * pairs;
        }
        let mean = sum / trials as f64;
        let se = ((sum_sq / trials as f64 - mean * mean) / trials as f64).sqrt();
        let bound = b2_bound(
            c,
            alpha.alpha(0),
            0.5,
            &order(&radices, k),
            &order(&radices, level),
        )
        .unwrap();
        assert!(
            mean <= bound + 3.0 * se,
            "ℓ={level} k={k}: b2 ≈ {mean} ± {se}, bound {bound}"
        );
    }
}

#[test]
fn constant_stays_below_its_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let c = rng.gen_range(0.01..10.0);
        let alpha0 = rng.gen_range(0.05..1.0);
        let eta = rng.gen_range(0.05..5.0);
        let k = rng.gen_range(0.0..4.0);
        let lambda = rng.gen_range(0.0..=1.0) * c * eta / alpha0;
        let r = constant_c(lambda, c, alpha0, eta, k).unwrap();
        assert!(
            r.within_envelope && r.value <= r.envelope * (1.0 + 1e-12),
            "{r:?}"
        );
    }
}

#[test]
fn nine_level_dyadic_bound() {
    let radices = RadixSequence::constant(2, 9).unwrap();
    let stats = SequenceStats::new(&radices, 1.0, 9).unwrap();
    let selector = NeighborhoodSelector::new(stats.clone()).unwrap();
    assert_eq!(selector.choice(9).unwrap().k, 6);
    assert!((stats.target(9).unwrap() - 0.125).abs() < 1e-15);
}
