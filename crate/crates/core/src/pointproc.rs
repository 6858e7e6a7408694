//! Counting windows, laws of counts and total variation distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::perturb::{trial_rng, FieldSampler, UField};
use crate::tree::RadixSequence;

/// Tolerance on `Σ p_k + tail = 1`.
const NORMALISATION_TOL: f64 = 1e-12;

/// The closed interval `I_ℓ = [t_0 - c/(2π_ℓ), t_0 + c/(2π_ℓ)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t0: f64,
    pub c: f64,
    pub level: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(radices: &RadixSequence, t0: f64, c: f64, level: usize) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::invalid("c", "must be finite and nonnegative"));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0", "must be finite"));
        }
        radices.order(level)?;
        let half = c / (2.0 * radices.ln_order(level).exp());
        Ok(Self {
            t0,
            c,
            level,
            lo: t0 - half,
            hi: t0 + half,
        })
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, u: f64) -> bool {
        self.lo <= u && u <= self.hi
    }

    /// Image of the window under `u ↦ λ_H (1 + u)`.
    pub fn eigen_interval(&self, lambda_h: f64) -> (f64, f64) {
        (lambda_h * (1.0 + self.lo), lambda_h * (1.0 + self.hi))
    }

    /// Number of values in the window.
    pub fn count(&self, values: &[f64]) -> u64 {
        count_in(values, self.lo, self.hi)
    }
}

/// `#{v ∈ [lo, hi]}`.
pub fn count_in(values: &[f64], lo: f64, hi: f64) -> u64 {
    values.iter().filter(|&&v| lo <= v && v <= hi).count() as u64
}

/// `W_ℓ = #{g ∈ G_ℓ : U_g ∈ I_ℓ}`.
pub fn count_w(field: &UField, window: &Window) -> Result<u64> {
    if field.level != window.level {
        return Err(Error::invalid(
            "window",
            format!(
                "field is on level {}, window on level {}",
                field.level, window.level
            ),
        ));
    }
    Ok(window.count(&field.values))
}

/// Law on `{0, …, kmax}` plus the mass beyond `kmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaw {
    pub probs: Vec<f64>,
    pub tail: f64,
}

impl DiscreteLaw {
    pub fn new(probs: Vec<f64>, tail: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("law support"));
        }
        if probs
            .iter()
            .chain([&tail])
            .any(|&p| !(p >= 0.0 && p.is_finite()))
        {
            return Err(Error::invalid(
                "law",
                "masses must be finite and nonnegative",
            ));
        }
        let total: f64 = probs.iter().sum::<f64>() + tail;
        if (total - 1.0).abs() > NORMALISATION_TOL {
            return Err(Error::invalid(
                "law",
                format!("total mass {total} is not 1"),
            ));
        }
        Ok(Self { probs, tail })
    }

    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self { probs, tail: 0.0 }
    }

    pub fn kmax(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Mean over the explicit support; the tail contributes nothing.
    pub fn partial_mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Same law on `{0, …, k}`, with mass past `k` added to the tail.
    /// Extending is only meaningful when the tail is zero.
    fn folded(&self, k: usize) -> (Vec<f64>, f64) {
        let mut probs = vec![0.0; k + 1];
        let mut tail = self.tail;
        for (i, &p) in self.probs.iter().enumerate() {
            if i <= k {
                probs[i] = p;
            } else {
                tail += p;
            }
        }
        (probs, tail)
    }
}

/// Histogram of per-trial counts; merging is exact and order-independent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bins: Vec<u64>,
    pub trials: u64,
    pub hits: u128,
}

impl CountHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, count: u64) {
        let k = count as usize;
        if self.bins.len() <= k {
            self.bins.resize(k + 1, 0);
        }
        self.bins[k] += 1;
        self.trials += 1;
        self.hits += count as u128;
    }

    pub fn merge(&mut self, other: &CountHistogram) {
        if self.bins.len() < other.bins.len() {
            self.bins.resize(other.bins.len(), 0);
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        self.trials += other.trials;
        self.hits += other.hits;
    }

    pub fn mean(&self) -> f64 {
        self.hits as f64 / self.trials as f64
    }

    /// `p̂_ℓ`: fraction of sites whose value fell in the window.
    pub fn site_frequency(&self, sites: usize) -> f64 {
        self.hits as f64 / (self.trials as f64 * sites as f64)
    }

    pub fn law(&self) -> Result<DiscreteLaw> {
        if self.trials == 0 {
            return Err(Error::Empty("trial counts"));
        }
        let n = self.trials as f64;
        Ok(DiscreteLaw {
            probs: self.bins.iter().map(|&b| b as f64 / n).collect(),
            tail: 0.0,
        })
    }
}

/// Trials per parallel block.
const BLOCK: u64 = 512;

/// Seed for the level-`ℓ` run of a multi-level experiment, so that levels
/// draw from unrelated keystreams.
pub fn level_seed(seed: u64, level: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (level as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Histogram of `W_ℓ` over trials `0..trials`.
///
/// Each trial reads its own stream, so the result does not depend on how
/// the blocks are scheduled.
pub fn simulate_counts(
    sampler: &FieldSampler,
    window: &Window,
    trials: u64,
    seed: u64,
) -> Result<CountHistogram> {
    if sampler.level() != window.level {
        return Err(Error::invalid(
            "window",
            format!(
                "sampler is on level {}, window on level {}",
                sampler.level(),
                window.level
            ),
        ));
    }
    let blocks: Vec<CountHistogram> = (0..trials.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut hist = CountHistogram::new();
            let mut values = Vec::with_capacity(sampler.leaves());
            let mut scratch = Vec::with_capacity(sampler.leaves());
            for trial in b * BLOCK..((b + 1) * BLOCK).min(trials) {
                let mut rng = trial_rng(seed, trial);
                sampler.sample_into(&mut rng, &mut values, &mut scratch);
                hist.push(window.count(&values));
            }
            hist
        })
        .collect();
    let mut total = CountHistogram::new();
    for b in &blocks {
        total.merge(b);
    }
    Ok(total)
}

/// `U_site` over trials `0..trials`, in trial order.
pub fn simulate_site(
    sampler: &FieldSampler,
    site: usize,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if site >= sampler.leaves() {
        return Err(Error::LeafOutOfRange {
            leaf: site,
            size: sampler.leaves(),
        });
    }
    let blocks: Vec<Vec<f64>> = (0..trials.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut values = Vec::with_capacity(sampler.leaves());
            let mut scratch = Vec::with_capacity(sampler.leaves());
            (b * BLOCK..((b + 1) * BLOCK).min(trials))
                .map(|trial| {
                    let mut rng = trial_rng(seed, trial);
                    sampler.sample_into(&mut rng, &mut values, &mut scratch);
                    values[site]
                })
                .collect()
        })
        .collect();
    Ok(blocks.concat())
}

/// Relative frequencies of the observed counts; `kmax` is the largest one.
pub fn empirical_law(counts: &[u64]) -> Result<DiscreteLaw> {
    let mut h = CountHistogram::new();
    for &c in counts {
        h.push(c);
    }
    h.law()
}

/// Smallest `k` with `P(Poi(λ) ≤ k) ≥ 1 - eps`.
pub fn poisson_quantile(lambda: f64, eps: f64) -> Result<usize> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", "must be finite and nonnegative"));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let mut k = lambda.floor() as usize;
    // upper tail P(X > k) = P(k+1, λ), regularized lower incomplete gamma
    while gamma_lr(k as f64 + 1.0, lambda) > eps {
        k += 1 + (k / 64);
    }
    while k > 0 && gamma_lr(k as f64, lambda) <= eps {
        k -= 1;
    }
    Ok(k)
}

/// Default truncation for Poisson laws.
pub fn default_kmax(lambda: f64) -> Result<usize> {
    poisson_quantile(lambda, 1e-10)
}

/// `Poi(λ)` on `{0, …, kmax}`; masses in log space, tail from the
/// incomplete gamma function.
pub fn poisson_law(lambda: f64, kmax: usize) -> Result<DiscreteLaw> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", "must be finite and nonnegative"));
    }
    if lambda == 0.0 {
        let mut law = DiscreteLaw::point_mass(0);
        law.probs.resize(kmax + 1, 0.0);
        return Ok(law);
    }
    let ln_l = lambda.ln();
    let probs = (0..=kmax)
        .map(|k| (k as f64 * ln_l - lambda - ln_gamma(k as f64 + 1.0)).exp())
        .collect();
    Ok(DiscreteLaw {
        probs,
        tail: gamma_lr(kmax as f64 + 1.0, lambda),
    })
}

/// Total variation distance, bracketed when unresolved tail mass remains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvDistance {
    pub lower: f64,
    pub upper: f64,
}

impl TvDistance {
    /// Midpoint of the bracket; exact when `lower == upper`.
    pub fn value(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn is_exact(&self) -> bool {
        self.upper - self.lower <= 1e-15
    }
}

/// `½ Σ |a_k - b_k|` on a common support.
///
/// Both laws are folded onto the shortest support that still carries all
/// explicit mass of any law with a nonzero tail. The unresolved tails
/// contribute `½|t_A - t_B|` to the lower and `½(t_A + t_B)` to the upper
/// end of the bracket.
pub fn tv(a: &DiscreteLaw, b: &DiscreteLaw) -> TvDistance {
    let open = [a, b]
        .into_iter()
        .filter(|l| l.tail > 0.0)
        .map(DiscreteLaw::kmax)
        .min();
    let k = open.unwrap_or_else(|| a.kmax().max(b.kmax()));
    let (pa, ta) = a.folded(k);
    let (pb, tb) = b.folded(k);
    let body: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum();
    TvDistance {
        lower: (0.5 * (body + (ta - tb).abs())).min(1.0),
        upper: (0.5 * (body + ta + tb)).min(1.0),
    }
}

/// `d_TV(Poi(λ_1), Poi(λ_2))` by direct summation to negligible tails.
pub fn tv_poisson(l1: f64, l2: f64) -> Result<f64> {
    let k = poisson_quantile(l1.max(l2), 1e-17)? + 1;
    let d = tv(&poisson_law(l1, k)?, &poisson_law(l2, k)?);
    Ok(d.lower)
}

/// `primary_bound + d_TV(Poi(λ_ℓ), Poi(λ))`.
pub fn tv_poisson_triangle(lambda_ell: f64, lambda: f64, primary_bound: f64) -> Result<f64> {
    Ok(primary_bound + tv_poisson(lambda_ell, lambda)?)
}

/// Plug-in TV between an empirical law and a fixed reference, with
/// sampling diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub tv: TvDistance,
    /// Delta-method standard error of the plug-in estimate.
    pub std_error: f64,
    /// `½ √(S/N)`, a bound on the upward bias from sampling noise.
    pub bias_bound: f64,
    pub trials: u64,
}

pub fn tv_estimate(
    empirical: &DiscreteLaw,
    trials: u64,
    reference: &DiscreteLaw,
) -> Result<TvEstimate> {
    if trials == 0 {
        return Err(Error::Empty("trial counts"));
    }
    let d = tv(empirical, reference);
    let k = empirical.kmax().max(reference.kmax());
    let (p, _) = empirical.folded(k);
    let (q, _) = reference.folded(k);
    // d TV / d p_k = ½ sign(p_k - q_k)
    let (mut s1, mut s2) = (0.0, 0.0);
    for (pk, qk) in p.iter().zip(&q) {
        let s = if pk > qk {
            1.0
        } else if pk < qk {
            -1.0
        } else {
            0.0
        };
        s1 += s * pk;
        s2 += s * s * pk;
    }
    let n = trials as f64;
    let support = p.iter().filter(|&&x| x > 0.0).count() as f64;
    Ok(TvEstimate {
        tv: d,
        std_error: ((s2 - s1 * s1).max(0.0) / (4.0 * n)).sqrt(),
        bias_bound: 0.5 * (support / n).sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn binary(depth: usize) -> RadixSequence {
        RadixSequence::constant(2, depth).unwrap()
    }

    fn field(level: usize, values: Vec<f64>) -> UField {
        UField {
            level,
            values,
            shared_tail: 0.0,
            seed: 0,
            trial: 0,
        }
    }

    #[test]
    fn simulation_is_schedule_independent() {
        use crate::perturb::{AlphaTable, NoiseFamily, NoiseSpec};
        let radices = binary(6);
        let alpha = AlphaTable::p_adic(2, 2.0).unwrap();
        let noise = NoiseSpec::iid(NoiseFamily::Uniform).unwrap();
        let sampler = FieldSampler::new(&radices, &alpha, &noise, 5, 1e-5).unwrap();
        let w = Window::new(&radices, 0.0, std::f64::consts::PI, 5).unwrap();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| simulate_counts(&sampler, &w, 2000, 17).unwrap());
        let b = four.install(|| simulate_counts(&sampler, &w, 2000, 17).unwrap());
        assert_eq!(a, b);
        // trial t of the run is the t-th single draw
        let direct: u64 = (0..2000)
            .map(|t| w.count(&sampler.sample(17, t).values))
            .sum();
        assert_eq!(a.hits, direct as u128);
        let sites = simulate_site(&sampler, 3, 100, 17).unwrap();
        assert_eq!(sites[42], sampler.sample(17, 42).values[3]);
        assert_ne!(level_seed(17, 4), level_seed(17, 5));
    }

    #[test]
    fn window_geometry() {
        let w = Window::new(&binary(4), 0.1, std::f64::consts::PI, 3).unwrap();
        assert_relative_eq!(w.hi - w.lo, std::f64::consts::PI / 8.0, epsilon = 1e-15);
        assert_relative_eq!(w.half_width(), std::f64::consts::PI / 16.0, epsilon = 1e-15);
        assert!(Window::new(&binary(4), 0.0, -1.0, 3).is_err());
        assert!(Window::new(&binary(4), 0.0, 1.0, 5).is_err());
    }

    #[test]
    fn count_examples() {
        let f = field(2, vec![-0.9, -0.1, 0.3, 0.99]);
        let all = Window::new(&binary(2), 0.0, 8.0, 2).unwrap();
        assert_eq!(count_w(&f, &all).unwrap(), 4);
        let empty = Window::new(&binary(2), 0.3, 0.0, 2).unwrap();
        // closed interval: the degenerate window still contains its centre
        assert_eq!(count_w(&f, &empty).unwrap(), 1);
        let empty = Window::new(&binary(2), 0.2, 0.0, 2).unwrap();
        assert_eq!(count_w(&f, &empty).unwrap(), 0);
        let other = Window::new(&binary(3), 0.0, 8.0, 3).unwrap();
        assert!(count_w(&f, &other).is_err());
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(
            empirical_law(&[0, 0, 0]).unwrap(),
            DiscreteLaw::point_mass(0)
        );
        let l = empirical_law(&[1, 2]).unwrap();
        assert_eq!(l.probs, vec![0.0, 0.5, 0.5]);
        assert!(empirical_law(&[]).is_err());
    }

    #[test]
    fn histogram_merge_is_order_independent() {
        let mut a = CountHistogram::new();
        let mut b = CountHistogram::new();
        for c in [3, 1, 4, 1, 5] {
            a.push(c);
        }
        for c in [9, 2, 6] {
            b.push(c);
        }
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.trials, 8);
        assert_relative_eq!(ab.mean(), 31.0 / 8.0);
        assert_relative_eq!(ab.law().unwrap().partial_mean(), ab.mean(), epsilon = 1e-15);
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_law(0.0, 3).unwrap().probs, vec![1.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(
            poisson_law(1.0, 5).unwrap().probs[0],
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        for lambda in [0.1, 1.0, 7.5, 20.0, 50.0] {
            for kmax in [0, 3, 20, 80, 200] {
                let l = poisson_law(lambda, kmax).unwrap();
                let total: f64 = l.probs.iter().sum::<f64>() + l.tail;
                assert!(
                    (total - 1.0).abs() < 1e-12,
                    "λ={lambda} kmax={kmax} total={total}"
                );
            }
        }
        assert!(poisson_law(-1.0, 3).is_err());
        let k = default_kmax(1.0).unwrap();
        assert!(poisson_law(1.0, k).unwrap().tail <= 1e-10);
        assert!(poisson_law(1.0, k - 1).unwrap().tail > 1e-10);
    }

    #[test]
    fn tv_examples() {
        let p1 = poisson_law(1.0, 40).unwrap();
        assert_eq!(tv(&p1, &p1).lower, 0.0);
        let d = tv(&DiscreteLaw::point_mass(0), &p1);
        assert_relative_eq!(d.lower, 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        assert!(d.is_exact());
        // direct series
        let mut series = 0.0;
        let mut fact = 1.0;
        for k in 0..60 {
            if k > 0 {
                fact *= k as f64;
            }
            let a = (-1.0f64).exp() / fact;
            let b = 1.1f64.powi(k) * (-1.1f64).exp() / fact;
            series += 0.5 * (a - b).abs();
        }
        assert_relative_eq!(tv_poisson(1.0, 1.1).unwrap(), series, epsilon = 1e-10);
    }

    #[test]
    fn tv_brackets_unresolved_tails() {
        let a = DiscreteLaw::new(vec![0.5, 0.3], 0.2).unwrap();
        let b = DiscreteLaw::new(vec![0.5, 0.2, 0.3], 0.0).unwrap();
        let d = tv(&a, &b);
        // fold b to {0,1}: tail 0.3
        assert_relative_eq!(d.lower, 0.5 * (0.1 + 0.1));
        assert_relative_eq!(d.upper, 0.5 * (0.1 + 0.5));
    }

    #[test]
    fn triangle_examples() {
        assert_relative_eq!(tv_poisson_triangle(2.0, 2.0, 0.3).unwrap(), 0.3);
        assert_relative_eq!(
            tv_poisson_triangle(0.0, 1.0, 0.0).unwrap(),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-12
        );
        let v = tv_poisson_triangle(1.05, 1.0, 0.1).unwrap();
        assert_relative_eq!(v, 0.1 + tv_poisson(1.05, 1.0).unwrap());
    }

    #[test]
    fn tv_estimate_diagnostics() {
        let reference = poisson_law(1.0, 30).unwrap();
        let emp = DiscreteLaw::new(vec![0.4, 0.35, 0.2, 0.05], 0.0).unwrap();
        let e = tv_estimate(&emp, 10_000, &reference).unwrap();
        assert!(e.std_error > 0.0 && e.std_error < 0.01);
        assert_relative_eq!(e.bias_bound, 0.5 * (4.0f64 / 10_000.0).sqrt());
    }

    fn law_strategy() -> impl Strategy<Value = DiscreteLaw> {
        prop::collection::vec(0.0f64..1.0, 6).prop_filter_map("nonzero", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-6).then(|| DiscreteLaw {
                probs: w.iter().map(|x| x / s).collect(),
                tail: 0.0,
            })
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(a in law_strategy(), b in law_strategy(), c in law_strategy()) {
            let ab = tv(&a, &b).lower;
            prop_assert!((ab - tv(&b, &a).lower).abs() < 1e-15);
            prop_assert!(ab <= tv(&a, &c).lower + tv(&c, &b).lower + 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(tv(&a, &a).lower, 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
