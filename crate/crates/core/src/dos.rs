//! Density of states of the perturbed spectrum.
//!
//! `U = Σ α_k ε_k` has characteristic function `φ(s) = Π_k φ_k(α_k s)`.
//! Its density and window probabilities follow by Fourier inversion:
//!
//! ```text
//! η(t_0) = (1/π) ∫_0^∞ Re(e^{-i s t_0} φ(s)) ds
//! λ(ℓ)   = (c/π) ∫_0^∞ sinc(s h) Re(e^{-i s t_0} φ(s)) ds,   h = c / (2 π_ℓ)
//! ```

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::perturb::{sinc, AlphaTable, NoiseFamily, NoiseSpec, MAX_TRUNCATION_DEPTH};
use crate::tree::RadixSequence;

/// Points per parallel chunk; fixed so sums do not depend on thread count.
const CHUNK: usize = 1 << 14;

/// Largest number of atoms enumerated in the single-density mixture.
const MAX_ATOMS: usize = 1 << 16;

/// Truncated product `φ(s) = Π_{k≤D} φ_k(α_k s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharFnSpec {
    factors: Vec<(f64, NoiseFamily)>,
}

impl CharFnSpec {
    /// Keeps levels `0..=depth`.
    pub fn with_depth(alpha: &AlphaTable, noise: &NoiseSpec, depth: usize) -> Self {
        let factors = (0..=depth)
            .map(|k| (alpha.alpha(k), *noise.family(k)))
            .filter(|(a, _)| *a > 0.0)
            .collect();
        Self { factors }
    }

    /// Truncates where the omitted weight times `s_max` is below `tol`,
    /// which bounds `|1 - Π_{k>D} φ_k(α_k s)|` for `|s| ≤ s_max`.
    pub fn new(alpha: &AlphaTable, noise: &NoiseSpec, s_max: f64, tol: f64) -> Result<Self> {
        let depth = alpha.truncation_depth(tol / s_max.max(1.0))?;
        Ok(Self::with_depth(alpha, noise, depth))
    }

    pub fn factors(&self) -> &[(f64, NoiseFamily)] {
        &self.factors
    }

    /// Levels carrying a density.
    pub fn continuous_factors(&self) -> impl Iterator<Item = &(f64, NoiseFamily)> {
        self.factors
            .iter()
            .filter(|(_, f)| f.is_absolutely_continuous())
    }

    pub fn eval(&self, s: f64) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for (a, f) in &self.factors {
            acc *= f.char_fn(a * s);
        }
        acc
    }

    /// Real part of `e^{-i s t_0} φ(s)`.
    fn inversion_integrand(&self, s: f64, t0: f64) -> f64 {
        (Complex64::from_polar(1.0, -s * t0) * self.eval(s)).re
    }
}

/// `φ(t)` truncated at `depth`.
pub fn phi(t: f64, spec: &CharFnSpec) -> Complex64 {
    spec.eval(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Target for both the cutoff tail and the step-halving difference.
    pub tol: f64,
    /// Largest cutoff `S` considered.
    pub max_cutoff: f64,
    /// Largest number of Simpson panels.
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_cutoff: 1e7,
            max_panels: 1 << 26,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    Quadrature,
    /// One continuous level mixed over the atoms of the discrete ones.
    Mixture,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub t: f64,
    pub value: f64,
    pub method: DensityMethod,
    /// Absolute error indicator: tail bound plus Richardson estimate for
    /// quadrature, one binomial standard error for histograms.
    pub error: f64,
    /// `φ` is not absolutely integrable in the truncated model.
    pub flagged: bool,
}

/// Scale `α` and decay constant `V` of one factor `|ψ(s)| ≤ V / (α s)`.
type Decay = (f64, f64);

/// Smallest `S` (by doubling) with `∫_S^∞ Π_{k<r} V_k/(α_k s) ds ≤ tol` for
/// some `r ≥ 2`, together with that tail bound.
fn cutoff(decays: &[Decay], cfg: &QuadConfig) -> (f64, f64) {
    let mut sorted: Vec<f64> = decays.iter().map(|(a, v)| v / a).collect();
    sorted.sort_by(f64::total_cmp);
    let tail_at = |s: f64| -> f64 {
        let mut best = f64::INFINITY;
        let mut ln_c = 0.0;
        for (i, c) in sorted.iter().enumerate() {
            ln_c += c.ln();
            let r = (i + 1) as f64;
            if i >= 1 {
                // Π c_k · S^{1-r} / (r - 1)
                best = best.min((ln_c + (1.0 - r) * s.ln()).exp() / (r - 1.0));
            }
        }
        best
    };
    let mut s = 8.0 / sorted.first().map(|c| 1.0 / c).unwrap_or(1.0).max(1e-300);
    s = s.max(8.0);
    while tail_at(s) > cfg.tol && s < cfg.max_cutoff {
        s *= 2.0;
    }
    let s = s.min(cfg.max_cutoff);
    (s, tail_at(s))
}

/// Composite Simpson on `[0, b]` by repeated step halving.
/// Returns the value and the Richardson error estimate.
fn simpson<F: Fn(f64) -> f64 + Sync>(f: F, b: f64, freq: f64, cfg: &QuadConfig) -> (f64, f64) {
    let period = 2.0 * std::f64::consts::PI / freq.max(1e-3);
    let mut n = ((8.0 * b / period).ceil() as usize).max(64);
    n += n % 2;
    let mut h = b / n as f64;
    let point_sum = |start: f64, step: f64, count: usize| -> f64 {
        let chunks: Vec<f64> = (0..count.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = ((c + 1) * CHUNK).min(count);
                (lo..hi).map(|i| f(start + i as f64 * step)).sum::<f64>()
            })
            .collect();
        chunks.iter().sum()
    };
    let ends = f(0.0) + f(b);
    let mut odd = point_sum(h, 2.0 * h, n / 2);
    let mut even = point_sum(2.0 * h, 2.0 * h, n / 2 - 1);
    let mut prev = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    loop {
        even += odd;
        h *= 0.5;
        odd = point_sum(h, 2.0 * h, n);
        n *= 2;
        let cur = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
        let diff = (cur - prev).abs();
        if diff < cfg.tol || 2 * n > cfg.max_panels {
            return (cur, diff / 15.0);
        }
        prev = cur;
    }
}

/// The law of `U` as seen by the inversion routines.
enum Plan {
    Quadrature {
        spec: CharFnSpec,
        s: f64,
        tail: f64,
    },
    Mixture {
        continuous: (f64, NoiseFamily),
        atoms: Vec<(f64, f64)>,
    },
}

fn plan(
    alpha: &AlphaTable,
    noise: &NoiseSpec,
    extra: Option<Decay>,
    cfg: &QuadConfig,
) -> Result<Plan> {
    let depth = alpha
        .truncation_depth(cfg.tol * 1e-6)?
        .min(MAX_TRUNCATION_DEPTH);
    let head = CharFnSpec::with_depth(alpha, noise, depth);
    let cont: Vec<(f64, NoiseFamily)> = head.continuous_factors().copied().collect();
    match cont.len() {
        0 => Err(Error::NotIntegrable(
            "no level with a density; U has no density to invert".into(),
        )),
        1 => {
            let discrete: Vec<(f64, NoiseFamily)> = head
                .factors()
                .iter()
                .filter(|(_, f)| !f.is_absolutely_continuous())
                .copied()
                .collect();
            let mut atoms = vec![(0.0, 1.0)];
            for (a, f) in discrete {
                let support: Vec<(f64, f64)> = match f {
                    NoiseFamily::TwoPoint { value, p_plus } => {
                        vec![(a * value, p_plus), (-a * value, 1.0 - p_plus)]
                    }
                    NoiseFamily::Constant { value } => vec![(a * value, 1.0)],
                    _ => unreachable!("continuous factors were split off"),
                };
                let support: Vec<_> = support.into_iter().filter(|(_, p)| *p > 0.0).collect();
                if atoms.len() * support.len() > MAX_ATOMS {
                    return Err(Error::NotIntegrable(
                        "a single continuous level with too many discrete levels to enumerate"
                            .into(),
                    ));
                }
                atoms = atoms
                    .iter()
                    .flat_map(|&(x, p)| support.iter().map(move |&(y, q)| (x + y, p * q)))
                    .collect();
            }
            Ok(Plan::Mixture {
                continuous: cont[0],
                atoms,
            })
        }
        _ => {
            let mut decays: Vec<Decay> = cont
                .iter()
                .map(|(a, f)| (*a, f.decay_constant().expect("continuous")))
                .collect();
            decays.extend(extra);
            let (s, tail) = cutoff(&decays, cfg);
            let spec = CharFnSpec::new(alpha, noise, s, cfg.tol * 1e-3)?;
            Ok(Plan::Quadrature { spec, s, tail })
        }
    }
}

/// `η(t_0)`, the density of `U` at `t_0`.
pub fn eta_at(
    t0: f64,
    alpha: &AlphaTable,
    noise: &NoiseSpec,
    cfg: &QuadConfig,
) -> Result<DensityEstimate> {
    match plan(alpha, noise, None, cfg)? {
        Plan::Mixture {
            continuous: (a, f),
            atoms,
        } => {
            let value = atoms
                .iter()
                .map(|&(x, p)| p * f.density((t0 - x) / a).expect("continuous") / a)
                .sum();
            Ok(DensityEstimate {
                t: t0,
                value,
                method: DensityMethod::Mixture,
                error: 0.0,
                flagged: true,
            })
        }
        Plan::Quadrature { spec, s, tail } => {
            let freq = t0.abs() + spec.factors().iter().map(|(a, _)| a).sum::<f64>();
            let (v, rich) = simpson(|x| spec.inversion_integrand(x, t0), s, freq, cfg);
            let pi = std::f64::consts::PI;
            Ok(DensityEstimate {
                t: t0,
                value: v / pi,
                method: DensityMethod::Quadrature,
                error: (tail + rich) / pi,
                flagged: false,
            })
        }
    }
}

/// `P(X ≤ x)` for the continuous families.
fn cdf(f: &NoiseFamily, x: f64) -> f64 {
    if x <= -1.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    match *f {
        NoiseFamily::Uniform => 0.5 * (x + 1.0),
        NoiseFamily::Beta { a, b } => beta_reg(a, b, 0.5 * (x + 1.0)),
        _ => unreachable!("continuous family"),
    }
}

/// `λ(ℓ) = π_ℓ P(U ∈ I_ℓ)` with its absolute error indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub level: usize,
    pub value: f64,
    pub error: f64,
    pub method: DensityMethod,
    pub flagged: bool,
}

pub fn lambda_ell_quadrature(
    level: usize,
    radices: &RadixSequence,
    alpha: &AlphaTable,
    noise: &NoiseSpec,
    c: f64,
    t0: f64,
    cfg: &QuadConfig,
) -> Result<LambdaEstimate> {
    if !(c > 0.0) {
        return Err(Error::invalid("c", "must be positive"));
    }
    let pi_l = radices.ln_order(level).exp();
    let h = c / (2.0 * pi_l);
    match plan(alpha, noise, Some((h, 1.0)), cfg)? {
        Plan::Mixture {
            continuous: (a, f),
            atoms,
        } => {
            let p: f64 = atoms
                .iter()
                .map(|&(x, q)| q * (cdf(&f, (t0 + h - x) / a) - cdf(&f, (t0 - h - x) / a)))
                .sum();
            Ok(LambdaEstimate {
                level,
                value: pi_l * p,
                error: 0.0,
                method: DensityMethod::Mixture,
                flagged: true,
            })
        }
        Plan::Quadrature { spec, s, tail } => {
            let freq = t0.abs() + h + spec.factors().iter().map(|(a, _)| a).sum::<f64>();
            let (v, rich) = simpson(
                |x| sinc(x * h) * spec.inversion_integrand(x, t0),
                s,
                freq,
                cfg,
            );
            let scale = c / std::f64::consts::PI;
            Ok(LambdaEstimate {
                level,
                value: scale * v,
                error: scale * (tail + rich),
                method: DensityMethod::Quadrature,
                flagged: false,
            })
        }
    }
}

/// Histogram density on `(-1, 1)`.
///
/// The default bin width is `2 N^{-1/3}`. Fewer than `10^4` samples is an
/// error.
pub fn empirical_density(samples: &[f64], bins: Option<usize>) -> Result<Vec<DensityEstimate>> {
    if samples.len() < 10_000 {
        return Err(Error::invalid(
            "samples",
            format!(
                "{} samples is too few for a histogram; need 10^4",
                samples.len()
            ),
        ));
    }
    let n = samples.len() as f64;
    let bins = bins.unwrap_or_else(|| n.cbrt().ceil() as usize).max(1);
    let width = 2.0 / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if x > -1.0 && x < 1.0 {
            let b = (((x + 1.0) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &k)| histogram_estimate(-1.0 + (b as f64 + 0.5) * width, k, n, width))
        .collect())
}

fn histogram_estimate(t: f64, hits: u64, n: f64, width: f64) -> DensityEstimate {
    let p = hits as f64 / n;
    DensityEstimate {
        t,
        value: p / width,
        method: DensityMethod::Histogram,
        error: (p * (1.0 - p) / n).sqrt() / width,
        flagged: false,
    }
}

/// Histogram estimate from the single bin `[t - w/2, t + w/2]`.
pub fn density_at(samples: &[f64], t: f64, width: f64) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    if !(width > 0.0) {
        return Err(Error::invalid("width", "must be positive"));
    }
    let (lo, hi) = (t - 0.5 * width, t + 0.5 * width);
    let hits = samples.iter().filter(|&&x| lo <= x && x < hi).count() as u64;
    Ok(histogram_estimate(t, hits, samples.len() as f64, width))
}

/// Density of `λ_H (1 + U)` at `λ_H (1 + t)` from the density of `U` at `t`.
pub fn eigen_density(eta: &DensityEstimate, lambda_h: f64) -> DensityEstimate {
    DensityEstimate {
        t: lambda_h * (1.0 + eta.t),
        value: eta.value / lambda_h,
        error: eta.error / lambda_h,
        ..*eta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn uniform() -> NoiseSpec {
        NoiseSpec::iid(NoiseFamily::Uniform).unwrap()
    }

    fn p_adic() -> AlphaTable {
        AlphaTable::p_adic(2, 2.0).unwrap()
    }

    #[test]
    fn phi_basics() {
        let spec = CharFnSpec::with_depth(&p_adic(), &uniform(), 40);
        assert_eq!(phi(0.0, &spec), Complex64::new(1.0, 0.0));
        assert_eq!(phi(3.3, &spec), phi(-3.3, &spec));
        let single = CharFnSpec::with_depth(&AlphaTable::single_term(), &uniform(), 5);
        assert_relative_eq!(phi(2.5, &single).re, 2.5f64.sin() / 2.5, epsilon = 1e-15);
        let deep = CharFnSpec::with_depth(&p_adic(), &uniform(), 60);
        let auto = CharFnSpec::new(&p_adic(), &uniform(), 10.0, 1e-15).unwrap();
        assert!((phi(10.0, &deep) - phi(10.0, &auto)).norm() < 1e-12);
        for t in [0.3, 7.0, 40.0] {
            assert!(phi(t, &deep).norm() <= 1.0);
        }
    }

    #[test]
    fn asymmetric_phi_is_hermitian() {
        let noise = NoiseSpec::new(
            vec![NoiseFamily::Uniform],
            NoiseFamily::TwoPoint {
                value: 0.5,
                p_plus: 0.8,
            },
        )
        .unwrap();
        let spec = CharFnSpec::with_depth(&p_adic(), &noise, 20);
        let (a, b) = (phi(1.7, &spec), phi(-1.7, &spec));
        assert!((a - b.conj()).norm() < 1e-15);
        assert!(a.im.abs() > 1e-6);
    }

    #[test]
    fn single_term_is_exact_and_flagged() {
        let t = AlphaTable::single_term();
        let e = eta_at(0.0, &t, &uniform(), &QuadConfig::default()).unwrap();
        assert_eq!(e.value, 0.5);
        assert!(e.flagged);
        let radices = RadixSequence::constant(2, 10).unwrap();
        for level in 1..=10 {
            let l = lambda_ell_quadrature(
                level,
                &radices,
                &t,
                &uniform(),
                PI,
                0.0,
                &QuadConfig::default(),
            )
            .unwrap();
            assert_relative_eq!(l.value, PI / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_density_is_an_error() {
        let noise = NoiseSpec::unrestricted(
            vec![],
            NoiseFamily::TwoPoint {
                value: 0.5,
                p_plus: 0.5,
            },
        )
        .unwrap();
        assert!(matches!(
            eta_at(0.0, &p_adic(), &noise, &QuadConfig::default()),
            Err(Error::NotIntegrable(_))
        ));
    }

    #[test]
    fn two_term_triangle() {
        // α = (1/2, 1/2): triangular density on (-1, 1) with peak 1
        let t = AlphaTable::explicit(vec![0.5, 0.5], 1.0, 1.0).unwrap();
        let cfg = QuadConfig {
            tol: 1e-6,
            ..QuadConfig::default()
        };
        for t0 in [0.0, 0.3, -0.7] {
            let e = eta_at(t0, &t, &uniform(), &cfg).unwrap();
            let exact = 1.0 - f64::abs(t0);
            assert!((e.value - exact).abs() <= e.error + 1e-6, "t0={t0}: {e:?}");
        }
    }

    #[test]
    fn p_adic_density_integrates_to_one() {
        let cfg = QuadConfig::default();
        let n = 40;
        let h = 2.0 / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            total += w * eta_at(-1.0 + i as f64 * h, &p_adic(), &uniform(), &cfg)
                .unwrap()
                .value;
        }
        assert_relative_eq!(total * h / 3.0, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn lambda_converges_to_c_eta() {
        let cfg = QuadConfig::default();
        let radices = RadixSequence::constant(2, 12).unwrap();
        let eta0 = eta_at(0.0, &p_adic(), &uniform(), &cfg).unwrap().value;
        let gaps: Vec<f64> = [4, 8, 12]
            .iter()
            .map(|&l| {
                let v = lambda_ell_quadrature(l, &radices, &p_adic(), &uniform(), PI, 0.0, &cfg)
                    .unwrap();
                (v.value - PI * eta0).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn histogram_of_uniform_is_flat() {
        let mut rng = crate::perturb::trial_rng(1, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| NoiseFamily::Uniform.sample(&mut rng))
            .collect();
        let hist = empirical_density(&xs, None).unwrap();
        assert_eq!(hist.len(), 47);
        for b in &hist {
            assert!((b.value - 0.5).abs() < 5.0 * b.error, "{b:?}");
        }
        assert!(empirical_density(&xs[..100], None).is_err());
        let d = density_at(&xs, 0.0, 0.1).unwrap();
        assert!((d.value - 0.5).abs() < 5.0 * d.error);
    }

    #[test]
    fn eigen_scale_density() {
        let e = DensityEstimate {
            t: 0.0,
            value: 0.6,
            method: DensityMethod::Quadrature,
            error: 1e-9,
            flagged: false,
        };
        let d = eigen_density(&e, 2.0);
        assert_eq!(d.t, 2.0);
        assert_eq!(d.value, 0.3);
    }
}
