//! Random perturbations of a homogeneous Laplacian.
//!
//! Each ball `B` carries an independent multiplier `1 + ε(B)`. Along the
//! geodesic from a singleton `g` towards the boundary point the perturbed
//! eigenvalue is `λ_H (1 + U_g)` with
//!
//! ```text
//! U_g = Σ_{k≥0} α_k ε(g_k),
//! ```
//!
//! where `g_k` is the level-`k` ball containing `g`. Two leaves share every
//! term above their split level, which is the whole dependence structure of
//! the field.

use num_complex::Complex64;
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::tree::RadixSequence;

/// Deepest level the sampler will materialise before declaring a truncation
/// tolerance infeasible.
pub const MAX_TRUNCATION_DEPTH: usize = 1024;

/// Law of a single `ε`, supported inside `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseFamily {
    /// Uniform on `(-1, 1)`.
    Uniform,
    /// `2X - 1` with `X ~ Beta(a, b)`, `a, b ≥ 1`; symmetric iff `a == b`.
    Beta { a: f64, b: f64 },
    /// `+value` with probability `p_plus`, otherwise `-value`.
    TwoPoint { value: f64, p_plus: f64 },
    /// Point mass; only useful to switch levels off.
    Constant { value: f64 },
}

impl NoiseFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseFamily::Uniform => Ok(()),
            NoiseFamily::Beta { a, b } => {
                if a >= 1.0 && b >= 1.0 && a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "noise",
                        "beta shapes must be finite and at least 1",
                    ))
                }
            }
            NoiseFamily::TwoPoint { value, p_plus } => {
                if !(value > 0.0 && value < 1.0) {
                    Err(Error::invalid(
                        "noise",
                        "two-point magnitude must lie in (0, 1)",
                    ))
                } else if !(0.0..=1.0).contains(&p_plus) {
                    Err(Error::invalid(
                        "noise",
                        "two-point probability must lie in [0, 1]",
                    ))
                } else {
                    Ok(())
                }
            }
            NoiseFamily::Constant { value } => {
                if value.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("noise", "constant must lie in (-1, 1)"))
                }
            }
        }
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        matches!(self, NoiseFamily::Uniform | NoiseFamily::Beta { .. })
    }

    pub fn is_symmetric(&self) -> bool {
        match *self {
            NoiseFamily::Uniform => true,
            NoiseFamily::Beta { a, b } => a == b,
            NoiseFamily::TwoPoint { p_plus, .. } => p_plus == 0.5,
            NoiseFamily::Constant { value } => value == 0.0,
        }
    }

    /// Lebesgue density, when there is one.
    pub fn density(&self, x: f64) -> Option<f64> {
        match *self {
            NoiseFamily::Uniform => Some(if x.abs() <= 1.0 { 0.5 } else { 0.0 }),
            NoiseFamily::Beta { a, b } => {
                if x.abs() > 1.0 {
                    return Some(0.0);
                }
                if a == 1.0 && b == 1.0 {
                    return Some(0.5);
                }
                let u = 0.5 * (x + 1.0);
                let log = (a - 1.0) * u.ln() + (b - 1.0) * (1.0 - u).ln() - ln_beta(a, b);
                // 0^0 at the endpoints when a or b equals 1
                let v = if (a == 1.0 && u == 0.0) || (b == 1.0 && u == 1.0) {
                    (-ln_beta(a, b)).exp()
                } else {
                    log.exp()
                };
                Some(0.5 * v)
            }
            _ => None,
        }
    }

    /// `‖η_ε‖_∞`.
    pub fn density_sup(&self) -> Option<f64> {
        match *self {
            NoiseFamily::Uniform => Some(0.5),
            NoiseFamily::Beta { a, b } => {
                let mode = if a + b > 2.0 {
                    (a - 1.0) / (a + b - 2.0)
                } else {
                    0.5
                };
                self.density(2.0 * mode - 1.0)
            }
            _ => None,
        }
    }

    /// Constant `V` with `|E e^{itε}| ≤ V / |t|`: the total variation of the
    /// density, which is `2 sup η` for the unimodal families offered here.
    pub fn decay_constant(&self) -> Option<f64> {
        self.density_sup().map(|s| 2.0 * s)
    }

    /// `E[e^{i t ε}]`.
    pub fn char_fn(&self, t: f64) -> Complex64 {
        match *self {
            NoiseFamily::Uniform => Complex64::new(sinc(t), 0.0),
            NoiseFamily::TwoPoint { value, p_plus } => {
                let (s, c) = (value * t).sin_cos();
                Complex64::new(c, (2.0 * p_plus - 1.0) * s)
            }
            NoiseFamily::Constant { value } => Complex64::from_polar(1.0, value * t),
            NoiseFamily::Beta { a, b } if polynomial_shapes(a, b) => {
                beta_poly_char_fn(a as i32, b as i32, t)
            }
            NoiseFamily::Beta { .. } => {
                let panels = ((16.0 * t.abs()).ceil() as usize).max(2000) & !1;
                let h = 2.0 / panels as f64;
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..=panels {
                    let x = -1.0 + i as f64 * h;
                    let w = if i == 0 || i == panels {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let d = self.density(x).expect("continuous family");
                    acc += Complex64::from_polar(w * d, t * x);
                }
                acc * (h / 3.0)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseFamily::Uniform => {
                let u: f64 = rng.sample(Open01);
                2.0 * u - 1.0
            }
            NoiseFamily::Beta { a, b } => {
                let beta = Beta::new(a, b).expect("validated shapes");
                let x: f64 = beta.sample(rng);
                // keep strictly inside (-1, 1)
                (2.0 * x - 1.0).clamp(-1.0 + f64::EPSILON, 1.0 - f64::EPSILON)
            }
            NoiseFamily::TwoPoint { value, p_plus } => {
                if rng.gen::<f64>() < p_plus {
                    value
                } else {
                    -value
                }
            }
            NoiseFamily::Constant { value } => value,
        }
    }
}

/// Integer shapes small enough for the exact polynomial route.
fn polynomial_shapes(a: f64, b: f64) -> bool {
    a.fract() == 0.0 && b.fract() == 0.0 && a + b <= 10.0
}

/// Coefficients of `(1 + x)^m (1 - x)^n` in powers of `x`.
fn endpoint_poly(m: i32, n: i32) -> Vec<f64> {
    let mut poly = vec![1.0];
    for sign in std::iter::repeat_n(1.0, m as usize).chain(std::iter::repeat_n(-1.0, n as usize)) {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] += sign * c;
        }
        poly = next;
    }
    poly
}

/// Characteristic function of `2X - 1`, `X ~ Beta(a, b)` with integer shapes,
/// whose density `K (1+x)^{a-1} (1-x)^{b-1}` is a polynomial.
///
/// Small `|t|` uses the moment series; otherwise integration by parts
/// terminates after `a + b - 1` terms.
fn beta_poly_char_fn(a: i32, b: i32, t: f64) -> Complex64 {
    let k = (-(a + b - 1) as f64 * std::f64::consts::LN_2 - ln_beta(a as f64, b as f64)).exp();
    let d = (a + b - 2) as usize;
    if t.abs() <= 6.0 {
        let poly = endpoint_poly(a - 1, b - 1);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for n in 0..80usize {
            if n > 0 {
                term *= Complex64::new(0.0, t / n as f64);
            }
            let moment: f64 = poly
                .iter()
                .enumerate()
                .filter(|(m, _)| (n + m) % 2 == 0)
                .map(|(m, c)| 2.0 * c / (n + m + 1) as f64)
                .sum();
            acc += term * (k * moment);
            if term.norm() < 1e-18 && n > d {
                break;
            }
        }
        return acc;
    }
    // P^{(j)}(±1) from expansions in w = 1 - x and v = 1 + x
    let derivs = |own: i32, other: i32, sign: f64| -> Vec<f64> {
        let mut out = vec![0.0; d + 1];
        let mut fact = 1.0;
        let mut facts = vec![1.0];
        for j in 1..=d {
            fact *= j as f64;
            facts.push(fact);
        }
        let mut binom = 1.0;
        for j in 0..=other {
            let power = (own + j) as usize;
            let coef = k * binom * 2f64.powi(other - j) * if j % 2 == 0 { 1.0 } else { -1.0 };
            out[power] += coef * facts[power] * sign.powi(power as i32);
            binom = binom * (other - j) as f64 / (j + 1) as f64;
        }
        out
    };
    // f = K w^{b-1} (2 - w)^{a-1} near x = 1, d/dx = -d/dw
    let at_plus = derivs(b - 1, a - 1, -1.0);
    let at_minus = derivs(a - 1, b - 1, 1.0);
    let (ep, em) = (
        Complex64::from_polar(1.0, t),
        Complex64::from_polar(1.0, -t),
    );
    let it = Complex64::new(0.0, t);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut denom = it;
    for j in 0..=d {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += (ep * at_plus[j] - em * at_minus[j]) * sign / denom;
        denom *= it;
    }
    acc
}

/// `sin(x)/x` with the value 1 at 0.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Per-level laws of `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Families for levels `0, 1, …` in order.
    pub levels: Vec<NoiseFamily>,
    /// Family for every level past `levels`.
    pub rest: NoiseFamily,
}

impl NoiseSpec {
    /// Per-level families; level 0 must have a bounded density.
    pub fn new(levels: Vec<NoiseFamily>, rest: NoiseFamily) -> Result<Self> {
        let spec = Self::unrestricted(levels, rest)?;
        if spec.family(0).density_sup().is_none() {
            return Err(Error::invalid(
                "noise",
                "level 0 must be absolutely continuous with a bounded density",
            ));
        }
        Ok(spec)
    }

    /// I.i.d. noise at every level.
    pub fn iid(family: NoiseFamily) -> Result<Self> {
        Self::new(Vec::new(), family)
    }

    /// Per-level families without the level-0 density requirement. Useful
    /// for degenerate configurations; the Poisson bounds do not apply.
    pub fn unrestricted(levels: Vec<NoiseFamily>, rest: NoiseFamily) -> Result<Self> {
        for f in levels.iter().chain([&rest]) {
            f.validate()?;
        }
        Ok(Self { levels, rest })
    }

    pub fn family(&self, k: usize) -> &NoiseFamily {
        self.levels.get(k).unwrap_or(&self.rest)
    }

    /// `‖η_ε‖` of the level-0 law.
    pub fn eta_sup(&self) -> Option<f64> {
        self.family(0).density_sup()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum AlphaForm {
    /// `α_k = (1 - p^{-a}) p^{-a k}`: the `p`-adic fractional derivative of
    /// order `a` seen from the horocycle with eigenvalue 1.
    Geometric { p: u64, order: f64 },
    /// Finite table; `α_k = 0` past its end.
    Explicit { alphas: Vec<f64> },
}

/// Weights `α_k` of the field together with the tail constants `K`, `γ`
/// of `Σ_{k≥ℓ} α_k ≤ K π_ℓ^{-(1+γ)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    pub form: AlphaForm,
    pub k_const: f64,
    pub gamma: f64,
}

impl AlphaTable {
    /// The `p`-adic table of order `order > 1`, with `K = 1`, `γ = order - 1`.
    pub fn p_adic(p: u64, order: f64) -> Result<Self> {
        if p < 2 {
            return Err(Error::invalid("p", "must be at least 2"));
        }
        if !(order > 1.0 && order.is_finite()) {
            return Err(Error::invalid("alpha", "order must exceed 1"));
        }
        Ok(Self {
            form: AlphaForm::Geometric { p, order },
            k_const: 1.0,
            gamma: order - 1.0,
        })
    }

    /// `α_0 = 1`: the i.i.d. regime. Any `γ` works; `K = 1` covers `ℓ = 0`.
    pub fn single_term() -> Self {
        Self {
            form: AlphaForm::Explicit { alphas: vec![1.0] },
            k_const: 1.0,
            gamma: 1.0,
        }
    }

    pub fn explicit(alphas: Vec<f64>, k_const: f64, gamma: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Empty("alpha table"));
        }
        if let Some(k) = alphas.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(
                "alphas",
                format!("α_{k} = {} must be positive", alphas[k]),
            ));
        }
        let total: f64 = alphas.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "alphas",
                format!("weights sum to {total}, not 1"),
            ));
        }
        if !(k_const > 0.0 && gamma > 0.0) {
            return Err(Error::invalid("alphas", "K and γ must be positive"));
        }
        Ok(Self {
            form: AlphaForm::Explicit { alphas },
            k_const,
            gamma,
        })
    }

    pub fn alpha(&self, k: usize) -> f64 {
        match &self.form {
            AlphaForm::Geometric { p, order } => {
                let p = *p as f64;
                (1.0 - p.powf(-order)) * p.powf(-order * k as f64)
            }
            AlphaForm::Explicit { alphas } => alphas.get(k).copied().unwrap_or(0.0),
        }
    }

    /// `Σ_{i ≥ k} α_i`, exactly.
    pub fn tail_mass(&self, k: usize) -> f64 {
        match &self.form {
            AlphaForm::Geometric { p, order } => (*p as f64).powf(-order * k as f64),
            AlphaForm::Explicit { alphas } => alphas.iter().skip(k).rev().sum(),
        }
    }

    /// `a_k = Σ_{i > k} α_i`, the range bound of the tail `T^k`.
    pub fn a(&self, k: usize) -> f64 {
        self.tail_mass(k + 1)
    }

    /// `K π_ℓ^{-(1+γ)}`.
    pub fn tail_envelope(&self, radices: &RadixSequence, level: usize) -> f64 {
        self.k_const * (-(1.0 + self.gamma) * radices.ln_order(level)).exp()
    }

    /// Checks `Σ_{k≥ℓ} α_k ≤ K π_ℓ^{-(1+γ)}` for `ℓ ≤ through`.
    pub fn check_tail_condition(&self, radices: &RadixSequence, through: usize) -> Result<()> {
        for level in 0..=through {
            let tail = self.tail_mass(level);
            let env = self.tail_envelope(radices, level);
            if tail > env * (1.0 + 1e-12) {
                return Err(Error::invalid(
                    "alphas",
                    format!("tail mass {tail:e} at level {level} exceeds K π^-(1+γ) = {env:e}"),
                ));
            }
        }
        Ok(())
    }

    /// Smallest `D` whose omitted mass `Σ_{k>D} α_k` is at most `tolerance`.
    pub fn truncation_depth(&self, tolerance: f64) -> Result<usize> {
        if !(tolerance > 0.0) {
            return Err(Error::TruncationInfeasible(format!(
                "tolerance {tolerance} must be positive"
            )));
        }
        (0..=MAX_TRUNCATION_DEPTH)
            .find(|&d| self.tail_mass(d + 1) <= tolerance)
            .ok_or_else(|| {
                Error::TruncationInfeasible(format!(
                    "omitted mass stays above {tolerance:e} through depth {MAX_TRUNCATION_DEPTH}"
                ))
            })
    }
}

/// One realisation of `{U_g}` on the window `G_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UField {
    pub level: usize,
    pub values: Vec<f64>,
    /// Contribution of levels above `ℓ`, common to every leaf.
    pub shared_tail: f64,
    pub seed: u64,
    pub trial: u64,
}

/// The random stream of one trial: a ChaCha keystream keyed by the run seed,
/// with the trial index as stream id. Trials are therefore independent of
/// execution order.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Samples `{U_g}_{g ∈ G_ℓ}` with the series truncated at a fixed depth.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    level: usize,
    depth: usize,
    radices: Vec<usize>,
    leaves: usize,
    alphas: Vec<f64>,
    noise: Vec<NoiseFamily>,
}

impl FieldSampler {
    /// Truncation depth `D ≥ ℓ` is the smallest one whose omitted mass is
    /// at most `tolerance`.
    pub fn new(
        radices: &RadixSequence,
        alpha: &AlphaTable,
        noise: &NoiseSpec,
        level: usize,
        tolerance: f64,
    ) -> Result<Self> {
        let leaves = radices.order_usize(level)?;
        let depth = alpha.truncation_depth(tolerance)?.max(level);
        Ok(Self {
            level,
            depth,
            radices: (1..=level).map(|j| radices.radix(j) as usize).collect(),
            leaves,
            alphas: (0..=depth).map(|k| alpha.alpha(k)).collect(),
            noise: (0..=depth).map(|k| *noise.family(k)).collect(),
        })
    }

    /// Default tolerance: `10^-3` of the half-width `c / (2 π_ℓ)`.
    pub fn default_tolerance(radices: &RadixSequence, c: f64, level: usize) -> f64 {
        1e-3 * c / (2.0 * radices.ln_order(level).exp())
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    /// Number of `ε` variables drawn per trial.
    pub fn draws_per_trial(&self) -> usize {
        let mut count = self.depth - self.level;
        let mut balls = self.leaves;
        count += balls;
        for &n in &self.radices {
            balls /= n;
            count += balls;
        }
        count
    }

    /// Draws one field into `out`, reusing `scratch`; returns the shared tail.
    ///
    /// Draw order: levels `D, …, ℓ+1` on the ancestor chain, then levels
    /// `ℓ, …, 0` with balls in increasing index order.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        out: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
    ) -> f64 {
        let mut shared = 0.0;
        for k in (self.level + 1..=self.depth).rev() {
            shared += self.alphas[k] * self.noise[k].sample(rng);
        }
        out.clear();
        out.push(shared + self.alphas[self.level] * self.noise[self.level].sample(rng));
        for j in (0..self.level).rev() {
            // children of the level-(j+1) balls
            let n = self.radices[j];
            std::mem::swap(out, scratch);
            out.clear();
            let (a, law) = (self.alphas[j], &self.noise[j]);
            for &parent in scratch.iter() {
                for _ in 0..n {
                    out.push(parent + a * law.sample(rng));
                }
            }
        }
        shared
    }

    pub fn sample(&self, seed: u64, trial: u64) -> UField {
        let mut rng = trial_rng(seed, trial);
        let mut values = Vec::with_capacity(self.leaves);
        let mut scratch = Vec::with_capacity(self.leaves);
        let shared_tail = self.sample_into(&mut rng, &mut values, &mut scratch);
        UField {
            level: self.level,
            values,
            shared_tail,
            seed,
            trial,
        }
    }
}

/// One draw of the field on `G_ℓ` for trial `trial` of run `seed`.
pub fn sample_u_field(
    radices: &RadixSequence,
    alpha: &AlphaTable,
    noise: &NoiseSpec,
    level: usize,
    tolerance: f64,
    seed: u64,
    trial: u64,
) -> Result<UField> {
    Ok(FieldSampler::new(radices, alpha, noise, level, tolerance)?.sample(seed, trial))
}

/// `λ(g) = λ_H (1 + U_g)`.
pub fn perturbed_eigenvalues(field: &UField, lambda_h: f64) -> Result<Vec<f64>> {
    if !(lambda_h > 0.0) {
        return Err(Error::invalid("lambda_h", "must be positive"));
    }
    Ok(field.values.iter().map(|u| lambda_h * (1.0 + u)).collect())
}

/// Bounded test function for the conditioning identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// Indicator of the closed interval `[lo, hi]`.
    Interval {
        lo: f64,
        hi: f64,
    },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::Interval { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `E f(X + z)` by composite Simpson over the density of `X` on `[-1, 1]`.
    fn shifted_mean(&self, law: &NoiseFamily, z: f64) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::Interval { lo, hi } => {
                let a = (lo - z).max(-1.0);
                let b = (hi - z).min(1.0);
                if a >= b {
                    return 0.0;
                }
                const PANELS: usize = 64;
                let h = (b - a) / PANELS as f64;
                let d = |x: f64| law.density(x).expect("continuous law");
                let mut acc = d(a) + d(b);
                for i in 1..PANELS {
                    acc += d(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                acc * h / 3.0
            }
        }
    }
}

/// Monte Carlo estimates of both sides of
/// `E[f(X+Z) f(Y+Z)] = E[E[f(X+Z) | Z]^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningEstimate {
    pub joint: f64,
    pub joint_se: f64,
    pub conditional: f64,
    pub conditional_se: f64,
    pub trials: u64,
}

impl ConditioningEstimate {
    pub fn combined_se(&self) -> f64 {
        self.joint_se.hypot(self.conditional_se)
    }

    /// `|joint - conditional| ≤ k · combined_se`.
    pub fn agrees_within(&self, k: f64) -> bool {
        (self.joint - self.conditional).abs() <= k * self.combined_se()
    }
}

/// Both sides of the conditioning identity, for `X, Y ~ x_law` and
/// `Z ~ z_law` mutually independent.
///
/// The left side averages `f(X+Z) f(Y+Z)` over sampled triples; the right
/// side integrates the density of `X` for each sampled `Z`.
pub fn verify_conditioning_identity(
    f: TestFunction,
    x_law: NoiseFamily,
    z_law: NoiseFamily,
    trials: u64,
    seed: u64,
) -> Result<ConditioningEstimate> {
    if trials < 2 {
        return Err(Error::invalid("trials", "need at least two trials"));
    }
    x_law.validate()?;
    z_law.validate()?;
    if !x_law.is_absolutely_continuous() {
        return Err(Error::invalid(
            "x_law",
            "needs a density for the inner expectation",
        ));
    }
    let mut rng = trial_rng(seed, 0);
    let (mut s1, mut q1, mut s2, mut q2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..trials {
        let x = x_law.sample(&mut rng);
        let y = x_law.sample(&mut rng);
        let z = z_law.sample(&mut rng);
        let joint = f.eval(x + z) * f.eval(y + z);
        let inner = f.shifted_mean(&x_law, z);
        let cond = inner * inner;
        s1 += joint;
        q1 += joint * joint;
        s2 += cond;
        q2 += cond * cond;
    }
    let n = trials as f64;
    let se = |s: f64, q: f64| {
        let mean = s / n;
        ((q / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    };
    Ok(ConditioningEstimate {
        joint: s1 / n,
        joint_se: se(s1, q1),
        conditional: s2 / n,
        conditional_se: se(s2, q2),
        trials,
    })
}
