//! Dependency neighbourhoods and the Poisson approximation bounds.
//!
//! For the window `I_ℓ` and neighbourhoods `B_g = g + G_k` the Stein–Chen
//! bound reads `(1 - e^{-λ})/λ · (b1 + b2) + b3`, with
//!
//! ```text
//! b1 = λ(ℓ)² π_k / π_ℓ
//! b2 ≤ (c²/α_0²) ‖η_ε‖² π_k / π_ℓ
//! b3 ≤ (16K/α_0) (1 ∧ λ(ℓ)^{-1/2}) ‖η_ε‖ π_ℓ π_{k+1}^{-(1+γ)}
//! ```
//!
//! The level `k = k(ℓ)` is chosen so that both ratios fall below a target
//! that decays in `ℓ`.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::{trial_rng, AlphaTable, NoiseSpec};
use crate::pointproc::Window;
use crate::tree::RadixSequence;

/// Slack for inequalities decided in the log domain.
pub const LOG_SLACK: f64 = 1e-9;

/// Largest denominator recognised when reading `γ` as a fraction.
const MAX_DENOMINATOR: u64 = 12;

/// Exact comparisons are abandoned above this many bits.
const MAX_EXACT_BITS: u64 = 1 << 22;

/// Longest scan for the next subsequence or recursion index.
const MAX_SCAN: usize = 1 << 20;

/// Exponent of a power, kept exact when it is a small fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Rational { num: i64, den: u64 },
    Real(f64),
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Exponent {
    pub fn integer(n: i64) -> Self {
        Exponent::Rational { num: n, den: 1 }
    }

    /// Reads `x` as `num/den` with `den ≤ 12` when it is one to `1e-12`.
    pub fn from_f64(x: f64) -> Self {
        for den in 1..=MAX_DENOMINATOR {
            let num = (x * den as f64).round();
            if (num / den as f64 - x).abs() <= 1e-12 && num.abs() < 1e12 {
                return Self::ratio(num as i64, den);
            }
        }
        Exponent::Real(x)
    }

    fn ratio(num: i64, den: u64) -> Self {
        let g = gcd(num.unsigned_abs(), den).max(1);
        Exponent::Rational {
            num: num / g as i64,
            den: den / g,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Exponent::Rational { num, den } => num as f64 / den as f64,
            Exponent::Real(x) => x,
        }
    }

    fn combine(
        self,
        other: Self,
        op: fn(i128, i128, i128, i128) -> (i128, i128),
        real: fn(f64, f64) -> f64,
    ) -> Self {
        match (self, other) {
            (Exponent::Rational { num: a, den: b }, Exponent::Rational { num: c, den: d }) => {
                let (n, m) = op(a as i128, b as i128, c as i128, d as i128);
                match (i64::try_from(n), u64::try_from(m)) {
                    (Ok(n), Ok(m)) if m > 0 => {
                        let g = gcd(n.unsigned_abs(), m).max(1);
                        Exponent::Rational {
                            num: n / g as i64,
                            den: m / g,
                        }
                    }
                    _ => Exponent::Real(real(self.value(), other.value())),
                }
            }
            _ => Exponent::Real(real(self.value(), other.value())),
        }
    }

    pub fn add(self, other: Self) -> Self {
        self.combine(other, |a, b, c, d| (a * d + c * b, b * d), |x, y| x + y)
    }

    pub fn mul(self, other: Self) -> Self {
        self.combine(other, |a, b, c, d| (a * c, b * d), |x, y| x * y)
    }

    /// `self / other`; `other` must be nonzero.
    pub fn div(self, other: Self) -> Self {
        match other {
            Exponent::Rational { num, den } if num != 0 => {
                let inv = if num > 0 {
                    Exponent::Rational {
                        num: den as i64,
                        den: num as u64,
                    }
                } else {
                    Exponent::Rational {
                        num: -(den as i64),
                        den: num.unsigned_abs(),
                    }
                };
                self.mul(inv)
            }
            _ => Exponent::Real(self.value() / other.value()),
        }
    }

    pub fn neg(self) -> Self {
        self.mul(Exponent::integer(-1))
    }
}

/// `ln x` for arbitrarily large `x`.
pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().expect("64-bit value").ln() + shift as f64 * std::f64::consts::LN_2
}

/// `Π b_i^{e_i}` over positive integers `b_i`.
#[derive(Debug, Clone, Default)]
pub struct PowerProduct {
    terms: Vec<(BigUint, Exponent)>,
}

impl PowerProduct {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, base: impl Into<BigUint>, e: Exponent) -> Self {
        self.terms.push((base.into(), e));
        self
    }

    pub fn ln(&self) -> f64 {
        self.terms.iter().map(|(b, e)| e.value() * ln_big(b)).sum()
    }

    /// `Π b_i^{e_i} ≤ 1`: exact when every exponent is rational and the
    /// cross-multiplied powers stay small, otherwise `ln ≤ LOG_SLACK`.
    pub fn le_one(&self) -> bool {
        self.exact_le_one()
            .unwrap_or_else(|| self.ln() <= LOG_SLACK)
    }

    fn exact_le_one(&self) -> Option<bool> {
        let mut lcm: u64 = 1;
        for (_, e) in &self.terms {
            match *e {
                Exponent::Rational { den, .. } => {
                    lcm = lcm.checked_mul(den / gcd(lcm, den))?;
                }
                Exponent::Real(_) => return None,
            }
        }
        let mut cost: u64 = 0;
        let mut scaled = Vec::with_capacity(self.terms.len());
        for (b, e) in &self.terms {
            let Exponent::Rational { num, den } = *e else {
                unreachable!()
            };
            let p = num.checked_mul((lcm / den) as i64)?;
            cost = cost.checked_add(p.unsigned_abs().checked_mul(b.bits())?)?;
            scaled.push((b, p));
        }
        if cost > MAX_EXACT_BITS {
            return None;
        }
        let (mut num, mut den) = (BigUint::one(), BigUint::one());
        for (b, p) in scaled {
            let pw = b.pow(p.unsigned_abs() as u32);
            if p >= 0 {
                num *= pw;
            } else {
                den *= pw;
            }
        }
        Some(num <= den)
    }
}

/// `lhs ≥ base^e`.
fn ge_power(lhs: &BigUint, base: u64, e: Exponent) -> bool {
    PowerProduct::new()
        .with(base, e)
        .with(lhs.clone(), Exponent::integer(-1))
        .le_one()
}

/// Statistics of the radix sequence entering the rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStats {
    pub radices: RadixSequence,
    /// `γ` as supplied.
    pub gamma: f64,
    /// `γ` used by the selection; capped at 3 when `M = ∞`.
    pub gamma_used: f64,
    pub m: u64,
    /// `None` when the radices are unbounded.
    pub big_m: Option<u64>,
    /// `j_0 = 0 < j_1 = 1 < …`, up to the horizon.
    pub subsequence: Vec<usize>,
    /// `M_ℓ` for `ℓ = 0..=horizon`.
    pub running_max: Vec<u64>,
    pub horizon: usize,
    log_m_big_m: Option<Exponent>,
}

impl SequenceStats {
    pub fn new(radices: &RadixSequence, gamma: f64, horizon: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma", "must be positive and finite"));
        }
        let big_m = radices.max_radix();
        let gamma_used = if big_m.is_none() {
            gamma.min(3.0)
        } else {
            gamma
        };
        let third = Exponent::from_f64(gamma_used).div(Exponent::integer(3));
        let mut subsequence = vec![0usize];
        let mut last = 1u64;
        let mut running_max = vec![1u64];
        for j in 1..=horizon {
            let n = radices.radix(j);
            // n > last and n > last^{γ/3}
            let below = PowerProduct::new()
                .with(n, Exponent::integer(1))
                .with(last, third.neg())
                .le_one();
            if n > last && !below {
                subsequence.push(j);
                last = n;
            }
            running_max.push(last);
        }
        Ok(Self {
            radices: radices.clone(),
            gamma,
            gamma_used,
            m: radices.min_radix(),
            big_m,
            subsequence,
            running_max,
            horizon,
            log_m_big_m: big_m.map(|b| log_ratio(radices.min_radix(), b)),
        })
    }

    pub fn is_bounded(&self) -> bool {
        self.big_m.is_some()
    }

    /// `M_ℓ`.
    pub fn running_max(&self, level: usize) -> Result<u64> {
        self.running_max
            .get(level)
            .copied()
            .ok_or(Error::LevelOutOfRange {
                level,
                max: self.horizon,
            })
    }

    /// Exponent `ε` with `target(ℓ) = base^{-ε}`, together with the base.
    fn target_power(&self, level: usize) -> Result<(u64, Exponent)> {
        let gamma = Exponent::from_f64(self.gamma_used);
        match self.big_m {
            Some(_) => {
                let log = self.log_m_big_m.expect("set for bounded sequences");
                // ℓγ / (log_m M + 1 + γ)
                let e = Exponent::integer(level as i64)
                    .mul(gamma)
                    .div(log.add(Exponent::integer(1)).add(gamma));
                Ok((self.m, e))
            }
            None => {
                let base = if level == 0 {
                    1
                } else {
                    self.running_max(level - 1)?
                };
                Ok((base, gamma.div(Exponent::integer(3))))
            }
        }
    }

    /// `m^{-ℓγ/(log_m M + 1 + γ)}` or `M_{ℓ-1}^{-γ/3}`.
    pub fn target(&self, level: usize) -> Result<f64> {
        let (base, e) = self.target_power(level)?;
        Ok((-e.value() * (base as f64).ln()).exp())
    }

    /// Checks both neighbourhood inequalities for `(ℓ, k)` against the
    /// branch target.
    pub fn check(&self, level: usize, k: usize) -> Result<NeighborhoodCheck> {
        if k >= level {
            return Err(Error::invalid(
                "k",
                format!("k = {k} must be below ℓ = {level}"),
            ));
        }
        let (base, e) = self.target_power(level)?;
        let gamma = Exponent::from_f64(self.gamma_used);
        let pk = self.radices.order_unbounded(k);
        let pl = self.radices.order_unbounded(level);
        let pk1 = self.radices.order_unbounded(k + 1);
        let inner = PowerProduct::new()
            .with(pk, Exponent::integer(1))
            .with(pl.clone(), Exponent::integer(-1))
            .with(base, e);
        let outer = PowerProduct::new()
            .with(pl, Exponent::integer(1))
            .with(pk1, gamma.add(Exponent::integer(1)).neg())
            .with(base, e);
        let ln_target = -e.value() * (base as f64).ln();
        Ok(NeighborhoodCheck {
            inner_ratio: (inner.ln() + ln_target).exp(),
            outer_ratio: (outer.ln() + ln_target).exp(),
            target: ln_target.exp(),
            holds: inner.le_one() && outer.le_one(),
        })
    }

    /// Every `k < ℓ` satisfying both inequalities.
    pub fn feasible_ks(&self, level: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for k in 0..level {
            if self.check(level, k)?.holds {
                out.push(k);
            }
        }
        Ok(out)
    }
}

/// Smallest `r` with `n = r^x`, and that `x`.
fn primitive_power(n: u64) -> (u64, u32) {
    for x in (2..=63u32).rev() {
        let r = (n as f64).powf(1.0 / x as f64).round() as u64;
        for cand in r.saturating_sub(1).max(2)..=r + 1 {
            if cand.checked_pow(x) == Some(n) {
                let (base, y) = primitive_power(cand);
                return (base, x * y);
            }
        }
    }
    (n, 1)
}

/// `log_m M` as an exact fraction when `M^b = m^a`, which happens exactly
/// when both are powers of the same primitive base.
fn log_ratio(m: u64, big_m: u64) -> Exponent {
    let (rm, xm) = primitive_power(m);
    let (rb, xb) = primitive_power(big_m);
    if rm == rb {
        return Exponent::ratio(xb as i64, xm as u64);
    }
    Exponent::Real((big_m as f64).ln() / (m as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodCheck {
    /// `π_k / π_ℓ`.
    pub inner_ratio: f64,
    /// `π_ℓ π_{k+1}^{-(1+γ)}`.
    pub outer_ratio: f64,
    pub target: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Bounded,
    Unbounded,
}

/// One step `w_m = u(r)`, `k(w_m) = v(r)` of the unbounded recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecursionStep {
    pub r: usize,
    pub u: usize,
    pub v: usize,
    pub u_is_big: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodChoice {
    pub level: usize,
    pub k: usize,
    pub branch: Branch,
    pub check: NeighborhoodCheck,
    /// Recursion steps taken within the current block; empty for the
    /// bounded branch and for `ℓ = 1`.
    pub audit: Vec<RecursionStep>,
}

/// Chooses `k(ℓ)` for one level.
pub fn select_k(level: usize, stats: &SequenceStats) -> Result<NeighborhoodChoice> {
    if level == 0 {
        return Err(Error::invalid("level", "no neighbourhood level below 0"));
    }
    if level > stats.horizon {
        return Err(Error::LevelOutOfRange {
            level,
            max: stats.horizon,
        });
    }
    let (k, branch, audit) = match stats.big_m {
        Some(big_m) => (
            bounded_k(level, stats.m, big_m, stats.gamma_used),
            Branch::Bounded,
            Vec::new(),
        ),
        None if level == 1 => (0, Branch::Unbounded, Vec::new()),
        None => {
            let (k, audit) = unbounded_k(level, stats)?;
            (k, Branch::Unbounded, audit)
        }
    };
    Ok(NeighborhoodChoice {
        level,
        k,
        branch,
        check: stats.check(level, k)?,
        audit,
    })
}

/// `⌊ℓ (log_m M + 1) / (log_m M + 1 + γ)⌋`.
fn bounded_k(level: usize, m: u64, big_m: u64, gamma: f64) -> usize {
    let log = log_ratio(m, big_m);
    let x = Exponent::integer(level as i64)
        .mul(log.add(Exponent::integer(1)))
        .div(log.add(Exponent::integer(1)).add(Exponent::from_f64(gamma)));
    match x {
        Exponent::Rational { num, den } => (num as u64 / den) as usize,
        Exponent::Real(v) => (v + LOG_SLACK).floor() as usize,
    }
    .min(level - 1)
}

fn unbounded_k(level: usize, stats: &SequenceStats) -> Result<(usize, Vec<RecursionStep>)> {
    // ℓ ∈ (j_i, j_{i+1}] iff j_i is the last subsequence index below ℓ
    let j_i = *stats
        .subsequence
        .iter()
        .rev()
        .find(|&&j| j < level)
        .expect("j_0 = 0 precedes every level");
    let n_ji = stats.radices.radix(j_i);
    let gamma = Exponent::from_f64(stats.gamma_used);
    let third = gamma.div(Exponent::integer(3));
    let two_thirds = third.mul(Exponent::integer(2));
    let radix = |j: usize| stats.radices.radix(j);
    let is_big = |b: usize| ge_power(&BigUint::from(radix(b)), n_ji, third);

    // u(r) and whether it is a big index
    let u_of = |r: usize| -> Result<(usize, bool)> {
        let mut prod = BigUint::one();
        for u in r + 2..r + 2 + MAX_SCAN {
            prod *= radix(u);
            if is_big(u) {
                return Ok((u, true));
            }
            if ge_power(&prod, n_ji, two_thirds) {
                return Ok((u, false));
            }
        }
        Err(Error::invalid(
            "radices",
            "no big index found within the scan limit",
        ))
    };
    let v_of = |r: usize, u: usize, big: bool| -> usize {
        if big {
            return u - 1;
        }
        let mut prod = BigUint::one();
        for v in r + 2..=u {
            prod *= radix(v);
            if ge_power(&prod, n_ji, third) {
                return v - 1;
            }
        }
        u - 1
    };

    let mut audit = Vec::new();
    let mut k = j_i - 1;
    loop {
        let (u, big) = u_of(k)?;
        if level < u {
            return Ok((k, audit));
        }
        let v = v_of(k, u, big);
        audit.push(RecursionStep {
            r: k,
            u,
            v,
            u_is_big: big,
        });
        if level == u {
            return Ok((v, audit));
        }
        k = v;
    }
}

/// Caches `k(ℓ)` for `ℓ = 1..=horizon`.
#[derive(Debug, Clone)]
pub struct NeighborhoodSelector {
    stats: SequenceStats,
    choices: Vec<NeighborhoodChoice>,
}

impl NeighborhoodSelector {
    pub fn new(stats: SequenceStats) -> Result<Self> {
        let choices = (1..=stats.horizon)
            .map(|l| select_k(l, &stats))
            .collect::<Result<_>>()?;
        Ok(Self { stats, choices })
    }

    pub fn stats(&self) -> &SequenceStats {
        &self.stats
    }

    pub fn choice(&self, level: usize) -> Result<&NeighborhoodChoice> {
        if level == 0 {
            return Err(Error::invalid("level", "no neighbourhood level below 0"));
        }
        self.choices.get(level - 1).ok_or(Error::LevelOutOfRange {
            level,
            max: self.stats.horizon,
        })
    }
}

fn ratio(num: &BigUint, den: &BigUint) -> f64 {
    (ln_big(num) - ln_big(den)).exp()
}

/// `1 ∧ λ^{-1/2}`.
pub fn min_one_inv_sqrt(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        1.0
    } else {
        lambda.powf(-0.5)
    }
}

/// `(1 - e^{-μ}) / μ`, equal to 1 at `μ = 0`.
pub fn stein_prefactor(mu: f64) -> f64 {
    if mu.abs() < 1e-12 {
        1.0 - 0.5 * mu
    } else {
        -(-mu).exp_m1() / mu
    }
}

/// `b1 = λ(ℓ)² π_k / π_ℓ`.
pub fn b1_exact(lambda_ell: f64, pi_k: &BigUint, pi_ell: &BigUint) -> Result<f64> {
    if pi_k > pi_ell {
        return Err(Error::invalid("pi_k", "must not exceed π_ℓ"));
    }
    Ok(lambda_ell * lambda_ell * ratio(pi_k, pi_ell))
}

/// Upper bound `(c²/α_0²) ‖η_ε‖² π_k / π_ℓ` on `b2`.
pub fn b2_bound(
    c: f64,
    alpha0: f64,
    eta_sup: f64,
    pi_k: &BigUint,
    pi_ell: &BigUint,
) -> Result<f64> {
    if pi_k > pi_ell {
        return Err(Error::invalid("pi_k", "must not exceed π_ℓ"));
    }
    let s = c * eta_sup / alpha0;
    Ok(s * s * ratio(pi_k, pi_ell))
}

/// Upper bound `(16K/α_0)(1 ∧ λ^{-1/2}) ‖η_ε‖ π_ℓ π_{k+1}^{-(1+γ)}` on `b3`.
pub fn b3_bound(
    k_const: f64,
    alpha0: f64,
    eta_sup: f64,
    lambda_ell: f64,
    pi_ell: &BigUint,
    pi_k1: &BigUint,
    gamma: f64,
) -> f64 {
    let ln_ratio = ln_big(pi_ell) - (1.0 + gamma) * ln_big(pi_k1);
    16.0 * k_const / alpha0 * min_one_inv_sqrt(lambda_ell) * eta_sup * ln_ratio.exp()
}

/// The constant of the rate and its `t_0`- and `ℓ`-free envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantC {
    pub value: f64,
    pub envelope: f64,
    pub prefactor: f64,
    /// `value ≤ envelope`; holds whenever `λ(ℓ) ≤ c ‖η_ε‖ / α_0`.
    pub within_envelope: bool,
}

pub fn constant_c(
    lambda_ell: f64,
    c: f64,
    alpha0: f64,
    eta_sup: f64,
    k_const: f64,
) -> Result<ConstantC> {
    if !(eta_sup > 0.0) {
        return Err(Error::invalid("eta_sup", "density bound must be positive"));
    }
    if !(alpha0 > 0.0) {
        return Err(Error::invalid("alpha0", "must be positive"));
    }
    if !(lambda_ell >= 0.0 && c >= 0.0 && k_const >= 0.0) {
        return Err(Error::invalid(
            "constant",
            "λ(ℓ), c and K must be nonnegative",
        ));
    }
    let s = c * eta_sup / alpha0;
    let prefactor = stein_prefactor(lambda_ell);
    let value = prefactor * (lambda_ell * lambda_ell + s * s)
        + 16.0 * k_const / alpha0 * min_one_inv_sqrt(lambda_ell) * eta_sup;
    let envelope = eta_sup / alpha0 * (c + c * s + 16.0 * k_const);
    Ok(ConstantC {
        value,
        envelope,
        prefactor,
        within_envelope: value <= envelope * (1.0 + 1e-12),
    })
}

/// Inputs shared by every level of a bound computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub c: f64,
    pub alpha0: f64,
    pub eta_sup: f64,
    pub k_const: f64,
}

impl BoundInputs {
    pub fn from_tables(c: f64, alpha: &AlphaTable, noise: &NoiseSpec) -> Result<Self> {
        Ok(Self {
            c,
            alpha0: alpha.alpha(0),
            eta_sup: noise
                .eta_sup()
                .ok_or_else(|| Error::invalid("noise", "level 0 has no bounded density"))?,
            k_const: alpha.k_const,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub level: usize,
    pub k: usize,
    pub branch: Branch,
    pub lambda_ell: f64,
    pub b1: f64,
    pub b2_bound: f64,
    pub b3_bound: f64,
    /// `(1 - e^{-λ})/λ (b1 + b2) + b3` with the chosen `k`.
    pub assembled: f64,
    pub constant: ConstantC,
    pub target: f64,
    /// `C · target`.
    pub theorem_raw: f64,
    /// `min(1, theorem_raw)`.
    pub theorem: f64,
    /// The rate exceeds 1, so only the trivial bound is informative.
    pub trivial: bool,
    /// `assembled ≤ theorem_raw`.
    pub dominated: bool,
}

/// Both forms of the bound on `d_TV(L(W_ℓ), Poi(λ(ℓ)))` at one level.
pub fn theorem_bound(
    level: usize,
    selector: &NeighborhoodSelector,
    inputs: &BoundInputs,
    lambda_ell: f64,
) -> Result<BoundReport> {
    let choice = selector.choice(level)?;
    let stats = selector.stats();
    let k = choice.k;
    let pi_k = stats.radices.order_unbounded(k);
    let pi_l = stats.radices.order_unbounded(level);
    let pi_k1 = stats.radices.order_unbounded(k + 1);
    let constant = constant_c(
        lambda_ell,
        inputs.c,
        inputs.alpha0,
        inputs.eta_sup,
        inputs.k_const,
    )?;
    let b1 = b1_exact(lambda_ell, &pi_k, &pi_l)?;
    let b2 = b2_bound(inputs.c, inputs.alpha0, inputs.eta_sup, &pi_k, &pi_l)?;
    let b3 = b3_bound(
        inputs.k_const,
        inputs.alpha0,
        inputs.eta_sup,
        lambda_ell,
        &pi_l,
        &pi_k1,
        stats.gamma_used,
    );
    let assembled = constant.prefactor * (b1 + b2) + b3;
    let target = choice.check.target;
    let raw = constant.value * target;
    Ok(BoundReport {
        level,
        k,
        branch: choice.branch,
        lambda_ell,
        b1,
        b2_bound: b2,
        b3_bound: b3,
        assembled,
        constant,
        target,
        theorem_raw: raw,
        theorem: raw.min(1.0),
        trivial: raw >= 1.0,
        dominated: assembled <= raw * (1.0 + LOG_SLACK),
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Estimates `π_ℓ E|E[X_g | T_g^k] - p_ℓ|`, the quantity `b3` is bounded
/// by before the final triangle inequality.
///
/// `Y^k = Σ_{i≤k} α_i ε_i` is sampled `inner` times to form an empirical
/// distribution function; each of the `outer` tail draws `T^k` is then
/// scored as `P(Y^k + T^k ∈ I_ℓ)`.
#[allow(clippy::too_many_arguments)]
pub fn b3_pre_triangle_mc(
    alpha: &AlphaTable,
    noise: &NoiseSpec,
    window: &Window,
    radices: &RadixSequence,
    k: usize,
    tolerance: f64,
    inner: usize,
    outer: usize,
    seed: u64,
) -> Result<McEstimate> {
    if inner == 0 || outer < 2 {
        return Err(Error::invalid("samples", "need inner ≥ 1 and outer ≥ 2"));
    }
    let depth = alpha.truncation_depth(tolerance)?.max(k);
    let mut rng = trial_rng(seed, 0);
    let mut ys: Vec<f64> = (0..inner)
        .map(|_| {
            (0..=k)
                .map(|i| alpha.alpha(i) * noise.family(i).sample(&mut rng))
                .sum()
        })
        .collect();
    ys.sort_by(f64::total_cmp);
    let cdf = |x: f64, inclusive: bool| {
        if inclusive {
            ys.partition_point(|&y| y <= x)
        } else {
            ys.partition_point(|&y| y < x)
        }
    };
    let mut rng = trial_rng(seed, 1);
    let scores: Vec<f64> = (0..outer)
        .map(|_| {
            let t: f64 = (k + 1..=depth)
                .map(|i| alpha.alpha(i) * noise.family(i).sample(&mut rng))
                .sum();
            let hits = cdf(window.hi - t, true) - cdf(window.lo - t, false);
            hits as f64 / inner as f64
        })
        .collect();
    let p = scores.iter().sum::<f64>() / outer as f64;
    let dev: Vec<f64> = scores.iter().map(|s| (s - p).abs()).collect();
    let mean = dev.iter().sum::<f64>() / outer as f64;
    let var = dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (outer as f64 - 1.0);
    let pi = radices.ln_order(window.level).exp();
    Ok(McEstimate {
        value: pi * mean,
        std_error: pi * (var / outer as f64).sqrt(),
    })
}
