//! Deterministic homogeneous hierarchical Laplacians on a truncated tree.
//!
//! A Laplacian is fixed by one coupling `c_j` per level: it acts on a leaf
//! function by penalising the deviation of `f(x)` from its average over each
//! ball containing `x`, weighted by the coupling of that ball. Couplings above
//! the root are not materialised; their sum is carried as a scalar `tail`
//! acting like an extra copy of the root term. The tail is invisible on
//! zero-mean functions, which is where every eigen-identity lives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{BallAddress, Continuation, RadixSequence};

/// Measure of a level-`j` ball: `m_j = singleton_mass · π_j`.
///
/// Homogeneity forces every ball at a level to carry the same mass and every
/// ball to split its mass evenly among its children, so the whole profile is
/// fixed by the singleton mass and the radices.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureProfile {
    radices: RadixSequence,
    singleton_mass: f64,
}

impl MeasureProfile {
    /// Counting measure scaled so that singletons have mass `singleton_mass`.
    pub fn counting(radices: RadixSequence, singleton_mass: f64) -> Result<Self> {
        if !(singleton_mass > 0.0 && singleton_mass.is_finite()) {
            return Err(Error::invalid(
                "singleton_mass",
                "must be positive and finite",
            ));
        }
        Ok(Self {
            radices,
            singleton_mass,
        })
    }

    pub fn radices(&self) -> &RadixSequence {
        &self.radices
    }

    pub fn depth(&self) -> usize {
        self.radices.depth()
    }

    pub fn singleton_mass(&self) -> f64 {
        self.singleton_mass
    }

    /// `m_j` for any level, including levels above the truncation.
    pub fn mass(&self, j: usize) -> f64 {
        self.singleton_mass * (self.radices.ln_order(j)).exp()
    }

    /// `m_j^{-a}`, evaluated in log space.
    fn mass_pow_neg(&self, j: usize, a: f64) -> f64 {
        (-a * (self.singleton_mass.ln() + self.radices.ln_order(j))).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingKind {
    /// `C(B) = 1/m(B) - 1/m(B')`, so that `λ(B) = 1/m(B)`.
    Standard,
    /// `C(B) = scale · (m(B)^{-α} - m(B')^{-α})`, so that `λ(B) = scale · m(B)^{-α}`.
    Fractional { alpha: f64, scale: f64 },
    /// User supplied table; the tail is supplied as well.
    Custom,
}

/// Per-level couplings of a homogeneous hierarchical Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    kind: CouplingKind,
    profile: MeasureProfile,
    couplings: Vec<f64>,
    tail: f64,
}

impl CouplingSpec {
    pub fn standard(profile: MeasureProfile) -> Self {
        let depth = profile.depth();
        let couplings = (0..=depth)
            .map(|j| (1.0 - 1.0 / profile.radices.radix(j + 1) as f64) / profile.mass(j))
            .collect();
        let tail = 1.0 / profile.mass(depth + 1);
        Self {
            kind: CouplingKind::Standard,
            profile,
            couplings,
            tail,
        }
    }

    /// The family `𝔅^α`, scaled by `scale`.
    pub fn fractional(profile: MeasureProfile, alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive and finite"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", "must be positive and finite"));
        }
        let depth = profile.depth();
        let couplings = (0..=depth)
            .map(|j| {
                let shrink = (profile.radices.radix(j + 1) as f64).powf(-alpha);
                scale * profile.mass_pow_neg(j, alpha) * (1.0 - shrink)
            })
            .collect();
        let tail = scale * profile.mass_pow_neg(depth + 1, alpha);
        Ok(Self {
            kind: CouplingKind::Fractional { alpha, scale },
            profile,
            couplings,
            tail,
        })
    }

    /// The `p`-adic fractional derivative `𝔇^α = p^α 𝔅^α`, restricted to the
    /// horocycle whose eigenvalue is 1.
    ///
    /// Level-`j` balls have Haar measure `p^{j+1}`, so level 0 carries the
    /// eigenvalue `p^α · p^{-α} = 1` and `C(B_j) = (p^α - 1) p^{-α(j+1)}`.
    pub fn p_adic_derivative(p: u64, alpha: f64, depth: usize) -> Result<Self> {
        let radices = RadixSequence::constant(p, depth)?;
        let profile = MeasureProfile::counting(radices, p as f64)?;
        Self::fractional(profile, alpha, (p as f64).powf(alpha))
    }

    pub fn custom(profile: MeasureProfile, couplings: Vec<f64>, tail: f64) -> Result<Self> {
        if couplings.len() != profile.depth() + 1 {
            return Err(Error::DimensionMismatch {
                expected: profile.depth() + 1,
                got: couplings.len(),
            });
        }
        if let Some(j) = couplings.iter().position(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid(
                "couplings",
                format!("c_{j} = {} is not strictly positive", couplings[j]),
            ));
        }
        if !(tail >= 0.0 && tail.is_finite()) {
            return Err(Error::invalid("tail", "must be nonnegative and finite"));
        }
        Ok(Self {
            kind: CouplingKind::Custom,
            profile,
            couplings,
            tail,
        })
    }

    pub fn kind(&self) -> CouplingKind {
        self.kind
    }

    pub fn profile(&self) -> &MeasureProfile {
        &self.profile
    }

    pub fn depth(&self) -> usize {
        self.profile.depth()
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// `c_j` for any level; `None` above the truncation of a custom table.
    pub fn coupling(&self, j: usize) -> Option<f64> {
        if j <= self.depth() {
            return Some(self.couplings[j]);
        }
        let n_next = self.profile.radices.radix(j + 1) as f64;
        match self.kind {
            CouplingKind::Standard => Some((1.0 - 1.0 / n_next) / self.profile.mass(j)),
            CouplingKind::Fractional { alpha, scale } => {
                Some(scale * self.profile.mass_pow_neg(j, alpha) * (1.0 - n_next.powf(-alpha)))
            }
            CouplingKind::Custom => None,
        }
    }

    /// `λ_j = Σ_{i ≥ j} c_i`: the eigenvalue of every Haar function whose
    /// parent ball sits at level `j`.
    pub fn eigenvalue(&self, j: usize) -> Result<f64> {
        if j > self.depth() {
            return Err(Error::LevelOutOfRange {
                level: j,
                max: self.depth(),
            });
        }
        // smallest terms first
        Ok(self.couplings[j..]
            .iter()
            .rev()
            .fold(self.tail, |acc, c| acc + c))
    }

    /// Eigenvalues `λ_0, …, λ_L`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..=self.depth())
            .map(|j| self.eigenvalue(j).expect("level in range"))
            .collect()
    }

    /// Multiplicity of `λ_j` on the window: `(n_j - 1) π_L / π_j` for `j ≥ 1`.
    pub fn multiplicity(&self, j: usize) -> Result<usize> {
        let radices = &self.profile.radices;
        if j == 0 {
            return Ok(0);
        }
        Ok((radices.radix(j) as usize - 1) * radices.ball_count(j)?)
    }
}

/// A real function on the leaves of the window.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafFunction {
    pub values: Vec<f64>,
}

impl LeafFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self {
            values: vec![value; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ f g dm` with the profile's singleton mass.
    pub fn inner(&self, other: &LeafFunction, profile: &MeasureProfile) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s * profile.singleton_mass()
    }
}

/// `f_{B,B'} = 1_B / m(B) - 1_{B'} / m(B')` for the `child_index`-th child `B`
/// of `parent = B'`.
pub fn haar_function(
    profile: &MeasureProfile,
    parent: BallAddress,
    child_index: usize,
) -> Result<LeafFunction> {
    let radices = profile.radices();
    if parent.level == 0 {
        return Err(Error::invalid("parent", "singletons have no children"));
    }
    let n = radices.radix(parent.level) as usize;
    if child_index >= n {
        return Err(Error::invalid(
            "child_index",
            format!("ball at level {} has only {n} children", parent.level),
        ));
    }
    let parent_range = radices.members(parent)?;
    let child = BallAddress::new(parent.level - 1, parent.index * n + child_index);
    let child_range = radices.members(child)?;

    let outer = 1.0 / profile.mass(parent.level);
    let inner = 1.0 / profile.mass(parent.level - 1) - outer;
    let mut values = vec![0.0; radices.leaf_count()?];
    for x in parent_range {
        values[x] = if child_range.contains(&x) {
            inner
        } else {
            -outer
        };
    }
    Ok(LeafFunction { values })
}

/// Pointwise application of the Laplacian on the window.
///
/// `(Lf)(x) = Σ_j c_j (f(x) - A_j f(x)) + tail · (f(x) - A_L f(x))`, where
/// `A_j f(x)` is the average of `f` over the level-`j` ball containing `x`.
pub fn apply_laplacian(f: &LeafFunction, spec: &CouplingSpec) -> Result<LeafFunction> {
    let radices = spec.profile().radices();
    let size = radices.leaf_count()?;
    if f.len() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            got: f.len(),
        });
    }
    let depth = spec.depth();
    let mut out = vec![0.0; size];
    // block sums of the current level, one per ball
    let mut sums = f.values.clone();
    let mut ball_size = 1usize;
    for j in 1..=depth {
        let n = radices.radix(j) as usize;
        sums = sums.chunks_exact(n).map(|c| c.iter().sum()).collect();
        ball_size *= n;
        let weight = if j == depth {
            spec.couplings()[j] + spec.tail()
        } else {
            spec.couplings()[j]
        };
        for (x, o) in out.iter_mut().enumerate() {
            let avg = sums[x / ball_size] / ball_size as f64;
            *o += weight * (f.values[x] - avg);
        }
    }
    Ok(LeafFunction { values: out })
}

/// Outcome of checking `1/κ ≤ c_j m_j^δ ≤ κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaCheck {
    /// `δ > 1`, the regime covered by the Poisson convergence theorem.
    pub in_scope: bool,
    pub holds: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Level of the ratio furthest outside `[1/κ, κ]` (or closest to its
    /// boundary when the condition holds); `None` when it lies above the
    /// truncation.
    pub worst_level: Option<usize>,
    /// Whether levels above the truncation were covered in closed form.
    pub continuation_checked: bool,
}

pub fn check_delta_condition(spec: &CouplingSpec, delta: f64, kappa: f64) -> Result<DeltaCheck> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa", "must be positive"));
    }
    let profile = spec.profile();
    let mut ratios: Vec<(Option<usize>, f64)> = (0..=spec.depth())
        .map(|j| (Some(j), spec.couplings()[j] * profile.mass(j).powf(delta)))
        .collect();

    let continuation_checked = match spec.kind() {
        CouplingKind::Custom => false,
        kind => {
            let (alpha, scale) = match kind {
                CouplingKind::Fractional { alpha, scale } => (alpha, scale),
                _ => (1.0, 1.0),
            };
            // c_j m_j^δ = scale · m_j^{δ-α} (1 - n_{j+1}^{-α}) for j > L
            if (delta - alpha).abs() > 1e-12 {
                let limit = if delta > alpha { f64::INFINITY } else { 0.0 };
                ratios.push((None, limit));
            } else {
                let first = spec.depth() + 1;
                match profile.radices().continuation() {
                    Continuation::Constant(n) => {
                        ratios.push((None, scale * (1.0 - (n as f64).powf(-alpha))));
                    }
                    Continuation::Affine { .. } => {
                        let n = profile.radices().radix(first + 1) as f64;
                        ratios.push((None, scale * (1.0 - n.powf(-alpha))));
                        ratios.push((None, scale));
                    }
                }
            }
            true
        }
    };

    let lo = 1.0 / kappa;
    let min_ratio = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    // log-distance outside (positive) or inside (negative) the band
    let badness = |r: f64| (lo.ln() - r.ln()).max(r.ln() - kappa.ln());
    let worst = ratios
        .iter()
        .copied()
        .max_by(|a, b| badness(a.1).total_cmp(&badness(b.1)))
        .expect("at least one level");
    Ok(DeltaCheck {
        in_scope: delta > 1.0,
        // relative slack for the rounding in m_j^δ
        holds: min_ratio >= lo * (1.0 - 1e-12) && max_ratio <= kappa * (1.0 + 1e-12),
        min_ratio,
        max_ratio,
        worst_level: worst.0,
        continuation_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn binary(depth: usize) -> MeasureProfile {
        MeasureProfile::counting(RadixSequence::constant(2, depth).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn standard_eigenvalues_are_inverse_masses() {
        let spec = CouplingSpec::standard(binary(3));
        assert_relative_eq!(spec.eigenvalue(1).unwrap(), 0.5, epsilon = 1e-15);
        for j in 0..=3 {
            assert_relative_eq!(
                spec.eigenvalue(j).unwrap(),
                1.0 / spec.profile().mass(j),
                max_relative = 1e-14
            );
        }
        assert!(spec.eigenvalue(4).is_err());
    }

    #[test]
    fn fractional_eigenvalues_telescope() {
        let spec = CouplingSpec::fractional(binary(5), 2.0, 1.0).unwrap();
        assert_relative_eq!(spec.eigenvalue(0).unwrap(), 1.0, epsilon = 1e-15);
        for j in 0..=5 {
            assert_relative_eq!(
                spec.eigenvalue(j).unwrap(),
                4f64.powi(-(j as i32)),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn p_adic_derivative_has_unit_eigenvalue_at_the_fixed_horocycle() {
        for p in [2, 3, 5] {
            let spec = CouplingSpec::p_adic_derivative(p, 2.0, 6).unwrap();
            assert_relative_eq!(spec.eigenvalue(0).unwrap(), 1.0, max_relative = 1e-14);
            let pa = (p as f64).powi(2);
            assert_relative_eq!(
                spec.couplings()[1],
                (pa - 1.0) * pa.powi(-2),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn haar_function_values() {
        let profile = binary(2);
        let f = haar_function(&profile, BallAddress::new(1, 0), 0).unwrap();
        assert_eq!(f.values, vec![0.5, -0.5, 0.0, 0.0]);
        assert!(haar_function(&profile, BallAddress::new(1, 0), 2).is_err());
        assert!(haar_function(&profile, BallAddress::new(0, 0), 0).is_err());
    }

    #[test]
    fn haar_functions_have_zero_mean_and_disjoint_parents_are_orthogonal() {
        let profile =
            MeasureProfile::counting(RadixSequence::constant(3, 3).unwrap(), 0.5).unwrap();
        let one = LeafFunction::constant(27, 1.0);
        let f = haar_function(&profile, BallAddress::new(2, 1), 2).unwrap();
        let g = haar_function(&profile, BallAddress::new(2, 2), 0).unwrap();
        assert!(f.inner(&one, &profile).abs() < 1e-15);
        assert_eq!(f.inner(&g, &profile), 0.0);
    }

    #[test]
    fn constants_are_annihilated() {
        let spec = CouplingSpec::standard(binary(4));
        let lf = apply_laplacian(&LeafFunction::constant(16, 3.5), &spec).unwrap();
        assert!(lf.max_norm() < 1e-14);
        assert!(matches!(
            apply_laplacian(&LeafFunction::constant(15, 1.0), &spec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn haar_eigen_identity() {
        let radices = RadixSequence::new(vec![2, 3, 2, 5], Continuation::Constant(2)).unwrap();
        let profile = MeasureProfile::counting(radices, 1.0).unwrap();
        let spec = CouplingSpec::fractional(profile.clone(), 1.5, 1.0).unwrap();
        for level in 1..=4 {
            let lambda = spec.eigenvalue(level).unwrap();
            let f = haar_function(&profile, BallAddress::new(level, 0), 1).unwrap();
            let lf = apply_laplacian(&f, &spec).unwrap();
            let err = lf
                .values
                .iter()
                .zip(&f.values)
                .map(|(a, b)| (a - lambda * b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10 * lambda * f.max_norm(), "level {level}: {err}");
        }
    }

    #[test]
    fn two_level_standard_eigenvalue() {
        let spec = CouplingSpec::standard(binary(2));
        let f = LeafFunction::new(vec![0.5, -0.5, 0.0, 0.0]);
        let lf = apply_laplacian(&f, &spec).unwrap();
        let lambda = 1.0 / spec.profile().mass(1);
        for (a, b) in lf.values.iter().zip(&f.values) {
            assert_relative_eq!(*a, lambda * b, epsilon = 1e-15);
        }
    }

    #[test]
    fn delta_condition_for_fractional_family() {
        let spec = CouplingSpec::fractional(binary(8), 2.0, 1.0).unwrap();
        let tight = check_delta_condition(&spec, 2.0, 4.0 / 3.0).unwrap();
        assert!(tight.in_scope && tight.holds && tight.continuation_checked);
        assert_relative_eq!(tight.min_ratio, 0.75, max_relative = 1e-12);
        assert_relative_eq!(tight.max_ratio, 0.75, max_relative = 1e-12);
        // c_j m_j^2 = 3/4 < 1 = 1/κ
        assert!(!check_delta_condition(&spec, 2.0, 1.0).unwrap().holds);
        // wrong exponent drifts off along the continuation
        let off = check_delta_condition(&spec, 2.5, 100.0).unwrap();
        assert!(!off.holds);
        assert_eq!(off.worst_level, None);
    }

    #[test]
    fn delta_condition_scope_flag() {
        let spec = CouplingSpec::standard(binary(4));
        let check = check_delta_condition(&spec, 1.0, 2.0).unwrap();
        assert!(!check.in_scope);
        assert!(check.holds);
        assert!(!check_delta_condition(&spec, 1.5, 1e6).unwrap().holds);
    }

    #[test]
    fn custom_rejects_nonpositive_couplings() {
        let err = CouplingSpec::custom(binary(2), vec![1.0, 0.0, 0.5], 0.1).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidParameter {
                name: "couplings",
                ..
            }
        ));
        let ok = CouplingSpec::custom(binary(2), vec![1.0, 0.3, 0.5], 0.1).unwrap();
        let check = check_delta_condition(&ok, 1.5, 10.0).unwrap();
        assert!(!check.continuation_checked);
        assert_relative_eq!(ok.eigenvalue(1).unwrap(), 0.9, epsilon = 1e-15);
    }
}
