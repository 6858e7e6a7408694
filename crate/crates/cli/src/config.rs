//! Experiment configuration: parsing, validation and the parameter echo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hierlap::dos::QuadConfig;
use hierlap::perturb::{AlphaTable, NoiseFamily, NoiseSpec, TestFunction};
use hierlap::tree::{Continuation, RadixSequence};

use crate::error::CliError;

/// Rule generating the radices `n_1, n_2, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `n_j = p` for every `j`.
    Constant { p: u64 },
    /// The listed radices, then `n_j = then`.
    Explicit { radices: Vec<u64>, then: u64 },
    /// The listed radices, then `n_j = slope * j + intercept`.
    Affine {
        #[serde(default)]
        prefix: Vec<u64>,
        slope: u64,
        intercept: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaConfig {
    /// `α_k = (1 - p^{-order}) p^{-order k}`; needs a constant-radix model.
    PAdic { order: f64 },
    /// `α_0 = 1`, all other weights zero.
    SingleTerm,
    Explicit {
        alphas: Vec<f64>,
        k: f64,
        gamma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    /// `p^α 𝔅^α` on the `p`-adic tree; the model must be constant-radix.
    PAdicDerivative { order: f64 },
    Fractional {
        order: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    Standard {
        #[serde(default = "one")]
        mass: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub depth: usize,
    pub operator: OperatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosConfig {
    /// Evaluation points `t`.
    pub points: Vec<f64>,
    /// Histogram bin width for the Monte Carlo column.
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
}

fn default_bin_width() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub f: TestFunction,
    pub x: NoiseFamily,
    pub z: NoiseFamily,
}

/// Optional quadrature knobs; missing ones keep the library defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub tol: Option<f64>,
    pub max_cutoff: Option<f64>,
    pub max_panels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub alpha: Option<AlphaConfig>,
    pub noise: Option<NoiseFamily>,
    /// Per-level overrides of `noise` for levels `0, 1, …`.
    #[serde(default)]
    pub noise_levels: Vec<NoiseFamily>,
    pub t0: Option<f64>,
    pub c: Option<f64>,
    #[serde(default)]
    pub levels: Vec<usize>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    /// Truncation tolerance of the field sampler; default `1e-3 c / (2 π_ℓ)`.
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    pub output: Option<PathBuf>,
    pub spectrum: Option<SpectrumConfig>,
    pub dos: Option<DosConfig>,
    pub verify: Option<VerifyConfig>,
}

/// The scientific parameters shared by every experiment kind, echoed in
/// each result row so outputs can be matched.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Echo<'a> {
    pub model: &'a ModelConfig,
    pub alpha: Option<&'a AlphaConfig>,
    pub noise: Option<&'a NoiseFamily>,
    pub noise_levels: &'a [NoiseFamily],
    pub t0: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Spectrum,
    Simulate,
    Bounds,
    Dos,
    Verify,
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))
}

fn require<T: Copy>(value: Option<T>, field: &'static str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::config(field, "required for this experiment kind"))
}

/// Validated inputs for one run.
pub struct Validated {
    pub radices: RadixSequence,
    pub alpha: Option<AlphaTable>,
    pub noise: Option<NoiseSpec>,
    pub t0: f64,
    pub c: f64,
    pub levels: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    pub quad: QuadConfig,
}

impl ExperimentConfig {
    pub fn echo(&self) -> String {
        let echo = Echo {
            model: &self.model,
            alpha: self.alpha.as_ref(),
            noise: self.noise.as_ref(),
            noise_levels: &self.noise_levels,
            t0: self.t0,
            c: self.c,
        };
        serde_json::to_string(&echo).expect("echo serialises")
    }

    fn radices(&self, depth: usize) -> Result<RadixSequence, CliError> {
        let seq = match &self.model {
            ModelConfig::Constant { p } => RadixSequence::constant(*p, depth),
            ModelConfig::Explicit { radices, then } => {
                RadixSequence::new(radices.clone(), Continuation::Constant(*then))
            }
            ModelConfig::Affine {
                prefix,
                slope,
                intercept,
            } => RadixSequence::new(
                prefix.clone(),
                Continuation::Affine {
                    slope: *slope,
                    intercept: *intercept,
                },
            ),
        }
        .map_err(|e| CliError::from_core("model", e))?;
        Ok(if depth > seq.depth() {
            seq.extended(depth)
        } else {
            seq
        })
    }

    fn alpha_table(&self) -> Result<AlphaTable, CliError> {
        match self
            .alpha
            .as_ref()
            .ok_or_else(|| CliError::config("alpha", "required for this experiment kind"))?
        {
            AlphaConfig::PAdic { order } => match self.model {
                ModelConfig::Constant { p } => AlphaTable::p_adic(p, *order),
                _ => {
                    return Err(CliError::config(
                        "alpha.form",
                        "p_adic weights need a constant-radix model",
                    ))
                }
            },
            AlphaConfig::SingleTerm => Ok(AlphaTable::single_term()),
            AlphaConfig::Explicit { alphas, k, gamma } => {
                AlphaTable::explicit(alphas.clone(), *k, *gamma)
            }
        }
        .map_err(|e| CliError::from_core("alpha", e))
    }

    fn noise_spec(&self) -> Result<NoiseSpec, CliError> {
        let rest = require(self.noise, "noise")?;
        NoiseSpec::new(self.noise_levels.clone(), rest).map_err(|e| CliError::from_core("noise", e))
    }

    fn quad(&self) -> Result<QuadConfig, CliError> {
        let mut q = QuadConfig::default();
        if let Some(tol) = self.quadrature.tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(CliError::config("quadrature.tol", "must lie in (0, 1)"));
            }
            q.tol = tol;
        }
        if let Some(s) = self.quadrature.max_cutoff {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::config(
                    "quadrature.max_cutoff",
                    "must be positive and finite",
                ));
            }
            q.max_cutoff = s;
        }
        if let Some(n) = self.quadrature.max_panels {
            if n < 64 {
                return Err(CliError::config(
                    "quadrature.max_panels",
                    "must be at least 64",
                ));
            }
            q.max_panels = n;
        }
        Ok(q)
    }

    fn levels(&self) -> Result<Vec<usize>, CliError> {
        if self.levels.is_empty() {
            return Err(CliError::config("levels", "at least one level is required"));
        }
        let mut sorted = self.levels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.levels.len() {
            return Err(CliError::config("levels", "levels must be distinct"));
        }
        Ok(sorted)
    }

    /// Checks every field the kind uses before any work starts.
    pub fn validate(&self, kind: Kind, seed_flag: Option<u64>) -> Result<Validated, CliError> {
        let seed = seed_flag.or(self.seed);
        let stochastic = matches!(kind, Kind::Simulate | Kind::Verify)
            || (kind == Kind::Dos && self.trials.is_some());
        if stochastic && seed.is_none() {
            return Err(CliError::config(
                "seed",
                "required (in the config or via --seed)",
            ));
        }
        let finite = |v: f64, field: &'static str| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::config(field, "must be finite"))
            }
        };
        let mut v = Validated {
            radices: self.radices(0)?,
            alpha: None,
            noise: None,
            t0: 0.0,
            c: 0.0,
            levels: Vec::new(),
            trials: 0,
            seed: seed.unwrap_or(0),
            quad: self.quad()?,
        };
        match kind {
            Kind::Spectrum => {
                let s = self
                    .spectrum
                    .as_ref()
                    .ok_or_else(|| CliError::config("spectrum", "required for kind spectrum"))?;
                if s.depth == 0 || s.depth > 24 {
                    return Err(CliError::config("spectrum.depth", "must lie in 1..=24"));
                }
                if let OperatorConfig::PAdicDerivative { .. } = s.operator {
                    if !matches!(self.model, ModelConfig::Constant { .. }) {
                        return Err(CliError::config(
                            "spectrum.operator",
                            "p_adic_derivative needs a constant-radix model",
                        ));
                    }
                }
                v.radices = self.radices(s.depth)?.extended(s.depth);
                v.radices
                    .leaf_count()
                    .map_err(|e| CliError::from_core("spectrum.depth", e))?;
            }
            Kind::Simulate | Kind::Bounds => {
                v.levels = self.levels()?;
                let top = *v.levels.last().expect("nonempty");
                v.radices = self.radices(top)?;
                v.alpha = Some(self.alpha_table()?);
                v.noise = Some(self.noise_spec()?);
                v.t0 = finite(require(self.t0, "t0")?, "t0")?;
                v.c = require(self.c, "c")?;
                if !(v.c > 0.0 && v.c.is_finite()) {
                    return Err(CliError::config("c", "must be positive and finite"));
                }
                if kind == Kind::Bounds {
                    if v.levels[0] == 0 {
                        return Err(CliError::config(
                            "levels",
                            "bounds need levels of at least 1",
                        ));
                    }
                    let alpha = v.alpha.as_ref().expect("set above");
                    alpha
                        .check_tail_condition(&v.radices, top)
                        .map_err(|e| CliError::from_core("alpha", e))?;
                }
                if kind == Kind::Simulate {
                    v.trials = require(self.trials, "trials")?;
                    if v.trials == 0 {
                        return Err(CliError::config("trials", "must be positive"));
                    }
                    if let Some(tol) = self.tolerance {
                        if !(tol > 0.0) {
                            return Err(CliError::config("tolerance", "must be positive"));
                        }
                    }
                    for &l in &v.levels {
                        v.radices
                            .order_usize(l)
                            .map_err(|e| CliError::from_core("levels", e))?;
                        let alpha = v.alpha.as_ref().expect("set above");
                        alpha
                            .truncation_depth(self.tolerance_at(&v.radices, v.c, l))
                            .map_err(|e| CliError::from_core("tolerance", e))?;
                    }
                }
            }
            Kind::Dos => {
                let d = self
                    .dos
                    .as_ref()
                    .ok_or_else(|| CliError::config("dos", "required for kind dos"))?;
                if d.points.is_empty() || d.points.iter().any(|t| !t.is_finite()) {
                    return Err(CliError::config(
                        "dos.points",
                        "need at least one finite point",
                    ));
                }
                if !(d.bin_width > 0.0 && d.bin_width < 2.0) {
                    return Err(CliError::config("dos.bin_width", "must lie in (0, 2)"));
                }
                v.alpha = Some(self.alpha_table()?);
                v.noise = Some(self.noise_spec()?);
                if let Some(n) = self.trials {
                    if n < 10_000 {
                        return Err(CliError::config(
                            "trials",
                            "histograms need at least 10000 samples",
                        ));
                    }
                    v.trials = n;
                }
            }
            Kind::Verify => {
                let cfg = self
                    .verify
                    .as_ref()
                    .ok_or_else(|| CliError::config("verify", "required for kind verify"))?;
                cfg.x
                    .validate()
                    .map_err(|e| CliError::from_core("verify.x", e))?;
                cfg.z
                    .validate()
                    .map_err(|e| CliError::from_core("verify.z", e))?;
                v.trials = require(self.trials, "trials")?;
                if v.trials < 2 {
                    return Err(CliError::config("trials", "need at least 2 trials"));
                }
            }
        }
        Ok(v)
    }

    pub fn tolerance_at(&self, radices: &RadixSequence, c: f64, level: usize) -> f64 {
        self.tolerance
            .unwrap_or_else(|| hierlap::perturb::FieldSampler::default_tolerance(radices, c, level))
    }
}
