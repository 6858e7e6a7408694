//! One runner per experiment kind; each returns a filled table.

use hierlap::bounds::{theorem_bound, BoundInputs, NeighborhoodSelector, SequenceStats};
use hierlap::dos::{density_at, eta_at, lambda_ell_quadrature};
use hierlap::laplacian::{CouplingSpec, MeasureProfile};
use hierlap::perturb::{verify_conditioning_identity, AlphaTable, FieldSampler, NoiseSpec};
use hierlap::pointproc::{
    default_kmax, level_seed, poisson_law, simulate_counts, simulate_site, tv_estimate, Window,
};

use crate::config::{ExperimentConfig, Kind, ModelConfig, OperatorConfig, Validated};
use crate::error::CliError;
use crate::table::{
    Cell, Table, BOUNDS_HEADER, DOS_HEADER, SIMULATE_HEADER, SPECTRUM_HEADER, VERIFY_HEADER,
};

pub fn run(kind: Kind, cfg: &ExperimentConfig, v: &Validated) -> Result<Table, CliError> {
    match kind {
        Kind::Spectrum => spectrum(cfg, v),
        Kind::Simulate => simulate(cfg, v),
        Kind::Bounds => bounds(cfg, v),
        Kind::Dos => dos(cfg, v),
        Kind::Verify => verify(cfg, v),
    }
}

fn tables(v: &Validated) -> (&AlphaTable, &NoiseSpec) {
    (
        v.alpha.as_ref().expect("validated"),
        v.noise.as_ref().expect("validated"),
    )
}

fn spectrum(cfg: &ExperimentConfig, v: &Validated) -> Result<Table, CliError> {
    let s = cfg.spectrum.as_ref().expect("validated");
    let spec = match s.operator {
        OperatorConfig::PAdicDerivative { order } => {
            let ModelConfig::Constant { p } = cfg.model else {
                unreachable!("validated")
            };
            CouplingSpec::p_adic_derivative(p, order, s.depth)
        }
        OperatorConfig::Fractional { order, scale, mass } => {
            MeasureProfile::counting(v.radices.clone(), mass)
                .and_then(|profile| CouplingSpec::fractional(profile, order, scale))
        }
        OperatorConfig::Standard { mass } => {
            MeasureProfile::counting(v.radices.clone(), mass).map(CouplingSpec::standard)
        }
    }
    .map_err(|e| CliError::from_core("spectrum.operator", e))?;
    let echo = cfg.echo();
    let mut t = Table::new("spectrum", SPECTRUM_HEADER);
    for j in 0..=spec.depth() {
        t.push(vec![
            j.into(),
            spec.eigenvalue(j).map_err(CliError::run)?.into(),
            spec.multiplicity(j).map_err(CliError::run)?.into(),
            echo.clone().into(),
        ]);
    }
    Ok(t)
}

fn simulate(cfg: &ExperimentConfig, v: &Validated) -> Result<Table, CliError> {
    let (alpha, noise) = tables(v);
    // build every sampler before the first trial
    let mut plans = Vec::new();
    for &level in &v.levels {
        let tol = cfg.tolerance_at(&v.radices, v.c, level);
        let sampler = FieldSampler::new(&v.radices, alpha, noise, level, tol)
            .map_err(|e| CliError::from_core("tolerance", e))?;
        let window = Window::new(&v.radices, v.t0, v.c, level)
            .map_err(|e| CliError::from_core("levels", e))?;
        plans.push((level, sampler, window));
    }
    let echo = cfg.echo();
    let mut t = Table::new("simulate", SIMULATE_HEADER);
    for (level, sampler, window) in plans {
        let q = lambda_ell_quadrature(level, &v.radices, alpha, noise, v.c, v.t0, &v.quad)
            .map_err(CliError::run)?;
        let hist = simulate_counts(&sampler, &window, v.trials, level_seed(v.seed, level))
            .map_err(CliError::run)?;
        let law = hist.law().map_err(CliError::run)?;
        let mean = hist.mean();
        let var: f64 = law
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| p * (k as f64 - mean).powi(2))
            .sum();
        let reference = poisson_law(q.value, default_kmax(q.value).map_err(CliError::run)?)
            .map_err(CliError::run)?;
        let est = tv_estimate(&law, v.trials, &reference).map_err(CliError::run)?;
        t.push(vec![
            level.into(),
            sampler.leaves().into(),
            v.trials.into(),
            v.seed.into(),
            q.value.into(),
            q.error.into(),
            mean.into(),
            (var / v.trials as f64).sqrt().into(),
            est.tv.upper.into(),
            est.tv.lower.into(),
            est.std_error.into(),
            est.bias_bound.into(),
            echo.clone().into(),
        ]);
    }
    Ok(t)
}

fn bounds(cfg: &ExperimentConfig, v: &Validated) -> Result<Table, CliError> {
    let (alpha, noise) = tables(v);
    let top = *v.levels.last().expect("validated");
    let stats = SequenceStats::new(&v.radices, alpha.gamma, top)
        .map_err(|e| CliError::from_core("alpha", e))?;
    let selector = NeighborhoodSelector::new(stats).map_err(CliError::run)?;
    let inputs =
        BoundInputs::from_tables(v.c, alpha, noise).map_err(|e| CliError::from_core("noise", e))?;
    // with every weight beyond level 0 zero the tail condition is vacuous
    let applicable = alpha.tail_mass(1) > 0.0;
    let echo = cfg.echo();
    let mut t = Table::new("bounds", BOUNDS_HEADER);
    for &level in &v.levels {
        let q = lambda_ell_quadrature(level, &v.radices, alpha, noise, v.c, v.t0, &v.quad)
            .map_err(CliError::run)?;
        let r = theorem_bound(level, &selector, &inputs, q.value).map_err(CliError::run)?;
        let branch = match r.branch {
            hierlap::bounds::Branch::Bounded => "bounded",
            hierlap::bounds::Branch::Unbounded => "unbounded",
        };
        t.push(vec![
            level.into(),
            r.k.into(),
            branch.into(),
            r.lambda_ell.into(),
            r.b1.into(),
            r.b2_bound.into(),
            r.b3_bound.into(),
            r.assembled.into(),
            r.constant.value.into(),
            r.target.into(),
            r.theorem_raw.into(),
            r.theorem.into(),
            r.trivial.into(),
            applicable.into(),
            echo.clone().into(),
        ]);
    }
    Ok(t)
}

fn dos(cfg: &ExperimentConfig, v: &Validated) -> Result<Table, CliError> {
    let (alpha, noise) = tables(v);
    let d = cfg.dos.as_ref().expect("validated");
    let samples = if v.trials > 0 {
        let radices = hierlap::tree::RadixSequence::constant(2, 0).map_err(CliError::run)?;
        let tol = cfg.tolerance.unwrap_or(1e-9);
        let sampler = FieldSampler::new(&radices, alpha, noise, 0, tol)
            .map_err(|e| CliError::from_core("tolerance", e))?;
        Some(simulate_site(&sampler, 0, v.trials, v.seed).map_err(CliError::run)?)
    } else {
        None
    };
    let echo = cfg.echo();
    let mut t = Table::new("dos", DOS_HEADER);
    for &point in &d.points {
        let eta = eta_at(point, alpha, noise, &v.quad).map_err(CliError::run)?;
        let method = match eta.method {
            hierlap::dos::DensityMethod::Quadrature => "quadrature",
            hierlap::dos::DensityMethod::Mixture => "mixture",
            hierlap::dos::DensityMethod::Histogram => "histogram",
        };
        let (mc, mc_se, trials, seed) = match &samples {
            Some(s) => {
                let h = density_at(s, point, d.bin_width).map_err(CliError::run)?;
                (
                    h.value.into(),
                    h.error.into(),
                    v.trials.into(),
                    v.seed.into(),
                )
            }
            None => (Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty),
        };
        t.push(vec![
            point.into(),
            eta.value.into(),
            eta.error.into(),
            method.into(),
            eta.flagged.into(),
            mc,
            mc_se,
            trials,
            seed,
            echo.clone().into(),
        ]);
    }
    Ok(t)
}

fn verify(cfg: &ExperimentConfig, v: &Validated) -> Result<Table, CliError> {
    let c = cfg.verify.as_ref().expect("validated");
    let est = verify_conditioning_identity(c.f, c.x, c.z, v.trials, v.seed)
        .map_err(|e| CliError::from_core("verify", e))?;
    let mut t = Table::new("verify", VERIFY_HEADER);
    t.push(vec![
        to_json(&c.f).into(),
        to_json(&c.x).into(),
        to_json(&c.z).into(),
        v.trials.into(),
        v.seed.into(),
        est.joint.into(),
        est.joint_se.into(),
        est.conditional.into(),
        est.conditional_se.into(),
        est.combined_se().into(),
        est.agrees_within(4.0).into(),
    ]);
    Ok(t)
}

fn to_json<T: serde::Serialize>(x: &T) -> String {
    serde_json::to_string(x).expect("plain data serialises")
}
