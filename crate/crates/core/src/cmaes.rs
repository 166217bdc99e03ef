//! (μ/μ_w, λ)-CMA-ES with the default strategy parameters from Hansen's
//! tutorial, used as the inner optimizer of the Rastrigin harness.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::config::{Configuration, ParamValue};
use crate::harness::rastrigin;

/// Half-width of the standard Rastrigin domain.
pub const RASTRIGIN_BOUND: f64 = 5.12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmaesError {
    #[error("sigma0 must be positive, got {0}")]
    Sigma(f64),
    #[error("popsize must be at least 2, got {0}")]
    Popsize(usize),
    #[error("dimension must be at least 1")]
    Dimension,
    #[error("budget of {budget} evaluations is below popsize {popsize}")]
    Budget { budget: usize, popsize: usize },
    #[error("missing or malformed hyperparameter `{0}`")]
    Hyper(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmaesParams {
    pub sigma0: f64,
    pub popsize: usize,
    pub dim: usize,
}

impl CmaesParams {
    pub fn validate(&self) -> Result<(), CmaesError> {
        if !(self.sigma0 > 0.0) || !self.sigma0.is_finite() {
            return Err(CmaesError::Sigma(self.sigma0));
        }
        if self.popsize < 2 {
            return Err(CmaesError::Popsize(self.popsize));
        }
        if self.dim == 0 {
            return Err(CmaesError::Dimension);
        }
        Ok(())
    }

    /// Reads `sigma0`, `popsize` and `dim` from a configuration.
    pub fn from_config(hyper: &Configuration) -> Result<Self, CmaesError> {
        let sigma0 = hyper
            .get("sigma0")
            .and_then(ParamValue::as_f64)
            .ok_or(CmaesError::Hyper("sigma0"))?;
        let count = |name: &'static str| match hyper.get(name) {
            Some(ParamValue::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(ParamValue::Real(x)) if *x >= 0.0 && x.fract() == 0.0 => Ok(*x as usize),
            _ => Err(CmaesError::Hyper(name)),
        };
        let params = Self {
            sigma0,
            popsize: count("popsize")?,
            dim: count("dim")?,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesOutcome {
    pub best_f: f64,
    pub best_x: Vec<f64>,
    /// Best-so-far objective after each generation.
    pub best_history: Vec<f64>,
    pub evaluations: usize,
}

/// Minimizes `f` from `x0` for `generations` generations.
pub fn cmaes_minimize<F, R>(
    f: F,
    x0: &[f64],
    params: CmaesParams,
    generations: usize,
    rng: &mut R,
) -> Result<CmaesOutcome, CmaesError>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    params.validate()?;
    let n = params.dim;
    if x0.len() != n {
        return Err(CmaesError::Dimension);
    }
    let nf = n as f64;
    let lambda = params.popsize;
    let mu = lambda / 2;

    let raw: Vec<f64> = (1..=mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
        .collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
    let cs = (mueff + 2.0) / (nf + mueff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
    let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = params.sigma0;
    let mut pc = DVector::<f64>::zeros(n);
    let mut ps = DVector::<f64>::zeros(n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::<f64>::from_element(n, 1.0);
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut inv_sqrt_cov = DMatrix::<f64>::identity(n, n);

    let mut best_f = f64::INFINITY;
    let mut best_x = x0.to_vec();
    let mut best_history = Vec::with_capacity(generations);
    let mut evaluations = 0;

    for gen in 0..generations {
        let mut offspring: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
            let y = &basis * z.component_mul(&scales);
            let x = &mean + &y * sigma;
            let fx = f(x.as_slice());
            evaluations += 1;
            if fx < best_f {
                best_f = fx;
                best_x = x.as_slice().to_vec();
            }
            offspring.push((fx, x, y));
        }
        // stable sort keeps sampling order among ties
        offspring.sort_by(|a, b| a.0.total_cmp(&b.0));
        best_history.push(best_f);

        let old_mean = mean.clone();
        mean = offspring
            .iter()
            .take(mu)
            .zip(&weights)
            .fold(DVector::zeros(n), |acc, ((_, x, _), w)| acc + x * *w);
        let y_w = (&mean - &old_mean) / sigma;

        ps = &ps * (1.0 - cs) + &inv_sqrt_cov * &y_w * (cs * (2.0 - cs) * mueff).sqrt();
        let ps_norm = ps.norm();
        let hsig_denom = (1.0 - (1.0 - cs).powi(2 * (gen as i32 + 1))).sqrt();
        let hsig = ps_norm / hsig_denom / chi_n < 1.4 + 2.0 / (nf + 1.0);
        let hsig_f = if hsig { 1.0 } else { 0.0 };
        pc = &pc * (1.0 - cc) + &y_w * (hsig_f * (cc * (2.0 - cc) * mueff).sqrt());

        let rank_one = &pc * pc.transpose();
        let rank_mu = offspring
            .iter()
            .take(mu)
            .zip(&weights)
            .fold(DMatrix::zeros(n, n), |acc, ((_, _, y), w)| acc + (y * y.transpose()) * *w);
        cov = &cov * (1.0 - c1 - cmu)
            + (rank_one + &cov * ((1.0 - hsig_f) * cc * (2.0 - cc))) * c1
            + rank_mu * cmu;

        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();

        let sym = (&cov + cov.transpose()) * 0.5;
        cov = sym.clone();
        let eig = SymmetricEigen::new(sym);
        basis = eig.eigenvectors;
        scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());
        let inv_scales = DMatrix::from_diagonal(&scales.map(|d| 1.0 / d));
        inv_sqrt_cov = &basis * inv_scales * basis.transpose();
    }

    Ok(CmaesOutcome {
        best_f,
        best_x,
        best_history,
        evaluations,
    })
}

/// Seeded uniform start in `[-5.12, 5.12]^dim`.
pub fn rastrigin_start(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.random_range(-RASTRIGIN_BOUND..=RASTRIGIN_BOUND))
        .collect()
}

/// Full CMA-ES run on Rastrigin; returns the whole trace.
pub fn cmaes_rastrigin(
    params: CmaesParams,
    budget_evals: usize,
    seed: u64,
) -> Result<CmaesOutcome, CmaesError> {
    params.validate()?;
    if budget_evals < params.popsize {
        return Err(CmaesError::Budget {
            budget: budget_evals,
            popsize: params.popsize,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = rastrigin_start(params.dim, &mut rng);
    let generations = budget_evals / params.popsize;
    cmaes_minimize(rastrigin, &x0, params, generations, &mut rng)
}

/// Best Rastrigin value found within `budget_evals` evaluations.
pub fn cmaes_run(hyper: &Configuration, budget_evals: usize, seed: u64) -> Result<f64, CmaesError> {
    let params = CmaesParams::from_config(hyper)?;
    cmaes_rastrigin(params, budget_evals, seed).map(|o| o.best_f)
}
