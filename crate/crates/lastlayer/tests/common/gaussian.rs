//! Conjugate Gaussian mean-inference target: the one posterior in the test
//! suite with closed-form moments, used to check that the SGLD chain actually
//! samples the distribution it claims to.
//!
//! Model: observations `x_i ~ N(θ, diag(σ²))` with known per-coordinate noise
//! variances, prior `θ ~ N(0, v·I)`. The posterior is Gaussian per coordinate
//! with precision `Λ_j = 1/v + n/σ²_j`, mean `μ_j = (Σ_i x_ij / σ²_j) / Λ_j`,
//! and variance `1/Λ_j`.

use lastlayer::samplers::{run_chain_on_target, ChainSettings, StochasticGradientTarget};
use lastlayer::Result;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct GaussianMeanTarget {
    data: Array2<f64>,
    noise_var: Vec<f64>,
    prior_var: f64,
}

impl GaussianMeanTarget {
    /// Draw `n` observations around `gen_mean` with the given per-coordinate
    /// noise variances, deterministically from `seed`.
    pub fn sample(
        n: usize,
        gen_mean: &[f64],
        noise_var: &[f64],
        prior_var: f64,
        seed: u64,
    ) -> Self {
        assert_eq!(gen_mean.len(), noise_var.len());
        assert!(n > 0 && prior_var > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
        let d = gen_mean.len();
        let mut data = Array2::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                data[[i, j]] = gen_mean[j] + noise_var[j].sqrt() * draw(&mut rng);
            }
        }
        GaussianMeanTarget { data, noise_var: noise_var.to_vec(), prior_var }
    }

    fn precision(&self, j: usize) -> f64 {
        1.0 / self.prior_var + self.data.nrows() as f64 / self.noise_var[j]
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| (self.data.column(j).sum() / self.noise_var[j]) / self.precision(j))
            .collect()
    }

    pub fn posterior_var(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| 1.0 / self.precision(j)).collect()
    }
}

impl StochasticGradientTarget for GaussianMeanTarget {
    fn dim(&self) -> usize {
        self.data.ncols()
    }

    fn num_data(&self) -> usize {
        self.data.nrows()
    }

    fn loglik_grad(&mut self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        grad.fill(0.0);
        let mut nll = 0.0;
        for &i in batch {
            for (j, g) in grad.iter_mut().enumerate() {
                let r = self.data[[i, j]] - theta[j];
                *g += r / self.noise_var[j];
                nll += 0.5 * r * r / self.noise_var[j];
            }
        }
        let s = batch.len() as f64;
        for g in grad.iter_mut() {
            *g /= s;
        }
        Ok(nll / s)
    }

    fn prior_grad(&mut self, theta: &[f64], grad: &mut [f64]) {
        for (g, &t) in grad.iter_mut().zip(theta) {
            *g = -t / self.prior_var;
        }
    }
}

/// Worst-coordinate relative errors of the empirical chain moments against
/// the analytic posterior.
#[derive(Debug)]
pub struct MomentErrors {
    pub mean_rel: f64,
    pub var_rel: f64,
}

/// Run a full-batch SGLD chain from the posterior mean (the mode — chains
/// start at an optimum, no burn-in) and compare thinned-sample moments to the
/// analytic values.
pub fn sgld_moment_errors(
    target: &mut GaussianMeanTarget,
    n_samples: usize,
    n_thinning: usize,
    learning_rate: f64,
    seed: u64,
) -> MomentErrors {
    let mu = target.posterior_mean();
    let sigma2 = target.posterior_var();
    let settings = ChainSettings {
        sgld: true,
        n_samples,
        n_thinning,
        learning_rate,
        batch_size: target.num_data(),
        seed,
    };
    let samples = run_chain_on_target(target, &mu, &settings).expect("chain on a quadratic target");
    assert_eq!(samples.len(), n_samples);

    let d = mu.len();
    let n = samples.len() as f64;
    let mut mean_rel = 0.0f64;
    let mut var_rel = 0.0f64;
    for j in 0..d {
        let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / n;
        mean_rel = mean_rel.max((mean - mu[j]).abs() / mu[j].abs());
        var_rel = var_rel.max((var - sigma2[j]).abs() / sigma2[j]);
    }
    MomentErrors { mean_rel, var_rel }
}
