//! (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and
//! rank-one plus rank-mu covariance updates, default strategy constants
//! after Hansen's tutorial.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Workers;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmaEsConfig {
    pub generations: usize,
    pub population: usize,
    pub initial_sigma: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for CmaEsConfig {
    fn default() -> Self {
        Self {
            generations: 250,
            population: 16,
            initial_sigma: 0.3,
            seed: 0,
            workers: 1,
        }
    }
}

impl CmaEsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::Config(format!(
                "CMA-ES population must be at least 4, got {}",
                self.population
            )));
        }
        if self.generations == 0 {
            return Err(Error::Config("CMA-ES needs at least one generation".into()));
        }
        if !(self.initial_sigma.is_finite() && self.initial_sigma > 0.0) {
            return Err(Error::Config(format!("initial sigma {} must be positive", self.initial_sigma)));
        }
        Ok(())
    }
}

/// Strategy constants derived from dimension and population size.
#[derive(Debug, Clone, Serialize)]
pub struct CmaEsConstants {
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl CmaEsConstants {
    pub fn new(dim: usize, lambda: usize) -> Self {
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Self {
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best objective seen so far (non-increasing).
    pub best_so_far: f64,
    pub generation_best: f64,
    pub sigma: f64,
    /// Smallest covariance eigenvalue after the update.
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct CmaEsResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub history: Vec<GenerationRecord>,
}

/// Relative floor applied to covariance eigenvalues to keep `C` positive definite.
const EIGEN_FLOOR: f64 = 1e-14;

/// Search distribution and evolution paths between generations.
#[derive(Debug, Clone)]
pub struct CmaEsState {
    pub constants: CmaEsConstants,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: usize,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
}

impl CmaEsState {
    pub fn new(x0: &[f64], sigma: f64, lambda: usize) -> Self {
        let n = x0.len();
        Self {
            constants: CmaEsConstants::new(n, lambda),
            mean: DVector::from_column_slice(x0),
            sigma,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
        }
    }

    /// Draws `lambda` steps `y ~ N(0, C)`; candidates are `mean + sigma * y`.
    pub fn sample(&self, lambda: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let n = self.mean.len();
        (0..lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
                &self.basis * z.component_mul(&self.scales)
            })
            .collect()
    }

    /// Moves the mean, adapts both evolution paths, the covariance and the
    /// step size from one evaluated generation. Returns the smallest
    /// covariance eigenvalue after flooring.
    pub fn update(&mut self, steps: &[DVector<f64>], values: &[f64]) -> Result<f64> {
        let k = &self.constants;
        let n = self.mean.len();
        let mut order: Vec<usize> = (0..steps.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, &i) in k.weights.iter().zip(&order) {
            y_w.axpy(*w, &steps[i], 1.0);
        }
        self.mean.axpy(self.sigma, &y_w, 1.0);

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt_y = &self.basis * (self.basis.transpose() * &y_w).component_div(&self.scales);
        self.p_sigma = &self.p_sigma * (1.0 - k.c_sigma)
            + inv_sqrt_y * (k.c_sigma * (2.0 - k.c_sigma) * k.mu_eff).sqrt();
        let ps_norm = self.p_sigma.norm();
        let decay = 1.0 - (1.0 - k.c_sigma).powi(2 * (self.generation as i32 + 1));
        let h_sigma = ps_norm / decay.sqrt() / k.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - k.c_c) + &y_w * (h * (k.c_c * (2.0 - k.c_c) * k.mu_eff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &i) in k.weights.iter().zip(&order) {
            rank_mu.ger(*w, &steps[i], &steps[i], 1.0);
        }
        let correction = (1.0 - h) * k.c_c * (2.0 - k.c_c);
        self.cov = &self.cov * (1.0 - k.c_1 - k.c_mu + k.c_1 * correction)
            + (&self.p_c * self.p_c.transpose()) * k.c_1
            + rank_mu * k.c_mu;

        self.sigma *= ((k.c_sigma / k.d_sigma) * (ps_norm / k.chi_n - 1.0)).exp();
        self.generation += 1;
        refresh_eigensystem(&mut self.cov, &mut self.basis, &mut self.scales)
    }
}

pub fn cmaes_minimize<F>(f: F, x0: &[f64], config: &CmaEsConfig) -> Result<CmaEsResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cmaes_minimize_with(f, x0, config, |_, _| Ok(()))
}

/// As [`cmaes_minimize`], calling `observe(record, best_so_far)` after each
/// generation.
pub fn cmaes_minimize_with<F, O>(f: F, x0: &[f64], config: &CmaEsConfig, mut observe: O) -> Result<CmaEsResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(&GenerationRecord, &[f64]) -> Result<()>,
{
    config.validate()?;
    if x0.is_empty() {
        return Err(Error::Config("CMA-ES needs at least one parameter".into()));
    }
    let lambda = config.population;
    let pool = Workers(config.workers).pool()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = CmaEsState::new(x0, config.initial_sigma, lambda);

    let mut best = x0.to_vec();
    let mut best_value = f64::INFINITY;
    let mut history = Vec::with_capacity(config.generations);

    for generation in 0..config.generations {
        let steps = state.sample(lambda, &mut rng);
        let candidates: Vec<Vec<f64>> = steps
            .iter()
            .map(|y| (&state.mean + y * state.sigma).as_slice().to_vec())
            .collect();
        let values: Vec<f64> = pool.install(|| {
            candidates
                .par_iter()
                .map(|x| {
                    let v = f(x);
                    if v.is_finite() {
                        v
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        });

        let (arg, &generation_best) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("population is non-empty");
        if generation_best < best_value {
            best_value = generation_best;
            best.clone_from(&candidates[arg]);
        }

        let min_eigenvalue = state.update(&steps, &values)?;
        let record = GenerationRecord {
            generation,
            best_so_far: best_value,
            generation_best,
            sigma: state.sigma,
            min_eigenvalue,
        };
        observe(&record, &best)?;
        history.push(record);
    }

    Ok(CmaEsResult {
        best,
        best_value,
        history,
    })
}

/// Symmetrises `cov`, floors its spectrum and refreshes `B` and `D`.
/// Returns the smallest eigenvalue after flooring.
fn refresh_eigensystem(cov: &mut DMatrix<f64>, basis: &mut DMatrix<f64>, scales: &mut DVector<f64>) -> Result<f64> {
    let sym = (&*cov + cov.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("CMA-ES covariance became non-finite".into()));
    }
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let floor = max * EIGEN_FLOOR;
    let values = eig.eigenvalues.map(|v| v.max(floor));
    *cov = &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose();
    *basis = eig.eigenvectors;
    *scales = values.map(f64::sqrt);
    Ok(values.min())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn default_constants_for_ten_dims() {
        let k = CmaEsConstants::new(10, 16);
        assert_eq!(k.mu, 8);
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(k.weights.windows(2).all(|w| w[0] > w[1]));
        assert!(k.c_1 + k.c_mu <= 1.0);
        assert!(k.mu_eff > 1.0 && k.mu_eff < 8.0);
    }

    #[test]
    fn solves_sphere() {
        let cfg = CmaEsConfig {
            seed: 3,
            ..Default::default()
        };
        let r = cmaes_minimize(sphere, &[0.8; 10], &cfg).unwrap();
        assert!(r.best_value < 1e-8, "best {}", r.best_value);
        assert_eq!(r.history.len(), 250);
        assert!(r
            .history
            .windows(2)
            .all(|w| w[1].best_so_far <= w[0].best_so_far));
        assert!(r.history.iter().all(|h| h.min_eigenvalue > 0.0));
    }

    #[test]
    fn deterministic_under_seed_and_workers() {
        let cfg = CmaEsConfig {
            generations: 30,
            seed: 9,
            ..Default::default()
        };
        let a = cmaes_minimize(sphere, &[1.0; 5], &cfg).unwrap();
        let par = CmaEsConfig { workers: 4, ..cfg };
        let b = cmaes_minimize(sphere, &[1.0; 5], &par).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn non_finite_values_do_not_stop_the_run() {
        let cfg = CmaEsConfig {
            generations: 40,
            ..Default::default()
        };
        let f = |x: &[f64]| if x[0] > 1.5 { f64::NAN } else { sphere(x) };
        let r = cmaes_minimize(f, &[1.0, 1.0], &cfg).unwrap();
        assert!(r.best_value.is_finite());
        assert!(r.best_value < 1.0);
    }

    #[test]
    fn first_update_matches_hand_computation() {
        let n = 3;
        let lambda = 6;
        let x0 = [0.5, -1.0, 2.0];
        let sigma0 = 0.3;
        let steps: Vec<Vec<f64>> = vec![
            vec![0.1, -0.4, 0.3],
            vec![-1.2, 0.2, 0.7],
            vec![0.9, 0.5, -0.6],
            vec![0.0, 1.1, 0.4],
            vec![-0.3, -0.8, -1.5],
            vec![0.6, 0.0, 0.2],
        ];
        let values = [3.0, 1.0, 5.0, 1.0, 0.5, 9.0];

        // Identity covariance and zero paths, written out on plain arrays.
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (3.5f64).ln() - (i as f64).ln()).collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / s).collect();
        let mu_eff = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let ds = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        let ranked = [4usize, 1, 3]; // values 0.5, 1.0 (index 1 before 3), 1.0
        let yw: Vec<f64> = (0..n).map(|j| (0..mu).map(|k| w[k] * steps[ranked[k]][j]).sum()).collect();
        let mean: Vec<f64> = (0..n).map(|j| x0[j] + sigma0 * yw[j]).collect();
        let ps: Vec<f64> = yw.iter().map(|y| (cs * (2.0 - cs) * mu_eff).sqrt() * y).collect();
        let ps_norm = ps.iter().map(|x| x * x).sum::<f64>().sqrt();
        let hs = ps_norm / (1.0 - (1.0 - cs).powi(2)).sqrt() / chi < 1.4 + 2.0 / (nf + 1.0);
        let h = if hs { 1.0 } else { 0.0 };
        let pc: Vec<f64> = yw.iter().map(|y| h * (cc * (2.0 - cc) * mu_eff).sqrt() * y).collect();
        let mut cov = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in 0..n {
                let eye = if a == b { 1.0 } else { 0.0 };
                let rank_mu: f64 = (0..mu).map(|k| w[k] * steps[ranked[k]][a] * steps[ranked[k]][b]).sum();
                cov[a][b] = (1.0 - c1 - cmu + c1 * (1.0 - h) * cc * (2.0 - cc)) * eye
                    + c1 * pc[a] * pc[b]
                    + cmu * rank_mu;
            }
        }
        let sigma = sigma0 * ((cs / ds) * (ps_norm / chi - 1.0)).exp();

        let mut state = CmaEsState::new(&x0, sigma0, lambda);
        let dsteps: Vec<DVector<f64>> = steps.iter().map(|s| DVector::from_column_slice(s)).collect();
        state.update(&dsteps, &values).unwrap();
        for j in 0..n {
            assert!((state.mean[j] - mean[j]).abs() < 1e-12);
            assert!((state.p_sigma[j] - ps[j]).abs() < 1e-12);
            assert!((state.p_c[j] - pc[j]).abs() < 1e-12);
            for b in 0..n {
                assert!((state.cov[(j, b)] - cov[j][b]).abs() < 1e-12);
            }
        }
        assert!((state.sigma - sigma).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let small = CmaEsConfig {
            population: 3,
            ..Default::default()
        };
        assert!(cmaes_minimize(sphere, &[1.0], &small).is_err());
        assert!(cmaes_minimize(sphere, &[], &CmaEsConfig::default()).is_err());
    }
}
