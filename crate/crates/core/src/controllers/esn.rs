//! Echo state network reservoir: random fixed input and recurrent weights,
//! leaky tanh state update, and a sigmoid readout over `(state, inputs)`.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::sigmoid;
use crate::domain::{EsnReadout, InputMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsnReservoirSpec {
    pub size: usize,
    /// Entries of `W_in`, `b_in` and (pre-normalisation) `W_r` are uniform
    /// on `[-input_scale, input_scale]`.
    pub input_scale: f64,
    /// Fraction of recurrent weights kept after sparsification.
    pub keep_fraction: f64,
    /// Weight of the new activation in the leaky state update.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for EsnReservoirSpec {
    fn default() -> Self {
        Self {
            size: 100,
            input_scale: 0.5,
            keep_fraction: 0.10,
            alpha: 0.1,
            seed: 0,
        }
    }
}

/// Row-compressed sparse matrix for the recurrent product.
#[derive(Debug, Clone, PartialEq)]
struct SparseRows {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut row_start = Vec::with_capacity(m.nrows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Self {
            row_start,
            cols,
            vals,
        }
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let span = self.row_start[i]..self.row_start[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&j, v)| v * x[j])
            .sum()
    }
}

/// Fixed ESN matrices. Regenerated from `spec` (including its seed), never
/// trained, and shared read-only between households and candidates.
#[derive(Debug, Clone)]
pub struct EsnReservoir {
    spec: EsnReservoirSpec,
    input_mode: InputMode,
    /// Seed actually used; differs from `spec.seed` only after a rebuild.
    effective_seed: u64,
    w_in: DMatrix<f64>,
    b_in: Vec<f64>,
    w_r: DMatrix<f64>,
    w_r_sparse: SparseRows,
}

impl EsnReservoir {
    pub fn build(spec: EsnReservoirSpec, input_mode: InputMode) -> Result<Self> {
        if spec.size == 0 {
            return Err(Error::Config("reservoir size must be at least 1".into()));
        }
        if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
            return Err(Error::Config(format!("ESN alpha {} outside (0, 1]", spec.alpha)));
        }
        if !(spec.keep_fraction > 0.0 && spec.keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "ESN keep fraction {} outside (0, 1]",
                spec.keep_fraction
            )));
        }
        let d_in = input_mode.n_features();
        let mut seed = spec.seed;
        for _ in 0..64 {
            if let Some(built) = Self::try_build(spec, input_mode, d_in, seed) {
                return Ok(built);
            }
            log::warn!("reservoir seed {seed} gave a zero spectral radius, retrying with {}", seed + 1);
            seed = seed.wrapping_add(1);
        }
        Err(Error::Numerical(format!(
            "no reservoir with a non-zero spectral radius from seed {}",
            spec.seed
        )))
    }

    fn try_build(spec: EsnReservoirSpec, input_mode: InputMode, d_in: usize, seed: u64) -> Option<Self> {
        let n = spec.size;
        let scale = spec.input_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = |rng: &mut ChaCha8Rng| rng.random_range(-scale..=scale);

        let w_in = DMatrix::from_fn(n, d_in, |_, _| uniform(&mut rng));
        let b_in: Vec<f64> = (0..n).map(|_| uniform(&mut rng)).collect();
        let dense: Vec<f64> = (0..n * n).map(|_| uniform(&mut rng)).collect();
        let keep = ((spec.keep_fraction * (n * n) as f64).floor() as usize).max(1);
        let mut w_r = DMatrix::zeros(n, n);
        for idx in index::sample(&mut rng, n * n, keep) {
            w_r[(idx / n, idx % n)] = dense[idx];
        }

        let radius = spectral_radius(&w_r);
        if !(radius.is_finite() && radius > 0.0) {
            return None;
        }
        w_r /= radius;
        Some(Self {
            spec,
            input_mode,
            effective_seed: seed,
            w_r_sparse: SparseRows::from_dense(&w_r),
            w_in,
            b_in,
            w_r,
        })
    }

    pub fn spec(&self) -> &EsnReservoirSpec {
        &self.spec
    }

    pub fn input_mode(&self) -> InputMode {
        self.input_mode
    }

    pub fn effective_seed(&self) -> u64 {
        self.effective_seed
    }

    pub fn size(&self) -> usize {
        self.spec.size
    }

    pub fn d_in(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    /// Readout input width: reservoir state plus raw features.
    pub fn readout_width(&self) -> usize {
        self.size() + self.d_in()
    }

    pub fn recurrent(&self) -> &DMatrix<f64> {
        &self.w_r
    }

    pub fn input_weights(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn input_bias(&self) -> &[f64] {
        &self.b_in
    }

    pub fn recurrent_nonzeros(&self) -> usize {
        self.w_r_sparse.vals.len()
    }

    /// Leaky update `s <- (1 - a) s + a tanh(W_r s + W_in x + b_in)`.
    pub fn step(&self, state: &mut [f64], x: &[f64]) -> Result<()> {
        self.check_dims(state, x)?;
        let pre: Vec<f64> = (0..self.size())
            .map(|i| {
                let input: f64 = (0..x.len()).map(|k| self.w_in[(i, k)] * x[k]).sum();
                self.w_r_sparse.row_dot(i, state) + input + self.b_in[i]
            })
            .collect();
        let a = self.spec.alpha;
        for (s, p) in state.iter_mut().zip(pre) {
            *s = (1.0 - a) * *s + a * p.tanh();
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("ESN state became non-finite".into()));
        }
        Ok(())
    }

    /// `sigm(W_out . (state, x) + b_out)`.
    pub fn readout(&self, state: &[f64], x: &[f64], readout: &EsnReadout) -> Result<f64> {
        self.check_dims(state, x)?;
        if readout.w_out.len() != self.readout_width() {
            return Err(Error::Dimension {
                what: "ESN readout",
                expected: self.readout_width(),
                actual: readout.w_out.len(),
            });
        }
        let z: f64 = readout
            .w_out
            .iter()
            .zip(state.iter().chain(x))
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + readout.b_out;
        Ok(sigmoid(z))
    }

    fn check_dims(&self, state: &[f64], x: &[f64]) -> Result<()> {
        if state.len() != self.size() {
            return Err(Error::Dimension {
                what: "ESN state",
                expected: self.size(),
                actual: state.len(),
            });
        }
        if x.len() != self.d_in() {
            return Err(Error::Dimension {
                what: "ESN input",
                expected: self.d_in(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Largest eigenvalue modulus, via the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
