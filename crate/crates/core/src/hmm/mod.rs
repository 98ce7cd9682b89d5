//! Continuous-density ergodic hidden Markov models with diagonal Gaussian
//! mixture emissions.
//!
//! All recursions run in the log domain with log-sum-exp.

mod io;
mod kmeans;
mod train;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

pub use io::{parse_model, parse_model_lines, write_model};
pub use kmeans::{kmeans, KMeansResult};
pub use train::{
    baum_welch_train, baum_welch_train_with, floor_distribution, init_model, init_model_from_labels, SufficientStats, TrainingConfig,
    TrainingOutcome,
};

/// Tolerance on sums of probability vectors.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;
/// Minimum transition probability of an ergodic model.
pub const ERGODIC_FLOOR: f64 = 1e-8;
pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
    log_norm: f64,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: var.len(),
            });
        }
        if let Some(v) = var.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!("variance {v} is not positive")));
        }
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + var.iter().map(|v| v.ln()).sum::<f64>());
        Ok(DiagGaussian { mean, var, log_norm })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let quad: f64 = x
            .iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| (x - m) * (x - m) / v)
            .sum();
        self.log_norm - 0.5 * quad
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| {
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<DiagGaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<DiagGaussian>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let dim = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.dim(),
            });
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(GaussianMixture {
            weights,
            log_weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DiagGaussian] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// `ln w_m + ln N_m(x)` for every component.
    pub fn weighted_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for ((o, lw), c) in out.iter_mut().zip(&self.log_weights).zip(&self.components) {
            *o = lw + c.log_density(x);
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.len()];
        self.weighted_log_densities(x, &mut buf);
        log_sum_exp(&buf)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = sample_categorical(&self.weights, rng);
        self.components[m].sample(rng)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE || self.weights.iter().any(|w| w.is_nan() || *w <= 0.0) {
            return Err(Error::Numerical(format!("mixture weights {:?} do not form a distribution", self.weights)));
        }
        if let Some(v) = self.components.iter().flat_map(|c| c.var.iter()).find(|v| **v < VARIANCE_FLOOR) {
            return Err(Error::Numerical(format!("variance {v} below floor {VARIANCE_FLOOR}")));
        }
        Ok(())
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Fully connected: every transition has probability at least [`ERGODIC_FLOOR`].
    Ergodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub states: Vec<GaussianMixture>,
    pub topology: Topology,
}

impl HmmModel {
    pub fn new(initial: Vec<f64>, transitions: Vec<Vec<f64>>, states: Vec<GaussianMixture>) -> Result<Self> {
        let model = HmmModel {
            initial,
            transitions,
            states,
            topology: Topology::Ergodic,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_mixtures(&self) -> usize {
        self.states.iter().map(GaussianMixture::len).max().unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, GaussianMixture::dim)
    }

    /// Checks every stochastic and ergodicity constraint.
    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::InvalidArgument("model has no states".into()));
        }
        if self.initial.len() != n || self.transitions.len() != n || self.transitions.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!("transition shapes do not match {n} states")));
        }
        let dim = self.dim();
        if let Some(s) = self.states.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
        let pi_sum: f64 = self.initial.iter().sum();
        if (pi_sum - 1.0).abs() > STOCHASTIC_TOLERANCE || self.initial.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::Numerical(format!("initial distribution sums to {pi_sum}")));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::Numerical(format!("transition row {i} sums to {sum}")));
            }
            if let Some(a) = row.iter().find(|a| a.is_nan() || **a < ERGODIC_FLOOR) {
                return Err(Error::Numerical(format!(
                    "transition {a} in row {i} breaks ergodicity (floor {ERGODIC_FLOOR})"
                )));
            }
        }
        for s in &self.states {
            s.validate()?;
        }
        Ok(())
    }

    fn check_observations(&self, obs: &[Vec<f64>]) -> Result<()> {
        if obs.is_empty() {
            return Err(Error::InvalidArgument("empty observation sequence".into()));
        }
        let dim = self.dim();
        if let Some(o) = obs.iter().find(|o| o.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: o.len(),
            });
        }
        Ok(())
    }

    pub fn log_transitions(&self) -> Vec<Vec<f64>> {
        self.transitions
            .iter()
            .map(|r| r.iter().map(|a| a.ln()).collect())
            .collect()
    }

    /// `ln b_j(o_t)` as a `T x N` table.
    pub fn log_emissions(&self, obs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        obs.iter()
            .map(|o| self.states.iter().map(|s| s.log_density(o)).collect())
            .collect()
    }

    /// `ln P(O | model)` by the forward recursion.
    pub fn log_forward(&self, obs: &[Vec<f64>]) -> Result<f64> {
        self.check_observations(obs)?;
        let n = self.n_states();
        let log_a = self.log_transitions();
        let mut alpha: Vec<f64> = self
            .initial
            .iter()
            .zip(&self.states)
            .map(|(p, s)| p.ln() + s.log_density(&obs[0]))
            .collect();
        let mut next = vec![0.0; n];
        let mut terms = vec![0.0; n];
        for o in &obs[1..] {
            for (j, nj) in next.iter_mut().enumerate() {
                for (i, t) in terms.iter_mut().enumerate() {
                    *t = alpha[i] + log_a[i][j];
                }
                *nj = log_sum_exp(&terms) + self.states[j].log_density(o);
            }
            std::mem::swap(&mut alpha, &mut next);
        }
        Ok(log_sum_exp(&alpha))
    }

    /// Most likely state path and its joint log probability.
    pub fn viterbi(&self, obs: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
        self.check_observations(obs)?;
        let n = self.n_states();
        let t_len = obs.len();
        let log_a = self.log_transitions();
        let mut delta: Vec<f64> = self
            .initial
            .iter()
            .zip(&self.states)
            .map(|(p, s)| p.ln() + s.log_density(&obs[0]))
            .collect();
        let mut back = vec![vec![0usize; n]; t_len];
        for (t, o) in obs.iter().enumerate().skip(1) {
            let mut next = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                let (arg, best) = (0..n)
                    .map(|i| (i, delta[i] + log_a[i][j]))
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                back[t][j] = arg;
                next[j] = best + self.states[j].log_density(o);
            }
            delta = next;
        }
        let (mut state, score) = delta
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let mut path = vec![0; t_len];
        for t in (0..t_len).rev() {
            path[t] = state;
            state = back[t][state];
        }
        Ok((path, score))
    }

    /// Joint log probability of `obs` along a fixed state path.
    pub fn path_log_prob(&self, path: &[usize], obs: &[Vec<f64>]) -> Result<f64> {
        self.check_observations(obs)?;
        if path.len() != obs.len() {
            return Err(Error::DimensionMismatch {
                expected: obs.len(),
                found: path.len(),
            });
        }
        let mut score = self.initial[path[0]].ln() + self.states[path[0]].log_density(&obs[0]);
        for t in 1..obs.len() {
            score += self.transitions[path[t - 1]][path[t]].ln() + self.states[path[t]].log_density(&obs[t]);
        }
        Ok(score)
    }

    /// Draws a state path and observations of length `len`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<Vec<f64>>) {
        let mut states = Vec::with_capacity(len);
        let mut obs = Vec::with_capacity(len);
        let mut s = sample_categorical(&self.initial, rng);
        for t in 0..len {
            if t > 0 {
                s = sample_categorical(&self.transitions[s], rng);
            }
            states.push(s);
            obs.push(self.states[s].sample(rng));
        }
        (states, obs)
    }
}
