use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::kmeans;
use super::{log_sum_exp, DiagGaussian, GaussianMixture, HmmModel, ERGODIC_FLOOR, VARIANCE_FLOOR};
use crate::{Error, Execution, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub max_iterations: usize,
    /// Training stops once one iteration gains less than this much total
    /// log-likelihood.
    pub convergence_delta: f64,
    pub seed: u64,
    pub variance_floor: f64,
    pub transition_floor: f64,
    pub weight_floor: f64,
    pub execution: Execution,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_iterations: 40,
            convergence_delta: 1e-4,
            seed: 0,
            variance_floor: VARIANCE_FLOOR,
            transition_floor: ERGODIC_FLOOR,
            weight_floor: 1e-8,
            execution: Execution::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || self.convergence_delta.is_nan() || self.convergence_delta <= 0.0
            || self.variance_floor.is_nan() || self.variance_floor < VARIANCE_FLOOR
            || self.transition_floor.is_nan() || self.transition_floor < ERGODIC_FLOOR
            || self.weight_floor.is_nan() || self.weight_floor <= 0.0
        {
            return Err(Error::InvalidArgument(format!(
                "training config needs positive iterations and delta, variance floor >= {VARIANCE_FLOOR}, transition floor >= {ERGODIC_FLOOR}, positive weight floor: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Projects a nonnegative vector onto the probability simplex with every
/// entry at least `floor`, keeping the unfloored entries' ratios.
///
/// This is the maximizer of `Σ c_i ln p_i` under the floor constraint, so
/// applying it in the M-step keeps EM monotone.
pub fn floor_distribution(p: &mut [f64], floor: f64) {
    let n = p.len();
    assert!(floor * n as f64 <= 1.0, "floor {floor} too large for {n} entries");
    let sum: f64 = p.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        p.iter_mut().for_each(|x| *x /= sum);
    } else {
        p.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    let raw = p.to_vec();
    let mut fixed = vec![false; n];
    loop {
        let n_fixed = fixed.iter().filter(|f| **f).count();
        let free_mass = 1.0 - floor * n_fixed as f64;
        let free_sum: f64 = raw.iter().zip(&fixed).filter(|(_, f)| !**f).map(|(r, _)| r).sum();
        let mut newly = false;
        for i in 0..n {
            if !fixed[i] {
                let v = if free_sum > 0.0 { raw[i] * free_mass / free_sum } else { 0.0 };
                if v < floor {
                    fixed[i] = true;
                    newly = true;
                } else {
                    p[i] = v;
                }
            }
        }
        if !newly {
            break;
        }
    }
    for (x, f) in p.iter_mut().zip(&fixed) {
        if *f {
            *x = floor;
        }
    }
}

fn check_data<S: AsRef<[Vec<f64>]>>(data: &[S], dim: Option<usize>) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no training sequences".into()));
    }
    let dim = match dim {
        Some(d) => d,
        None => data[0]
            .as_ref()
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InsufficientData("empty training sequence".into()))?,
    };
    for s in data {
        let s = s.as_ref();
        if s.is_empty() {
            return Err(Error::InsufficientData("empty training sequence".into()));
        }
        if let Some(o) = s.iter().find(|o| o.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: o.len(),
            });
        }
    }
    Ok(dim)
}

fn variance_of(points: &[&[f64]], mean: &[f64], floor: f64) -> Vec<f64> {
    let n = points.len() as f64;
    (0..mean.len())
        .map(|d| {
            let v = points.iter().map(|p| (p[d] - mean[d]).powi(2)).sum::<f64>() / n;
            v.max(floor)
        })
        .collect()
}

fn mixture_from_points(points: &[&[f64]], m: usize, pooled_var: &[f64], floor: f64, rng: &mut ChaCha8Rng) -> Result<GaussianMixture> {
    let km = kmeans(points, m, 100, rng);
    let sizes = km.cluster_sizes();
    let total = points.len() as f64;
    let mut weights = Vec::with_capacity(m);
    let mut comps = Vec::with_capacity(m);
    for (c, centroid) in km.centroids.iter().enumerate() {
        let members: Vec<&[f64]> = points
            .iter()
            .zip(&km.assignments)
            .filter(|(_, a)| **a == c)
            .map(|(p, _)| *p)
            .collect();
        let var = if members.len() >= 2 {
            variance_of(&members, centroid, floor)
        } else {
            pooled_var.iter().map(|v| v.max(floor)).collect()
        };
        weights.push(sizes[c].max(1) as f64 / total);
        comps.push(DiagGaussian::new(centroid.clone(), var)?);
    }
    floor_distribution(&mut weights, 1e-8);
    GaussianMixture::new(weights, comps)
}

/// Uniform ergodic transitions and initial distribution; emission mixtures
/// from a two-level seeded k-means (frames into states, then each state's
/// frames into components).
pub fn init_model<S: AsRef<[Vec<f64>]>>(
    data: &[S],
    n_states: usize,
    n_mixtures: usize,
    seed: u64,
    variance_floor: f64,
) -> Result<HmmModel> {
    if n_states == 0 || n_mixtures == 0 {
        return Err(Error::InvalidArgument("need at least one state and one mixture".into()));
    }
    check_data(data, None)?;
    let pool: Vec<&[f64]> = data.iter().flat_map(|s| s.as_ref().iter().map(Vec::as_slice)).collect();
    if pool.len() < n_states * n_mixtures {
        return Err(Error::InsufficientData(format!(
            "{} frames cannot initialize {n_states} states x {n_mixtures} mixtures",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = pool[0].len();
    let pooled_mean: Vec<f64> = (0..dim)
        .map(|d| pool.iter().map(|p| p[d]).sum::<f64>() / pool.len() as f64)
        .collect();
    let pooled_var = variance_of(&pool, &pooled_mean, variance_floor);

    let states_km = kmeans(&pool, n_states, 100, &mut rng);
    let mut states = Vec::with_capacity(n_states);
    for j in 0..n_states {
        let members: Vec<&[f64]> = pool
            .iter()
            .zip(&states_km.assignments)
            .filter(|(_, a)| **a == j)
            .map(|(p, _)| *p)
            .collect();
        let source = if members.len() >= n_mixtures { &members } else { &pool };
        states.push(mixture_from_points(source, n_mixtures, &pooled_var, variance_floor, &mut rng)?);
    }
    let uniform = 1.0 / n_states as f64;
    HmmModel::new(vec![uniform; n_states], vec![vec![uniform; n_states]; n_states], states)
}

/// Builds an initial model from a hard state labelling of every frame:
/// initial and transition probabilities from label counts (floored), and
/// each state's mixture from k-means over the frames carrying its label.
/// States with fewer than `n_mixtures` frames fall back to the pooled frames.
pub fn init_model_from_labels<S: AsRef<[Vec<f64>]>>(
    data: &[S],
    labels: &[Vec<usize>],
    n_states: usize,
    n_mixtures: usize,
    seed: u64,
    variance_floor: f64,
    transition_floor: f64,
) -> Result<HmmModel> {
    check_data(data, None)?;
    if labels.len() != data.len() || labels.iter().zip(data).any(|(l, s)| l.len() != s.as_ref().len()) {
        return Err(Error::InvalidArgument("labels must cover every frame".into()));
    }
    if let Some(bad) = labels.iter().flatten().find(|l| **l >= n_states) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {n_states} states")));
    }
    let pool: Vec<&[f64]> = data.iter().flat_map(|s| s.as_ref().iter().map(Vec::as_slice)).collect();
    if pool.len() < n_mixtures {
        return Err(Error::InsufficientData(format!("{} frames cannot initialize {n_mixtures} mixtures", pool.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = pool[0].len();
    let pooled_mean: Vec<f64> = (0..dim)
        .map(|d| pool.iter().map(|p| p[d]).sum::<f64>() / pool.len() as f64)
        .collect();
    let pooled_var = variance_of(&pool, &pooled_mean, variance_floor);

    let mut initial = vec![0.0; n_states];
    let mut transitions = vec![vec![0.0; n_states]; n_states];
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); n_states];
    for (seq, lab) in data.iter().zip(labels) {
        initial[lab[0]] += 1.0;
        for w in lab.windows(2) {
            transitions[w[0]][w[1]] += 1.0;
        }
        for (x, &l) in seq.as_ref().iter().zip(lab) {
            members[l].push(x);
        }
    }
    floor_distribution(&mut initial, transition_floor);
    for row in &mut transitions {
        floor_distribution(row, transition_floor);
    }
    let mut states = Vec::with_capacity(n_states);
    for m in &members {
        let source = if m.len() >= n_mixtures { m } else { &pool };
        states.push(mixture_from_points(source, n_mixtures, &pooled_var, variance_floor, &mut rng)?);
    }
    HmmModel::new(initial, transitions, states)
}

/// Expected counts collected by one E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub sequences: usize,
    pub log_likelihood: f64,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub occupancy: Vec<Vec<f64>>,
    pub sum_x: Vec<Vec<Vec<f64>>>,
    pub sum_xx: Vec<Vec<Vec<f64>>>,
}

impl SufficientStats {
    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        SufficientStats {
            sequences: 0,
            log_likelihood: 0.0,
            initial: vec![0.0; n],
            transitions: vec![vec![0.0; n]; n],
            occupancy: vec![vec![0.0; m]; n],
            sum_x: vec![vec![vec![0.0; d]; m]; n],
            sum_xx: vec![vec![vec![0.0; d]; m]; n],
        }
    }

    pub fn merge(&mut self, other: &SufficientStats) {
        fn add(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.sequences += other.sequences;
        self.log_likelihood += other.log_likelihood;
        add(&mut self.initial, &other.initial);
        for (a, b) in self.transitions.iter_mut().zip(&other.transitions) {
            add(a, b);
        }
        for (a, b) in self.occupancy.iter_mut().zip(&other.occupancy) {
            add(a, b);
        }
        for (a, b) in self.sum_x.iter_mut().zip(&other.sum_x) {
            for (x, y) in a.iter_mut().zip(b) {
                add(x, y);
            }
        }
        for (a, b) in self.sum_xx.iter_mut().zip(&other.sum_xx) {
            for (x, y) in a.iter_mut().zip(b) {
                add(x, y);
            }
        }
    }

    /// Forward-backward over one sequence.
    pub fn accumulate(model: &HmmModel, obs: &[Vec<f64>]) -> Self {
        let n = model.n_states();
        let m = model.n_mixtures();
        let d = model.dim();
        let t_len = obs.len();
        let mut stats = SufficientStats::zeros(n, m, d);
        stats.sequences = 1;

        let mut comp = vec![f64::NEG_INFINITY; t_len * n * m];
        let mut lb = vec![0.0; t_len * n];
        for (t, o) in obs.iter().enumerate() {
            for (j, s) in model.states.iter().enumerate() {
                let base = (t * n + j) * m;
                let slot = &mut comp[base..base + s.len()];
                s.weighted_log_densities(o, slot);
                lb[t * n + j] = log_sum_exp(slot);
            }
        }

        let log_a = model.log_transitions();
        let mut alpha = vec![0.0; t_len * n];
        let mut buf = vec![0.0; n];
        for j in 0..n {
            alpha[j] = model.initial[j].ln() + lb[j];
        }
        for t in 1..t_len {
            for j in 0..n {
                for i in 0..n {
                    buf[i] = alpha[(t - 1) * n + i] + log_a[i][j];
                }
                alpha[t * n + j] = log_sum_exp(&buf) + lb[t * n + j];
            }
        }
        let mut beta = vec![0.0; t_len * n];
        for t in (0..t_len - 1).rev() {
            for i in 0..n {
                for j in 0..n {
                    buf[j] = log_a[i][j] + lb[(t + 1) * n + j] + beta[(t + 1) * n + j];
                }
                beta[t * n + i] = log_sum_exp(&buf);
            }
        }
        let ll = log_sum_exp(&alpha[(t_len - 1) * n..]);
        stats.log_likelihood = ll;
        if !ll.is_finite() {
            return stats;
        }

        for t in 0..t_len {
            for j in 0..n {
                let g = (alpha[t * n + j] + beta[t * n + j] - ll).exp();
                if t == 0 {
                    stats.initial[j] += g;
                }
                if g <= 0.0 {
                    continue;
                }
                let x = &obs[t];
                let base = (t * n + j) * m;
                for k in 0..model.states[j].len() {
                    let r = g * (comp[base + k] - lb[t * n + j]).exp();
                    if r <= 0.0 {
                        continue;
                    }
                    stats.occupancy[j][k] += r;
                    let sx = &mut stats.sum_x[j][k];
                    let sxx = &mut stats.sum_xx[j][k];
                    for dd in 0..d {
                        sx[dd] += r * x[dd];
                        sxx[dd] += r * x[dd] * x[dd];
                    }
                }
            }
            if t + 1 < t_len {
                for i in 0..n {
                    let a = alpha[t * n + i] - ll;
                    for j in 0..n {
                        stats.transitions[i][j] += (a + log_a[i][j] + lb[(t + 1) * n + j] + beta[(t + 1) * n + j]).exp();
                    }
                }
            }
        }
        stats
    }

    /// E-step over many sequences; sums are reduced in input order so the
    /// result does not depend on the execution strategy.
    pub fn collect<S: AsRef<[Vec<f64>]> + Sync>(model: &HmmModel, data: &[S], exec: Execution) -> Self {
        let parts = exec.map(data, |s| SufficientStats::accumulate(model, s.as_ref()));
        let mut total = SufficientStats::zeros(model.n_states(), model.n_mixtures(), model.dim());
        for p in &parts {
            total.merge(p);
        }
        total
    }
}

/// Re-estimates parameters from expected counts. Cells with no expected
/// mass keep their previous values; floors are applied as constrained
/// maximizers.
fn m_step(model: &HmmModel, stats: &SufficientStats, cfg: &TrainingConfig) -> Result<HmmModel> {
    const MIN_MASS: f64 = 1e-300;
    let n = model.n_states();
    let mut initial = stats.initial.clone();
    floor_distribution(&mut initial, cfg.transition_floor);

    let transitions = stats
        .transitions
        .iter()
        .zip(&model.transitions)
        .map(|(row, old)| {
            let mut r = if row.iter().sum::<f64>() > MIN_MASS { row.clone() } else { old.clone() };
            floor_distribution(&mut r, cfg.transition_floor);
            r
        })
        .collect();

    let mut states = Vec::with_capacity(n);
    for (j, old) in model.states.iter().enumerate() {
        let occ = &stats.occupancy[j];
        let total: f64 = occ.iter().sum();
        if total.is_nan() || total <= MIN_MASS {
            states.push(old.clone());
            continue;
        }
        let mut weights: Vec<f64> = occ.clone();
        floor_distribution(&mut weights, cfg.weight_floor);
        let mut comps = Vec::with_capacity(old.len());
        for (k, old_c) in old.components().iter().enumerate() {
            let o = occ[k];
            if o.is_nan() || o <= 1e-200 {
                comps.push(old_c.clone());
                continue;
            }
            let mean: Vec<f64> = stats.sum_x[j][k].iter().map(|s| s / o).collect();
            let var: Vec<f64> = stats.sum_xx[j][k]
                .iter()
                .zip(&mean)
                .map(|(s, mu)| (s / o - mu * mu).max(cfg.variance_floor))
                .collect();
            if mean.iter().chain(&var).any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite re-estimate in state {j} component {k}")));
            }
            comps.push(DiagGaussian::new(mean, var)?);
        }
        states.push(GaussianMixture::new(weights, comps)?);
    }
    HmmModel::new(initial, transitions, states)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub model: HmmModel,
    /// Total log-likelihood of the initial model followed by one entry per
    /// re-estimation.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

impl TrainingOutcome {
    pub fn iterations(&self) -> usize {
        self.log_likelihoods.len() - 1
    }
}

pub fn baum_welch_train<S: AsRef<[Vec<f64>]> + Sync>(
    init: &HmmModel,
    data: &[S],
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    baum_welch_train_with(init, data, cfg, |_, _, _| {})
}

/// Multi-sequence Baum-Welch. `observer` sees each re-estimated model with
/// its iteration number and total log-likelihood.
pub fn baum_welch_train_with<S, F>(init: &HmmModel, data: &[S], cfg: &TrainingConfig, mut observer: F) -> Result<TrainingOutcome>
where
    S: AsRef<[Vec<f64>]> + Sync,
    F: FnMut(usize, &HmmModel, f64),
{
    cfg.validate()?;
    init.validate()?;
    check_data(data, Some(init.dim()))?;

    let finite = |stats: &SufficientStats| -> Result<()> {
        if stats.log_likelihood.is_finite() {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "total log-likelihood is {}; every state has zero responsibility for some frame",
                stats.log_likelihood
            )))
        }
    };

    let mut model = init.clone();
    let mut stats = SufficientStats::collect(&model, data, cfg.execution);
    finite(&stats)?;
    let mut history = vec![stats.log_likelihood];
    let mut converged = false;
    for iter in 1..=cfg.max_iterations {
        let next = m_step(&model, &stats, cfg)?;
        let next_stats = SufficientStats::collect(&next, data, cfg.execution);
        finite(&next_stats)?;
        observer(iter, &next, next_stats.log_likelihood);
        let gain = next_stats.log_likelihood - stats.log_likelihood;
        history.push(next_stats.log_likelihood);
        model = next;
        stats = next_stats;
        if gain < cfg.convergence_delta {
            converged = true;
            break;
        }
    }
    Ok(TrainingOutcome {
        model,
        log_likelihoods: history,
        converged,
    })
}
