//! Bounded affine-tanh transfer function from audio embeddings to style
//! vectors.
//!
//! The map is `w = 2·σ ⊙ tanh(W z + b) + μ`, where `μ` and `σ` are the
//! per-dimension mean and deviation of randomly sampled styles. Every output
//! therefore stays strictly inside the box `μ ± 2σ`. It is fitted with an L1
//! objective, which keeps outlying annotations from dominating the fit.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest deviation accepted for any style dimension.
pub const MIN_SIGMA: f64 = 1e-8;

/// Per-dimension mean and population deviation of the style space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StatsWire", into = "StatsWire")]
pub struct StyleStats {
    mu: Array1<f64>,
    sigma: Array1<f64>,
    n_samples: usize,
}

#[derive(Serialize, Deserialize)]
struct StatsWire {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    n_samples: usize,
}

impl TryFrom<StatsWire> for StyleStats {
    type Error = Error;

    fn try_from(w: StatsWire) -> Result<Self> {
        StyleStats::new(Array1::from(w.mu), Array1::from(w.sigma), w.n_samples)
    }
}

impl From<StyleStats> for StatsWire {
    fn from(s: StyleStats) -> Self {
        StatsWire {
            mu: s.mu.to_vec(),
            sigma: s.sigma.to_vec(),
            n_samples: s.n_samples,
        }
    }
}

impl StyleStats {
    pub fn new(mu: Array1<f64>, sigma: Array1<f64>, n_samples: usize) -> Result<Self> {
        if mu.len() != sigma.len() || mu.is_empty() {
            return Err(Error::shape(format!(
                "mu has {} entries, sigma has {}",
                mu.len(),
                sigma.len()
            )));
        }
        if n_samples < 2 {
            return Err(Error::shape("style stats need at least 2 samples"));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("style stats".into()));
        }
        if let Some((dim, &sigma)) = sigma.iter().enumerate().find(|(_, &s)| !(s > MIN_SIGMA)) {
            return Err(Error::DegenerateStats { dim, sigma });
        }
        Ok(StyleStats {
            mu,
            sigma,
            n_samples,
        })
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &Array1<f64> {
        &self.sigma
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Same deviations, mean shifted by `offset`.
    pub fn shifted(&self, offset: ArrayView1<f64>) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::shape("offset length differs from style dimension"));
        }
        StyleStats::new(&self.mu + &offset, self.sigma.clone(), self.n_samples)
    }
}

/// Learnable map parameters: `weight` is `D_s × D_a`, `bias` is `D_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsWire", into = "ParamsWire")]
pub struct MapperParams {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsWire {
    d_a: usize,
    d_s: usize,
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl TryFrom<ParamsWire> for MapperParams {
    type Error = Error;

    fn try_from(w: ParamsWire) -> Result<Self> {
        if w.weight.len() != w.d_s || w.weight.iter().any(|r| r.len() != w.d_a) {
            return Err(Error::shape(format!(
                "weight rows do not form a {}x{} matrix",
                w.d_s, w.d_a
            )));
        }
        let flat: Vec<f64> = w.weight.into_iter().flatten().collect();
        let weight = Array2::from_shape_vec((w.d_s, w.d_a), flat)
            .map_err(|e| Error::shape(e.to_string()))?;
        MapperParams::new(weight, Array1::from(w.bias))
    }
}

impl From<MapperParams> for ParamsWire {
    fn from(p: MapperParams) -> Self {
        ParamsWire {
            d_a: p.d_a(),
            d_s: p.d_s(),
            weight: p.weight.outer_iter().map(|r| r.to_vec()).collect(),
            bias: p.bias.to_vec(),
        }
    }
}

impl MapperParams {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::shape(format!(
                "weight has {} rows, bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mapper parameters".into()));
        }
        Ok(MapperParams { weight, bias })
    }

    /// All-zero parameters; the map then returns `μ` for every input.
    pub fn zeros(d_a: usize, d_s: usize) -> Self {
        MapperParams {
            weight: Array2::zeros((d_s, d_a)),
            bias: Array1::zeros(d_s),
        }
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn d_a(&self) -> usize {
        self.weight.ncols()
    }

    pub fn d_s(&self) -> usize {
        self.weight.nrows()
    }

    fn check(&self, stats: &StyleStats) -> Result<()> {
        if self.d_s() != stats.dim() {
            return Err(Error::shape(format!(
                "mapper emits {} dims, stats describe {}",
                self.d_s(),
                stats.dim()
            )));
        }
        Ok(())
    }

    fn check_input(&self, d_a: usize) -> Result<()> {
        if d_a != self.d_a() {
            return Err(Error::shape(format!(
                "audio embedding has {d_a} dims, mapper expects {}",
                self.d_a()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop once the mean per-dimension L1 falls below this value.
    pub convergence_threshold: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.05,
            max_steps: 5000,
            batch_size: 16,
            seed: 0,
            convergence_threshold: 0.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.convergence_threshold >= 0.0) {
            return Err(Error::InvalidConfig(
                "convergence_threshold must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Row-aligned audio embeddings `z` (N × D_a) and target styles `w` (N × D_s).
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    z: Array2<f64>,
    w: Array2<f64>,
}

impl PairBatch {
    pub fn new(z: Array2<f64>, w: Array2<f64>) -> Result<Self> {
        if z.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if z.nrows() != w.nrows() {
            return Err(Error::shape(format!(
                "{} embeddings but {} targets",
                z.nrows(),
                w.nrows()
            )));
        }
        if z.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pair batch".into()));
        }
        Ok(PairBatch { z, w })
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    fn select(&self, rows: &[usize]) -> PairBatch {
        PairBatch {
            z: self.z.select(Axis(0), rows),
            w: self.w.select(Axis(0), rows),
        }
    }
}

/// Estimates `μ` (column mean) and `σ` (population deviation, divide by N).
pub fn estimate_style_stats(samples: ArrayView2<f64>) -> Result<StyleStats> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::shape(format!(
            "style stats need at least 2 samples, got {n}"
        )));
    }
    if samples.ncols() == 0 {
        return Err(Error::shape("style samples have zero columns"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("style samples".into()));
    }
    let mu = samples.mean_axis(Axis(0)).expect("n >= 2");
    let mut var = Array1::<f64>::zeros(samples.ncols());
    for row in samples.outer_iter() {
        for ((v, &x), &m) in var.iter_mut().zip(row.iter()).zip(mu.iter()) {
            let d = x - m;
            *v += d * d;
        }
    }
    let sigma = var.mapv(|v| (v / n as f64).sqrt());
    StyleStats::new(mu, sigma, n)
}

/// Maps `2σ·tanh(a) + μ` and keeps the result strictly inside `μ ± 2σ`,
/// which rounding alone would violate once `tanh` saturates.
#[inline]
fn squash(pre: f64, mu: f64, sigma: f64) -> f64 {
    let y = 2.0 * sigma * pre.tanh() + mu;
    let hi = mu + 2.0 * sigma;
    let lo = mu - 2.0 * sigma;
    if y >= hi {
        hi.next_down()
    } else if y <= lo {
        lo.next_up()
    } else {
        y
    }
}

fn preactivation(z: ArrayView1<f64>, params: &MapperParams) -> Array1<f64> {
    params.weight.dot(&z) + &params.bias
}

pub fn forward_map(
    z: ArrayView1<f64>,
    params: &MapperParams,
    stats: &StyleStats,
) -> Result<Array1<f64>> {
    params.check(stats)?;
    params.check_input(z.len())?;
    let mut out = preactivation(z, params);
    for ((o, &m), &s) in out.iter_mut().zip(stats.mu.iter()).zip(stats.sigma.iter()) {
        *o = squash(*o, m, s);
    }
    Ok(out)
}

/// Applies [`forward_map`] to every row of `z`, bit-identical to the
/// single-row call.
pub fn forward_map_rows(
    z: ArrayView2<f64>,
    params: &MapperParams,
    stats: &StyleStats,
) -> Result<Array2<f64>> {
    params.check(stats)?;
    params.check_input(z.ncols())?;
    let mut out = Array2::zeros((z.nrows(), params.d_s()));
    for (mut row, zn) in out.outer_iter_mut().zip(z.outer_iter()) {
        let pre = preactivation(zn, params);
        for (((o, &p), &m), &s) in row
            .iter_mut()
            .zip(pre.iter())
            .zip(stats.mu.iter())
            .zip(stats.sigma.iter())
        {
            *o = squash(p, m, s);
        }
    }
    Ok(out)
}

/// Sum over style dimensions of `|target − forward_map(z)|`.
pub fn l1_loss(
    target_w: ArrayView1<f64>,
    z: ArrayView1<f64>,
    params: &MapperParams,
    stats: &StyleStats,
) -> Result<f64> {
    if target_w.len() != params.d_s() {
        return Err(Error::shape(format!(
            "target has {} dims, mapper emits {}",
            target_w.len(),
            params.d_s()
        )));
    }
    let pred = forward_map(z, params, stats)?;
    Ok(target_w
        .iter()
        .zip(pred.iter())
        .map(|(t, p)| (t - p).abs())
        .sum())
}

/// Mean over rows of the per-dimension L1 (`l1_loss / D_s`).
pub fn mean_l1_per_dim(
    batch: &PairBatch,
    params: &MapperParams,
    stats: &StyleStats,
) -> Result<f64> {
    check_batch(batch, params)?;
    let pred = forward_map_rows(batch.z.view(), params, stats)?;
    let total: f64 = pred
        .iter()
        .zip(batch.w.iter())
        .map(|(p, t)| (t - p).abs())
        .sum();
    Ok(total / (batch.len() * params.d_s()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

fn check_batch(batch: &PairBatch, params: &MapperParams) -> Result<()> {
    params.check_input(batch.z.ncols())?;
    if batch.w.ncols() != params.d_s() {
        return Err(Error::shape(format!(
            "targets have {} dims, mapper emits {}",
            batch.w.ncols(),
            params.d_s()
        )));
    }
    Ok(())
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean-over-batch gradient of [`l1_loss`] with respect to `W` and `b`.
///
/// Uses the subgradient `sign(0) = 0` at the L1 kink.
pub fn loss_gradient(
    batch: &PairBatch,
    params: &MapperParams,
    stats: &StyleStats,
) -> Result<Gradient> {
    params.check(stats)?;
    check_batch(batch, params)?;
    let n = batch.len() as f64;
    let pre = batch.z.dot(&params.weight.t()) + &params.bias;
    // dL/da for every (row, style dim)
    let mut delta = Array2::<f64>::zeros(pre.raw_dim());
    for ((mut d_row, a_row), w_row) in delta
        .outer_iter_mut()
        .zip(pre.outer_iter())
        .zip(batch.w.outer_iter())
    {
        for (i, d) in d_row.iter_mut().enumerate() {
            let t = a_row[i].tanh();
            let pred = squash(a_row[i], stats.mu[i], stats.sigma[i]);
            let residual = w_row[i] - pred;
            *d = -sign(residual) * 2.0 * stats.sigma[i] * (1.0 - t * t) / n;
        }
    }
    Ok(Gradient {
        weight: delta.t().dot(&batch.z),
        bias: delta.sum_axis(Axis(0)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: MapperParams,
    /// Entry `s` is the mean per-dimension L1 over the whole dataset after
    /// `s` updates; entry 0 is the loss of the zero initialization.
    pub loss_history: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history is never empty")
    }

    pub fn steps(&self) -> usize {
        self.loss_history.len() - 1
    }

    /// `step,loss` CSV with a header row.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (s, l) in self.loss_history.iter().enumerate() {
            out.push_str(&format!("{s},{l:?}\n"));
        }
        out
    }
}

/// Mini-batch gradient descent from `W = 0, b = 0`.
///
/// Batches are drawn from per-epoch shuffles seeded by `config.seed`; when
/// `batch_size >= N` every step is full-batch. Training stops early when the
/// dataset loss drops below `convergence_threshold` or reaches exactly zero
/// (a fixed point under the `sign(0) = 0` subgradient).
pub fn train(
    dataset: &PairBatch,
    stats: &StyleStats,
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.w.ncols() != stats.dim() {
        return Err(Error::shape(format!(
            "targets have {} dims, stats describe {}",
            dataset.w.ncols(),
            stats.dim()
        )));
    }
    let n = dataset.len();
    let mut params = MapperParams::zeros(dataset.z.ncols(), stats.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    let mut history = Vec::with_capacity(config.max_steps + 1);
    let mut loss = mean_l1_per_dim(dataset, &params, stats)?;
    history.push(loss);

    for _ in 0..config.max_steps {
        if loss < config.convergence_threshold || loss == 0.0 {
            break;
        }
        let grad = if config.batch_size >= n {
            loss_gradient(dataset, &params, stats)?
        } else {
            if cursor >= n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let end = (cursor + config.batch_size).min(n);
            let batch = dataset.select(&order[cursor..end]);
            cursor = end;
            loss_gradient(&batch, &params, stats)?
        };
        params
            .weight
            .scaled_add(-config.learning_rate, &grad.weight);
        params.bias.scaled_add(-config.learning_rate, &grad.bias);
        loss = mean_l1_per_dim(dataset, &params, stats)?;
        history.push(loss);
    }

    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn stats(mu: Vec<f64>, sigma: Vec<f64>) -> StyleStats {
        StyleStats::new(Array1::from(mu), Array1::from(sigma), 2).unwrap()
    }

    fn randn(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Array2<f64> {
        Array2::from_shape_simple_fn(shape, || scale * rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn stats_of_two_rows() {
        let s = estimate_style_stats(array![[0.0, 2.0], [2.0, 0.0]].view()).unwrap();
        assert_eq!(s.mu().to_vec(), vec![1.0, 1.0]);
        assert_eq!(s.sigma().to_vec(), vec![1.0, 1.0]);
        assert_eq!(s.n_samples(), 2);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let err = estimate_style_stats(array![[5.0], [5.0]].view()).unwrap_err();
        assert!(matches!(err, Error::DegenerateStats { dim: 0, .. }));
    }

    #[test]
    fn single_sample_is_rejected() {
        assert!(matches!(
            estimate_style_stats(array![[1.0, 2.0]].view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn stats_of_seeded_normal_match_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = randn(&mut rng, (1000, 4), 2.0).mapv(|v| v + 3.0);
        let s = estimate_style_stats(samples.view()).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = samples.column(j).to_vec();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!((s.mu()[j] - mean).abs() < 1e-12);
            assert!((s.sigma()[j] - var.sqrt()).abs() < 1e-12);
            assert!((s.mu()[j] - 3.0).abs() < 0.2);
            assert!((s.sigma()[j] - 2.0).abs() < 0.2);
        }
    }

    #[test]
    fn zero_params_return_mu() {
        let st = stats(vec![0.5, -1.0, 3.0], vec![1.0, 2.0, 0.1]);
        let out = forward_map(array![9.0, -4.0].view(), &MapperParams::zeros(2, 3), &st).unwrap();
        assert_eq!(out, *st.mu());
    }

    #[test]
    fn scalar_forward_matches_high_precision_value() {
        // 1 + 4·tanh(0.5) at 40 digits: 2.848468629040039034...
        let p = MapperParams::new(array![[1.0]], array![0.0]).unwrap();
        let out = forward_map(array![0.5].view(), &p, &stats(vec![1.0], vec![2.0])).unwrap();
        assert!((out[0] - 2.848_468_629_040_039).abs() < 1e-12);
    }

    #[test]
    fn saturated_output_stays_inside_box() {
        let p = MapperParams::new(array![[0.0]], array![20.0]).unwrap();
        let out = forward_map(array![1.0].view(), &p, &stats(vec![0.0], vec![1.0])).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12);
        assert!(out[0] < 2.0);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let st = stats(vec![0.0], vec![1.0]);
        let p = MapperParams::zeros(2, 1);
        assert!(matches!(
            forward_map(array![1.0].view(), &p, &st),
            Err(Error::Shape(_))
        ));
        let p = MapperParams::zeros(1, 2);
        assert!(matches!(
            forward_map(array![1.0].view(), &p, &st),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn loss_zero_at_own_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MapperParams::new(randn(&mut rng, (3, 4), 0.5), Array1::zeros(3)).unwrap();
        let st = stats(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 2.0]);
        let z = array![0.1, -0.3, 0.7, 1.2];
        let pred = forward_map(z.view(), &p, &st).unwrap();
        assert_eq!(l1_loss(pred.view(), z.view(), &p, &st).unwrap(), 0.0);
    }

    #[test]
    fn loss_with_zero_params() {
        let st = stats(vec![1.0, 2.0], vec![1.0, 1.0]);
        let target = array![2.0, 0.0];
        let l = l1_loss(
            target.view(),
            array![0.3].view(),
            &MapperParams::zeros(1, 2),
            &st,
        )
        .unwrap();
        assert_eq!(l, 3.0);
    }

    #[test]
    fn loss_matches_straight_line_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = randn(&mut rng, (3, 4), 1.0);
        let b = randn(&mut rng, (1, 3), 1.0).row(0).to_owned();
        let p = MapperParams::new(w.clone(), b.clone()).unwrap();
        let st = stats(vec![0.2, -0.4, 1.0], vec![0.7, 1.3, 2.1]);
        let z = randn(&mut rng, (1, 4), 1.0).row(0).to_owned();
        let target = randn(&mut rng, (1, 3), 1.5).row(0).to_owned();
        let mut expected = 0.0;
        for i in 0..3 {
            let mut a = b[i];
            for j in 0..4 {
                a += w[[i, j]] * z[j];
            }
            let pred = 2.0 * st.sigma()[i] * a.tanh() + st.mu()[i];
            expected += (target[i] - pred).abs();
        }
        let got = l1_loss(target.view(), z.view(), &p, &st).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = MapperParams::new(randn(&mut rng, (2, 3), 0.5), array![0.1, -0.2]).unwrap();
        let st = stats(vec![0.0, 1.0], vec![1.0, 2.0]);
        let z = randn(&mut rng, (6, 3), 1.0);
        let w = forward_map_rows(z.view(), &p, &st).unwrap();
        let g = loss_gradient(&PairBatch::new(z, w).unwrap(), &p, &st).unwrap();
        assert!(g.weight.iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_gradient_by_hand() {
        let st = stats(vec![0.0], vec![1.0]);
        let batch = PairBatch::new(array![[1.0]], array![[5.0]]).unwrap();
        let g = loss_gradient(&batch, &MapperParams::zeros(1, 1), &st).unwrap();
        assert_eq!(g.bias.to_vec(), vec![-2.0]);
        assert_eq!(g.weight, array![[-2.0]]);
    }

    /// Central differences of the loss restricted to output dimension `i`,
    /// which is the only part depending on row `i` of W and on `b[i]`.
    fn fd_row_loss(batch: &PairBatch, p: &MapperParams, st: &StyleStats, i: usize) -> f64 {
        let mut total = 0.0;
        for (z, w) in batch.z().outer_iter().zip(batch.w().outer_iter()) {
            let a: f64 = p.weight().row(i).dot(&z) + p.bias()[i];
            total += (w[i] - (2.0 * st.sigma()[i] * a.tanh() + st.mu()[i])).abs();
        }
        total / batch.len() as f64
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (d_a, d_s, n) = (5, 4, 8);
        let p = MapperParams::new(
            randn(&mut rng, (d_s, d_a), 0.4),
            randn(&mut rng, (1, d_s), 0.5).row(0).to_owned(),
        )
        .unwrap();
        let st = StyleStats::new(
            Array1::from_shape_fn(d_s, |_| rng.gen_range(-1.0..1.0)),
            Array1::from_shape_fn(d_s, |_| rng.gen_range(0.5..2.0)),
            2,
        )
        .unwrap();
        let z = randn(&mut rng, (n, d_a), 1.0);
        let w = randn(&mut rng, (n, d_s), 2.0);
        let batch = PairBatch::new(z, w).unwrap();
        let g = loss_gradient(&batch, &p, &st).unwrap();
        let h = 1e-6;
        for i in 0..d_s {
            for j in 0..=d_a {
                let bump = |delta: f64| {
                    let mut q = p.clone();
                    if j < d_a {
                        q.weight[[i, j]] += delta;
                    } else {
                        q.bias[i] += delta;
                    }
                    fd_row_loss(&batch, &q, &st, i)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if j < d_a { g.weight[[i, j]] } else { g.bias[i] };
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "entry ({i},{j}): analytic {an}, fd {fd}");
            }
        }
    }

    #[test]
    fn training_at_centroid_converges_immediately() {
        let st = stats(vec![0.5, -0.5], vec![1.0, 1.0]);
        let z = array![[1.0, 2.0], [3.0, -1.0], [0.0, 0.5]];
        let w = Array2::from_shape_fn((3, 2), |(_, j)| st.mu()[j]);
        let out = train(
            &PairBatch::new(z, w).unwrap(),
            &st,
            &TrainingConfig::default(),
        )
        .unwrap();
        assert_eq!(out.loss_history, vec![0.0]);
        assert_eq!(out.params, MapperParams::zeros(2, 2));
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = randn(&mut rng, (40, 6), 1.0);
        let w = randn(&mut rng, (40, 3), 1.0);
        let st = stats(vec![0.0; 3], vec![1.0; 3]);
        let batch = PairBatch::new(z, w).unwrap();
        let cfg = TrainingConfig {
            max_steps: 200,
            seed: 99,
            ..TrainingConfig::default()
        };
        let a = train(&batch, &st, &cfg).unwrap();
        let b = train(&batch, &st, &cfg).unwrap();
        assert_eq!(
            a.loss_history
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            b.loss_history
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn bad_training_config_is_rejected() {
        let st = stats(vec![0.0], vec![1.0]);
        let batch = PairBatch::new(array![[1.0]], array![[1.0]]).unwrap();
        for cfg in [
            TrainingConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainingConfig {
                max_steps: 0,
                ..Default::default()
            },
            TrainingConfig {
                batch_size: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                train(&batch, &st, &cfg),
                Err(Error::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            PairBatch::new(Array2::zeros((0, 2)), Array2::zeros((0, 1))),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn json_roundtrip_preserves_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = MapperParams::new(randn(&mut rng, (2, 3), 1.0), array![0.1, 1e-300]).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.starts_with(r#"{"d_a":3,"d_s":2,"weight":"#));
        let back: MapperParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);

        let st = stats(vec![0.1, 0.2], vec![0.3, 0.4]);
        let text = serde_json::to_string(&st).unwrap();
        assert_eq!(text, r#"{"mu":[0.1,0.2],"sigma":[0.3,0.4],"n_samples":2}"#);
        assert_eq!(serde_json::from_str::<StyleStats>(&text).unwrap(), st);
    }

    #[test]
    fn json_with_bad_shapes_is_rejected() {
        let text = r#"{"d_a":2,"d_s":1,"weight":[[1.0]],"bias":[0.0]}"#;
        assert!(serde_json::from_str::<MapperParams>(text).is_err());
        let text = r#"{"mu":[0.0],"sigma":[0.0],"n_samples":3}"#;
        assert!(serde_json::from_str::<StyleStats>(text).is_err());
    }

    proptest! {
        #[test]
        fn output_within_two_sigma_box(
            z in prop::collection::vec(-1e6f64..1e6, 3),
            w in prop::collection::vec(-50.0f64..50.0, 6),
            b in prop::collection::vec(-50.0f64..50.0, 2),
            mu in prop::collection::vec(-100.0f64..100.0, 2),
            sigma in prop::collection::vec(1e-3f64..10.0, 2),
        ) {
            let p = MapperParams::new(Array2::from_shape_vec((2, 3), w).unwrap(), Array1::from(b)).unwrap();
            let st = StyleStats::new(Array1::from(mu), Array1::from(sigma), 2).unwrap();
            let out = forward_map(Array1::from(z).view(), &p, &st).unwrap();
            for i in 0..2 {
                prop_assert!(out[i] > st.mu()[i] - 2.0 * st.sigma()[i]);
                prop_assert!(out[i] < st.mu()[i] + 2.0 * st.sigma()[i]);
            }
        }

        #[test]
        fn mean_shift_translates_output(
            z in prop::collection::vec(-3.0f64..3.0, 2),
            c in prop::collection::vec(-4.0f64..4.0, 2),
        ) {
            let p = MapperParams::new(array![[0.3, -0.2], [0.1, 0.5]], array![0.05, -0.1]).unwrap();
            let st = stats(vec![0.0, 1.0], vec![1.0, 0.5]);
            let shifted = st.shifted(Array1::from(c.clone()).view()).unwrap();
            let z = Array1::from(z);
            let a = forward_map(z.view(), &p, &st).unwrap();
            let b = forward_map(z.view(), &p, &shifted).unwrap();
            for i in 0..2 {
                prop_assert!((b[i] - a[i] - c[i]).abs() < 1e-12);
            }
        }
    }
}
