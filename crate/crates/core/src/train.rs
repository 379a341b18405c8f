//! Loss, full backward pass through the two residual branches, optimizers,
//! and the seeded mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::dataset::PairedDataset;
use crate::error::{Error, Result};
use crate::model::{forward, param_count, ForwardCache, ModelParams};
use crate::tensor::{depthwise_conv2d_backward, relu_backward, KernelGrad, Tensor, CHANNELS};

pub const PARAM_COUNT: usize = 108;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            _ => Err(Error::InvalidConfig(format!("unknown loss {s:?} (expected mse)"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("mse")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::InvalidConfig(format!(
                "unknown optimizer {s:?} (expected adam or sgd)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_epsilon: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.001,
            batch_size: 8,
            seed: 0,
            loss: LossKind::Mse,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gradients for every learnable scalar, shape-congruent with [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub g: KernelGrad,
    pub f: KernelGrad,
}

impl GradientSet {
    pub fn zeros() -> Self {
        Self {
            g: KernelGrad::zeros(3),
            f: KernelGrad::zeros(5),
        }
    }

    pub fn accumulate(&mut self, other: &GradientSet) {
        for c in 0..CHANNELS {
            for (a, b) in self.g.weights[c].iter_mut().zip(&other.g.weights[c]) {
                *a += b;
            }
            for (a, b) in self.f.weights[c].iter_mut().zip(&other.f.weights[c]) {
                *a += b;
            }
            self.g.bias[c] += other.g.bias[c];
            self.f.bias[c] += other.f.bias[c];
        }
    }

    pub fn scale(&mut self, s: f32) {
        for c in 0..CHANNELS {
            for a in self.g.weights[c].iter_mut() {
                *a *= s;
            }
            for a in self.f.weights[c].iter_mut() {
                *a *= s;
            }
            self.g.bias[c] *= s;
            self.f.bias[c] *= s;
        }
    }
}

/// Canonical flattening order: g weights (c0, c1, c2 row-major), g biases,
/// f weights (c0, c1, c2), f biases. Shared by the optimizer and the
/// checkpoint format.
pub fn params_to_flat(params: &ModelParams) -> Vec<f32> {
    let mut out = Vec::with_capacity(PARAM_COUNT);
    for c in 0..CHANNELS {
        out.extend_from_slice(&params.g.weights()[c]);
    }
    out.extend_from_slice(params.g.bias());
    for c in 0..CHANNELS {
        out.extend_from_slice(&params.f.weights()[c]);
    }
    out.extend_from_slice(params.f.bias());
    out
}

pub fn flat_to_params(flat: &[f32]) -> Result<ModelParams> {
    if flat.len() != PARAM_COUNT {
        return Err(Error::CheckpointParamCount {
            found: flat.len(),
            expected: PARAM_COUNT,
        });
    }
    let mut params = crate::model::zero_params();
    write_flat_into(flat, &mut params);
    Ok(params)
}

fn write_flat_into(flat: &[f32], params: &mut ModelParams) {
    let mut i = 0;
    for c in 0..CHANNELS {
        params.g.weights_mut()[c].copy_from_slice(&flat[i..i + 9]);
        i += 9;
    }
    params.g.bias_mut().copy_from_slice(&flat[i..i + 3]);
    i += 3;
    for c in 0..CHANNELS {
        params.f.weights_mut()[c].copy_from_slice(&flat[i..i + 25]);
        i += 25;
    }
    params.f.bias_mut().copy_from_slice(&flat[i..i + 3]);
}

fn grads_to_flat(grads: &GradientSet) -> Vec<f32> {
    let mut out = Vec::with_capacity(PARAM_COUNT);
    for c in 0..CHANNELS {
        out.extend_from_slice(&grads.g.weights[c]);
    }
    out.extend_from_slice(&grads.g.bias);
    for c in 0..CHANNELS {
        out.extend_from_slice(&grads.f.weights[c]);
    }
    out.extend_from_slice(&grads.f.bias);
    out
}

/// Human-readable name of the flat parameter at `index`, for diagnostics.
pub fn param_name(index: usize) -> String {
    match index {
        0..=26 => format!("g.weights[{}][{}]", index / 9, index % 9),
        27..=29 => format!("g.bias[{}]", index - 27),
        30..=104 => format!("f.weights[{}][{}]", (index - 30) / 25, (index - 30) % 25),
        105..=107 => format!("f.bias[{}]", index - 105),
        _ => format!("param[{index}]"),
    }
}

/// Mean squared error over all H*W*C entries, plus its gradient
/// 2*(prediction - target)/(H*W*C).
pub fn mse_loss(prediction: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if !prediction.same_shape(target) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", target.shape()),
            actual: format!("{:?}", prediction.shape()),
        });
    }
    let n = prediction.len() as f64;
    let mut sum = 0.0f64;
    let mut grad = prediction.clone();
    let scale = (2.0 / n) as f32;
    for (g, (&p, &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(prediction.data().iter().zip(target.data()))
    {
        let d = (p - t) as f64;
        sum += d * d;
        *g = scale * (p - t);
    }
    Ok(((sum / n) as f32, grad))
}

/// Chain rule through v = I + relu(conv(b, f)), b = I + relu(conv(I, g)).
///
/// The identity branch of each residual add passes grad_v straight through;
/// only the kernel gradients are returned (the input needs no gradient).
pub fn backward(params: &ModelParams, cache: &ForwardCache, grad_v: &Tensor) -> Result<GradientSet> {
    // v = input + u, u = relu(f_pre)
    let d_f_pre = relu_backward(&cache.f_pre, grad_v)?;
    let (d_b, grad_f) = depthwise_conv2d_backward(&cache.b, &params.f, &d_f_pre)?;
    // b = input + h, h = relu(g_pre)
    let d_g_pre = relu_backward(&cache.g_pre, &d_b)?;
    let (_, grad_g) = depthwise_conv2d_backward(&cache.input, &params.g, &d_g_pre)?;
    Ok(GradientSet { g: grad_g, f: grad_f })
}

/// First/second moment accumulators and step counter for Adam. SGD uses only
/// the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self {
            m: vec![0.0; PARAM_COUNT],
            v: vec![0.0; PARAM_COUNT],
            step: 0,
        }
    }
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite(flat: &[f32]) -> Result<()> {
    if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient(param_name(i)));
    }
    Ok(())
}

/// Bias-corrected adaptive-moment update.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut OptimizerState,
    lr: f32,
    config: &TrainConfig,
) -> Result<()> {
    let g = grads_to_flat(grads);
    check_finite(&g)?;
    let mut p = params_to_flat(params);
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (config.adam_beta1, config.adam_beta2, config.adam_epsilon);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for i in 0..PARAM_COUNT {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    write_flat_into(&p, params);
    Ok(())
}

/// Plain gradient descent: p -= lr * g.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut OptimizerState,
    lr: f32,
) -> Result<()> {
    let g = grads_to_flat(grads);
    check_finite(&g)?;
    let mut p = params_to_flat(params);
    state.step += 1;
    for i in 0..PARAM_COUNT {
        p[i] -= lr * g[i];
    }
    write_flat_into(&p, params);
    Ok(())
}

/// Per-epoch shuffle generator: seeded deterministically from the run seed
/// and the epoch index.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64))
}

/// Seeded mini-batch training loop. Pairs are reshuffled each epoch, batch
/// gradients are the mean of per-image gradients, and the last short batch
/// is processed with its actual size. `progress` receives
/// (epoch index, epoch mean loss) after each epoch.
///
/// Single-threaded and deterministic: identical (dataset, config, init)
/// produce a bit-identical checkpoint.
pub fn train(
    dataset: &PairedDataset,
    config: &TrainConfig,
    init: ModelParams,
    mut progress: impl FnMut(usize, f32),
) -> Result<Checkpoint> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut params = init;
    let mut state = OptimizerState::new();
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut ref_shape: Option<(usize, usize, usize)> = None;
    let mut final_loss = 0.0f32;

    for epoch in 0..config.epochs {
        indices.shuffle(&mut epoch_rng(config.seed, epoch));
        let mut loss_sum = 0.0f64;
        for batch in indices.chunks(config.batch_size) {
            let mut batch_grads = GradientSet::zeros();
            for &i in batch {
                let (low, high) = dataset.load_pair(i)?;
                if !low.same_shape(&high) {
                    return Err(Error::ShapeMismatch {
                        expected: format!("pair {}: {:?}", dataset.id(i), high.shape()),
                        actual: format!("{:?}", low.shape()),
                    });
                }
                match ref_shape {
                    None => ref_shape = Some(low.shape()),
                    Some(s) if s != low.shape() => {
                        return Err(Error::ShapeMismatch {
                            expected: format!("uniform training shape {s:?}"),
                            actual: format!("pair {}: {:?}", dataset.id(i), low.shape()),
                        })
                    }
                    _ => {}
                }
                let (output, cache) = forward(&params, &low)?;
                let (loss, grad_v) = mse_loss(&output, &high)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss on pair {} (epoch {epoch})",
                        dataset.id(i)
                    )));
                }
                loss_sum += loss as f64;
                let grads = backward(&params, &cache, &grad_v)?;
                batch_grads.accumulate(&grads);
            }
            batch_grads.scale(1.0 / batch.len() as f32);
            match config.optimizer {
                OptimizerKind::Adam => {
                    adam_step(&mut params, &batch_grads, &mut state, config.learning_rate, config)?
                }
                OptimizerKind::Sgd => {
                    sgd_step(&mut params, &batch_grads, &mut state, config.learning_rate)?
                }
            }
        }
        let epoch_loss = (loss_sum / dataset.len() as f64) as f32;
        final_loss = epoch_loss;
        progress(epoch, epoch_loss);
    }

    debug_assert_eq!(param_count(&params), PARAM_COUNT);
    Ok(Checkpoint {
        format_version: crate::checkpoint::FORMAT_VERSION,
        params,
        config: config.clone(),
        epochs_completed: config.epochs,
        final_loss,
        dataset_id: dataset.dataset_id().to_string(),
        created_at: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PairedDataset;
    use crate::model::{init_params, zero_params};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
        let data = (0..h * w * CHANNELS).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::from_vec(h, w, data).unwrap()
    }

    #[test]
    fn mse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let t = random_tensor(&mut rng, 4, 4);
        let (loss, grad) = mse_loss(&t, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&v| v == 0.0));

        let shifted = t.map(|v| v + 0.1);
        let (loss, _) = mse_loss(&shifted, &t).unwrap();
        assert!((loss - 0.01).abs() < 1e-6);

        // independent two-pass oracle
        let a = random_tensor(&mut rng, 5, 6);
        let b = random_tensor(&mut rng, 5, 6);
        let (loss, _) = mse_loss(&a, &b).unwrap();
        let mut sum = 0.0f64;
        for i in 0..a.len() {
            let d = (a.data()[i] - b.data()[i]) as f64;
            sum += d * d;
        }
        let oracle = sum / a.len() as f64;
        assert!((loss as f64 - oracle).abs() < 1e-7);

        assert!(mse_loss(&a, &random_tensor(&mut rng, 4, 6)).is_err());
    }

    #[test]
    fn backward_zero_grad_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let input = random_tensor(&mut rng, 6, 6);
        let params = init_params(0);
        let (_, cache) = forward(&params, &input).unwrap();
        let grads = backward(&params, &cache, &Tensor::zeros(6, 6)).unwrap();
        assert_eq!(grads, GradientSet::zeros());
    }

    /// With zero params every f-stage pre-activation is exactly 0, and the
    /// ReLU subgradient there is 0, so grad_f weights stay zero: the
    /// dead-at-zero property motivating nonzero initialization.
    #[test]
    fn backward_zero_params_dead_f_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let input = random_tensor(&mut rng, 6, 6);
        let params = zero_params();
        let (out, cache) = forward(&params, &input).unwrap();
        let target = random_tensor(&mut rng, 6, 6);
        let (_, grad_v) = mse_loss(&out, &target).unwrap();
        let grads = backward(&params, &cache, &grad_v).unwrap();
        for c in 0..CHANNELS {
            assert!(grads.f.weights[c].iter().all(|&v| v == 0.0));
            assert!(grads.g.weights[c].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn adam_zero_gradients_noop() {
        let mut params = init_params(0);
        let before = params.clone();
        let mut state = OptimizerState::new();
        let cfg = TrainConfig::default();
        adam_step(&mut params, &GradientSet::zeros(), &mut state, 0.001, &cfg).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut params = init_params(0);
        let before = params_to_flat(&params);
        let mut grads = GradientSet::zeros();
        for c in 0..CHANNELS {
            for w in grads.g.weights[c].iter_mut() {
                *w = rng.gen_range(0.05..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            }
            for w in grads.f.weights[c].iter_mut() {
                *w = rng.gen_range(0.05..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            }
            grads.g.bias[c] = 0.3;
            grads.f.bias[c] = -0.3;
        }
        let flat_g = grads_to_flat(&grads);
        let mut state = OptimizerState::new();
        let cfg = TrainConfig::default();
        let lr = 0.001f32;
        adam_step(&mut params, &grads, &mut state, lr, &cfg).unwrap();
        let after = params_to_flat(&params);
        for i in 0..PARAM_COUNT {
            let delta = after[i] - before[i];
            // first bias-corrected step is lr * g/(|g| + eps') ~= lr * sign(g)
            assert!(
                (delta.abs() - lr).abs() < lr * 1e-3,
                "param {i}: delta {delta}"
            );
            assert!(delta.signum() == -flat_g[i].signum());
        }
    }

    #[test]
    fn adam_two_steps_match_reference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut params = init_params(0);
        let mut grads = GradientSet::zeros();
        for c in 0..CHANNELS {
            for w in grads.g.weights[c].iter_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
            for w in grads.f.weights[c].iter_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
            grads.g.bias[c] = rng.gen_range(-1.0..1.0);
            grads.f.bias[c] = rng.gen_range(-1.0..1.0);
        }
        let cfg = TrainConfig::default();
        let lr = 0.01f32;

        // reference: independent implementation of the update equations
        let g = grads_to_flat(&grads);
        let mut expect = params_to_flat(&params);
        let mut m = vec![0.0f32; PARAM_COUNT];
        let mut v = vec![0.0f32; PARAM_COUNT];
        for t in 1..=2i32 {
            for i in 0..PARAM_COUNT {
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                let m_hat = m[i] / (1.0 - cfg.adam_beta1.powi(t));
                let v_hat = v[i] / (1.0 - cfg.adam_beta2.powi(t));
                expect[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
            }
        }

        let mut state = OptimizerState::new();
        adam_step(&mut params, &grads, &mut state, lr, &cfg).unwrap();
        adam_step(&mut params, &grads, &mut state, lr, &cfg).unwrap();
        assert_eq!(params_to_flat(&params), expect);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = init_params(0);
        let mut grads = GradientSet::zeros();
        grads.f.bias[1] = f32::NAN;
        let mut state = OptimizerState::new();
        let cfg = TrainConfig::default();
        match adam_step(&mut params, &grads, &mut state, 0.001, &cfg) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "f.bias[1]"),
            other => panic!("expected non-finite gradient error, got {other:?}"),
        }
    }

    #[test]
    fn train_fixed_point_identity_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let img = random_tensor(&mut rng, 8, 8);
        let dataset = PairedDataset::in_memory("fixed-point", vec![("p0".into(), img.clone(), img)]);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let mut losses = Vec::new();
        let ckpt = train(&dataset, &cfg, zero_params(), |_, l| losses.push(l)).unwrap();
        assert_eq!(losses, vec![0.0]);
        assert_eq!(ckpt.params, zero_params());
        assert_eq!(ckpt.final_loss, 0.0);
    }

    #[test]
    fn train_rejects_empty_dataset_and_bad_config() {
        let dataset = PairedDataset::in_memory("empty", vec![]);
        assert!(matches!(
            train(&dataset, &TrainConfig::default(), zero_params(), |_, _| {}),
            Err(Error::EmptyDataset)
        ));
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn train_deterministic_same_seed() {
        let dataset = crate::dataset::generate_synthetic_pairs(6, 12, 12, 7).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 7,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut l1 = Vec::new();
        let c1 = train(&dataset, &cfg, init_params(7), |_, l| l1.push(l)).unwrap();
        let mut l2 = Vec::new();
        let c2 = train(&dataset, &cfg, init_params(7), |_, l| l2.push(l)).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(c1, c2);
        assert_eq!(params_to_flat(&c1.params), params_to_flat(&c2.params));
    }

    /// Gradient of a batch of two equals the mean of the per-image gradients.
    #[test]
    fn batch_mean_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let params = init_params(0);
        let a_low = random_tensor(&mut rng, 6, 6);
        let a_high = random_tensor(&mut rng, 6, 6);
        let b_low = random_tensor(&mut rng, 6, 6);
        let b_high = random_tensor(&mut rng, 6, 6);

        let per_image = |low: &Tensor, high: &Tensor| {
            let (out, cache) = forward(&params, low).unwrap();
            let (_, grad_v) = mse_loss(&out, high).unwrap();
            backward(&params, &cache, &grad_v).unwrap()
        };
        let ga = per_image(&a_low, &a_high);
        let gb = per_image(&b_low, &b_high);
        let mut manual_mean = GradientSet::zeros();
        manual_mean.accumulate(&ga);
        manual_mean.accumulate(&gb);
        manual_mean.scale(0.5);

        // reproduce the loop's batch accumulation
        let mut batch = GradientSet::zeros();
        batch.accumulate(&per_image(&a_low, &a_high));
        batch.accumulate(&per_image(&b_low, &b_high));
        batch.scale(1.0 / 2.0);
        assert_eq!(grads_to_flat(&batch), grads_to_flat(&manual_mean));
    }

    #[test]
    fn param_name_covers_all_indices() {
        assert_eq!(param_name(0), "g.weights[0][0]");
        assert_eq!(param_name(27), "g.bias[0]");
        assert_eq!(param_name(30), "f.weights[0][0]");
        assert_eq!(param_name(107), "f.bias[2]");
    }

    #[test]
    fn flat_round_trip() {
        let p = init_params(0);
        let flat = params_to_flat(&p);
        assert_eq!(flat.len(), PARAM_COUNT);
        let q = flat_to_params(&flat).unwrap();
        assert_eq!(p, q);
        assert!(flat_to_params(&flat[..107]).is_err());
    }
}
