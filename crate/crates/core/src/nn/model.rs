use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    dropout_mask, relu_backward, relu_forward, BatchNorm1d, BatchNormCache, BiLstm, Conv1d, Dense,
    LstmCache, MaxPool1d,
};
use super::{sigmoid, Float, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub n_features: usize,
    pub chunk_frames: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub pool_size: usize,
    pub pool_strides: [usize; 2],
    pub dropout: f64,
    pub lstm_hidden: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            n_features: 130,
            chunk_frames: 800,
            conv1_filters: 16,
            conv1_kernel: 3,
            conv2_filters: 8,
            conv2_kernel: 1,
            pool_size: 3,
            pool_strides: [4, 5],
            dropout: 0.2,
            lstm_hidden: 64,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ArchConfig {
    pub fn pools(&self) -> [MaxPool1d; 2] {
        self.pool_strides.map(|stride| MaxPool1d {
            size: self.pool_size,
            stride,
        })
    }

    /// Predictions per chunk after both pooling stages.
    pub fn output_steps(&self) -> usize {
        let [p1, p2] = self.pools();
        p2.output_len(p1.output_len(self.chunk_frames))
    }

    /// Frames covered by one output step.
    pub fn frames_per_step(&self) -> usize {
        self.pool_strides[0] * self.pool_strides[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv1_kernel % 2 == 0 || self.conv2_kernel % 2 == 0 {
            return Err(Error::Config("convolution kernels must be odd for same padding".into()));
        }
        if self.output_steps() == 0 {
            return Err(Error::Config(format!(
                "chunk of {} frames pools to zero steps",
                self.chunk_frames
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if [self.n_features, self.conv1_filters, self.conv2_filters, self.lstm_hidden]
            .contains(&0)
        {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

const NUM_PARAMS: usize = 16;

/// The breath detector: input standardization, two conv blocks
/// (conv, batch-norm, ReLU, max-pool, dropout), a BiLSTM and a sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct BreathDetector<T> {
    pub arch: ArchConfig,
    /// Per-feature shift and scale applied before the first convolution.
    pub input_mean: Vec<T>,
    pub input_std: Vec<T>,
    pub conv1: Conv1d<T>,
    pub bn1: BatchNorm1d<T>,
    pub conv2: Conv1d<T>,
    pub bn2: BatchNorm1d<T>,
    pub lstm: BiLstm<T>,
    pub dense: Dense<T>,
}

/// Dropout masks for both conv blocks, shaped like the pooled activations.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    pub block1: Vec<T>,
    pub block2: Vec<T>,
}

/// Everything `backward` needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub batch: usize,
    input: Vec<T>,
    conv1_out: Vec<T>,
    bn1: BatchNormCache<T>,
    relu1: Vec<T>,
    pool1_arg: Vec<usize>,
    masks: DropoutMasks<T>,
    block1: Vec<T>,
    conv2_out: Vec<T>,
    bn2: BatchNormCache<T>,
    relu2: Vec<T>,
    pool2_arg: Vec<usize>,
    block2: Vec<T>,
    lstm: [LstmCache<T>; 2],
    lstm_out: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

/// Mean binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
pub fn bce_loss(predictions: &[f64], targets: &[f64]) -> f64 {
    const EPS: f64 = 1e-7;
    assert_eq!(predictions.len(), targets.len());
    if predictions.is_empty() {
        return 0.0;
    }
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / predictions.len() as f64
}

/// `softplus(z) - y*z`, the cross-entropy of `sigmoid(z)` against `y`.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

impl<T: Float> BreathDetector<T> {
    /// Seeded initialization: uniform within `1/sqrt(fan_in)`, LSTM forget
    /// bias 1, batch-norm identity, dense bias 0, identity input scaling.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv1 = Conv1d::new(arch.n_features, arch.conv1_filters, arch.conv1_kernel, &mut rng);
        let conv2 = Conv1d::new(arch.conv1_filters, arch.conv2_filters, arch.conv2_kernel, &mut rng);
        let lstm = BiLstm::new(arch.conv2_filters, arch.lstm_hidden, &mut rng);
        let dense = Dense::new(2 * arch.lstm_hidden, &mut rng);
        Ok(Self {
            input_mean: vec![T::zero(); arch.n_features],
            input_std: vec![T::one(); arch.n_features],
            bn1: BatchNorm1d::new(arch.conv1_filters, arch.bn_eps, arch.bn_momentum),
            bn2: BatchNorm1d::new(arch.conv2_filters, arch.bn_eps, arch.bn_momentum),
            conv1,
            conv2,
            lstm,
            dense,
            arch,
        })
    }

    pub fn cast<U: Float>(&self) -> BreathDetector<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.as_f64())).collect();
        BreathDetector {
            arch: self.arch.clone(),
            input_mean: c(&self.input_mean),
            input_std: c(&self.input_std),
            conv1: self.conv1.cast(),
            bn1: self.bn1.cast(),
            conv2: self.conv2.cast(),
            bn2: self.bn2.cast(),
            lstm: self.lstm.cast(),
            dense: self.dense.cast(),
        }
    }

    /// Trainable parameters in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, &[T])> {
        vec![
            ("conv1.weight", &self.conv1.weight),
            ("conv1.bias", &self.conv1.bias),
            ("bn1.gamma", &self.bn1.gamma),
            ("bn1.beta", &self.bn1.beta),
            ("conv2.weight", &self.conv2.weight),
            ("conv2.bias", &self.conv2.bias),
            ("bn2.gamma", &self.bn2.gamma),
            ("bn2.beta", &self.bn2.beta),
            ("lstm.forward.w_ih", &self.lstm.forward.w_ih),
            ("lstm.forward.w_hh", &self.lstm.forward.w_hh),
            ("lstm.forward.bias", &self.lstm.forward.bias),
            ("lstm.backward.w_ih", &self.lstm.backward.w_ih),
            ("lstm.backward.w_hh", &self.lstm.backward.w_hh),
            ("lstm.backward.bias", &self.lstm.backward.bias),
            ("dense.weight", &self.dense.weight),
            ("dense.bias", &self.dense.bias),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut all = self.state_mut();
        all.truncate(NUM_PARAMS);
        all
    }

    /// Non-trainable state saved alongside the parameters.
    pub fn buffers(&self) -> Vec<(&'static str, &[T])> {
        vec![
            ("input.mean", &self.input_mean),
            ("input.std", &self.input_std),
            ("bn1.running_mean", &self.bn1.running_mean),
            ("bn1.running_var", &self.bn1.running_var),
            ("bn2.running_mean", &self.bn2.running_mean),
            ("bn2.running_var", &self.bn2.running_var),
        ]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        self.state_mut().split_off(NUM_PARAMS)
    }

    /// Parameters followed by buffers, matching `params()` then `buffers()`.
    pub fn state_mut(&mut self) -> Vec<&mut [T]> {
        let Self {
            input_mean,
            input_std,
            conv1,
            bn1,
            conv2,
            bn2,
            lstm,
            dense,
            ..
        } = self;
        vec![
            &mut conv1.weight,
            &mut conv1.bias,
            &mut bn1.gamma,
            &mut bn1.beta,
            &mut conv2.weight,
            &mut conv2.bias,
            &mut bn2.gamma,
            &mut bn2.beta,
            &mut lstm.forward.w_ih,
            &mut lstm.forward.w_hh,
            &mut lstm.forward.bias,
            &mut lstm.backward.w_ih,
            &mut lstm.backward.w_hh,
            &mut lstm.backward.bias,
            &mut dense.weight,
            &mut dense.bias,
            input_mean,
            input_std,
            &mut bn1.running_mean,
            &mut bn1.running_var,
            &mut bn2.running_mean,
            &mut bn2.running_var,
        ]
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let a = &self.arch;
        match input.shape.as_slice() {
            [b, t, f] if *t == a.chunk_frames && *f == a.n_features && *b > 0 => Ok(*b),
            other => Err(Error::Shape {
                expected: vec![other.first().copied().unwrap_or(1).max(1), a.chunk_frames, a.n_features],
                actual: other.to_vec(),
            }),
        }
    }

    fn standardize(&self, input: &Tensor<T>) -> Vec<T> {
        let f = self.arch.n_features;
        let mut x = input.data.clone();
        for row in x.chunks_exact_mut(f) {
            for ((v, m), s) in row.iter_mut().zip(&self.input_mean).zip(&self.input_std) {
                *v = (*v - *m) / *s;
            }
        }
        x
    }

    /// Inference: running batch-norm statistics, no dropout. Returns `[B, steps]`.
    pub fn forward_inference(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check_input(input)?;
        let a = &self.arch;
        let [p1, p2] = a.pools();
        let len0 = a.chunk_frames;
        let x = self.standardize(input);
        let mut h = self.bn1.forward_inference(&self.conv1.forward(&x, batch, len0));
        relu_forward(&mut h);
        let (h, _) = p1.forward(&h, batch, len0, a.conv1_filters);
        let len1 = p1.output_len(len0);
        let mut h = self.bn2.forward_inference(&self.conv2.forward(&h, batch, len1));
        relu_forward(&mut h);
        let (h, _) = p2.forward(&h, batch, len1, a.conv2_filters);
        let len2 = p2.output_len(len1);
        let (h, _) = self.lstm.forward(&h, batch, len2);
        let probs = self.dense.forward(&h).into_iter().map(sigmoid).collect();
        Tensor::new(vec![batch, len2], probs)
    }

    pub fn sample_masks<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> DropoutMasks<T> {
        let a = &self.arch;
        let [p1, p2] = a.pools();
        let len1 = p1.output_len(a.chunk_frames);
        let len2 = p2.output_len(len1);
        DropoutMasks {
            block1: dropout_mask(rng, batch * len1 * a.conv1_filters, a.dropout),
            block2: dropout_mask(rng, batch * len2 * a.conv2_filters, a.dropout),
        }
    }

    pub fn forward_train<R: Rng + ?Sized>(&self, input: &Tensor<T>, rng: &mut R) -> Result<ForwardCache<T>> {
        let batch = self.check_input(input)?;
        let masks = self.sample_masks(rng, batch);
        self.forward_train_with_masks(input, masks)
    }

    /// Training-mode forward pass with caller-supplied dropout masks.
    pub fn forward_train_with_masks(&self, input: &Tensor<T>, masks: DropoutMasks<T>) -> Result<ForwardCache<T>> {
        let batch = self.check_input(input)?;
        let a = &self.arch;
        let [p1, p2] = a.pools();
        let len0 = a.chunk_frames;
        let len1 = p1.output_len(len0);
        let len2 = p2.output_len(len1);
        if masks.block1.len() != batch * len1 * a.conv1_filters || masks.block2.len() != batch * len2 * a.conv2_filters {
            return Err(Error::Shape {
                expected: vec![batch * len1 * a.conv1_filters, batch * len2 * a.conv2_filters],
                actual: vec![masks.block1.len(), masks.block2.len()],
            });
        }
        let x = self.standardize(input);
        let conv1_out = self.conv1.forward(&x, batch, len0);
        let (mut relu1, bn1) = self.bn1.forward_train(&conv1_out);
        relu_forward(&mut relu1);
        let (pooled1, pool1_arg) = p1.forward(&relu1, batch, len0, a.conv1_filters);
        let block1: Vec<T> = pooled1.iter().zip(&masks.block1).map(|(&v, &m)| v * m).collect();
        let conv2_out = self.conv2.forward(&block1, batch, len1);
        let (mut relu2, bn2) = self.bn2.forward_train(&conv2_out);
        relu_forward(&mut relu2);
        let (pooled2, pool2_arg) = p2.forward(&relu2, batch, len1, a.conv2_filters);
        let block2: Vec<T> = pooled2.iter().zip(&masks.block2).map(|(&v, &m)| v * m).collect();
        let (lstm_out, lstm) = self.lstm.forward(&block2, batch, len2);
        let logits = self.dense.forward(&lstm_out);
        let probs = logits.iter().map(|&z| sigmoid(z)).collect();
        Ok(ForwardCache {
            batch,
            input: x,
            conv1_out,
            bn1,
            relu1,
            pool1_arg,
            masks,
            block1,
            conv2_out,
            bn2,
            relu2,
            pool2_arg,
            block2,
            lstm,
            lstm_out,
            logits,
            probs,
        })
    }

    /// Mean BCE of the cached logits against `targets` (`[B, steps]`, 0/1).
    pub fn loss(cache: &ForwardCache<T>, targets: &[T]) -> f64 {
        cache
            .logits
            .iter()
            .zip(targets)
            .map(|(z, y)| bce_from_logit(z.as_f64(), y.as_f64()))
            .sum::<f64>()
            / targets.len() as f64
    }

    /// Loss and exact gradients for every trainable parameter, in
    /// [`params`](Self::params) order.
    pub fn backward(&self, cache: &ForwardCache<T>, targets: &[T]) -> Result<(f64, Vec<Vec<T>>)> {
        if targets.len() != cache.logits.len() {
            return Err(Error::Shape {
                expected: vec![cache.logits.len()],
                actual: vec![targets.len()],
            });
        }
        let a = &self.arch;
        let batch = cache.batch;
        let [p1, p2] = a.pools();
        let len0 = a.chunk_frames;
        let len1 = p1.output_len(len0);
        let len2 = p2.output_len(len1);
        let n = T::lit(targets.len() as f64);
        let loss = Self::loss(cache, targets);

        let dlogit: Vec<T> = cache.probs.iter().zip(targets).map(|(&p, &y)| (p - y) / n).collect();
        let (g_dense, d_lstm_out) = self.dense.backward(&cache.lstm_out, &dlogit);
        let (g_lstm, d_block2) = self.lstm.backward(&cache.lstm, &cache.block2, &d_lstm_out, batch, len2);
        let d_pooled2: Vec<T> = d_block2.iter().zip(&cache.masks.block2).map(|(&d, &m)| d * m).collect();
        let mut d_relu2 = MaxPool1d::backward(&cache.pool2_arg, &d_pooled2, cache.relu2.len());
        relu_backward(&cache.relu2, &mut d_relu2);
        let (g_gamma2, g_beta2, d_conv2) = self.bn2.backward(&cache.bn2, &d_relu2);
        let (g_conv2, d_block1) = self.conv2.backward(&cache.block1, &d_conv2, batch, len1, true);
        let d_block1 = d_block1.expect("requested input gradient");
        let d_pooled1: Vec<T> = d_block1.iter().zip(&cache.masks.block1).map(|(&d, &m)| d * m).collect();
        let mut d_relu1 = MaxPool1d::backward(&cache.pool1_arg, &d_pooled1, cache.relu1.len());
        relu_backward(&cache.relu1, &mut d_relu1);
        let (g_gamma1, g_beta1, d_conv1) = self.bn1.backward(&cache.bn1, &d_relu1);
        let (g_conv1, _) = self.conv1.backward(&cache.input, &d_conv1, batch, len0, false);
        debug_assert_eq!(cache.conv1_out.len(), d_conv1.len());
        debug_assert_eq!(cache.conv2_out.len(), d_conv2.len());

        Ok((
            loss,
            vec![
                g_conv1.weight,
                g_conv1.bias,
                g_gamma1,
                g_beta1,
                g_conv2.weight,
                g_conv2.bias,
                g_gamma2,
                g_beta2,
                g_lstm.forward.w_ih,
                g_lstm.forward.w_hh,
                g_lstm.forward.bias,
                g_lstm.backward.w_ih,
                g_lstm.backward.w_hh,
                g_lstm.backward.bias,
                g_dense.weight,
                g_dense.bias,
            ],
        ))
    }

    /// Folds a training batch's statistics into the batch-norm running averages.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        self.bn1.update_running(&cache.bn1);
        self.bn2.update_running(&cache.bn2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_arch() -> ArchConfig {
        ArchConfig {
            n_features: 6,
            chunk_frames: 40,
            lstm_hidden: 4,
            conv1_filters: 3,
            conv2_filters: 2,
            ..Default::default()
        }
    }

    fn random_input(b: usize, arch: &ArchConfig, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = b * arch.chunk_frames * arch.n_features;
        Tensor::new(
            vec![b, arch.chunk_frames, arch.n_features],
            (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_geometry() {
        let a = ArchConfig::default();
        assert_eq!(a.output_steps(), 40);
        assert_eq!(a.frames_per_step(), 20);
        assert_eq!(toy_arch().output_steps(), 2);
    }

    #[test]
    fn zero_head_outputs_half() {
        let mut m = BreathDetector::<f32>::new(ArchConfig::default(), 1).unwrap();
        m.dense.weight.fill(0.0);
        let x = Tensor::zeros(vec![32, 800, 130]);
        let p = m.forward_inference(&x).unwrap();
        assert_eq!(p.shape, vec![32, 40]);
        assert!(p.data.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let m = BreathDetector::<f64>::new(toy_arch(), 3).unwrap();
        let one = random_input(1, &toy_arch(), 5);
        let mut data = one.data.clone();
        data.extend_from_slice(&one.data);
        let two = Tensor::new(vec![2, 40, 6], data).unwrap();
        let p = m.forward_inference(&two).unwrap();
        assert_eq!(p.data[..2], p.data[2..]);
        assert!(p.data.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn shape_error_names_dimensions() {
        let m = BreathDetector::<f32>::new(ArchConfig::default(), 1).unwrap();
        let err = m.forward_inference(&Tensor::zeros(vec![2, 799, 130])).unwrap_err();
        match err {
            Error::Shape { expected, actual } => {
                assert_eq!(expected, vec![2, 800, 130]);
                assert_eq!(actual, vec![2, 799, 130]);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bce_reference_values() {
        assert!((bce_loss(&[0.5; 8], &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0]) - 2f64.ln()).abs() < 1e-12);
        assert!((bce_loss(&[0.9], &[1.0]) - 0.10536051565782628).abs() < 1e-12);
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]) < 1e-6);
        assert!((bce_from_logit(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn balanced_zero_head_bias_gradient_vanishes() {
        let mut m = BreathDetector::<f64>::new(toy_arch(), 2).unwrap();
        m.dense.weight.fill(0.0);
        let x = random_input(2, &toy_arch(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = m.forward_train(&x, &mut rng).unwrap();
        let (_, grads) = m.backward(&cache, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(grads[15], vec![0.0]);
    }

    #[test]
    fn fixed_seed_backward_is_deterministic() {
        let m = BreathDetector::<f64>::new(toy_arch(), 2).unwrap();
        let x = random_input(2, &toy_arch(), 9);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let cache = m.forward_train(&x, &mut rng).unwrap();
            m.backward(&cache, &[1.0, 0.0, 1.0, 1.0]).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn inference_is_repeatable() {
        let m = BreathDetector::<f32>::new(toy_arch(), 4).unwrap();
        let x = random_input(3, &toy_arch(), 1).cast::<f32>();
        assert_eq!(m.forward_inference(&x).unwrap(), m.forward_inference(&x).unwrap());
    }

    #[test]
    fn composed_gradients_match_finite_differences() {
        let arch = toy_arch();
        for draw in 0..3u64 {
            let m = BreathDetector::<f64>::new(arch.clone(), draw).unwrap();
            let x = random_input(2, &arch, 100 + draw);
            let mut rng = ChaCha8Rng::seed_from_u64(draw);
            let masks = m.sample_masks(&mut rng, 2);
            let y = [1.0, 0.0, 0.0, 1.0];
            let cache = m.forward_train_with_masks(&x, masks.clone()).unwrap();
            let (_, grads) = m.backward(&cache, &y).unwrap();
            let h = 1e-6;
            for (pi, g) in grads.iter().enumerate() {
                for i in 0..g.len() {
                    let eval = |delta: f64| {
                        let mut mm = m.clone();
                        mm.params_mut()[pi][i] += delta;
                        let c = mm.forward_train_with_masks(&x, masks.clone()).unwrap();
                        BreathDetector::loss(&c, &y)
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let err = (g[i] - fd).abs() / g[i].abs().max(1.0);
                    assert!(err < 1e-4, "{} [{i}]: analytic {} fd {fd}", m.params()[pi].0, g[i]);
                }
            }
        }
    }
}
