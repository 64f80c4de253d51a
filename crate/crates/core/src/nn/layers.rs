use rand::Rng;

use super::{sigmoid, Float};

fn uniform<T: Float, R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
}

fn cast_vec<T: Float, U: Float>(v: &[T]) -> Vec<U> {
    v.iter().map(|x| U::lit(x.as_f64())).collect()
}

/// Eight independent partial sums so the compiler can vectorize.
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn axpy<T: Float>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// 1-D convolution with "same" zero padding; weights are `[out][kernel][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Float> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let bound = 1.0 / ((in_channels * kernel) as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: uniform(rng, out_channels * kernel * in_channels, bound),
            bias: uniform(rng, out_channels, bound),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: vec![T::zero(); self.weight.len()],
            bias: vec![T::zero(); self.bias.len()],
            ..*self
        }
    }

    pub fn cast<U: Float>(&self) -> Conv1d<U> {
        Conv1d {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            weight: cast_vec(&self.weight),
            bias: cast_vec(&self.bias),
        }
    }

    pub fn forward(&self, x: &[T], batch: usize, len: usize) -> Vec<T> {
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        let pad = k / 2;
        let mut y = vec![T::zero(); batch * len * co];
        for b in 0..batch {
            for t in 0..len {
                let out = &mut y[(b * len + t) * co..(b * len + t + 1) * co];
                out.copy_from_slice(&self.bias);
                for j in 0..k {
                    let Some(tt) = (t + j).checked_sub(pad).filter(|&tt| tt < len) else {
                        continue;
                    };
                    let xrow = &x[(b * len + tt) * ci..(b * len + tt + 1) * ci];
                    for (o, yo) in out.iter_mut().enumerate() {
                        *yo += dot(&self.weight[(o * k + j) * ci..(o * k + j + 1) * ci], xrow);
                    }
                }
            }
        }
        y
    }

    /// Returns parameter gradients and, when requested, the input gradient.
    pub fn backward(&self, x: &[T], dy: &[T], batch: usize, len: usize, input_grad: bool) -> (Self, Option<Vec<T>>) {
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        let pad = k / 2;
        let mut g = self.zeros_like();
        let mut dx = input_grad.then(|| vec![T::zero(); x.len()]);
        for b in 0..batch {
            for t in 0..len {
                let dyr = &dy[(b * len + t) * co..(b * len + t + 1) * co];
                for (gb, &d) in g.bias.iter_mut().zip(dyr) {
                    *gb += d;
                }
                for j in 0..k {
                    let Some(tt) = (t + j).checked_sub(pad).filter(|&tt| tt < len) else {
                        continue;
                    };
                    let xs = (b * len + tt) * ci..(b * len + tt + 1) * ci;
                    for (o, &d) in dyr.iter().enumerate() {
                        if d == T::zero() {
                            continue;
                        }
                        let w = (o * k + j) * ci..(o * k + j + 1) * ci;
                        axpy(d, &x[xs.clone()], &mut g.weight[w.clone()]);
                        if let Some(dx) = dx.as_mut() {
                            axpy(d, &self.weight[w], &mut dx[xs.clone()]);
                        }
                    }
                }
            }
        }
        (g, dx)
    }
}

/// Per-channel batch normalization over the batch and time axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl<T: Float> BatchNorm1d<T> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps,
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn cast<U: Float>(&self) -> BatchNorm1d<U> {
        BatchNorm1d {
            gamma: cast_vec(&self.gamma),
            beta: cast_vec(&self.beta),
            running_mean: cast_vec(&self.running_mean),
            running_var: cast_vec(&self.running_var),
            eps: self.eps,
            momentum: self.momentum,
        }
    }

    /// Normalizes with batch statistics (biased variance, f64 accumulation).
    pub fn forward_train(&self, x: &[T]) -> (Vec<T>, BatchNormCache<T>) {
        let c = self.channels();
        let n = x.len() / c;
        let mut mean = vec![0.0f64; c];
        for row in x.chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; c];
        for row in x.chunks_exact(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v.as_f64() - m).powi(2);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<T> = var.iter().map(|v| T::lit(1.0 / (v + self.eps).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::lit(m)).collect();
        let mut xhat = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        for ((xr, hr), yr) in x.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(y.chunks_exact_mut(c)) {
            for ch in 0..c {
                let h = (xr[ch] - mean_t[ch]) * inv_std[ch];
                hr[ch] = h;
                yr[ch] = self.gamma[ch] * h + self.beta[ch];
            }
        }
        (y, BatchNormCache { xhat, inv_std, mean, var })
    }

    pub fn forward_inference(&self, x: &[T]) -> Vec<T> {
        let c = self.channels();
        let scale: Vec<T> = (0..c)
            .map(|ch| self.gamma[ch] / (self.running_var[ch] + T::lit(self.eps)).sqrt())
            .collect();
        let mut y = x.to_vec();
        for row in y.chunks_exact_mut(c) {
            for ch in 0..c {
                row[ch] = (row[ch] - self.running_mean[ch]) * scale[ch] + self.beta[ch];
            }
        }
        y
    }

    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let m = self.momentum;
        for ch in 0..self.channels() {
            let rm = self.running_mean[ch].as_f64();
            let rv = self.running_var[ch].as_f64();
            self.running_mean[ch] = T::lit((1.0 - m) * rm + m * cache.mean[ch]);
            self.running_var[ch] = T::lit((1.0 - m) * rv + m * cache.var[ch]);
        }
    }

    /// Returns (dgamma, dbeta, dx) through the batch statistics.
    pub fn backward(&self, cache: &BatchNormCache<T>, dy: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let c = self.channels();
        let n = dy.len() / c;
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for (dr, hr) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                dgamma[ch] += (dr[ch] * hr[ch]).as_f64();
                dbeta[ch] += dr[ch].as_f64();
            }
        }
        // dxhat = dy * gamma; sums of dxhat and dxhat*xhat follow from dbeta/dgamma
        let mut dx = vec![T::zero(); dy.len()];
        for ((dr, hr), xr) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)).zip(dx.chunks_exact_mut(c)) {
            for ch in 0..c {
                let g = self.gamma[ch].as_f64();
                let dxhat = dr[ch].as_f64() * g;
                let v = (n as f64 * dxhat - g * dbeta[ch] - hr[ch].as_f64() * g * dgamma[ch])
                    * cache.inv_std[ch].as_f64()
                    / n as f64;
                xr[ch] = T::lit(v);
            }
        }
        (
            dgamma.into_iter().map(T::lit).collect(),
            dbeta.into_iter().map(T::lit).collect(),
            dx,
        )
    }
}

pub fn relu_forward<T: Float>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Backward through ReLU given the activated output.
pub fn relu_backward<T: Float>(out: &[T], dy: &mut [T]) {
    for (d, &o) in dy.iter_mut().zip(out) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}

/// Max pooling over time with independent window size and stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub size: usize,
    pub stride: usize,
}

impl MaxPool1d {
    pub fn output_len(&self, len: usize) -> usize {
        if len < self.size {
            0
        } else {
            (len - self.size) / self.stride + 1
        }
    }

    /// Returns pooled values and the flat input index chosen for each output.
    pub fn forward<T: Float>(&self, x: &[T], batch: usize, len: usize, channels: usize) -> (Vec<T>, Vec<usize>) {
        let out_len = self.output_len(len);
        let mut y = Vec::with_capacity(batch * out_len * channels);
        let mut arg = Vec::with_capacity(y.capacity());
        for b in 0..batch {
            for t in 0..out_len {
                for c in 0..channels {
                    let mut best = (b * len + t * self.stride) * channels + c;
                    for j in 1..self.size {
                        let idx = (b * len + t * self.stride + j) * channels + c;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    y.push(x[best]);
                    arg.push(best);
                }
            }
        }
        (y, arg)
    }

    pub fn backward<T: Float>(argmax: &[usize], dy: &[T], input_len: usize) -> Vec<T> {
        let mut dx = vec![T::zero(); input_len];
        for (&i, &d) in argmax.iter().zip(dy) {
            dx[i] += d;
        }
        dx
    }
}

/// Inverted dropout mask: entries are 0 or `1 / (1 - rate)`.
pub fn dropout_mask<T: Float, R: Rng + ?Sized>(rng: &mut R, n: usize, rate: f64) -> Vec<T> {
    if rate <= 0.0 {
        return vec![T::one(); n];
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

/// One direction of an LSTM; gates are stacked `[input, forget, cell, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection<T> {
    pub w_ih: Vec<T>,
    pub w_hh: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    /// Per (batch, step) in processing order: i, f, g, o, c, tanh(c).
    gates: Vec<T>,
    /// Hidden states `[batch, step + 1, hidden]` with a zero initial state.
    h: Vec<T>,
    /// Cell states, same layout as `h`.
    c: Vec<T>,
}

/// Bidirectional LSTM; output at step t is `[h_forward(t), h_backward(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm<T> {
    pub input: usize,
    pub hidden: usize,
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

impl<T: Float> LstmDirection<T> {
    fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = vec![T::zero(); 4 * hidden];
        bias[hidden..2 * hidden].fill(T::one());
        Self {
            w_ih: uniform(rng, 4 * hidden * input, bound),
            w_hh: uniform(rng, 4 * hidden * hidden, bound),
            bias,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w_ih: vec![T::zero(); self.w_ih.len()],
            w_hh: vec![T::zero(); self.w_hh.len()],
            bias: vec![T::zero(); self.bias.len()],
        }
    }

    fn cast<U: Float>(&self) -> LstmDirection<U> {
        LstmDirection {
            w_ih: cast_vec(&self.w_ih),
            w_hh: cast_vec(&self.w_hh),
            bias: cast_vec(&self.bias),
        }
    }

    /// Runs over `x` (`[batch, len, input]`) in the given order and writes
    /// hidden states into `out` at channel offset `offset` of width `2*hidden`.
    fn run(&self, x: &[T], batch: usize, len: usize, input: usize, hidden: usize, reverse: bool, out: &mut [T], offset: usize) -> LstmCache<T> {
        let h4 = 4 * hidden;
        let mut gates = vec![T::zero(); batch * len * 6 * hidden];
        let mut hs = vec![T::zero(); batch * (len + 1) * hidden];
        let mut cs = vec![T::zero(); batch * (len + 1) * hidden];
        let mut z = vec![T::zero(); h4];
        for b in 0..batch {
            for s in 0..len {
                let t = if reverse { len - 1 - s } else { s };
                let xt = &x[(b * len + t) * input..(b * len + t + 1) * input];
                let hp = (b * (len + 1) + s) * hidden;
                let h_prev = hs[hp..hp + hidden].to_vec();
                for (r, zr) in z.iter_mut().enumerate() {
                    *zr = self.bias[r]
                        + dot(&self.w_ih[r * input..(r + 1) * input], xt)
                        + dot(&self.w_hh[r * hidden..(r + 1) * hidden], &h_prev);
                }
                let gb = (b * len + s) * 6 * hidden;
                let hn = (b * (len + 1) + s + 1) * hidden;
                for u in 0..hidden {
                    let i = sigmoid(z[u]);
                    let f = sigmoid(z[hidden + u]);
                    let g = z[2 * hidden + u].tanh();
                    let o = sigmoid(z[3 * hidden + u]);
                    let c = f * cs[hp + u] + i * g;
                    let tc = c.tanh();
                    let h = o * tc;
                    gates[gb + u] = i;
                    gates[gb + hidden + u] = f;
                    gates[gb + 2 * hidden + u] = g;
                    gates[gb + 3 * hidden + u] = o;
                    gates[gb + 4 * hidden + u] = c;
                    gates[gb + 5 * hidden + u] = tc;
                    cs[hn + u] = c;
                    hs[hn + u] = h;
                    out[(b * len + t) * 2 * hidden + offset + u] = h;
                }
            }
        }
        LstmCache { gates, h: hs, c: cs }
    }

    /// Backpropagation through time; accumulates into `dx`.
    #[allow(clippy::too_many_arguments)]
    fn backprop(&self, cache: &LstmCache<T>, x: &[T], dout: &[T], batch: usize, len: usize, input: usize, hidden: usize, reverse: bool, offset: usize, dx: &mut [T]) -> Self {
        let mut g = self.zeros_like();
        let mut dz = vec![T::zero(); 4 * hidden];
        let mut dh_next = vec![T::zero(); hidden];
        let mut dc_next = vec![T::zero(); hidden];
        let one = T::one();
        for b in 0..batch {
            dh_next.fill(T::zero());
            dc_next.fill(T::zero());
            for s in (0..len).rev() {
                let t = if reverse { len - 1 - s } else { s };
                let gb = (b * len + s) * 6 * hidden;
                let hp = (b * (len + 1) + s) * hidden;
                for u in 0..hidden {
                    let i = cache.gates[gb + u];
                    let f = cache.gates[gb + hidden + u];
                    let gg = cache.gates[gb + 2 * hidden + u];
                    let o = cache.gates[gb + 3 * hidden + u];
                    let tc = cache.gates[gb + 5 * hidden + u];
                    let dh = dout[(b * len + t) * 2 * hidden + offset + u] + dh_next[u];
                    let d_o = dh * tc;
                    let dc = dh * o * (one - tc * tc) + dc_next[u];
                    let di = dc * gg;
                    let dg = dc * i;
                    let df = dc * cache.c[hp + u];
                    dc_next[u] = dc * f;
                    dz[u] = di * i * (one - i);
                    dz[hidden + u] = df * f * (one - f);
                    dz[2 * hidden + u] = dg * (one - gg * gg);
                    dz[3 * hidden + u] = d_o * o * (one - o);
                }
                let xs = (b * len + t) * input..(b * len + t + 1) * input;
                let h_prev = &cache.h[hp..hp + hidden];
                dh_next.fill(T::zero());
                for (r, &d) in dz.iter().enumerate() {
                    g.bias[r] += d;
                    axpy(d, &x[xs.clone()], &mut g.w_ih[r * input..(r + 1) * input]);
                    axpy(d, h_prev, &mut g.w_hh[r * hidden..(r + 1) * hidden]);
                    axpy(d, &self.w_ih[r * input..(r + 1) * input], &mut dx[xs.clone()]);
                    axpy(d, &self.w_hh[r * hidden..(r + 1) * hidden], &mut dh_next);
                }
            }
        }
        g
    }
}

impl<T: Float> BiLstm<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input,
            hidden,
            forward: LstmDirection::new(input, hidden, rng),
            backward: LstmDirection::new(input, hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            forward: self.forward.zeros_like(),
            backward: self.backward.zeros_like(),
            ..*self
        }
    }

    pub fn cast<U: Float>(&self) -> BiLstm<U> {
        BiLstm {
            input: self.input,
            hidden: self.hidden,
            forward: self.forward.cast(),
            backward: self.backward.cast(),
        }
    }

    pub fn forward(&self, x: &[T], batch: usize, len: usize) -> (Vec<T>, [LstmCache<T>; 2]) {
        let mut out = vec![T::zero(); batch * len * 2 * self.hidden];
        let f = self.forward.run(x, batch, len, self.input, self.hidden, false, &mut out, 0);
        let b = self.backward.run(x, batch, len, self.input, self.hidden, true, &mut out, self.hidden);
        (out, [f, b])
    }

    pub fn backward(&self, caches: &[LstmCache<T>; 2], x: &[T], dout: &[T], batch: usize, len: usize) -> (Self, Vec<T>) {
        let mut dx = vec![T::zero(); x.len()];
        let gf = self.forward.backprop(&caches[0], x, dout, batch, len, self.input, self.hidden, false, 0, &mut dx);
        let gb = self.backward.backprop(&caches[1], x, dout, batch, len, self.input, self.hidden, true, self.hidden, &mut dx);
        (
            Self {
                forward: gf,
                backward: gb,
                ..*self
            },
            dx,
        )
    }
}

/// Per-step linear head producing one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Float> Dense<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, rng: &mut R) -> Self {
        Self {
            weight: uniform(rng, input, 1.0 / (input as f64).sqrt()),
            bias: vec![T::zero()],
        }
    }

    pub fn cast<U: Float>(&self) -> Dense<U> {
        Dense {
            weight: cast_vec(&self.weight),
            bias: cast_vec(&self.bias),
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        x.chunks_exact(self.weight.len())
            .map(|row| dot(&self.weight, row) + self.bias[0])
            .collect()
    }

    pub fn backward(&self, x: &[T], dlogit: &[T]) -> (Self, Vec<T>) {
        let d = self.weight.len();
        let mut g = Dense {
            weight: vec![T::zero(); d],
            bias: vec![T::zero()],
        };
        let mut dx = vec![T::zero(); x.len()];
        for ((row, drow), &dl) in x.chunks_exact(d).zip(dx.chunks_exact_mut(d)).zip(dlogit) {
            g.bias[0] += dl;
            axpy(dl, row, &mut g.weight);
            axpy(dl, &self.weight, drow);
        }
        (g, dx)
    }
}
