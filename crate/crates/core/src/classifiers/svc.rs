//! Soft-margin C-SVC with a polynomial kernel, fitted by SMO with
//! second-order working-set selection.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_samples, Class, LabeledSample};
use crate::breath_stats::BreathStats;
use crate::container;
use crate::error::{Error, Result};

pub const SVC_VERSION: &str = "breathline-svc/1";
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvcConfig {
    pub c: f64,
    pub degree: u32,
    /// `None` uses 1 / (n_features * variance of the standardized training features).
    pub gamma: Option<f64>,
    pub coef0: f64,
    /// Stop when the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvcConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            degree: 2,
            gamma: None,
            coef0: 1.0,
            tol: 1e-6,
            max_iter: 10_000_000,
        }
    }
}

impl SvcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config("SVC C must be positive".into()));
        }
        if self.degree == 0 {
            return Err(Error::Config("SVC degree must be at least 1".into()));
        }
        if self.gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Config("SVC gamma must be positive".into()));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("SVC tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// `(gamma * <x, z> + coef0) ^ degree`
pub fn polynomial_kernel(x: &[f64], z: &[f64], gamma: f64, coef0: f64, degree: u32) -> f64 {
    let dot: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
    (gamma * dot + coef0).powi(degree as i32)
}

/// Per-feature standardization; zero-variance features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Solution of `max sum(a) - 1/2 a'Qa` s.t. `0 <= a <= C`, `y'a = 0`,
/// with `Q_ij = y_i y_j K_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvcSolution {
    pub alpha: Vec<f64>,
    /// Decision values are `sum(a_i y_i K(x_i, x)) - rho`.
    pub rho: f64,
    pub dual_objective: f64,
    /// Maximal KKT violation at termination.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// SMO on a precomputed kernel matrix; `y` holds +1/-1.
pub fn solve_dual(kernel: &[Vec<f64>], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<SvcSolution> {
    let n = y.len();
    if kernel.len() != n || kernel.iter().any(|r| r.len() != n) {
        return Err(Error::Shape {
            expected: vec![n, n],
            actual: vec![kernel.len(), kernel.first().map_or(0, Vec::len)],
        });
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::Training("SVC needs samples of both classes".into()));
    }
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let kkt_residual = loop {
        // i maximizes -y G over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let up = if y[t] > 0.0 { !is_upper(alpha[t]) } else { !is_lower(alpha[t]) };
            if up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        // j over I_low by second-order gain; gmax2 tracks max y G there
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let low = if y[t] > 0.0 { !is_lower(alpha[t]) } else { !is_upper(alpha[t]) };
            if !low {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            if let Some(i) = i_sel {
                let b = gmax + yg;
                if b > 0.0 {
                    let a = kernel[i][i] + kernel[t][t] - 2.0 * kernel[i][t];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= best {
                        best = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let residual = gmax + gmax2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break residual.max(0.0);
        };
        if residual < tol {
            break residual;
        }
        if iterations >= max_iter {
            return Err(Error::Training(format!(
                "SMO did not converge in {max_iter} iterations (violation {residual:e})"
            )));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j];
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j];
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    };

    // rho: mean of y G over free vectors, else midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let dual_objective = dual_objective(kernel, y, &alpha);
    Ok(SvcSolution {
        alpha,
        rho,
        dual_objective,
        kkt_residual,
        iterations,
    })
}

/// `sum(a) - 1/2 a'Qa`
pub fn dual_objective(kernel: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcModel {
    pub config: SvcConfig,
    /// Resolved kernel scale.
    pub gamma: f64,
    pub scaler: Scaler,
    /// Standardized support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector, within `[-C, C]`.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub dual_objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl SvcModel {
    pub fn train(samples: &[LabeledSample], config: &SvcConfig) -> Result<Self> {
        check_samples(samples)?;
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.stats.to_array().to_vec()).collect();
        let y: Vec<f64> = samples.iter().map(|s| s.label.sign()).collect();
        Self::fit(&rows, &y, config)
    }

    /// Fits on raw feature rows with +1 (real) / -1 (fake) targets.
    pub fn fit(rows: &[Vec<f64>], y: &[f64], config: &SvcConfig) -> Result<Self> {
        config.validate()?;
        if rows.len() != y.len() || rows.is_empty() {
            return Err(Error::Input(format!("{} rows but {} targets", rows.len(), y.len())));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Input("SVC rows must share a non-zero width".into()));
        }
        let scaler = Scaler::fit(rows);
        let z: Vec<Vec<f64>> = rows.iter().map(|r| scaler.transform(r)).collect();
        let gamma = config.gamma.unwrap_or_else(|| {
            let all: Vec<f64> = z.iter().flatten().copied().collect();
            let m = all.iter().sum::<f64>() / all.len() as f64;
            let var = all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / all.len() as f64;
            if var > 0.0 {
                1.0 / (d as f64 * var)
            } else {
                1.0
            }
        });
        let kernel: Vec<Vec<f64>> = z
            .iter()
            .map(|a| z.iter().map(|b| polynomial_kernel(a, b, gamma, config.coef0, config.degree)).collect())
            .collect();
        let sol = solve_dual(&kernel, y, config.c, config.tol, config.max_iter)?;
        let mut support_vectors = Vec::new();
        let mut dual_coef = Vec::new();
        for (i, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(z[i].clone());
                dual_coef.push(a * y[i]);
            }
        }
        Ok(Self {
            config: config.clone(),
            gamma,
            scaler,
            support_vectors,
            dual_coef,
            bias: -sol.rho,
            dual_objective: sol.dual_objective,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
        })
    }

    pub fn num_features(&self) -> usize {
        self.scaler.mean.len()
    }

    /// Decision value on raw features; positive means real.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform(x);
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * polynomial_kernel(sv, &z, self.gamma, self.config.coef0, self.config.degree))
            .sum::<f64>()
            + self.bias
    }

    pub fn score(&self, stats: &BreathStats) -> f64 {
        self.decision(&stats.to_array())
    }

    pub fn classify(&self, stats: &BreathStats) -> Class {
        Class::from_real(self.score(stats) > 0.0)
    }

    fn header(&self) -> serde_json::Value {
        json!({
            "version": SVC_VERSION,
            "kernel": "poly",
            "config": self.config,
            "gamma": self.gamma,
            "bias": self.bias,
            "n_features": self.num_features(),
            "n_support": self.support_vectors.len(),
            "dual_objective": self.dual_objective,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "layout": ["scaler.mean", "scaler.std", "support_vectors", "dual_coef"],
        })
    }

    fn payload(&self) -> Vec<f64> {
        let mut p = self.scaler.mean.clone();
        p.extend(&self.scaler.std);
        p.extend(self.support_vectors.iter().flatten());
        p.extend(&self.dual_coef);
        p
    }

    /// JSON header plus f64 payload holding the scaler, support vectors and coefficients.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_f64(path, &self.header(), &self.payload())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (h, p) = container::read_f64(path)?;
        Self::from_parts(h, p)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        container::encode_f64(&self.header(), &self.payload())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, p) = container::decode_f64(bytes)?;
        Self::from_parts(h, p)
    }

    fn from_parts(h: serde_json::Value, p: Vec<f64>) -> Result<Self> {
        let version = h["version"].as_str().unwrap_or_default();
        if version != SVC_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version.to_string(),
                expected: SVC_VERSION.to_string(),
            });
        }
        let field = |k: &str| h[k].as_f64().ok_or_else(|| Error::Format(format!("SVC header lacks {k}")));
        let count = |k: &str| {
            h[k].as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format(format!("SVC header lacks {k}")))
        };
        let config: SvcConfig = serde_json::from_value(h["config"].clone())?;
        let d = count("n_features")?;
        let n = count("n_support")?;
        if p.len() != 2 * d + n * d + n {
            return Err(Error::Format(format!(
                "SVC payload holds {} values, expected {}",
                p.len(),
                2 * d + n * d + n
            )));
        }
        let (mean, rest) = p.split_at(d);
        let (std, rest) = rest.split_at(d);
        let (svs, coef) = rest.split_at(n * d);
        Ok(Self {
            config,
            gamma: field("gamma")?,
            scaler: Scaler {
                mean: mean.to_vec(),
                std: std.to_vec(),
            },
            support_vectors: svs.chunks(d.max(1)).map(<[f64]>::to_vec).collect(),
            dual_coef: coef.to_vec(),
            bias: field("bias")?,
            dual_objective: field("dual_objective")?,
            kkt_residual: field("kkt_residual")?,
            iterations: count("iterations")?,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Projection onto `{0 <= a <= C, y'a = 0}` by bisection on the multiplier.
    fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
        let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(a, b)| (a - lam * b).clamp(0.0, c)).collect() };
        let h = |lam: f64| at(lam).iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    }

    /// Accelerated projected gradient on the dense dual.
    pub(crate) fn qp_oracle(kernel: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
        let n = y.len();
        let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * kernel[i][j]).collect()).collect();
        let lip: f64 = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let step = 1.0 / lip.max(1e-12);
        let mut a = vec![0.0; n];
        let mut w = a.clone();
        let mut t = 1.0f64;
        for _ in 0..20_000 {
            let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * w[j]).sum::<f64>() - 1.0).collect();
            let v: Vec<f64> = (0..n).map(|i| w[i] - step * g[i]).collect();
            let next = project(&v, y, c);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            w = (0..n).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - a[i])).collect();
            a = next;
            t = t_next;
        }
        dual_objective(kernel, y, &a)
    }

    pub(crate) fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        loop {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            if y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0) {
                return (rows, y);
            }
        }
    }

    fn kernel_of(m: &SvcModel, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let z: Vec<Vec<f64>> = rows.iter().map(|r| m.scaler.transform(r)).collect();
        z.iter()
            .map(|a| z.iter().map(|b| polynomial_kernel(a, b, m.gamma, m.config.coef0, m.config.degree)).collect())
            .collect()
    }

    #[test]
    fn kernel_value() {
        assert_eq!(polynomial_kernel(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 1.0, 1.0, 2), 4.0);
    }

    #[test]
    fn separable_four_points() {
        let rows = vec![vec![10.0, 400.0, 3000.0], vec![12.0, 450.0, 3500.0], vec![0.0; 3], vec![0.5, 20.0, 100.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let m = SvcModel::fit(&rows, &y, &SvcConfig::default()).unwrap();
        for (r, &t) in rows.iter().zip(&y) {
            assert!(t * m.decision(r) >= 1.0 - 1e-6, "margin {}", t * m.decision(r));
        }
        assert!(m.kkt_residual < 1e-6);
        assert!(m.dual_coef.iter().all(|c| c.abs() <= 1.0));
        assert!(m.score(&BreathStats::new(10.0, 400.0, 3000.0)) > 0.0);
    }

    #[test]
    fn six_points_match_qp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for coef0 in [0.0, 1.0] {
            let (rows, y) = random_dataset(&mut rng, 6);
            let cfg = SvcConfig { coef0, ..SvcConfig::default() };
            let m = SvcModel::fit(&rows, &y, &cfg).unwrap();
            let oracle = qp_oracle(&kernel_of(&m, &rows), &y, cfg.c);
            assert!((m.dual_objective - oracle).abs() < 1e-5, "{} vs {oracle}", m.dual_objective);
        }
    }

    #[test]
    fn scale_gamma_is_one_third_for_three_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rows, y) = random_dataset(&mut rng, 8);
        let m = SvcModel::fit(&rows, &y, &SvcConfig::default()).unwrap();
        assert!((m.gamma - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_set_scores_mean_near_zero() {
        let rows = vec![vec![1.0, 2.0, 0.5], vec![2.0, 1.0, 1.5], vec![-1.0, -2.0, -0.5], vec![-2.0, -1.0, -1.5]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let m = SvcModel::fit(&rows, &y, &SvcConfig::default()).unwrap();
        assert!(m.decision(&[0.0, 0.0, 0.0]).abs() < 1e-6);
    }

    #[test]
    fn duplicated_samples_with_half_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (rows, y) = random_dataset(&mut rng, 8);
        let cfg = SvcConfig::default();
        let a = SvcModel::fit(&rows, &y, &cfg).unwrap();
        let rows2: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        let b = SvcModel::fit(&rows2, &y2, &SvcConfig { c: cfg.c / 2.0, ..cfg }).unwrap();
        for i in -4..=4 {
            for j in -4..=4 {
                let p = [i as f64 * 0.5, j as f64 * 0.5, 0.3];
                let (da, db) = (a.decision(&p), b.decision(&p));
                assert!((da - db).abs() < 1e-4 * (1.0 + da.abs()), "{da} vs {db}");
            }
        }
    }

    #[test]
    fn classify_is_sign_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (rows, y) = random_dataset(&mut rng, 8);
        let m = SvcModel::fit(&rows, &y, &SvcConfig::default()).unwrap();
        for _ in 0..1000 {
            let s = BreathStats::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            assert_eq!(m.classify(&s).is_real(), m.score(&s) > 0.0);
        }
        let back = SvcModel::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn single_class_rejected() {
        let err = SvcModel::fit(&[vec![1.0], vec![2.0]], &[1.0, 1.0], &SvcConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }
}
