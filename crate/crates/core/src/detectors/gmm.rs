//! Two-component 1-D Gaussian mixture fitted by expectation maximization.

use crate::heatmap::percentile;

pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Fitted mixture. Component 0 has the larger mean.
#[derive(Clone, Debug)]
pub struct GmmFit {
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Mixing weight of component 0.
    pub weight: f64,
    /// Mean per-sample log-likelihood after each iteration.
    pub ll_trace: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct EmConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6 }
    }
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

impl GmmFit {
    pub fn pooled_std(&self) -> f64 {
        (self.weight * self.variances[0] + (1.0 - self.weight) * self.variances[1]).sqrt()
    }

    /// The components are too close to separate two populations.
    pub fn is_degenerate(&self) -> bool {
        (self.means[0] - self.means[1]).abs() < 0.1 * self.pooled_std()
    }

    /// Posterior probabilities `[p0, p1]` of the two components for `x`.
    pub fn posterior(&self, x: f64) -> [f64; 2] {
        let l0 = self.weight.max(f64::MIN_POSITIVE).ln() + log_normal(x, self.means[0], self.variances[0]);
        let l1 = (1.0 - self.weight).max(f64::MIN_POSITIVE).ln() + log_normal(x, self.means[1], self.variances[1]);
        let m = l0.max(l1);
        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
        [(l0 - lse).exp(), (l1 - lse).exp()]
    }
}

/// Quantile-initialized EM: means at the 75th/25th percentiles, equal weights, one shared
/// starting variance.
pub fn fit_gmm2(values: &[f64], cfg: &EmConfig) -> GmmFit {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var0 = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);
    let mut fit = GmmFit {
        means: [percentile(values, 75.0), percentile(values, 25.0)],
        variances: [var0, var0],
        weight: 0.5,
        ll_trace: Vec::new(),
    };
    if values.is_empty() {
        return fit;
    }
    let mut resp = vec![0.0; values.len()];
    for _ in 0..cfg.max_iter {
        // E step
        let mut ll = 0.0;
        let lw0 = fit.weight.max(f64::MIN_POSITIVE).ln();
        let lw1 = (1.0 - fit.weight).max(f64::MIN_POSITIVE).ln();
        for (r, &x) in resp.iter_mut().zip(values) {
            let l0 = lw0 + log_normal(x, fit.means[0], fit.variances[0]);
            let l1 = lw1 + log_normal(x, fit.means[1], fit.variances[1]);
            let m = l0.max(l1);
            let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
            *r = (l0 - lse).exp();
            ll += lse;
        }
        let ll = ll / n;
        let prev = fit.ll_trace.last().copied();
        fit.ll_trace.push(ll);
        if let Some(p) = prev {
            if (ll - p).abs() < cfg.tol {
                break;
            }
        }
        // M step
        let s0: f64 = resp.iter().sum();
        let s1 = n - s0;
        if s0 <= 0.0 || s1 <= 0.0 {
            break;
        }
        let m0 = resp.iter().zip(values).map(|(r, x)| r * x).sum::<f64>() / s0;
        let m1 = resp.iter().zip(values).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / s1;
        let v0 = resp.iter().zip(values).map(|(r, x)| r * (x - m0).powi(2)).sum::<f64>() / s0;
        let v1 = resp.iter().zip(values).map(|(r, x)| (1.0 - r) * (x - m1).powi(2)).sum::<f64>() / s1;
        fit.means = [m0, m1];
        fit.variances = [v0.max(VARIANCE_FLOOR), v1.max(VARIANCE_FLOOR)];
        fit.weight = s0 / n;
    }
    if fit.means[0] < fit.means[1] {
        fit.means.swap(0, 1);
        fit.variances.swap(0, 1);
        fit.weight = 1.0 - fit.weight;
    }
    fit
}
