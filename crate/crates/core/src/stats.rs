//! Small statistical toolkit: Kolmogorov-Smirnov tests, binomial bands,
//! bootstrap intervals and weighted log-linear fits.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub n_eff: f64,
}

impl KsOutcome {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// Asymptotic Kolmogorov tail probability with the Stephens small-sample
/// correction.
pub fn kolmogorov_pvalue(n_eff: f64, d: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let sn = n_eff.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `samples` against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsOutcome {
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        let hi = (i as f64 + 1.0) / n - c;
        let lo = c - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    KsOutcome {
        statistic: d,
        p_value: kolmogorov_pvalue(n, d),
        n_eff: n,
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsOutcome {
    let xs = sorted(a);
    let ys = sorted(b);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    KsOutcome {
        statistic: d,
        p_value: kolmogorov_pvalue(n_eff, d),
        n_eff,
    }
}

/// Standard deviation of a binomial proportion.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Dvoretzky-Kiefer-Wolfowitz half-width at confidence `1 - level`.
pub fn dkw_epsilon(n: usize, level: f64) -> f64 {
    ((2.0 / level).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - Z95 * self.std_err, self.mean + Z95 * self.std_err)
    }
}

pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_err: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        std_err: (var / n as f64).sqrt(),
        n,
    }
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(xs: &[f64], resamples: usize, confidence: f64, rng: &mut R) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - confidence);
    let lo_idx = ((tail * resamples as f64).floor() as usize).min(resamples - 1);
    let hi_idx = (((1.0 - tail) * resamples as f64).ceil() as usize)
        .saturating_sub(1)
        .min(resamples - 1);
    (means[lo_idx], means[hi_idx])
}

/// Weighted least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl LinearFit {
    pub fn slope_ci95(&self) -> (f64, f64) {
        (self.slope - Z95 * self.slope_se, self.slope + Z95 * self.slope_se)
    }
}

pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n {
        return None;
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    // normalised weights: residual variance estimated from the fit itself
    let dof = (n as f64 - 2.0).max(1.0);
    let slope_se = (rss / dof / sxx).sqrt();
    Some(LinearFit {
        slope,
        intercept,
        slope_se,
        r_squared,
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn kolmogorov_tail_reference_values() {
        // large-n limits of the Kolmogorov distribution
        assert_abs_diff_eq!(kolmogorov_pvalue(1e12, 1.358_098_8 / 1e6), 0.05, epsilon = 1e-4);
        assert_abs_diff_eq!(kolmogorov_pvalue(1e12, 1.627_624 / 1e6), 0.01, epsilon = 1e-4);
        assert_eq!(kolmogorov_pvalue(100.0, 0.0), 1.0);
    }

    #[test]
    fn ks_accepts_true_law_and_rejects_shift() {
        let mut rng = trial_rng(3, 0);
        let exp = Exp::new(2.0).unwrap();
        let xs: Vec<f64> = (0..5000).map(|_| exp.sample(&mut rng)).collect();
        let cdf = |x: f64| if x < 0.0 { 0.0 } else { 1.0 - (-2.0 * x).exp() };
        assert!(ks_one_sample(&xs, cdf).passes(0.01));
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.1).collect();
        assert!(!ks_one_sample(&shifted, cdf).passes(0.01));
        assert!(!ks_two_sample(&xs, &shifted).passes(0.01));
        let ys: Vec<f64> = (0..4000).map(|_| exp.sample(&mut rng)).collect();
        assert!(ks_two_sample(&xs, &ys).passes(0.01));
    }

    #[test]
    fn two_sample_statistic_handles_ties() {
        let a = [1.0, 1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 2.0, 3.0];
        assert_abs_diff_eq!(ks_two_sample(&a, &b).statistic, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let fit = weighted_linear_fit(&x, &y, &[1.0; 10]).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bootstrap_interval_brackets_mean() {
        let mut rng = trial_rng(5, 0);
        let xs: Vec<f64> = (0..2000).map(|i| (i % 7) as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&xs, 1000, 0.95, &mut rng);
        let m = mean_estimate(&xs).mean;
        assert!(lo < m && m < hi);
    }
}
