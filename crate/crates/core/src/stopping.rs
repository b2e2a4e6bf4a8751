//! Stopping times on realised coupled chains, and tail / moment estimates.
//!
//! Every detector searches strictly after a start index and returns an
//! absolute chain index, so compositions restart on the same realisation.
//! A time that is not reached within the chain is `Censored`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::CoupledChain;
use crate::sde::norm;
use crate::stats::{bootstrap_mean_ci, weighted_linear_fit, LinearFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StopTime {
    Hit(usize),
    Censored,
}

impl StopTime {
    pub fn hit(self) -> Option<usize> {
        match self {
            StopTime::Hit(k) => Some(k),
            StopTime::Censored => None,
        }
    }

    pub fn is_censored(self) -> bool {
        self == StopTime::Censored
    }

    fn then(self, f: impl FnOnce(usize) -> StopTime) -> StopTime {
        match self {
            StopTime::Hit(k) => f(k),
            StopTime::Censored => StopTime::Censored,
        }
    }
}

fn first_after(chain: &CoupledChain, start: usize, pred: impl Fn(usize) -> bool) -> StopTime {
    (start + 1..=chain.len())
        .find(|&k| pred(k))
        .map_or(StopTime::Censored, StopTime::Hit)
}

/// First `k > start` with `|S^x(k)| + |S^y(k)| <= M`.
pub fn sigma_tilde_from(chain: &CoupledChain, start: usize, m: f64) -> StopTime {
    first_after(chain, start, |k| {
        let (sx, sy, _) = chain.state(k);
        norm(sx) + norm(sy) <= m
    })
}

/// First `k > start` with `|S^x(k) - S^y(k)| <= d`.
pub fn sigma_from(chain: &CoupledChain, start: usize, d: f64) -> StopTime {
    first_after(chain, start, |k| norm(chain.state(k).2) <= d)
}

/// First `k > start` where the distance exceeds
/// `delta_start ... delta_{k-1} |S^x(start) - S^y(start)|`.
///
/// Compared in logarithms: the product underflows long before the chain ends.
pub fn sigma_hat_from(chain: &CoupledChain, start: usize) -> StopTime {
    let mut log_bound = chain.log_distance(start);
    for k in start + 1..=chain.len() {
        let r = &chain.records[k - 1];
        log_bound += r.delta_prev.ln();
        if r.log_distance > log_bound {
            return StopTime::Hit(k);
        }
    }
    StopTime::Censored
}

/// `sigma + sigma_hat(S(sigma))`.
pub fn sigma_dagger_from(chain: &CoupledChain, start: usize, d: f64) -> StopTime {
    sigma_from(chain, start, d).then(|s| sigma_hat_from(chain, s))
}

/// `sigma_dagger + sigma_tilde(S(sigma_dagger), M)`.
pub fn sigma_bar_from(chain: &CoupledChain, start: usize, d: f64, m: f64) -> StopTime {
    sigma_dagger_from(chain, start, d).then(|s| sigma_tilde_from(chain, s, m))
}

pub fn detect_sigma_tilde(chain: &CoupledChain, m: f64) -> StopTime {
    sigma_tilde_from(chain, 0, m)
}

pub fn detect_sigma(chain: &CoupledChain, d: f64) -> StopTime {
    sigma_from(chain, 0, d)
}

/// The reference pair `(x, y)` is the chain's initial pair.
pub fn detect_sigma_hat(chain: &CoupledChain) -> StopTime {
    sigma_hat_from(chain, 0)
}

pub fn detect_sigma_dagger(chain: &CoupledChain, d: f64) -> StopTime {
    sigma_dagger_from(chain, 0, d)
}

pub fn detect_sigma_bar(chain: &CoupledChain, d: f64, m: f64) -> StopTime {
    sigma_bar_from(chain, 0, d, m)
}

/// `sigma_bar_1, ..., sigma_bar_k` by repeated restart.
pub fn sigma_bar_sequence(chain: &CoupledChain, d: f64, m: f64, k: usize) -> Vec<StopTime> {
    let mut out = Vec::with_capacity(k);
    let mut cur = StopTime::Hit(0);
    for _ in 0..k {
        cur = cur.then(|s| sigma_bar_from(chain, s, d, m));
        out.push(cur);
    }
    out
}

pub fn detect_sigma_bar_k(chain: &CoupledChain, d: f64, m: f64, k: usize) -> StopTime {
    assert!(k >= 1, "sigma_bar_k needs k >= 1");
    sigma_bar_sequence(chain, d, m, k)[k - 1]
}

/// Tail curve, geometric fit and exponential moment of one stopping time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingSummary {
    pub name: String,
    pub n: usize,
    /// Chain length every sample was searched over.
    pub horizon: usize,
    pub censored_fraction: f64,
    /// `tail[k] = P(sigma > k)` for `k = 0..=horizon`.
    pub tail: Vec<f64>,
    /// Slope of `ln P(sigma > k)` against `k` on the fitted segment.
    pub geom_rate: Option<f64>,
    pub rate_ci: Option<(f64, f64)>,
    pub r_squared: Option<f64>,
    /// `k` range `[first, last]` used by the fit.
    pub fit_range: Option<(usize, usize)>,
    pub vartheta: f64,
    /// Estimate of `E[e^{vartheta sigma} 1{sigma <= horizon}]`.
    pub exp_moment: Option<f64>,
    pub moment_ci: Option<(f64, f64)>,
}

impl StoppingSummary {
    /// `e^{geom_rate}`: the fitted per-step survival ratio.
    pub fn q_hat(&self) -> Option<f64> {
        self.geom_rate.map(f64::exp)
    }
}

/// Minimum number of surviving samples for a tail point to enter the fit.
pub const MIN_TAIL_COUNT: usize = 30;

/// Bootstrap resamples for the moment interval.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub fn tail_and_moment<R: Rng + ?Sized>(
    name: &str,
    samples: &[StopTime],
    horizon: usize,
    vartheta: f64,
    rng: &mut R,
) -> StoppingSummary {
    assert!(!samples.is_empty(), "tail_and_moment needs samples");
    let n = samples.len();
    let censored = samples.iter().filter(|s| s.hit().is_none_or(|k| k > horizon)).count();
    let survivors = survivor_counts(samples.iter().copied(), n, horizon);
    let tail: Vec<f64> = survivors.iter().map(|&c| c as f64 / n as f64).collect();
    let fit = fit_tail(&survivors, n);
    // tail points are cumulative and strongly correlated, so the residual
    // standard error understates the spread; resample the stopping times
    let rate_ci = fit.map(|_| {
        let mut slopes: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
            .filter_map(|_| {
                let draw = (0..n).map(|_| samples[rng.random_range(0..n)]);
                fit_tail(&survivor_counts(draw, n, horizon), n).map(|(f, _)| f.slope)
            })
            .collect();
        slopes.sort_by(f64::total_cmp);
        let m = slopes.len();
        let at = |q: f64| slopes[((q * m as f64) as usize).min(m - 1)];
        (at(0.025), at(0.975))
    });

    let (exp_moment, moment_ci) = if censored == n {
        (None, None)
    } else {
        let vals: Vec<f64> = samples
            .iter()
            .map(|s| match *s {
                StopTime::Hit(k) if k <= horizon => (vartheta * k as f64).exp(),
                _ => 0.0,
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        (
            Some(mean),
            Some(bootstrap_mean_ci(&vals, BOOTSTRAP_RESAMPLES, 0.95, rng)),
        )
    };

    StoppingSummary {
        name: name.to_string(),
        n,
        horizon,
        censored_fraction: censored as f64 / n as f64,
        tail,
        geom_rate: fit.map(|(f, _)| f.slope),
        rate_ci,
        r_squared: fit.map(|(f, _)| f.r_squared),
        fit_range: fit.map(|(_, r)| r),
        vartheta,
        exp_moment,
        moment_ci,
    }
}

/// `survivors[k]` = number of samples with `sigma > k`, censored counted as surviving.
fn survivor_counts(samples: impl Iterator<Item = StopTime>, n: usize, horizon: usize) -> Vec<usize> {
    let mut hist = vec![0usize; horizon + 1];
    for s in samples {
        if let StopTime::Hit(k) = s {
            if k <= horizon {
                hist[k] += 1;
            }
        }
    }
    let mut remaining = n;
    hist.iter()
        .map(|&h| {
            remaining -= h;
            remaining
        })
        .collect()
}

/// Weighted fit of `ln P(sigma > k)` over points with at least
/// `MIN_TAIL_COUNT` survivors and some mass already gone.
fn fit_tail(survivors: &[usize], n: usize) -> Option<(LinearFit, (usize, usize))> {
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (k, &c) in survivors.iter().enumerate() {
        if c < MIN_TAIL_COUNT || c == n {
            continue;
        }
        let p = c as f64 / n as f64;
        xs.push(k as f64);
        ys.push(p.ln());
        // inverse of the delta-method variance of ln p_hat
        ws.push(n as f64 * p / (1.0 - p));
    }
    if xs.len() < 3 {
        return None;
    }
    let range = (xs[0] as usize, *xs.last().unwrap() as usize);
    weighted_linear_fit(&xs, &ys, &ws).map(|f| (f, range))
}

/// `q^2 = (3^{p-1} v 1) gamma_K e^{-p lambda1 T} / (gamma_K + p lambda1)`,
/// the per-step contraction of `E[1 + |S^x|^p + |S^y|^p]` outside the ball.
pub fn recursion_q(config: &crate::sde::ModelConfig) -> f64 {
    let g = crate::stable_noise::gamma_k(&config.noise);
    let p = config.p_moment;
    let l1 = config.lambda1;
    let q2 = 3f64.powf(p - 1.0).max(1.0) * g * (-p * l1 * config.waiting_t).exp() / (g + p * l1);
    q2.sqrt()
}

/// `T0 = ((p - 1) ln 3 / (p lambda1)) v 0`.
pub fn waiting_threshold(config: &crate::sde::ModelConfig) -> f64 {
    let p = config.p_moment;
    ((p - 1.0) * 3f64.ln() / (p * config.lambda1)).max(0.0)
}
