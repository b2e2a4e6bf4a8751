//! Numerical checks of the standing assumptions and Monte Carlo estimates of
//! the mixing rate.
//!
//! The mixing curve is `D(t) = E[1 ^ |X^x(t) - X^y(t)|]` under the coupling.
//! It bounds the dual-Lipschitz distance between the two time-`t` laws from
//! above; it is not that distance itself.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::coupling::{
    d_max, expected_delta_power, kappa, theta, tv_unhalved, HolderConstants, JumpCoupling, PairEngine, ThetaReport,
};
use crate::error::{LabError, Result};
use crate::rng::{par_trials, LabRng};
use crate::sde::{
    integrate, integrate_pair, norm, scheme_slack, sub, Drift, ModelConfig, ScaledDiff, SchemeIncrements, Vec2,
};
use crate::stable_noise::{
    gamma_k, sample_jump_stream, small_jump_variance, stable_scale, SmallJumpScheme, StableSpec,
};
use crate::stats::{mean_estimate, weighted_linear_fit, LinearFit, Z95};
use crate::stopping::{recursion_q, waiting_threshold};

/// Constants behind the assumptions, evaluated at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    #[serde(rename = "gamma_K")]
    pub gamma_k: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Sup of the unhalved TV integral over `|z1| + |z2| <= M`.
    pub beta0: f64,
    pub beta0_argmax: Vec2,
    /// `beta0` within `1e-6` of 2.
    pub a3_marginal: bool,
    #[serde(rename = "A4_holds")]
    pub a4_holds: bool,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub t_above_t0: bool,
    pub kappa: f64,
    pub d_max: f64,
    pub d_below_d_max: bool,
    pub theta: f64,
    pub theta_below_half: bool,
    /// Bound that also carries the `e^{beta2 L T}` growth of `delta`.
    pub theta_with_growth: f64,
    /// `E[delta^beta2]` over the gap law; absent when it diverges.
    pub expected_delta: Option<f64>,
    /// Per-step rate from the moment recursion outside the ball.
    pub q: f64,
}

impl AssumptionReport {
    /// All hypotheses of the coalescence and mixing results at once.
    pub fn hypotheses_hold(&self) -> bool {
        self.theta_below_half && self.d_below_d_max && self.t_above_t0 && self.a4_holds && !self.a3_marginal
    }
}

/// Grid resolution for `beta0`, in units of `M`.
pub const BETA0_GRID: usize = 200;

pub fn compute_report(config: &ModelConfig) -> Result<AssumptionReport> {
    let op = |e: LabError| e.in_op("compute_report");
    config.validate().map_err(op)?;
    let beta = HolderConstants::for_stable(&config.noise);
    let (beta0, argmax) = beta0_search(&config.noise, config.m_radius).map_err(op)?;
    let th: ThetaReport = theta(config, beta);
    let t0 = waiting_threshold(config);
    let dm = d_max(config, beta);
    Ok(AssumptionReport {
        gamma_k: gamma_k(&config.noise),
        beta1: beta.beta1,
        beta2: beta.beta2,
        beta0,
        beta0_argmax: argmax,
        a3_marginal: beta0 >= 2.0 - 1e-6,
        a4_holds: config.a4_holds(beta.beta2),
        t0,
        t_above_t0: config.waiting_t > t0,
        kappa: kappa(config, beta),
        d_max: dm,
        d_below_d_max: config.d_close < dm,
        theta: th.theta,
        theta_below_half: th.below_half,
        theta_with_growth: th.theta_with_growth,
        expected_delta: expected_delta_power(config, beta.beta2).ok(),
        q: recursion_q(config),
    })
}

/// Grid search over the diamond `|z1| + |z2| <= M`, then a Nelder-Mead
/// polish from the best grid point.
fn beta0_search(spec: &StableSpec, m: f64) -> Result<(f64, Vec2)> {
    let n = BETA0_GRID as i64;
    let step = m / BETA0_GRID as f64;
    // the integral only depends on z2 - z1, so cache by grid offset
    let mut by_offset: Vec<Option<f64>> = vec![None; 4 * BETA0_GRID + 1];
    let mut best = (0.0, [0.0, 0.0]);
    for i in -n..=n {
        for j in -n..=n {
            if i.abs() + j.abs() > n {
                continue;
            }
            let off = (j - i + 2 * n) as usize;
            let v = match by_offset[off] {
                Some(v) => v,
                None => {
                    let v = tv_unhalved(spec, i as f64 * step, j as f64 * step)?;
                    by_offset[off] = Some(v);
                    v
                }
            };
            if v > best.0 {
                best = (v, [i as f64 * step, j as f64 * step]);
            }
        }
    }
    let project = |z: Vec2| {
        let s = z[0].abs() + z[1].abs();
        if s > m {
            [z[0] * m / s, z[1] * m / s]
        } else {
            z
        }
    };
    let objective = |z: Vec2| {
        let z = project(z);
        tv_unhalved(spec, z[0], z[1]).map(|v| -v).unwrap_or(f64::INFINITY)
    };
    let (z, v) = nelder_mead(objective, best.1, step, 200);
    let z = project(z);
    Ok(if -v > best.0 { (-v, z) } else { best })
}

/// Minimise `f` over `R^2` from `start` with initial simplex size `scale`.
fn nelder_mead<F: Fn(Vec2) -> f64>(f: F, start: Vec2, scale: f64, iters: usize) -> (Vec2, f64) {
    let mut pts = [start, [start[0] + scale, start[1]], [start[0], start[1] + scale]];
    let mut vals = pts.map(&f);
    let lerp = |a: Vec2, b: Vec2, t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..iters {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.map(|i| pts[i]);
        vals = idx.map(|i| vals[i]);
        if (vals[2] - vals[0]).abs() < 1e-13 {
            break;
        }
        let c = lerp(pts[0], pts[1], 0.5);
        let r = lerp(pts[2], c, 2.0);
        let fr = f(r);
        if fr < vals[0] {
            let e = lerp(pts[2], c, 3.0);
            let fe = f(e);
            (pts[2], vals[2]) = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < vals[1] {
            (pts[2], vals[2]) = (r, fr);
        } else {
            let k = lerp(pts[2], c, 0.5);
            let fk = f(k);
            if fk < vals[2] {
                (pts[2], vals[2]) = (k, fk);
            } else {
                for i in 1..3 {
                    pts[i] = lerp(pts[0], pts[i], 0.5);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (pts[best], vals[best])
}

/// `E|X|^p` for a symmetric stable law with characteristic function
/// `exp(-s |xi|^alpha)`.
pub fn stable_abs_moment(alpha: f64, scale: f64, p: f64) -> f64 {
    let pi = std::f64::consts::PI;
    2.0 / pi * gamma(p) * (0.5 * p * pi).sin() * gamma(1.0 - p / alpha) * scale.powf(p / alpha)
}

/// Scale of `int_0^t e^{-lambda (t - s)} dz(s)`: `s (1 - e^{-alpha lambda t}) / (alpha lambda)`.
pub fn convolution_scale(spec: &StableSpec, lambda: f64, t: f64) -> f64 {
    let al = spec.alpha * lambda;
    stable_scale(spec) * (-(-al * t).exp_m1()) / al
}

/// Settings for the moment-condition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Settings {
    pub spec: StableSpec,
    pub small_noise: SmallJumpScheme,
    pub lambda: f64,
    pub p: f64,
    pub t_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub n: usize,
    pub step_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfPoint {
    pub t: f64,
    pub xi: f64,
    pub empirical: f64,
    pub exact: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub t: f64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Report {
    pub cf: Vec<CfPoint>,
    pub moments: Vec<MomentPoint>,
    /// Slope of the moment against `t` over the upper half of the grid.
    pub large_t_slope: Option<f64>,
    pub large_t_slope_ci: Option<(f64, f64)>,
    pub cf_pass: bool,
    /// Every moment CI (widened to 4 standard errors) covers the exact value.
    pub moments_match: bool,
    pub flat_for_large_t: bool,
}

impl A1Report {
    pub fn pass(&self) -> bool {
        self.cf_pass && self.moments_match && self.flat_for_large_t
    }
}

/// Simulate the stochastic convolution with the path integrator's noise
/// decomposition and compare against the closed-form stable law.
pub fn check_a1(settings: &A1Settings, seed: u64) -> Result<A1Report> {
    let op = |e: LabError| e.in_op("check_a1");
    let s = settings;
    s.spec.validate().map_err(op)?;
    if !(s.p > 0.0 && s.p < s.spec.alpha) || !(s.lambda > 0.0) || s.t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(op(LabError::InvalidArgument(format!(
            "need p in (0, alpha), lambda > 0 and positive times (p={}, lambda={})",
            s.p, s.lambda
        ))));
    }
    if s.n == 0 || s.t_grid.is_empty() {
        return Err(op(LabError::InvalidArgument(
            "need n >= 1 and a nonempty time grid".into(),
        )));
    }
    let t_max = s.t_grid.iter().cloned().fold(0.0, f64::max);
    let cfg = ModelConfig {
        lambda1: s.lambda,
        lambda2: s.lambda,
        drift: Drift::Zero,
        noise: s.spec,
        small_noise: s.small_noise,
        waiting_t: 0.0,
        step_h: s.step_h,
        horizon: t_max,
        p_moment: s.p,
        ..ModelConfig::default()
    };
    let draws: Vec<Result<Vec<f64>>> = par_trials(seed, s.n, |_, rng| {
        let stream = sample_jump_stream(&s.spec, 0.0, t_max, rng)?;
        let mut src = SchemeIncrements::new(&cfg, rng);
        let path = integrate(&cfg, [0.0, 0.0], &stream, &mut src, t_max)?;
        Ok(s.t_grid.iter().map(|&t| path.state_at(t)[0]).collect())
    });
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>().map_err(op)?;

    let sigma2 = small_jump_variance(&s.spec);
    let mut cf = Vec::new();
    let mut moments = Vec::new();
    for (ti, &t) in s.t_grid.iter().enumerate() {
        let col: Vec<f64> = draws.iter().map(|d| d[ti]).collect();
        let scale = convolution_scale(&s.spec, s.lambda, t);
        for &xi in &s.xi_grid {
            let cos: Vec<f64> = col.iter().map(|c| (xi * c).cos()).collect();
            let m = mean_estimate(&cos);
            let exact = (-scale * xi.abs().powf(s.spec.alpha)).exp();
            // Gaussian stand-in for small jumps, weighted by e^{-4 lambda (t-s)}
            let t_eff = -(-4.0 * s.lambda * t).exp_m1() / (4.0 * s.lambda);
            let bias = s.small_noise.cf_bias_bound(&s.spec, xi, t_eff);
            // small increments enter at step end without the in-step decay
            let disc = 0.5 * xi * xi * sigma2 * s.step_h * (1.0 - (-2.0 * s.lambda * t).exp()).min(1.0);
            let tolerance = 4.0 * m.std_err + bias + disc;
            cf.push(CfPoint {
                t,
                xi,
                empirical: m.mean,
                exact,
                tolerance,
                pass: (m.mean - exact).abs() <= tolerance,
            });
        }
        let pw: Vec<f64> = col.iter().map(|c| c.abs().powf(s.p)).collect();
        let m = mean_estimate(&pw);
        moments.push(MomentPoint {
            t,
            mean: m.mean,
            ci_lo: m.mean - Z95 * m.std_err,
            ci_hi: m.mean + Z95 * m.std_err,
            exact: stable_abs_moment(s.spec.alpha, scale, s.p),
        });
    }
    let moments_match = moments.iter().all(|mp| {
        let se = (mp.ci_hi - mp.mean) / Z95;
        (mp.mean - mp.exact).abs() <= 4.0 * se
    });
    let mut sorted: Vec<&MomentPoint> = moments.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let upper = &sorted[sorted.len() / 2..];
    let fit = if upper.len() >= 2 {
        let x: Vec<f64> = upper.iter().map(|m| m.t).collect();
        let y: Vec<f64> = upper.iter().map(|m| m.mean).collect();
        let w: Vec<f64> = upper
            .iter()
            .map(|m| {
                let se = (m.ci_hi - m.mean) / Z95;
                1.0 / (se * se).max(1e-300)
            })
            .collect();
        weighted_linear_fit(&x, &y, &w).map(|f| {
            // a two-or-three point fit has no residual freedom; use the
            // propagated measurement error instead
            let sxx: f64 = {
                let sw: f64 = w.iter().sum();
                let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
                x.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum()
            };
            LinearFit {
                slope_se: f.slope_se.max(1.0 / sxx.sqrt()),
                ..f
            }
        })
    } else {
        None
    };
    let slope_ci = fit.map(|f| f.slope_ci95());
    Ok(A1Report {
        cf_pass: cf.iter().all(|c| c.pass),
        flat_for_large_t: slope_ci.is_none_or(|(lo, hi)| lo <= 0.0 && 0.0 <= hi),
        large_t_slope: fit.map(|f| f.slope),
        large_t_slope_ci: slope_ci,
        moments_match,
        cf,
        moments,
    })
}

/// Which hypotheses held when a mixing curve was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub theta: f64,
    pub theta_below_half: bool,
    pub d_below_d_max: bool,
    pub t_above_t0: bool,
    pub a4_holds: bool,
    pub hypotheses_hold: bool,
}

impl RegimeLabel {
    pub fn from_report(r: &AssumptionReport) -> Self {
        RegimeLabel {
            theta: r.theta,
            theta_below_half: r.theta_below_half,
            d_below_d_max: r.d_below_d_max,
            t_above_t0: r.t_above_t0,
            a4_holds: r.a4_holds,
            hypotheses_hold: r.hypotheses_hold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub x: Vec2,
    pub y: Vec2,
    pub n: usize,
    pub coupling: JumpCoupling,
    pub t: Vec<f64>,
    pub d: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    /// Indices `[first, last]` of the fitted segment.
    pub segment: Option<(usize, usize)>,
    /// Fitted decay rate `-slope` of `ln D(t)`.
    pub c_hat: Option<f64>,
    pub c_ci: Option<(f64, f64)>,
    pub r_squared: Option<f64>,
    pub regime: RegimeLabel,
    pub warnings: Vec<String>,
}

impl MixingReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        use crate::io::fmt17;
        writeln!(w, "t,D,ci_lo,ci_hi")?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(self.t[i]),
                fmt17(self.d[i]),
                fmt17(self.ci_lo[i]),
                fmt17(self.ci_hi[i])
            )?;
        }
        Ok(())
    }
}

/// `min(1, |X^x(t) - X^y(t)|)` on `t_grid` for one coupled pair.
fn pair_curve(engine: &PairEngine<'_>, x: Vec2, y: Vec2, t_grid: &[f64], rng: &mut LabRng) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; t_grid.len()];
    let t_end = t_grid.last().copied().unwrap_or(0.0);
    let mut t0 = 0.0;
    let mut next = 0;
    let (mut sx, mut d) = (x, ScaledDiff::new(sub(y, x)));
    while next < t_grid.len() {
        let first = next;
        let step = engine.step_observed(
            sx,
            d,
            rng,
            |gap| {
                let mut obs = Vec::new();
                let mut i = first;
                while i < t_grid.len() && t_grid[i] - t0 < gap {
                    obs.push(((t_grid[i] - t0).max(0.0), i));
                    i += 1;
                }
                next = i;
                obs
            },
            |i, _, dd| out[i] = norm(dd).min(1.0),
        )?;
        sx = step.x;
        d = step.d;
        t0 += step.gap;
        if t0 > t_end && next == t_grid.len() {
            break;
        }
    }
    Ok(out)
}

/// Monte Carlo estimate of `D(t)` for the pair `(x, y)` and a log-linear fit
/// of its decay.
pub fn estimate_mixing(
    config: &ModelConfig,
    x: Vec2,
    y: Vec2,
    t_grid: &[f64],
    n: usize,
    coupling: JumpCoupling,
    seed: u64,
) -> Result<MixingReport> {
    let op = |e: LabError| e.in_op("estimate_mixing");
    let report = compute_report(config).map_err(op)?;
    if n == 0 || t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || !(t_grid[0] >= 0.0) {
        return Err(op(LabError::InvalidArgument(
            "need n >= 1 and a strictly increasing, nonnegative time grid".into(),
        )));
    }
    let mut warnings = Vec::new();
    if !report.theta_below_half {
        warnings.push(format!(
            "theta = {} >= 1/2: outside the proven coalescence regime",
            report.theta
        ));
    }
    let engine = PairEngine::new(config, coupling);
    let curves: Vec<Result<Vec<f64>>> = par_trials(seed, n, |_, rng| pair_curve(&engine, x, y, t_grid, rng));
    let curves: Vec<Vec<f64>> = curves.into_iter().collect::<Result<_>>().map_err(op)?;

    let mut d = Vec::with_capacity(t_grid.len());
    let mut se = Vec::with_capacity(t_grid.len());
    for i in 0..t_grid.len() {
        let col: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        let m = mean_estimate(&col);
        d.push(m.mean);
        se.push(m.std_err);
    }
    let ci_lo: Vec<f64> = d.iter().zip(&se).map(|(m, s)| (m - Z95 * s).max(0.0)).collect();
    let ci_hi: Vec<f64> = d.iter().zip(&se).map(|(m, s)| (m + Z95 * s).min(1.0)).collect();

    let segment = fit_segment(&d, &se);
    let fit = segment.and_then(|(a, b)| {
        let xs = &t_grid[a..=b];
        let ys: Vec<f64> = d[a..=b].iter().map(|v| v.ln()).collect();
        // var(ln D) ~ (se / D)^2
        let ws: Vec<f64> = (a..=b).map(|i| (d[i] / se[i]).powi(2)).collect();
        weighted_linear_fit(xs, &ys, &ws)
    });
    Ok(MixingReport {
        x,
        y,
        n,
        coupling,
        t: t_grid.to_vec(),
        d,
        ci_lo,
        ci_hi,
        segment: fit.and(segment),
        c_hat: fit.map(|f| -f.slope),
        c_ci: fit.map(|f| {
            let (lo, hi) = f.slope_ci95();
            (-hi, -lo)
        }),
        r_squared: fit.map(|f| f.r_squared),
        regime: RegimeLabel::from_report(&report),
        warnings,
    })
}

/// Burn-in ends at the first `D(t) < 0.9 D(0)`; the segment stops before the
/// relative CI half-width exceeds 50%.
fn fit_segment(d: &[f64], se: &[f64]) -> Option<(usize, usize)> {
    let start = d.iter().position(|&v| v < 0.9 * d[0])?;
    let mut end = None;
    for i in start..d.len() {
        if !(d[i] > 0.0) || Z95 * se[i] / d[i] > 0.5 {
            break;
        }
        end = Some(i);
    }
    let end = end?;
    (end >= start + 2).then_some((start, end))
}

/// Worst-case results of the synchronous-pair inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityTally {
    /// Violations beyond the documented scheme slack.
    pub violations: usize,
    /// Violations beyond a `1e-9` relative rounding allowance.
    pub strict_violations: usize,
    /// Smallest `bound - value` seen (negative means a violation).
    pub worst_margin: f64,
    pub checks: usize,
}

impl InequalityTally {
    fn new() -> Self {
        InequalityTally {
            violations: 0,
            strict_violations: 0,
            worst_margin: f64::INFINITY,
            checks: 0,
        }
    }

    fn record(&mut self, value: f64, bound: f64, slack: f64) {
        self.checks += 1;
        self.worst_margin = self.worst_margin.min(bound - value);
        if value > bound + slack {
            self.violations += 1;
        }
        if value > bound * (1.0 + 1e-9) + 1e-300 {
            self.strict_violations += 1;
        }
    }

    fn merge(&mut self, o: &InequalityTally) {
        self.violations += o.violations;
        self.strict_violations += o.strict_violations;
        self.worst_margin = self.worst_margin.min(o.worst_margin);
        self.checks += o.checks;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathwiseReport {
    pub pairs: usize,
    pub horizon: f64,
    pub gronwall: InequalityTally,
    pub contraction: InequalityTally,
    pub second_coordinate: InequalityTally,
}

impl PathwiseReport {
    pub fn pass(&self) -> bool {
        self.gronwall.violations + self.contraction.violations + self.second_coordinate.violations == 0
    }
}

/// Run `n_seeds` synchronous pairs from random starts in `[-3, 3]^2` and check
///
/// * `|D(t)| <= e^{tL} |x - y|`
/// * `|D(t)| <= e^{-lambda1 t}|x - y| + 2 sqrt2 ||F||_0 (1 - e^{-lambda1 t}) / lambda1`
/// * `|D_2(t)| <= (e^{-lambda2 t} + L e^{tL} / (L + lambda2)) |x - y|`
///
/// at every grid point, with `D = X^y - X^x`.
pub fn pathwise_suite(config: &ModelConfig, n_seeds: usize, horizon: f64, seed: u64) -> Result<PathwiseReport> {
    let op = |e: LabError| e.in_op("pathwise_suite");
    config.validate().map_err(op)?;
    if n_seeds == 0 {
        return Err(op(LabError::InvalidArgument("n_seeds must be >= 1".into())));
    }
    let l = config.drift.lipschitz();
    let f0 = config.drift.sup_norm();
    let (l1, l2) = (config.lambda1, config.lambda2);
    let tallies: Vec<Result<[InequalityTally; 3]>> = par_trials(seed, n_seeds, |_, rng| {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let y = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        // only the arrivals matter here, not which ones are selected
        let stream = sample_jump_stream(&config.noise, 0.0, horizon, rng)?;
        let mut src = SchemeIncrements::new(config, rng);
        let pair = integrate_pair(config, x, y, &stream, &mut src, horizon)?;
        let d0 = norm(sub(y, x));
        let slack = scheme_slack(config, d0);
        let mut out = [InequalityTally::new(), InequalityTally::new(), InequalityTally::new()];
        for (&t, dd) in pair.x.times.iter().zip(&pair.diff) {
            let dist = norm(*dd);
            out[0].record(dist, (t * l).exp() * d0, slack);
            let contraction = (-l1 * t).exp() * d0 + 2.0 * std::f64::consts::SQRT_2 * f0 * (-(-l1 * t).exp_m1()) / l1;
            out[1].record(dist, contraction, slack);
            let second = ((-l2 * t).exp() + l / (l + l2) * (t * l).exp()) * d0;
            out[2].record(dd[1].abs(), second, slack);
        }
        Ok(out)
    });
    let mut total = [InequalityTally::new(), InequalityTally::new(), InequalityTally::new()];
    for t in tallies {
        let t = t.map_err(op)?;
        for i in 0..3 {
            total[i].merge(&t[i]);
        }
    }
    Ok(PathwiseReport {
        pairs: n_seeds,
        horizon,
        gronwall: total[0],
        contraction: total[1],
        second_coordinate: total[2],
    })
}
