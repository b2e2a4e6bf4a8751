//! Symmetric alpha-stable driving noise split at the jump threshold `K`.
//!
//! The Lévy measure is `nu(dx) = c_alpha |x|^{-alpha-1} dx`. Jumps with
//! `|x| >= K` form a compound Poisson process with rate `gamma_K` and jump
//! law `nu_K` (two-sided Pareto). The remainder `z - z^K` is replaced by a
//! variance-matched Gaussian, optionally with an inner compound-Poisson layer
//! for jumps in `[eps K, K)`.
//!
//! # Scale bookkeeping
//!
//! With this Lévy density the characteristic function is
//! `E exp(i xi z(t)) = exp(-s |xi|^alpha t)` where
//!
//! ```text
//! s = 2 c_alpha Gamma(1 - alpha) cos(pi alpha / 2) / alpha   (alpha != 1)
//! s = pi c_alpha                                             (alpha == 1)
//! ```
//!
//! so unit scale at `alpha = 1` corresponds to `c_alpha = 1 / pi`, while the
//! default `c_alpha = 1` gives `gamma_K = 2 / (alpha K^alpha)`.
//!
//! # Small-jump approximation error
//!
//! Replacing the small jumps on `|x| < a` by a Gaussian of matching variance
//! perturbs the characteristic exponent by at most
//! `t xi^4 m4 / 24` with `m4 = 2 c_alpha a^{4-alpha} / (4 - alpha)`, from
//! `|1 - cos u - u^2/2| <= u^4/24`. Since `|e^{-a} - e^{-b}| <= |a - b|` for
//! non-negative exponents, the same number bounds the error of the
//! characteristic function itself.

use rand::Rng;
use rand_distr::{Distribution, Exp, Open01, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableSpec {
    pub alpha: f64,
    #[serde(default = "default_c_alpha")]
    pub c_alpha: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

fn default_c_alpha() -> f64 {
    1.0
}

impl Default for StableSpec {
    fn default() -> Self {
        StableSpec {
            alpha: 1.0,
            c_alpha: 1.0,
            k: 1.0,
        }
    }
}

impl StableSpec {
    pub fn new(alpha: f64, c_alpha: f64, k: f64) -> Result<Self> {
        let s = StableSpec { alpha, c_alpha, k };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(invalid(
                "noise.alpha",
                format!("must lie in (0, 2), got {}", self.alpha),
            ));
        }
        if !(self.c_alpha > 0.0 && self.c_alpha.is_finite()) {
            return Err(invalid(
                "noise.c_alpha",
                format!("must be positive, got {}", self.c_alpha),
            ));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(invalid("noise.K", format!("must be positive, got {}", self.k)));
        }
        Ok(())
    }
}

/// Total jump rate above the threshold, `nu((-inf, -K] u [K, inf))`.
pub fn gamma_k(spec: &StableSpec) -> f64 {
    2.0 * spec.c_alpha / (spec.alpha * spec.k.powf(spec.alpha))
}

/// Density of the normalised large-jump law `nu_K`.
pub fn p_k_density(spec: &StableSpec, z: f64) -> f64 {
    let a = z.abs();
    if a > spec.k {
        0.5 * spec.alpha * spec.k.powf(spec.alpha) * a.powf(-(spec.alpha + 1.0))
    } else {
        0.0
    }
}

/// CDF of `nu_K` (symmetric two-sided Pareto).
pub fn p_k_cdf(spec: &StableSpec, z: f64) -> f64 {
    let a = z.abs();
    if a <= spec.k {
        return 0.5;
    }
    let tail = 0.5 * (spec.k / a).powf(spec.alpha);
    if z > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Draw one jump from `nu_K` by inverting the Pareto tail.
pub fn sample_large_jump<R: Rng + ?Sized>(spec: &StableSpec, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let magnitude = spec.k * u.powf(-1.0 / spec.alpha);
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// `int_{|x| < a} x^2 nu(dx)`.
fn truncated_second_moment(spec: &StableSpec, a: f64) -> f64 {
    2.0 * spec.c_alpha * a.powf(2.0 - spec.alpha) / (2.0 - spec.alpha)
}

/// `int_{|x| < a} x^4 nu(dx)`.
fn truncated_fourth_moment(spec: &StableSpec, a: f64) -> f64 {
    2.0 * spec.c_alpha * a.powf(4.0 - spec.alpha) / (4.0 - spec.alpha)
}

/// Variance per unit time of the small-jump part, `int_{|x|<K} x^2 nu(dx)`.
pub fn small_jump_variance(spec: &StableSpec) -> f64 {
    truncated_second_moment(spec, spec.k)
}

/// How the small-jump remainder `z - z^K` is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SmallJumpScheme {
    /// Centered Gaussian with variance `small_jump_variance * dt`.
    #[default]
    Gaussian,
    /// Exact compound Poisson for `|x| in [inner_fraction K, K)` plus a
    /// Gaussian for the rest.
    GaussianWithInner { inner_fraction: f64 },
    /// No small-jump noise at all (deterministic tests).
    Off,
}

impl SmallJumpScheme {
    pub fn validate(&self) -> Result<()> {
        if let SmallJumpScheme::GaussianWithInner { inner_fraction } = *self {
            if !(inner_fraction > 0.0 && inner_fraction < 1.0) {
                return Err(invalid(
                    "small_noise.inner_fraction",
                    format!("must lie in (0, 1), got {inner_fraction}"),
                ));
            }
        }
        Ok(())
    }

    /// Gaussian-replaced cutoff `a`: jumps with `|x| < a` are Gaussian.
    fn gaussian_cutoff(&self, spec: &StableSpec) -> f64 {
        match *self {
            SmallJumpScheme::Gaussian => spec.k,
            SmallJumpScheme::GaussianWithInner { inner_fraction } => inner_fraction * spec.k,
            SmallJumpScheme::Off => 0.0,
        }
    }

    /// Bound on `|cf_true - cf_simulated|` for `z(t)` at frequency `xi`.
    pub fn cf_bias_bound(&self, spec: &StableSpec, xi: f64, t: f64) -> f64 {
        match self {
            SmallJumpScheme::Off => f64::INFINITY,
            _ => t * xi.powi(4) * truncated_fourth_moment(spec, self.gaussian_cutoff(spec)) / 24.0,
        }
    }
}

/// Increment of the small-jump remainder over a step of length `dt`.
pub fn sample_small_increment<R: Rng + ?Sized>(
    spec: &StableSpec,
    scheme: SmallJumpScheme,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(LabError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    Ok(small_increment_unchecked(spec, scheme, dt, rng))
}

pub(crate) fn small_increment_unchecked<R: Rng + ?Sized>(
    spec: &StableSpec,
    scheme: SmallJumpScheme,
    dt: f64,
    rng: &mut R,
) -> f64 {
    match scheme {
        SmallJumpScheme::Off => 0.0,
        SmallJumpScheme::Gaussian => {
            let sd = (small_jump_variance(spec) * dt).sqrt();
            sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
        }
        SmallJumpScheme::GaussianWithInner { inner_fraction } => {
            let a = inner_fraction * spec.k;
            let sd = (truncated_second_moment(spec, a) * dt).sqrt();
            let mut inc = sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            let (lo, hi) = (a.powf(-spec.alpha), spec.k.powf(-spec.alpha));
            let rate = 2.0 * spec.c_alpha / spec.alpha * (lo - hi);
            let count = Poisson::new(rate * dt).map(|p| p.sample(rng)).unwrap_or(0.0) as u64;
            for _ in 0..count {
                let u: f64 = rng.random();
                let m = (lo - u * (lo - hi)).powf(-1.0 / spec.alpha);
                inc += if rng.random::<bool>() { m } else { -m };
            }
            inc
        }
    }
}

/// Scale `s` in `exp(-s |xi|^alpha t)` induced by `c_alpha`.
pub fn stable_scale(spec: &StableSpec) -> f64 {
    let a = spec.alpha;
    if (a - 1.0).abs() < 1e-12 {
        std::f64::consts::PI * spec.c_alpha
    } else {
        2.0 * spec.c_alpha * gamma(1.0 - a) * (std::f64::consts::FRAC_PI_2 * a).cos() / a
    }
}

/// `c_alpha` that produces characteristic-function scale `scale`.
pub fn c_alpha_for_scale(alpha: f64, scale: f64) -> f64 {
    let unit = StableSpec {
        alpha,
        c_alpha: 1.0,
        k: 1.0,
    };
    scale / stable_scale(&unit)
}

/// Characteristic function of `z(t)`. The law is symmetric, so the value is
/// real.
pub fn char_function(spec: &StableSpec, xi: f64, t: f64) -> f64 {
    (-stable_scale(spec) * xi.abs().powf(spec.alpha) * t).exp()
}

/// A realised large-jump timeline on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpStream {
    pub horizon: f64,
    /// `(time, jump)` for every jump with `|jump| >= K`, increasing in time.
    pub arrivals: Vec<(f64, f64)>,
    /// Indices into `arrivals` of the sampled times `tau_1 < tau_2 < ...`.
    pub sampled: Vec<usize>,
    pub waiting_t: f64,
}

impl JumpStream {
    pub fn sampled_times(&self) -> Vec<f64> {
        self.sampled.iter().map(|&i| self.arrivals[i].0).collect()
    }

    /// `true` when no arrival came after the first waiting window.
    pub fn has_no_sampled_time(&self) -> bool {
        self.sampled.is_empty()
    }

    /// A stream with no jumps at all, for deterministic runs.
    pub fn empty(horizon: f64) -> Self {
        JumpStream {
            horizon,
            arrivals: Vec::new(),
            sampled: Vec::new(),
            waiting_t: 0.0,
        }
    }

    /// A stream built from explicit arrivals.
    pub fn from_arrivals(horizon: f64, waiting_t: f64, mut arrivals: Vec<(f64, f64)>) -> Self {
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let sampled = select_sampled(&arrivals, waiting_t);
        JumpStream {
            horizon,
            arrivals,
            sampled,
            waiting_t,
        }
    }
}

/// First arrival strictly after `tau_{k-1} + T`, repeatedly.
fn select_sampled(arrivals: &[(f64, f64)], waiting_t: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = 0.0;
    for (i, &(t, _)) in arrivals.iter().enumerate() {
        if t > last + waiting_t {
            out.push(i);
            last = t;
        }
    }
    out
}

/// Poisson(`gamma_K`) arrivals on `[0, horizon]` with iid `nu_K` marks.
pub fn sample_jump_stream<R: Rng + ?Sized>(
    spec: &StableSpec,
    waiting_t: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<JumpStream> {
    if !(waiting_t >= 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "waiting time must be >= 0, got {waiting_t}"
        )));
    }
    if !(horizon > waiting_t) || !horizon.is_finite() {
        return Err(LabError::InvalidArgument(format!(
            "horizon {horizon} must be finite and exceed the waiting time {waiting_t}"
        )));
    }
    let exp = Exp::new(gamma_k(spec)).expect("gamma_K is positive");
    let mut arrivals = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > horizon {
            break;
        }
        arrivals.push((t, sample_large_jump(spec, rng)));
    }
    let sampled = select_sampled(&arrivals, waiting_t);
    Ok(JumpStream {
        horizon,
        arrivals,
        sampled,
        waiting_t,
    })
}

/// Noise between two consecutive sampled times, measured from the earlier one.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Large jumps inside the waiting window `(0, T]`.
    pub window: Vec<(f64, f64)>,
    /// `tau_{k+1} - tau_k`, always `> T`.
    pub gap: f64,
    /// Jump carried by the sampled arrival itself.
    pub mark: f64,
}

/// Draw the next inter-sample segment of a jump stream.
pub fn sample_segment<R: Rng + ?Sized>(spec: &StableSpec, waiting_t: f64, rng: &mut R) -> Segment {
    let exp = Exp::new(gamma_k(spec)).expect("gamma_K is positive");
    let mut window = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        let jump = sample_large_jump(spec, rng);
        if t > waiting_t {
            return Segment {
                window,
                gap: t,
                mark: jump,
            };
        }
        window.push((t, jump));
    }
}
