//! Maximal coupling of shifted large-jump laws and the coupled chain
//! `S(k) = (S^x(k), S^y(k))` sampled at the selected jump times.
//!
//! Between selected times both components share every noise increment. At a
//! selected time the first coordinates receive a maximally coupled pair of
//! jumps, so they coincide with probability `1 - TV`.

use std::io::Write;

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quadrature::{integrate_interval, integrate_power_tail, integrate_with_breakpoints, TailSide};
use crate::sde::{
    add, norm, Carried, Event, EventKind, ModelConfig, Node, ScaledDiff, SchemeIncrements, Stepper, Vec2,
};
use crate::stable_noise::{gamma_k, p_k_density, sample_large_jump, sample_segment, StableSpec};

/// Iteration cap for every rejection loop in the coupling.
pub const REJECTION_CAP: u64 = 1_000_000;

/// Absolute tolerance for the total-variation quadrature.
pub const TV_TOL: f64 = 1e-8;

/// Hölder constants of the map `z -> L(z + eta)` in total variation:
/// `int |p_K(z - z1) - p_K(z - z2)| dz <= beta1 |z1 - z2|^beta2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderConstants {
    pub beta1: f64,
    pub beta2: f64,
}

impl HolderConstants {
    /// `beta1 = (4 alpha + 4) / K`, `beta2 = 1`.
    pub fn for_stable(spec: &StableSpec) -> Self {
        HolderConstants {
            beta1: (4.0 * spec.alpha + 4.0) / spec.k,
            beta2: 1.0,
        }
    }
}

/// `int |p_K(z - z1) - p_K(z - z2)| dz`, by adaptive quadrature.
pub fn tv_unhalved(spec: &StableSpec, z1: f64, z2: f64) -> Result<f64> {
    spec.validate()?;
    let delta = (z2 - z1).abs();
    if delta == 0.0 {
        return Ok(0.0);
    }
    if !delta.is_finite() {
        return Err(LabError::InvalidArgument(format!(
            "non-finite shift between {z1} and {z2}"
        )));
    }
    let k = spec.k;
    let f = |z: f64| (p_k_density(spec, z) - p_k_density(spec, z - delta)).abs();
    // pieces are smooth between the support edges; the midpoint catches the
    // sign change when the supports separate
    let pts = [-k, k, delta - k, delta + k, 0.5 * delta];
    let inner = integrate_with_breakpoints(&f, &pts, TV_TOL)?.value;
    let left = integrate_power_tail(&f, -k, TailSide::Left, 0.0, spec.alpha, 0.5 * TV_TOL)?.value;
    let right = integrate_power_tail(&f, delta + k, TailSide::Right, delta, spec.alpha, 0.5 * TV_TOL)?.value;
    Ok((inner + left + right).min(2.0))
}

/// Total-variation distance between `L(z1 + eta)` and `L(z2 + eta)`.
pub fn tv_shifted(spec: &StableSpec, z1: f64, z2: f64) -> Result<f64> {
    tv_unhalved(spec, z1, z2)
        .map(|v| 0.5 * v)
        .map_err(|e| e.in_op("tv_shifted"))
}

/// A maximally coupled pair of post-jump first coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub xi_x: f64,
    pub xi_y: f64,
    pub coalesced: bool,
}

/// Jumps relative to each pre-jump point.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Offsets {
    /// Both land on `x_hat + eta`.
    Coalesced(f64),
    /// `x_hat + eta_x` and `y_hat + eta_y`.
    Split(f64, f64),
}

/// Maximal coupling of `eta` and `shift + eta` with `eta ~ nu_K`.
///
/// Propose `a ~ nu_K`; keep it for both sides with probability
/// `min(1, p_K(a - shift) / p_K(a))`. A rejected proposal is already a draw
/// from the residual of the first law, and the second side gets an
/// independent draw from its own residual.
fn couple_offsets<R: Rng + ?Sized>(spec: &StableSpec, shift: f64, rng: &mut R) -> Result<Offsets> {
    let a = sample_large_jump(spec, rng);
    let u: f64 = rng.random();
    if u * p_k_density(spec, a) <= p_k_density(spec, a - shift) {
        return Ok(Offsets::Coalesced(a));
    }
    // the residual of shift + eta is the mirror image of the residual of eta
    // about shift / 2, so y - y_hat = -(residual draw of eta)
    let w = sample_residual(spec, shift.abs(), rng)?;
    Ok(Offsets::Split(a, -shift.signum() * w))
}

/// Draw from `(p_K(z) - p_K(z - delta))^+ / TV` for `delta > 0`.
fn sample_residual<R: Rng + ?Sized>(spec: &StableSpec, delta: f64, rng: &mut R) -> Result<f64> {
    let k = spec.k;
    let alpha = spec.alpha;
    if delta >= 2.0 * k {
        // TV is bounded below here; plain rejection is cheap
        for _ in 0..REJECTION_CAP {
            let z = sample_large_jump(spec, rng);
            let u: f64 = rng.random();
            let f = p_k_density(spec, z);
            if u * f < f - p_k_density(spec, z - delta) {
                return Ok(z);
            }
        }
        return Err(LabError::RejectionCap { cap: REJECTION_CAP });
    }
    // For delta < 2K the residual splits into two pieces of equal mass:
    // p_K on (K, K + delta), and p_K(z) - p_K(z - delta) on z < -K.
    let w = -(-alpha * (delta / k).ln_1p()).exp_m1();
    if rng.random::<bool>() {
        let u: f64 = rng.sample(Open01);
        let z = k * (-(-u * w).ln_1p() / alpha).exp();
        return Ok(z.clamp(k, k + delta));
    }
    // Envelope: p_K(r) - p_K(r + delta) <= (alpha + 1) delta p_K(r) / r for
    // r = |z| > K, i.e. a Pareto(alpha + 1) proposal.
    let inv = 1.0 / (alpha + 1.0);
    for _ in 0..REJECTION_CAP {
        let v: f64 = rng.sample(Open01);
        let r = k * v.powf(-inv);
        let ratio = -(-(alpha + 1.0) * (delta / r).ln_1p()).exp_m1() * r / ((alpha + 1.0) * delta);
        let u: f64 = rng.random();
        if u < ratio {
            return Ok(-r);
        }
    }
    Err(LabError::RejectionCap { cap: REJECTION_CAP })
}

/// Maximal coupling of `L(x1_hat + eta)` and `L(y1_hat + eta)`.
pub fn maximal_couple<R: Rng + ?Sized>(
    spec: &StableSpec,
    x1_hat: f64,
    y1_hat: f64,
    rng: &mut R,
) -> Result<CouplingOutcome> {
    let op = |e: LabError| e.in_op("maximal_couple");
    spec.validate().map_err(op)?;
    if !(x1_hat.is_finite() && y1_hat.is_finite()) {
        return Err(op(LabError::InvalidArgument("pre-jump points must be finite".into())));
    }
    Ok(match couple_offsets(spec, y1_hat - x1_hat, rng).map_err(op)? {
        Offsets::Coalesced(a) => {
            let xi = x1_hat + a;
            CouplingOutcome {
                xi_x: xi,
                xi_y: xi,
                coalesced: true,
            }
        }
        Offsets::Split(a, b) => CouplingOutcome {
            xi_x: x1_hat + a,
            xi_y: y1_hat + b,
            coalesced: false,
        },
    })
}

/// Couple the jump of the first coordinate; second coordinates pass through.
pub fn coupled_jump<R: Rng + ?Sized>(x_hat: Vec2, y_hat: Vec2, spec: &StableSpec, rng: &mut R) -> Result<(Vec2, Vec2)> {
    let c = maximal_couple(spec, x_hat[0], y_hat[0], rng)?;
    Ok(([c.xi_x, x_hat[1]], [c.xi_y, y_hat[1]]))
}

/// How the two components share the jump at each selected time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpCoupling {
    /// Maximal coupling of the shifted jump laws.
    #[default]
    Maximal,
    /// Both components receive the same jump.
    Synchronous,
}

/// One transition of the coupled chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStep {
    pub x: Vec2,
    /// `S^y - S^x`.
    pub d: ScaledDiff,
    pub gap: f64,
    pub coalesced: bool,
    pub left_x: Vec2,
    pub left_d: ScaledDiff,
}

/// Advances a pair from one selected jump time to the next.
pub struct PairEngine<'c> {
    config: &'c ModelConfig,
    stepper: Stepper<'c>,
    coupling: JumpCoupling,
}

impl<'c> PairEngine<'c> {
    pub fn new(config: &'c ModelConfig, coupling: JumpCoupling) -> Self {
        PairEngine {
            config,
            stepper: Stepper::new(config),
            coupling,
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, x: Vec2, d: ScaledDiff, rng: &mut R) -> Result<PairStep> {
        self.step_observed(x, d, rng, |_| Vec::new(), |_, _, _| {})
    }

    /// As [`PairEngine::step`], also reporting the pair at requested times
    /// inside `[0, gap)`. `times(gap)` returns `(relative time, index)` pairs
    /// sorted by time.
    pub fn step_observed<R, O, V>(
        &self,
        x: Vec2,
        d: ScaledDiff,
        rng: &mut R,
        times: O,
        mut visit: V,
    ) -> Result<PairStep>
    where
        R: Rng + ?Sized,
        O: FnOnce(f64) -> Vec<(f64, usize)>,
        V: FnMut(usize, Vec2, Vec2),
    {
        let cfg = self.config;
        let seg = sample_segment(&cfg.noise, cfg.waiting_t, rng);
        let mut events: Vec<Event> = seg
            .window
            .iter()
            .map(|&(time, eta)| Event {
                time,
                kind: EventKind::Jump(eta),
            })
            .collect();
        let obs = times(seg.gap);
        if !obs.is_empty() {
            events.extend(obs.into_iter().map(|(time, idx)| Event {
                time,
                kind: EventKind::Observe(idx),
            }));
            // stable: jumps stay ahead of observations at equal times
            events.sort_by(|a, b| a.time.total_cmp(&b.time));
        }
        let start = Carried {
            x,
            d: Some(d),
            conv: 0.0,
        };
        let mut src = SchemeIncrements::new(cfg, rng);
        let left = self.stepper.run(start, seg.gap, &events, &mut src, |node| {
            if let Node::Observe { idx, x, d, .. } = node {
                visit(idx, x, d.expect("pair carries a difference").value());
            }
        })?;
        let (lx, ld) = (left.x, left.d.expect("pair carries a difference"));
        let shift = ld.value()[0];
        let (x1, d, coalesced) = match self.coupling {
            JumpCoupling::Synchronous => (lx[0] + seg.mark, ld, ld.v[0] == 0.0),
            JumpCoupling::Maximal => match couple_offsets(&cfg.noise, shift, rng)? {
                Offsets::Coalesced(a) => (
                    lx[0] + a,
                    ScaledDiff {
                        v: [0.0, ld.v[1]],
                        exp: ld.exp,
                    },
                    true,
                ),
                Offsets::Split(a, b) => (lx[0] + a, ScaledDiff::new([shift + (b - a), ld.value()[1]]), false),
            },
        };
        Ok(PairStep {
            x: [x1, lx[1]],
            d,
            gap: seg.gap,
            coalesced,
            left_x: lx,
            left_d: ld,
        })
    }
}

/// One row of a realised coupled chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledChainRecord {
    pub k: usize,
    pub s_x: Vec2,
    pub s_y: Vec2,
    /// `S^y(k) - S^x(k)`, carried without cancellation.
    pub diff: Vec2,
    /// `ln |S^y(k) - S^x(k)|`, exact even where `diff` underflows.
    pub log_distance: f64,
    /// `tau_k - tau_{k-1}`.
    pub gap: f64,
    pub coalesced_at_k: bool,
    /// `delta_{k-1}` evaluated at this gap.
    pub delta_prev: f64,
}

impl CoupledChainRecord {
    pub fn distance(&self) -> f64 {
        norm(self.diff)
    }

    pub fn norm_sum(&self) -> f64 {
        norm(self.s_x) + norm(self.s_y)
    }
}

/// A realised chain; `records[k-1]` holds `S(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledChain {
    pub x0: Vec2,
    pub y0: Vec2,
    pub records: Vec<CoupledChainRecord>,
}

impl CoupledChain {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `S(k)` as `(s_x, s_y, diff)`, with `k = 0` the initial pair.
    pub fn state(&self, k: usize) -> (Vec2, Vec2, Vec2) {
        if k == 0 {
            (self.x0, self.y0, crate::sde::sub(self.y0, self.x0))
        } else {
            let r = &self.records[k - 1];
            (r.s_x, r.s_y, r.diff)
        }
    }

    /// `ln |S^x(k) - S^y(k)|`.
    pub fn log_distance(&self, k: usize) -> f64 {
        if k == 0 {
            norm(crate::sde::sub(self.y0, self.x0)).ln()
        } else {
            self.records[k - 1].log_distance
        }
    }

    /// Write `k,s_x1,s_x2,s_y1,s_y2,gap,delta,coalesced` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        use crate::io::fmt17;
        writeln!(w, "k,s_x1,s_x2,s_y1,s_y2,gap,delta,coalesced")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.k,
                fmt17(r.s_x[0]),
                fmt17(r.s_x[1]),
                fmt17(r.s_y[0]),
                fmt17(r.s_y[1]),
                fmt17(r.gap),
                fmt17(r.delta_prev),
                r.coalesced_at_k
            )?;
        }
        Ok(())
    }
}

/// Run the coupled chain for `n_steps` transitions from `(x, y)`.
pub fn coupled_chain<R: Rng + ?Sized>(
    config: &ModelConfig,
    x: Vec2,
    y: Vec2,
    n_steps: usize,
    rng: &mut R,
) -> Result<CoupledChain> {
    let op = |e: LabError| e.in_op("coupled_chain");
    config.validate().map_err(op)?;
    if !(x.iter().chain(&y).all(|v| v.is_finite())) {
        return Err(op(LabError::InvalidArgument("initial states must be finite".into())));
    }
    let engine = PairEngine::new(config, JumpCoupling::Maximal);
    let mut records = Vec::with_capacity(n_steps);
    let mut sx = x;
    let mut d = ScaledDiff::new(crate::sde::sub(y, x));
    for k in 1..=n_steps {
        let s = engine.step(sx, d, rng).map_err(op)?;
        sx = s.x;
        d = s.d;
        let dv = d.value();
        records.push(CoupledChainRecord {
            k,
            s_x: sx,
            s_y: add(sx, dv),
            diff: dv,
            log_distance: d.ln_norm(),
            gap: s.gap,
            coalesced_at_k: s.coalesced,
            delta_prev: delta_of_gap(config, s.gap),
        });
    }
    Ok(CoupledChain { x0: x, y0: y, records })
}

/// `delta(g) = e^{-lambda2 g} + L e^{g L} / (lambda2 + L)`, `L = ||F||_Lip`.
pub fn delta_of_gap(config: &ModelConfig, gap: f64) -> f64 {
    let l = config.drift.lipschitz();
    (-config.lambda2 * gap).exp() + l * (gap * l).exp() / (config.lambda2 + l)
}

/// `kappa = beta1 e^{beta2 L T}`.
pub fn kappa(config: &ModelConfig, beta: HolderConstants) -> f64 {
    beta.beta1 * (beta.beta2 * config.drift.lipschitz() * config.waiting_t).exp()
}

/// Largest admissible closeness threshold, `(1 / (4 kappa))^{1 / beta2}`.
pub fn d_max(config: &ModelConfig, beta: HolderConstants) -> f64 {
    (0.25 / kappa(config, beta)).powf(1.0 / beta.beta2)
}

/// Contraction bound for `E[delta^beta2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    /// `gamma/(gamma + lambda2 beta2) e^{-lambda2 beta2 T} + 2 (L/(L + lambda2))^beta2`.
    pub theta: f64,
    /// Same with the second term multiplied by `e^{beta2 L T}`, which
    /// `E[delta^beta2]` actually needs when `L > 0`.
    pub theta_with_growth: f64,
    pub below_half: bool,
    pub with_growth_below_half: bool,
}

pub fn theta(config: &ModelConfig, beta: HolderConstants) -> ThetaReport {
    let g = gamma_k(&config.noise);
    let l = config.drift.lipschitz();
    let b2 = beta.beta2;
    let l2 = config.lambda2;
    let first = g / (g + l2 * b2) * (-l2 * b2 * config.waiting_t).exp();
    let second = 2.0 * (l / (l + l2)).powf(b2);
    let growth = (b2 * l * config.waiting_t).exp();
    let theta = first + second;
    let theta_with_growth = first + second * growth;
    ThetaReport {
        theta,
        theta_with_growth,
        below_half: theta < 0.5,
        with_growth_below_half: theta_with_growth < 0.5,
    }
}

/// `E[delta(gap)^power]` with `gap = T + Exp(gamma_K)`, by quadrature.
pub fn expected_delta_power(config: &ModelConfig, power: f64) -> Result<f64> {
    let g = gamma_k(&config.noise);
    let l = config.drift.lipschitz();
    let growth = power * l;
    if growth >= g {
        return Err(LabError::DivergentGapIntegral {
            gamma_k: g,
            threshold: growth,
        });
    }
    // gap = T - ln(u)/gamma; the integrand behaves like u^{-a}, a = growth/gamma,
    // and u = v^m with m = 1/(1 - a) makes it bounded
    let a = growth / g;
    let m = 1.0 / (1.0 - a);
    let t = config.waiting_t;
    let f = |v: f64| {
        if v <= 0.0 {
            return if a == 0.0 {
                m * (-config.lambda2 * f64::INFINITY).exp()
            } else {
                0.0
            };
        }
        let lnu = m * v.ln();
        let gap = t - lnu / g;
        m * v.powf(m - 1.0) * delta_of_gap(config, gap).powf(power)
    };
    let r = integrate_interval(&f, 0.0, 1.0, 1e-12).map_err(|e| e.in_op("expected_delta_power"))?;
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use crate::sde::Drift;
    use crate::stable_noise::{p_k_cdf, SmallJumpScheme};
    use crate::stats::{binomial_sigma, ks_one_sample};
    use approx::assert_abs_diff_eq;

    fn unit() -> StableSpec {
        StableSpec::default()
    }

    /// Closed form of the total variation between two shifted `nu_K` laws.
    fn tv_closed(spec: &StableSpec, delta: f64) -> f64 {
        let (k, a, d) = (spec.k, spec.alpha, delta.abs());
        let rho = (k / (k + d)).powf(a);
        if d < 2.0 * k {
            1.0 - rho
        } else {
            1.0 + (k / (d - k)).powf(a) - rho - (2.0 * k / d).powf(a)
        }
    }

    #[test]
    fn tv_matches_closed_form() {
        for &alpha in &[0.5, 1.0, 1.7] {
            for &k in &[0.5, 1.0, 2.0] {
                let s = StableSpec::new(alpha, 1.0, k).unwrap();
                for &d in &[1e-6, 1e-3, 0.1, 0.7, 1.0, 1.99, 2.0, 2.5, 5.0, 40.0] {
                    let delta = d * k;
                    let q = tv_shifted(&s, 0.3, 0.3 + delta).unwrap();
                    assert_abs_diff_eq!(q, tv_closed(&s, delta), epsilon = 1e-8);
                    let q = tv_shifted(&s, 0.3 + delta, 0.3).unwrap();
                    assert_abs_diff_eq!(q, tv_closed(&s, delta), epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn tv_basic_properties() {
        let s = unit();
        assert_eq!(tv_shifted(&s, 1.25, 1.25).unwrap(), 0.0);
        for &d in &[1e-4, 0.01, 0.2, 0.25] {
            assert!(tv_shifted(&s, 0.0, d).unwrap() <= 2.0 * d + 1e-12);
        }
        for &d in &[0.5, 3.0, 100.0, 1e4] {
            let v = tv_shifted(&s, -d / 2.0, d / 2.0).unwrap();
            assert!(v < 1.0 && v > 0.0, "{d}: {v}");
        }
    }

    #[test]
    fn identical_points_always_coalesce() {
        let s = unit();
        let mut rng = trial_rng(1, 0);
        for _ in 0..10_000 {
            let c = maximal_couple(&s, 0.4, 0.4, &mut rng).unwrap();
            assert!(c.coalesced);
            assert_eq!(c.xi_x.to_bits(), c.xi_y.to_bits());
        }
    }

    #[test]
    fn coalescence_frequency_matches_tv() {
        let s = unit();
        let n = 40_000;
        for (i, &shift) in [1e-3, 0.05, 0.5, 1.5, 3.0].iter().enumerate() {
            let mut rng = trial_rng(2, i as u64);
            let hits = (0..n)
                .filter(|_| maximal_couple(&s, 0.1, 0.1 + shift, &mut rng).unwrap().coalesced)
                .count();
            let p = 1.0 - tv_closed(&s, shift);
            let freq = hits as f64 / n as f64;
            assert!(
                (freq - p).abs() <= 3.5 * binomial_sigma(p, n) + 1e-12,
                "{shift}: {freq} vs {p}"
            );
        }
    }

    #[test]
    fn marginals_are_shifted_jump_laws() {
        for (i, &(alpha, shift)) in [(1.0, 0.3), (1.0, 3.0), (0.6, 1e-3), (1.5, 1.0)].iter().enumerate() {
            let s = StableSpec::new(alpha, 1.0, 1.0).unwrap();
            let mut rng = trial_rng(3, i as u64);
            let (x1, y1) = (-0.2, -0.2 + shift);
            let outs: Vec<CouplingOutcome> = (0..20_000)
                .map(|_| maximal_couple(&s, x1, y1, &mut rng).unwrap())
                .collect();
            let xs: Vec<f64> = outs.iter().map(|c| c.xi_x).collect();
            let ys: Vec<f64> = outs.iter().map(|c| c.xi_y).collect();
            let kx = ks_one_sample(&xs, |z| p_k_cdf(&s, z - x1));
            let ky = ks_one_sample(&ys, |z| p_k_cdf(&s, z - y1));
            assert!(kx.passes(0.01), "x alpha={alpha} shift={shift}: {kx:?}");
            assert!(ky.passes(0.01), "y alpha={alpha} shift={shift}: {ky:?}");
            for c in &outs {
                assert!((c.xi_x - x1).abs() >= s.k);
                assert!((c.xi_y - y1).abs() >= s.k * (1.0 - 1e-15));
                assert_eq!(c.coalesced, c.xi_x == c.xi_y);
            }
        }
    }

    #[test]
    fn tiny_shift_residual_does_not_stall() {
        let s = unit();
        let mut rng = trial_rng(4, 0);
        for _ in 0..1000 {
            let w = sample_residual(&s, 1e-12, &mut rng).unwrap();
            assert!(w.abs() >= 1.0);
        }
    }

    #[test]
    fn coupled_jump_passes_second_coordinates() {
        let s = unit();
        let mut rng = trial_rng(5, 0);
        for i in 0..1000 {
            let xh = [0.1 * i as f64, -3.0];
            let yh = [0.5, 7.25];
            let (a, b) = coupled_jump(xh, yh, &s, &mut rng).unwrap();
            assert_eq!(a[1], xh[1]);
            assert_eq!(b[1], yh[1]);
        }
        let (a, b) = coupled_jump([1.0, 2.0], [1.0, 2.0], &s, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn preset_constants() {
        let c = ModelConfig::default();
        let b = HolderConstants::for_stable(&c.noise);
        assert_eq!(b.beta1, 8.0);
        assert_eq!(b.beta2, 1.0);
        assert_abs_diff_eq!(kappa(&c, b), 8.0 * 0.5f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(d_max(&c, b), 1.0 / (32.0 * 0.5f64.exp()), epsilon = 1e-12);
        assert_abs_diff_eq!(d_max(&c, b), 0.018954, epsilon = 1e-6);
        let th = theta(&c, b);
        assert_abs_diff_eq!(
            th.theta,
            2.0 / 52.0 * (-50.0f64).exp() + 2.0 * 0.5 / 50.5,
            epsilon = 1e-15
        );
        assert!(th.below_half && th.with_growth_below_half);
    }

    #[test]
    fn expected_delta_closed_form() {
        for &(l, l2) in &[(0.5, 50.0), (0.0, 10.0), (0.9, 3.0)] {
            let c = ModelConfig {
                lambda2: l2,
                drift: Drift::SinCos { eps: l },
                ..ModelConfig::default()
            };
            let g = 2.0;
            let t = c.waiting_t;
            let exact = (-l2 * t).exp() * g / (g + l2) + l / (l2 + l) * (l * t).exp() * g / (g - l);
            assert_abs_diff_eq!(expected_delta_power(&c, 1.0).unwrap(), exact, epsilon = 1e-10);
            assert!(exact <= theta(&c, HolderConstants::for_stable(&c.noise)).theta_with_growth + 1e-15);
        }
        let c = ModelConfig {
            drift: Drift::SinCos { eps: 2.0 },
            ..ModelConfig::default()
        };
        assert!(matches!(
            expected_delta_power(&c, 1.0),
            Err(LabError::DivergentGapIntegral { .. })
        ));
    }

    #[test]
    fn chain_gaps_and_deltas() {
        let c = ModelConfig::default();
        let mut rng = trial_rng(6, 0);
        let chain = coupled_chain(&c, [0.3, 0.2], [-0.1, 0.4], 200, &mut rng).unwrap();
        assert_eq!(chain.len(), 200);
        for r in &chain.records {
            assert!(r.gap > c.waiting_t);
            assert_eq!(r.delta_prev, delta_of_gap(&c, r.gap));
            if r.coalesced_at_k {
                assert_eq!(r.s_x[0], r.s_y[0]);
            }
        }
    }

    #[test]
    fn equal_start_stays_equal() {
        let c = ModelConfig::default();
        let mut rng = trial_rng(7, 0);
        let chain = coupled_chain(&c, [0.5, -0.5], [0.5, -0.5], 100, &mut rng).unwrap();
        for r in &chain.records {
            assert!(r.coalesced_at_k);
            assert_eq!(r.s_x, r.s_y);
            assert_eq!(r.distance(), 0.0);
        }
    }

    #[test]
    fn second_coordinate_contracts_by_delta() {
        // the pre-jump second-coordinate gap is bounded by delta_0 |x - y|
        let c = ModelConfig {
            small_noise: SmallJumpScheme::Gaussian,
            ..ModelConfig::default()
        };
        let engine = PairEngine::new(&c, JumpCoupling::Maximal);
        let mut rng = trial_rng(8, 0);
        for _ in 0..500 {
            let (x, y) = ([0.4, -0.3], [-0.2, 0.5]);
            let d0 = crate::sde::sub(y, x);
            let s = engine.step(x, ScaledDiff::new(d0), &mut rng).unwrap();
            let bound = delta_of_gap(&c, s.gap) * norm(d0);
            assert!(s.left_d.value()[1].abs() <= bound * (1.0 + 1e-9));
            assert_eq!(s.d.value()[1], s.left_d.value()[1]);
        }
    }

    #[test]
    fn chain_csv_header_and_rows() {
        let c = ModelConfig::default();
        let mut rng = trial_rng(9, 0);
        let chain = coupled_chain(&c, [0.0, 0.0], [0.1, 0.0], 3, &mut rng).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,s_x1,s_x2,s_y1,s_y2,gap,delta,coalesced");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }
}
