//! Exponential-Euler integration of the degenerate 2D system
//!
//! ```text
//! dX1 = (-lambda1 X1 + F1(X)) dt + dz
//! dX2 = (-lambda2 X2 + F2(X)) dt
//! ```
//!
//! Each step solves the linear part exactly:
//! `X_i(t+h) = e^{-lambda_i h} X_i(t) + (1 - e^{-lambda_i h}) / lambda_i * F_i(X(t))`,
//! then adds the small-jump increment to the first coordinate. Large jumps are
//! placed on the grid at their exact times and added to the first coordinate.
//!
//! Pairs driven by the same noise are carried as a base state plus a
//! difference vector. The difference obeys a noise-free recursion, so it stays
//! accurate long after the two states agree to every printed digit.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::stable_noise::{small_increment_unchecked, JumpStream, SmallJumpScheme, StableSpec};

pub type Vec2 = [f64; 2];

pub fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

/// A difference vector stored as `v * 2^exp`.
///
/// Synchronous pairs can contract far below the smallest normal `f64`; the
/// exponent keeps the relative precision of the difference intact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledDiff {
    pub v: Vec2,
    pub exp: i32,
}

const RESCALE_BITS: i32 = 400;

impl ScaledDiff {
    pub fn new(d: Vec2) -> Self {
        ScaledDiff { v: d, exp: 0 }
    }

    /// The difference as a plain vector (may underflow to zero).
    pub fn value(&self) -> Vec2 {
        if self.exp == 0 {
            self.v
        } else {
            let s = pow2(self.exp);
            [self.v[0] * s, self.v[1] * s]
        }
    }

    /// `ln |v 2^exp|`, `-inf` for an exact zero.
    pub fn ln_norm(&self) -> f64 {
        norm(self.v).ln() + self.exp as f64 * std::f64::consts::LN_2
    }

    fn renormalize(&mut self) {
        let m = self.v[0].abs().max(self.v[1].abs());
        let lo = pow2(-RESCALE_BITS);
        if m > 0.0 && m < lo {
            let up = pow2(RESCALE_BITS);
            self.v = [self.v[0] * up, self.v[1] * up];
            self.exp -= RESCALE_BITS;
        } else if self.exp < 0 && m > pow2(RESCALE_BITS) {
            self.v = [self.v[0] * lo, self.v[1] * lo];
            self.exp += RESCALE_BITS;
        }
    }
}

/// `2^e`, exact where representable, zero below the subnormal range.
fn pow2(e: i32) -> f64 {
    if e < -1074 {
        0.0
    } else if e < -1000 {
        2f64.powi(e + 100) * 2f64.powi(-100)
    } else {
        2f64.powi(e)
    }
}

fn sinc(h: f64) -> f64 {
    if h.abs() < 1e-8 {
        1.0 - h * h / 6.0
    } else {
        h.sin() / h
    }
}

/// Bounded Lipschitz drift `F: R^2 -> R^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    /// `F(x) = eps (sin x2, cos x1)`; `||F||_0 = eps sqrt 2`, `||F||_Lip = eps`.
    SinCos { eps: f64 },
    /// `F = 0`.
    Zero,
    /// `F = (b1, b2)`.
    Constant { b1: f64, b2: f64 },
}

impl Default for Drift {
    fn default() -> Self {
        Drift::SinCos { eps: 0.5 }
    }
}

impl Drift {
    pub fn name(&self) -> &'static str {
        match self {
            Drift::SinCos { .. } => "sin_cos",
            Drift::Zero => "zero",
            Drift::Constant { .. } => "constant",
        }
    }

    pub fn eval(&self, x: Vec2) -> Vec2 {
        match *self {
            Drift::SinCos { eps } => [eps * x[1].sin(), eps * x[0].cos()],
            Drift::Zero => [0.0, 0.0],
            Drift::Constant { b1, b2 } => [b1, b2],
        }
    }

    /// `F(x + d) - F(x)`, evaluated without cancellation when `d` is tiny.
    pub fn diff(&self, x: Vec2, d: Vec2) -> Vec2 {
        match *self {
            Drift::SinCos { eps } => {
                let h1 = 0.5 * d[1];
                let h0 = 0.5 * d[0];
                [
                    2.0 * eps * (x[1] + h1).cos() * h1.sin(),
                    -2.0 * eps * (x[0] + h0).sin() * h0.sin(),
                ]
            }
            Drift::Zero | Drift::Constant { .. } => [0.0, 0.0],
        }
    }

    /// `(F(x + v 2^exp) - F(x)) / 2^exp`.
    pub fn diff_scaled(&self, x: Vec2, d: ScaledDiff) -> Vec2 {
        if d.exp == 0 {
            return self.diff(x, d.v);
        }
        match *self {
            Drift::SinCos { eps } => {
                let s = pow2(d.exp);
                let (a0, a1) = (0.5 * d.v[0], 0.5 * d.v[1]);
                let (h0, h1) = (a0 * s, a1 * s);
                [
                    2.0 * eps * (x[1] + h1).cos() * a1 * sinc(h1),
                    -2.0 * eps * (x[0] + h0).sin() * a0 * sinc(h0),
                ]
            }
            Drift::Zero | Drift::Constant { .. } => [0.0, 0.0],
        }
    }

    /// Sup of the Euclidean norm, `||F||_0`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            Drift::SinCos { eps } => eps.abs() * std::f64::consts::SQRT_2,
            Drift::Zero => 0.0,
            Drift::Constant { b1, b2 } => b1.hypot(b2),
        }
    }

    /// `||F||_Lip`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Drift::SinCos { eps } => eps.abs(),
            Drift::Zero | Drift::Constant { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Drift::SinCos { eps } => eps.is_finite(),
            Drift::Zero => true,
            Drift::Constant { b1, b2 } => b1.is_finite() && b2.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("drift", "parameters must be finite"))
        }
    }
}

/// Model and method parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub drift: Drift,
    pub noise: StableSpec,
    #[serde(default)]
    pub small_noise: SmallJumpScheme,
    /// Waiting time between sampled jumps.
    #[serde(rename = "T")]
    pub waiting_t: f64,
    pub step_h: f64,
    /// Time horizon for path simulation.
    pub horizon: f64,
    /// Return-ball radius.
    #[serde(rename = "M")]
    pub m_radius: f64,
    /// Closeness threshold.
    #[serde(rename = "d")]
    pub d_close: f64,
    /// Moment exponent in `(0, alpha)`.
    #[serde(rename = "p")]
    pub p_moment: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lambda1: 1.0,
            lambda2: 50.0,
            drift: Drift::default(),
            noise: StableSpec::default(),
            small_noise: SmallJumpScheme::Gaussian,
            waiting_t: 1.0,
            step_h: 0.01,
            horizon: 30.0,
            m_radius: 1.0,
            d_close: 0.01,
            p_moment: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        pos("lambda1", self.lambda1)?;
        pos("lambda2", self.lambda2)?;
        if self.lambda1 > self.lambda2 {
            return Err(invalid(
                "lambda2",
                format!("must be >= lambda1 ({} > {})", self.lambda1, self.lambda2),
            ));
        }
        self.drift.validate()?;
        self.noise.validate()?;
        self.small_noise.validate()?;
        if !(self.waiting_t >= 0.0 && self.waiting_t.is_finite()) {
            return Err(invalid("T", format!("must be >= 0, got {}", self.waiting_t)));
        }
        pos("step_h", self.step_h)?;
        pos("horizon", self.horizon)?;
        pos("M", self.m_radius)?;
        pos("d", self.d_close)?;
        if !(self.p_moment > 0.0 && self.p_moment < self.noise.alpha) {
            return Err(invalid(
                "p",
                format!("must lie in (0, alpha = {}), got {}", self.noise.alpha, self.p_moment),
            ));
        }
        Ok(())
    }

    /// `gamma_K >= 2 beta2 ||F||_Lip`.
    pub fn a4_holds(&self, beta2: f64) -> bool {
        crate::stable_noise::gamma_k(&self.noise) >= 2.0 * beta2 * self.drift.lipschitz()
    }
}

/// Source of small-jump increments shared by every state being advanced.
pub trait IncrementSource {
    fn next_increment(&mut self, dt: f64) -> f64;
}

/// No small-jump noise.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoIncrements;

impl IncrementSource for NoIncrements {
    fn next_increment(&mut self, _dt: f64) -> f64 {
        0.0
    }
}

/// Small-jump increments drawn from the configured scheme.
pub struct SchemeIncrements<'r, R: Rng + ?Sized> {
    pub spec: StableSpec,
    pub scheme: SmallJumpScheme,
    pub rng: &'r mut R,
}

impl<'r, R: Rng + ?Sized> SchemeIncrements<'r, R> {
    pub fn new(config: &ModelConfig, rng: &'r mut R) -> Self {
        SchemeIncrements {
            spec: config.noise,
            scheme: config.small_noise,
            rng,
        }
    }
}

impl<R: Rng + ?Sized> IncrementSource for SchemeIncrements<'_, R> {
    fn next_increment(&mut self, dt: f64) -> f64 {
        small_increment_unchecked(&self.spec, self.scheme, dt, self.rng)
    }
}

/// Exact decay factors for one step length.
#[derive(Debug, Clone, Copy)]
struct StepFactors {
    h: f64,
    decay: Vec2,
    weight: Vec2,
}

impl StepFactors {
    fn new(lambda: Vec2, h: f64) -> Self {
        let e = |l: f64| (-l * h).exp();
        let w = |l: f64| -(-l * h).exp_m1() / l;
        StepFactors {
            h,
            decay: [e(lambda[0]), e(lambda[1])],
            weight: [w(lambda[0]), w(lambda[1])],
        }
    }
}

/// Something that happens at a fixed time inside a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum EventKind {
    /// Large jump applied to the first coordinate of every state.
    Jump(f64),
    /// Report the current (post-jump) state.
    Observe(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// What the stepping loop reports at each visited time.
pub(crate) enum Node<'a> {
    /// A grid time. `jump` is `Some((eta, left_x, left_d))` if a jump landed here.
    Grid {
        t: f64,
        x: Vec2,
        d: Option<ScaledDiff>,
        conv: f64,
        jump: Option<(f64, Vec2, Option<ScaledDiff>)>,
    },
    Observe {
        idx: usize,
        x: Vec2,
        d: Option<ScaledDiff>,
        _marker: std::marker::PhantomData<&'a ()>,
    },
}

/// State carried through a segment: base point, optional difference to a
/// synchronous partner, and the running stochastic convolution of the first
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Carried {
    pub x: Vec2,
    pub d: Option<ScaledDiff>,
    pub conv: f64,
}

pub(crate) struct Stepper<'c> {
    config: &'c ModelConfig,
    lambda: Vec2,
    regular: StepFactors,
}

impl<'c> Stepper<'c> {
    pub fn new(config: &'c ModelConfig) -> Self {
        let lambda = [config.lambda1, config.lambda2];
        Stepper {
            config,
            lambda,
            regular: StepFactors::new(lambda, config.step_h),
        }
    }

    fn factors(&self, h: f64) -> StepFactors {
        if h == self.regular.h {
            self.regular
        } else {
            StepFactors::new(self.lambda, h)
        }
    }

    fn step<S: IncrementSource + ?Sized>(&self, s: &mut Carried, h: f64, source: &mut S) {
        let f = self.factors(h);
        let drift = &self.config.drift;
        let fx = drift.eval(s.x);
        if let Some(d) = s.d.as_mut() {
            let df = drift.diff_scaled(s.x, *d);
            d.v[0] = f.decay[0] * d.v[0] + f.weight[0] * df[0];
            d.v[1] = f.decay[1] * d.v[1] + f.weight[1] * df[1];
            d.renormalize();
        }
        let inc = source.next_increment(f.h);
        s.x[0] = f.decay[0] * s.x[0] + f.weight[0] * fx[0] + inc;
        s.x[1] = f.decay[1] * s.x[1] + f.weight[1] * fx[1];
        s.conv = f.decay[0] * s.conv + inc;
    }

    /// Advance over `(0, duration]`, visiting every regular grid time and every
    /// event. Events must be sorted by time and lie in `[0, duration]`.
    /// Returns the state at `duration` (before anything the caller applies there).
    pub fn run<S, V>(
        &self,
        mut s: Carried,
        duration: f64,
        events: &[Event],
        source: &mut S,
        mut visit: V,
    ) -> Result<Carried>
    where
        S: IncrementSource + ?Sized,
        V: FnMut(Node<'_>),
    {
        let h = self.config.step_h;
        let mut t = 0.0;
        let mut j: u64 = 0;
        let mut ev = 0;
        loop {
            // apply everything scheduled at the current time
            let mut jump: Option<(f64, Vec2, Option<ScaledDiff>)> = None;
            while ev < events.len() && events[ev].time <= t {
                match events[ev].kind {
                    EventKind::Jump(eta) => {
                        let (lx, ld) = match jump {
                            Some((_, lx, ld)) => (lx, ld),
                            None => (s.x, s.d),
                        };
                        let total = jump.map_or(0.0, |j| j.0) + eta;
                        s.x[0] += eta;
                        s.conv += eta;
                        jump = Some((total, lx, ld));
                    }
                    EventKind::Observe(idx) => visit(Node::Observe {
                        idx,
                        x: s.x,
                        d: s.d,
                        _marker: std::marker::PhantomData,
                    }),
                }
                ev += 1;
            }
            if jump.is_some() {
                visit(Node::Grid {
                    t,
                    x: s.x,
                    d: s.d,
                    conv: s.conv,
                    jump,
                });
            }
            if t >= duration {
                return Ok(s);
            }
            let next_reg = (((j + 1) as f64) * h).min(duration);
            let target = match events.get(ev) {
                Some(e) if e.time < next_reg => e.time,
                _ => next_reg,
            };
            self.step(&mut s, target - t, source);
            t = target;
            if !(s.x[0].is_finite()
                && s.x[1].is_finite()
                && s.d.is_none_or(|d| d.v[0].is_finite() && d.v[1].is_finite()))
            {
                return Err(LabError::Diverged { time: t });
            }
            if target == next_reg {
                j += 1;
            }
            let jump_here = events
                .get(ev)
                .is_some_and(|e| e.time <= t && matches!(e.kind, EventKind::Jump(_)));
            if !jump_here {
                visit(Node::Grid {
                    t,
                    x: s.x,
                    d: s.d,
                    conv: s.conv,
                    jump: None,
                });
            }
        }
    }
}

/// One càdlàg trajectory sampled on a grid that contains every jump time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadlagPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec2>,
    /// Indices into `times` where a jump was applied.
    pub jump_marks: Vec<usize>,
    /// Jump applied at each mark.
    pub jump_sizes: Vec<f64>,
    /// State just before each jump, parallel to `jump_marks`.
    pub left_limits: Vec<Vec2>,
    /// Realised `int_0^t e^{-lambda1 (t-s)} dz(s)` at each grid time.
    pub convolution: Vec<f64>,
}

impl CadlagPath {
    fn start(x0: Vec2) -> Self {
        CadlagPath {
            times: vec![0.0],
            states: vec![x0],
            jump_marks: Vec::new(),
            jump_sizes: Vec::new(),
            left_limits: Vec::new(),
            convolution: vec![0.0],
        }
    }

    pub fn final_state(&self) -> Vec2 {
        *self.states.last().expect("path has at least the initial point")
    }

    /// State at time `t` (right-continuous; last grid point at or before `t`).
    pub fn state_at(&self, t: f64) -> Vec2 {
        let i = self.times.partition_point(|&s| s <= t);
        self.states[i.saturating_sub(1)]
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.jump_marks.iter().map(|&i| self.times[i]).collect()
    }

    /// Write `time,x1,x2,jump_flag,jump_size` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,x1,x2,jump_flag,jump_size")?;
        let mut marks = self.jump_marks.iter().zip(&self.jump_sizes).peekable();
        for (i, (t, s)) in self.times.iter().zip(&self.states).enumerate() {
            let (flag, size) = match marks.peek() {
                Some((&m, &eta)) if m == i => {
                    marks.next();
                    (1, eta)
                }
                _ => (0, 0.0),
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                crate::io::fmt17(*t),
                crate::io::fmt17(s[0]),
                crate::io::fmt17(s[1]),
                flag,
                crate::io::fmt17(size)
            )?;
        }
        Ok(())
    }
}

fn stream_events(stream: &JumpStream, until: f64) -> Vec<Event> {
    stream
        .arrivals
        .iter()
        .filter(|a| a.0 <= until)
        .map(|&(time, eta)| Event {
            time,
            kind: EventKind::Jump(eta),
        })
        .collect()
}

fn check_until(stream: &JumpStream, x0: &[Vec2], until: f64) -> Result<()> {
    if !(until >= 0.0) || until > stream.horizon {
        return Err(LabError::InvalidArgument(format!(
            "until = {until} must lie in [0, horizon = {}]",
            stream.horizon
        )));
    }
    if x0.iter().any(|x| !(x[0].is_finite() && x[1].is_finite())) {
        return Err(LabError::InvalidArgument("initial state must be finite".into()));
    }
    Ok(())
}

/// Integrate from `x0` over `[0, until]` with the large jumps of `stream`.
pub fn integrate<S: IncrementSource + ?Sized>(
    config: &ModelConfig,
    x0: Vec2,
    stream: &JumpStream,
    small_noise: &mut S,
    until: f64,
) -> Result<CadlagPath> {
    check_until(stream, &[x0], until)?;
    let events = stream_events(stream, until);
    let stepper = Stepper::new(config);
    let mut path = CadlagPath::start(x0);
    let start = Carried {
        x: x0,
        d: None,
        conv: 0.0,
    };
    stepper.run(start, until, &events, small_noise, |node| {
        if let Node::Grid { t, x, conv, jump, .. } = node {
            if let Some((eta, left, _)) = jump {
                path.jump_marks.push(path.times.len());
                path.jump_sizes.push(eta);
                path.left_limits.push(left);
            }
            path.times.push(t);
            path.states.push(x);
            path.convolution.push(conv);
        }
    })?;
    Ok(path)
}

/// Two solutions driven by the identical noise realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncPair {
    pub x: CadlagPath,
    pub y: CadlagPath,
    /// `Y(t) - X(t)` on the shared grid, propagated directly.
    pub diff: Vec<Vec2>,
}

/// Integrate `x0` and `y0` together with shared small increments and jumps.
pub fn integrate_pair<S: IncrementSource + ?Sized>(
    config: &ModelConfig,
    x0: Vec2,
    y0: Vec2,
    stream: &JumpStream,
    small_noise: &mut S,
    until: f64,
) -> Result<SyncPair> {
    check_until(stream, &[x0, y0], until)?;
    let events = stream_events(stream, until);
    let stepper = Stepper::new(config);
    let mut px = CadlagPath::start(x0);
    let mut py = CadlagPath::start(y0);
    let d0 = sub(y0, x0);
    let mut diff = vec![d0];
    let start = Carried {
        x: x0,
        d: Some(ScaledDiff::new(d0)),
        conv: 0.0,
    };
    stepper.run(start, until, &events, small_noise, |node| {
        if let Node::Grid { t, x, d, conv, jump } = node {
            let d = d.expect("pair carries a difference").value();
            if let Some((eta, lx, ld)) = jump {
                let ld = ld.expect("pair carries a difference").value();
                for (p, left) in [(&mut px, lx), (&mut py, add(lx, ld))] {
                    p.jump_marks.push(p.times.len());
                    p.jump_sizes.push(eta);
                    p.left_limits.push(left);
                }
            }
            px.times.push(t);
            px.states.push(x);
            px.convolution.push(conv);
            py.times.push(t);
            py.states.push(add(x, d));
            py.convolution.push(conv);
            diff.push(d);
        }
    })?;
    Ok(SyncPair { x: px, y: py, diff })
}

/// Pre-jump state at a marked jump time.
pub fn left_limit_at(path: &CadlagPath, tau: f64) -> Result<Vec2> {
    path.jump_marks
        .iter()
        .position(|&i| path.times[i] == tau)
        .map(|k| path.left_limits[k])
        .ok_or(LabError::NotAJumpTime(tau))
}

/// First grid point where the a-priori bound fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub index: usize,
    pub time: f64,
    pub value: f64,
    pub bound: f64,
}

/// Checks
/// `|X(t)| <= e^{-lambda1 t}|x| + sqrt2 ||F||_0 (1 - e^{-lambda1 t}) / lambda1 + |C(t)| + slack`
/// at every grid time, where `C` is the realised stochastic convolution, and
/// the same bound coordinate-wise for the first coordinate.
pub fn check_apriori_bound(
    path: &CadlagPath,
    config: &ModelConfig,
    slack: f64,
) -> std::result::Result<(), BoundViolation> {
    let x0 = norm(path.states[0]);
    let l1 = config.lambda1;
    let f0 = config.drift.sup_norm();
    for (i, ((&t, s), &c)) in path.times.iter().zip(&path.states).zip(&path.convolution).enumerate() {
        let decay = (-l1 * t).exp();
        let drift_part = f0 * (-(-l1 * t).exp_m1()) / l1;
        let bound = decay * x0 + std::f64::consts::SQRT_2 * drift_part + c.abs() + slack;
        let coord = decay * path.states[0][0].abs() + drift_part + c.abs() + slack;
        let v = norm(*s);
        if v > bound * (1.0 + 1e-12) {
            return Err(BoundViolation {
                index: i,
                time: t,
                value: v,
                bound,
            });
        }
        if s[0].abs() > coord * (1.0 + 1e-12) + 1e-300 {
            return Err(BoundViolation {
                index: i,
                time: t,
                value: s[0].abs(),
                bound: coord,
            });
        }
    }
    Ok(())
}

/// Documented slack for pathwise comparisons: `10 h (||F||_0 + ||F||_Lip diam)`.
pub fn scheme_slack(config: &ModelConfig, diameter: f64) -> f64 {
    10.0 * config.step_h * (config.drift.sup_norm() + config.drift.lipschitz() * diameter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use crate::stable_noise::sample_jump_stream;
    use approx::assert_abs_diff_eq;

    fn cfg(drift: Drift) -> ModelConfig {
        ModelConfig {
            drift,
            small_noise: SmallJumpScheme::Off,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn linear_homogeneous_solution_is_exact() {
        let c = cfg(Drift::Zero);
        let x0 = [1.5, -2.0];
        let path = integrate(&c, x0, &JumpStream::empty(5.0), &mut NoIncrements, 3.0).unwrap();
        for (&t, s) in path.times.iter().zip(&path.states) {
            assert_abs_diff_eq!(s[0], (-t).exp() * x0[0], epsilon = 1e-13);
            assert_abs_diff_eq!(s[1], (-50.0 * t).exp() * x0[1], epsilon = 1e-13);
        }
        assert_abs_diff_eq!(*path.times.last().unwrap(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn single_jump_lands_exactly() {
        let c = cfg(Drift::Zero);
        let x0 = [1.0, 1.0];
        let tau = 0.537;
        let eta = 2.25;
        let stream = JumpStream::from_arrivals(2.0, 0.0, vec![(tau, eta)]);
        let path = integrate(&c, x0, &stream, &mut NoIncrements, 1.0).unwrap();
        let left = left_limit_at(&path, tau).unwrap();
        assert_abs_diff_eq!(left[0], (-tau).exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(left[1], (-50.0 * tau).exp(), epsilon = 1e-13);
        let at = path.state_at(tau);
        assert_eq!(at[0], left[0] + eta);
        assert_eq!(at[1], left[1]);
        assert_abs_diff_eq!(at[0], (-tau).exp() + eta, epsilon = 1e-13);
    }

    #[test]
    fn left_limit_requires_a_jump_time() {
        let c = cfg(Drift::Zero);
        let path = integrate(&c, [1.0, 0.0], &JumpStream::empty(1.0), &mut NoIncrements, 1.0).unwrap();
        assert!(matches!(left_limit_at(&path, 0.5), Err(LabError::NotAJumpTime(_))));
    }

    #[test]
    fn constant_drift_relaxes_to_affine_equilibrium() {
        let c = ModelConfig {
            lambda1: 0.5,
            lambda2: 4.0,
            ..cfg(Drift::Constant { b1: 1.0, b2: -2.0 })
        };
        let x0 = [3.0, 1.0];
        let until = 20.0 / c.lambda1;
        let path = integrate(&c, x0, &JumpStream::empty(until), &mut NoIncrements, until).unwrap();
        // affine ODE oracle: x(t) = b/l + (x0 - b/l) e^{-l t}
        for (&t, s) in path.times.iter().zip(&path.states) {
            let e1 = 2.0 + (x0[0] - 2.0) * (-0.5 * t).exp();
            let e2 = -0.5 + (x0[1] + 0.5) * (-4.0 * t).exp();
            assert_abs_diff_eq!(s[0], e1, epsilon = 1e-12);
            assert_abs_diff_eq!(s[1], e2, epsilon = 1e-12);
        }
        let end = path.final_state();
        assert_abs_diff_eq!(end[0], 2.0, epsilon = 1e-6 + c.step_h);
        let at2 = path.state_at(20.0 / c.lambda2);
        assert_abs_diff_eq!(at2[1], -0.5, epsilon = 1e-6 + c.step_h);
    }

    #[test]
    fn jump_invariant_on_noisy_paths() {
        let c = ModelConfig {
            small_noise: SmallJumpScheme::Gaussian,
            ..ModelConfig::default()
        };
        let mut rng = trial_rng(3, 1);
        let stream = sample_jump_stream(&c.noise, c.waiting_t, 20.0, &mut rng).unwrap();
        let mut src = SchemeIncrements::new(&c, &mut rng);
        let path = integrate(&c, [0.2, -0.1], &stream, &mut src, 20.0).unwrap();
        assert_eq!(path.jump_marks.len(), stream.arrivals.len());
        for ((&i, &eta), left) in path.jump_marks.iter().zip(&path.jump_sizes).zip(&path.left_limits) {
            assert_eq!(path.states[i][0], left[0] + eta);
            assert_eq!(path.states[i][1], left[1]);
        }
        assert!(path.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn noise_free_step_convergence_is_first_order() {
        let c = cfg(Drift::SinCos { eps: 0.5 });
        let x0 = [1.0, -0.7];
        let end = |h: f64| {
            let ch = ModelConfig { step_h: h, ..c };
            integrate(&ch, x0, &JumpStream::empty(2.0), &mut NoIncrements, 2.0)
                .unwrap()
                .final_state()
        };
        let e1 = norm(sub(end(0.02), end(0.01)));
        let e2 = norm(sub(end(0.01), end(0.005)));
        let order = (e1 / e2).log2();
        assert!(order >= 0.9, "measured order {order}");
    }

    #[test]
    fn apriori_bound_noise_free_and_noisy() {
        let c = cfg(Drift::Zero);
        let path = integrate(&c, [3.0, 4.0], &JumpStream::empty(4.0), &mut NoIncrements, 4.0).unwrap();
        check_apriori_bound(&path, &c, 0.0).unwrap();

        let c = cfg(Drift::SinCos { eps: 0.5 });
        let path = integrate(&c, [3.0, 4.0], &JumpStream::empty(4.0), &mut NoIncrements, 4.0).unwrap();
        check_apriori_bound(&path, &c, 10.0 * c.step_h * c.drift.sup_norm()).unwrap();

        let c = ModelConfig::default();
        for seed in 0..100 {
            let mut rng = trial_rng(77, seed);
            let stream = sample_jump_stream(&c.noise, c.waiting_t, 10.0, &mut rng).unwrap();
            let mut src = SchemeIncrements::new(&c, &mut rng);
            let path = integrate(&c, [1.0, -1.0], &stream, &mut src, 10.0).unwrap();
            check_apriori_bound(&path, &c, scheme_slack(&c, 0.0)).unwrap();
        }
    }

    #[test]
    fn pair_difference_matches_separate_runs() {
        let c = ModelConfig::default();
        let mut rng = trial_rng(8, 0);
        let stream = sample_jump_stream(&c.noise, c.waiting_t, 5.0, &mut rng).unwrap();
        let incs: Vec<f64> = {
            let mut r = trial_rng(8, 1);
            let mut s = SchemeIncrements::new(&c, &mut r);
            (0..2000).map(|_| s.next_increment(c.step_h)).collect()
        };
        struct Replay<'a>(std::slice::Iter<'a, f64>);
        impl IncrementSource for Replay<'_> {
            fn next_increment(&mut self, dt: f64) -> f64 {
                // partial steps reuse the scaled regular draw
                self.0.next().copied().unwrap_or(0.0) * (dt / 0.01).sqrt()
            }
        }
        let pair = integrate_pair(&c, [0.4, 0.1], [-0.3, 0.2], &stream, &mut Replay(incs.iter()), 5.0).unwrap();
        let px = integrate(&c, [0.4, 0.1], &stream, &mut Replay(incs.iter()), 5.0).unwrap();
        let py = integrate(&c, [-0.3, 0.2], &stream, &mut Replay(incs.iter()), 5.0).unwrap();
        assert_eq!(pair.x, px);
        for ((a, b), d) in py.states.iter().zip(&pair.y.states).zip(&pair.diff) {
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-10);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-10);
            let direct = sub(*a, pair.x.states[pair.diff.iter().position(|q| q == d).unwrap()]);
            assert_abs_diff_eq!(direct[0], d[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let c = ModelConfig {
            drift: Drift::Constant { b1: f64::MAX, b2: 0.0 },
            step_h: 0.5,
            lambda1: 1e-300,
            ..cfg(Drift::Zero)
        };
        let err = integrate(&c, [f64::MAX, 0.0], &JumpStream::empty(10.0), &mut NoIncrements, 10.0).unwrap_err();
        assert!(matches!(err, LabError::Diverged { .. }));
    }

    #[test]
    fn config_validation_messages_name_fields() {
        let c = ModelConfig {
            p_moment: 1.5,
            ..Default::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("`p`"), "{msg}");
        let c = ModelConfig {
            lambda2: 0.5,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("lambda2"));
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::default().a4_holds(1.0));
    }

    #[test]
    fn drift_bounds_hold_on_random_points() {
        use rand::Rng;
        let f = Drift::SinCos { eps: 0.5 };
        let mut rng = trial_rng(12, 0);
        for _ in 0..10_000 {
            let x = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            let y = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            assert!(norm(f.eval(x)) <= f.sup_norm() + 1e-15);
            let dfx = norm(sub(f.eval(x), f.eval(y)));
            assert!(dfx <= f.lipschitz() * norm(sub(x, y)) + 1e-12);
            let via_diff = f.diff(x, sub(y, x));
            let direct = sub(f.eval(y), f.eval(x));
            assert_abs_diff_eq!(via_diff[0], direct[0], epsilon = 1e-12);
            assert_abs_diff_eq!(via_diff[1], direct[1], epsilon = 1e-12);
        }
        // tiny separations keep relative accuracy
        let d = f.diff([0.3, 0.2], [1e-200, 1e-200]);
        assert_abs_diff_eq!(d[0] / 1e-200, 0.5 * 0.2f64.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(d[1] / 1e-200, -0.5 * 0.3f64.sin(), epsilon = 1e-12);
    }

    #[test]
    fn scaled_difference_matches_plain_and_never_stalls() {
        let f = Drift::SinCos { eps: 0.5 };
        let x = [0.7, -1.3];
        let v = [0.8, -0.6];
        for e in [-40, -300, -900, -2000] {
            let scaled = f.diff_scaled(x, ScaledDiff { v, exp: e });
            // linearisation F'(x) v for tiny separations
            let lin = [0.5 * x[1].cos() * v[1], -0.5 * x[0].sin() * v[0]];
            assert_abs_diff_eq!(scaled[0], lin[0], epsilon = 1e-6);
            assert_abs_diff_eq!(scaled[1], lin[1], epsilon = 1e-6);
        }
        let d = f.diff_scaled(x, ScaledDiff::new(v));
        assert_eq!(d, f.diff(x, v));

        // a long contracting run keeps shrinking instead of parking on a subnormal
        let c = cfg(Drift::SinCos { eps: 0.5 });
        let stepper = Stepper::new(&c);
        let start = Carried {
            x: [0.3, 0.2],
            d: Some(ScaledDiff::new([0.0, 1e-3])),
            conv: 0.0,
        };
        let mut logs = Vec::new();
        stepper
            .run(start, 1000.0, &[], &mut NoIncrements, |n| {
                if let Node::Grid { d: Some(d), .. } = n {
                    logs.push(d.ln_norm());
                }
            })
            .unwrap();
        // below ln(2^-1074), where a plain f64 would be stuck
        assert!(logs.last().unwrap() < &-900.0, "{}", logs.last().unwrap());
        assert!(logs.windows(1000).all(|w| w[999] < w[0]));
    }

    #[test]
    fn path_csv_columns() {
        let c = cfg(Drift::Zero);
        let stream = JumpStream::from_arrivals(1.0, 0.0, vec![(0.25, 1.5)]);
        let path = integrate(&c, [1.0, 0.0], &stream, &mut NoIncrements, 0.5).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,x1,x2,jump_flag,jump_size");
        let flagged: Vec<&str> = lines.filter(|l| l.split(',').nth(3) == Some("1")).collect();
        assert_eq!(flagged.len(), 1);
        assert!(flagged[0].starts_with("0.25"));
    }
}
