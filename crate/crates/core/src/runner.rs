//! Experiment plumbing: config files, seeded batch runs, gate verdicts and
//! output files.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupling::{coupled_chain, CoupledChain, JumpCoupling};
use crate::error::Result;
use crate::io::{fmt17, write_atomic, write_json};
use crate::mixing::{check_a1, compute_report, estimate_mixing, pathwise_suite, A1Settings};
use crate::rng::{derive_seed, par_trials, trial_rng};
use crate::sde::{check_apriori_bound, integrate, norm, scheme_slack, sub, ModelConfig, SchemeIncrements, Vec2};
use crate::stable_noise::sample_jump_stream;
use crate::stats::binomial_sigma;
use crate::stopping::{
    detect_sigma, detect_sigma_bar, detect_sigma_dagger, detect_sigma_hat, detect_sigma_tilde, sigma_bar_sequence,
    tail_and_moment, StopTime, StoppingSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckAssumptions,
    SimulatePath,
    Couple,
    Stopping,
    Mixing,
    A1Check,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::CheckAssumptions,
        Command::SimulatePath,
        Command::Couple,
        Command::Stopping,
        Command::Mixing,
        Command::A1Check,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::CheckAssumptions => "check-assumptions",
            Command::SimulatePath => "simulate-path",
            Command::Couple => "couple",
            Command::Stopping => "stopping",
            Command::Mixing => "mixing",
            Command::A1Check => "a1-check",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// Settings for the `a1-check` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct A1Params {
    pub lambda: f64,
    pub p: f64,
    pub t_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub step_h: f64,
}

impl Default for A1Params {
    fn default() -> Self {
        A1Params {
            lambda: 1.0,
            p: 0.5,
            t_grid: vec![1.0, 2.0, 4.0, 8.0],
            xi_grid: vec![0.0, 0.5, 1.0, 2.0],
            step_h: 0.01,
        }
    }
}

/// Run-level settings shared by all commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunParams {
    pub n_trials: usize,
    /// Chain length for `couple` and `stopping`.
    pub horizon_steps: usize,
    pub seed: u64,
    pub x: Vec2,
    pub y: Vec2,
    /// Mixing time grid `0, t_step, ..., t_max`.
    pub t_max: f64,
    pub t_step: f64,
    /// Exponential-moment parameter; half the fitted tail rate when absent.
    pub vartheta: Option<f64>,
    /// Number of `sigma_bar_k` compositions reported.
    pub sigma_bar_levels: usize,
    pub a1: A1Params,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            n_trials: 2000,
            horizon_steps: 50,
            seed: 0,
            x: [0.3, 0.2],
            y: [0.305, 0.2],
            t_max: 30.0,
            t_step: 0.25,
            vartheta: None,
            sigma_bar_levels: 5,
            a1: A1Params::default(),
        }
    }
}

impl RunParams {
    fn validate(&self) -> Result<()> {
        use crate::error::invalid;
        if self.n_trials == 0 {
            return Err(invalid("run.n_trials", "must be >= 1"));
        }
        if self.horizon_steps == 0 {
            return Err(invalid("run.horizon_steps", "must be >= 1"));
        }
        if !(self.t_step > 0.0 && self.t_max >= self.t_step && self.t_max.is_finite()) {
            return Err(invalid("run.t_step", "need 0 < t_step <= t_max < inf"));
        }
        if !self.x.iter().chain(&self.y).all(|v| v.is_finite()) {
            return Err(invalid("run.x", "initial states must be finite"));
        }
        if self.vartheta.is_some_and(|v| !v.is_finite()) {
            return Err(invalid("run.vartheta", "must be finite"));
        }
        Ok(())
    }

    pub fn t_grid(&self) -> Vec<f64> {
        let n = (self.t_max / self.t_step + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.t_step).collect()
    }
}

/// The on-disk config document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunParams,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile = serde_json::from_str(text)?;
        cfg.model.validate()?;
        cfg.run.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: Command,
    pub config: ModelConfig,
    pub run: RunParams,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(command: Command, file: ConfigFile, out_dir: PathBuf) -> Self {
        ExperimentSpec {
            command,
            config: file.model,
            run: file.run,
            out_dir,
        }
    }

    pub fn seed(&self) -> u64 {
        self.run.seed
    }

    pub fn n_trials(&self) -> usize {
        self.run.n_trials
    }

    pub fn horizon_steps(&self) -> usize {
        self.run.horizon_steps
    }
}

/// One pass/fail check attached to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Gate {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Gate {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn verdict_line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub gates: Vec<Gate>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }
}

/// Header shared by every JSON output.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: Command,
    seed: u64,
    config: &'a ModelConfig,
    run: &'a RunParams,
    gates: &'a [Gate],
    result: T,
}

struct Writer<'a> {
    spec: &'a ExperimentSpec,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn json<T: Serialize>(&mut self, name: &str, gates: &[Gate], result: T) -> Result<()> {
        let path = self.spec.out_dir.join(name);
        let env = Envelope {
            command: self.spec.command,
            seed: self.spec.seed(),
            config: &self.spec.config,
            run: &self.spec.run,
            gates,
            result,
        };
        write_json(&path, &env)?;
        self.files.push(path);
        Ok(())
    }

    /// CSV preceded by `#` lines holding the command, seed and resolved config.
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.spec.out_dir.join(name);
        let config = serde_json::to_string(&self.spec.config)?;
        let run = serde_json::to_string(&self.spec.run)?;
        let command = self.spec.command;
        let seed = self.spec.seed();
        write_atomic(&path, |w| {
            writeln!(w, "# command: {command}")?;
            writeln!(w, "# seed: {seed}")?;
            writeln!(w, "# config: {config}")?;
            writeln!(w, "# run: {run}")?;
            body(w)
        })?;
        self.files.push(path);
        Ok(())
    }
}

/// Execute one experiment and write its artifacts into `spec.out_dir`.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.config.validate()?;
    spec.run.validate()?;
    let mut w = Writer {
        spec,
        files: Vec::new(),
    };
    let gates = match spec.command {
        Command::CheckAssumptions => run_check(spec, &mut w)?,
        Command::SimulatePath => run_path(spec, &mut w)?,
        Command::Couple => run_couple(spec, &mut w)?,
        Command::Stopping => run_stopping(spec, &mut w)?,
        Command::Mixing => run_mixing(spec, &mut w)?,
        Command::A1Check => run_a1(spec, &mut w)?,
    };
    Ok(RunOutcome { gates, files: w.files })
}

fn run_check(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<Vec<Gate>> {
    let r = compute_report(&spec.config)?;
    let pathwise = pathwise_suite(&spec.config, 100, 10.0, derive_seed(spec.seed(), "pathwise"))?;
    let gates = vec![
        Gate::new("A3", !r.a3_marginal, format!("beta0 = {} < 2", fmt17(r.beta0))),
        Gate::new(
            "A4",
            r.a4_holds,
            format!("gamma_K = {} >= 2 beta2 Lip", fmt17(r.gamma_k)),
        ),
        Gate::new("theta", r.theta_below_half, format!("theta = {} < 1/2", fmt17(r.theta))),
        Gate::new(
            "d_max",
            r.d_below_d_max,
            format!("d = {} < d_max = {}", fmt17(spec.config.d_close), fmt17(r.d_max)),
        ),
        Gate::new(
            "T0",
            r.t_above_t0,
            format!("T = {} > T0 = {}", fmt17(spec.config.waiting_t), fmt17(r.t0)),
        ),
        Gate::new(
            "pathwise",
            pathwise.pass(),
            format!(
                "{} pairs, violations {}/{}/{}",
                pathwise.pairs,
                pathwise.gronwall.violations,
                pathwise.contraction.violations,
                pathwise.second_coordinate.violations
            ),
        ),
    ];
    #[derive(Serialize)]
    struct Out {
        report: crate::mixing::AssumptionReport,
        hypotheses_hold: bool,
        lambda2_for_theta_half: Option<f64>,
        pathwise: crate::mixing::PathwiseReport,
    }
    w.json(
        "report.json",
        &gates,
        Out {
            hypotheses_hold: r.hypotheses_hold(),
            lambda2_for_theta_half: lambda2_threshold(&spec.config),
            report: r,
            pathwise,
        },
    )?;
    Ok(gates)
}

/// Smallest `lambda2` with `theta < 1/2`, by bisection; `theta` decreases in
/// `lambda2` with everything else fixed.
pub fn lambda2_threshold(config: &ModelConfig) -> Option<f64> {
    let beta = crate::coupling::HolderConstants::for_stable(&config.noise);
    let below = |l2: f64| {
        let c = ModelConfig { lambda2: l2, ..*config };
        crate::coupling::theta(&c, beta).below_half
    };
    let (mut lo, mut hi) = (1e-9, 1.0);
    while !below(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    if below(lo) {
        return Some(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Some(hi)
}

fn run_path(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<Vec<Gate>> {
    let cfg = &spec.config;
    let x0 = spec.run.x;
    let results: Vec<Result<(crate::sde::CadlagPath, bool)>> = par_trials(spec.seed(), spec.n_trials(), |_, rng| {
        let stream = sample_jump_stream(&cfg.noise, 0.0, cfg.horizon, rng)?;
        let mut src = SchemeIncrements::new(cfg, rng);
        let path = integrate(cfg, x0, &stream, &mut src, cfg.horizon)?;
        let ok = check_apriori_bound(&path, cfg, scheme_slack(cfg, 0.0)).is_ok();
        Ok((path, ok))
    });
    let results: Vec<(crate::sde::CadlagPath, bool)> = results
        .into_iter()
        .collect::<Result<_>>()
        .map_err(|e| e.in_op("simulate-path"))?;
    let bound_failures = results.iter().filter(|r| !r.1).count();
    let first = &results[0].0;
    let jumps: Vec<usize> = results.iter().map(|r| r.0.jump_marks.len()).collect();
    let gates = vec![Gate::new(
        "apriori_bound",
        bound_failures == 0,
        format!("{bound_failures} of {} paths exceed the bound", results.len()),
    )];
    w.csv("path.csv", |out| first.write_csv(out))?;
    #[derive(Serialize)]
    struct Out {
        paths: usize,
        mean_jumps: f64,
        final_state: Vec2,
        bound_failures: usize,
    }
    w.json(
        "path.json",
        &gates,
        Out {
            paths: results.len(),
            mean_jumps: jumps.iter().sum::<usize>() as f64 / jumps.len() as f64,
            final_state: first.final_state(),
            bound_failures,
        },
    )?;
    Ok(gates)
}

fn chains(spec: &ExperimentSpec, label: &str) -> Result<Vec<CoupledChain>> {
    let cfg = &spec.config;
    let (x, y) = (spec.run.x, spec.run.y);
    let steps = spec.horizon_steps();
    par_trials(derive_seed(spec.seed(), label), spec.n_trials(), |_, rng| {
        coupled_chain(cfg, x, y, steps, rng)
    })
    .into_iter()
    .collect()
}

fn run_couple(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<Vec<Gate>> {
    let all = chains(spec, "couple")?;
    let dishonest = all
        .iter()
        .flat_map(|c| &c.records)
        .filter(|r| r.coalesced_at_k && r.s_x[0] != r.s_y[0])
        .count();
    let steps = spec.horizon_steps();
    let coalesced_by_step: Vec<f64> = (0..steps)
        .map(|k| all.iter().filter(|c| c.records[k].coalesced_at_k).count() as f64 / all.len() as f64)
        .collect();
    let mut gates = vec![Gate::new(
        "coalescence_flags",
        dishonest == 0,
        format!("{dishonest} coalesced records with unequal first coordinates"),
    )];
    if spec.run.x == spec.run.y {
        let all_coalesced = coalesced_by_step.iter().all(|&f| f == 1.0);
        gates.push(Gate::new("equal_start", all_coalesced, "x = y: every step coalesced"));
    }
    w.csv("chain.csv", |out| all[0].write_csv(out))?;
    #[derive(Serialize)]
    struct Out {
        chains: usize,
        steps: usize,
        coalesced_fraction_by_step: Vec<f64>,
        final_distance_mean: f64,
    }
    let fd = all
        .iter()
        .map(|c| c.records[steps - 1].distance().min(1.0))
        .sum::<f64>()
        / all.len() as f64;
    w.json(
        "couple.json",
        &gates,
        Out {
            chains: all.len(),
            steps,
            coalesced_fraction_by_step: coalesced_by_step,
            final_distance_mean: fd,
        },
    )?;
    Ok(gates)
}

fn run_stopping(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<Vec<Gate>> {
    let cfg = &spec.config;
    let (d, m) = (cfg.d_close, cfg.m_radius);
    let h = spec.horizon_steps();
    let all = chains(spec, "stopping")?;
    let n = all.len();
    let mut rng = trial_rng(derive_seed(spec.seed(), "bootstrap"), 0);

    let collect = |f: &dyn Fn(&CoupledChain) -> StopTime| all.iter().map(f).collect::<Vec<_>>();
    let tilde = collect(&|c| detect_sigma_tilde(c, m));
    let sigma = collect(&|c| detect_sigma(c, d));
    let hat = collect(&detect_sigma_hat);
    let dagger = collect(&|c| detect_sigma_dagger(c, d));
    let bar = collect(&|c| detect_sigma_bar(c, d, m));
    let levels = spec.run.sigma_bar_levels.max(1);
    let seqs: Vec<Vec<StopTime>> = all.iter().map(|c| sigma_bar_sequence(c, d, m, levels)).collect();

    let mut summaries: Vec<StoppingSummary> = Vec::new();
    let mut summarize = |name: &str, s: &[StopTime], rng: &mut _| {
        // fit once without a moment to pick vartheta, then summarise at it
        let vt = spec.run.vartheta.unwrap_or_else(|| {
            let probe = tail_and_moment(name, s, h, 0.0, rng);
            probe.geom_rate.map_or(0.0, |r| 0.5 * r.abs())
        });
        summaries.push(tail_and_moment(name, s, h, vt, rng));
    };
    summarize("sigma_tilde", &tilde, &mut rng);
    summarize("sigma", &sigma, &mut rng);
    summarize("sigma_hat", &hat, &mut rng);
    summarize("sigma_dagger", &dagger, &mut rng);
    summarize("sigma_bar", &bar, &mut rng);
    for k in 0..levels {
        let col: Vec<StopTime> = seqs.iter().map(|s| s[k]).collect();
        summarize(&format!("sigma_bar_{}", k + 1), &col, &mut rng);
    }

    let mut gates = Vec::new();
    let outside_ball = bar
        .iter()
        .zip(&all)
        .filter(|(s, c)| s.hit().is_some_and(|k| c.records[k - 1].norm_sum() > m))
        .count();
    gates.push(Gate::new(
        "sigma_bar_in_ball",
        outside_ball == 0,
        format!("{outside_ball} exits outside the ball"),
    ));
    let misordered = (0..n)
        .filter(|&i| match (sigma[i], dagger[i], bar[i]) {
            (StopTime::Hit(a), StopTime::Hit(b), StopTime::Hit(c)) => !(a <= b && b <= c),
            _ => false,
        })
        .count();
    gates.push(Gate::new(
        "composition_order",
        misordered == 0,
        format!("{misordered} chains with sigma > dagger > bar"),
    ));
    if norm(sub(spec.run.y, spec.run.x)) <= d {
        let p = hat.iter().filter(|s| s.is_censored()).count() as f64 / n as f64;
        let sig = binomial_sigma(0.5, n);
        gates.push(Gate::new(
            "sigma_hat_survives",
            p > 0.5 - 3.0 * sig,
            format!(
                "P(sigma_hat > {h}) = {} vs 1/2 - 3 sigma = {}",
                fmt17(p),
                fmt17(0.5 - 3.0 * sig)
            ),
        ));
    }
    for k in 0..levels {
        let p = seqs.iter().filter(|s| !s[k].is_censored()).count() as f64 / n as f64;
        let bound = 0.5f64.powi(k as i32 + 1);
        let lim = bound + 3.0 * binomial_sigma(bound, n);
        gates.push(Gate::new(
            &format!("sigma_bar_{}", k + 1),
            p <= lim,
            format!("P(finite) = {} <= {}", fmt17(p), fmt17(lim)),
        ));
    }
    w.csv("stopping.csv", |out| {
        writeln!(out, "name,k,survival")?;
        for s in &summaries {
            for (k, p) in s.tail.iter().enumerate() {
                writeln!(out, "{},{k},{}", s.name, fmt17(*p))?;
            }
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Out<'a> {
        chains: usize,
        horizon_steps: usize,
        summaries: &'a [StoppingSummary],
    }
    w.json(
        "stopping.json",
        &gates,
        Out {
            chains: n,
            horizon_steps: h,
            summaries: &summaries,
        },
    )?;
    Ok(gates)
}

fn run_mixing(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<Vec<Gate>> {
    let grid = spec.run.t_grid();
    let r = estimate_mixing(
        &spec.config,
        spec.run.x,
        spec.run.y,
        &grid,
        spec.n_trials(),
        JumpCoupling::Maximal,
        derive_seed(spec.seed(), "mixing"),
    )?;
    let decays = matches!((r.c_hat, r.c_ci), (Some(c), Some((lo, _))) if c > 0.0 && lo > 0.0);
    let detail = match (r.c_hat, r.c_ci) {
        (Some(c), Some((lo, hi))) => format!("c_hat = {} (95% CI {}..{})", fmt17(c), fmt17(lo), fmt17(hi)),
        _ => "no fitted segment".to_string(),
    };
    let gates = vec![
        Gate::new("mixing_rate", decays, detail),
        Gate::new(
            "regime",
            r.regime.hypotheses_hold,
            format!(
                "theta = {}, hypotheses hold = {}",
                fmt17(r.regime.theta),
                r.regime.hypotheses_hold
            ),
        ),
    ];
    w.csv("mixing.csv", |out| r.write_csv(out))?;
    w.json("mixing.json", &gates, &r)?;
    Ok(gates)
}

fn run_a1(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<Vec<Gate>> {
    let a = &spec.run.a1;
    let settings = A1Settings {
        spec: spec.config.noise,
        small_noise: spec.config.small_noise,
        lambda: a.lambda,
        p: a.p,
        t_grid: a.t_grid.clone(),
        xi_grid: a.xi_grid.clone(),
        n: spec.n_trials(),
        step_h: a.step_h,
    };
    let r = check_a1(&settings, derive_seed(spec.seed(), "a1"))?;
    let gates = vec![
        Gate::new("a1_char_function", r.cf_pass, format!("{} grid points", r.cf.len())),
        Gate::new("a1_moments", r.moments_match, "p-th moments match the stable law"),
        Gate::new(
            "a1_flat",
            r.flat_for_large_t,
            match r.large_t_slope_ci {
                Some((lo, hi)) => format!("large-t slope CI {}..{}", fmt17(lo), fmt17(hi)),
                None => "too few times for a slope".into(),
            },
        ),
    ];
    w.csv("a1.csv", |out| {
        writeln!(out, "t,xi,cf_empirical,cf_exact,tolerance")?;
        for p in &r.cf {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt17(p.t),
                fmt17(p.xi),
                fmt17(p.empirical),
                fmt17(p.exact),
                fmt17(p.tolerance)
            )?;
        }
        Ok(())
    })?;
    w.json("a1.json", &gates, &r)?;
    Ok(gates)
}

/// The shipped default preset as JSON text.
pub fn default_preset_json() -> String {
    serde_json::to_string_pretty(&ConfigFile::default()).expect("preset serialises")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(command: Command, dir: &Path) -> ExperimentSpec {
        let mut file = ConfigFile::default();
        file.run.n_trials = 200;
        file.run.horizon_steps = 20;
        file.run.t_max = 5.0;
        file.run.t_step = 0.5;
        file.run.a1.t_grid = vec![1.0, 2.0];
        file.run.seed = 11;
        ExperimentSpec::new(command, file, dir.to_path_buf())
    }

    #[test]
    fn preset_round_trips() {
        let text = default_preset_json();
        let parsed = ConfigFile::parse(&text).unwrap();
        assert_eq!(parsed, ConfigFile::default());
    }

    #[test]
    fn bad_config_names_field() {
        let mut v: serde_json::Value = serde_json::from_str(&default_preset_json()).unwrap();
        v["model"]["p"] = serde_json::json!(3.0);
        let err = ConfigFile::parse(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("`p`"), "{err}");
        v["model"]["p"] = serde_json::json!(0.5);
        v["model"]["lamda1"] = serde_json::json!(1.0);
        let err = ConfigFile::parse(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("lamda1"), "{err}");
    }

    #[test]
    fn lambda2_threshold_brackets_theta_half() {
        let c = ModelConfig::default();
        let l = lambda2_threshold(&c).unwrap();
        let beta = crate::coupling::HolderConstants::for_stable(&c.noise);
        let th = |l2: f64| crate::coupling::theta(&ModelConfig { lambda2: l2, ..c }, beta).theta;
        assert!(th(l) < 0.5 && th(l * (1.0 - 1e-6)) >= 0.5, "{l}");
        assert!(l < c.lambda2);
    }

    #[test]
    fn commands_parse() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("nope".parse::<Command>().is_err());
    }

    #[test]
    fn every_command_runs_and_is_reproducible() {
        for c in Command::ALL {
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            let ra = run(&spec(c, a.path())).unwrap();
            let rb = run(&spec(c, b.path())).unwrap();
            assert_eq!(ra.gates, rb.gates, "{c}");
            assert!(!ra.files.is_empty());
            for (fa, fb) in ra.files.iter().zip(&rb.files) {
                let ta = std::fs::read(fa).unwrap();
                let tb = std::fs::read(fb).unwrap();
                assert_eq!(ta, tb, "{c}: {}", fa.display());
                let text = String::from_utf8(ta).unwrap();
                assert!(
                    text.contains("\"lambda2\""),
                    "{c}: config missing from {}",
                    fa.display()
                );
                assert!(text.contains("seed"), "{c}");
            }
        }
    }

    #[test]
    fn equal_start_couple_passes() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(Command::Couple, dir.path());
        s.run.y = s.run.x;
        let out = run(&s).unwrap();
        assert!(out.all_pass(), "{:?}", out.gates);
        assert!(out.gates.iter().any(|g| g.name == "equal_start"));
    }

    #[test]
    fn check_assumptions_preset_passes() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&spec(Command::CheckAssumptions, dir.path())).unwrap();
        assert!(out.all_pass(), "{:?}", out.gates);
        let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["report"]["A4_holds"], serde_json::json!(true));
    }
}
