use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::baselines::Strategy;
use crate::datasets::{generate_quadratic_federation, QuadraticTask};
use crate::error::{Error, Result};
use crate::federation::{
    recursion_bound_report, run_rounds, Federation, History, RunConfig, ScheduleSource,
};
use crate::gda::gda_remainder;
use crate::objectives::{ObjectiveSpec, Region};
use crate::scheduler::{
    brute_force_schedule, error_cost, greedy_schedule, uniform_plan, CostModel, ScheduleParams,
};
use crate::vector::ParamVector;

pub const IDENTITY_TOL: f64 = 1e-10;
pub const LINEARIZED_PASS_RATE: f64 = 0.99;
pub const QUADRATIC_REMAINDER_TOL: f64 = 1e-12;
pub const RESIDUAL_SLACK: f64 = 1.10;
pub const FEDNOVA_REL_TOL: f64 = 1e-12;
const OBJECTIVE_REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Identity,
    Gda,
    Scheduler,
    Bounds,
    Baselines,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [
        Suite::Identity,
        Suite::Gda,
        Suite::Scheduler,
        Suite::Bounds,
        Suite::Baselines,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Identity => "identity",
            Suite::Gda => "gda",
            Suite::Scheduler => "scheduler",
            Suite::Bounds => "bounds",
            Suite::Baselines => "baselines",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .iter()
            .chain(&[Suite::All])
            .find(|x| x.name() == s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown suite {s:?}")))
    }
}

/// Outcome of one property across all of its cases.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    /// Cases that must hold; equals `checked` unless the property is
    /// rate-gated.
    pub required: usize,
    /// Diagnostic properties are reported but never fail the suite.
    pub gating: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn gate(name: &str, checked: usize, failures: usize, detail: String) -> Self {
        Self {
            name: name.into(),
            checked,
            failures,
            required: checked,
            gating: true,
            detail,
        }
    }

    fn rate(name: &str, checked: usize, failures: usize, min_rate: f64, detail: String) -> Self {
        Self {
            required: (min_rate * checked as f64).ceil() as usize,
            ..Self::gate(name, checked, failures, detail)
        }
    }

    fn diagnostic(name: &str, checked: usize, failures: usize, detail: String) -> Self {
        Self {
            gating: false,
            ..Self::gate(name, checked, failures, detail)
        }
    }

    pub fn passed(&self) -> bool {
        !self.gating || self.checked - self.failures >= self.required
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub properties: Vec<PropertyCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyCheck::passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "[{}] {}",
            self.suite.name(),
            if self.passed() { "PASS" } else { "FAIL" }
        )?;
        for p in &self.properties {
            let tag = match (p.gating, p.passed()) {
                (false, _) => "info",
                (true, true) => "ok",
                (true, false) => "FAIL",
            };
            writeln!(
                f,
                "  {tag:<4} {:<40} {}/{} ok  {}",
                p.name,
                p.checked - p.failures,
                p.checked,
                p.detail
            )?;
        }
        Ok(())
    }
}

pub fn verify(suite: Suite) -> Result<Vec<SuiteReport>> {
    match suite {
        Suite::All => Suite::EACH.iter().map(|&s| verify_one(s)).collect(),
        s => Ok(vec![verify_one(s)?]),
    }
}

fn verify_one(suite: Suite) -> Result<SuiteReport> {
    let properties = match suite {
        Suite::Identity => identity_suite()?,
        Suite::Gda => gda_suite()?,
        Suite::Scheduler => scheduler_suite()?,
        Suite::Bounds => bounds_suite()?,
        Suite::Baselines => baselines_suite()?,
        Suite::All => unreachable!(),
    };
    Ok(SuiteReport { suite, properties })
}

/// Quadratic federation used by the trajectory suites, with unit step costs.
pub fn quadratic_fixture(num_clients: usize, dim: usize, seed: u64) -> Result<Federation> {
    let fed = generate_quadratic_federation(&QuadraticTask::new(num_clients, dim, 1.0), seed)?;
    fed.to_federation(&vec![1.0; num_clients], &vec![0.0; num_clients])
}

/// Step patterns of the identity matrix: three constant schedules and a
/// mixed one cycling through 1, 2 and 5.
pub fn identity_schedules(num_clients: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = [1, 2, 5].iter().map(|&t| vec![t; num_clients]).collect();
    out.push((0..num_clients).map(|i| [1, 2, 5][(i + 1) % 3]).collect());
    out
}

struct BoundTally {
    rounds: usize,
    identity_failures: usize,
    worst_identity: f64,
    non_vacuous: usize,
    linearized_ok: usize,
    drift_free_violations: usize,
}

fn tally_history(fed: &Federation, history: &History, tally: &mut BoundTally) -> Result<()> {
    for r in &history.rounds {
        tally.rounds += 1;
        let res = r.identity_residual.ok_or(Error::MissingOptimum)?;
        tally.worst_identity = tally.worst_identity.max(res);
        if res > IDENTITY_TOL {
            tally.identity_failures += 1;
        }
        let theta = 2.0 * r.trace.eta * fed.constants.mu * r.trace.aggregates.e;
        let rho = theta / 2.0;
        if !(rho > 0.0 && rho < 1.0) {
            continue;
        }
        let report = recursion_bound_report(&r.trace, &fed.constants, rho)?;
        if !report.drift_free.satisfied {
            tally.drift_free_violations += 1;
        }
        if !report.linearized.vacuous {
            tally.non_vacuous += 1;
            if report.linearized.satisfied {
                tally.linearized_ok += 1;
            }
        }
    }
    Ok(())
}

fn identity_suite() -> Result<Vec<PropertyCheck>> {
    let mut tally = BoundTally {
        rounds: 0,
        identity_failures: 0,
        worst_identity: 0.0,
        non_vacuous: 0,
        linearized_ok: 0,
        drift_free_violations: 0,
    };
    let mut runs = 0;
    for n in [1, 2, 5] {
        for d in [1, 10] {
            for seed in 0..3 {
                let fed = quadratic_fixture(n, d, seed)?;
                for steps in identity_schedules(n) {
                    let h = run_rounds(
                        &fed,
                        &RunConfig::rounds(0.05, 20),
                        &Strategy::Fedavg,
                        &ScheduleSource::PerClient(steps),
                    )?;
                    tally_history(&fed, &h, &mut tally)?;
                    runs += 1;
                }
            }
        }
    }
    Ok(vec![
        PropertyCheck::gate(
            "error identity residual <= 1e-10",
            tally.rounds,
            tally.identity_failures,
            format!("{runs} runs, worst residual {:.3e}", tally.worst_identity),
        ),
        PropertyCheck::rate(
            "linearized recursion (rho = theta/2)",
            tally.non_vacuous,
            tally.non_vacuous - tally.linearized_ok,
            LINEARIZED_PASS_RATE,
            "non-vacuous rounds, >= 99% required".into(),
        ),
        PropertyCheck::diagnostic(
            "drift-free recursion form",
            tally.rounds,
            tally.drift_free_violations,
            "known to fail when drift is nonzero".into(),
        ),
    ])
}

fn random_psd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.transpose() * g / dim as f64
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> ParamVector {
    ParamVector::from_vec(
        (0..dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

/// Random objective of kind `k % 4`: quadratic, logistic, quartic or
/// exponential.
pub fn random_objective(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Result<ObjectiveSpec> {
    match k % 4 {
        0 => ObjectiveSpec::quadratic(random_psd(rng, dim), random_vector(rng, dim, 1.0)),
        1 => {
            let n = 16;
            let x = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            ObjectiveSpec::logistic(x, y, rng.random_range(0.0..0.5))
        }
        2 => ObjectiveSpec::quartic(random_vector(rng, dim, 1.0), rng.random_range(0.1..1.0)),
        _ => ObjectiveSpec::exponential(dim),
    }
}

/// Random `δ` with `0 < ‖δ‖ ≤ 1`.
pub fn random_delta(rng: &mut ChaCha8Rng, dim: usize) -> ParamVector {
    let v = random_vector(rng, dim, 1.0);
    let r: f64 = rng.random_range(1e-3..=1.0);
    v.scaled(r / v.norm().max(f64::MIN_POSITIVE))
}

fn gda_suite() -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6da);
    let draws = 1000;
    let (mut violations, mut quad, mut quad_bad) = (0, 0, 0);
    let mut worst_ratio: f64 = 0.0;
    for k in 0..draws {
        let dim = rng.random_range(1..=5);
        let obj = random_objective(&mut rng, k, dim)?;
        let w = random_vector(&mut rng, dim, 1.0);
        let delta = random_delta(&mut rng, dim);
        let l = obj
            .constants_on(&Region::enclosing_segment(&w, &delta))?
            .gda_lipschitz();
        let rep = gda_remainder(&obj, &w, &delta, l)?;
        if !rep.satisfied {
            violations += 1;
        }
        if rep.bound > 0.0 {
            worst_ratio = worst_ratio.max(rep.remainder_norm / rep.bound);
        }
        if obj.is_quadratic() {
            quad += 1;
            if rep.remainder_norm > QUADRATIC_REMAINDER_TOL {
                quad_bad += 1;
            }
        }
    }
    Ok(vec![
        PropertyCheck::gate(
            "remainder <= (L/2)|delta|^2",
            draws,
            violations,
            format!("max remainder/bound {worst_ratio:.3}"),
        ),
        PropertyCheck::gate(
            "quadratic remainder <= 1e-12",
            quad,
            quad_bad,
            String::new(),
        ),
    ])
}

fn objectives_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= OBJECTIVE_REL_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Random instance with a common step cost and at most `max_steps` steps
/// in any maximal plan.
pub fn uniform_cost_instance(
    rng: &mut ChaCha8Rng,
    max_steps: usize,
) -> Result<(CostModel, Vec<f64>, ScheduleParams)> {
    let n = rng.random_range(1..=4usize);
    let c = rng.random_range(0.5..2.0);
    let delays: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let steps = rng.random_range(n..=max_steps.max(n));
    let slack = rng.random_range(0.0..0.99) * c;
    let budget = delays.iter().sum::<f64>() + c * steps as f64 + slack;
    let weights = random_weights(rng, n);
    let params = ScheduleParams::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0))?;
    Ok((CostModel::new(vec![c; n], delays, budget)?, weights, params))
}

/// Random instance with step costs spread over `[0.5, 4]`.
pub fn heterogeneous_instance(
    rng: &mut ChaCha8Rng,
) -> Result<(CostModel, Vec<f64>, ScheduleParams)> {
    let n = rng.random_range(2..=5usize);
    let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
    let delays: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let budget = costs.iter().chain(&delays).sum::<f64>() + rng.random_range(0.0..15.0);
    let weights = random_weights(rng, n);
    let params = ScheduleParams::new(rng.random_range(0.01..2.0), rng.random_range(0.01..2.0))?;
    Ok((CostModel::new(costs, delays, budget)?, weights, params))
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn scheduler_suite() -> Result<Vec<PropertyCheck>> {
    let worked = CostModel::new(vec![1.0, 2.0], vec![0.0, 0.0], 6.0)?;
    let unit = ScheduleParams::new(1.0, 1.0)?;
    let g = greedy_schedule(&worked, &[0.5, 0.5], &unit)?;
    let b = brute_force_schedule(&worked, &[0.5, 0.5], &unit)?;
    let worked_ok = g.steps == [2, 2] && b.steps == [2, 2];

    let mut rng = ChaCha8Rng::seed_from_u64(0x5c4ed);
    let uniform_cases = 500;
    let mut uniform_bad = 0;
    for _ in 0..uniform_cases {
        let (cost, w, p) = uniform_cost_instance(&mut rng, 12)?;
        let g = greedy_schedule(&cost, &w, &p)?;
        let b = brute_force_schedule(&cost, &w, &p)?;
        if !objectives_match(g.objective_value, b.objective_value) {
            uniform_bad += 1;
        }
    }

    let hetero_cases = 500;
    let (mut infeasible, mut not_maximal, mut above_uniform, mut above_oracle) = (0, 0, 0, 0);
    for _ in 0..hetero_cases {
        let (cost, w, p) = heterogeneous_instance(&mut rng)?;
        let g = greedy_schedule(&cost, &w, &p)?;
        if !cost.is_feasible(&g.steps) {
            infeasible += 1;
        }
        if !cost.is_maximal(&g.steps) {
            not_maximal += 1;
        }
        let u = error_cost(&uniform_plan(&cost)?, &w, &p)?;
        if g.objective_value > u && !objectives_match(g.objective_value, u) {
            above_uniform += 1;
        }
        let b = brute_force_schedule(&cost, &w, &p)?;
        if !objectives_match(g.objective_value, b.objective_value) {
            above_oracle += 1;
        }
    }
    Ok(vec![
        PropertyCheck::gate(
            "worked instance -> (2, 2)",
            1,
            usize::from(!worked_ok),
            format!("greedy {:?}, oracle {:?}", g.steps, b.steps),
        ),
        PropertyCheck::gate(
            "uniform cost: greedy == oracle",
            uniform_cases,
            uniform_bad,
            String::new(),
        ),
        PropertyCheck::gate(
            "heterogeneous: feasible",
            hetero_cases,
            infeasible,
            String::new(),
        ),
        PropertyCheck::gate(
            "heterogeneous: maximal",
            hetero_cases,
            not_maximal,
            String::new(),
        ),
        PropertyCheck::gate(
            "heterogeneous: objective <= uniform plan",
            hetero_cases,
            above_uniform,
            "uniform plan is usually not maximal".into(),
        ),
        PropertyCheck::diagnostic(
            "heterogeneous: greedy == oracle",
            hetero_cases,
            above_oracle,
            "greedy is not optimal for unequal costs".into(),
        ),
    ])
}

/// Late-round residual check on one history: returns
/// `(sup_late ‖e‖², (1 + 1/θ)·max Δₖ/θ′)` or `None` when `θ′ ≤ 0`.
pub fn residual_check(fed: &Federation, history: &History) -> Result<Option<(f64, f64)>> {
    let mut theta = None;
    let mut worst = 0.0_f64;
    for r in &history.rounds {
        let t = 2.0 * r.trace.eta * fed.constants.mu * r.trace.aggregates.e;
        if !(t > 0.0 && t < 2.0) {
            return Ok(None);
        }
        let rep = recursion_bound_report(&r.trace, &fed.constants, t / 2.0)?;
        if rep.linearized.vacuous {
            return Ok(None);
        }
        worst = worst.max(rep.linearized.delta_k / rep.linearized.theta_prime);
        theta = Some(t);
    }
    let Some(theta) = theta else { return Ok(None) };
    let late = &history.rounds[history.rounds.len() / 2..];
    let sup = late.iter().filter_map(|r| r.error_sq).fold(0.0, f64::max);
    Ok(Some((sup, (1.0 + 1.0 / theta) * worst)))
}

fn bounds_suite() -> Result<Vec<PropertyCheck>> {
    let (mut checked, mut bad, mut skipped) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for n in [1, 2, 5] {
        for d in [1, 10] {
            for t in [1, 2, 5] {
                for seed in 0..2 {
                    let fed = quadratic_fixture(n, d, 100 + seed)?;
                    let h = run_rounds(
                        &fed,
                        &RunConfig::rounds(0.05, 200),
                        &Strategy::Fedavg,
                        &ScheduleSource::Constant(t),
                    )?;
                    match residual_check(&fed, &h)? {
                        None => skipped += 1,
                        Some((sup, bound)) => {
                            checked += 1;
                            worst = worst.max(sup / bound);
                            if sup > RESIDUAL_SLACK * bound {
                                bad += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(vec![PropertyCheck::gate(
        "late sup |e|^2 <= 1.1 (1+1/theta) max Delta/theta'",
        checked,
        bad,
        format!("{skipped} vacuous runs skipped, max ratio {worst:.3e}"),
    )])
}

fn baselines_suite() -> Result<Vec<PropertyCheck>> {
    let rounds = 20;
    let (mut prox_bad, mut scaffold_bad, mut nova_bad) = (0, 0, 0);
    let seeds = 3;
    for seed in 0..seeds {
        let fed = quadratic_fixture(5, 10, 200 + seed)?;
        let cfg = RunConfig::rounds(0.05, rounds);
        let run = |s: Strategy| run_rounds(&fed, &cfg, &s, &ScheduleSource::Constant(5));
        let avg = run(Strategy::Fedavg)?;
        let prox = run(Strategy::Fedprox { mu_prox: 0.0 })?;
        let scaffold = run(Strategy::Scaffold)?;
        let nova = run(Strategy::Fednova)?;
        for k in 0..rounds {
            let a = &avg.rounds[k].trace.w_end;
            if prox.rounds[k].trace.w_end.as_slice() != a.as_slice() {
                prox_bad += 1;
            }
            let diff = (&nova.rounds[k].trace.w_end - a).norm();
            if diff > FEDNOVA_REL_TOL * a.norm().max(1.0) {
                nova_bad += 1;
            }
        }
        if scaffold.rounds[0].trace.w_end.as_slice() != avg.rounds[0].trace.w_end.as_slice() {
            scaffold_bad += 1;
        }
    }
    let n = seeds as usize * rounds;
    Ok(vec![
        PropertyCheck::gate(
            "fedprox(mu=0) bit-identical to fedavg",
            n,
            prox_bad,
            String::new(),
        ),
        PropertyCheck::gate(
            "scaffold round 1 identical to fedavg",
            seeds as usize,
            scaffold_bad,
            String::new(),
        ),
        PropertyCheck::gate(
            "fednova equal-t matches fedavg",
            n,
            nova_bad,
            format!("relative tolerance {FEDNOVA_REL_TOL:e}"),
        ),
    ])
}
