//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero when any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use amsfl_core::baselines::Strategy;
use amsfl_core::datasets::{generate_logistic_federation, LogisticTask, SyntheticFederation};
use amsfl_core::federation::{run_rounds, RunConfig, ScheduleSource};
use amsfl_core::harness::{verify, Suite, SuiteReport};
use amsfl_core::scheduler::continuous_allocation;
use amsfl_core::ParamVector;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDENTITY_RUNS_MIN: usize = 50;
const IDENTITY_LIMIT: Duration = Duration::from_secs(10);
const GDA_LIMIT: Duration = Duration::from_secs(5);
const SCHEDULER_LIMIT: Duration = Duration::from_secs(30);
const SQRT_LAW_REL_TOL: f64 = 1e-6;
const SQRT_LAW_INSTANCES: usize = 20;
const DIRECTIONAL_SEEDS: u64 = 25;
const DIRECTIONAL_WIN_RATE: f64 = 0.8;
const DIRECTIONAL_LIMIT: Duration = Duration::from_secs(120);
const DIRECTIONAL_STEP_COSTS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.5];
const DIRECTIONAL_DELAYS: [f64; 5] = [0.2; 5];
const DIRECTIONAL_FIXED_STEPS: usize = 5;
const DIRECTIONAL_TARGET_FRACTION: f64 = 0.05;
const DIRECTIONAL_MAX_ROUNDS: usize = 400;
const CONTRACTION_REL_TOL: f64 = 1e-9;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn suite(s: Suite) -> (SuiteReport, Duration) {
    let start = Instant::now();
    let mut r = verify(s).expect("suite runs");
    (r.remove(0), start.elapsed())
}

fn summarize(report: &SuiteReport) -> String {
    report
        .properties
        .iter()
        .map(|p| format!("{} {}/{}", p.name, p.checked - p.failures, p.checked))
        .collect::<Vec<_>>()
        .join("; ")
}

fn timed_suite(s: Suite, limit: Option<Duration>) -> Outcome {
    let (report, took) = suite(s);
    let limit_text = limit.map_or(String::new(), |l| format!(", limit {l:?}"));
    Outcome {
        passed: report.passed() && limit.is_none_or(|l| took < l),
        detail: format!("{} ({took:.2?}{limit_text})", summarize(&report)),
    }
}

fn identity() -> Outcome {
    let (report, took) = suite(Suite::Identity);
    let runs = report.properties[0].checked / 20;
    Outcome {
        passed: report.passed() && runs >= IDENTITY_RUNS_MIN && took < IDENTITY_LIMIT,
        detail: format!(
            "{runs} runs; {} ({took:.2?}, limit {IDENTITY_LIMIT:?})",
            summarize(&report)
        ),
    }
}

/// Minimizes `Σ (ωᵢ/2) tᵢ²` subject to `Σ cᵢ tᵢ = budget` by a zooming grid
/// over the first `n − 1` coordinates; the last one absorbs the constraint.
fn grid_minimizer(costs: &[f64], weights: &[f64], budget: f64) -> Vec<f64> {
    let n = costs.len();
    let objective = |free: &[f64]| -> Option<(f64, Vec<f64>)> {
        let spent: f64 = free.iter().zip(costs).map(|(t, c)| t * c).sum();
        let last = (budget - spent) / costs[n - 1];
        if last <= 0.0 || free.iter().any(|&t| t <= 0.0) {
            return None;
        }
        let mut t = free.to_vec();
        t.push(last);
        let f = t.iter().zip(weights).map(|(t, w)| 0.5 * w * t * t).sum();
        Some((f, t))
    };
    let mut lo: Vec<f64> = vec![0.0; n - 1];
    let mut hi: Vec<f64> = costs[..n - 1].iter().map(|c| budget / c).collect();
    let points = if n == 2 { 2001 } else { 201 };
    let mut best = Vec::new();
    for _ in 0..40 {
        let mut best_f = f64::INFINITY;
        let mut idx = vec![0usize; n - 1];
        loop {
            let free: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(j, &k)| lo[j] + (hi[j] - lo[j]) * k as f64 / (points - 1) as f64)
                .collect();
            if let Some((f, t)) = objective(&free) {
                if f < best_f {
                    best_f = f;
                    best = t;
                }
            }
            let mut j = 0;
            while j < n - 1 {
                idx[j] += 1;
                if idx[j] < points {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == n - 1 {
                break;
            }
        }
        for j in 0..n - 1 {
            let step = 4.0 * (hi[j] - lo[j]) / (points - 1) as f64;
            lo[j] = (best[j] - step).max(0.0);
            hi[j] = best[j] + step;
        }
    }
    best
}

fn sqrt_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5971);
    let mut instances = vec![(vec![1.0, 4.0], vec![0.5, 0.5], 10.0)];
    while instances.len() < SQRT_LAW_INSTANCES {
        let n = rng.random_range(2..=3usize);
        let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let weights = raw.iter().map(|x| x / s).collect();
        instances.push((costs, weights, rng.random_range(5.0..50.0)));
    }
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut headline = (0.0, 0.0);
    for (k, (costs, weights, budget)) in instances.iter().enumerate() {
        let closed = continuous_allocation(costs, weights, *budget).expect("valid instance");
        let grid = grid_minimizer(costs, weights, *budget);
        let mut bad = false;
        for i in 1..costs.len() {
            let (a, b) = (closed[0] / closed[i], grid[0] / grid[i]);
            let rel = (a - b).abs() / b.abs();
            worst = worst.max(rel);
            bad |= rel > SQRT_LAW_REL_TOL;
        }
        if k == 0 {
            headline = (closed[0] / closed[1], grid[0] / grid[1]);
        }
        failures += usize::from(bad);
    }
    let headline_ok = (headline.0 - 2.0).abs() <= SQRT_LAW_REL_TOL * 2.0
        && (headline.1 - 2.0).abs() <= SQRT_LAW_REL_TOL * 2.0;
    Outcome {
        passed: failures == 0 && headline_ok,
        detail: format!(
            "{}/{} instances match; c=(1,4): closed form {:.6}, grid {:.6}; worst rel err {worst:.3e}",
            instances.len() - failures,
            instances.len(),
            headline.0,
            headline.1
        ),
    }
}

struct Race {
    amsfl: Option<f64>,
    fedavg: Option<f64>,
}

fn race(seed: u64) -> Race {
    let mut task = LogisticTask::new(5, 5, 60, 1.5);
    task.ridge = 0.05;
    let synth = generate_logistic_federation(&task, seed).expect("task");
    let fed = synth
        .to_federation(&DIRECTIONAL_STEP_COSTS, &DIRECTIONAL_DELAYS)
        .expect("federation");
    let f_star = fed
        .global_loss(fed.w_star.as_ref().expect("optimum"))
        .expect("loss");
    let f_0 = fed
        .global_loss(&ParamVector::zeros(fed.dim()))
        .expect("loss");
    let target = f_star + DIRECTIONAL_TARGET_FRACTION * (f_0 - f_star);
    let budget = fed.round_time(&[DIRECTIONAL_FIXED_STEPS; 5], Default::default());
    let cfg = RunConfig {
        round_budget: Some(budget),
        ..RunConfig::rounds(0.5 / fed.constants.lipschitz, DIRECTIONAL_MAX_ROUNDS)
    };
    let time_to_target = |strategy: Strategy, source: ScheduleSource| {
        let h = run_rounds(&fed, &cfg, &strategy, &source).expect("run");
        h.rounds
            .iter()
            .find(|r| r.loss <= target)
            .map(|r| r.sim_time)
    };
    Race {
        amsfl: time_to_target(Strategy::Amsfl, ScheduleSource::greedy()),
        fedavg: time_to_target(
            Strategy::Fedavg,
            ScheduleSource::Constant(DIRECTIONAL_FIXED_STEPS),
        ),
    }
}

fn directional() -> Outcome {
    let start = Instant::now();
    let spread = DIRECTIONAL_STEP_COSTS
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max)
        / DIRECTIONAL_STEP_COSTS
            .iter()
            .cloned()
            .fold(f64::MAX, f64::min);
    let mut wins = 0;
    let mut missed = 0;
    for seed in 0..DIRECTIONAL_SEEDS {
        let r = race(seed);
        match (r.amsfl, r.fedavg) {
            (Some(a), Some(f)) if a < f => wins += 1,
            (Some(_), None) => wins += 1,
            (None, _) => missed += 1,
            _ => {}
        }
    }
    let took = start.elapsed();
    let required = (DIRECTIONAL_WIN_RATE * DIRECTIONAL_SEEDS as f64).ceil() as u64;
    Outcome {
        passed: spread >= 4.0 && wins >= required && took < DIRECTIONAL_LIMIT,
        detail: format!(
            "adaptive faster on {wins}/{DIRECTIONAL_SEEDS} seeds (need {required}), \
             {missed} adaptive runs missed the target; cost spread {spread:.1}x ({took:.2?})"
        ),
    }
}

fn contraction() -> Outcome {
    let synth = SyntheticFederation::from_quadratics(
        vec![DMatrix::identity(1, 1)],
        vec![ParamVector::from_slice(&[3.0])],
        vec![1.0],
    )
    .expect("fixture");
    let fed = synth.to_federation(&[1.0], &[0.0]).expect("federation");
    let h = run_rounds(
        &fed,
        &RunConfig::rounds(0.1, 50),
        &Strategy::Fedavg,
        &ScheduleSource::Constant(1),
    )
    .expect("run");
    let ratio =
        (h.final_error_sq().expect("optimum") / h.initial_error_sq.expect("optimum")).sqrt();
    let expected = 0.9_f64.powi(50);
    let rel = (ratio - expected).abs() / expected;
    Outcome {
        passed: fed.constants.lipschitz == 1.0 && rel <= CONTRACTION_REL_TOL,
        detail: format!("ratio {ratio:.15e}, closed form {expected:.15e}, rel err {rel:.2e}"),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 error identity and linearized recursion", identity),
        ("2 gradient-difference remainder bound", || {
            timed_suite(Suite::Gda, Some(GDA_LIMIT))
        }),
        ("3 scheduler correctness", || {
            timed_suite(Suite::Scheduler, Some(SCHEDULER_LIMIT))
        }),
        ("4 square-root allocation law", sqrt_law),
        ("5 residual bound", || timed_suite(Suite::Bounds, None)),
        ("6 baseline identities", || {
            timed_suite(Suite::Baselines, None)
        }),
        ("7 adaptive beats fixed five steps", directional),
        ("8 geometric contraction", contraction),
    ];
    let mut all = true;
    for (name, check) in criteria {
        let o = check();
        all &= o.passed;
        println!(
            "{} criterion {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
