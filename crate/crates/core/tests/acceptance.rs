//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails other than the known-unattainable
//! eigenvalue check (see `EXPECTED_FAILURES`).
//!
//! Run with `cargo test -p adaptctl-core --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use adaptctl::analysis::{
    baseline_complexity, count_complexity, Arch, LinearRecurrentModel, GOLDEN_A, GOLDEN_B, GOLDEN_C,
    GOLDEN_V, GOLDEN_W,
};
use adaptctl::environment::*;
use adaptctl::evaluation::{evaluate_fitness, rollout};
use adaptctl::search::*;
use adaptctl::text::serialize;
use adaptctl::variation::{MutationOp, MutationWeights, Mutator};
use adaptctl::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const EXPECTED_FAILURES: &[&str] = &["eigenvalue structure"];

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- golden

/// The golden program's recurrence written out instruction by instruction.
struct GoldenOracle {
    s: [f64; 4],
}

impl GoldenOracle {
    fn new() -> Self {
        GoldenOracle { s: [0.0; 4] }
    }

    fn step(&mut self, obs: &[f64; 4]) -> f64 {
        let dot = |u: &[f64; 4], v: &[f64; 4]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let [_, s1, s2, s3] = self.s;
        let s7 = GOLDEN_A * s2;
        let s0n = s7 + s3;
        let s8 = GOLDEN_B * s3;
        let s9 = dot(&GOLDEN_V, obs);
        let s1n = s0n + s1 + s8 + s9;
        let s2n = s0n + GOLDEN_C * s1n;
        let s3n = s0n + dot(obs, &GOLDEN_W);
        self.s = [s0n, s1n, s2n, s3n];
        s3n
    }
}

fn observation_streams() -> Vec<Vec<[f64; 4]>> {
    let golden = golden_program();
    let mut streams = Vec::new();
    for task in Task::ALL {
        let mode = if task == Task::Stationary { ScheduleMode::Stationary } else { ScheduleMode::Sudden };
        let (_, rows) = rollout(&golden, &task.config(mode), 11).unwrap();
        streams.push(rows.iter().map(|r| observe(&r.state, false)).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    streams.push((0..1000).map(|_| std::array::from_fn(|_| rng.random_range(-0.3..0.3))).collect());
    streams
}

fn golden_equivalence() -> Outcome {
    let golden = golden_program();
    let streams = observation_streams();
    if !streams.iter().any(|s| s.len() >= 1000) {
        return Err("no 1000-step stream recorded".into());
    }
    let mut worst_action = 0.0f64;
    let mut worst_z = 0.0f64;
    let mut worst_model = 0.0f64;
    let mut steps = 0;
    for stream in &streams {
        let mut rt = start_episode(&golden, 0);
        let mut oracle = GoldenOracle::new();
        let mut model = LinearRecurrentModel::golden();
        let mut prev = 0.0;
        for obs in stream {
            let got = rt.get_action_scalar(obs);
            let want = oracle.step(obs);
            let m = model.step(obs, prev);
            prev = m;
            worst_action = worst_action.max((got - want).abs());
            worst_model = worst_model.max((m - want).abs());
            for k in 0..3 {
                let reg = rt.read(Address::scalar(k))[0];
                worst_z = worst_z.max((reg - oracle.s[k]).abs()).max((model.z[k] - oracle.s[k]).abs());
            }
            steps += 1;
        }
    }
    check(
        worst_action <= 1e-9 && worst_z <= 1e-9 && worst_model <= 1e-9,
        format!(
            "{} streams, {steps} steps: max |action diff| {worst_action:.2e}, \
             max |model diff| {worst_model:.2e}, max |Z diff| {worst_z:.2e} (tol 1e-9)",
            streams.len()
        ),
    )
}

fn eigenvalue_structure() -> Outcome {
    let ev = LinearRecurrentModel::golden().eigenvalues();
    let mut want = [-0.594, 0.0, 1.0];
    want.sort_by(f64::total_cmp);
    let ok = ev.len() == 3
        && ev.iter().zip(want).all(|(z, w)| (z.re - w).abs() <= 1e-3 && z.im.abs() <= 1e-3);
    let got: Vec<String> = ev.iter().map(|z| format!("{:.6}", z.re)).collect();
    check(
        ok,
        format!(
            "eigenvalues [{}] vs expected [-0.594, 0, 1] (tol 1e-3); \
             characteristic polynomial -λ(λ² - (1+a+ac)λ + a) only has root 1 when ac = 0",
            got.join(", ")
        ),
    )
}

fn complexity() -> Outcome {
    let g = count_complexity(&golden_program(), 4, 1);
    let b = |arch, i, d, o| {
        let r = baseline_complexity(arch, i, d, o).unwrap();
        (r.parameter_count, r.flops_per_step)
    };
    let rows = [
        (b(Arch::Mlp, 37, 32, 12), (2592, 5184)),
        (b(Arch::Lstm, 37, 32, 12), (9216, 18432)),
        (b(Arch::Mlp, 4, 32, 1), (1184, 2368)),
        (b(Arch::Lstm, 4, 32, 1), (4640, 9280)),
    ];
    let ok = (g.parameter_count, g.flops_per_step) == (11, 25) && rows.iter().all(|(got, want)| got == want);
    check(
        ok,
        format!(
            "golden ({}, {}); baselines {:?}",
            g.parameter_count,
            g.flops_per_step,
            rows.iter().map(|r| r.0).collect::<Vec<_>>()
        ),
    )
}

fn golden_performance() -> Outcome {
    let golden = golden_program();
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for task in Task::ALL {
        let mode = if task == Task::Stationary { ScheduleMode::Stationary } else { ScheduleMode::Sudden };
        let r = evaluate_fitness(&golden, &task.config(mode), 100, 2024).unwrap();
        ok &= r.mean_reward >= 850.0;
        parts.push(format!("{} {:.1}", task.name(), r.mean_reward));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    check(ok, format!("{} in {elapsed:.2?} (need >= 850 each, < 60 s)", parts.join(", ")))
}

// ------------------------------------------------------------ constraint

fn constraint_logic() -> Outcome {
    let spec = ConstraintSpec::default();
    let mut bad = Vec::new();
    let named = [((49.0, 401.0), (0.0, 0.0)), ((50.0, 401.0), (50.0, 401.0)), ((600.0, 1000.0), (600.0, 1000.0))];
    for ((r, s), want) in named {
        if apply_fitness_constraint(r, s, &spec) != want {
            bad.push(format!("({r}, {s})"));
        }
    }
    let mut n = 0;
    for i in -200..=200 {
        let r = 50.0 + f64::from(i) * 0.05;
        for j in -200..=200 {
            let s = 400.0 + f64::from(j) * 0.05;
            let zeroed = s > 400.0 && r < 50.0;
            let want = if zeroed { (0.0, 0.0) } else { (r, s) };
            if apply_fitness_constraint(r, s, &spec) != want {
                bad.push(format!("({r}, {s})"));
            }
            n += 1;
        }
    }
    check(bad.is_empty(), format!("3 named points + {n}-point grid around (50, 400); {} mismatches", bad.len()))
}

// ---------------------------------------------------------------- NSGA-II

fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let dom = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y);
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dom(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn nsga2_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut mismatched = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=300);
        let m = rng.random_range(2..=3);
        // coarse values so that ties and duplicates occur
        let points: Vec<Vec<f64>> =
            (0..n).map(|_| (0..m).map(|_| f64::from(rng.random_range(0..12u8))).collect()).collect();
        let mut got = nondominated_sort(&points);
        for f in &mut got {
            f.sort_unstable();
        }
        if got != brute_force_fronts(&points) {
            mismatched += 1;
        }
    }

    let front = vec![vec![0.0, 4.0], vec![1.0, 3.0], vec![3.0, 1.0], vec![4.0, 0.0]];
    let cd = crowding_distance(&front);
    // interior: (3-0)/4 + (4-1)/4 = 1.5 and (4-1)/4 + (3-0)/4 = 1.5
    let crowd_ok = cd[0].is_infinite() && cd[3].is_infinite() && (cd[1] - 1.5).abs() < 1e-12 && (cd[2] - 1.5).abs() < 1e-12;
    let uneven = vec![vec![0.0, 10.0], vec![2.0, 6.0], vec![3.0, 5.0], vec![10.0, 0.0]];
    let cu = crowding_distance(&uneven);
    // (3-0)/10 + (10-5)/10 = 0.8 and (10-2)/10 + (6-0)/10 = 1.4
    let crowd_ok = crowd_ok && (cu[1] - 0.8).abs() < 1e-12 && (cu[2] - 1.4).abs() < 1e-12;

    fn toy(p: &Program, _seed: u64) -> Result<Vec<f64>> {
        let x = p.init.scalars[0].clamp(0.0, 1.0);
        let y = p.init.scalars[1].clamp(0.0, 1.0);
        Ok(vec![x * (1.0 - y), (1.0 - x) + y * x])
    }
    let layout = MemoryLayout { n_scalar: 4, n_vector: 2, n_matrix: 1, n_index: 1, vec_dim: 2, mat_dim: 2 };
    let gen = GenConfig { max_instructions: 3, max_cadfs: 1, ..GenConfig::default() };
    let mutator = Mutator::new(MutationWeights::default(), gen, None).unwrap();
    let config = Nsga2Config { parents: 30, children: 90, ..Nsga2Config::default() };
    let mut e = Nsga2::new(config, mutator, &toy, layout, 3, false).unwrap();
    e.initialize().unwrap();
    let mut sizes_ok = e.population.len() == 30;
    for _ in 0..50 {
        e.generation(usize::MAX).unwrap();
        sizes_ok &= e.population.len() == 30;
    }

    check(
        mismatched == 0 && crowd_ok && sizes_ok,
        format!(
            "{mismatched}/1000 populations differ from brute force; crowding by hand {}; \
             population size constant over 50 generations: {sizes_ok}",
            if crowd_ok { "matches" } else { "differs" }
        ),
    )
}

// --------------------------------------------------------------- mutation

fn mutation_frequencies() -> Outcome {
    let mutator = Mutator::new(MutationWeights::default(), GenConfig::default(), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let layout = MemoryLayout::default();
    let gen = GenConfig { min_instructions: 3, ..GenConfig::default() };
    let parents: Vec<Program> =
        (0..200).map(|_| adaptctl::program::random_program(layout, &gen, &mut rng).unwrap()).collect();
    let (mut del, mut ins) = (0u64, 0u64);
    for k in 0..100_000 {
        let (_, op) = mutator.mutate_traced(&parents[k % parents.len()], &mut rng);
        match op {
            Some(MutationOp::Delete) => del += 1,
            Some(MutationOp::Insert) => ins += 1,
            _ => {}
        }
    }
    let n = (del + ins) as f64;
    let (ed, ei) = (n * 2.0 / 3.0, n / 3.0);
    let chi2 = (del as f64 - ed).powi(2) / ed + (ins as f64 - ei).powi(2) / ei;
    let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.99);
    check(
        chi2 < critical,
        format!(
            "delete {del}, insert {ins}, ratio {:.4}; chi2 {chi2:.3} < {critical:.3} (p > 0.01)",
            del as f64 / ins as f64
        ),
    )
}

// ------------------------------------------------------------- evolution

/// Search space and engine settings used for the end-to-end runs. Kept in
/// sync with `configs/stationary.toml`.
fn evolution_layout() -> MemoryLayout {
    MemoryLayout { n_scalar: 4, n_vector: 4, n_matrix: 4, n_index: 4, ..MemoryLayout::default() }
}

fn evolution_config() -> RegEvoConfig {
    RegEvoConfig { tournament_size: 5, ..RegEvoConfig::default() }
}

fn end_to_end_evolution() -> Outcome {
    const BUDGET: u64 = 100_000;
    const TARGET: f64 = 700.0;
    let objective = reward_objective(EnvConfig::default(), evolution_config().episodes);
    let mut reached = 0;
    let mut monotone = true;
    let mut parts = Vec::new();
    let start = Instant::now();
    for seed in 0..5u64 {
        let mutator = Mutator::new(MutationWeights::default(), GenConfig::default(), None).unwrap();
        let mut e = RegEvo::new(evolution_config(), mutator, &objective, evolution_layout(), seed).unwrap();
        e.initialize().unwrap();
        let mut curve = vec![e.best_fitness()[0]];
        // the best-so-far value can only grow, so a run that has reached the
        // target has passed; the remaining budget is skipped
        while e.evaluations() < BUDGET && e.best_fitness()[0] < TARGET {
            e.step().unwrap();
            curve.push(e.best_fitness()[0]);
        }
        monotone &= curve.windows(2).all(|w| w[0] <= w[1]);
        let best = e.best_fitness()[0];
        if best >= TARGET {
            reached += 1;
        }
        parts.push(format!("seed {seed}: {best:.1} after {} evals", e.evaluations()));
    }
    check(
        reached >= 3 && monotone,
        format!(
            "{reached}/5 runs reach >= {TARGET} (need 3); best-so-far non-decreasing: {monotone}; {}; {:.0?}",
            parts.join(", "),
            start.elapsed()
        ),
    )
}

// ------------------------------------------------------------ environment

/// `(ẍ, θ̈)` from the mass-matrix form of the cart-pole equations.
fn oracle_accel(th: f64, thd: f64, force: f64, phi: f64, damping: f64) -> (f64, f64) {
    let (mp, l, g) = (0.1, 0.5, 9.8);
    let mt = 1.0 + mp;
    let (a11, a12, a21, a22) = (mt, mp * l * th.cos(), th.cos(), 4.0 / 3.0 * l);
    let r1 = force + mp * l * thd * thd * th.sin() + mt * g * phi.sin();
    let r2 = g * (th + phi).sin() - damping * thd / (mp * l);
    let det = a11 * a22 - a12 * a21;
    ((r1 * a22 - a12 * r2) / det, (a11 * r2 - a21 * r1) / det)
}

fn oracle_step(s: &CartpoleState, force: f64, phi: f64, damping: f64) -> [f64; 4] {
    let h = 1e-5;
    let mut y = [s.x, s.x_dot, s.theta, s.theta_dot];
    for _ in 0..2000 {
        // explicit midpoint
        let d = |y: [f64; 4]| {
            let (xa, ta) = oracle_accel(y[2], y[3], force, phi, damping);
            [y[1], xa, y[3], ta]
        };
        let k1 = d(y);
        let mid = std::array::from_fn(|i| y[i] + 0.5 * h * k1[i]);
        let k2 = d(mid);
        y = std::array::from_fn(|i| y[i] + h * k2[i]);
    }
    y
}

fn env_with(params: (f64, f64, f64), state: CartpoleState) -> Cartpole {
    let mut env = Cartpole::reset(&EnvConfig::default(), 0);
    env.schedule = ChangeSchedule {
        mode: ScheduleMode::Stationary,
        angle: ParamSchedule::constant(params.0),
        force: ParamSchedule::constant(params.1),
        damping: ParamSchedule::constant(params.2),
    };
    env.state = state;
    env
}

fn environment_physics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let angles = [ANGLE_RANGE.0, 0.0, ANGLE_RANGE.1];
    let forces = [FORCE_RANGE.0, 1.0, FORCE_RANGE.1];
    let dampings = [DAMPING_RANGE.0, 0.075, DAMPING_RANGE.1];
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..100 {
        let state = CartpoleState {
            x: rng.random_range(-2.0..2.0),
            x_dot: rng.random_range(-1.5..1.5),
            theta: rng.random_range(-0.15..0.15),
            theta_dot: rng.random_range(-1.5..1.5),
            t: 0,
        };
        let action: f64 = rng.random_range(-1.0..=1.0);
        for &phi in &angles {
            for &f in &forces {
                for &d in &dampings {
                    // keep the pole inside the limits so the step is not terminal
                    let s = CartpoleState { theta: state.theta - phi.to_radians(), ..state };
                    let mut env = env_with((phi, f, d), s);
                    env.step(action).unwrap();
                    let want = oracle_step(&s, action * f * FORCE_MAG, phi.to_radians(), d);
                    let got = [env.state.x, env.state.x_dot, env.state.theta, env.state.theta_dot];
                    for k in 0..4 {
                        worst = worst.max((got[k] - want[k]).abs());
                    }
                    cases += 1;
                }
            }
        }
    }
    let physics_ok = worst <= 1e-3;

    // thresholds
    let lim = ANGLE_LIMIT_DEG.to_radians();
    let flat = ChangeParams { track_angle: 0.0, force_mult: 1.0, damping: 0.0 };
    let tilted = ChangeParams { track_angle: 10.0, ..flat };
    let at = |x: f64, theta: f64| CartpoleState { x, x_dot: 0.0, theta, theta_dot: 0.0, t: 0 };
    let above = |v: f64| v + v.abs() * 1e-12 + 1e-15;
    let mut thresholds = vec![
        ("theta = limit not failed", !is_failed(&at(0.0, lim), &flat)),
        ("theta = -limit not failed", !is_failed(&at(0.0, -lim), &flat)),
        ("theta just above limit failed", is_failed(&at(0.0, above(lim)), &flat)),
        ("x = 2.4 not failed", !is_failed(&at(X_LIMIT, 0.0), &flat)),
        ("x just above 2.4 failed", is_failed(&at(above(X_LIMIT), 0.0), &flat)),
        ("x = -2.4 not failed", !is_failed(&at(-X_LIMIT, 0.0), &flat)),
        ("reward 1 upright", reward(&at(0.0, 0.0), &flat) == 1.0),
        ("reward 0 at limit", reward(&at(0.0, lim), &flat) == 0.0),
        ("reward 0.25 at half limit", (reward(&at(0.0, lim / 2.0), &flat) - 0.25).abs() < 1e-12),
        ("reward 1 when vertical on tilted track", (reward(&at(0.0, -10f64.to_radians()), &tilted) - 1.0).abs() < 1e-12),
        ("reward 0 past limit", reward(&at(0.0, above(lim)), &flat) == 0.0),
    ];
    let mut env = env_with((0.0, 1.0, 0.0), CartpoleState { t: MAX_STEPS - 1, ..at(0.0, 0.0) });
    let last = env.step(0.0).unwrap();
    thresholds.push(("episode ends at 1000 steps without failure", last.done && !last.failed && env.is_done()));
    thresholds.push(("stepping a finished episode errors", env.step(0.0).is_err()));
    let failed_checks: Vec<&str> = thresholds.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();

    let zero = Program::empty(MemoryLayout::default());
    let r = evaluate_fitness(&zero, &Task::All.config(ScheduleMode::Continuous), 100, 31).unwrap();
    let max_steps = r.per_episode.iter().map(|e| e.steps).max().unwrap_or(0);
    let gap_ok = r.mean_reward < 200.0 && max_steps >= 50;

    check(
        physics_ok && failed_checks.is_empty() && gap_ok,
        format!(
            "{cases} one-step cases, max deviation {worst:.2e} (tol 1e-3); {}/{} threshold checks{}; \
             constant-action program on continuous All: mean reward {:.1} (< 200), mean steps {:.1}, longest {max_steps} (>= 50)",
            thresholds.len() - failed_checks.len(),
            thresholds.len(),
            if failed_checks.is_empty() { String::new() } else { format!(" (failed: {})", failed_checks.join("; ")) },
            r.mean_reward,
            r.mean_steps,
        ),
    )
}

// ------------------------------------------------------------ determinism

fn regevo_run(seed: u64) -> (Vec<u8>, String) {
    let objective = reward_objective(Task::All.config(ScheduleMode::Sudden), 3);
    let mutator = Mutator::new(MutationWeights::default(), GenConfig::default(), None).unwrap();
    let config = RegEvoConfig { population_size: 20, tournament_size: 5, ..RegEvoConfig::default() };
    let mut e = RegEvo::new(config, mutator, &objective, evolution_layout(), seed).unwrap();
    let mut log = Vec::new();
    e.run(600, |r| r.write_jsonl(&mut log)).unwrap();
    (log, serialize(&e.champion().unwrap().program))
}

fn nsga2_run(seed: u64) -> (Vec<u8>, String) {
    let objective = reward_steps_objective(Task::All.config(ScheduleMode::Continuous), 3, ConstraintSpec::default());
    let mutator = Mutator::new(MutationWeights::default(), GenConfig::default(), None).unwrap();
    let config = Nsga2Config { parents: 10, children: 30, episodes: 3, ..Nsga2Config::default() };
    let mut e = Nsga2::new(config, mutator, &objective, evolution_layout(), seed, false).unwrap();
    let mut log = Vec::new();
    e.run(200, |r| r.write_jsonl(&mut log)).unwrap();
    (log, serialize(&e.champion().unwrap().program))
}

fn determinism() -> Outcome {
    let r = regevo_run(42) == regevo_run(42);
    let n = nsga2_run(42) == nsga2_run(42);
    let differs = regevo_run(42) != regevo_run(43);
    check(
        r && n && differs,
        format!("RegEvo logs+champion identical: {r}; NSGA-II logs+champion identical: {n}; other seed differs: {differs}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("golden-policy equivalence", golden_equivalence),
        ("eigenvalue structure", eigenvalue_structure),
        ("complexity accounting", complexity),
        ("golden-policy performance", golden_performance),
        ("constraint logic", constraint_logic),
        ("NSGA-II correctness", nsga2_correctness),
        ("mutation frequencies", mutation_frequencies),
        ("environment physics", environment_physics),
        ("determinism", determinism),
        ("end-to-end evolution", end_to_end_evolution),
    ];
    let mut unexpected = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                let known = EXPECTED_FAILURES.contains(&name);
                if !known {
                    unexpected += 1;
                }
                println!("FAIL {name}: {detail}{}", if known { " [known, see docs]" } else { "" });
            }
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
