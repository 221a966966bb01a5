//! Cartpole with a tilting track, a varying actuator force multiplier and
//! pole-joint damping, plus partial observability and actuator noise.
//!
//! Dynamics, with `mt = mc + mp`, track angle `φ`, force `F` and damping `D`:
//!
//! ```text
//! temp   = (F + mp·l·θ̇²·sin θ) / mt + g·sin φ
//! θ̈     = (g·sin(θ + φ) − cos θ·temp − D·θ̇ / (mp·l)) / (l·(4/3 − mp·cos²θ / mt))
//! ẍ     = temp − mp·l·θ̈·cos θ / mt
//! ```
//!
//! `θ` is measured from the track normal, so the pole's angle from true
//! vertical is `θ_vert = θ + φ`. When `φ` moves, `θ` is shifted by the
//! opposite amount: the pole keeps its orientation in the world and only
//! the cart-relative reading changes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const GRAVITY: f64 = 9.8;
pub const DT: f64 = 0.02;
pub const FORCE_MAG: f64 = 10.0;
pub const X_LIMIT: f64 = 2.4;
pub const ANGLE_LIMIT_DEG: f64 = 12.0;
pub const MAX_STEPS: u32 = 1000;
pub const OBS_DIM: usize = 4;

pub const ANGLE_RANGE: (f64, f64) = (-15.0, 15.0);
pub const FORCE_RANGE: (f64, f64) = (0.5, 2.0);
pub const DAMPING_RANGE: (f64, f64) = (0.0, 0.15);
pub const NOISE_MEAN_RANGE: (f64, f64) = (-2.0, 2.0);
pub const CHANGE_WINDOW: (u32, u32) = (200, 800);
pub const INIT_STATE_BOUND: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub t: u32,
}

/// Values of the three change parameters at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeParams {
    /// Degrees.
    pub track_angle: f64,
    pub force_mult: f64,
    pub damping: f64,
}

impl Default for ChangeParams {
    fn default() -> Self {
        ChangeParams {
            track_angle: 0.0,
            force_mult: 1.0,
            damping: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Angle,
    Force,
    Damping,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::Angle, Param::Force, Param::Damping];

    pub fn range(self) -> (f64, f64) {
        match self {
            Param::Angle => ANGLE_RANGE,
            Param::Force => FORCE_RANGE,
            Param::Damping => DAMPING_RANGE,
        }
    }

    pub fn default_value(self) -> f64 {
        let d = ChangeParams::default();
        match self {
            Param::Angle => d.track_angle,
            Param::Force => d.force_mult,
            Param::Damping => d.damping,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    #[default]
    Stationary,
    Sudden,
    Continuous,
}

/// Piecewise-linear profile of one parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub start: f64,
    pub target: f64,
    pub t_start: u32,
    pub t_stop: u32,
}

impl ParamSchedule {
    pub fn constant(value: f64) -> Self {
        ParamSchedule {
            start: value,
            target: value,
            t_start: 0,
            t_stop: 0,
        }
    }

    /// Start value before `t_start`, target from `t_stop` on, and a linear
    /// ramp in between (empty for a sudden change).
    pub fn value(&self, t: u32) -> f64 {
        if t < self.t_start {
            self.start
        } else if t >= self.t_stop {
            self.target
        } else {
            let frac = f64::from(t - self.t_start) / f64::from(self.t_stop - self.t_start);
            self.start + (self.target - self.start) * frac
        }
    }

    /// Samples a change inside [`CHANGE_WINDOW`] towards a uniform target.
    pub fn sample<R: Rng + ?Sized>(
        mode: ScheduleMode,
        start: f64,
        range: (f64, f64),
        rng: &mut R,
    ) -> Self {
        let (lo, hi) = CHANGE_WINDOW;
        match mode {
            ScheduleMode::Stationary => Self::constant(start),
            ScheduleMode::Sudden => {
                let t = rng.random_range(lo..=hi);
                ParamSchedule {
                    start,
                    target: rng.random_range(range.0..=range.1),
                    t_start: t,
                    t_stop: t,
                }
            }
            ScheduleMode::Continuous => {
                let a = rng.random_range(lo..=hi);
                let mut b = rng.random_range(lo..hi);
                if b >= a {
                    b += 1;
                }
                ParamSchedule {
                    start,
                    target: rng.random_range(range.0..=range.1),
                    t_start: a.min(b),
                    t_stop: a.max(b),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeSchedule {
    pub mode: ScheduleMode,
    pub angle: ParamSchedule,
    pub force: ParamSchedule,
    pub damping: ParamSchedule,
}

impl ChangeSchedule {
    pub fn stationary() -> Self {
        ChangeSchedule {
            mode: ScheduleMode::Stationary,
            angle: ParamSchedule::constant(Param::Angle.default_value()),
            force: ParamSchedule::constant(Param::Force.default_value()),
            damping: ParamSchedule::constant(Param::Damping.default_value()),
        }
    }

    /// Fresh schedule; inactive parameters stay at their defaults.
    pub fn sample<R: Rng + ?Sized>(mode: ScheduleMode, active: &[Param], rng: &mut R) -> Self {
        let mut s = Self::stationary();
        s.mode = mode;
        for p in Param::ALL {
            if active.contains(&p) {
                *s.get_mut(p) = ParamSchedule::sample(mode, p.default_value(), p.range(), rng);
            }
        }
        s
    }

    pub fn get(&self, p: Param) -> &ParamSchedule {
        match p {
            Param::Angle => &self.angle,
            Param::Force => &self.force,
            Param::Damping => &self.damping,
        }
    }

    fn get_mut(&mut self, p: Param) -> &mut ParamSchedule {
        match p {
            Param::Angle => &mut self.angle,
            Param::Force => &mut self.force,
            Param::Damping => &mut self.damping,
        }
    }

    pub fn params(&self, t: u32) -> ChangeParams {
        ChangeParams {
            track_angle: self.angle.value(t),
            force_mult: self.force.value(t),
            damping: self.damping.value(t),
        }
    }
}

pub fn schedule_value(schedule: &ChangeSchedule, param: Param, t: u32) -> f64 {
    schedule.get(param).value(t)
}

/// Gaussian actuator noise whose mean drifts along a ramp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub mean: ParamSchedule,
    pub sigma: f64,
}

impl NoiseSchedule {
    pub fn sample<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Self {
        NoiseSchedule {
            mean: ParamSchedule::sample(ScheduleMode::Continuous, 0.0, NOISE_MEAN_RANGE, rng),
            sigma,
        }
    }
}

/// `action + n` with `n ~ N(mean(t), σ²)`.
pub fn apply_actuator_noise<R: Rng + ?Sized>(
    action: f64,
    t: u32,
    noise: &NoiseSchedule,
    rng: &mut R,
) -> f64 {
    let mean = noise.mean.value(t);
    if noise.sigma == 0.0 {
        return action + mean;
    }
    let n = Normal::new(mean, noise.sigma).expect("finite sigma");
    action + n.sample(rng)
}

/// `[x, theta, x_dot, theta_dot]`, with the positional entries zeroed
/// under partial observability.
pub fn observe(state: &CartpoleState, po: bool) -> [f64; OBS_DIM] {
    if po {
        [0.0, 0.0, state.x_dot, state.theta_dot]
    } else {
        [state.x, state.theta, state.x_dot, state.theta_dot]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Integrator {
    Rk4,
    SemiImplicitEuler { substeps: u32 },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Rk4
    }
}

/// `(ẍ, θ̈)` for the given configuration. `phi` is in radians, `force` in
/// newtons.
pub fn accelerations(theta: f64, theta_dot: f64, force: f64, phi: f64, damping: f64) -> (f64, f64) {
    let mt = CART_MASS + POLE_MASS;
    let pml = POLE_MASS * HALF_LENGTH;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + pml * theta_dot * theta_dot * sin) / mt + GRAVITY * phi.sin();
    let theta_acc = (GRAVITY * (theta + phi).sin() - cos * temp - damping * theta_dot / pml)
        / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / mt));
    let x_acc = temp - pml * theta_acc * cos / mt;
    (x_acc, theta_acc)
}

/// Advances `(x, ẋ, θ, θ̇)` by `dt` under constant force and parameters.
/// The timestep counter is left untouched.
pub fn integrate(
    state: &CartpoleState,
    force: f64,
    phi: f64,
    damping: f64,
    dt: f64,
    integrator: Integrator,
) -> CartpoleState {
    let deriv = |y: [f64; 4]| {
        let (xa, ta) = accelerations(y[2], y[3], force, phi, damping);
        [y[1], xa, y[3], ta]
    };
    let y0 = [state.x, state.x_dot, state.theta, state.theta_dot];
    let y = match integrator {
        Integrator::Rk4 => {
            let add = |y: [f64; 4], k: [f64; 4], h: f64| std::array::from_fn(|i| y[i] + h * k[i]);
            let k1 = deriv(y0);
            let k2 = deriv(add(y0, k1, dt / 2.0));
            let k3 = deriv(add(y0, k2, dt / 2.0));
            let k4 = deriv(add(y0, k3, dt));
            std::array::from_fn(|i| y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        }
        Integrator::SemiImplicitEuler { substeps } => {
            let n = substeps.max(1);
            let h = dt / f64::from(n);
            let mut y = y0;
            for _ in 0..n {
                let (xa, ta) = accelerations(y[2], y[3], force, phi, damping);
                y[1] += h * xa;
                y[0] += h * y[1];
                y[3] += h * ta;
                y[2] += h * y[3];
            }
            y
        }
    };
    CartpoleState {
        x: y[0],
        x_dot: y[1],
        theta: y[2],
        theta_dot: y[3],
        t: state.t,
    }
}

/// Pole angle from true vertical, in radians.
pub fn theta_vert(state: &CartpoleState, params: &ChangeParams) -> f64 {
    state.theta + params.track_angle.to_radians()
}

pub fn is_failed(state: &CartpoleState, params: &ChangeParams) -> bool {
    theta_vert(state, params).abs() > ANGLE_LIMIT_DEG.to_radians() || state.x.abs() > X_LIMIT
}

/// `(1 − |θ_vert| / 12°)²` while upright enough, else 0.
pub fn reward(state: &CartpoleState, params: &ChangeParams) -> f64 {
    if is_failed(state, params) {
        return 0.0;
    }
    let r = 1.0 - theta_vert(state, params).abs() / ANGLE_LIMIT_DEG.to_radians();
    r * r
}

/// Experiment-level environment settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub mode: ScheduleMode,
    pub active_params: Vec<Param>,
    pub po: bool,
    pub actuator_noise: bool,
    pub noise_sigma: f64,
    pub integrator: Integrator,
    pub max_steps: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            mode: ScheduleMode::Stationary,
            active_params: Vec::new(),
            po: false,
            actuator_noise: false,
            noise_sigma: 0.1,
            integrator: Integrator::Rk4,
            max_steps: MAX_STEPS,
        }
    }
}

/// Named task presets: which parameters change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Stationary,
    Force,
    Damping,
    #[serde(rename = "Track Angle")]
    TrackAngle,
    All,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Stationary, Task::Force, Task::Damping, Task::TrackAngle, Task::All];

    pub fn name(self) -> &'static str {
        match self {
            Task::Stationary => "Stationary",
            Task::Force => "Force",
            Task::Damping => "Damping",
            Task::TrackAngle => "Track Angle",
            Task::All => "All",
        }
    }

    pub fn active_params(self) -> Vec<Param> {
        match self {
            Task::Stationary => vec![],
            Task::Force => vec![Param::Force],
            Task::Damping => vec![Param::Damping],
            Task::TrackAngle => vec![Param::Angle],
            Task::All => Param::ALL.to_vec(),
        }
    }

    /// Config for this task; `Stationary` ignores `mode`.
    pub fn config(self, mode: ScheduleMode) -> EnvConfig {
        EnvConfig {
            mode: if self == Task::Stationary {
                ScheduleMode::Stationary
            } else {
                mode
            },
            active_params: self.active_params(),
            ..EnvConfig::default()
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        Task::ALL
            .into_iter()
            .find(|t| t.name().replace(' ', "").to_lowercase() == norm)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// True when the episode ended by leaving the safe region rather than
    /// by the step limit.
    pub failed: bool,
}

/// One episode of the environment.
#[derive(Clone, Debug)]
pub struct Cartpole {
    pub state: CartpoleState,
    pub schedule: ChangeSchedule,
    pub noise: Option<NoiseSchedule>,
    po: bool,
    integrator: Integrator,
    max_steps: u32,
    done: bool,
    rng: ChaCha8Rng,
}

impl Cartpole {
    /// Near-upright start with every state variable uniform in
    /// `[-0.05, 0.05]` and a freshly sampled schedule.
    pub fn reset(config: &EnvConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = INIT_STATE_BOUND;
        let mut u = || rng.random_range(-b..=b);
        let state = CartpoleState {
            x: u(),
            x_dot: u(),
            theta: u(),
            theta_dot: u(),
            t: 0,
        };
        let schedule = ChangeSchedule::sample(config.mode, &config.active_params, &mut rng);
        let noise = config
            .actuator_noise
            .then(|| NoiseSchedule::sample(config.noise_sigma, &mut rng));
        Cartpole {
            state,
            schedule,
            noise,
            po: config.po,
            integrator: config.integrator,
            max_steps: config.max_steps,
            done: false,
            rng,
        }
    }

    pub fn observe(&self) -> [f64; OBS_DIM] {
        observe(&self.state, self.po)
    }

    pub fn params(&self) -> ChangeParams {
        self.schedule.params(self.state.t)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Adds actuator noise for the current timestep, if enabled.
    pub fn perturb(&mut self, action: f64) -> f64 {
        match &self.noise {
            Some(n) => apply_actuator_noise(action, self.state.t, n, &mut self.rng),
            None => action,
        }
    }

    /// Applies `clamp(action, -1, 1) · f(t) · 10 N` for one timestep.
    pub fn step(&mut self, action: f64) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        let p = self.params();
        let a = if action.is_nan() { 0.0 } else { action.clamp(-1.0, 1.0) };
        let force = a * p.force_mult * FORCE_MAG;
        let mut next = integrate(
            &self.state,
            force,
            p.track_angle.to_radians(),
            p.damping,
            DT,
            self.integrator,
        );
        next.t = self.state.t + 1;
        let q = self.schedule.params(next.t);
        next.theta -= (q.track_angle - p.track_angle).to_radians();
        self.state = next;

        let failed = is_failed(&self.state, &q);
        self.done = failed || self.state.t >= self.max_steps;
        Ok(StepOutcome {
            reward: reward(&self.state, &q),
            done: self.done,
            failed,
        })
    }
}

/// Mechanical energy relative to the cart-pole's rest frame on a level
/// track (pole treated as a uniform rod).
pub fn mechanical_energy(state: &CartpoleState) -> f64 {
    let (mp, l) = (POLE_MASS, HALF_LENGTH);
    let mt = CART_MASS + mp;
    let kinetic = 0.5 * mt * state.x_dot.powi(2)
        + mp * l * state.x_dot * state.theta_dot * state.theta.cos()
        + 0.5 * (4.0 / 3.0) * mp * l * l * state.theta_dot.powi(2);
    kinetic + mp * GRAVITY * l * state.theta.cos()
}

/// One row of a trajectory dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: u32,
    pub state: CartpoleState,
    pub params: ChangeParams,
    pub action: f64,
    pub reward: f64,
}

pub const TRAJECTORY_HEADER: &str = "t,x,theta,x_dot,theta_dot,phi,f,D,action,reward";

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], mut w: W) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        let s = &r.state;
        let p = &r.params;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t, s.x, s.theta, s.x_dot, s.theta_dot, p.track_angle, p.force_mult, p.damping, r.action, r.reward
        )?;
    }
    Ok(())
}
