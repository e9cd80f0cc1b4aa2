//! Robot models and their forward integration.
//!
//! Two planar models are supported: a double integrator (`p̈ = u`) and a
//! unicycle with one steerable drive wheel. Both are integrated with fixed
//! step RK4; inputs are held constant on each step unless the control
//! signal is interpolated.

use crate::error::{Error, Result};
use crate::ode::{rk4_step, stage_fraction};
use crate::scalar::Scalar;
use crate::vec2::Vec2;

/// Number of steps used when a caller does not choose `dt`.
pub const DEFAULT_STEPS: usize = 2000;

/// Double-integrator state. Flattened as `[p_x, p_y, v_x, v_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState<T> {
    pub p: Vec2<T>,
    pub v: Vec2<T>,
}

impl<T: Scalar> RobotState<T> {
    pub fn new(p: Vec2<T>, v: Vec2<T>) -> Self {
        Self { p, v }
    }

    pub fn at_rest(p: Vec2<T>) -> Self {
        Self { p, v: Vec2::zero() }
    }

    pub fn to_array(self) -> [T; 4] {
        [self.p.x, self.p.y, self.v.x, self.v.y]
    }

    pub fn from_array(x: [T; 4]) -> Self {
        Self { p: Vec2::new(x[0], x[1]), v: Vec2::new(x[2], x[3]) }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite()
    }
}

/// Unicycle pose; `theta` is kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UnicycleState<T> {
    pub p: Vec2<T>,
    pub theta: T,
}

impl<T: Scalar> UnicycleState<T> {
    pub fn new(p: Vec2<T>, theta: T) -> Self {
        Self { p, theta: wrap_angle(theta) }
    }

    pub fn heading(&self) -> Vec2<T> {
        Vec2::from_angle(self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.theta.is_finite()
    }
}

/// Wheel speed and steering rate of the unicycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelInput<T> {
    pub nu: T,
    pub omega: T,
}

impl<T: Scalar> WheelInput<T> {
    pub fn new(nu: T, omega: T) -> Self {
        Self { nu, omega }
    }
}

/// Maps an angle into `[0, 2π)`.
pub fn wrap_angle<T: Scalar>(theta: T) -> T {
    let tau = T::TAU();
    let mut r = theta % tau;
    if r < T::zero() {
        r = r + tau;
    }
    // `r + tau` can round up to exactly tau for tiny negative inputs.
    if r >= tau {
        r = T::zero();
    }
    r
}

/// Uniformly sampled rollout: `states[k]` at `t0 + k·dt`, `controls[k]`
/// applied on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, C> {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<S>,
    pub controls: Vec<C>,
}

pub type DiTrajectory<T> = Trajectory<RobotState<T>, Vec2<T>>;
pub type UnicycleTrajectory<T> = Trajectory<UnicycleState<T>, WheelInput<T>>;

impl<S: Clone, C: Clone> Trajectory<S, C> {
    pub fn new(t0: f64, dt: f64, states: Vec<S>, controls: Vec<C>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if states.len() != controls.len() + 1 {
            return Err(Error::InvalidArgument(format!("{} states for {} controls", states.len(), controls.len())));
        }
        Ok(Self { t0, dt, states, controls })
    }

    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(|k| self.time(k))
    }

    pub fn last(&self) -> &S {
        self.states.last().expect("trajectory always holds at least one state")
    }

    /// Errors unless `other` lives on exactly the same time grid.
    pub fn check_same_grid<S2, C2>(&self, other: &Trajectory<S2, C2>) -> Result<()> {
        let same = self.states.len() == other.states.len()
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt;
        if same {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(t0={}, dt={}, n={}) vs (t0={}, dt={}, n={})",
                self.t0,
                self.dt,
                self.states.len(),
                other.t0,
                other.dt,
                other.states.len()
            )))
        }
    }
}

/// Splits `[0, T]` into `ceil(T/dt)` equal steps; the returned step never
/// exceeds the requested one.
pub fn uniform_grid(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt > 0.0) || dt > horizon * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("dt must lie in (0, T], got {dt}")));
    }
    let ratio = horizon / dt;
    // Absorb representation error so T = 5, dt = 0.0025 gives exactly 2000 steps.
    let n = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) { ratio.round() } else { ratio.ceil() };
    let n = (n as usize).max(1);
    Ok((n, horizon / n as f64))
}

pub fn default_dt(horizon: f64) -> f64 {
    horizon / DEFAULT_STEPS as f64
}

/// One RK4 step of `ṗ = v, v̇ = u` with `u` held constant.
pub fn step_double_integrator<T: Scalar>(x: &RobotState<T>, u: Vec2<T>, dt: T) -> Result<RobotState<T>> {
    if !x.is_finite() || !u.is_finite() || !dt.is_finite() {
        return Err(Error::NonFinite("double-integrator step input"));
    }
    if dt <= T::zero() {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    Ok(step_di_unchecked(x, u, dt))
}

#[inline]
pub(crate) fn step_di_unchecked<T: Scalar>(x: &RobotState<T>, u: Vec2<T>, dt: T) -> RobotState<T> {
    let y = rk4_step(T::zero(), &x.to_array(), dt, |_, _, y| [y[2], y[3], u.x, u.y]);
    RobotState::from_array(y)
}

/// One RK4 step of the unicycle kinematics; `theta` is re-wrapped.
pub fn step_unicycle<T: Scalar>(s: &UnicycleState<T>, nu: T, omega: T, dt: T) -> Result<UnicycleState<T>> {
    if !s.is_finite() || !nu.is_finite() || !omega.is_finite() || !dt.is_finite() {
        return Err(Error::NonFinite("unicycle step input"));
    }
    if nu < T::zero() {
        return Err(Error::NegativeSpeed { t: f64::NAN, nu: nu.as_f64() });
    }
    if dt <= T::zero() {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let y = rk4_step(T::zero(), &[s.p.x, s.p.y, s.theta], dt, |_, _, y| [nu * y[2].cos(), nu * y[2].sin(), omega]);
    Ok(UnicycleState::new(Vec2::new(y[0], y[1]), y[2]))
}

/// How a sampled control is evaluated between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    ZeroOrderHold,
    Linear,
}

/// A control input as a function of time.
///
/// `stage_values` returns the input seen by the four RK4 stages of the step
/// starting at `t`. The default holds the value at `t` over the whole step,
/// so the recorded per-step controls reproduce the rollout exactly.
pub trait ControlSignal<C: Copy>: Sync {
    fn at(&self, t: f64) -> C;

    fn stage_values(&self, t: f64, _dt: f64) -> [C; 4] {
        let _ = _dt;
        [self.at(t); 4]
    }
}

impl<C: Copy, F> ControlSignal<C> for F
where
    F: Fn(f64) -> C + Sync,
{
    fn at(&self, t: f64) -> C {
        self(t)
    }
}

/// Uniformly sampled control with an interpolation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal<C> {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<C>,
    pub interp: Interpolation,
}

impl<C: Copy> SampledSignal<C> {
    pub fn zoh(t0: f64, dt: f64, samples: Vec<C>) -> Self {
        Self { t0, dt, samples, interp: Interpolation::ZeroOrderHold }
    }

    /// Controls of a trajectory, held over each step.
    pub fn from_trajectory<S>(traj: &Trajectory<S, C>) -> Self {
        Self::zoh(traj.t0, traj.dt, traj.controls.clone())
    }

    fn index(&self, t: f64) -> (usize, f64) {
        let s = ((t - self.t0) / self.dt).max(0.0);
        let last = self.samples.len().saturating_sub(1);
        let k = (s.floor() as usize).min(last);
        (k, s - k as f64)
    }
}

/// Linear interpolation needs arithmetic on the sample type.
pub trait Lerp: Copy {
    fn lerp(self, other: Self, a: f64) -> Self;
}

impl<T: Scalar> Lerp for Vec2<T> {
    fn lerp(self, other: Self, a: f64) -> Self {
        self + (other - self) * T::lit(a)
    }
}

impl<T: Scalar> Lerp for WheelInput<T> {
    fn lerp(self, other: Self, a: f64) -> Self {
        let a = T::lit(a);
        WheelInput::new(self.nu + (other.nu - self.nu) * a, self.omega + (other.omega - self.omega) * a)
    }
}

impl<C: Lerp + Sync> ControlSignal<C> for SampledSignal<C> {
    fn at(&self, t: f64) -> C {
        let (k, frac) = self.index(t);
        match self.interp {
            Interpolation::ZeroOrderHold => self.samples[k],
            Interpolation::Linear => {
                if k + 1 < self.samples.len() {
                    self.samples[k].lerp(self.samples[k + 1], frac.min(1.0))
                } else {
                    self.samples[k]
                }
            }
        }
    }

    fn stage_values(&self, t: f64, dt: f64) -> [C; 4] {
        match self.interp {
            // Locate the interval by its midpoint so the step end never
            // picks up the next sample.
            Interpolation::ZeroOrderHold => [self.at(t + 0.5 * dt); 4],
            Interpolation::Linear => std::array::from_fn(|s| self.at(t + stage_fraction(s) * dt)),
        }
    }
}

/// Rolls out the double integrator; every stage input must satisfy `‖u‖ ≤ u_max`.
pub fn simulate_double_integrator<T: Scalar>(
    x0: RobotState<T>,
    control: &impl ControlSignal<Vec2<T>>,
    horizon: f64,
    dt: f64,
    u_max: T,
) -> Result<DiTrajectory<T>> {
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let (n, dt) = uniform_grid(horizon, dt)?;
    let bound = u_max * (T::one() + T::lit(1e-9));
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    states.push(x0);
    let h = T::lit(dt);
    let mut x = x0;
    for k in 0..n {
        let t = k as f64 * dt;
        let us = control.stage_values(t, dt);
        for (s, u) in us.iter().enumerate() {
            if !u.is_finite() {
                return Err(Error::NonFinite("control sample"));
            }
            if u.norm() > bound {
                return Err(Error::ControlBound { t: t + stage_fraction(s) * dt, magnitude: u.norm().as_f64(), bound: u_max.as_f64() });
            }
        }
        let y = rk4_step(T::zero(), &x.to_array(), h, |s, _, y| [y[2], y[3], us[s].x, us[s].y]);
        x = RobotState::from_array(y);
        states.push(x);
        controls.push(us[0]);
    }
    Trajectory::new(0.0, dt, states, controls)
}

/// Bounds of the unicycle inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelLimits<T> {
    pub nu_max: T,
    pub omega_max: T,
}

/// Rolls out the unicycle; inputs must satisfy `0 ≤ ν ≤ ν_max`, `|ω| ≤ ω_max`.
pub fn simulate_unicycle<T: Scalar>(
    s0: UnicycleState<T>,
    control: &impl ControlSignal<WheelInput<T>>,
    horizon: f64,
    dt: f64,
    limits: WheelLimits<T>,
) -> Result<UnicycleTrajectory<T>> {
    if !s0.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let (n, dt) = uniform_grid(horizon, dt)?;
    let slack = T::one() + T::lit(1e-9);
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut s = UnicycleState::new(s0.p, s0.theta);
    states.push(s);
    for k in 0..n {
        let t = k as f64 * dt;
        let us = control.stage_values(t, dt);
        for (i, w) in us.iter().enumerate() {
            let ts = t + stage_fraction(i) * dt;
            if !w.nu.is_finite() || !w.omega.is_finite() {
                return Err(Error::NonFinite("control sample"));
            }
            if w.nu < T::zero() {
                return Err(Error::NegativeSpeed { t: ts, nu: w.nu.as_f64() });
            }
            if w.nu > limits.nu_max * slack {
                return Err(Error::ControlBound { t: ts, magnitude: w.nu.as_f64(), bound: limits.nu_max.as_f64() });
            }
            if w.omega.abs() > limits.omega_max * slack {
                return Err(Error::ControlBound { t: ts, magnitude: w.omega.abs().as_f64(), bound: limits.omega_max.as_f64() });
            }
        }
        let y = rk4_step(T::zero(), &[s.p.x, s.p.y, s.theta], T::lit(dt), |i, _, y| {
            [us[i].nu * y[2].cos(), us[i].nu * y[2].sin(), us[i].omega]
        });
        s = UnicycleState::new(Vec2::new(y[0], y[1]), y[2]);
        states.push(s);
        controls.push(us[0]);
    }
    Trajectory::new(0.0, dt, states, controls)
}
