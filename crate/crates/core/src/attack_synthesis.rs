//! Undetectable attacks on the double integrator.
//!
//! An attack `(u, u_gnss)` stays invisible exactly when the attacked robot
//! keeps the nominal range `‖p‖ = ‖p_n‖` and radial speed `vᵀp = v_nᵀp_n`.
//! The radial part of `u` is therefore pinned,
//!
//! ```text
//! a_r = (u_nᵀp_n + ‖v_n‖² − ‖v‖²) / ‖p‖²,      u = a_r·p + w,   wᵀp = 0,
//! ```
//!
//! while the tangential part `w` is free up to the input budget, and the
//! GNSS channel is patched with `u_gnss = p_n − p`.
//!
//! Attacked and nominal states are co-integrated with RK4 and the feedback
//! law is re-evaluated at every stage, which keeps the range residual at
//! fourth order in `dt`.

use crate::dynamics::{DiTrajectory, RobotState, Trajectory};
use crate::error::{Error, Result};
use crate::ode::{stage_fraction, try_rk4_step};
use crate::scalar::Scalar;
use crate::sensing::Tolerances;
use crate::vec2::Vec2;

/// Above this ratio `a_r²‖p‖²/u_max²` the step is declared infeasible.
const INFEASIBLE_SLACK: f64 = 1e-6;
/// At or above `1 − SATURATION_MARGIN` the tangential budget is taken as 0.
const SATURATION_MARGIN: f64 = 1e-9;

/// `a_r = (u_nᵀp_n + ‖v_n‖² − ‖v‖²)/‖p‖²`.
pub fn radial_acceleration<T: Scalar>(u_n: Vec2<T>, p_n: Vec2<T>, v_n: Vec2<T>, p: Vec2<T>, v: Vec2<T>) -> Result<T> {
    let rho = p.norm_sq();
    if rho <= T::zero() {
        return Err(Error::SingularPosition { t: f64::NAN });
    }
    Ok((u_n.dot(p_n) + v_n.norm_sq() - v.norm_sq()) / rho)
}

/// Largest admissible `‖w‖` once `a_r` is fixed: `√(u_max² − a_r²‖p‖²)`.
///
/// Roundoff right at the saturation boundary is absorbed: ratios within
/// `1e-6` above one still count as feasible with zero budget.
pub fn tangential_budget<T: Scalar>(a_r: T, p: Vec2<T>, u_max: T) -> Result<T> {
    let umax2 = u_max.sq();
    let radial2 = a_r.sq() * p.norm_sq();
    if radial2 > umax2 * T::lit(1.0 + INFEASIBLE_SLACK) || !radial2.is_finite() {
        return Err(Error::Infeasible { t: f64::NAN, max_tangential: 0.0 });
    }
    if radial2 >= umax2 * T::lit(1.0 - SATURATION_MARGIN) {
        return Ok(T::zero());
    }
    Ok((umax2 - radial2).sqrt())
}

/// Everything a tangential policy may look at.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<T> {
    pub t: f64,
    pub state: RobotState<T>,
    pub nominal: RobotState<T>,
    pub u_n: Vec2<T>,
    pub a_r: T,
    /// Largest admissible tangential magnitude at this instant.
    pub budget: T,
}

/// Chooses the free tangential input.
///
/// Returns the signed magnitude `c` of `w = c·p̂⊥`, where `p̂⊥` is the
/// position direction rotated a quarter turn counterclockwise; `|c|` must
/// not exceed `ctx.budget`.
pub trait TangentialPolicy<T>: Sync {
    fn tangential(&self, ctx: &PolicyContext<T>) -> T;
}

impl<T, F> TangentialPolicy<T> for F
where
    F: Fn(&PolicyContext<T>) -> T + Sync,
{
    fn tangential(&self, ctx: &PolicyContext<T>) -> T {
        self(ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    Clockwise,
    CounterClockwise,
}

impl Rotation {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Rotation::Clockwise => -T::one(),
            Rotation::CounterClockwise => T::one(),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Rotation::Clockwise => Rotation::CounterClockwise,
            Rotation::CounterClockwise => Rotation::Clockwise,
        }
    }
}

/// Ready-made tangential laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinPolicy {
    /// `w = 0`: the attacked input is purely radial.
    Zero,
    /// Copies the tangential component of the nominal input; reproduces the
    /// nominal trajectory exactly when started on it.
    Nominal,
    /// A fixed fraction of the instantaneous budget in one direction.
    Fraction { fraction: f64, direction: Rotation },
    /// Full budget, reversing direction once at `switch_time`.
    BangSwitch { switch_time: f64, first: Rotation },
}

impl<T: Scalar> TangentialPolicy<T> for BuiltinPolicy {
    fn tangential(&self, ctx: &PolicyContext<T>) -> T {
        match *self {
            BuiltinPolicy::Zero => T::zero(),
            BuiltinPolicy::Nominal => {
                let pn = ctx.nominal.p;
                let r = pn.norm();
                if r > T::zero() {
                    ctx.u_n.dot(pn.perp()) / r
                } else {
                    T::zero()
                }
            }
            BuiltinPolicy::Fraction { fraction, direction } => direction.sign::<T>() * T::lit(fraction.clamp(0.0, 1.0)) * ctx.budget,
            BuiltinPolicy::BangSwitch { switch_time, first } => {
                let dir = if ctx.t < switch_time { first } else { first.flipped() };
                dir.sign::<T>() * ctx.budget
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSignal<T> {
    /// Attacked acceleration, one sample per step.
    pub u: Vec<Vec2<T>>,
    /// GNSS offset, one sample per state.
    pub u_gnss: Vec<Vec2<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackOptions<T> {
    pub u_max: T,
    /// Input applied when the attacked position sits on the base station,
    /// where undetectability leaves `u` unconstrained. `None` makes that an
    /// error.
    pub singular_input: Option<Vec2<T>>,
    /// RK4 sub-steps per nominal step.
    pub substeps: usize,
    /// Multiplies the computed `a_r`. Anything other than 1 yields a
    /// detectable attack; used to exercise the monitor.
    pub radial_scale: T,
}

impl<T: Scalar> AttackOptions<T> {
    pub fn new(u_max: T) -> Self {
        Self { u_max, singular_input: None, substeps: 1, radial_scale: T::one() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedAttack<T> {
    pub attacked: DiTrajectory<T>,
    pub signal: AttackSignal<T>,
    /// `a_r` at the start of each step.
    pub radial: Vec<T>,
    /// Signed tangential magnitude at the start of each step (positive is
    /// counterclockwise).
    pub tangential: Vec<T>,
}

impl<T: Scalar> SynthesizedAttack<T> {
    pub fn terminal_deviation(&self, nominal: &DiTrajectory<T>) -> T {
        (self.attacked.last().p - nominal.last().p).norm()
    }
}

/// Input produced by the law at one instant.
struct LawSample<T> {
    u: Vec2<T>,
    a_r: T,
    c: T,
}

fn law<T: Scalar>(
    t: f64,
    xn: &RobotState<T>,
    x: &RobotState<T>,
    u_n: Vec2<T>,
    policy: &(impl TangentialPolicy<T> + ?Sized),
    opts: &AttackOptions<T>,
) -> Result<LawSample<T>> {
    let r = x.p.norm();
    if r <= T::lit(1e-12) * (T::one() + xn.p.norm()) {
        return match opts.singular_input {
            Some(u) if u.norm() <= opts.u_max * T::lit(1.0 + 1e-9) => Ok(LawSample { u, a_r: T::zero(), c: T::zero() }),
            Some(u) => Err(Error::ControlBound { t, magnitude: u.norm().as_f64(), bound: opts.u_max.as_f64() }),
            None => Err(Error::SingularPosition { t }),
        };
    }
    let a_r = radial_acceleration(u_n, xn.p, xn.v, x.p, x.v)? * opts.radial_scale;
    let budget = tangential_budget(a_r, x.p, opts.u_max).map_err(|_| Error::Infeasible { t, max_tangential: 0.0 })?;
    let ctx = PolicyContext { t, state: *x, nominal: *xn, u_n, a_r, budget };
    let mut c = policy.tangential(&ctx);
    if !c.is_finite() {
        return Err(Error::NonFinite("tangential policy output"));
    }
    let slack = budget * T::lit(1e-9) + opts.u_max * T::lit(1e-12);
    if c.abs() > budget + slack {
        return Err(Error::Infeasible { t, max_tangential: budget.as_f64() });
    }
    c = c.max(-budget).min(budget);
    let u = x.p * a_r + x.p.perp() * (c / r);
    Ok(LawSample { u, a_r, c })
}

/// Co-integrates nominal and attacked dynamics from step `k0`, where the
/// attacked state is `x_start`. Samples before `k0` replay the nominal.
pub(crate) fn co_integrate<T: Scalar>(
    nominal: &DiTrajectory<T>,
    k0: usize,
    x_start: RobotState<T>,
    policy: &(impl TangentialPolicy<T> + ?Sized),
    opts: &AttackOptions<T>,
) -> Result<SynthesizedAttack<T>> {
    let n = nominal.steps();
    if k0 > n {
        return Err(Error::InvalidArgument(format!("start index {k0} beyond {n} steps")));
    }
    if !(opts.u_max > T::zero()) {
        return Err(Error::InvalidArgument("u_max must be positive".into()));
    }
    let m = opts.substeps.max(1);
    let mut states = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n);
    let mut radial = Vec::with_capacity(n);
    let mut tangential = Vec::with_capacity(n);
    for k in 0..k0 {
        states.push(nominal.states[k]);
        u.push(nominal.controls[k]);
        let xn = &nominal.states[k];
        let r2 = xn.p.norm_sq();
        let (ar, c) = if r2 > T::zero() {
            let un = nominal.controls[k];
            ((un.dot(xn.p) + xn.v.norm_sq() - xn.v.norm_sq()) / r2, un.dot(xn.p.perp()) / r2.sqrt())
        } else {
            (T::zero(), T::zero())
        };
        radial.push(ar);
        tangential.push(c);
    }
    states.push(x_start);
    let h = nominal.dt / m as f64;
    let ht = T::lit(h);
    let mut xn = nominal.states[k0];
    let mut x = x_start;
    for k in k0..n {
        let u_n = nominal.controls[k];
        if k > k0 {
            xn = nominal.states[k];
        }
        let mut first: Option<LawSample<T>> = None;
        for j in 0..m {
            let t = nominal.time(k) + j as f64 * h;
            let y0 = {
                let (a, b) = (xn.to_array(), x.to_array());
                [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]]
            };
            let y = try_rk4_step(T::zero(), &y0, ht, |s, _, y| {
                let ts = t + stage_fraction(s) * h;
                let xn_s = RobotState::from_array([y[0], y[1], y[2], y[3]]);
                let x_s = RobotState::from_array([y[4], y[5], y[6], y[7]]);
                let ls = law(ts, &xn_s, &x_s, u_n, policy, opts)?;
                let out = [y[2], y[3], u_n.x, u_n.y, y[6], y[7], ls.u.x, ls.u.y];
                if s == 0 && j == 0 {
                    first = Some(ls);
                }
                Ok::<_, Error>(out)
            })?;
            xn = RobotState::from_array([y[0], y[1], y[2], y[3]]);
            x = RobotState::from_array([y[4], y[5], y[6], y[7]]);
            if !x.is_finite() {
                return Err(Error::NonFinite("attacked state"));
            }
        }
        let ls = first.take().expect("first stage always evaluated");
        u.push(ls.u);
        radial.push(ls.a_r);
        tangential.push(ls.c);
        states.push(x);
    }
    let u_gnss = nominal.states.iter().zip(&states).map(|(a, b)| a.p - b.p).collect();
    let attacked = Trajectory::new(nominal.t0, nominal.dt, states, u.clone())?;
    Ok(SynthesizedAttack { attacked, signal: AttackSignal { u, u_gnss }, radial, tangential })
}

/// Builds the attack `u = a_r·p + w` along a nominal rollout, starting from
/// the nominal initial state.
pub fn undetectable_attack<T: Scalar>(
    nominal: &DiTrajectory<T>,
    policy: &(impl TangentialPolicy<T> + ?Sized),
    u_max: T,
) -> Result<SynthesizedAttack<T>> {
    undetectable_attack_with(nominal, policy, &AttackOptions::new(u_max))
}

pub fn undetectable_attack_with<T: Scalar>(
    nominal: &DiTrajectory<T>,
    policy: &(impl TangentialPolicy<T> + ?Sized),
    opts: &AttackOptions<T>,
) -> Result<SynthesizedAttack<T>> {
    co_integrate(nominal, 0, nominal.states[0], policy, opts)
}

/// Detection thresholds for a given attack: ten times the change in the
/// measurement residuals when the step is halved.
pub fn attack_tolerances<T: Scalar>(
    nominal: &DiTrajectory<T>,
    policy: &(impl TangentialPolicy<T> + ?Sized),
    opts: &AttackOptions<T>,
) -> Result<Tolerances<T>> {
    let coarse = undetectable_attack_with(nominal, policy, opts)?;
    let mut fine_opts = *opts;
    fine_opts.substeps = opts.substeps.max(1) * 2;
    let fine = undetectable_attack_with(nominal, policy, &fine_opts)?;
    let mut rssi = T::zero();
    let mut gnss = T::zero();
    let mut scale = T::zero();
    for k in 0..nominal.states.len() {
        let pn = nominal.states[k].p;
        let (a, b) = (coarse.attacked.states[k].p, fine.attacked.states[k].p);
        let ra = a.norm_sq() - pn.norm_sq();
        let rb = b.norm_sq() - pn.norm_sq();
        rssi = rssi.max((ra - rb).abs());
        let ga = (a + coarse.signal.u_gnss[k] - pn).norm();
        let gb = (b + fine.signal.u_gnss[k] - pn).norm();
        gnss = gnss.max((ga - gb).abs());
        scale = scale.max(pn.norm_sq());
    }
    Ok(Tolerances::from_error_estimate(gnss, rssi, scale))
}

/// Pointwise residuals of the two range identities `pᵀp = p_nᵀp_n` and
/// `vᵀp = v_nᵀp_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UndetectabilityReport<T> {
    pub undetectable: bool,
    pub max_range_residual: T,
    pub max_radial_velocity_residual: T,
}

pub fn verify_undetectable<T: Scalar>(nominal: &DiTrajectory<T>, attacked: &DiTrajectory<T>, tol: T) -> Result<UndetectabilityReport<T>> {
    nominal.check_same_grid(attacked)?;
    let mut r1 = T::zero();
    let mut r2 = T::zero();
    for (n, a) in nominal.states.iter().zip(&attacked.states) {
        r1 = r1.max((a.p.norm_sq() - n.p.norm_sq()).abs());
        r2 = r2.max((a.v.dot(a.p) - n.v.dot(n.p)).abs());
    }
    Ok(UndetectabilityReport { undetectable: r1 <= tol && r2 <= tol, max_range_residual: r1, max_radial_velocity_residual: r2 })
}

/// Largest violation of `uᵀp = u_nᵀp_n + ‖v_n‖² − ‖v‖²` over the step-start
/// samples.
pub fn speed_identity_residual<T: Scalar>(nominal: &DiTrajectory<T>, attack: &SynthesizedAttack<T>) -> T {
    let mut worst = T::zero();
    for k in 0..nominal.steps() {
        let (n, a) = (&nominal.states[k], &attack.attacked.states[k]);
        let lhs = attack.signal.u[k].dot(a.p);
        let rhs = nominal.controls[k].dot(n.p) + n.v.norm_sq() - a.v.norm_sq();
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}
