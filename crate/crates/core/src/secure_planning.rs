//! Secure nominal inputs and their planning.
//!
//! An input is classified secure when the robot thrusts at full budget along
//! the line of sight to the base station, `u_n = κ·(p_n/‖p_n‖)·u_max` with
//! `κ ∈ {−1, +1}`, and never reaches the base station itself. Such inputs
//! leave the attacker no tangential budget along the nominal and keep the
//! planar angular momentum `x₁x₄ − x₂x₃` constant, which restricts the
//! reachable states.
//!
//! Zero budget along the nominal does not make the attack unique, though.
//! Near the nominal the budget grows like `√|‖v‖² − ‖v_n‖²|`, which is not
//! Lipschitz, so when the velocity has a tangential component a solution
//! can leave the nominal with `‖u‖ ≤ u_max` and the range identities intact.
//! [`crate::optimal_attack::solve_optimal_attack`] finds such escapes on
//! planned trajectories.
//!
//! [`plan_secure`] minimizes `w_T·T + w_m·‖p_n(T) − p_F‖²` over secure
//! inputs. Time is normalized to `τ = t/ξ ∈ [0, 1]` with `ξ = T` an extra
//! unknown; with `σ = λ_vᵀp/‖p‖` the Hamiltonian (per unit real time) is
//!
//! ```text
//! H = w_T + λ_pᵀv + κ·u_max·σ,     κ = −sgn(σ)   (κ = +1 when σ = 0),
//! ∂H/∂p = κ·u_max·(‖p‖²I − ppᵀ)·λ_v/‖p‖³,     ∂H/∂v = λ_p,
//! ```
//!
//! with boundary conditions `λ(1) = 2w_m[(p(1) − p_F); 0]` and `H(0) = 0`.

use rayon::prelude::*;

use crate::attack_synthesis::{co_integrate, AttackOptions, AttackSignal, BuiltinPolicy, Rotation, SynthesizedAttack};
use crate::attack_synthesis::{verify_undetectable, PolicyContext, TangentialPolicy, UndetectabilityReport};
use crate::bvp_solver::{self, ShootingProblem, SolverConfig};
use crate::dynamics::{DiTrajectory, RobotState, Trajectory};
use crate::error::{Error, Result};
use crate::ode::try_rk4_step;
use crate::scalar::Scalar;
use crate::vec2::Vec2;

/// `x₁x₄ − x₂x₃`.
pub fn manifold_value<T: Scalar>(x: &RobotState<T>) -> T {
    x.p.cross(x.v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldInvariant<T> {
    pub c: T,
}

impl<T: Scalar> ManifoldInvariant<T> {
    pub fn of(x0: &RobotState<T>) -> Self {
        Self { c: manifold_value(x0) }
    }

    /// Largest `|c(x(t)) − c|` along a trajectory.
    pub fn drift(&self, traj: &DiTrajectory<T>) -> T {
        traj.states.iter().map(|x| (manifold_value(x) - self.c).abs()).fold(T::zero(), T::max)
    }
}

/// `(‖p‖²I − ppᵀ)`, the Jacobian of `p/‖p‖` scaled by `‖p‖³`.
pub fn phi_matrix<T: Scalar>(p: Vec2<T>) -> [[T; 2]; 2] {
    let r2 = p.norm_sq();
    [[r2 - p.x * p.x, -p.x * p.y], [-p.x * p.y, r2 - p.y * p.y]]
}

/// Secure thrust direction for one sign.
pub fn secure_input<T: Scalar>(p: Vec2<T>, kappa: T, u_max: T) -> Vec2<T> {
    p * (kappa * u_max / p.norm())
}

/// Piecewise-constant sign profile, one entry per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SecureInputLaw<T> {
    kappa: Vec<T>,
}

impl<T: Scalar> SecureInputLaw<T> {
    /// Rejects samples other than ±1.
    pub fn new(kappa: Vec<T>) -> Result<Self> {
        if let Some(k) = kappa.iter().find(|k| **k != T::one() && **k != -T::one()) {
            return Err(Error::InvalidArgument(format!("kappa sample {k} is not ±1")));
        }
        Ok(Self { kappa })
    }

    pub fn constant(steps: usize, kappa: T) -> Result<Self> {
        Self::new(vec![kappa; steps])
    }

    pub fn samples(&self) -> &[T] {
        &self.kappa
    }

    /// Sign changes as step indices (the new sign applies from that step).
    pub fn switch_steps(&self) -> Vec<usize> {
        self.kappa.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(k, _)| k + 1).collect()
    }
}

/// Rolls out `u = κ_k·p̂·u_max`; the direction is re-evaluated at every RK4
/// stage so the angular momentum is conserved to integration accuracy.
pub fn simulate_secure<T: Scalar>(x0: RobotState<T>, law: &SecureInputLaw<T>, horizon: f64, u_max: T) -> Result<DiTrajectory<T>> {
    let n = law.kappa.len();
    if n == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument("secure rollout needs a positive horizon and at least one step".into()));
    }
    let dt = horizon / n as f64;
    let h = T::lit(dt);
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut x = x0;
    states.push(x);
    for (k, &kap) in law.kappa.iter().enumerate() {
        if x.p.norm_sq() <= T::zero() {
            return Err(Error::SingularPosition { t: k as f64 * dt });
        }
        controls.push(secure_input(x.p, kap, u_max));
        let y = try_rk4_step(T::zero(), &x.to_array(), h, |_, _, y| {
            let p = Vec2::new(y[0], y[1]);
            if p.norm_sq() <= T::zero() {
                return Err(Error::SingularPosition { t: k as f64 * dt });
            }
            let u = secure_input(p, kap, u_max);
            Ok([y[2], y[3], u.x, u.y])
        })?;
        x = RobotState::from_array(y);
        states.push(x);
    }
    Trajectory::new(0.0, dt, states, controls)
}

/// Why an input fails to be secure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diagnosis {
    Secure,
    /// The nominal position reaches the base station.
    ThroughOrigin {
        t: f64,
        step: usize,
    },
    /// Input not along the line of sight.
    Misaligned {
        t: f64,
        step: usize,
    },
    /// Input along the line of sight but below the budget.
    SubMaximal {
        t: f64,
        step: usize,
    },
}

impl Diagnosis {
    pub fn step(&self) -> Option<usize> {
        match *self {
            Diagnosis::Secure => None,
            Diagnosis::ThroughOrigin { step, .. } | Diagnosis::Misaligned { step, .. } | Diagnosis::SubMaximal { step, .. } => Some(step),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityVerdict<T> {
    pub secure: bool,
    pub diagnosis: Diagnosis,
    /// Recovered sign profile when the input is secure.
    pub kappa: Option<SecureInputLaw<T>>,
}

/// Checks the controls of `traj` against the secure form.
///
/// `tol` is absolute for the distance to the base station and relative to
/// `u_max` for the input mismatch.
pub fn is_secure_input<T: Scalar>(traj: &DiTrajectory<T>, u_max: T, tol: T) -> SecurityVerdict<T> {
    let mut kappa = Vec::with_capacity(traj.steps());
    let insecure = |d| SecurityVerdict { secure: false, diagnosis: d, kappa: None };
    for (k, x) in traj.states.iter().enumerate() {
        let t = traj.time(k);
        let r = x.p.norm();
        if r <= tol {
            return insecure(Diagnosis::ThroughOrigin { t, step: k });
        }
        let Some(&u) = traj.controls.get(k) else { continue };
        match sample_diagnosis(x.p, u, u_max, tol, t, k) {
            Ok(kap) => kappa.push(kap),
            Err(d) => return insecure(d),
        }
    }
    SecurityVerdict { secure: true, diagnosis: Diagnosis::Secure, kappa: SecureInputLaw::new(kappa).ok() }
}

/// The secure sign `κ` of one input sample, or why it is not secure.
fn sample_diagnosis<T: Scalar>(p: Vec2<T>, u: Vec2<T>, u_max: T, tol: T, t: f64, step: usize) -> std::result::Result<T, Diagnosis> {
    let r = p.norm();
    let kap = (u.dot(p) / r).sgn();
    if (u - secure_input(p, kap, u_max)).norm() <= tol * u_max {
        return Ok(kap);
    }
    let across = u.cross(p).abs() / r;
    Err(if across <= tol * u_max { Diagnosis::SubMaximal { t, step } } else { Diagnosis::Misaligned { t, step } })
}

/// Which construction produced a violating attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationCase {
    /// Spare input budget at the first violation, spent tangentially.
    TangentialSlack,
    /// Orthogonal map applied after the nominal passes the base station.
    OriginCrossing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolatingAttack<T> {
    pub signal: AttackSignal<T>,
    pub attacked: DiTrajectory<T>,
    pub case: ViolationCase,
    /// Time from which the attacked and nominal inputs differ.
    pub onset: f64,
    pub terminal_deviation: T,
    pub max_deviation: T,
    pub check: UndetectabilityReport<T>,
}

/// Runs a tangential law for a time window and copies the nominal
/// tangential component afterwards.
struct Windowed {
    until: f64,
    during: BuiltinPolicy,
    after: BuiltinPolicy,
}

impl<T: Scalar> TangentialPolicy<T> for Windowed {
    fn tangential(&self, ctx: &PolicyContext<T>) -> T {
        let c = if ctx.t < self.until { self.during.tangential(ctx) } else { self.after.tangential(ctx) };
        c.max(-ctx.budget).min(ctx.budget)
    }
}

/// Builds an undetectable attack that moves the robot off a non-secure
/// nominal, following the case that makes the input non-secure.
///
/// `tol` is the same tolerance handed to [`is_secure_input`]; the returned
/// attack deviates by more than `min_deviation` at some sample.
pub fn construct_violating_attack<T: Scalar>(nominal: &DiTrajectory<T>, u_max: T, tol: T, min_deviation: T) -> Result<ViolatingAttack<T>> {
    let verdict = is_secure_input(nominal, u_max, tol);
    let step = match verdict.diagnosis {
        Diagnosis::Secure => return Err(Error::AlreadySecure),
        d => d.step().expect("non-secure diagnosis carries a step"),
    };
    let check_tol = T::lit(1e-6) * (T::one() + nominal.states.iter().map(|s| s.p.norm_sq()).fold(T::zero(), T::max));
    let finish = |att: SynthesizedAttack<T>, case, step| -> Result<ViolatingAttack<T>> {
        let check = verify_undetectable(nominal, &att.attacked, check_tol)?;
        let max_deviation = att.attacked.states.iter().zip(&nominal.states).map(|(a, b)| (a.p - b.p).norm()).fold(T::zero(), T::max);
        Ok(ViolatingAttack {
            terminal_deviation: att.terminal_deviation(nominal),
            signal: att.signal,
            attacked: att.attacked,
            case,
            onset: nominal.time(step),
            max_deviation,
            check,
        })
    };
    match verdict.diagnosis {
        Diagnosis::ThroughOrigin { .. } => {
            let att = origin_crossing_attack(nominal, step)?;
            let out = finish(att, ViolationCase::OriginCrossing, step)?;
            if out.max_deviation <= min_deviation {
                return Err(Error::NoDeviatingAttack("nominal stays on the mirror axis after crossing the base station".into()));
            }
            Ok(out)
        }
        _ => {
            // Later onsets let the attack shadow the nominal through a close
            // pass of the base station, where the radial term alone can
            // exhaust the budget; they are only tried if the first fails.
            let n = nominal.steps();
            let later = [0.25, 0.5, 0.75].into_iter().filter_map(|f| {
                let from = step + ((n - step) as f64 * f) as usize;
                (from..n).find(|&k| {
                    nominal.states[k].p.norm() > tol
                        && sample_diagnosis(nominal.states[k].p, nominal.controls[k], u_max, tol, nominal.time(k), k).is_err()
                })
            });
            let mut onsets = vec![step];
            for k in later {
                if !onsets.contains(&k) {
                    onsets.push(k);
                }
            }
            let opts = AttackOptions::new(u_max);
            let mut last_err = None;
            for onset in onsets {
                let horizon = nominal.horizon();
                let t_bar = nominal.time(onset);
                let mut candidates: Vec<Box<dyn TangentialPolicy<T>>> = Vec::new();
                for dir in [Rotation::CounterClockwise, Rotation::Clockwise] {
                    candidates.push(Box::new(BuiltinPolicy::Fraction { fraction: 1.0, direction: dir }));
                }
                for frac in [0.5, 0.1, 0.02] {
                    for dir in [Rotation::CounterClockwise, Rotation::Clockwise] {
                        for after in [BuiltinPolicy::Nominal, BuiltinPolicy::Zero] {
                            candidates.push(Box::new(Windowed {
                                until: t_bar + frac * (horizon - t_bar).max(nominal.dt),
                                during: BuiltinPolicy::Fraction { fraction: 1.0, direction: dir },
                                after,
                            }));
                        }
                    }
                }
                let mut best: Option<ViolatingAttack<T>> = None;
                for pol in &candidates {
                    match co_integrate(nominal, onset, nominal.states[onset], pol.as_ref(), &opts) {
                        Ok(att) => {
                            let cand = finish(att, ViolationCase::TangentialSlack, onset)?;
                            if cand.check.undetectable
                                && cand.max_deviation > min_deviation
                                && best.as_ref().is_none_or(|b| cand.terminal_deviation > b.terminal_deviation)
                            {
                                best = Some(cand);
                            }
                        }
                        Err(e) => last_err = Some(e),
                    }
                }
                if let Some(b) = best {
                    return Ok(b);
                }
            }
            Err(Error::NoDeviatingAttack(match last_err {
                Some(e) => format!("every tangential candidate failed; last error: {e}"),
                None => "tangential slack too small to deviate measurably".into(),
            }))
        }
    }
}

/// After the nominal reaches the base station at sample `k`, mirror (or
/// rotate, if it is at rest there) the remainder of the nominal trajectory.
/// Orthogonal maps preserve range and radial speed, so the measurements are
/// unchanged.
fn origin_crossing_attack<T: Scalar>(nominal: &DiTrajectory<T>, k: usize) -> Result<SynthesizedAttack<T>> {
    let vbar = nominal.states[k].v;
    let scale = nominal.states.iter().map(|s| s.v.norm()).fold(T::zero(), T::max);
    let map: Box<dyn Fn(Vec2<T>) -> Vec2<T>> = if vbar.norm() > T::lit(1e-9) * (T::one() + scale) {
        Box::new(move |w: Vec2<T>| w.reflect_across(vbar))
    } else {
        // at rest on the base station: any rotation is admissible
        Box::new(|w: Vec2<T>| w.rotate(T::FRAC_PI_2()))
    };
    let mut states = nominal.states.clone();
    let mut u = nominal.controls.clone();
    for s in states.iter_mut().skip(k) {
        *s = RobotState::new(map(s.p), map(s.v));
    }
    for c in u.iter_mut().skip(k) {
        *c = map(*c);
    }
    let u_gnss = nominal.states.iter().zip(&states).map(|(a, b)| a.p - b.p).collect();
    let radial =
        states.iter().zip(&u).map(|(s, c)| if s.p.norm_sq() > T::zero() { c.dot(s.p) / s.p.norm_sq() } else { T::zero() }).collect();
    let tangential =
        states.iter().zip(&u).map(|(s, c)| if s.p.norm() > T::zero() { c.dot(s.p.perp()) / s.p.norm() } else { T::zero() }).collect();
    let attacked = Trajectory::new(nominal.t0, nominal.dt, states, u.clone())?;
    Ok(SynthesizedAttack { attacked, signal: AttackSignal { u, u_gnss }, radial, tangential })
}

/// Unconstrained baseline: full thrust along the constant direction that
/// would cancel the drift `p_f − p_i − v_i·T`.
pub fn min_time_nominal<T: Scalar>(p_i: Vec2<T>, v_i: Vec2<T>, p_f: Vec2<T>, u_max: T, horizon: f64, dt: f64) -> Result<DiTrajectory<T>> {
    let gap = p_f - p_i - v_i * T::lit(horizon);
    let n = gap.norm();
    let u = if n > T::zero() { gap * (u_max / n) } else { Vec2::zero() };
    crate::dynamics::simulate_double_integrator(RobotState::new(p_i, v_i), &move |_t: f64| u, horizon, dt, u_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityVerdict<T> {
    pub manifold_constant: T,
    pub passes: bool,
    pub reason: Option<String>,
}

/// Necessary-condition screen for reaching `target` with a secure input.
pub fn reachable_check<T: Scalar>(x0: &RobotState<T>, target: Vec2<T>) -> ReachabilityVerdict<T> {
    let c = manifold_value(x0);
    let scale = T::one() + x0.p.norm() * (T::one() + x0.v.norm());
    let tiny = T::lit(1e-12) * scale;
    let fail = |why: &str| ReachabilityVerdict { manifold_constant: c, passes: false, reason: Some(why.to_string()) };
    if x0.p.norm() <= tiny {
        return fail("initial position coincides with the base station");
    }
    if target.norm() <= tiny {
        return fail("target coincides with the base station, which secure trajectories must avoid");
    }
    if c.abs() <= tiny {
        // Zero angular momentum: motion stays on the open ray through p(0).
        let on_line = x0.p.cross(target).abs() <= T::lit(1e-9) * x0.p.norm() * target.norm();
        if !(on_line && x0.p.dot(target) > T::zero()) {
            return fail("zero angular momentum confines the robot to the ray through its start point");
        }
    }
    ReachabilityVerdict { manifold_constant: c, passes: true, reason: None }
}

/// Sign law used by the planner's costate system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaLaw<T> {
    Hard,
    Smooth { eps: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecureRhs<T> {
    pub xdot: [T; 4],
    pub lamdot: [T; 4],
    /// Sign (or its smoothed value in `[−1, 1]`).
    pub kappa: T,
    /// `σ = λ_vᵀp/‖p‖`.
    pub sigma: T,
}

/// Real-time right-hand side of the planner's state/costate system.
pub fn secure_costate_rhs<T: Scalar>(x: &[T; 4], lam: &[T; 4], u_max: T, law: KappaLaw<T>) -> Result<SecureRhs<T>> {
    let p = Vec2::new(x[0], x[1]);
    let lv = Vec2::new(lam[2], lam[3]);
    let r = p.norm();
    if r <= T::zero() {
        return Err(Error::SingularPosition { t: f64::NAN });
    }
    let sigma = lv.dot(p) / r;
    let kappa = match law {
        KappaLaw::Hard => {
            if sigma > T::zero() {
                -T::one()
            } else {
                T::one()
            }
        }
        KappaLaw::Smooth { eps } => -(sigma / eps).tanh(),
    };
    let phi = phi_matrix(p);
    let k3 = kappa * u_max / (r * r * r);
    let dh_dp = Vec2::new(phi[0][0] * lv.x + phi[0][1] * lv.y, phi[1][0] * lv.x + phi[1][1] * lv.y) * k3;
    let acc = p * (kappa * u_max / r);
    Ok(SecureRhs { xdot: [x[2], x[3], acc.x, acc.y], lamdot: [-dh_dp.x, -dh_dp.y, -lam[0], -lam[1]], kappa, sigma })
}

/// Hamiltonian with `κ` substituted by its law; `w_time` is the weight of `T`.
pub fn secure_hamiltonian<T: Scalar>(x: &[T; 4], lam: &[T; 4], u_max: T, law: KappaLaw<T>, w_time: T) -> Result<T> {
    let p = Vec2::new(x[0], x[1]);
    let r = p.norm();
    if r <= T::zero() {
        return Err(Error::SingularPosition { t: f64::NAN });
    }
    let sigma = (lam[2] * x[0] + lam[3] * x[1]) / r;
    let switching = match law {
        KappaLaw::Hard => sigma.abs(),
        // ε·log(2cosh(σ/ε)): same slope as ε·log cosh, but equal to |σ| up to
        // exponentially small terms, so H(0) = 0 is not biased by ε·ln 2
        KappaLaw::Smooth { eps } => {
            let a = sigma.abs() / eps;
            eps * (a + (-(a + a)).exp().ln_1p())
        }
    };
    Ok(w_time + lam[0] * x[2] + lam[1] * x[3] - u_max * switching)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurePlanConfig<T> {
    /// Weight of the horizon in the objective.
    pub w_time: T,
    /// Weight of the squared terminal miss.
    pub w_miss: T,
    /// Steps of the normalized-time grid.
    pub steps: usize,
    pub tol: T,
    pub max_newton: usize,
    pub max_backtracks: usize,
    pub fd_eps: T,
    /// Smoothing widths relative to the switching-function scale.
    pub eps_schedule: Vec<T>,
    pub parallel: bool,
}

impl<T: Scalar> Default for SecurePlanConfig<T> {
    fn default() -> Self {
        Self {
            w_time: T::one(),
            w_miss: T::one(),
            steps: crate::dynamics::DEFAULT_STEPS,
            tol: T::lit(1e-9),
            max_newton: 50,
            max_backtracks: 20,
            fd_eps: T::lit(1e-7),
            eps_schedule: [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6].iter().map(|&e| T::lit(e)).collect(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurePlan<T> {
    pub trajectory: DiTrajectory<T>,
    pub kappa: SecureInputLaw<T>,
    pub horizon: T,
    pub xi: T,
    pub terminal_miss: T,
    pub objective: T,
    pub converged: bool,
    /// `λ(0)ᵀf(x(0), κ(0)) + w_T` with the exact sign law.
    pub free_time_residual: T,
    pub shooting_residual: T,
    pub epsilon: T,
    /// The reported sign profile is the exact-law rollout of the solved
    /// initial costate.
    pub bang_consistent: bool,
    pub costate: Vec<[T; 4]>,
    pub switch_times: Vec<f64>,
    pub initial_costate: [T; 4],
}

struct PlanRollout<T> {
    xs: Vec<[T; 4]>,
    lams: Vec<[T; 4]>,
    kappas: Vec<T>,
}

/// Integrates state and costate over `τ ∈ [0, 1]` with `ξ` scaling.
fn plan_rollout<T: Scalar>(x0: [T; 4], lam0: [T; 4], xi: T, u_max: T, steps: usize, law: KappaLaw<T>) -> Result<PlanRollout<T>> {
    if !(xi > T::zero()) {
        return Err(Error::InvalidArgument("time scale must be positive".into()));
    }
    let h = T::one() / T::lit(steps as f64);
    let mut y = [x0[0], x0[1], x0[2], x0[3], lam0[0], lam0[1], lam0[2], lam0[3]];
    let mut xs = Vec::with_capacity(steps + 1);
    let mut lams = Vec::with_capacity(steps + 1);
    let mut kappas = Vec::with_capacity(steps);
    xs.push(x0);
    lams.push(lam0);
    for _ in 0..steps {
        let mut k0 = T::zero();
        y = try_rk4_step(T::zero(), &y, h, |s, _, y| {
            let r = secure_costate_rhs(&[y[0], y[1], y[2], y[3]], &[y[4], y[5], y[6], y[7]], u_max, law)?;
            if s == 0 {
                k0 = r.kappa;
            }
            Ok::<_, Error>(std::array::from_fn(|i| xi * if i < 4 { r.xdot[i] } else { r.lamdot[i - 4] }))
        })?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("secure rollout"));
        }
        kappas.push(k0);
        xs.push([y[0], y[1], y[2], y[3]]);
        lams.push([y[4], y[5], y[6], y[7]]);
    }
    Ok(PlanRollout { xs, lams, kappas })
}

struct PlanShooting<T> {
    x0: [T; 4],
    target: Vec2<T>,
    u_max: T,
    cfg_w_time: T,
    cfg_w_miss: T,
    steps: usize,
    law: KappaLaw<T>,
    lambda_scale: T,
    xi_scale: T,
}

impl<T: Scalar> PlanShooting<T> {
    fn residual_of(&self, z: &[T], ro: &PlanRollout<T>) -> Result<Vec<T>> {
        let x1 = ro.xs.last().unwrap();
        let l1 = ro.lams.last().unwrap();
        let two_w = T::lit(2.0) * self.cfg_w_miss;
        let h0 = secure_hamiltonian(&self.x0, &[z[0], z[1], z[2], z[3]], self.u_max, self.law, self.cfg_w_time)?;
        Ok(vec![l1[0] - two_w * (x1[0] - self.target.x), l1[1] - two_w * (x1[1] - self.target.y), l1[2], l1[3], h0])
    }

    fn objective_of(&self, xi: T, ro: &PlanRollout<T>) -> T {
        let x1 = ro.xs.last().unwrap();
        self.cfg_w_time * xi + self.cfg_w_miss * (Vec2::new(x1[0], x1[1]) - self.target).norm_sq()
    }
}

impl<T: Scalar> ShootingProblem<T> for PlanShooting<T> {
    fn dim(&self) -> usize {
        5
    }

    fn residual(&self, z: &[T]) -> Result<Vec<T>> {
        let ro = plan_rollout(self.x0, [z[0], z[1], z[2], z[3]], z[4], self.u_max, self.steps, self.law)?;
        self.residual_of(z, &ro)
    }

    fn scale(&self) -> Vec<T> {
        vec![self.lambda_scale, self.lambda_scale, self.lambda_scale, self.lambda_scale, self.xi_scale]
    }

    fn residual_scale(&self) -> Vec<T> {
        vec![self.lambda_scale, self.lambda_scale, self.lambda_scale, self.lambda_scale, self.cfg_w_time.max(T::lit(1e-12))]
    }

    fn objective(&self, z: &[T]) -> Option<T> {
        let ro = plan_rollout(self.x0, [z[0], z[1], z[2], z[3]], z[4], self.u_max, self.steps, self.law).ok()?;
        Some(self.objective_of(z[4], &ro))
    }
}

/// Backward adjoint along a fixed secure rollout in normalized time.
fn plan_adjoint_seed<T: Scalar>(
    traj: &DiTrajectory<T>,
    law: &SecureInputLaw<T>,
    xi: T,
    target: Vec2<T>,
    u_max: T,
    w_miss: T,
) -> Option<[T; 4]> {
    let n = law.kappa.len();
    let h = T::one() / T::lit(n as f64);
    let pt = traj.last().p;
    let two_w = T::lit(2.0) * w_miss;
    let mut lam = [two_w * (pt.x - target.x), two_w * (pt.y - target.y), T::zero(), T::zero()];
    let half = T::lit(0.5);
    for k in (0..n).rev() {
        let (a, b) = (traj.states[k].to_array(), traj.states[k + 1].to_array());
        let kap = law.kappa[k];
        lam = try_rk4_step(T::zero(), &lam, -h, |s, _, l| {
            let x: [T; 4] = match s {
                0 => b,
                1 | 2 => std::array::from_fn(|i| (a[i] + b[i]) * half),
                _ => a,
            };
            let p = Vec2::new(x[0], x[1]);
            let r = p.norm();
            if r <= T::zero() {
                return Err(());
            }
            let phi = phi_matrix(p);
            let k3 = kap * u_max / (r * r * r);
            let g = Vec2::new(phi[0][0] * l[2] + phi[0][1] * l[3], phi[1][0] * l[2] + phi[1][1] * l[3]) * k3;
            Ok([-xi * g.x, -xi * g.y, -xi * l[0], -xi * l[1]])
        })
        .ok()?;
    }
    lam.iter().all(|v| v.is_finite()).then_some(lam)
}

/// Sign profiles whose adjoints seed the planner.
fn seed_profiles(steps: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0; steps], vec![-1.0; steps]];
    for f in [0.25, 0.5, 0.75] {
        let k = ((steps as f64) * f) as usize;
        for first in [1.0, -1.0] {
            out.push((0..steps).map(|i| if i < k { first } else { -first }).collect());
        }
    }
    out
}

/// Plans a secure trajectory from `(p_i, v_i)` towards `p_f`.
pub fn plan_secure<T: Scalar>(p_i: Vec2<T>, v_i: Vec2<T>, p_f: Vec2<T>, u_max: T, cfg: &SecurePlanConfig<T>) -> Result<SecurePlan<T>> {
    let x0 = RobotState::new(p_i, v_i);
    if p_i.norm_sq() <= T::zero() {
        return Err(Error::InvalidArgument("initial position must differ from the base station".into()));
    }
    if !(u_max > T::zero()) || !(cfg.w_time > T::zero()) || !(cfg.w_miss > T::zero()) {
        return Err(Error::InvalidArgument("u_max and objective weights must be positive".into()));
    }
    let verdict = reachable_check(&x0, p_f);
    if !verdict.passes {
        return Err(Error::Unreachable(verdict.reason.unwrap_or_default()));
    }
    let steps = cfg.steps.max(10);
    let dist = (p_f - p_i).norm().max(T::lit(1e-6));
    let xi0 = T::lit(2.0) * dist / (u_max * dist).sqrt();
    let lambda_scale = T::one() + T::lit(2.0) * cfg.w_miss * dist;
    let sigma_scale = lambda_scale * xi0.max(T::one());

    let mut seeds: Vec<Vec<T>> = Vec::new();
    let profiles = seed_profiles(steps);
    let pairs: Vec<(f64, &Vec<f64>)> = [0.5, 1.0, 1.5, 2.0].iter().flat_map(|f| profiles.iter().map(move |p| (*f, p))).collect();
    let found: Vec<Vec<T>> = pairs
        .par_iter()
        .filter_map(|(f, prof)| {
            let xi = xi0 * T::lit(*f);
            let law = SecureInputLaw::new(prof.iter().map(|k| T::lit(*k)).collect()).ok()?;
            let traj = simulate_secure(x0, &law, xi.as_f64(), u_max).ok()?;
            let lam = plan_adjoint_seed(&traj, &law, xi, p_f, u_max, cfg.w_miss)?;
            Some(vec![lam[0], lam[1], lam[2], lam[3], xi])
        })
        .collect();
    seeds.extend(found);
    if seeds.is_empty() {
        return Err(Error::Solver("no secure seed rollout succeeded".into()));
    }

    let problem_at = |e: T| PlanShooting {
        x0: x0.to_array(),
        target: p_f,
        u_max,
        cfg_w_time: cfg.w_time,
        cfg_w_miss: cfg.w_miss,
        steps,
        law: KappaLaw::Smooth { eps: e * sigma_scale },
        lambda_scale,
        xi_scale: xi0,
    };
    let solver_cfg = |seeds: Vec<Vec<T>>, parallel: bool| SolverConfig {
        tol: cfg.tol,
        max_newton: cfg.max_newton,
        fd_eps: cfg.fd_eps,
        max_backtracks: cfg.max_backtracks,
        seeds,
        parallel,
    };
    let e0 = cfg.eps_schedule.first().copied().unwrap_or(T::lit(1e-2));
    let out = bvp_solver::solve(&problem_at(e0), &solver_cfg(seeds, cfg.parallel))?;
    let mut branches: Vec<(Vec<T>, T, usize, T)> = Vec::new(); // z, residual, iterations, eps
    for r in out.runs.iter().filter(|r| r.converged) {
        let dup = branches
            .iter()
            .any(|b| b.0.iter().zip(&r.unknowns).map(|(a, c)| (*a - *c).sq()).sum::<T>().sqrt() < T::lit(1e-6) * lambda_scale);
        if !dup {
            branches.push((r.unknowns.clone(), r.residual_norm, r.log.len().saturating_sub(1), e0));
        }
    }
    let converged = !branches.is_empty();
    if !converged {
        let b = out.best_run();
        branches.push((b.unknowns.clone(), b.residual_norm, b.log.len().saturating_sub(1), e0));
    } else {
        let levels: Vec<T> = cfg.eps_schedule.iter().skip(1).copied().collect();
        branches = branches
            .into_par_iter()
            .map(|mut b| {
                let mut scfg = solver_cfg(vec![], false);
                scfg.max_newton = scfg.max_newton.min(12);
                scfg.max_backtracks = scfg.max_backtracks.min(8);
                for &target in &levels {
                    let mut step = target;
                    let mut ok = false;
                    for _ in 0..3 {
                        let run = bvp_solver::newton(&problem_at(step), 0, &b.0, &scfg);
                        if run.converged && run.unknowns[4] > T::zero() {
                            b = (run.unknowns, run.residual_norm, run.log.len().saturating_sub(1), step);
                            if step == target {
                                ok = true;
                                break;
                            }
                            step = target;
                        } else {
                            step = (b.3 * step).sqrt();
                        }
                    }
                    if !ok {
                        break;
                    }
                }
                b
            })
            .collect();
    }

    // Report each branch as an exactly secure rollout and keep the cheapest.
    let mut best: Option<SecurePlan<T>> = None;
    for (z, res, iters, e) in branches {
        let plan = report_plan(x0, p_f, u_max, cfg, steps, &z, res, iters, e * sigma_scale, e, converged)?;
        if best.as_ref().is_none_or(|b| plan.objective < b.objective) {
            best = Some(plan);
        }
    }
    best.ok_or_else(|| Error::Solver("no plan".into()))
}

#[allow(clippy::too_many_arguments)]
fn report_plan<T: Scalar>(
    x0: RobotState<T>,
    p_f: Vec2<T>,
    u_max: T,
    cfg: &SecurePlanConfig<T>,
    steps: usize,
    z: &[T],
    shooting_residual: T,
    _iterations: usize,
    eps_abs: T,
    eps_rel: T,
    converged: bool,
) -> Result<SecurePlan<T>> {
    let lam0 = [z[0], z[1], z[2], z[3]];
    let xi = z[4];
    let hard = plan_rollout(x0.to_array(), lam0, xi, u_max, steps, KappaLaw::Hard).ok();
    let smooth = plan_rollout(x0.to_array(), lam0, xi, u_max, steps, KappaLaw::Smooth { eps: eps_abs })?;
    // Sign profile: exact law from the solved costate if that rollout still
    // lands where the smoothed one did, else the sign of the smoothed law.
    let close = hard.as_ref().is_some_and(|h| {
        let a = h.xs.last().unwrap();
        let b = smooth.xs.last().unwrap();
        (Vec2::new(a[0], a[1]) - Vec2::new(b[0], b[1])).norm() <= T::lit(1e-6) * (T::one() + p_f.norm())
    });
    let (kappas, costate) = if close {
        let h = hard.unwrap();
        (h.kappas, h.lams)
    } else {
        (smooth.kappas.iter().map(|k| if *k < T::zero() { -T::one() } else { T::one() }).collect(), smooth.lams)
    };
    let law = SecureInputLaw::new(kappas)?;
    let trajectory = simulate_secure(x0, &law, xi.as_f64(), u_max)?;
    let terminal_miss = (trajectory.last().p - p_f).norm();
    let objective = cfg.w_time * xi + cfg.w_miss * terminal_miss.sq();
    let k0 = law.kappa[0];
    let u0 = secure_input(x0.p, k0, u_max);
    let free_time_residual = lam0[0] * x0.v.x + lam0[1] * x0.v.y + lam0[2] * u0.x + lam0[3] * u0.y + cfg.w_time;
    let dt = xi.as_f64() / steps as f64;
    let switch_times = law.switch_steps().iter().map(|k| *k as f64 * dt).collect();
    Ok(SecurePlan {
        trajectory,
        kappa: law,
        horizon: xi,
        xi,
        terminal_miss,
        objective,
        converged,
        free_time_residual,
        shooting_residual,
        epsilon: eps_rel,
        bang_consistent: close,
        costate,
        switch_times,
        initial_costate: lam0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifold_examples() {
        assert_eq!(manifold_value(&RobotState::new(Vec2::new(1.0, 0.0), Vec2::new(0.7, 0.0))), 0.0);
        assert_eq!(manifold_value(&RobotState::new(Vec2::new(1.0, 1.0), Vec2::new(-1.0, 1.0))), 2.0);
        assert_eq!(manifold_value(&RobotState::<f64>::default()), 0.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn phi_is_jacobian_of_direction() {
        let p: Vec2<f64> = Vec2::new(0.8, -1.3);
        let phi = phi_matrix(p);
        let r3 = p.norm().powi(3);
        let h = 1e-6;
        for j in 0..2 {
            let e = if j == 0 { Vec2::new(h, 0.0) } else { Vec2::new(0.0, h) };
            let a = p + e;
            let b = p - e;
            let d = (a / a.norm() - b / b.norm()) / (2.0 * h);
            assert!((d.x - phi[0][j] / r3).abs() < 1e-8);
            assert!((d.y - phi[1][j] / r3).abs() < 1e-8);
        }
    }

    #[test]
    fn secure_law_is_secure() {
        let x0 = RobotState::new(Vec2::new(1.0, 1.0), Vec2::new(-0.2, 0.3));
        let law = SecureInputLaw::new((0..200).map(|k| if k < 120 { 1.0 } else { -1.0 }).collect()).unwrap();
        let tr = simulate_secure(x0, &law, 2.0, 1.0).unwrap();
        let v = is_secure_input(&tr, 1.0, 1e-9);
        assert!(v.secure, "{v:?}");
        assert_eq!(v.kappa.unwrap().samples(), law.samples());
        assert!(ManifoldInvariant::of(&x0).drift(&tr) < 1e-10);
    }

    #[test]
    fn kappa_rejects_non_unit() {
        assert!(SecureInputLaw::new(vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn diagnoses() {
        let sim = |x0: RobotState<f64>, u: Vec2<f64>, t: f64, dt: f64| {
            crate::dynamics::simulate_double_integrator(x0, &move |_t: f64| u, t, dt, 1.0).unwrap()
        };
        let dir = Vec2::new(1.0, -1.0) / 2f64.sqrt();
        let v = is_secure_input(&sim(RobotState::at_rest(dir), dir * 0.5, 1.0, 0.1), 1.0, 1e-9);
        assert!(matches!(v.diagnosis, Diagnosis::SubMaximal { step: 0, .. }));
        let v = is_secure_input(&sim(RobotState::at_rest(Vec2::new(1.0, 1.0)), dir, 1.0, 0.1), 1.0, 1e-9);
        assert!(matches!(v.diagnosis, Diagnosis::Misaligned { step: 0, .. }));
        // decelerate onto the base station: d = t²/2 at t = 1
        let x0 = RobotState::new(Vec2::new(0.5, 0.0), Vec2::new(-1.0, 0.0));
        let v = is_secure_input(&sim(x0, Vec2::new(1.0, 0.0), 1.0, 0.1), 1.0, 1e-9);
        assert!(matches!(v.diagnosis, Diagnosis::ThroughOrigin { step: 10, .. }), "{v:?}");
    }

    #[test]
    fn reachability_screen() {
        let x0 = RobotState::new(Vec2::new(2.0, 0.0), Vec2::new(-0.5, 0.0));
        assert!(reachable_check(&x0, Vec2::new(5.0, 0.0)).passes);
        assert!(!reachable_check(&x0, Vec2::new(-1.0, 0.0)).passes);
        let x0 = RobotState::new(Vec2::new(1.0, 1.0), Vec2::new(-1.0, 1.0));
        assert!(!reachable_check(&x0, Vec2::zero()).passes);
        assert!(reachable_check(&x0, Vec2::new(-3.0, -3.0)).passes);
    }

    #[test]
    fn costate_rhs_matches_hamiltonian() {
        let x: [f64; 4] = [0.7, -1.1, 0.3, 0.4];
        let lam: [f64; 4] = [0.2, 0.5, -0.9, 0.6];
        for law in [KappaLaw::Hard, KappaLaw::Smooth { eps: 0.05 }] {
            let r = secure_costate_rhs(&x, &lam, 1.3, law).unwrap();
            for i in 0..4 {
                let h: f64 = 1e-6;
                let (mut a, mut b) = (x, x);
                a[i] += h;
                b[i] -= h;
                let fd = (secure_hamiltonian(&a, &lam, 1.3, law, 1.0).unwrap() - secure_hamiltonian(&b, &lam, 1.3, law, 1.0).unwrap())
                    / (2.0 * h);
                assert!((fd + r.lamdot[i]).abs() < 1e-7 * (1.0 + fd.abs()), "{law:?} {i}");
            }
        }
    }
}
