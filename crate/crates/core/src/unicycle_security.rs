//! Undetectability and secure inputs for the unicycle.
//!
//! With heading `h = (cos θ, sin θ)` the range obeys `ρ̇ = ν·cos φ`, where
//! `φ = angle(p, ṗ)`. Two input pairs are therefore indistinguishable
//! through GNSS + RSSI exactly when `ν cos φ = ν_n cos φ_n` at all times.
//! A nominal input is secure iff the robot starts with a radial heading,
//! drives at `ν_max` without turning, and never reaches the base station.
//!
//! The attacks built here follow the nominal in polar coordinates: the
//! attacked heading is offset from the nominal one relative to the line of
//! sight by a profile `δ(t)`, the speed is fixed algebraically by
//! `ν = ν_n cos φ_n / cos φ`, and the turn rate keeps the offset on profile.

use crate::dynamics::{wrap_angle, Trajectory, UnicycleState, UnicycleTrajectory, WheelInput};
use crate::error::{Error, Result};
use crate::ode::{stage_fraction, try_rk4_step};
use crate::scalar::Scalar;
use crate::vec2::Vec2;

/// Polar description of a position and its velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarBearing<T> {
    pub rho: T,
    /// Unsigned angle between `p` and `ṗ`, in `[0, π]`.
    pub phi: T,
    /// `φ` plus the direction angle of `ṗ`.
    pub delta: T,
}

/// `angle(v, w) = arccos(vᵀw / ‖v‖‖w‖)`, zero if either vector vanishes.
pub fn unsigned_angle<T: Scalar>(v: Vec2<T>, w: Vec2<T>) -> T {
    let d = v.norm() * w.norm();
    if d <= T::zero() {
        return T::zero();
    }
    (v.dot(w) / d).max(-T::one()).min(T::one()).acos()
}

pub fn bearing<T: Scalar>(p: Vec2<T>, pdot: Vec2<T>) -> PolarBearing<T> {
    let phi = unsigned_angle(p, pdot);
    let theta = if pdot.norm_sq() > T::zero() { pdot.angle() } else { T::zero() };
    PolarBearing { rho: p.norm(), phi, delta: phi + theta }
}

/// `ν·cos φ` for a pose driven at speed `ν`; the range rate.
pub fn range_rate<T: Scalar>(s: &UnicycleState<T>, nu: T) -> T {
    let r = s.p.norm();
    if r <= T::zero() || nu == T::zero() {
        // angle(0, w) = angle(v, 0) = 0
        return nu;
    }
    nu * s.p.dot(s.heading()) / r
}

/// `ν̇` that keeps `ν cos φ` on a prescribed rate `d/dt(ν_n cos φ_n)`:
/// `ν̇ = (target_rate + ν φ̇ sin φ) / cos φ`.
pub fn compensation_rate<T: Scalar>(nu: T, phi: T, phi_dot: T, target_rate: T) -> Result<T> {
    let c = phi.cos();
    if c.abs() < T::lit(1e-6) {
        return Err(Error::CompensationSingularity { t: f64::NAN, cos_phi: c.as_f64() });
    }
    Ok((target_rate + nu * phi_dot * phi.sin()) / c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnicycleUndetectability<T> {
    pub undetectable: bool,
    /// `max |ν cos φ − ν_n cos φ_n|` over the control samples.
    pub max_range_rate_residual: T,
    /// `max |‖p‖ − ‖p_n‖|` over the state samples.
    pub max_range_residual: T,
}

pub fn verify_undetectable_unicycle<T: Scalar>(
    nominal: &UnicycleTrajectory<T>,
    attacked: &UnicycleTrajectory<T>,
    tol: T,
) -> Result<UnicycleUndetectability<T>> {
    nominal.check_same_grid(attacked)?;
    let mut rr = T::zero();
    for k in 0..nominal.steps() {
        let a = range_rate(&attacked.states[k], attacked.controls[k].nu);
        let b = range_rate(&nominal.states[k], nominal.controls[k].nu);
        rr = rr.max((a - b).abs());
    }
    let r = nominal.states.iter().zip(&attacked.states).map(|(n, a)| (n.p.norm() - a.p.norm()).abs()).fold(T::zero(), T::max);
    Ok(UnicycleUndetectability { undetectable: rr <= tol && r <= tol, max_range_rate_residual: rr, max_range_residual: r })
}

/// Which secure-input condition fails first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnicycleDiagnosis {
    Secure,
    /// Initial heading not along the line of sight.
    NonRadialStart,
    /// Nominal reaches the base station.
    ThroughOrigin {
        t: f64,
        step: usize,
    },
    /// Nonzero turn rate.
    Turning {
        t: f64,
        step: usize,
    },
    /// Speed below `ν_max`.
    SlowDown {
        t: f64,
        step: usize,
    },
}

impl UnicycleDiagnosis {
    pub fn step(&self) -> Option<usize> {
        match *self {
            UnicycleDiagnosis::Secure => None,
            UnicycleDiagnosis::NonRadialStart => Some(0),
            UnicycleDiagnosis::ThroughOrigin { step, .. }
            | UnicycleDiagnosis::Turning { step, .. }
            | UnicycleDiagnosis::SlowDown { step, .. } => Some(step),
        }
    }
}

pub const NU_REL_TOL: f64 = 1e-9;
pub const OMEGA_ABS_TOL: f64 = 1e-9;

pub fn is_secure_input_unicycle<T: Scalar>(traj: &UnicycleTrajectory<T>, nu_max: T) -> UnicycleDiagnosis {
    let s0 = traj.states[0];
    let r0 = s0.p.norm();
    let origin_tol = T::lit(1e-9) * (T::one() + r0);
    if r0 > origin_tol && (s0.p.cross(s0.heading()) / r0).abs() > T::lit(1e-9) {
        return UnicycleDiagnosis::NonRadialStart;
    }
    for (k, s) in traj.states.iter().enumerate() {
        let t = traj.time(k);
        if s.p.norm() <= origin_tol {
            return UnicycleDiagnosis::ThroughOrigin { t, step: k };
        }
        let Some(w) = traj.controls.get(k) else { continue };
        if w.omega.abs() > T::lit(OMEGA_ABS_TOL) {
            return UnicycleDiagnosis::Turning { t, step: k };
        }
        if (w.nu - nu_max).abs() > T::lit(NU_REL_TOL) * nu_max {
            return UnicycleDiagnosis::SlowDown { t, step: k };
        }
    }
    UnicycleDiagnosis::Secure
}

/// Heading-offset profile: a `sin²` bump of height `amplitude` over
/// `[start, start + width]`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetBump {
    pub start: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl OffsetBump {
    /// `(δ, δ̇)` at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let s = (t - self.start) / self.width;
        if !(0.0..=1.0).contains(&s) {
            return (0.0, 0.0);
        }
        let a = std::f64::consts::PI * s;
        (self.amplitude * a.sin().powi(2), self.amplitude * std::f64::consts::PI / self.width * (2.0 * a).sin())
    }
}

/// Gain (1/s) of the loop holding the heading offset on its profile.
const LOCK_GAIN: f64 = 20.0;

/// Follows the nominal with the heading offset `bump` from `bump.start`.
///
/// Errors with [`Error::CompensationSingularity`] when `|cos φ| < 1e-6`
/// while the speed has to be solved for, and with [`Error::NegativeSpeed`]
/// or [`Error::ControlBound`] when the required speed leaves `[0, ν_max]`.
/// The 1e-6 cutoff only guards the division: with `|cos φ|` around 1e-3 the
/// result is still returned, but its range error no longer shrinks like dt⁴.
pub fn offset_attack<T: Scalar>(nominal: &UnicycleTrajectory<T>, bump: OffsetBump, nu_max: T) -> Result<UnicycleTrajectory<T>> {
    let n = nominal.steps();
    let dt = nominal.dt;
    let k0 = ((bump.start - nominal.t0) / dt).round().max(0.0) as usize;
    let mut states = nominal.states[..=k0.min(n)].to_vec();
    let mut controls = nominal.controls[..k0.min(n)].to_vec();
    let slack = T::one() + T::lit(1e-9);
    let stage_slack = T::one() + T::lit(1e-3);
    let mut s = *states.last().unwrap();
    for k in k0..n {
        let t = nominal.time(k);
        let sn = nominal.states[k];
        let wn = nominal.controls[k];
        let mut first = None;
        let y0 = [sn.p.x, sn.p.y, sn.theta, s.p.x, s.p.y, s.theta];
        let y = try_rk4_step(T::zero(), &y0, T::lit(dt), |stage, _, y| {
            let ts = t + stage_fraction(stage) * dt;
            let (pn, hn) = (Vec2::new(y[0], y[1]), Vec2::from_angle(y[2]));
            let (p, h) = (Vec2::new(y[3], y[4]), Vec2::from_angle(y[5]));
            let (rn, r) = (pn.norm(), p.norm());
            if rn <= T::zero() || r <= T::zero() {
                return Err(Error::SingularPosition { t: ts });
            }
            let (cn, sn_) = (pn.dot(hn) / rn, pn.cross(hn) / rn);
            let (c, si) = (p.dot(h) / r, p.cross(h) / r);
            let (d, ddot) = bump.eval(ts);
            let nu = if (c - cn).abs() <= T::lit(1e-14) {
                wn.nu
            } else {
                if c.abs() < T::lit(1e-6) {
                    return Err(Error::CompensationSingularity { t: ts, cos_phi: c.as_f64() });
                }
                wn.nu * cn / c
            };
            if nu < -T::lit(1e-12) {
                return Err(Error::NegativeSpeed { t: ts, nu: nu.as_f64() });
            }
            // intermediate RK4 stages sit O(dt²) off the trajectory; only the
            // recorded samples are held to the tight bound
            if nu > nu_max * if stage == 0 { slack } else { stage_slack } {
                return Err(Error::ControlBound { t: ts, magnitude: nu.as_f64(), bound: nu_max.as_f64() });
            }
            let nu = nu.max(T::zero());
            // pull the offset back onto its profile so integration drift
            // cannot push the solved speed past the limit
            let err = sn_.atan2(cn) + T::lit(d) - si.atan2(c);
            let err = wrap_angle(err + T::PI()) - T::PI();
            let omega = wn.omega - wn.nu * sn_ / rn + nu * si / r + T::lit(ddot) + T::lit(LOCK_GAIN) * err;
            if stage == 0 {
                first = Some(WheelInput::new(nu, omega));
            }
            Ok([wn.nu * hn.x, wn.nu * hn.y, wn.omega, nu * h.x, nu * h.y, omega])
        })?;
        s = UnicycleState::new(Vec2::new(y[3], y[4]), y[5]);
        if !s.is_finite() {
            return Err(Error::NonFinite("attacked unicycle state"));
        }
        states.push(s);
        controls.push(first.expect("stage 0 evaluated"));
    }
    Trajectory::new(nominal.t0, dt, states, controls)
}

/// Which construction produced the attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnicycleCase {
    /// Heading offset towards the line of sight, speed compensated.
    NonRadialStart,
    /// Free choice of direction when leaving the base station.
    ThroughOrigin,
    /// Mirror image of the turning remainder.
    Reflection,
    /// Heading offset away from the line of sight, spending spare speed.
    SlowDown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleAttack<T> {
    pub attacked: UnicycleTrajectory<T>,
    pub case: UnicycleCase,
    pub onset: f64,
    pub max_deviation: T,
    pub check: UnicycleUndetectability<T>,
}

/// Builds an undetectable attack that leaves the nominal path of a
/// non-secure unicycle input.
pub fn construct_violating_attack_unicycle<T: Scalar>(
    nominal: &UnicycleTrajectory<T>,
    nu_max: T,
    min_deviation: T,
) -> Result<UnicycleAttack<T>> {
    let diag = is_secure_input_unicycle(nominal, nu_max);
    let k = match diag.step() {
        None => return Err(Error::AlreadySecure),
        Some(k) => k,
    };
    let scale = nominal.states.iter().map(|s| s.p.norm()).fold(T::zero(), T::max);
    let check_tol = T::lit(1e-6) * (T::one() + scale) * (T::one() + nu_max);
    let finish = |attacked: UnicycleTrajectory<T>, case| -> Result<UnicycleAttack<T>> {
        let mut check = verify_undetectable_unicycle(nominal, &attacked, check_tol)?;
        if case == UnicycleCase::ThroughOrigin {
            // the heading jump at the crossing carries no range-rate sample
            check.undetectable = check.max_range_residual <= check_tol;
        }
        let max_deviation = attacked.states.iter().zip(&nominal.states).map(|(a, b)| (a.p - b.p).norm()).fold(T::zero(), T::max);
        Ok(UnicycleAttack { attacked, case, onset: nominal.time(k), max_deviation, check })
    };
    let accept = |a: &UnicycleAttack<T>| a.check.undetectable && a.max_deviation > min_deviation;
    match diag {
        UnicycleDiagnosis::Secure => unreachable!(),
        UnicycleDiagnosis::ThroughOrigin { .. } => {
            let axis = nominal.states[k].heading();
            let mirrored = map_remainder(nominal, k, |s| mirror(s, axis), true)?;
            let a = finish(mirrored, UnicycleCase::ThroughOrigin)?;
            if accept(&a) {
                return Ok(a);
            }
            // straight through the origin: leave in a rotated direction
            let quarter = T::FRAC_PI_2();
            let rotated = map_remainder(nominal, k, |s| UnicycleState::new(s.p.rotate(quarter), s.theta + quarter), false)?;
            let a = finish(rotated, UnicycleCase::ThroughOrigin)?;
            if accept(&a) {
                Ok(a)
            } else {
                Err(Error::NoDeviatingAttack("nominal does not move after reaching the base station".into()))
            }
        }
        UnicycleDiagnosis::Turning { .. } => {
            let axis = nominal.states[k].p;
            let a = finish(map_remainder(nominal, k, |s| mirror(s, axis), true)?, UnicycleCase::Reflection)?;
            if accept(&a) {
                Ok(a)
            } else {
                Err(Error::NoDeviatingAttack("mirrored remainder coincides with the nominal".into()))
            }
        }
        UnicycleDiagnosis::NonRadialStart | UnicycleDiagnosis::SlowDown { .. } => {
            let case = if diag == UnicycleDiagnosis::NonRadialStart { UnicycleCase::NonRadialStart } else { UnicycleCase::SlowDown };
            // the compensation is singular where the nominal moves tangentially
            let k0 = (k..nominal.steps())
                .find(|&j| {
                    let s = nominal.states[j];
                    let r = s.p.norm();
                    r > T::zero() && (s.p.dot(s.heading()) / r).abs() >= T::lit(1e-3)
                })
                .ok_or_else(|| Error::NoDeviatingAttack("nominal never leaves tangential motion".into()))?;
            let t0 = nominal.time(k0);
            let rest = nominal.horizon() - t0;
            let mut best: Option<UnicycleAttack<T>> = None;
            let mut last_err = None;
            for width in [0.5, 0.2, 0.05] {
                for amplitude in [0.5, 0.2, 0.05, 0.01] {
                    for sign in [1.0, -1.0] {
                        let bump = OffsetBump { start: t0, width: (width * rest).max(4.0 * nominal.dt), amplitude: sign * amplitude };
                        match offset_attack(nominal, bump, nu_max) {
                            Ok(tr) => {
                                let a = finish(tr, case)?;
                                if accept(&a) && best.as_ref().is_none_or(|b| a.max_deviation > b.max_deviation) {
                                    best = Some(a);
                                }
                            }
                            Err(e) => last_err = Some(e),
                        }
                    }
                }
            }
            best.ok_or_else(|| {
                Error::NoDeviatingAttack(match last_err {
                    Some(e) => format!("no feasible heading offset; last error: {e}"),
                    None => "heading offsets do not deviate measurably".into(),
                })
            })
        }
    }
}

fn mirror<T: Scalar>(s: UnicycleState<T>, axis: Vec2<T>) -> UnicycleState<T> {
    let a = axis.angle();
    UnicycleState::new(s.p.reflect_across(axis), a + a - s.theta)
}

/// Applies an orthogonal map to the nominal from sample `k` on; the turn
/// rate flips sign for reflections.
fn map_remainder<T: Scalar>(
    nominal: &UnicycleTrajectory<T>,
    k: usize,
    f: impl Fn(UnicycleState<T>) -> UnicycleState<T>,
    reflect: bool,
) -> Result<UnicycleTrajectory<T>> {
    let mut states = nominal.states.clone();
    let mut controls = nominal.controls.clone();
    for s in states.iter_mut().skip(k) {
        *s = f(*s);
    }
    if reflect {
        for w in controls.iter_mut().skip(k) {
            w.omega = -w.omega;
        }
    }
    Trajectory::new(nominal.t0, nominal.dt, states, controls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_unicycle, WheelLimits};
    use std::f64::consts::PI;

    const LIM: WheelLimits<f64> = WheelLimits { nu_max: 1.0, omega_max: 10.0 };

    fn run(s0: UnicycleState<f64>, f: impl Fn(f64) -> WheelInput<f64> + Sync, t: f64) -> UnicycleTrajectory<f64> {
        simulate_unicycle(s0, &f, t, 0.005, LIM).unwrap()
    }

    #[test]
    fn bearing_conventions() {
        let b = bearing(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0));
        assert!((b.phi - PI / 2.0).abs() < 1e-15);
        assert!((bearing(Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)).phi - PI).abs() < 1e-15);
        assert_eq!(bearing(Vec2::zero(), Vec2::new(0.3, 0.2)).phi, 0.0);
        assert_eq!(bearing(Vec2::new(0.3, 0.2), Vec2::zero()).phi, 0.0);
    }

    #[test]
    fn secure_diagnosis() {
        let full = |_t: f64| WheelInput::new(1.0, 0.0);
        let tr = run(UnicycleState::new(Vec2::new(1.0, 0.0), PI), full, 0.8);
        assert_eq!(is_secure_input_unicycle(&tr, 1.0), UnicycleDiagnosis::Secure);
        let tr = run(UnicycleState::new(Vec2::new(1.0, 0.0), PI), |_t| WheelInput::new(0.9, 0.0), 0.8);
        assert!(matches!(is_secure_input_unicycle(&tr, 1.0), UnicycleDiagnosis::SlowDown { step: 0, .. }));
        let tr = run(UnicycleState::new(Vec2::new(1.0, 0.0), PI / 2.0), full, 0.8);
        assert_eq!(is_secure_input_unicycle(&tr, 1.0), UnicycleDiagnosis::NonRadialStart);
        let tr = run(UnicycleState::new(Vec2::new(1.0, 0.0), PI), full, 1.5);
        assert!(matches!(is_secure_input_unicycle(&tr, 1.0), UnicycleDiagnosis::ThroughOrigin { step: 200, .. }));
    }

    #[test]
    fn identity_is_undetectable() {
        let tr = run(UnicycleState::new(Vec2::new(1.0, 0.5), 0.3), |t| WheelInput::new(0.7, t.sin()), 2.0);
        let r = verify_undetectable_unicycle(&tr, &tr, 1e-12).unwrap();
        assert!(r.undetectable && r.max_range_rate_residual == 0.0 && r.max_range_residual == 0.0);
    }

    #[test]
    fn same_speed_different_turn_is_detected() {
        let s0 = UnicycleState::new(Vec2::new(1.0, 0.0), PI / 2.0);
        let a = run(s0, |_t| WheelInput::new(1.0, 0.0), 2.0);
        let b = run(s0, |_t| WheelInput::new(1.0, 0.4), 2.0);
        assert!(!verify_undetectable_unicycle(&a, &b, 1e-6).unwrap().undetectable);
    }

    #[test]
    fn compensation_rate_matches_offset_attack() {
        // along an offset attack, ν̇ from finite differences matches the ODE
        let s0 = UnicycleState::new(Vec2::new(2.0, 0.0), 0.0);
        let nom = run(s0, |_t| WheelInput::new(0.6, 0.0), 2.0);
        let att = offset_attack(&nom, OffsetBump { start: 0.0, width: 2.0, amplitude: 0.4 }, 1.0).unwrap();
        let signed_phi = |s: &UnicycleState<f64>| s.p.cross(s.heading()).atan2(s.p.dot(s.heading()));
        let dt = nom.dt;
        for k in [100, 150, 250] {
            let nu = |j: usize| att.controls[j].nu;
            let fd = (nu(k + 1) - nu(k - 1)) / (2.0 * dt);
            let phi = signed_phi(&att.states[k]);
            let phi_dot = (signed_phi(&att.states[k + 1]) - signed_phi(&att.states[k - 1])) / (2.0 * dt);
            // the nominal drives radially at constant speed: target rate 0
            let ode = compensation_rate(nu(k), phi, phi_dot, 0.0).unwrap();
            assert!((fd - ode).abs() < 1e-4 * (1.0 + ode.abs()), "{k}: {fd} vs {ode}");
        }
    }
}
