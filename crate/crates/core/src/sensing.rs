//! GNSS and RSSI measurement models plus the residual monitor that decides
//! whether an attack is visible to the robot.
//!
//! The base station sits at the origin; RSSI is modelled as squared range
//! `pᵀp` and cannot be spoofed, GNSS reads `p + u_gnss`.

use crate::dynamics::DiTrajectory;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vec2::Vec2;

/// Safety factor applied to the discretization-error estimate when deriving
/// default thresholds.
pub const TOLERANCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading<T> {
    pub y_gnss: Vec2<T>,
    pub y_rssi: T,
}

pub fn measure<T: Scalar>(p: Vec2<T>, u_gnss: Vec2<T>) -> SensorReading<T> {
    SensorReading { y_gnss: p + u_gnss, y_rssi: p.norm_sq() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub gnss: T,
    pub rssi: T,
}

impl<T: Scalar> Tolerances<T> {
    pub fn new(gnss: T, rssi: T) -> Self {
        Self { gnss, rssi }
    }

    /// Thresholds sized to absorb integration error only: `factor × estimate`,
    /// floored at roundoff level relative to the signal magnitude.
    pub fn from_error_estimate(gnss_err: T, rssi_err: T, signal_scale: T) -> Self {
        let eps = if std::mem::size_of::<T>() == 4 { 1e-5 } else { 1e-11 };
        let floor = T::lit(eps) * (T::one() + signal_scale);
        let f = T::lit(TOLERANCE_FACTOR);
        Self { gnss: (f * gnss_err).max(floor), rssi: (f * rssi_err).max(floor) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport<T> {
    pub detected: bool,
    pub first_violation_time: Option<f64>,
    pub max_gnss_residual: T,
    pub max_rssi_residual: T,
    pub tolerances: Tolerances<T>,
}

/// Compares the attacked and nominal measurement streams sample by sample.
///
/// The nominal stream carries no spoofing. `spoof[k]` is the GNSS offset at
/// state sample `k`. Only sampled instants are inspected.
pub fn detect<T: Scalar>(
    nominal: &DiTrajectory<T>,
    attacked: &DiTrajectory<T>,
    spoof: &[Vec2<T>],
    tol: Tolerances<T>,
) -> Result<DetectionReport<T>> {
    nominal.check_same_grid(attacked)?;
    if spoof.len() != attacked.states.len() {
        return Err(Error::GridMismatch(format!("{} spoof samples for {} states", spoof.len(), attacked.states.len())));
    }
    let mut first = None;
    let mut max_g = T::zero();
    let mut max_r = T::zero();
    for (k, ((xn, xa), s)) in nominal.states.iter().zip(&attacked.states).zip(spoof).enumerate() {
        let yn = measure(xn.p, Vec2::zero());
        let ya = measure(xa.p, *s);
        let rg = (ya.y_gnss - yn.y_gnss).norm();
        let rr = (ya.y_rssi - yn.y_rssi).abs();
        if !(rg.is_finite() && rr.is_finite()) {
            return Err(Error::NonFinite("measurement residual"));
        }
        max_g = max_g.max(rg);
        max_r = max_r.max(rr);
        if first.is_none() && (rg > tol.gnss || rr > tol.rssi) {
            first = Some(nominal.time(k));
        }
    }
    Ok(DetectionReport {
        detected: first.is_some(),
        first_violation_time: first,
        max_gnss_residual: max_g,
        max_rssi_residual: max_r,
        tolerances: tol,
    })
}

/// The spoof that cancels any position difference from the GNSS channel.
pub fn cancelling_spoof<T: Scalar>(nominal: &DiTrajectory<T>, attacked: &DiTrajectory<T>) -> Vec<Vec2<T>> {
    nominal.states.iter().zip(&attacked.states).map(|(n, a)| n.p - a.p).collect()
}
