//! Fixed-step classical Runge–Kutta on small dense state vectors.

use crate::scalar::Scalar;

#[inline]
fn axpy<T: Scalar, const N: usize>(y: &[T; N], h: T, k: &[T; N]) -> [T; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + h * k[i];
    }
    out
}

/// One RK4 step of `y' = f(t, y)`.
///
/// `f` is told which stage it is evaluating (0..4) besides the stage time, so
/// callers holding piecewise-constant inputs can pick the sample for the
/// current interval without relying on floating-point time comparisons.
pub fn rk4_step<T, const N: usize, F>(t: T, y: &[T; N], dt: T, mut f: F) -> [T; N]
where
    T: Scalar,
    F: FnMut(usize, T, &[T; N]) -> [T; N],
{
    let half = dt * T::lit(0.5);
    let k1 = f(0, t, y);
    let k2 = f(1, t + half, &axpy(y, half, &k1));
    let k3 = f(2, t + half, &axpy(y, half, &k2));
    let k4 = f(3, t + dt, &axpy(y, dt, &k3));
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
    }
    out
}

/// Fallible variant: the first error returned by `f` aborts the step.
pub fn try_rk4_step<T, const N: usize, F, E>(t: T, y: &[T; N], dt: T, mut f: F) -> Result<[T; N], E>
where
    T: Scalar,
    F: FnMut(usize, T, &[T; N]) -> Result<[T; N], E>,
{
    let half = dt * T::lit(0.5);
    let k1 = f(0, t, y)?;
    let k2 = f(1, t + half, &axpy(y, half, &k1))?;
    let k3 = f(2, t + half, &axpy(y, half, &k2))?;
    let k4 = f(3, t + dt, &axpy(y, dt, &k3))?;
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
    }
    Ok(out)
}

/// Stage index to the fraction of the step at which it is evaluated.
pub(crate) fn stage_fraction(stage: usize) -> f64 {
    match stage {
        0 => 0.0,
        1 | 2 => 0.5,
        _ => 1.0,
    }
}
