//! Single-shooting Newton solver for square boundary-value residuals.
//!
//! A [`ShootingProblem`] maps a vector of unknown initial data to a residual
//! of the same dimension (it performs its own rollout). [`solve`] runs a
//! damped Newton iteration from every seed: forward-difference Jacobian,
//! LU with partial pivoting, a Levenberg–Marquardt step when the Jacobian is
//! singular or the Newton direction fails to descend, and step halving on
//! the scaled residual norm.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub trait ShootingProblem<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    /// Boundary mismatch for the given unknowns; must have length `dim()`.
    fn residual(&self, z: &[T]) -> Result<Vec<T>>;

    /// Typical magnitude of each unknown; sets the finite-difference step floor.
    fn scale(&self) -> Vec<T> {
        vec![T::one(); self.dim()]
    }

    /// Divisors applied to residual components before taking the norm.
    fn residual_scale(&self) -> Vec<T> {
        vec![T::one(); self.dim()]
    }

    /// Ranking among converged seeds, lower is better. `None` ranks by residual.
    fn objective(&self, _z: &[T]) -> Option<T> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub tol: T,
    pub max_newton: usize,
    pub fd_eps: T,
    pub max_backtracks: usize,
    pub seeds: Vec<Vec<T>>,
    /// Evaluate seeds and Jacobian columns on the rayon pool.
    pub parallel: bool,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn with_seeds(seeds: Vec<Vec<T>>) -> Self {
        Self { tol: T::lit(1e-10), max_newton: 50, fd_eps: T::epsilon().sqrt(), max_backtracks: 20, seeds, parallel: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) || !(self.fd_eps > T::zero()) {
            return Err(Error::InvalidArgument("tol and fd_eps must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// Outcome of the Newton iteration from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun<T> {
    pub seed_index: usize,
    pub unknowns: Vec<T>,
    pub residual_norm: T,
    pub converged: bool,
    /// Scaled residual norm before the first and after every accepted step.
    pub log: Vec<T>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome<T> {
    pub unknowns: Vec<T>,
    pub residual_norm: T,
    pub converged: bool,
    pub iterations: usize,
    pub seed_index: usize,
    pub runs: Vec<SeedRun<T>>,
}

impl<T: Scalar> SolveOutcome<T> {
    pub fn best_run(&self) -> &SeedRun<T> {
        self.runs.iter().find(|r| r.seed_index == self.seed_index).expect("best run is one of the runs")
    }
}

fn scaled_norm<T: Scalar>(r: &[T], s: &[T]) -> T {
    r.iter().zip(s).map(|(a, b)| (*a / *b).sq()).sum::<T>().sqrt()
}

/// Forward-difference Jacobian, `J[i][j] = ∂r_i/∂z_j`, stored row-major.
pub fn fd_jacobian<T: Scalar, P: ShootingProblem<T> + ?Sized>(
    problem: &P,
    z: &[T],
    r0: &[T],
    fd_eps: T,
    parallel: bool,
) -> Result<Vec<Vec<T>>> {
    let n = z.len();
    let scale = problem.scale();
    let column = |j: usize| -> Result<Vec<T>> {
        let h = fd_eps * z[j].abs().max(scale[j]);
        let mut zp = z.to_vec();
        zp[j] = z[j] + h;
        let h = zp[j] - z[j];
        let rp = problem.residual(&zp)?;
        Ok(rp.iter().zip(r0).map(|(a, b)| (*a - *b) / h).collect())
    };
    let cols: Vec<Vec<T>> =
        if parallel { (0..n).into_par_iter().map(column).collect::<Result<_>>()? } else { (0..n).map(column).collect::<Result<_>>()? };
    Ok((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot is negligible relative to the matrix magnitude.
pub fn lu_solve<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut m: Vec<Vec<T>> = a.to_vec();
    let mut x = b.to_vec();
    let amax = m.iter().flatten().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if !(amax > T::zero()) || !amax.is_finite() {
        return None;
    }
    let tiny = amax * T::epsilon() * T::lit(64.0);
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())?;
        if m[piv][c].abs() <= tiny {
            return None;
        }
        m.swap(c, piv);
        x.swap(c, piv);
        let (top, below) = m.split_at_mut(c + 1);
        let pivot = &top[c];
        for (i, row) in below.iter_mut().enumerate() {
            let f = row[c] / pivot[c];
            if f != T::zero() {
                for (a, b) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *a = *a - f * *b;
                }
                x[c + 1 + i] = x[c + 1 + i] - f * x[c];
            }
        }
    }
    for c in (0..n).rev() {
        let mut s = x[c];
        for k in c + 1..n {
            s = s - m[c][k] * x[k];
        }
        x[c] = s / m[c][c];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Levenberg–Marquardt direction `(JᵀJ + μI) d = −Jᵀr`.
fn lm_direction<T: Scalar>(jac: &[Vec<T>], r: &[T], mu: T) -> Option<Vec<T>> {
    let n = r.len();
    let mut a = vec![vec![T::zero(); n]; n];
    let mut g = vec![T::zero(); n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = (0..n).map(|k| jac[k][i] * jac[k][j]).sum();
        }
        a[i][i] = a[i][i] + mu;
        g[i] = -(0..n).map(|k| jac[k][i] * r[k]).sum::<T>();
    }
    lu_solve(&a, &g)
}

/// Damped Newton from a single seed.
pub fn newton<T: Scalar, P: ShootingProblem<T> + ?Sized>(problem: &P, seed_index: usize, z0: &[T], cfg: &SolverConfig<T>) -> SeedRun<T> {
    let rs = problem.residual_scale();
    let mut z = z0.to_vec();
    let mut log = Vec::new();
    let fail = |z: Vec<T>, norm: T, log: Vec<T>, why: String| {
        log::debug!("seed {seed_index}: {why}");
        SeedRun { seed_index, unknowns: z, residual_norm: norm, converged: false, log, failure: Some(why) }
    };
    let mut r = match problem.residual(&z) {
        Ok(r) if r.iter().all(|v| v.is_finite()) => r,
        Ok(_) => return fail(z, T::infinity(), log, "non-finite residual at seed".into()),
        Err(e) => return fail(z, T::infinity(), log, format!("rollout failed at seed: {e}")),
    };
    let mut norm = scaled_norm(&r, &rs);
    log.push(norm);
    for _ in 0..cfg.max_newton {
        if norm <= cfg.tol {
            break;
        }
        let jac = match fd_jacobian(problem, &z, &r, cfg.fd_eps, cfg.parallel) {
            Ok(j) => j,
            Err(e) => return fail(z, norm, log, format!("Jacobian rollout failed: {e}")),
        };
        let neg_r: Vec<T> = r.iter().map(|v| -*v).collect();
        let jtj_max = (0..r.len()).map(|i| (0..r.len()).map(|k| jac[k][i].sq()).sum::<T>()).fold(T::zero(), T::max);
        let mut candidates: Vec<Vec<T>> = Vec::new();
        if let Some(d) = lu_solve(&jac, &neg_r) {
            candidates.push(d);
        }
        for mu in [1e-10, 1e-6, 1e-3, 1.0] {
            if let Some(d) = lm_direction(&jac, &r, T::lit(mu) * jtj_max.max(T::min_positive_value())) {
                candidates.push(d);
            }
        }
        let mut accepted = None;
        'dirs: for d in &candidates {
            let mut alpha = T::one();
            for _ in 0..=cfg.max_backtracks {
                let zt: Vec<T> = z.iter().zip(d).map(|(a, b)| *a + alpha * *b).collect();
                if let Ok(rt) = problem.residual(&zt) {
                    if rt.iter().all(|v| v.is_finite()) {
                        let nt = scaled_norm(&rt, &rs);
                        if nt < norm {
                            accepted = Some((zt, rt, nt));
                            break 'dirs;
                        }
                    }
                }
                alpha = alpha * T::lit(0.5);
            }
        }
        match accepted {
            Some((zt, rt, nt)) => {
                z = zt;
                r = rt;
                norm = nt;
                log.push(norm);
            }
            None => return fail(z, norm, log, "no descent direction".into()),
        }
    }
    let converged = norm <= cfg.tol;
    let failure = (!converged).then(|| format!("no convergence after {} Newton steps", cfg.max_newton));
    SeedRun { seed_index, unknowns: z, residual_norm: norm, converged, log, failure }
}

/// Runs Newton from every seed and picks the converged run with the best
/// objective, or the lowest-residual run if none converged.
pub fn solve<T: Scalar, P: ShootingProblem<T> + ?Sized>(problem: &P, cfg: &SolverConfig<T>) -> Result<SolveOutcome<T>> {
    cfg.validate()?;
    let n = problem.dim();
    if let Some(bad) = cfg.seeds.iter().find(|s| s.len() != n) {
        return Err(Error::InvalidArgument(format!("seed of length {} for {n} unknowns", bad.len())));
    }
    let runs: Vec<SeedRun<T>> = if cfg.parallel {
        cfg.seeds.par_iter().enumerate().map(|(i, s)| newton(problem, i, s, cfg)).collect()
    } else {
        cfg.seeds.iter().enumerate().map(|(i, s)| newton(problem, i, s, cfg)).collect()
    };
    let best = pick_best(problem, &runs).ok_or_else(|| Error::Solver("every seed failed before its first residual".into()))?;
    let b = &runs[best];
    Ok(SolveOutcome {
        unknowns: b.unknowns.clone(),
        residual_norm: b.residual_norm,
        converged: b.converged,
        iterations: b.log.len().saturating_sub(1),
        seed_index: b.seed_index,
        runs,
    })
}

fn pick_best<T: Scalar, P: ShootingProblem<T> + ?Sized>(problem: &P, runs: &[SeedRun<T>]) -> Option<usize> {
    let key = |r: &SeedRun<T>| problem.objective(&r.unknowns).unwrap_or(r.residual_norm);
    let conv = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.converged)
        .min_by(|(_, a), (_, b)| key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal));
    if let Some((i, _)) = conv {
        return Some(i);
    }
    runs.iter()
        .enumerate()
        .filter(|(_, r)| r.residual_norm.is_finite())
        .min_by(|(_, a), (_, b)| a.residual_norm.partial_cmp(&b.residual_norm).unwrap())
        .map(|(i, _)| i)
}

/// Largest `‖r_{k+1}‖ / ‖r_k‖²` over steps that start below `threshold`.
/// `None` if the log never enters that region with a following step.
pub fn quadratic_constant<T: Scalar>(log: &[T], threshold: T) -> Option<T> {
    log.windows(2)
        .filter(|w| w[0] < threshold && w[0] > T::zero())
        .map(|w| w[1] / w[0].sq())
        .fold(None, |acc: Option<T>, c| Some(acc.map_or(c, |a| a.max(c))))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `ẋ = x` from unknown `x(0)`, target `x(1) = e·target`.
    struct Exponential {
        target: f64,
    }

    impl ShootingProblem<f64> for Exponential {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
            let n = 100;
            let dt = 1.0 / n as f64;
            let mut y = [z[0]];
            for k in 0..n {
                y = crate::ode::rk4_step(k as f64 * dt, &y, dt, |_, _, y| [y[0]]);
            }
            Ok(vec![y[0] - 1f64.exp() * self.target])
        }
    }

    #[test]
    fn linear_shooting_converges_fast() {
        let p = Exponential { target: 2.0 };
        let mut cfg = SolverConfig::with_seeds(vec![vec![0.0]]);
        cfg.tol = 1e-12;
        let out = solve(&p, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 2, "{:?}", out.runs[0].log);
        assert!((out.unknowns[0] - 2.0).abs() < 1e-8);
    }

    struct Rosen;
    impl ShootingProblem<f64> for Rosen {
        fn dim(&self) -> usize {
            2
        }
        fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![10.0 * (z[1] - z[0] * z[0]), 1.0 - z[0]])
        }
    }

    #[test]
    fn nonlinear_system_and_quadratic_tail() {
        let cfg = SolverConfig::with_seeds(vec![vec![-1.2, 1.0], vec![3.0, -2.0]]);
        let out = solve(&Rosen, &cfg).unwrap();
        assert!(out.converged);
        assert!((out.unknowns[0] - 1.0).abs() < 1e-9 && (out.unknowns[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lu_detects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(lu_solve(&a, &[1.0, 1.0]).is_none());
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(lu_solve(&a, &[3.0, 4.0]).unwrap(), vec![4.0, 3.0]);
    }

    /// Residual with a rank-deficient Jacobian at the solution set.
    struct Degenerate;
    impl ShootingProblem<f64> for Degenerate {
        fn dim(&self) -> usize {
            2
        }
        fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
            let s = z[0] + z[1] - 1.0;
            Ok(vec![s, 2.0 * s])
        }
    }

    #[test]
    fn singular_jacobian_falls_back_to_levenberg() {
        let out = solve(&Degenerate, &SolverConfig::with_seeds(vec![vec![0.0, 0.0]])).unwrap();
        assert!(out.converged, "{:?}", out.runs);
    }

    #[test]
    fn empty_seed_list_rejected() {
        assert!(solve(&Rosen, &SolverConfig::with_seeds(vec![])).is_err());
    }

    #[test]
    fn jacobian_step_halving_agrees() {
        let z = [0.3, -0.7];
        let r0 = Rosen.residual(&z).unwrap();
        let j1 = fd_jacobian(&Rosen, &z, &r0, 1e-6, false).unwrap();
        let j2 = fd_jacobian(&Rosen, &z, &r0, 5e-7, false).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((j1[i][j] - j2[i][j]).abs() < 1e-4);
            }
        }
    }
}
