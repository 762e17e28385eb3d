//! Damped Newton iteration for small systems, with an optional bracketed
//! bisection fallback in one dimension.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use super::linalg::{lu_solve, LinalgError};

/// Configuration for Newton solves. `bracket` is only consulted by the 1-D
/// path, where bisection on a sign change backs up stalled iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub abs_tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub bracket: Option<(f64, f64)>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            abs_tolerance: 1e-12,
            max_iterations: 50,
            max_halvings: 20,
            bracket: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NewtonError {
    #[error("no convergence after {iterations} iterations (best residual norm {best_norm:e})")]
    ConvergenceFailure { iterations: usize, best_norm: f64 },
    #[error("Jacobian is numerically singular (condition estimate {cond:e})")]
    SingularJacobian { cond: f64 },
    #[error("residual undefined during line search: {detail}")]
    DomainExit { detail: String },
    #[error("no sign change over bracket [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
}

const COND_LIMIT: f64 = 1e14;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)))
}

/// Solve `residual(z) = 0` from `initial`. The Jacobian is exact when
/// supplied and finite-difference otherwise. Steps that leave the residual's
/// domain or fail to decrease its norm are halved, up to
/// `cfg.max_halvings` times.
///
/// Convergence requires both a small residual and a small accepted step, so
/// that rootless flat tails (e.g. `exp(z)`) are reported as failures instead
/// of spurious roots.
pub fn newton_solve<R, J>(
    residual: R,
    jacobian: Option<J>,
    initial: &[f64],
    cfg: &NewtonConfig,
) -> Result<NewtonResult, NewtonError>
where
    R: Fn(&[f64]) -> Result<Vec<f64>, String>,
    J: Fn(&[f64]) -> Result<Vec<Vec<f64>>, String>,
{
    let n = initial.len();
    let mut z = initial.to_vec();
    let mut r = residual(&z).map_err(|detail| NewtonError::DomainExit { detail })?;
    let mut r_norm = norm_inf(&r);
    if r_norm <= cfg.abs_tolerance {
        return Ok(NewtonResult { solution: z, iterations: 0 });
    }
    let mut best_norm = r_norm;

    for iteration in 1..=cfg.max_iterations {
        let jac = match &jacobian {
            Some(j) => j(&z).map_err(|detail| NewtonError::DomainExit { detail })?,
            None => fd_jacobian(&residual, &z, &r)?,
        };
        let (step, cond) = match lu_solve(&jac, &r) {
            Ok(pair) => pair,
            Err(LinalgError::Singular) => {
                return Err(NewtonError::SingularJacobian { cond: f64::INFINITY })
            }
            Err(LinalgError::Shape(detail)) => return Err(NewtonError::DomainExit { detail }),
        };
        if cond > COND_LIMIT {
            return Err(NewtonError::SingularJacobian { cond });
        }

        let mut lambda = 1.0;
        let mut accepted = None;
        let mut domain_only = true;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = (0..n).map(|i| z[i] - lambda * step[i]).collect();
            match residual(&trial) {
                Ok(r_new) => {
                    domain_only = false;
                    let norm_new = norm_inf(&r_new);
                    if norm_new < r_norm || norm_new <= cfg.abs_tolerance {
                        accepted = Some((trial, r_new, norm_new, lambda));
                        break;
                    }
                }
                Err(_) => {}
            }
            lambda *= 0.5;
        }
        let (z_new, r_new, norm_new, lambda) = match accepted {
            Some(a) => a,
            None => {
                if domain_only {
                    return Err(NewtonError::DomainExit {
                        detail: format!("every damped step left the domain (iteration {iteration})"),
                    });
                }
                return Err(NewtonError::ConvergenceFailure { iterations: iteration, best_norm });
            }
        };
        z = z_new;
        r = r_new;
        r_norm = norm_new;
        best_norm = best_norm.min(r_norm);

        let step_norm = lambda * norm_inf(&step);
        let step_small = step_norm <= libm::sqrt(cfg.abs_tolerance) * (1.0 + norm_inf(&z));
        if r_norm <= cfg.abs_tolerance && (step_small || r_norm == 0.0) {
            return Ok(NewtonResult { solution: z, iterations: iteration });
        }
    }
    Err(NewtonError::ConvergenceFailure { iterations: cfg.max_iterations, best_norm })
}

fn fd_jacobian<R>(residual: &R, z: &[f64], r0: &[f64]) -> Result<Vec<Vec<f64>>, NewtonError>
where
    R: Fn(&[f64]) -> Result<Vec<f64>, String>,
{
    let n = z.len();
    let m = r0.len();
    let mut jac = vec![vec![0.0; n]; m];
    for j in 0..n {
        let h = 1e-7 * (1.0 + libm::fabs(z[j]));
        let mut zp = z.to_vec();
        zp[j] += h;
        let mut zm = z.to_vec();
        zm[j] -= h;
        match (residual(&zp), residual(&zm)) {
            (Ok(rp), Ok(rm)) => {
                for i in 0..m {
                    jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            // Fall back to one-sided differences at domain boundaries.
            (Ok(rp), Err(_)) => {
                for i in 0..m {
                    jac[i][j] = (rp[i] - r0[i]) / h;
                }
            }
            (Err(_), Ok(rm)) => {
                for i in 0..m {
                    jac[i][j] = (r0[i] - rm[i]) / h;
                }
            }
            (Err(e), Err(_)) => return Err(NewtonError::DomainExit { detail: e }),
        }
    }
    Ok(jac)
}

/// Scalar Newton with optional exact derivative. When `cfg.bracket` holds a
/// sign change the iterate is kept inside it and bisection replaces steps
/// that stall or escape.
pub fn newton_solve_1d<F, D>(
    f: F,
    df: Option<D>,
    x0: f64,
    cfg: &NewtonConfig,
) -> Result<NewtonResult, NewtonError>
where
    F: Fn(f64) -> Result<f64, String>,
    D: Fn(f64) -> Result<f64, String>,
{
    let eval = |x: f64| f(x).map_err(|detail| NewtonError::DomainExit { detail });
    let mut x = x0;
    let mut fx = eval(x)?;
    if libm::fabs(fx) <= cfg.abs_tolerance {
        return Ok(NewtonResult { solution: vec![x], iterations: 0 });
    }

    // Maintain a shrinking sign-change bracket when one was supplied.
    let mut bracket = match cfg.bracket {
        Some((lo, hi)) => {
            let flo = eval(lo)?;
            let fhi = eval(hi)?;
            if flo == 0.0 {
                return Ok(NewtonResult { solution: vec![lo], iterations: 0 });
            }
            if fhi == 0.0 {
                return Ok(NewtonResult { solution: vec![hi], iterations: 0 });
            }
            if flo * fhi > 0.0 {
                return Err(NewtonError::BracketFailure { lo, hi });
            }
            if x < lo.min(hi) || x > lo.max(hi) {
                x = 0.5 * (lo + hi);
                fx = eval(x)?;
            }
            Some((lo, flo, hi, fhi))
        }
        None => None,
    };
    let mut best_norm = libm::fabs(fx);

    for iteration in 1..=cfg.max_iterations {
        if let Some((lo, flo, hi, _fhi)) = &mut bracket {
            // Keep the invariant: sign change between lo and hi.
            if fx * *flo > 0.0 {
                *lo = x;
                *flo = fx;
            } else {
                *hi = x;
            }
        }
        let d = match &df {
            Some(df) => df(x).map_err(|detail| NewtonError::DomainExit { detail })?,
            None => {
                let h = 1e-7 * (1.0 + libm::fabs(x));
                (f(x + h).map_err(|detail| NewtonError::DomainExit { detail })?
                    - f(x - h).map_err(|detail| NewtonError::DomainExit { detail })?)
                    / (2.0 * h)
            }
        };

        let mut candidate = if d != 0.0 { x - fx / d } else { f64::NAN };
        if let Some((lo, _flo, hi, _fhi)) = bracket {
            let (a, b) = (lo.min(hi), lo.max(hi));
            if !candidate.is_finite() || candidate <= a || candidate >= b {
                candidate = 0.5 * (lo + hi);
            }
        } else if !candidate.is_finite() {
            return Err(NewtonError::SingularJacobian { cond: f64::INFINITY });
        }

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial = x + lambda * (candidate - x);
            match f(trial) {
                Ok(ft) => {
                    if libm::fabs(ft) < libm::fabs(fx) || bracket.is_some() {
                        accepted = Some((trial, ft, lambda));
                        break;
                    }
                }
                Err(_) => {}
            }
            lambda *= 0.5;
        }
        let (x_new, f_new, lambda) = accepted.ok_or(NewtonError::ConvergenceFailure {
            iterations: iteration,
            best_norm,
        })?;
        let step = libm::fabs(lambda * (candidate - x));
        x = x_new;
        fx = f_new;
        best_norm = best_norm.min(libm::fabs(fx));
        if libm::fabs(fx) <= cfg.abs_tolerance
            && step <= libm::sqrt(cfg.abs_tolerance) * (1.0 + libm::fabs(x))
        {
            return Ok(NewtonResult { solution: vec![x], iterations: iteration });
        }
    }
    Err(NewtonError::ConvergenceFailure { iterations: cfg.max_iterations, best_norm })
}

/// Root of `f` inside `[lo, hi]` (sign change required), starting from the
/// midpoint. Newton steps with bisection fallback.
pub fn bracketed_root<F>(f: F, lo: f64, hi: f64, cfg: &NewtonConfig) -> Result<f64, NewtonError>
where
    F: Fn(f64) -> Result<f64, String>,
{
    let cfg = NewtonConfig { bracket: Some((lo, hi)), ..cfg.clone() };
    let result = newton_solve_1d(
        &f,
        None::<fn(f64) -> Result<f64, String>>,
        0.5 * (lo + hi),
        &cfg,
    )?;
    Ok(result.solution[0])
}
