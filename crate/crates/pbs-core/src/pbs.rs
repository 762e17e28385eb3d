//! Primary branch solutions from seeds via implicit finite transformations.
//!
//! Given a seed solution `U` and an arbitrary function `g` of the invariant
//! ratios `η_β = U_β/U_0`, the transformed solution is
//! `u'(p) = U(p')` where the primed coordinates solve
//!
//! ```text
//! x0' = x0 - g(η) + Σ_β η_β·g_{η_β}(η)
//! xα' = xα - g_{η_α}(η)          η evaluated at the primed point
//! ```
//!
//! The system is a deformation of the identity in `g`, so Newton starts at
//! the unprimed point; on failure a homotopy in `λ·g` retries from the
//! previous `λ` solution. Grid generation masks cells whose solve leaves the
//! domain instead of failing: implicit solutions have natural boundaries.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::branch::{BackgroundSolution, Branch1D, BranchError, BranchND};
use crate::expr::{simplify, Bindings, EvalError, Expr, JetError};
use crate::numeric::{
    bracketed_root, determinant, newton_solve, singular_values, FdError, GridField, GridSpec,
    NewtonConfig, NewtonError, Residual,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PbsError {
    #[error("primed-coordinate solve failed: {0}")]
    Newton(#[from] NewtonError),
    #[error("U_0 vanishes near the primed point; the invariant ratios are undefined")]
    U0Zero,
    #[error("caustic: |δ| = {delta:e} below 1e-10 of its scale {scale:e}")]
    Caustic { delta: f64, scale: f64 },
    #[error("g must be an expression in (eta_1..eta_{n}), found `{var}`")]
    EtaVariable { var: String, n: usize },
    #[error("the Jacobian identity is specific to the 1+1 case (spatial dimension 1, got {n})")]
    NotOnePlusOne { n: usize },
    #[error("every sample point was outside the seed's domain")]
    AllSamplesOutOfDomain,
    #[error("Y is not strictly monotone on [{lo}, {hi}]: Y' changes sign")]
    YNotMonotone { lo: f64, hi: f64 },
    #[error("value {value} outside the range of Y on the declared interval")]
    YInverseDomain { value: f64 },
    #[error("no root bracket for the implicit coordinate over [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Branch(#[from] BranchError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Fd(#[from] FdError),
}

impl PbsError {
    /// Short mask-reason code for grid cells.
    pub fn reason_code(&self) -> &'static str {
        match self {
            PbsError::Newton(NewtonError::SingularJacobian { .. }) => "singular_jacobian",
            PbsError::Newton(NewtonError::DomainExit { .. }) => "domain_exit",
            PbsError::Newton(_) => "newton_failure",
            PbsError::U0Zero => "u0_zero",
            PbsError::Caustic { .. } => "caustic",
            PbsError::Eval(_) => "domain",
            PbsError::YInverseDomain { .. } => "y_inverse_domain",
            PbsError::NoBracket { .. } => "no_bracket",
            _ => "error",
        }
    }
}

const U0_TINY: f64 = 1e-13;

/// Seed solution plus transform function `g(η_1..η_n)` with cached first and
/// second partials, and the Newton configuration for the implicit solves.
#[derive(Debug, Clone)]
pub struct TransformSpec {
    seed: BackgroundSolution,
    g: Expr,
    g_grad: Vec<Expr>,
    g_hess: Vec<Vec<Expr>>,
    newton: NewtonConfig,
    n: usize,
}

fn eta_name(beta: usize) -> String {
    format!("eta_{beta}")
}

impl TransformSpec {
    /// `g` is an expression in `eta_1..eta_n`; for a 1+1 seed the bare name
    /// `eta` is accepted as an alias of `eta_1`.
    pub fn new(
        seed: BackgroundSolution,
        g: Expr,
        newton: NewtonConfig,
    ) -> Result<Self, PbsError> {
        let n = seed.convention().spatial_dim();
        let g = if n == 1 {
            g.substitute_var("eta", &Expr::var(&eta_name(1)))
        } else {
            g
        };
        let allowed: Vec<String> = (1..=n).map(eta_name).collect();
        for var in g.variables() {
            if !allowed.contains(&var) {
                return Err(PbsError::EtaVariable { var, n });
            }
        }
        let g = simplify(&g);
        let g_grad: Vec<Expr> = allowed.iter().map(|v| g.differentiate(v)).collect();
        let g_hess: Vec<Vec<Expr>> = g_grad
            .iter()
            .map(|gb| allowed.iter().map(|v| gb.differentiate(v)).collect())
            .collect();
        Ok(TransformSpec { seed, g, g_grad, g_hess, newton, n })
    }

    pub fn seed(&self) -> &BackgroundSolution {
        &self.seed
    }

    pub fn g(&self) -> &Expr {
        &self.g
    }

    pub fn spatial_dim(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> usize {
        self.n + 1
    }

    fn coord_bindings(&self, z: &[f64]) -> Bindings {
        let conv = self.seed.convention();
        let mut b = Bindings::new();
        for (axis, value) in z.iter().enumerate() {
            b.set(&conv.coord_name(axis), *value);
        }
        b
    }

    fn unit_multi(&self, j: usize) -> Vec<usize> {
        let mut m = vec![0usize; self.axes()];
        m[j] += 1;
        m
    }

    fn pair_multi(&self, j: usize, k: usize) -> Vec<usize> {
        let mut m = vec![0usize; self.axes()];
        m[j] += 1;
        m[k] += 1;
        m
    }

    fn seed_derivative(&self, multi: &[usize], b: &Bindings) -> Result<f64, String> {
        self.seed
            .derivative(multi)
            .expect("derivative table covers first and second order")
            .evaluate(b)
            .map_err(|e| e.to_string())
    }

    /// First derivatives `U_j` at a point, failing softly for line search.
    fn gradient(&self, b: &Bindings) -> Result<Vec<f64>, String> {
        (0..self.axes())
            .map(|j| self.seed_derivative(&self.unit_multi(j), b))
            .collect()
    }

    fn eta_of_gradient(grad: &[f64]) -> Result<Vec<f64>, String> {
        let u0 = grad[0];
        let magnitude = grad.iter().fold(0.0f64, |m, g| m.max(libm::fabs(*g)));
        if libm::fabs(u0) <= U0_TINY * (1.0 + magnitude) {
            return Err(String::from("u0_zero"));
        }
        Ok(grad[1..].iter().map(|g| g / u0).collect())
    }

    fn eta_bindings(eta: &[f64]) -> Bindings {
        let mut b = Bindings::new();
        for (beta, value) in eta.iter().enumerate() {
            b.set(&eta_name(beta + 1), *value);
        }
        b
    }

    /// Residual of the implicit primed-coordinate system, scaled by the
    /// homotopy parameter `lambda`.
    fn system_residual(&self, z: &[f64], p: &[f64], lambda: f64) -> Result<Vec<f64>, String> {
        let b = self.coord_bindings(z);
        let grad = self.gradient(&b)?;
        let eta = Self::eta_of_gradient(&grad)?;
        let eb = Self::eta_bindings(&eta);
        let g_val = self.g.evaluate(&eb).map_err(|e| e.to_string())?;
        let mut r = vec![0.0; self.axes()];
        let mut time_shift = g_val;
        for beta in 0..self.n {
            let gb = self.g_grad[beta].evaluate(&eb).map_err(|e| e.to_string())?;
            time_shift -= eta[beta] * gb;
            r[beta + 1] = z[beta + 1] - p[beta + 1] + lambda * gb;
        }
        r[0] = z[0] - p[0] + lambda * time_shift;
        Ok(r)
    }

    fn system_jacobian(&self, z: &[f64], lambda: f64) -> Result<Vec<Vec<f64>>, String> {
        let axes = self.axes();
        let b = self.coord_bindings(z);
        let grad = self.gradient(&b)?;
        let eta = Self::eta_of_gradient(&grad)?;
        let eb = Self::eta_bindings(&eta);
        let u0 = grad[0];

        // ∂η_γ/∂z_j = (U_{γj}·U_0 - U_γ·U_{0j})/U_0²
        let mut deta = vec![vec![0.0; axes]; self.n];
        for gamma in 0..self.n {
            for j in 0..axes {
                let u_gj = self.seed_derivative(&self.pair_multi(gamma + 1, j), &b)?;
                let u_0j = self.seed_derivative(&self.pair_multi(0, j), &b)?;
                deta[gamma][j] = (u_gj * u0 - grad[gamma + 1] * u_0j) / (u0 * u0);
            }
        }
        let mut hess = vec![vec![0.0; self.n]; self.n];
        for beta in 0..self.n {
            for gamma in 0..self.n {
                hess[beta][gamma] =
                    self.g_hess[beta][gamma].evaluate(&eb).map_err(|e| e.to_string())?;
            }
        }

        let mut jac = vec![vec![0.0; axes]; axes];
        for j in 0..axes {
            let mut acc = 0.0;
            for beta in 0..self.n {
                for gamma in 0..self.n {
                    acc += eta[beta] * hess[beta][gamma] * deta[gamma][j];
                }
            }
            jac[0][j] = if j == 0 { 1.0 } else { 0.0 } - lambda * acc;
            for alpha in 0..self.n {
                let mut sum = 0.0;
                for gamma in 0..self.n {
                    sum += hess[alpha][gamma] * deta[gamma][j];
                }
                jac[alpha + 1][j] =
                    if alpha + 1 == j { 1.0 } else { 0.0 } + lambda * sum;
            }
        }
        Ok(jac)
    }
}

/// Solved primed coordinates with the invariant ratios at the solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimedCoords {
    pub primed: Vec<f64>,
    pub eta: Vec<f64>,
    pub iterations: usize,
}

/// Closed-form Jacobian data of the 1+1 transform at a solved point
/// (`Δ = U_0³/δ` with `δ, δ1, δ2` from the implicit-function solve).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    pub primed: Vec<f64>,
    pub eta: f64,
    pub delta: f64,
    pub small_delta: f64,
    pub delta1: f64,
    pub delta2: f64,
}

/// Solve the implicit system for the primed coordinates at base point `p`.
/// Newton starts from the identity; on failure the homotopy `λ·g` for
/// `λ ∈ {¼, ½, ¾, 1}` retries from the previous solution.
pub fn solve_primed_coords(ts: &TransformSpec, p: &[f64]) -> Result<PrimedCoords, PbsError> {
    assert_eq!(p.len(), ts.axes(), "base point must bind every coordinate");
    let attempt = |lambda: f64, guess: &[f64], iterations: &mut usize| {
        let res = newton_solve(
            |z| ts.system_residual(z, p, lambda),
            Some(|z: &[f64]| ts.system_jacobian(z, lambda)),
            guess,
            &ts.newton,
        )?;
        *iterations += res.iterations;
        Ok::<Vec<f64>, NewtonError>(res.solution)
    };

    let mut iterations = 0;
    let solution = match attempt(1.0, p, &mut iterations) {
        Ok(z) => z,
        Err(_) => {
            let mut guess = p.to_vec();
            let mut last = Err(NewtonError::ConvergenceFailure {
                iterations: 0,
                best_norm: f64::INFINITY,
            });
            for lambda in [0.25, 0.5, 0.75, 1.0] {
                last = attempt(lambda, &guess, &mut iterations);
                match &last {
                    Ok(z) => guess = z.clone(),
                    Err(_) => break,
                }
            }
            last.map_err(|e| match &e {
                NewtonError::DomainExit { detail } if detail.contains("u0_zero") => {
                    PbsError::U0Zero
                }
                _ => PbsError::Newton(e),
            })?
        }
    };

    let b = ts.coord_bindings(&solution);
    let grad = ts.gradient(&b).map_err(|detail| {
        if detail.contains("u0_zero") {
            PbsError::U0Zero
        } else {
            PbsError::Newton(NewtonError::DomainExit { detail })
        }
    })?;
    let eta = TransformSpec::eta_of_gradient(&grad).map_err(|_| PbsError::U0Zero)?;
    Ok(PrimedCoords { primed: solution, eta, iterations })
}

/// `u'(p) = U(p')`.
pub fn evaluate_pbs(ts: &TransformSpec, p: &[f64]) -> Result<f64, PbsError> {
    let coords = solve_primed_coords(ts, p)?;
    Ok(ts
        .seed
        .expr()
        .evaluate(&ts.coord_bindings(&coords.primed))?)
}

fn jacobian_report_at(ts: &TransformSpec, primed: &[f64]) -> Result<JacobianReport, PbsError> {
    if ts.n != 1 {
        return Err(PbsError::NotOnePlusOne { n: ts.n });
    }
    let b = ts.coord_bindings(primed);
    let at = |multi: &[usize]| -> Result<f64, PbsError> {
        Ok(ts
            .seed
            .derivative(multi)
            .expect("second-order table")
            .evaluate(&b)?)
    };
    let u0 = at(&[1, 0])?;
    let u1 = at(&[0, 1])?;
    let u00 = at(&[2, 0])?;
    let u10 = at(&[1, 1])?;
    let u11 = at(&[0, 2])?;
    if libm::fabs(u0) <= U0_TINY * (1.0 + libm::fabs(u1)) {
        return Err(PbsError::U0Zero);
    }
    let eta = u1 / u0;
    let g_hh = ts.g_hess[0][0]
        .evaluate(&TransformSpec::eta_bindings(&[eta]))?;
    let delta1 = (u0 * u10 - u1 * u00) * u1 * g_hh;
    let delta2 = (u0 * u11 - u1 * u10) * u1 * g_hh;
    let curvature = (u0 * u0 * u11 + u00 * u1 * u1 - 2.0 * u0 * u1 * u10) * g_hh;
    let small_delta = u0 * u0 * u0 + curvature;
    let scale = libm::fabs(u0 * u0 * u0).max(libm::fabs(curvature));
    if libm::fabs(small_delta) < 1e-10 * scale {
        return Err(PbsError::Caustic { delta: small_delta, scale });
    }
    Ok(JacobianReport {
        primed: primed.to_vec(),
        eta,
        delta: u0 * u0 * u0 / small_delta,
        small_delta,
        delta1,
        delta2,
    })
}

/// Solve the primed coordinates and evaluate the closed-form Jacobian data
/// there (1+1 only).
pub fn jacobian_delta(ts: &TransformSpec, p: &[f64]) -> Result<JacobianReport, PbsError> {
    let coords = solve_primed_coords(ts, p)?;
    jacobian_report_at(ts, &coords.primed)
}

/// Finite-difference determinant of the primed-coordinate map at `p`
/// (any dimension).
pub fn jacobian_fd(ts: &TransformSpec, p: &[f64], h: f64) -> Result<f64, PbsError> {
    let axes = ts.axes();
    let mut jac = vec![vec![0.0; axes]; axes];
    for j in 0..axes {
        let mut plus = p.to_vec();
        plus[j] += h;
        let mut minus = p.to_vec();
        minus[j] -= h;
        let zp = solve_primed_coords(ts, &plus)?.primed;
        let zm = solve_primed_coords(ts, &minus)?.primed;
        for i in 0..axes {
            jac[i][j] = (zp[i] - zm[i]) / (2.0 * h);
        }
    }
    Ok(determinant(&jac))
}

/// Per-axis gaps `|FD_j u'(p) - U_j(p')|`: the derivative-transport identity
/// behind the solution property, checked directly.
pub fn derivative_transport_check(
    ts: &TransformSpec,
    p: &[f64],
    h: f64,
) -> Result<Vec<f64>, PbsError> {
    let coords = solve_primed_coords(ts, p)?;
    let b = ts.coord_bindings(&coords.primed);
    let mut gaps = Vec::with_capacity(ts.axes());
    for j in 0..ts.axes() {
        let mut plus = p.to_vec();
        plus[j] += h;
        let mut minus = p.to_vec();
        minus[j] -= h;
        let fd = (evaluate_pbs(ts, &plus)? - evaluate_pbs(ts, &minus)?) / (2.0 * h);
        let exact = ts
            .seed
            .derivative(&ts.unit_multi(j))
            .expect("first-order table")
            .evaluate(&b)?;
        gaps.push(libm::fabs(fd - exact));
    }
    Ok(gaps)
}

/// Rank-deficiency threshold for the degenerate-seed test.
pub const DEGENERACY_SV_TOL: f64 = 1e-8;

/// A seed is degenerate when the invariant-ratio map `η = (U_1/U_0, …)` has
/// numeric Jacobian rank `< n` at every sample point: the transform then
/// collapses to a relabeling and generates nothing new.
pub fn detect_degenerate_seed(
    seed: &BackgroundSolution,
    samples: &[Vec<f64>],
    h: f64,
) -> Result<bool, PbsError> {
    let conv = seed.convention();
    let axes = conv.axes();
    let n = conv.spatial_dim();
    let eta_at = |z: &[f64]| -> Result<Vec<f64>, String> {
        let mut b = Bindings::new();
        for (axis, value) in z.iter().enumerate() {
            b.set(&conv.coord_name(axis), *value);
        }
        let grad: Result<Vec<f64>, String> = (0..axes)
            .map(|j| {
                let mut multi = vec![0usize; axes];
                multi[j] = 1;
                seed.derivative(&multi)
                    .expect("first-order table")
                    .evaluate(&b)
                    .map_err(|e| e.to_string())
            })
            .collect();
        TransformSpec::eta_of_gradient(&grad?)
    };

    let mut evaluated = 0usize;
    let mut degenerate_everywhere = true;
    for p in samples {
        let mut jac = vec![vec![0.0; axes]; n];
        let mut ok = true;
        'axis: for j in 0..axes {
            let mut plus = p.clone();
            plus[j] += h;
            let mut minus = p.clone();
            minus[j] -= h;
            match (eta_at(&plus), eta_at(&minus)) {
                (Ok(ep), Ok(em)) => {
                    for alpha in 0..n {
                        jac[alpha][j] = (ep[alpha] - em[alpha]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break 'axis;
                }
            }
        }
        if !ok {
            continue;
        }
        evaluated += 1;
        let sv = singular_values(&jac);
        let rank = sv.iter().filter(|s| **s > DEGENERACY_SV_TOL).count();
        if rank >= n {
            degenerate_everywhere = false;
        }
    }
    if evaluated == 0 {
        return Err(PbsError::AllSamplesOutOfDomain);
    }
    Ok(degenerate_everywhere)
}

/// The second-type implicit family built on the toy model's travelling seed:
/// an arbitrary monotone `Y` (with `S = 1/Y'`) and shift constant `a`.
#[derive(Debug, Clone)]
pub struct Type2Spec {
    y: Expr,
    y_prime: Expr,
    a: f64,
    interval: (f64, f64),
    newton: NewtonConfig,
}

/// Solved type-2 value with the implicit coordinate it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Type2Value {
    pub u: f64,
    pub xi: f64,
}

impl Type2Spec {
    /// `y` is an expression in the single variable `y`, strictly monotone on
    /// `interval` (checked by sign-sampling `Y'`).
    pub fn new(y: Expr, a: f64, interval: (f64, f64)) -> Result<Self, PbsError> {
        for var in y.variables() {
            if var != "y" {
                return Err(PbsError::EtaVariable { var, n: 0 });
            }
        }
        let y = simplify(&y);
        let y_prime = y.differentiate("y");
        let (lo, hi) = interval;
        assert!(lo < hi, "interval must be ordered");
        let mut sign = 0.0f64;
        for k in 0..=32 {
            let w = lo + (hi - lo) * k as f64 / 32.0;
            let d = y_prime.evaluate(&Bindings::new().with("y", w))?;
            if d == 0.0 || (sign != 0.0 && (d > 0.0) != (sign > 0.0)) {
                return Err(PbsError::YNotMonotone { lo, hi });
            }
            sign = d;
        }
        Ok(Type2Spec {
            y,
            y_prime,
            a,
            interval,
            newton: NewtonConfig { abs_tolerance: 1e-13, ..NewtonConfig::default() },
        })
    }

    fn y_at(&self, w: f64) -> Result<f64, PbsError> {
        Ok(self.y.evaluate(&Bindings::new().with("y", w))?)
    }

    fn y_prime_at(&self, w: f64) -> Result<f64, PbsError> {
        Ok(self.y_prime.evaluate(&Bindings::new().with("y", w))?)
    }

    fn y_inverse(&self, value: f64) -> Result<f64, PbsError> {
        let (lo, hi) = self.interval;
        let (ylo, yhi) = (self.y_at(lo)?, self.y_at(hi)?);
        let (min, max) = if ylo <= yhi { (ylo, yhi) } else { (yhi, ylo) };
        if value < min || value > max {
            return Err(PbsError::YInverseDomain { value });
        }
        let y = &self.y;
        Ok(bracketed_root(
            |w| {
                y.evaluate(&Bindings::new().with("y", w))
                    .map(|v| v - value)
                    .map_err(|e| e.to_string())
            },
            lo,
            hi,
            &self.newton,
        )?)
    }

    /// The solution factor `S(W)/S(-ξ-2t) = Y'(-ξ-2t)/Y'(W)` and `W` itself.
    fn ratio_and_w(&self, xi: f64, t: f64) -> Result<(f64, f64), PbsError> {
        let w1 = -xi - 2.0 * t;
        let w = self.y_inverse(self.a + self.y_at(w1)?)?;
        Ok((self.y_prime_at(w1)? / self.y_prime_at(w)?, w))
    }
}

/// Evaluate the type-2 implicit solution at `(x, t)`: solve the implicit
/// relation for `ξ`, then assemble `u`.
pub fn evaluate_type2_pbs(t2: &Type2Spec, x: f64, t: f64) -> Result<Type2Value, PbsError> {
    let (lo, hi) = t2.interval;
    // -ξ-2t must stay inside the monotone interval and 2(ξ+t) nonnegative.
    let margin = 1e-12;
    let xi_lo = (-2.0 * t - hi).max(-t + margin);
    let xi_hi = -2.0 * t - lo;
    if xi_lo >= xi_hi {
        return Err(PbsError::NoBracket { lo: xi_lo, hi: xi_hi });
    }
    let residual = |xi: f64| -> Result<f64, PbsError> {
        let (ratio, w) = t2.ratio_and_w(xi, t)?;
        Ok(2.0 * (xi + t) * ratio + w - x)
    };
    // Scan for a sign change over the admissible range, then refine.
    const SCAN: usize = 64;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for k in 0..=SCAN {
        let xi = xi_lo + (xi_hi - xi_lo) * k as f64 / SCAN as f64;
        match residual(xi) {
            Ok(r) => {
                if r == 0.0 {
                    bracket = Some((xi, xi));
                    break;
                }
                if let Some((pxi, pr)) = prev {
                    if pr * r < 0.0 {
                        bracket = Some((pxi, xi));
                        break;
                    }
                }
                prev = Some((xi, r));
            }
            Err(_) => {
                prev = None;
            }
        }
    }
    let Some((blo, bhi)) = bracket else {
        return Err(PbsError::NoBracket { lo: xi_lo, hi: xi_hi });
    };
    let xi = if blo == bhi {
        blo
    } else {
        bracketed_root(
            |xi| residual(xi).map_err(|e| e.to_string()),
            blo,
            bhi,
            &t2.newton,
        )?
    };
    let (ratio, _) = t2.ratio_and_w(xi, t)?;
    let u = ratio * libm::sqrt(2.0 * (xi + t));
    Ok(Type2Value { u, xi })
}

/// One evaluated transform-grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformCell {
    pub point: Vec<f64>,
    pub u: f64,
    pub primed: Vec<f64>,
    pub eta: Vec<f64>,
    /// Closed-form `Δ` in the 1+1 case, FD determinant otherwise.
    pub delta: f64,
    pub residual: Residual,
}

/// Transform evaluated over a grid: per-cell outcome, masked on failure.
#[derive(Debug, Clone)]
pub struct TransformGrid {
    pub spec: GridSpec,
    pub cells: Vec<Result<TransformCell, String>>,
}

impl TransformGrid {
    pub fn unmasked(&self) -> impl Iterator<Item = &TransformCell> {
        self.cells.iter().filter_map(|c| c.as_ref().ok())
    }

    pub fn masked_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_err()).count()
    }

    /// The generated solution as a plain masked grid field.
    pub fn field(&self) -> GridField {
        let values = self
            .cells
            .iter()
            .map(|c| c.as_ref().map(|cell| cell.u).unwrap_or(f64::NAN))
            .collect();
        let mask = self
            .cells
            .iter()
            .map(|c| c.as_ref().err().cloned())
            .collect();
        GridField { spec: self.spec.clone(), values, mask }
    }
}

/// The model a transform is verified against.
#[derive(Debug, Clone)]
pub enum Model {
    Separated(Branch1D),
    Implicit(BranchND),
}

impl Model {
    pub fn spatial_dim(&self) -> usize {
        match self {
            Model::Separated(_) => 1,
            Model::Implicit(b) => b.n(),
        }
    }

    pub fn convention(&self) -> &crate::expr::JetConvention {
        match self {
            Model::Separated(b) => b.convention(),
            Model::Implicit(b) => b.convention(),
        }
    }
}

/// Finite-difference PDE residual of the generated solution at `p`.
pub fn fd_pbs_residual(
    ts: &TransformSpec,
    model: &Model,
    p: &[f64],
    h: f64,
) -> Result<Residual, PbsError> {
    let u = evaluate_pbs(ts, p)?;
    let mut jets = Vec::with_capacity(ts.axes());
    for j in 0..ts.axes() {
        let mut plus = p.to_vec();
        plus[j] += h;
        let mut minus = p.to_vec();
        minus[j] -= h;
        jets.push((evaluate_pbs(ts, &plus)? - evaluate_pbs(ts, &minus)?) / (2.0 * h));
    }
    match model {
        Model::Separated(br) => {
            let b = Bindings::new().with("u", u).with("u_x", jets[1]);
            let f = br.f().evaluate(&b)?;
            Ok(Residual::from_terms(&[jets[0], -(f * jets[1])]))
        }
        Model::Implicit(br) => {
            let mut b = Bindings::new().with("u", u);
            for (j, v) in jets.iter().enumerate() {
                b.set(&format!("u_x{j}"), *v);
            }
            let mut terms = Vec::new();
            for term in br.f().additive_terms() {
                terms.push(term.evaluate(&b)?);
            }
            Ok(Residual::from_terms(&terms))
        }
    }
}

/// Evaluate the transform over a grid: value, primed coordinates, Jacobian
/// and FD residual per cell, masking cells whose solve or stencil leaves the
/// domain. Deterministic row-major order.
pub fn transform_grid(
    ts: &TransformSpec,
    model: &Model,
    spec: &GridSpec,
    h: f64,
) -> TransformGrid {
    let mut cells = Vec::with_capacity(spec.len());
    for flat in 0..spec.len() {
        let point = spec.point(flat);
        cells.push(transform_cell(ts, model, &point, h));
    }
    TransformGrid { spec: spec.clone(), cells }
}

fn transform_cell(
    ts: &TransformSpec,
    model: &Model,
    point: &[f64],
    h: f64,
) -> Result<TransformCell, String> {
    let code = |e: PbsError| e.reason_code().to_string();
    let coords = solve_primed_coords(ts, point).map_err(code)?;
    let u = ts
        .seed
        .expr()
        .evaluate(&ts.coord_bindings(&coords.primed))
        .map_err(|e| PbsError::from(e).reason_code().to_string())?;
    let delta = if ts.n == 1 {
        jacobian_report_at(ts, &coords.primed).map_err(code)?.delta
    } else {
        jacobian_fd(ts, point, h).map_err(|_| String::from("fd_neighbor"))?
    };
    let residual = fd_pbs_residual(ts, model, point, h).map_err(|_| String::from("fd_neighbor"))?;
    Ok(TransformCell {
        point: point.to_vec(),
        u,
        primed: coords.primed,
        eta: coords.eta,
        delta,
        residual,
    })
}
