//! Invariant functions and the invariant operator.
//!
//! An invariant function is annihilated by the characteristic transport
//! operator of the branch. The constructors here realize the general
//! solutions of the defining equations for the components A, B and G: a
//! closed form when `F` does not depend on `u_x`, otherwise a quadrature
//! along the level set `F(b, y) = F(u, u_x)` with a bracketed root solve per
//! integrand evaluation. Additive gauge functions of `F` are fixed to zero,
//! so components are compared by their defining-equation residual, never by
//! value.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::branch::{Branch1D, BranchError, BackgroundSolution, BranchND};
use crate::expr::{simplify, total_derivative, Bindings, EvalError, Expr, JetConvention, JetError};
use crate::numeric::{
    bracketed_root, central_fd, composite_gl16, FdError, FdOrder, NewtonConfig, NewtonError,
    Residual,
};

/// Central-difference step used for the partials of numeric functionals in
/// defining-equation residual checks.
pub const FUNCTIONAL_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InvariantError {
    #[error("degenerate case: F_u = F_u_x = 0 admits no component with {constant} != 0")]
    DegenerateCase { constant: String },
    #[error("F_u vanishes identically; the quadrature of the n-dimensional invariant divides by it")]
    FUZero,
    #[error("axis index {i} out of range for spatial dimension {n}")]
    AxisOutOfRange { i: usize, n: usize },
    #[error("invariant operator is singular: |D_x G| = {value:e} at the requested point")]
    Singularity { value: f64 },
    #[error("numeric functional G supports pointwise application only")]
    NumericOperatorNeedsPoint,
    #[error("level-set solve failed: {0}")]
    LevelSet(#[from] NewtonError),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error(transparent)]
    Branch(#[from] BranchError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Fd(#[from] FdError),
}

/// Residual of the 1+1 invariant equation `φ_t - (u_x F)_{u_x}·φ_x` for a jet
/// expression composed with a background.
pub fn invariant_residual_1d(
    br: &Branch1D,
    bg: &BackgroundSolution,
    phi: &Expr,
    p: &Bindings,
) -> Result<Residual, InvariantError> {
    let composed = bg.compose(phi)?;
    let flux = bg.compose(br.flux_ux())?;
    let phi_t = composed.differentiate("t").evaluate_with_error(p)?;
    let (v, e) = simplify(&(flux * composed.differentiate("x"))).evaluate_with_error(p)?;
    Ok(Residual::from_terms_with_error(&[phi_t, (-v, e)]))
}

/// Residual of the n+1 invariant equation `Σ F_{u_i}·φ_i`.
pub fn invariant_residual_nd(
    br: &BranchND,
    bg: &BackgroundSolution,
    phi: &Expr,
    p: &Bindings,
) -> Result<Residual, InvariantError> {
    let composed = bg.compose(phi)?;
    let mut terms = Vec::with_capacity(br.n() + 1);
    for i in 0..=br.n() {
        let coord = br.convention().coord_name(i);
        let term = simplify(&(bg.compose(br.f_ui(i))? * composed.differentiate(&coord)));
        terms.push(term.evaluate_with_error(p)?);
    }
    Ok(Residual::from_terms_with_error(&terms))
}

/// As `invariant_residual_1d` but for a pointwise functional of the
/// coordinates (numeric components composed with a background); the
/// coordinate derivatives are taken by central differences with step `h`.
pub fn invariant_residual_1d_fd<F>(
    br: &Branch1D,
    bg: &BackgroundSolution,
    phi: F,
    p: &Bindings,
    h: f64,
) -> Result<Residual, InvariantError>
where
    F: Fn(&Bindings) -> Result<f64, String>,
{
    let t0 = p.get("t").expect("point binds t");
    let x0 = p.get("x").expect("point binds x");
    let phi_t = central_fd(|t| phi(&p.clone().with("t", t)), t0, FdOrder::First, h)?;
    let phi_x = central_fd(|x| phi(&p.clone().with("x", x)), x0, FdOrder::First, h)?;
    let jets = bg.jet_bindings(p, 1)?;
    let flux = br.flux_ux().evaluate(&jets)?;
    Ok(Residual::from_terms(&[phi_t, -(flux * phi_x)]))
}

/// As `invariant_residual_nd` but for a pointwise functional.
pub fn invariant_residual_nd_fd<F>(
    br: &BranchND,
    bg: &BackgroundSolution,
    phi: F,
    p: &Bindings,
    h: f64,
) -> Result<Residual, InvariantError>
where
    F: Fn(&Bindings) -> Result<f64, String>,
{
    let jets = bg.jet_bindings(p, 1)?;
    let mut terms = Vec::with_capacity(br.n() + 1);
    for i in 0..=br.n() {
        let coord = br.convention().coord_name(i);
        let c0 = p.get(&coord).expect("point binds every coordinate");
        let phi_i = central_fd(|c| phi(&p.clone().with(&coord, c)), c0, FdOrder::First, h)?;
        terms.push(br.f_ui(i).evaluate(&jets)? * phi_i);
    }
    Ok(Residual::from_terms(&terms))
}

/// Anchoring and solver configuration for quadrature-built functionals.
/// The lower quadrature limit pins the additive gauge; only differences
/// matter modulo it.
#[derive(Debug, Clone)]
pub struct FunctionalConfig {
    pub u_ref: f64,
    pub level_set_bracket: (f64, f64),
    pub newton: NewtonConfig,
    pub panels: usize,
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        FunctionalConfig {
            u_ref: 1.0,
            level_set_bracket: (1e-3, 1e3),
            newton: NewtonConfig { abs_tolerance: 1e-14, ..NewtonConfig::default() },
            panels: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ComponentKind {
    /// `u_x²(A_{u_x}F_u - A_u F_{u_x}) = a(u_x F)_{u_x}`
    A { a: f64 },
    /// `u_x²(B_{u_x}F_u - B_u F_{u_x}) = -b`
    B { b: f64 },
    /// `F_{u_x}G_u - F_u G_{u_x} = c·u_x^{-2}`
    G { c: f64 },
}

/// A constructed component: either a closed-form jet expression in
/// `(u, u_x)` or a numeric functional realized by level-set quadrature.
#[derive(Debug, Clone)]
pub enum Component {
    Closed(Expr),
    Numeric(NumericComponent),
}

#[derive(Debug, Clone)]
pub struct NumericComponent {
    branch: Branch1D,
    kind: ComponentKind,
    cfg: FunctionalConfig,
}

impl Component {
    pub fn is_closed(&self) -> bool {
        matches!(self, Component::Closed(_))
    }

    pub fn as_closed(&self) -> Option<&Expr> {
        match self {
            Component::Closed(e) => Some(e),
            Component::Numeric(_) => None,
        }
    }

    /// Value at a jet point `(u, u_x)`.
    pub fn value(&self, u: f64, u_x: f64) -> Result<f64, InvariantError> {
        match self {
            Component::Closed(e) => {
                Ok(e.evaluate(Bindings::new().set("u", u).set("u_x", u_x))?)
            }
            Component::Numeric(n) => n.value(u, u_x),
        }
    }

    /// Partials `(∂/∂u, ∂/∂u_x)`; exact for closed forms, central differences
    /// with step `FUNCTIONAL_FD_STEP` for numeric functionals.
    pub fn partials(&self, u: f64, u_x: f64) -> Result<(f64, f64), InvariantError> {
        match self {
            Component::Closed(e) => {
                let b = Bindings::new().with("u", u).with("u_x", u_x);
                Ok((
                    e.differentiate("u").evaluate(&b)?,
                    e.differentiate("u_x").evaluate(&b)?,
                ))
            }
            Component::Numeric(n) => {
                let h = FUNCTIONAL_FD_STEP;
                let du = (n.value(u + h, u_x)? - n.value(u - h, u_x)?) / (2.0 * h);
                let dux = (n.value(u, u_x + h)? - n.value(u, u_x - h)?) / (2.0 * h);
                Ok((du, dux))
            }
        }
    }
}

impl NumericComponent {
    fn f_bar(&self, u: f64, u_x: f64) -> Result<f64, InvariantError> {
        Ok(self
            .branch
            .f()
            .evaluate(Bindings::new().set("u", u).set("u_x", u_x))?)
    }

    /// Quadrature along the level set `F(b, y(b)) = F̄` from `u_ref` to `u`.
    fn level_set_integral(&self, u: f64, f_bar: f64) -> Result<f64, InvariantError> {
        let (lo, hi) = self.cfg.level_set_bracket;
        let branch = &self.branch;
        let newton = &self.cfg.newton;
        let kind = self.kind;
        let integrand = |b: f64| -> Result<f64, String> {
            let residual = |y: f64| -> Result<f64, String> {
                branch
                    .f()
                    .evaluate(Bindings::new().set("u", b).set("u_x", y))
                    .map(|v| v - f_bar)
                    .map_err(|e| e.to_string())
            };
            let y = bracketed_root(residual, lo, hi, newton).map_err(|e| e.to_string())?;
            let f_y = branch
                .f_ux()
                .evaluate(Bindings::new().set("u", b).set("u_x", y))
                .map_err(|e| e.to_string())?;
            let denom = y * y * f_y;
            if denom == 0.0 {
                return Err(String::from("level-set integrand divides by zero"));
            }
            match kind {
                ComponentKind::A { .. } => Ok((f_bar + y * f_y) / denom),
                ComponentKind::B { .. } | ComponentKind::G { .. } => Ok(1.0 / denom),
            }
        };
        composite_gl16(integrand, self.cfg.u_ref, u, self.cfg.panels)
            .map_err(InvariantError::Quadrature)
    }

    pub fn value(&self, u: f64, u_x: f64) -> Result<f64, InvariantError> {
        let f_bar = self.f_bar(u, u_x)?;
        let integral = self.level_set_integral(u, f_bar)?;
        Ok(match self.kind {
            ComponentKind::A { a } => -a * integral,
            ComponentKind::B { b } => b * integral,
            ComponentKind::G { c } => f_bar + c * integral,
        })
    }
}

fn is_identically_zero(e: &Expr) -> bool {
    simplify(e).is_zero()
}

fn build_component(
    br: &Branch1D,
    kind: ComponentKind,
    cfg: FunctionalConfig,
) -> Result<Component, InvariantError> {
    let (constant, name) = match kind {
        ComponentKind::A { a } => (a, "a"),
        ComponentKind::B { b } => (b, "b"),
        ComponentKind::G { c } => (c, "c"),
    };
    let fux_zero = is_identically_zero(br.f_ux());
    let fu_zero = is_identically_zero(br.f_u());

    if constant == 0.0 {
        // The homogeneous solution: any function of F, gauge-fixed to 0 (or
        // to F itself for G, which keeps the invariant operator nonsingular).
        return Ok(Component::Closed(match kind {
            ComponentKind::G { .. } => br.f().clone(),
            _ => Expr::cst(0.0),
        }));
    }
    if !fux_zero {
        return Ok(Component::Numeric(NumericComponent { branch: br.clone(), kind, cfg }));
    }
    if !fu_zero {
        let u_x = Expr::var("u_x");
        let closed = match kind {
            ComponentKind::A { a } => {
                simplify(&(Expr::cst(-a) * br.f().clone() / (u_x * br.f_u().clone())))
            }
            ComponentKind::B { b } => simplify(&(Expr::cst(b) / (u_x * br.f_u().clone()))),
            ComponentKind::G { c } => {
                simplify(&(br.f().clone() + Expr::cst(c) / (u_x * br.f_u().clone())))
            }
        };
        return Ok(Component::Closed(closed));
    }
    Err(InvariantError::DegenerateCase { constant: name.to_string() })
}

/// Component `A` of the invariant `β_0 = a·x + A(u, u_x)`.
pub fn build_a(br: &Branch1D, a: f64, cfg: FunctionalConfig) -> Result<Component, InvariantError> {
    build_component(br, ComponentKind::A { a }, cfg)
}

/// Component `B` of the invariant `γ_0 = b·t + B(u, u_x)`.
pub fn build_b(br: &Branch1D, b: f64, cfg: FunctionalConfig) -> Result<Component, InvariantError> {
    build_component(br, ComponentKind::B { b }, cfg)
}

/// Generator `G` of the invariant operator, `F_{u_x}G_u - F_u G_{u_x} = c·u_x^{-2}`.
pub fn build_g(br: &Branch1D, c: f64, cfg: FunctionalConfig) -> Result<Component, InvariantError> {
    build_component(br, ComponentKind::G { c }, cfg)
}

/// Defining-equation residual of an `A` candidate at a jet point.
pub fn defining_residual_a(
    br: &Branch1D,
    comp: &Component,
    a: f64,
    u: f64,
    u_x: f64,
) -> Result<Residual, InvariantError> {
    let (p_u, p_ux) = comp.partials(u, u_x)?;
    let jets = Bindings::new().with("u", u).with("u_x", u_x);
    let f_u = br.f_u().evaluate(&jets)?;
    let f_ux = br.f_ux().evaluate(&jets)?;
    let flux = br.flux_ux().evaluate(&jets)?;
    let w = u_x * u_x;
    Ok(Residual::from_terms(&[w * p_ux * f_u, -(w * p_u * f_ux), -(a * flux)]))
}

/// Defining-equation residual of a `B` candidate at a jet point.
pub fn defining_residual_b(
    br: &Branch1D,
    comp: &Component,
    b: f64,
    u: f64,
    u_x: f64,
) -> Result<Residual, InvariantError> {
    let (p_u, p_ux) = comp.partials(u, u_x)?;
    let jets = Bindings::new().with("u", u).with("u_x", u_x);
    let f_u = br.f_u().evaluate(&jets)?;
    let f_ux = br.f_ux().evaluate(&jets)?;
    let w = u_x * u_x;
    Ok(Residual::from_terms(&[w * p_ux * f_u, -(w * p_u * f_ux), b]))
}

/// Defining-equation residual of a `G` candidate at a jet point.
pub fn defining_residual_g(
    br: &Branch1D,
    comp: &Component,
    c: f64,
    u: f64,
    u_x: f64,
) -> Result<Residual, InvariantError> {
    let (p_u, p_ux) = comp.partials(u, u_x)?;
    let jets = Bindings::new().with("u", u).with("u_x", u_x);
    let f_u = br.f_u().evaluate(&jets)?;
    let f_ux = br.f_ux().evaluate(&jets)?;
    Ok(Residual::from_terms(&[f_ux * p_u, -(f_u * p_ux), -(c / (u_x * u_x))]))
}

/// Symbolic application of the invariant operator `φh = D_x h / D_x G`;
/// requires a closed-form `G`.
pub fn apply_invariant_operator(
    g: &Component,
    h: &Expr,
    conv: &JetConvention,
) -> Result<Expr, InvariantError> {
    let g = g.as_closed().ok_or(InvariantError::NumericOperatorNeedsPoint)?;
    let dh = total_derivative(h, conv, 1)?;
    let dg = total_derivative(g, conv, 1)?;
    Ok(simplify(&(dh / dg)))
}

/// Pointwise application of the invariant operator at a jet point binding
/// `u, u_x, u_xx` (and whatever `h`'s total derivative needs).
pub fn apply_invariant_operator_at(
    g: &Component,
    h: &Expr,
    conv: &JetConvention,
    p: &Bindings,
) -> Result<f64, InvariantError> {
    let dg = match g {
        Component::Closed(g) => total_derivative(g, conv, 1)?.evaluate(p)?,
        Component::Numeric(n) => {
            let u = p.get("u").expect("jet point binds u");
            let u_x = p.get("u_x").expect("jet point binds u_x");
            let u_xx = p.get("u_xx").expect("jet point binds u_xx");
            let comp = Component::Numeric(n.clone());
            let (g_u, g_ux) = comp.partials(u, u_x)?;
            g_u * u_x + g_ux * u_xx
        }
    };
    if libm::fabs(dg) <= 1e-12 {
        return Err(InvariantError::Singularity { value: dg });
    }
    let dh = total_derivative(h, conv, 1)?.evaluate(p)?;
    Ok(dh / dg)
}

/// Configuration for the n-dimensional invariant functionals.
#[derive(Debug, Clone)]
pub struct NdFunctionalConfig {
    pub u0_ref: f64,
    pub root_bracket: (f64, f64),
    pub newton: NewtonConfig,
    pub panels: usize,
}

impl Default for NdFunctionalConfig {
    fn default() -> Self {
        NdFunctionalConfig {
            u0_ref: 1.0,
            root_bracket: (1e-3, 1e3),
            newton: NewtonConfig { abs_tolerance: 1e-14, ..NewtonConfig::default() },
            panels: 12,
        }
    }
}

/// The functional `A_i` with `φ_i = x_i + A_i(u, u_0..u_n)` realized by a
/// nested level-set solve and quadrature.
#[derive(Debug, Clone)]
pub struct NdInvariantSpec {
    branch: BranchND,
    i: usize,
    cfg: NdFunctionalConfig,
}

/// Build the functional for invariant `φ_i = x_i + A_i`. Fails when `F_u`
/// vanishes identically (the integrand divides by it) or `i` is out of range.
pub fn build_ai_nd(
    br: &BranchND,
    i: usize,
    cfg: NdFunctionalConfig,
) -> Result<NdInvariantSpec, InvariantError> {
    if i > br.n() {
        return Err(InvariantError::AxisOutOfRange { i, n: br.n() });
    }
    if is_identically_zero(br.f_u()) {
        return Err(InvariantError::FUZero);
    }
    Ok(NdInvariantSpec { branch: br.clone(), i, cfg })
}

impl NdInvariantSpec {
    pub fn axis(&self) -> usize {
        self.i
    }

    fn jet_bindings(u: f64, grads: &[f64]) -> Bindings {
        let mut b = Bindings::new().with("u", u);
        for (j, g) in grads.iter().enumerate() {
            b.set(&format!("u_x{j}"), *g);
        }
        b
    }

    /// `A_i` at a jet point `(u, u_0..u_n)`.
    pub fn a_value(&self, u: f64, grads: &[f64]) -> Result<f64, InvariantError> {
        assert_eq!(grads.len(), self.branch.n() + 1);
        let u0 = grads[0];
        let tau: Vec<f64> = grads.iter().map(|g| g / u0).collect();
        let f_bar = self.branch.f().evaluate(&Self::jet_bindings(u, grads))?;
        let branch = &self.branch;
        let (lo, hi) = self.cfg.root_bracket;
        let newton = &self.cfg.newton;
        let i = self.i;
        let integrand = |b: f64| -> Result<f64, String> {
            let scaled: Vec<f64> = tau.iter().map(|t| b * t).collect();
            let residual = |f: f64| -> Result<f64, String> {
                branch
                    .f()
                    .evaluate(&Self::jet_bindings(f, &scaled))
                    .map(|v| v - f_bar)
                    .map_err(|e| e.to_string())
            };
            let f_root = bracketed_root(residual, lo, hi, newton).map_err(|e| e.to_string())?;
            let at = Self::jet_bindings(f_root, &scaled);
            let num = branch.f_ui(i).evaluate(&at).map_err(|e| e.to_string())?;
            let den = b * branch.f_u().evaluate(&at).map_err(|e| e.to_string())?;
            if den == 0.0 {
                return Err(String::from("F_u vanished on the integration path"));
            }
            Ok(num / den)
        };
        composite_gl16(integrand, self.cfg.u0_ref, u0, self.cfg.panels)
            .map_err(InvariantError::Quadrature)
    }

    /// `φ_i = x_i + A_i` evaluated on a background at a coordinate point.
    pub fn phi_on_background(
        &self,
        bg: &BackgroundSolution,
        p: &Bindings,
    ) -> Result<f64, InvariantError> {
        let jets = bg.jet_bindings(p, 1)?;
        let u = jets.get("u").expect("u bound");
        let grads: Vec<f64> = (0..=self.branch.n())
            .map(|j| jets.get(&format!("u_x{j}")).expect("gradient bound"))
            .collect();
        let x_i = p
            .get(&self.branch.convention().coord_name(self.i))
            .expect("point binds every coordinate");
        Ok(x_i + self.a_value(u, &grads)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branch::BackgroundSolution;
    use crate::expr::parse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> Branch1D {
        Branch1D::new(parse("u*u_x").unwrap()).unwrap()
    }

    fn toy_seed() -> BackgroundSolution {
        BackgroundSolution::new(parse("x/sqrt(-2*t)").unwrap(), &JetConvention::one_plus_one())
            .unwrap()
    }

    fn toy_travelling() -> BackgroundSolution {
        BackgroundSolution::new(parse("sqrt(2*(x+t))").unwrap(), &JetConvention::one_plus_one())
            .unwrap()
    }

    #[test]
    fn ratio_and_translates_are_invariant() {
        let br = toy();
        let cases = [
            (toy_seed(), Bindings::from_pairs(&[("t", -0.4), ("x", 1.3)])),
            (toy_travelling(), Bindings::from_pairs(&[("t", 0.5), ("x", 1.0)])),
        ];
        for (bg, p) in cases {
            let r = invariant_residual_1d(&br, &bg, &parse("u_x/u_t").unwrap(), &p).unwrap();
            assert!(r.within(1e-10), "u_x/u_t residual {:e}", r.value);
            let r = invariant_residual_1d(&br, &bg, &parse("7").unwrap(), &p).unwrap();
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn toy_closed_form_invariants() {
        let br = toy();
        let bg = toy_seed();
        for phi in ["x - u/u_x", "2*t + u_x^(-2)"] {
            let phi = parse(phi).unwrap();
            for &(t, x) in &[(-0.5, 1.0), (-0.25, 1.9), (-0.9, -1.4)] {
                let p = Bindings::from_pairs(&[("t", t), ("x", x)]);
                let r = invariant_residual_1d(&br, &bg, &phi, &p).unwrap();
                assert!(r.within(1e-10), "phi {phi} at ({t},{x}): {:e}", r.value);
            }
        }
    }

    #[test]
    fn arbitrary_function_of_invariant_stays_invariant() {
        // Theorem 2.2 with a smooth map applied to x - u/u_x.
        let br = toy();
        let bg = toy_seed();
        for phi in ["sin(x - u/u_x)", "(x - u/u_x)^2", "exp(x - u/u_x)"] {
            let phi = parse(phi).unwrap();
            let p = Bindings::from_pairs(&[("t", -0.6), ("x", 0.8)]);
            let r = invariant_residual_1d(&br, &bg, &phi, &p).unwrap();
            assert!(r.within(1e-9), "phi {phi}: {:e} scale {:e}", r.value, r.scale);
        }
    }

    #[test]
    fn nd_invariants_on_radial_background() {
        let br = BranchND::new(2, parse("u_x0^2 + u_x1^2 + u_x2^2 - 1").unwrap()).unwrap();
        let bg = BackgroundSolution::new(
            parse("sqrt(x0^2 + x1^2 + x2^2)").unwrap(),
            br.convention(),
        )
        .unwrap();
        let p = Bindings::from_pairs(&[("x0", 1.2), ("x1", 0.8), ("x2", -0.5)]);

        let r = invariant_residual_nd(&br, &bg, &parse("u_x1/u_x0").unwrap(), &p).unwrap();
        assert!(r.within(1e-10), "tau residual {:e}", r.value);
        let r = invariant_residual_nd(&br, &bg, &parse("3").unwrap(), &p).unwrap();
        assert_eq!(r.value, 0.0);
        // x1 is not invariant: the residual is F_{u_1} = 2 u_1.
        let r = invariant_residual_nd(&br, &bg, &parse("x1").unwrap(), &p).unwrap();
        let u1 = 0.8 / (1.2f64 * 1.2 + 0.8 * 0.8 + 0.5 * 0.5).sqrt();
        assert!((r.value - 2.0 * u1).abs() < 1e-12, "got {}", r.value);
    }

    fn random_jet_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)))
            .collect()
    }

    #[test]
    fn build_a_toy_quadrature_and_candidate() {
        let br = toy();
        let a = 1.0;
        let built = build_a(&br, a, FunctionalConfig::default()).unwrap();
        assert!(!built.is_closed());
        let candidate = Component::Closed(parse("-u/u_x").unwrap());
        for (u, u_x) in random_jet_points(50, 11) {
            let r = defining_residual_a(&br, &candidate, a, u, u_x).unwrap();
            assert!(r.within(1e-10), "candidate at ({u},{u_x}): {:e}", r.value);
            let r = defining_residual_a(&br, &built, a, u, u_x).unwrap();
            assert!(r.within(1e-8), "built at ({u},{u_x}): {:e} scale {:e}", r.value, r.scale);
        }
    }

    #[test]
    fn build_b_toy_quadrature_and_candidate() {
        let br = toy();
        let b = 2.0;
        let built = build_b(&br, b, FunctionalConfig::default()).unwrap();
        let candidate = Component::Closed(parse("u_x^(-2)").unwrap());
        for (u, u_x) in random_jet_points(50, 12) {
            let r = defining_residual_b(&br, &candidate, b, u, u_x).unwrap();
            assert!(r.within(1e-10), "candidate at ({u},{u_x}): {:e}", r.value);
            let r = defining_residual_b(&br, &built, b, u, u_x).unwrap();
            assert!(r.within(1e-8), "built at ({u},{u_x}): {:e} scale {:e}", r.value, r.scale);
        }
    }

    #[test]
    fn hopf_closed_forms() {
        // F = a_H·u has F_{u_x} = 0: the closed-form branch of the general
        // solution applies.
        let a_h = 1.0;
        let br = Branch1D::new(parse("u").unwrap()).unwrap();
        let a = 1.0;
        let comp = build_a(&br, a, FunctionalConfig::default()).unwrap();
        let expect = parse("-u/u_x").unwrap();
        for (u, u_x) in random_jet_points(20, 13) {
            let jets = Bindings::new().with("u", u).with("u_x", u_x);
            let got = comp.value(u, u_x).unwrap();
            assert!((got - expect.evaluate(&jets).unwrap()).abs() < 1e-12);
            let r = defining_residual_a(&br, &comp, a, u, u_x).unwrap();
            assert!(r.within(1e-10));
        }
        let b = 2.0;
        let comp = build_b(&br, b, FunctionalConfig::default()).unwrap();
        let expect = parse("2/(u_x*1)").unwrap();
        for (u, u_x) in random_jet_points(20, 14) {
            let jets = Bindings::new().with("u", u).with("u_x", u_x);
            let got = comp.value(u, u_x).unwrap();
            assert!((got - expect.evaluate(&jets).unwrap() / a_h).abs() < 1e-12);
            let r = defining_residual_b(&br, &comp, b, u, u_x).unwrap();
            assert!(r.within(1e-10));
        }
    }

    #[test]
    fn constant_branch_is_degenerate() {
        let br = Branch1D::new(parse("3").unwrap()).unwrap();
        assert!(matches!(
            build_a(&br, 1.0, FunctionalConfig::default()),
            Err(InvariantError::DegenerateCase { .. })
        ));
        assert!(matches!(
            build_b(&br, 1.0, FunctionalConfig::default()),
            Err(InvariantError::DegenerateCase { .. })
        ));
        assert!(matches!(
            build_g(&br, 1.0, FunctionalConfig::default()),
            Err(InvariantError::DegenerateCase { .. })
        ));
        // a = 0 is fine: the gauge choice A_0 = 0.
        assert!(build_a(&br, 0.0, FunctionalConfig::default()).is_ok());
    }

    #[test]
    fn build_g_cases() {
        let br = toy();
        // c = 0: G = F passes identically.
        let g0 = build_g(&br, 0.0, FunctionalConfig::default()).unwrap();
        assert_eq!(g0.as_closed().unwrap(), br.f());
        for (u, u_x) in random_jet_points(10, 15) {
            let r = defining_residual_g(&br, &g0, 0.0, u, u_x).unwrap();
            assert_eq!(r.value, 0.0);
        }
        // c = 1: quadrature-built G passes the defining equation.
        let g1 = build_g(&br, 1.0, FunctionalConfig::default()).unwrap();
        for (u, u_x) in random_jet_points(50, 16) {
            let r = defining_residual_g(&br, &g1, 1.0, u, u_x).unwrap();
            assert!(r.within(1e-8), "at ({u},{u_x}): {:e} scale {:e}", r.value, r.scale);
        }
        // The closed-form solution of the same equation, (1/2)u_x^{-2} + F.
        let closed = Component::Closed(parse("u*u_x + 0.5*u_x^(-2)").unwrap());
        for (u, u_x) in random_jet_points(20, 17) {
            let r = defining_residual_g(&br, &closed, 1.0, u, u_x).unwrap();
            assert!(r.within(1e-10), "closed at ({u},{u_x}): {:e}", r.value);
        }
    }

    #[test]
    fn beta_and_gamma_are_invariant_along_backgrounds() {
        // β_0 = a·x + A and γ_0 = b·t + B with quadrature-built components.
        let br = toy();
        let bg = toy_seed();
        let a = 1.0;
        let b = 2.0;
        let comp_a = build_a(&br, a, FunctionalConfig::default()).unwrap();
        let comp_b = build_b(&br, b, FunctionalConfig::default()).unwrap();
        for &(t, x) in &[(-0.5, 1.2), (-0.35, 1.6)] {
            let p = Bindings::from_pairs(&[("t", t), ("x", x)]);
            let beta = |q: &Bindings| -> Result<f64, String> {
                let jets = bg.jet_bindings(q, 1).map_err(|e| e.to_string())?;
                let v = comp_a
                    .value(jets.get("u").unwrap(), jets.get("u_x").unwrap())
                    .map_err(|e| e.to_string())?;
                Ok(a * q.get("x").unwrap() + v)
            };
            let r = invariant_residual_1d_fd(&br, &bg, beta, &p, 1e-5).unwrap();
            assert!(r.within(1e-8), "beta at ({t},{x}): {:e} scale {:e}", r.value, r.scale);

            let gamma = |q: &Bindings| -> Result<f64, String> {
                let jets = bg.jet_bindings(q, 1).map_err(|e| e.to_string())?;
                let v = comp_b
                    .value(jets.get("u").unwrap(), jets.get("u_x").unwrap())
                    .map_err(|e| e.to_string())?;
                Ok(b * q.get("t").unwrap() + v)
            };
            let r = invariant_residual_1d_fd(&br, &bg, gamma, &p, 1e-5).unwrap();
            assert!(r.within(1e-8), "gamma at ({t},{x}): {:e} scale {:e}", r.value, r.scale);
        }
    }

    #[test]
    fn operator_preserves_invariance() {
        let br = toy();
        let bg = toy_seed();
        let conv = JetConvention::one_plus_one();
        let g = build_g(&br, 0.0, FunctionalConfig::default()).unwrap();

        // φ(const) is literally zero.
        let image = apply_invariant_operator(&g, &parse("42").unwrap(), &conv).unwrap();
        assert!(image.is_zero());

        let image = apply_invariant_operator(&g, &parse("u_x/u_t").unwrap(), &conv).unwrap();
        for &(t, x) in &[(-0.5, 1.0), (-0.3, 1.5), (-0.7, -1.1)] {
            let p = Bindings::from_pairs(&[("t", t), ("x", x)]);
            let r = invariant_residual_1d(&br, &bg, &image, &p).unwrap();
            assert!(r.within(1e-9), "at ({t},{x}): {:e} scale {:e}", r.value, r.scale);
        }
    }

    #[test]
    fn operator_flags_singular_points() {
        let br = toy();
        let conv = JetConvention::one_plus_one();
        let g = build_g(&br, 0.0, FunctionalConfig::default()).unwrap();
        // D_x G = D_x(u u_x) = u_x^2 + u u_xx = 0 at u_x = 1, u = 1, u_xx = -1.
        let p = Bindings::from_pairs(&[("u", 1.0), ("u_x", 1.0), ("u_xx", -1.0), ("u_xt", 0.0), ("u_t", 1.0)]);
        match apply_invariant_operator_at(&g, &parse("u_x/u_t").unwrap(), &conv, &p) {
            Err(InvariantError::Singularity { .. }) => {}
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn example_operator_maps_invariants_to_invariants_on_shell() {
        // The toy model's example operator u^{-3}·u_xx^{-1}·D_x is checked
        // empirically: images of known invariants stay invariant along the
        // travelling background (where u_xx != 0).
        let br = toy();
        let bg = toy_travelling();
        let conv = JetConvention::one_plus_one();
        for phi in ["x - u/u_x", "(x - u/u_x)^2", "2*t + u_x^(-2)"] {
            let phi = parse(phi).unwrap();
            let dphi = total_derivative(&phi, &conv, 1).unwrap();
            let image = simplify(
                &(Expr::var("u").pow(-3.0) * Expr::var("u_xx").pow(-1.0) * dphi),
            );
            for &(t, x) in &[(0.4, 0.9), (0.2, 1.8)] {
                let p = Bindings::from_pairs(&[("t", t), ("x", x)]);
                let r = invariant_residual_1d(&br, &bg, &image, &p).unwrap();
                assert!(r.within(1e-9), "phi {phi} at ({t},{x}): {:e} scale {:e}", r.value, r.scale);
            }
        }
    }

    #[test]
    fn nd_functional_reproduces_toy_invariant() {
        // Toy model recast as the n = 1 implicit branch F = u_x0 - u·u_x1².
        let br = BranchND::new(1, parse("u_x0 - u*u_x1^2").unwrap()).unwrap();
        let bg = BackgroundSolution::new(parse("x1/sqrt(-2*x0)").unwrap(), br.convention())
            .unwrap();
        let spec = build_ai_nd(&br, 0, NdFunctionalConfig::default()).unwrap();
        for &(t, x) in &[(-0.45, 1.1), (-0.3, 1.6)] {
            let p = Bindings::from_pairs(&[("x0", t), ("x1", x)]);
            let phi = |q: &Bindings| spec.phi_on_background(&bg, q).map_err(|e| e.to_string());
            let r = invariant_residual_nd_fd(&br, &bg, phi, &p, 1e-5).unwrap();
            assert!(r.within(1e-6), "at ({t},{x}): {:e} scale {:e}", r.value, r.scale);
        }
    }

    #[test]
    fn nd_functional_rejects_vanishing_f_u() {
        let br = BranchND::new(2, parse("u_x0^2 + u_x1^2 + u_x2^2 - 1").unwrap()).unwrap();
        assert!(matches!(
            build_ai_nd(&br, 0, NdFunctionalConfig::default()),
            Err(InvariantError::FUZero)
        ));
        let br = BranchND::new(1, parse("u_x0 - u*u_x1^2").unwrap()).unwrap();
        assert!(matches!(
            build_ai_nd(&br, 5, NdFunctionalConfig::default()),
            Err(InvariantError::AxisOutOfRange { .. })
        ));
    }
}
