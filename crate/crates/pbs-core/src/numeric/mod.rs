//! Shared numerical machinery: root finding, quadrature, finite differences,
//! grid sampling and small dense linear algebra.

mod fd;
mod grid;
mod linalg;
mod newton;
mod quad;

pub use fd::{central_fd, FdError, FdOrder};
pub use grid::{sample_grid, AxisSpec, GridError, GridField, GridSpec};
pub use linalg::{determinant, lu_solve, singular_values, LinalgError};
pub use newton::{
    bracketed_root, newton_solve, newton_solve_1d, NewtonConfig, NewtonError, NewtonResult,
};
pub use quad::{composite_gl16, integrate, QuadError, QuadratureConfig};

/// Residual value together with the magnitude of the largest additive term it
/// was assembled from, and a rounding-noise floor. Tolerances throughout the
/// crate are expressed relative to the scale so that checks are meaningful
/// across models; the floor keeps checks well-posed when a residual is
/// identically zero and both value and scale degenerate to rounding noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub scale: f64,
    pub floor: f64,
}

/// Safety factor applied to running rounding-error bounds.
const FLOOR_SAFETY: f64 = 32.0;

impl Residual {
    pub fn new(value: f64, scale: f64) -> Self {
        Residual { value, scale, floor: 0.0 }
    }

    /// Build from the additive terms of the residual: value is their sum,
    /// scale the largest absolute term.
    pub fn from_terms(terms: &[f64]) -> Self {
        let value = terms.iter().sum();
        let scale = terms.iter().fold(0.0f64, |m, t| m.max(libm::fabs(*t)));
        Residual { value, scale, floor: 0.0 }
    }

    /// Build from `(term, rounding error bound)` pairs.
    pub fn from_terms_with_error(terms: &[(f64, f64)]) -> Self {
        let value = terms.iter().map(|(v, _)| v).sum();
        let scale = terms.iter().fold(0.0f64, |m, (v, _)| m.max(libm::fabs(*v)));
        let floor = FLOOR_SAFETY * terms.iter().map(|(_, e)| e).sum::<f64>();
        Residual { value, scale, floor }
    }

    /// `|value| <= tol·scale + floor`. An all-zero residual passes at any
    /// tolerance; a residual buried in its own rounding noise also does.
    pub fn within(&self, tol: f64) -> bool {
        libm::fabs(self.value) <= tol * self.scale + self.floor
    }

    /// |value| / scale with a floor to keep the ratio finite.
    pub fn ratio(&self) -> f64 {
        libm::fabs(self.value) / self.scale.max(1e-300)
    }
}
