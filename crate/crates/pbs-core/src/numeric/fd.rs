//! Central finite differences, used as verification oracles throughout.

use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FdError {
    #[error("function undefined at {at} while forming a finite difference: {detail}")]
    DomainExit { at: f64, detail: String },
}

/// O(h^2) central estimate of the first or second derivative of `f` at `at`.
pub fn central_fd<F>(f: F, at: f64, order: FdOrder, h: f64) -> Result<f64, FdError>
where
    F: Fn(f64) -> Result<f64, String>,
{
    let eval = |x: f64| f(x).map_err(|detail| FdError::DomainExit { at: x, detail });
    match order {
        FdOrder::First => Ok((eval(at + h)? - eval(at - h)?) / (2.0 * h)),
        FdOrder::Second => Ok((eval(at + h)? - 2.0 * eval(at)? + eval(at - h)?) / (h * h)),
    }
}
