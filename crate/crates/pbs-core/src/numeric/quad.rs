//! Quadrature: adaptive Simpson for general use, and composite Gauss-Legendre
//! with a frozen panel count for functionals that must stay smooth in their
//! endpoints (their partial derivatives are taken by finite differences).

use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tolerance: f64,
    pub max_depth: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { rel_tolerance: 1e-10, max_depth: 40 }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadError {
    #[error("subdivision depth exhausted on worst interval [{lo}, {hi}]")]
    DepthExhausted { lo: f64, hi: f64 },
    #[error("integrand undefined at {at}: {detail}")]
    Domain { at: f64, detail: String },
}

/// Adaptive Simpson integration of `f` over `[a, b]` to the configured
/// relative tolerance.
pub fn integrate<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, String>,
{
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let eval = |x: f64| f(x).map_err(|detail| QuadError::Domain { at: x, detail });

    let flo = eval(lo)?;
    let fhi = eval(hi)?;
    let mid = 0.5 * (lo + hi);
    let fmid = eval(mid)?;
    let whole = simpson(lo, hi, flo, fmid, fhi);
    // Error budget proportional to subinterval length, with an absolute floor
    // so that integrals near zero still terminate.
    let budget = cfg.rel_tolerance * libm::fabs(whole) + 1e-300;
    let value = adaptive(
        &eval,
        lo,
        hi,
        flo,
        fmid,
        fhi,
        whole,
        budget,
        cfg.max_depth,
    )?;
    Ok(sign * value)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<E>(
    eval: &E,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    budget: f64,
    depth: usize,
) -> Result<f64, QuadError>
where
    E: Fn(f64) -> Result<f64, QuadError>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(lm)?;
    let frm = eval(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if libm::fabs(delta) <= 15.0 * budget {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadError::DepthExhausted { lo: a, hi: b });
    }
    let half = 0.5 * budget;
    Ok(adaptive(eval, a, m, fa, flm, fm, left, half, depth - 1)?
        + adaptive(eval, m, b, fm, frm, fb, right, half, depth - 1)?)
}

// 16-point Gauss-Legendre nodes/weights on [-1, 1] (positive half; mirrored).
const GL16_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_91,
    0.458_016_777_657_227_39,
    0.617_876_244_402_643_75,
    0.755_404_408_355_003_03,
    0.865_631_202_387_831_74,
    0.944_575_023_073_232_58,
    0.989_400_934_991_649_93,
];
const GL16_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_50,
    0.182_603_415_044_923_59,
    0.169_156_519_395_002_54,
    0.149_595_988_816_576_73,
    0.124_628_971_255_533_87,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_095,
];

/// Composite 16-point Gauss-Legendre rule with a fixed panel count. Node
/// positions depend smoothly (affinely) on the endpoints, so finite
/// differences through this rule see a smooth function.
pub fn composite_gl16<F>(f: F, a: f64, b: f64, panels: usize) -> Result<f64, String>
where
    F: Fn(f64) -> Result<f64, String>,
{
    assert!(panels >= 1);
    if a == b {
        return Ok(0.0);
    }
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let center = lo + 0.5 * width;
        let half = 0.5 * width;
        for k in 0..8 {
            total += GL16_WEIGHTS[k]
                * (f(center + half * GL16_NODES[k])? + f(center - half * GL16_NODES[k])?);
        }
    }
    Ok(total * 0.5 * width)
}
