//! Jet-variable conventions and total derivatives.
//!
//! Jet variables treat the derivatives of `u` as independent symbols. Two
//! naming schemes are supported: the 1+1 case with coordinates `t, x` and
//! jets `u, u_t, u_x, u_xx, u_xt, …` (x's before t's), and the n+1 case with
//! coordinates `x0..xn` and jets `u, u_x0, …, u_x0x1, …` (axis indices
//! ascending). A total derivative along an axis maps each jet variable to its
//! unique successor.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use super::{simplify, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scheme {
    /// 1+1 case: axis 0 is `t`, axis 1 is `x`.
    TimeSpace,
    /// n+1 case: axes `x0..xn` with `x0` playing the role of time.
    Indexed(usize),
}

/// Coordinate/jet naming convention plus the maximum admissible jet order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetConvention {
    scheme: Scheme,
    max_order: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum JetError {
    #[error("jet order of `{var}` exceeds the configured maximum {max}")]
    OrderOverflow { var: String, max: usize },
    #[error("`{var}` is not a jet variable of this convention")]
    NotAJetVariable { var: String },
}

pub const DEFAULT_MAX_ORDER: usize = 4;

impl JetConvention {
    /// 1+1 convention: coordinates `t, x`.
    pub fn one_plus_one() -> Self {
        JetConvention { scheme: Scheme::TimeSpace, max_order: DEFAULT_MAX_ORDER }
    }

    /// n+1 convention: coordinates `x0..xn` for spatial dimension count `n`.
    pub fn n_plus_one(n: usize) -> Self {
        assert!(n >= 1, "spatial dimension count must be at least 1");
        JetConvention { scheme: Scheme::Indexed(n), max_order: DEFAULT_MAX_ORDER }
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        assert!(max_order >= 1);
        self.max_order = max_order;
        self
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of coordinates (time included).
    pub fn axes(&self) -> usize {
        match self.scheme {
            Scheme::TimeSpace => 2,
            Scheme::Indexed(n) => n + 1,
        }
    }

    /// Spatial dimension count.
    pub fn spatial_dim(&self) -> usize {
        self.axes() - 1
    }

    pub fn coord_name(&self, axis: usize) -> String {
        assert!(axis < self.axes(), "axis {axis} out of range");
        match self.scheme {
            Scheme::TimeSpace => {
                if axis == 0 {
                    "t".to_owned()
                } else {
                    "x".to_owned()
                }
            }
            Scheme::Indexed(_) => format!("x{axis}"),
        }
    }

    pub fn coord_names(&self) -> Vec<String> {
        (0..self.axes()).map(|a| self.coord_name(a)).collect()
    }

    /// Canonical jet name for a per-axis derivative multi-index.
    pub fn jet_name(&self, multi: &[usize]) -> String {
        assert_eq!(multi.len(), self.axes());
        let order: usize = multi.iter().sum();
        if order == 0 {
            return "u".to_owned();
        }
        let mut name = String::from("u_");
        match self.scheme {
            // x's first, then t's: u_x, u_xx, u_xt, ...
            Scheme::TimeSpace => {
                for _ in 0..multi[1] {
                    name.push('x');
                }
                for _ in 0..multi[0] {
                    name.push('t');
                }
            }
            Scheme::Indexed(_) => {
                for (axis, count) in multi.iter().enumerate() {
                    for _ in 0..*count {
                        name.push_str(&format!("x{axis}"));
                    }
                }
            }
        }
        name
    }

    /// Parse a canonical jet name back into a multi-index. Returns `None` for
    /// anything that is not a jet variable of this convention.
    pub fn parse_jet(&self, name: &str) -> Option<Vec<usize>> {
        if name == "u" {
            return Some(vec![0; self.axes()]);
        }
        let rest = name.strip_prefix("u_")?;
        if rest.is_empty() {
            return None;
        }
        let mut multi = vec![0usize; self.axes()];
        match self.scheme {
            Scheme::TimeSpace => {
                let bytes = rest.as_bytes();
                let mut i = 0;
                while i < bytes.len() && bytes[i] == b'x' {
                    multi[1] += 1;
                    i += 1;
                }
                while i < bytes.len() && bytes[i] == b't' {
                    multi[0] += 1;
                    i += 1;
                }
                if i != bytes.len() {
                    return None;
                }
            }
            Scheme::Indexed(n) => {
                let mut s = rest;
                let mut last_axis = 0usize;
                while !s.is_empty() {
                    let tail = s.strip_prefix('x')?;
                    let digits: usize =
                        tail.bytes().take_while(|b| b.is_ascii_digit()).count();
                    if digits == 0 {
                        return None;
                    }
                    let axis: usize = tail[..digits].parse().ok()?;
                    if axis > n || axis < last_axis {
                        return None;
                    }
                    last_axis = axis;
                    multi[axis] += 1;
                    s = &tail[digits..];
                }
            }
        }
        Some(multi)
    }

    pub fn is_jet(&self, name: &str) -> bool {
        self.parse_jet(name).is_some()
    }

    /// Successor of a jet variable under the total derivative along `axis`.
    pub fn successor(&self, name: &str, axis: usize) -> Result<String, JetError> {
        let mut multi = self
            .parse_jet(name)
            .ok_or_else(|| JetError::NotAJetVariable { var: name.to_owned() })?;
        multi[axis] += 1;
        if multi.iter().sum::<usize>() > self.max_order {
            return Err(JetError::OrderOverflow { var: name.to_owned(), max: self.max_order });
        }
        Ok(self.jet_name(&multi))
    }

    /// All derivative multi-indices with total order `<= order`, ascending by
    /// total order.
    pub fn multi_indices(&self, order: usize) -> Vec<Vec<usize>> {
        let axes = self.axes();
        let mut out = Vec::new();
        for total in 0..=order {
            let mut current = vec![0usize; axes];
            collect_compositions(total, 0, &mut current, &mut out);
        }
        out
    }
}

fn collect_compositions(
    remaining: usize,
    axis: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if axis == current.len() - 1 {
        current[axis] = remaining;
        out.push(current.clone());
        current[axis] = 0;
        return;
    }
    for k in 0..=remaining {
        current[axis] = k;
        collect_compositions(remaining - k, axis + 1, current, out);
    }
    current[axis] = 0;
}

/// Total derivative of a jet expression along `axis`:
/// `D e = ∂e/∂coord(axis) + Σ (∂e/∂jet)·successor(jet)`.
/// Variables that are neither coordinates nor jet variables are treated as
/// constants.
pub fn total_derivative(e: &Expr, conv: &JetConvention, axis: usize) -> Result<Expr, JetError> {
    let coord = conv.coord_name(axis);
    let mut sum = e.differentiate(&coord);
    for var in e.variables() {
        if !conv.is_jet(&var) {
            continue;
        }
        let partial = e.differentiate(&var);
        if partial.is_zero() {
            continue;
        }
        let succ = conv.successor(&var, axis)?;
        sum = sum + partial * Expr::var(&succ);
    }
    Ok(simplify(&sum))
}

/// Symbolic derivatives of a coordinate expression `u`, indexed by jet
/// multi-index, up to total order `max_order`.
pub fn derivative_table(
    u: &Expr,
    conv: &JetConvention,
    max_order: usize,
) -> BTreeMap<Vec<usize>, Expr> {
    let mut table: BTreeMap<Vec<usize>, Expr> = BTreeMap::new();
    for multi in conv.multi_indices(max_order) {
        if multi.iter().sum::<usize>() == 0 {
            table.insert(multi, simplify(u));
            continue;
        }
        let axis = multi.iter().position(|&c| c > 0).expect("nonzero order");
        let mut parent = multi.clone();
        parent[axis] -= 1;
        let derived = table[&parent].differentiate(&conv.coord_name(axis));
        table.insert(multi, derived);
    }
    table
}

/// Replace every jet variable in `e` by the corresponding entry of a
/// derivative table, producing a pure coordinate expression.
pub fn compose_with_table(
    e: &Expr,
    conv: &JetConvention,
    table: &BTreeMap<Vec<usize>, Expr>,
) -> Result<Expr, JetError> {
    let mut map = BTreeMap::new();
    for var in e.variables() {
        if let Some(multi) = conv.parse_jet(&var) {
            let entry = table.get(&multi).ok_or(JetError::OrderOverflow {
                var: var.clone(),
                max: conv.max_order(),
            })?;
            map.insert(var, entry.clone());
        }
    }
    Ok(simplify(&e.substitute(&map)))
}
