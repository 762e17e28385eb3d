//! Rectangular grids and masked scalar fields.
//!
//! Sampling never hard-fails: cells where the point function errors are
//! masked with the failure reason, because implicit solutions have natural
//! domain boundaries (caustics, radicand sign changes).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::expr::Bindings;

/// One grid axis: `count` samples from `start` to `stop` inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn value(&self, index: usize) -> f64 {
        debug_assert!(index < self.count);
        if self.count == 1 {
            self.start
        } else {
            self.start + (self.stop - self.start) * index as f64 / (self.count - 1) as f64
        }
    }
}

/// Rectangular grid specification; row-major in axis declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GridError {
    #[error("invalid grid spec `{text}`: {message}")]
    Parse { text: String, message: String },
}

impl GridSpec {
    pub fn new(axes: Vec<AxisSpec>) -> Self {
        assert!(axes.iter().all(|a| a.count >= 1), "axis count must be >= 1");
        GridSpec { axes }
    }

    /// Parse the string form `name:start:stop:count[,name:start:stop:count…]`.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let err = |message: String| GridError::Parse { text: text.to_string(), message };
        let mut axes = Vec::new();
        for item in text.split(',') {
            let parts: Vec<&str> = item.split(':').collect();
            if parts.len() != 4 {
                return Err(err(format!("`{item}` is not name:start:stop:count")));
            }
            let name = parts[0].trim();
            if name.is_empty() {
                return Err(err(String::from("empty axis name")));
            }
            let start: f64 =
                parts[1].trim().parse().map_err(|_| err(format!("bad start `{}`", parts[1])))?;
            let stop: f64 =
                parts[2].trim().parse().map_err(|_| err(format!("bad stop `{}`", parts[2])))?;
            let count: usize =
                parts[3].trim().parse().map_err(|_| err(format!("bad count `{}`", parts[3])))?;
            if count == 0 {
                return Err(err(String::from("count must be >= 1")));
            }
            axes.push(AxisSpec { name: name.to_string(), start, stop, count });
        }
        if axes.is_empty() {
            return Err(err(String::from("no axes")));
        }
        Ok(GridSpec::new(axes))
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis indices of the flat cell index, row-major.
    pub fn indices(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = alloc::vec![0usize; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % axis.count;
            flat /= axis.count;
        }
        idx
    }

    /// Coordinate values of the flat cell index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.indices(flat)
            .iter()
            .zip(&self.axes)
            .map(|(i, a)| a.value(*i))
            .collect()
    }

    /// Coordinate values as variable bindings.
    pub fn bindings(&self, flat: usize) -> Bindings {
        let mut b = Bindings::new();
        for (value, axis) in self.point(flat).iter().zip(&self.axes) {
            b.set(&axis.name, *value);
        }
        b
    }
}

/// Sampled scalar field on a grid. `values[i]` is meaningful iff `mask[i]`
/// is `None`; masked cells carry a failure reason code.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub mask: Vec<Option<String>>,
}

impl GridField {
    pub fn unmasked(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.mask[*i].is_none())
            .map(|(i, v)| (i, *v))
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| m.is_some()).count()
    }
}

/// Evaluate `f` on every grid cell. Deterministic: cells are visited in
/// row-major order and failures are recorded per cell, never propagated.
pub fn sample_grid<F>(f: F, spec: &GridSpec) -> GridField
where
    F: Fn(&Bindings) -> Result<f64, String>,
{
    let len = spec.len();
    let mut values = Vec::with_capacity(len);
    let mut mask = Vec::with_capacity(len);
    for flat in 0..len {
        match f(&spec.bindings(flat)) {
            Ok(v) => {
                values.push(v);
                mask.push(None);
            }
            Err(reason) => {
                values.push(f64::NAN);
                mask.push(Some(reason));
            }
        }
    }
    GridField { spec: spec.clone(), values, mask }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_string_form() {
        let spec = GridSpec::parse("t:-0.2:-0.05:10,x:1:2:20").unwrap();
        assert_eq!(spec.axes.len(), 2);
        assert_eq!(spec.len(), 200);
        assert_eq!(spec.axes[0].name, "t");
        assert_eq!(spec.axes[1].value(19), 2.0);
        assert!(GridSpec::parse("t:0:1").is_err());
        assert!(GridSpec::parse("t:0:1:0").is_err());
    }

    #[test]
    fn constant_function_on_3x3() {
        let spec = GridSpec::parse("a:0:1:3,b:0:1:3").unwrap();
        let field = sample_grid(|_| Ok(7.5), &spec);
        assert_eq!(field.values, alloc::vec![7.5; 9]);
        assert_eq!(field.masked_count(), 0);
    }

    #[test]
    fn masks_out_of_domain_cells() {
        // Toy closed-form PBS: masked where the radicand -2 - x^2/(2t) < 0.
        use crate::expr::parse;
        let u = parse("sqrt(-2 - x^2/(2*t))").unwrap();
        let spec = GridSpec::parse("t:-0.2:-0.05:4,x:0.2:2:4").unwrap();
        let field = sample_grid(
            |b| u.evaluate(b).map_err(|e| e.to_string()),
            &spec,
        );
        let mut expected_masked = 0;
        for flat in 0..spec.len() {
            let p = spec.point(flat);
            let radicand = -2.0 - p[1] * p[1] / (2.0 * p[0]);
            if radicand < 0.0 {
                expected_masked += 1;
                assert!(field.mask[flat].is_some(), "cell {flat} should be masked");
            } else {
                assert!(field.mask[flat].is_none(), "cell {flat} should be live");
            }
        }
        assert!(expected_masked > 0, "test box should straddle the domain boundary");
        assert_eq!(field.masked_count(), expected_masked);
    }

    #[test]
    fn single_cell_grid() {
        let spec = GridSpec::parse("x:3:9:1").unwrap();
        let field = sample_grid(|b| Ok(b.get("x").unwrap() * 2.0), &spec);
        assert_eq!(field.values, alloc::vec![6.0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = GridSpec::parse("x:0:1:17,y:-1:1:11").unwrap();
        let f = |b: &Bindings| Ok(libm::sin(b.get("x").unwrap()) * b.get("y").unwrap());
        let a = sample_grid(f, &spec);
        let b = sample_grid(f, &spec);
        assert_eq!(a, b);
    }
}
