use super::NumericError;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

/// A function sampled on a uniform grid: value `k` sits at
/// `grid_start + k * grid_step`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    grid_start: f64,
    grid_step: f64,
    values: Vec<f64>,
}

// deserialization funnels through `new` so invalid grids cannot sneak
// in from config files
impl<'de> Deserialize<'de> for GridFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            grid_start: f64,
            grid_step: f64,
            values: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        GridFunction::new(raw.grid_start, raw.grid_step, raw.values).map_err(D::Error::custom)
    }
}

impl GridFunction {
    pub fn new(grid_start: f64, grid_step: f64, values: Vec<f64>) -> Result<Self, NumericError> {
        if !grid_start.is_finite() || !grid_step.is_finite() || grid_step <= 0.0 {
            return Err(NumericError::InvalidGrid {
                context: format!("start {grid_start}, step {grid_step}"),
            });
        }
        if values.len() < 2 {
            return Err(NumericError::InvalidGrid {
                context: format!("{} values (need at least 2)", values.len()),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(NumericError::NonFinite { index, value });
        }
        Ok(GridFunction {
            grid_start,
            grid_step,
            values,
        })
    }

    pub fn start(&self) -> f64 {
        self.grid_start
    }

    pub fn step(&self) -> f64 {
        self.grid_step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires >= 2 values
    }

    pub fn end(&self) -> f64 {
        self.grid_start + self.grid_step * (self.values.len() - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.grid_start + self.grid_step * k as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Sample `f` on the closed span `[lo, hi]` with the given step.
    pub fn sample(
        lo: f64,
        hi: f64,
        step: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, NumericError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(NumericError::InvalidGrid {
                context: format!("span [{lo}, {hi}]"),
            });
        }
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let values = (0..n).map(|k| f(lo + step * k as f64)).collect();
        GridFunction::new(lo, step, values)
    }
}

/// Piecewise-linear interpolation of `g` at each query point.
///
/// No extrapolation: queries outside the span fail (a hair of slack,
/// 1e-9 of a step, absorbs float noise at the ends). Queries that land on
/// a node return the stored value exactly.
pub fn interp_linear(g: &GridFunction, query_points: &[f64]) -> Result<Vec<f64>, NumericError> {
    let lo = g.start();
    let hi = g.end();
    let slack = g.step() * 1e-9;
    let values = g.values();
    let mut out = Vec::with_capacity(query_points.len());
    for (index, &q) in query_points.iter().enumerate() {
        if !q.is_finite() {
            return Err(NumericError::NonFinite { index, value: q });
        }
        if q < lo - slack || q > hi + slack {
            return Err(NumericError::OutOfRange {
                index,
                value: q,
                lo,
                hi,
            });
        }
        let pos = ((q - lo) / g.step()).clamp(0.0, (values.len() - 1) as f64);
        let k = (pos.floor() as usize).min(values.len() - 2);
        let frac = pos - k as f64;
        let v = if frac <= 1e-9 {
            values[k]
        } else if frac >= 1.0 - 1e-9 {
            values[k + 1]
        } else {
            values[k] + frac * (values[k + 1] - values[k])
        };
        out.push(v);
    }
    Ok(out)
}
