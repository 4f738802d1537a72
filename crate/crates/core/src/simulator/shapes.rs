use super::{invalid, SimulatorError};
use crate::numeric::{interp_linear, GridFunction};
use serde::{Deserialize, Serialize};

/// Cubic interpolant through a handful of anchor points with zero
/// curvature at the ends, continued linearly beyond them. Used to build
/// smooth ground-truth curves that the estimator's own function class
/// can represent, so any disagreement in tests measures estimation
/// error rather than approximation error.
#[derive(Debug, Clone)]
pub(crate) struct NaturalInterpolant {
    knots: Vec<f64>,
    values: Vec<f64>,
    // second derivative at each knot; first and last are zero
    curvature: Vec<f64>,
}

impl NaturalInterpolant {
    pub(crate) fn new(knots: &[f64], values: &[f64]) -> Result<NaturalInterpolant, SimulatorError> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(invalid(format!(
                "{} anchor points with {} values",
                knots.len(),
                values.len()
            )));
        }
        if !knots.windows(2).all(|w| w[1] > w[0]) {
            return Err(invalid("anchor points must strictly increase"));
        }
        if knots.iter().chain(values).any(|v| !v.is_finite()) {
            return Err(invalid("anchor points and values must be finite"));
        }

        let k = knots.len();
        let mut curvature = vec![0.0; k];
        if k > 2 {
            // tridiagonal system for the interior second derivatives
            let m = k - 2;
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h[i + 1]
                        - (values[i + 1] - values[i]) / h[i]);
            }
            // Thomas sweep (lower diagonal equals the previous upper)
            for i in 1..m {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            curvature[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                curvature[i + 1] = (rhs[i] - upper[i] * curvature[i + 2]) / diag[i];
            }
        }
        Ok(NaturalInterpolant {
            knots: knots.to_vec(),
            values: values.to_vec(),
            curvature,
        })
    }

    fn segment(&self, y: f64) -> usize {
        let k = self.knots.len();
        match self.knots[1..k - 1].iter().position(|t| y < *t) {
            Some(i) => i,
            None => k - 2,
        }
    }

    fn slope_at_knot(&self, i: usize) -> f64 {
        let right_end = i == self.knots.len() - 1;
        let seg = if right_end { i - 1 } else { i };
        let h = self.knots[seg + 1] - self.knots[seg];
        let secant = (self.values[seg + 1] - self.values[seg]) / h;
        if right_end {
            secant + h * (2.0 * self.curvature[seg + 1] + self.curvature[seg]) / 6.0
        } else {
            secant - h * (2.0 * self.curvature[seg] + self.curvature[seg + 1]) / 6.0
        }
    }

    pub(crate) fn evaluate(&self, y: f64) -> f64 {
        let k = self.knots.len();
        let (lo, hi) = (self.knots[0], self.knots[k - 1]);
        if y < lo {
            return self.values[0] + (y - lo) * self.slope_at_knot(0);
        }
        if y > hi {
            return self.values[k - 1] + (y - hi) * self.slope_at_knot(k - 1);
        }
        let i = self.segment(y);
        let h = self.knots[i + 1] - self.knots[i];
        let d = y - self.knots[i];
        let b = (self.values[i + 1] - self.values[i]) / h
            - h * (2.0 * self.curvature[i] + self.curvature[i + 1]) / 6.0;
        let c = self.curvature[i] / 2.0;
        let e = (self.curvature[i + 1] - self.curvature[i]) / (6.0 * h);
        self.values[i] + d * (b + d * (c + d * e))
    }
}

const SHAPE_KNOTS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
const MONOTONE_VALUES: [f64; 4] = [-0.5, -0.3, 0.3, 0.5];
const NONMONOTONE_VALUES: [f64; 4] = [-0.1, 0.5, -0.4, 0.3];

/// Ground-truth feedback curves. The named variants pair a smooth
/// backbone with an optional step at zero log-odds; `Custom` evaluates
/// a user-supplied sampled curve, constant beyond its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackShape {
    ContinuousMonotone,
    MonotoneWithJump,
    ContinuousNonmonotone,
    NonmonotoneWithJump,
    Null,
    JumpOnly,
    Custom { grid: GridFunction },
}

impl FeedbackShape {
    fn backbone(&self) -> Option<(&'static [f64; 4], f64)> {
        match self {
            FeedbackShape::ContinuousMonotone => Some((&MONOTONE_VALUES, 0.0)),
            FeedbackShape::MonotoneWithJump => Some((&MONOTONE_VALUES, 0.5)),
            FeedbackShape::ContinuousNonmonotone => Some((&NONMONOTONE_VALUES, 0.0)),
            FeedbackShape::NonmonotoneWithJump => Some((&NONMONOTONE_VALUES, 0.4)),
            FeedbackShape::Null => None,
            FeedbackShape::JumpOnly => None,
            FeedbackShape::Custom { .. } => None,
        }
    }

    fn jump(&self) -> f64 {
        match self {
            FeedbackShape::MonotoneWithJump => 0.5,
            FeedbackShape::NonmonotoneWithJump | FeedbackShape::JumpOnly => 0.4,
            _ => 0.0,
        }
    }

    /// True feedback at each point; defined on all of the real line.
    pub fn evaluate(&self, points: &[f64]) -> Result<Vec<f64>, SimulatorError> {
        let jump = self.jump();
        let mut out = match self {
            FeedbackShape::Custom { grid } => {
                let clamped: Vec<f64> = points
                    .iter()
                    .map(|y| y.clamp(grid.start(), grid.end()))
                    .collect();
                interp_linear(grid, &clamped)?
            }
            _ => match self.backbone() {
                Some((values, _)) => {
                    let interp = NaturalInterpolant::new(&SHAPE_KNOTS, values.as_slice())?;
                    points.iter().map(|y| interp.evaluate(*y)).collect()
                }
                None => vec![0.0; points.len()],
            },
        };
        if jump != 0.0 {
            for (v, y) in out.iter_mut().zip(points) {
                if *y > 0.0 {
                    *v += jump;
                }
            }
        }
        Ok(out)
    }

    /// Interval the shape is interesting on; reporting grids default to it.
    pub fn support_hint(&self) -> [f64; 2] {
        match self {
            FeedbackShape::Custom { grid } => [grid.start(), grid.end()],
            _ => [SHAPE_KNOTS[0], SHAPE_KNOTS[3]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // frozen reference evaluations of the two smooth backbones
    const MONOTONE_CASES: [(f64, f64); 10] = [
        (-3.0, -0.5),
        (-2.5, -0.48125),
        (-1.7, -0.42005),
        (-1.0, -0.3),
        (-0.4, -0.13119999999999998),
        (0.0, 0.0),
        (0.6, 0.19280000000000003),
        (1.0, 0.3),
        (2.2, 0.4648),
        (3.0, 0.5),
    ];
    const NONMONOTONE_CASES: [(f64, f64); 10] = [
        (-3.0, -0.1),
        (-2.5, 0.16875),
        (-1.7, 0.48019000000000006),
        (-1.0, 0.5),
        (-0.4, 0.2671),
        (0.0, 0.042_500_000_000_000_04),
        (0.6, -0.274_400_000_000_000_1),
        (1.0, -0.4),
        (2.2, -0.15696),
        (3.0, 0.3),
    ];

    #[test]
    fn smooth_backbones_match_reference_values() {
        for (shape, cases) in [
            (FeedbackShape::ContinuousMonotone, &MONOTONE_CASES),
            (FeedbackShape::ContinuousNonmonotone, &NONMONOTONE_CASES),
        ] {
            let pts: Vec<f64> = cases.iter().map(|c| c.0).collect();
            let got = shape.evaluate(&pts).unwrap();
            for ((y, want), g) in cases.iter().zip(got) {
                assert!((g - want).abs() <= 1e-12, "{shape:?} at {y}: {g} vs {want}");
            }
        }
    }

    #[test]
    fn extension_beyond_anchors_is_linear() {
        // frozen reference values at -5 and 4.5
        let m = FeedbackShape::ContinuousMonotone
            .evaluate(&[-5.0, 4.5])
            .unwrap();
        assert!((m[0] - -0.566_666_666_666_666_7).abs() <= 1e-12);
        assert!((m[1] - 0.55).abs() <= 1e-12);
        let nm = FeedbackShape::ContinuousNonmonotone
            .evaluate(&[-5.0, 4.5])
            .unwrap();
        assert!((nm[0] - -1.2066666666666668).abs() <= 1e-12);
        assert!((nm[1] - 1.2199999999999993).abs() <= 1e-12);

        // three collinear points on each side
        let f = FeedbackShape::ContinuousMonotone;
        let left = f.evaluate(&[-8.0, -6.0, -4.0]).unwrap();
        assert!((left[1] - 0.5 * (left[0] + left[2])).abs() <= 1e-12);
        let right = f.evaluate(&[4.0, 6.0, 8.0]).unwrap();
        assert!((right[1] - 0.5 * (right[0] + right[2])).abs() <= 1e-12);
    }

    #[test]
    fn boundary_curvature_vanishes() {
        let interp = NaturalInterpolant::new(&SHAPE_KNOTS, &NONMONOTONE_VALUES).unwrap();
        let h = 1e-4;
        for y in [-3.0, 3.0] {
            let inward = if y < 0.0 { 1.0 } else { -1.0 };
            let a = interp.evaluate(y);
            let b = interp.evaluate(y + inward * h);
            let c = interp.evaluate(y + inward * 2.0 * h);
            let second = (c - 2.0 * b + a) / (h * h);
            assert!(second.abs() <= 1e-3, "curvature {second} at {y}");
        }
    }

    #[test]
    fn jumps_are_strict_at_zero() {
        let s = FeedbackShape::JumpOnly;
        let v = s.evaluate(&[-1.0, 0.0, 1e-12, 1.0]).unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 0.0);
        assert_eq!(v[2], 0.4);
        assert_eq!(v[3], 0.4);

        let mj = FeedbackShape::MonotoneWithJump;
        let base = FeedbackShape::ContinuousMonotone;
        let pts = [-2.0, -0.1, 0.3, 2.4];
        let a = mj.evaluate(&pts).unwrap();
        let b = base.evaluate(&pts).unwrap();
        for i in 0..pts.len() {
            let want = b[i] + if pts[i] > 0.0 { 0.5 } else { 0.0 };
            assert!((a[i] - want).abs() <= 1e-15);
        }
    }

    #[test]
    fn null_shape_is_identically_zero() {
        let v = FeedbackShape::Null
            .evaluate(&[-10.0, -0.5, 0.0, 0.5, 10.0])
            .unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn custom_shape_interpolates_and_clamps() {
        let grid = GridFunction::new(-1.0, 0.5, vec![0.0, 1.0, 4.0, 9.0, 16.0]).unwrap();
        let s = FeedbackShape::Custom { grid };
        let v = s.evaluate(&[-1.0, -0.75, 0.25, 1.0, -5.0, 7.0]).unwrap();
        assert!((v[0] - 0.0).abs() <= 1e-12);
        assert!((v[1] - 0.5).abs() <= 1e-12);
        assert!((v[2] - 6.5).abs() <= 1e-12);
        assert!((v[3] - 16.0).abs() <= 1e-12);
        // constant beyond the sampled range
        assert_eq!(v[4], 0.0);
        assert_eq!(v[5], 16.0);
    }

    #[test]
    fn shape_serialization_round_trips() {
        for shape in [
            FeedbackShape::ContinuousMonotone,
            FeedbackShape::JumpOnly,
            FeedbackShape::Custom {
                grid: GridFunction::new(0.0, 1.0, vec![1.0, 2.0]).unwrap(),
            },
        ] {
            let text = serde_json::to_string(&shape).unwrap();
            let back: FeedbackShape = serde_json::from_str(&text).unwrap();
            assert_eq!(back, shape);
        }
        let named = serde_json::to_string(&FeedbackShape::ContinuousMonotone).unwrap();
        assert_eq!(named, r#"{"kind":"continuous_monotone"}"#);
        // invalid custom grids are rejected at parse time
        let bad =
            r#"{"kind":"custom","grid":{"grid_start":0.0,"grid_step":-1.0,"values":[1.0,2.0]}}"#;
        assert!(serde_json::from_str::<FeedbackShape>(bad).is_err());
    }

    #[test]
    fn interpolant_rejects_bad_anchors() {
        assert!(NaturalInterpolant::new(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(NaturalInterpolant::new(&[0.0, 1.0], &[1.0]).is_err());
        assert!(NaturalInterpolant::new(&[0.0], &[1.0]).is_err());
        assert!(NaturalInterpolant::new(&[0.0, 1.0], &[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn two_anchor_interpolant_is_the_connecting_line() {
        let interp = NaturalInterpolant::new(&[-1.0, 3.0], &[2.0, 4.0]).unwrap();
        for (y, want) in [(-1.0, 2.0), (1.0, 3.0), (3.0, 4.0), (5.0, 5.0), (-3.0, 1.0)] {
            assert!((interp.evaluate(y) - want).abs() <= 1e-12);
        }
    }
}
