//! Natural cubic spline through the vertebral body centers.

use crate::error::{Error, Result};
use crate::grid::{UnitVector, Vec3, WorldPoint};

/// Interpolating natural cubic spline on cumulative chord length.
///
/// Each coordinate is an independent scalar spline over the shared knot
/// vector. With two control points the second derivatives vanish and the
/// curve is the straight segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineSpline {
    points: Vec<WorldPoint>,
    knots: Vec<f64>,
    second: Vec<Vec3>,
}

/// Fits the centerline through `points` in cranial-to-caudal order.
pub fn fit_centerline(points: &[WorldPoint]) -> Result<CenterlineSpline> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientVertebrae(n));
    }
    let mut knots = Vec::with_capacity(n);
    knots.push(0.0);
    for w in points.windows(2) {
        let h = (w[1] - w[0]).norm();
        if !(h > 0.0) {
            return Err(Error::DegenerateCenterline(format!(
                "consecutive control points coincide at ({:.3}, {:.3}, {:.3})",
                w[0].x, w[0].y, w[0].z
            )));
        }
        knots.push(knots.last().unwrap() + h);
    }

    let mut second = vec![Vec3::zeros(); n];
    if n > 2 {
        // Tridiagonal system for the interior second derivatives (Thomas algorithm).
        let m = n - 2;
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![Vec3::zeros(); m];
        for r in 0..m {
            let i = r + 1;
            diag[r] = 2.0 * (h[i - 1] + h[i]);
            upper[r] = h[i];
            rhs[r] = ((points[i + 1] - points[i]) / h[i] - (points[i] - points[i - 1]) / h[i - 1]) * 6.0;
        }
        for r in 1..m {
            let lower = h[r];
            let w = lower / diag[r - 1];
            diag[r] -= w * upper[r - 1];
            let prev = rhs[r - 1];
            rhs[r] -= prev * w;
        }
        second[m] = rhs[m - 1] / diag[m - 1];
        for r in (0..m - 1).rev() {
            second[r + 1] = (rhs[r] - second[r + 2] * upper[r]) / diag[r];
        }
    }

    Ok(CenterlineSpline { points: points.to_vec(), knots, second })
}

impl CenterlineSpline {
    pub fn control_points(&self) -> &[WorldPoint] {
        &self.points
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn segment(&self, t: f64) -> usize {
        let last = self.knots.len() - 2;
        match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }

    pub fn eval(&self, t: f64) -> WorldPoint {
        let i = self.segment(t);
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let h = t1 - t0;
        let (a, b) = (t1 - t, t - t0);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let (y0, y1) = (self.points[i].coords, self.points[i + 1].coords);
        let v = m0 * (a * a * a / (6.0 * h))
            + m1 * (b * b * b / (6.0 * h))
            + (y0 / h - m0 * (h / 6.0)) * a
            + (y1 / h - m1 * (h / 6.0)) * b;
        WorldPoint::from(v)
    }

    /// First derivative with respect to chord length.
    pub fn derivative(&self, t: f64) -> Vec3 {
        let i = self.segment(t);
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let h = t1 - t0;
        let (a, b) = (t1 - t, t - t0);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let (y0, y1) = (self.points[i].coords, self.points[i + 1].coords);
        -m0 * (a * a / (2.0 * h)) + m1 * (b * b / (2.0 * h)) - (y0 / h - m0 * (h / 6.0)) + (y1 / h - m1 * (h / 6.0))
    }
}

/// Unit up and down directions at control point `k`. Down follows the
/// cranial-to-caudal traversal of the control points.
pub fn craniocaudal_axis(spline: &CenterlineSpline, k: usize) -> Result<(UnitVector, UnitVector)> {
    if k >= spline.len() {
        return Err(Error::DegenerateCenterline(format!(
            "control point {k} out of range (0..{})",
            spline.len()
        )));
    }
    let d = spline.derivative(spline.knots[k]);
    let norm = d.norm();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::DegenerateCenterline(format!("zero tangent at control point {k}")));
    }
    let down = UnitVector::new_unchecked(d / norm);
    Ok((-down, down))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn collinear_points_have_constant_tangent() {
        let pts: Vec<_> = [0.0, 3.0, 7.0, 8.0, 20.0].iter().map(|&z| WorldPoint::new(0.0, 0.0, z)).collect();
        let s = fit_centerline(&pts).unwrap();
        for k in 0..pts.len() {
            let (up, down) = craniocaudal_axis(&s, k).unwrap();
            assert_abs_diff_eq!((down.into_inner() - Vec3::z()).norm(), 0.0, epsilon = 1e-9);
            assert_eq!(up.into_inner(), -down.into_inner());
        }
    }

    #[test]
    fn two_points_give_segment() {
        let s = fit_centerline(&[WorldPoint::new(0.0, 0.0, 10.0), WorldPoint::new(0.0, 10.0, 0.0)]).unwrap();
        let expect = Vec3::new(0.0, 10.0, -10.0).normalize();
        for k in 0..2 {
            let (_, down) = craniocaudal_axis(&s, k).unwrap();
            assert_abs_diff_eq!((down.into_inner() - expect).norm(), 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!((s.derivative(3.0).normalize() - expect).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(down_component(&s), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    fn down_component(s: &CenterlineSpline) -> f64 {
        craniocaudal_axis(s, 0).unwrap().1.y
    }

    #[test]
    fn vertical_stack_downward() {
        let pts: Vec<_> = (0..5).map(|i| WorldPoint::new(0.0, 0.0, -30.0 * i as f64)).collect();
        let s = fit_centerline(&pts).unwrap();
        let (up, down) = craniocaudal_axis(&s, 2).unwrap();
        assert_abs_diff_eq!((down.into_inner() - Vec3::new(0.0, 0.0, -1.0)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((up.into_inner() - Vec3::z()).norm(), 0.0, epsilon = 1e-12);
    }

    fn arc(step_deg: f64) -> Vec<WorldPoint> {
        (0..9)
            .map(|i| {
                let th = (step_deg * (i as f64 - 4.0)).to_radians();
                WorldPoint::new(100.0 * th.sin(), 0.0, 100.0 * th.cos())
            })
            .collect()
    }

    fn radial_errors_deg(pts: &[WorldPoint]) -> Vec<f64> {
        let s = fit_centerline(pts).unwrap();
        (0..pts.len())
            .map(|k| {
                let (_, down) = craniocaudal_axis(&s, k).unwrap();
                down.dot(&pts[k].coords.normalize()).abs().asin().to_degrees()
            })
            .collect()
    }

    #[test]
    fn circular_arc_tangents_are_orthogonal_to_radius() {
        // 5 degree spacing on a 100 mm radius.
        let err = radial_errors_deg(&arc(5.0));
        for (k, e) in err.iter().enumerate().take(8).skip(1) {
            assert!(*e < 0.5, "control point {k}: {e} deg off orthogonal");
        }
    }

    #[test]
    fn arc_end_effect_matches_reference_natural_spline() {
        // Frozen from scipy.interpolate.CubicSpline(bc_type="natural") on the
        // same chord-length knots, 10 degree spacing.
        let expect = [2.892, 0.765, 0.194, 0.046, 0.0, 0.046, 0.194, 0.765, 2.892];
        for (got, want) in radial_errors_deg(&arc(10.0)).iter().zip(expect) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-3);
        }
    }

    #[test]
    fn interpolates_control_points() {
        let pts = vec![
            WorldPoint::new(1.0, 2.0, 3.0),
            WorldPoint::new(4.0, -2.0, 30.0),
            WorldPoint::new(-7.0, 5.0, 61.0),
            WorldPoint::new(2.0, 1.0, 95.5),
            WorldPoint::new(0.0, 0.0, 120.0),
        ];
        let s = fit_centerline(&pts).unwrap();
        for (i, p) in pts.iter().enumerate() {
            assert!((s.eval(s.knots()[i]) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn natural_boundary_second_derivative_vanishes() {
        let pts = vec![
            WorldPoint::new(0.0, 0.0, 0.0),
            WorldPoint::new(5.0, 0.0, 30.0),
            WorldPoint::new(5.0, 3.0, 60.0),
            WorldPoint::new(-2.0, 1.0, 90.0),
        ];
        let s = fit_centerline(&pts).unwrap();
        let eps = 1e-4;
        for t in [0.0, *s.knots().last().unwrap()] {
            let t_in = if t == 0.0 { eps } else { t - eps };
            let d2 = (s.derivative(t_in) - s.derivative(t)) / (t_in - t);
            // Second derivative at the end is zero, so the slope of the
            // derivative near the end is O(eps).
            assert!(d2.norm() < 1e-2, "{d2:?}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_centerline(&[WorldPoint::origin()]), Err(Error::InsufficientVertebrae(1))));
        let p = WorldPoint::new(1.0, 1.0, 1.0);
        assert!(matches!(fit_centerline(&[p, p]), Err(Error::DegenerateCenterline(_))));
        let s = fit_centerline(&[p, WorldPoint::origin()]).unwrap();
        assert!(craniocaudal_axis(&s, 2).is_err());
    }
}
