//! Per-vertebra local coordinate frames.
//!
//! The superior axis comes from the centerline spline. The posterior axis
//! points from the vertebral body center toward the center of the posterior
//! elements, re-orthogonalized against the superior axis. The lateral axis
//! completes the triad as `superior × posterior`, which in RAS world space
//! points to the subject's anatomical right.
//!
//! Three strategies for the posterior center are provided. The two 3D center
//! of mass variants serve as baselines for [`OrientationMethod::Projection2d`],
//! which flattens the arcus and spinous process onto the axial plane and
//! takes the center of the projected footprint, so that structures elongated
//! along the cranio-caudal axis stop dominating the estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anatomy::{SpineInstance, SubregionLabel, VertebraInstance};
use crate::error::{Error, Result};
use crate::grid::{LabelVolume, UnitVector, Vec3, WorldPoint};

/// Orthonormal right-handed frame anchored at the vertebral body center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin: WorldPoint,
    pub superior: UnitVector,
    pub posterior: UnitVector,
    pub lateral: UnitVector,
}

impl LocalFrame {
    pub fn inferior(&self) -> Vec3 {
        -self.superior.into_inner()
    }

    pub fn anterior(&self) -> Vec3 {
        -self.posterior.into_inner()
    }

    /// `-lateral`; the subject's left when the frame lives in RAS space.
    pub fn left(&self) -> Vec3 {
        -self.lateral.into_inner()
    }

    pub fn right(&self) -> Vec3 {
        self.lateral.into_inner()
    }

    /// World position of local coordinates `(lateral, posterior, superior)`.
    pub fn to_world(&self, local: Vec3) -> WorldPoint {
        self.origin + self.lateral.into_inner() * local.x + self.posterior.into_inner() * local.y + self.superior.into_inner() * local.z
    }

    /// Determinant of `[superior, posterior, lateral]`; +1 for a valid frame.
    pub fn determinant(&self) -> f64 {
        self.superior.dot(&self.posterior.cross(&self.lateral))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum OrientationMethod {
    /// 3D center of mass of all eight posterior subregions.
    #[serde(rename = "cms3d-all")]
    Cms3dAllPosterior,
    /// 3D center of mass of arcus and spinous process.
    #[serde(rename = "cms3d-arcspin")]
    Cms3dArcusSpinosus,
    /// Center of the arcus and spinous process footprint projected onto the axial plane.
    #[serde(rename = "proj2d")]
    #[default]
    Projection2d,
}

impl OrientationMethod {
    pub const ALL: [OrientationMethod; 3] = [
        OrientationMethod::Cms3dAllPosterior,
        OrientationMethod::Cms3dArcusSpinosus,
        OrientationMethod::Projection2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OrientationMethod::Cms3dAllPosterior => "cms3d-all",
            OrientationMethod::Cms3dArcusSpinosus => "cms3d-arcspin",
            OrientationMethod::Projection2d => "proj2d",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            OrientationMethod::Cms3dAllPosterior => "3D CMS (all posterior structures)",
            OrientationMethod::Cms3dArcusSpinosus => "3D CMS (arcus and spinosus)",
            OrientationMethod::Projection2d => "2D projection",
        }
    }

    fn structures(self) -> &'static [SubregionLabel] {
        match self {
            OrientationMethod::Cms3dAllPosterior => &SubregionLabel::POSTERIOR,
            _ => &[SubregionLabel::Arcus, SubregionLabel::Spinosus],
        }
    }
}

impl fmt::Display for OrientationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrientationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OrientationMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown orientation method '{s}' (expected cms3d-all, cms3d-arcspin or proj2d)"))
    }
}

/// Unnormalized vector from the vertebral body center toward the posterior
/// elements, as estimated by `method`.
pub fn posterior_raw(vol: &LabelVolume, vertebra: &VertebraInstance, up: &UnitVector, method: OrientationMethod) -> Result<Vec3> {
    let structures = method.structures();
    if method != OrientationMethod::Cms3dAllPosterior {
        for &s in structures {
            if vertebra.is_empty(s) {
                return Err(Error::EmptySubregion(format!("{}: {s}", vertebra.level)));
            }
        }
    }
    let corpus = vertebra.corpus_cms();
    let raw = match method {
        OrientationMethod::Cms3dAllPosterior | OrientationMethod::Cms3dArcusSpinosus => {
            vertebra.centroid(vol, structures)? - corpus
        }
        OrientationMethod::Projection2d => projected_footprint_center(vol, vertebra, up, structures)? - corpus,
    };
    if !(raw.norm() >= 1e-6) {
        return Err(Error::DegenerateOrientation(format!(
            "{}: posterior center coincides with the vertebral body center",
            vertebra.level
        )));
    }
    Ok(raw)
}

/// Two unit vectors spanning the plane orthogonal to `up`.
pub fn plane_basis(up: &UnitVector) -> (Vec3, Vec3) {
    let u = up.into_inner();
    let axis = (0..3).min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap();
    let mut seed = Vec3::zeros();
    seed[axis] = 1.0;
    let e1 = (seed - u * seed.dot(&u)).normalize();
    let e2 = u.cross(&e1);
    (e1, e2)
}

/// In-plane cell axes for the footprint: the first points from the corpus
/// toward the posterior centroid, so the cell layout turns with the anatomy.
/// Falls back to [`plane_basis`] when that direction is parallel to `up`.
fn footprint_basis(toward: &Vec3, up: &UnitVector) -> (Vec3, Vec3) {
    match orthogonalize(toward, up) {
        Ok(e1) => (e1.into_inner(), up.cross(&e1)),
        Err(_) => plane_basis(up),
    }
}

/// Projects every voxel of `structures` onto the plane through the corpus
/// center orthogonal to `up`, rasterizes the projection into square cells of
/// the finest voxel spacing and returns the mean over occupied cells,
/// re-embedded in 3D. Each cell counts once however many voxels land in it.
fn projected_footprint_center(
    vol: &LabelVolume,
    vertebra: &VertebraInstance,
    up: &UnitVector,
    structures: &[SubregionLabel],
) -> Result<WorldPoint> {
    let c = vertebra.corpus_cms();
    let (e1, e2) = footprint_basis(&(vertebra.centroid(vol, structures)? - c), up);
    let cell = vol.min_spacing();
    let frame = vol.frame();
    let [nx, ny, _] = vol.dims();

    let mut samples: Vec<(i64, i64, f64, f64)> = Vec::new();
    for &s in structures {
        for &idx in vertebra.voxels(s) {
            let idx = idx as usize;
            let p = frame.voxel_to_world([(idx % nx) as f64, ((idx / nx) % ny) as f64, (idx / (nx * ny)) as f64]);
            let d = p - c;
            let (a, b) = (d.dot(&e1), d.dot(&e2));
            samples.push(((a / cell).floor() as i64, (b / cell).floor() as i64, a, b));
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptySubregion(format!("{}: projected posterior elements", vertebra.level)));
    }
    samples.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)).then(x.2.total_cmp(&y.2)).then(x.3.total_cmp(&y.3)));

    let (mut sum_a, mut sum_b, mut cells) = (0.0, 0.0, 0usize);
    let mut i = 0;
    while i < samples.len() {
        let key = (samples[i].0, samples[i].1);
        let (mut ca, mut cb, mut n) = (0.0, 0.0, 0usize);
        while i < samples.len() && (samples[i].0, samples[i].1) == key {
            ca += samples[i].2;
            cb += samples[i].3;
            n += 1;
            i += 1;
        }
        sum_a += ca / n as f64;
        sum_b += cb / n as f64;
        cells += 1;
    }
    let (a, b) = (sum_a / cells as f64, sum_b / cells as f64);
    Ok(c + e1 * a + e2 * b)
}

/// Removes the `up` component and normalizes.
pub fn orthogonalize(raw: &Vec3, up: &UnitVector) -> Result<UnitVector> {
    let norm = raw.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateOrientation("zero posterior vector".into()));
    }
    let v = raw - up.into_inner() * raw.dot(up);
    // Sine of the angle between raw and up.
    if v.norm() / norm < 1e-4 {
        return Err(Error::DegenerateOrientation("posterior vector is parallel to the cranio-caudal axis".into()));
    }
    Ok(UnitVector::new_normalize(v))
}

/// Completes `(up, posterior)` with `lateral = up × posterior`.
pub fn build_frame(origin: WorldPoint, up: UnitVector, posterior: UnitVector) -> Result<LocalFrame> {
    let d = up.dot(&posterior);
    if d.abs() > 1e-6 {
        return Err(Error::DegenerateOrientation(format!("axes are not orthogonal (dot {d:.3e})")));
    }
    let lateral = UnitVector::new_normalize(up.cross(&posterior));
    Ok(LocalFrame { origin, superior: up, posterior, lateral })
}

/// Angle between two unit vectors in degrees, in `[0, 180]`.
pub fn angular_deviation(a: &UnitVector, b: &UnitVector) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Local frame of the `k`-th vertebra (cranio-caudal order) of a spine.
pub fn estimate_frame(spine: &SpineInstance, k: usize, method: OrientationMethod) -> Result<LocalFrame> {
    let vertebra = &spine.vertebrae()[k];
    let (up, _) = spine.craniocaudal_axis(k)?;
    let raw = posterior_raw(spine.volume(), vertebra, &up, method)?;
    let posterior = orthogonalize(&raw, &up)?;
    build_frame(vertebra.corpus_cms(), up, posterior)
}

/// Aggregate angular error of one method over an evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationStats {
    pub method: OrientationMethod,
    pub mean_deg: f64,
    pub std_deg: f64,
    pub frac_le_3: f64,
    pub frac_le_10: f64,
    /// Evaluated vertebrae, failures included.
    pub n: usize,
    /// Vertebrae whose frame could not be computed; they count against both fractions.
    pub failures: usize,
}

impl OrientationStats {
    /// `deviations` holds one entry per evaluated vertebra, `None` for failures.
    /// Mean and population standard deviation cover the successful entries.
    pub fn from_deviations(method: OrientationMethod, deviations: &[Option<f64>]) -> Result<Self> {
        let n = deviations.len();
        if n == 0 {
            return Err(Error::InvalidConfig("orientation evaluation needs at least one vertebra".into()));
        }
        let ok: Vec<f64> = deviations.iter().flatten().copied().collect();
        let failures = n - ok.len();
        let (mean, std) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let m = ok.iter().sum::<f64>() / ok.len() as f64;
            let var = ok.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / ok.len() as f64;
            (m, var.sqrt())
        };
        let frac = |t: f64| ok.iter().filter(|&&d| d <= t).count() as f64 / n as f64;
        Ok(Self {
            method,
            mean_deg: mean,
            std_deg: std,
            frac_le_3: frac(3.0),
            frac_le_10: frac(10.0),
            n,
            failures,
        })
    }
}

/// One evaluation item: a spine, the vertebra to score and its true posterior direction.
pub struct OrientationCase<'a> {
    pub spine: &'a SpineInstance,
    pub v_id: u32,
    pub truth_posterior: UnitVector,
}

/// Scores `method` against ground truth over all cases.
pub fn evaluate_orientation(cases: &[OrientationCase<'_>], method: OrientationMethod) -> Result<OrientationStats> {
    let deviations: Vec<Option<f64>> = cases
        .iter()
        .map(|c| {
            let k = c.spine.vertebrae().iter().position(|v| v.v_id == c.v_id)?;
            let frame = estimate_frame(c.spine, k, method).ok()?;
            Some(angular_deviation(&frame.posterior, &c.truth_posterior))
        })
        .collect();
    OrientationStats::from_deviations(method, &deviations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit(x: f64, y: f64, z: f64) -> UnitVector {
        UnitVector::new_normalize(Vec3::new(x, y, z))
    }

    #[test]
    fn orthogonalize_examples() {
        let up = unit(0.0, 0.0, 1.0);
        let p = orthogonalize(&Vec3::new(0.0, -1.0, 0.0), &up).unwrap();
        assert_eq!(p.into_inner(), Vec3::new(0.0, -1.0, 0.0));
        let p = orthogonalize(&Vec3::new(0.0, -1.0, -1.0), &up).unwrap();
        assert_abs_diff_eq!((p.into_inner() - Vec3::new(0.0, -1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert!(matches!(orthogonalize(&Vec3::new(0.0, 0.0, 3.0), &up), Err(Error::DegenerateOrientation(_))));
        assert!(orthogonalize(&Vec3::zeros(), &up).is_err());
    }

    #[test]
    fn build_frame_handedness() {
        let f = build_frame(WorldPoint::origin(), unit(0.0, 0.0, 1.0), unit(0.0, -1.0, 0.0)).unwrap();
        assert_eq!(f.lateral.into_inner(), Vec3::new(1.0, 0.0, 0.0));
        let f = build_frame(WorldPoint::origin(), unit(0.0, 0.0, 1.0), unit(-1.0, 0.0, 0.0)).unwrap();
        assert_eq!(f.lateral.into_inner(), Vec3::new(0.0, -1.0, 0.0));
        assert!(build_frame(WorldPoint::origin(), unit(0.0, 0.0, 1.0), unit(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn angular_deviation_examples() {
        let a = unit(1.0, 0.0, 0.0);
        assert_eq!(angular_deviation(&a, &a), 0.0);
        assert_abs_diff_eq!(angular_deviation(&a, &unit(0.0, 1.0, 0.0)), 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angular_deviation(&a, &unit(1.0, 1.0, 0.0)), 45.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angular_deviation(&a, &unit(-1.0, 0.0, 0.0)), 180.0, epsilon = 1e-12);
    }

    #[test]
    fn stats_examples() {
        let s = OrientationStats::from_deviations(OrientationMethod::Projection2d, &[Some(0.0); 4]).unwrap();
        assert_eq!((s.mean_deg, s.frac_le_3, s.frac_le_10), (0.0, 1.0, 1.0));
        let s = OrientationStats::from_deviations(OrientationMethod::Projection2d, &[Some(2.0), Some(4.0), Some(12.0)]).unwrap();
        assert_abs_diff_eq!(s.mean_deg, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.frac_le_3, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.frac_le_10, 2.0 / 3.0, epsilon = 1e-12);
        // Population standard deviation: sqrt(((4^2 + 2^2 + 6^2) / 3)).
        assert_abs_diff_eq!(s.std_deg, (56.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        let s = OrientationStats::from_deviations(OrientationMethod::Projection2d, &[Some(1.0), None]).unwrap();
        assert_eq!((s.n, s.failures, s.frac_le_10), (2, 1, 0.5));
        assert!(OrientationStats::from_deviations(OrientationMethod::Projection2d, &[]).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in OrientationMethod::ALL {
            assert_eq!(m.as_str().parse::<OrientationMethod>().unwrap(), m);
            let js = serde_json::to_string(&m).unwrap();
            assert_eq!(js, format!("\"{}\"", m.as_str()));
        }
    }

    fn random_unit() -> impl Strategy<Value = UnitVector> {
        prop::array::uniform3(-1.0f64..1.0)
            .prop_filter("non-zero", |v| Vec3::from(*v).norm() > 0.1)
            .prop_map(|v| UnitVector::new_normalize(Vec3::from(v)))
    }

    proptest! {
        #[test]
        fn orthogonalize_stays_in_span(up in random_unit(), raw in prop::array::uniform3(-50.0f64..50.0)) {
            let raw = Vec3::from(raw);
            prop_assume!(raw.norm() > 1e-3 && raw.normalize().cross(&up).norm() > 1e-3);
            let p = orthogonalize(&raw, &up).unwrap();
            prop_assert!(p.dot(&up).abs() < 1e-9);
            // Oracle: the projection of raw onto the orthogonal complement, normalized.
            let oracle = (raw - up.into_inner() * up.dot(&raw)).normalize();
            prop_assert!((p.into_inner() - oracle).norm() < 1e-9);
            // In span{raw, up}: orthogonal to their normal.
            prop_assert!(p.dot(&raw.cross(&up).normalize()).abs() < 1e-9);
            // Same side as raw.
            prop_assert!(p.dot(&raw) > 0.0);
        }

        #[test]
        fn frames_are_right_handed(up in random_unit(), other in random_unit()) {
            prop_assume!(up.cross(&other).norm() > 1e-2);
            let posterior = orthogonalize(&other.into_inner(), &up).unwrap();
            let f = build_frame(WorldPoint::origin(), up, posterior).unwrap();
            prop_assert!((f.determinant() - 1.0).abs() < 1e-9);
            prop_assert!(f.superior.dot(&f.posterior).abs() < 1e-9);
            prop_assert!(f.superior.dot(&f.lateral).abs() < 1e-9);
            prop_assert!(f.posterior.dot(&f.lateral).abs() < 1e-9);
            let cross = f.superior.cross(&f.posterior);
            prop_assert!((cross - f.lateral.into_inner()).amax() < 1e-9);
        }
    }
}
