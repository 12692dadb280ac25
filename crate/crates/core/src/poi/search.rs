//! Sub-voxel boundary searches on the occupancy field.
//!
//! All searches treat `occupancy >= 0.5` as inside. Two primitives are used:
//!
//! * [`raycast_surface_point`] marches a ray at a fixed step, keeps the
//!   farthest inside sample and bisects the crossing behind it. Interior gaps
//!   (aliased slabs at coarse spacing) are stepped over.
//! * [`corner_bisection_2d`] and [`bisect_1d`] walk outward with one step per
//!   axis. A step is taken when it lands inside, otherwise that axis' step is
//!   halved, until every step is below the precision. The 2D walk restarts
//!   from a point backed off into the interior while that keeps gaining.

use crate::error::{Error, Result};
use crate::grid::{LabelSet, LabelVolume, UnitVector, Vec3, WorldPoint, INSIDE_THRESHOLD};

use super::config::{BisectionConfig, RayConfig};

/// Default travel for a ray when the configuration leaves it open: the
/// diagonal of the whole grid.
fn grid_diagonal(vol: &LabelVolume) -> f64 {
    let [nx, ny, nz] = vol.dims();
    let a = vol.frame().voxel_to_world([-0.5, -0.5, -0.5]);
    let b = vol.frame().voxel_to_world([nx as f64 - 0.5, ny as f64 - 0.5, nz as f64 - 0.5]);
    (b - a).norm()
}

/// Surface point of the `set` mask seen from `origin` along `direction`.
///
/// Samples at `k * march_step` for `k = 0..=floor(max_travel / march_step)`,
/// takes the farthest sample with occupancy >= 0.5 and bisects between it and
/// the next sample until the bracket is below `precision_mm`. Returns the
/// bracket midpoint.
pub fn raycast_surface_point(
    vol: &LabelVolume,
    set: &LabelSet,
    origin: &WorldPoint,
    direction: &Vec3,
    ray: &RayConfig,
    bis: &BisectionConfig,
) -> Result<WorldPoint> {
    let occ0 = vol.sample_occupancy(set, origin);
    if occ0 < INSIDE_THRESHOLD {
        return Err(Error::RayOriginOutside { occupancy: occ0 });
    }
    let norm = direction.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidConfig("ray direction must be non-zero".into()));
    }
    let dir = direction / norm;
    let step = ray.march_step_mm;
    let travel = ray.max_travel_mm.unwrap_or_else(|| grid_diagonal(vol));
    let n = (travel / step).floor() as usize;
    if n == 0 {
        return Err(Error::RayMiss);
    }

    let at = |t: f64| origin + dir * t;
    let mut last_inside = 0usize;
    for k in 1..=n {
        if vol.sample_occupancy(set, &at(k as f64 * step)) >= INSIDE_THRESHOLD {
            last_inside = k;
        }
    }
    if last_inside == n {
        // Still inside at the end of travel; nothing to refine.
        return Ok(at(n as f64 * step));
    }

    let mut lo = last_inside as f64 * step;
    let mut hi = lo + step;
    let mut iterations = 0;
    while hi - lo > bis.precision_mm {
        iterations += 1;
        if iterations > bis.max_iterations {
            return Err(Error::BisectionDiverged(bis.max_iterations));
        }
        let mid = 0.5 * (lo + hi);
        if vol.sample_occupancy(set, &at(mid)) >= INSIDE_THRESHOLD {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

/// Greedy outward walk in the plane spanned by `axis_a` and `axis_b`.
///
/// Both steps start at `initial_step_mm`. Each round tries `p + sign_a * s_a *
/// axis_a` and then `p + sign_b * s_b * axis_b`; an inside candidate is
/// accepted, an outside one halves that axis' step. A pass ends once both
/// steps are below `precision_mm`.
///
/// On a face that is oblique to the voxel grid the interpolated boundary is
/// a shallow staircase, and a pass can come to rest on one of its bumps long
/// before the corner. The walk therefore backs off diagonally by one voxel
/// spacing and runs another pass, keeping the result as long as a pass gains
/// more than `precision_mm` in the combined outward direction. Each pass is
/// limited to `max_iterations` attempts, and so is the number of passes.
#[allow(clippy::too_many_arguments)]
pub fn corner_bisection_2d(
    vol: &LabelVolume,
    set: &LabelSet,
    start: &WorldPoint,
    axis_a: &UnitVector,
    axis_b: &UnitVector,
    sign_a: f64,
    sign_b: f64,
    bis: &BisectionConfig,
) -> Result<WorldPoint> {
    let axes = [axis_a.into_inner() * sign_a, axis_b.into_inner() * sign_b];
    let outward = axes[0] + axes[1];
    let mut best = walk(vol, set, start, &axes, bis)?;
    for _ in 0..bis.max_iterations {
        let Some(restart) = back_off(vol, set, &best, &outward, vol.max_spacing(), bis.precision_mm) else {
            return Ok(best);
        };
        let p = walk(vol, set, &restart, &axes, bis)?;
        if (p - best).dot(&outward) <= bis.precision_mm {
            return Ok(best);
        }
        best = p;
    }
    Err(Error::BisectionDiverged(bis.max_iterations))
}

/// Inside point `p - d * outward` for the largest `d <= distance` found by
/// halving, if any `d >= precision` works.
fn back_off(vol: &LabelVolume, set: &LabelSet, p: &WorldPoint, outward: &Vec3, distance: f64, precision: f64) -> Option<WorldPoint> {
    let mut d = distance;
    while d >= precision {
        let q = p - outward * d;
        if vol.sample_occupancy(set, &q) >= INSIDE_THRESHOLD {
            return Some(q);
        }
        d *= 0.5;
    }
    None
}

/// One-axis version of [`corner_bisection_2d`]: walks from `start` along
/// `direction` to the mask boundary.
pub fn bisect_1d(vol: &LabelVolume, set: &LabelSet, start: &WorldPoint, direction: &Vec3, bis: &BisectionConfig) -> Result<WorldPoint> {
    walk(vol, set, start, &[direction.normalize()], bis)
}

fn walk(vol: &LabelVolume, set: &LabelSet, start: &WorldPoint, axes: &[Vec3], bis: &BisectionConfig) -> Result<WorldPoint> {
    let occ = vol.sample_occupancy(set, start);
    if occ < INSIDE_THRESHOLD {
        return Err(Error::BisectionStartOutside { occupancy: occ });
    }
    let mut p = *start;
    let mut steps = vec![bis.initial_step_mm; axes.len()];
    let mut attempts = 0usize;
    while steps.iter().any(|&s| s >= bis.precision_mm) {
        for (axis, step) in axes.iter().zip(steps.iter_mut()) {
            if *step < bis.precision_mm {
                continue;
            }
            attempts += 1;
            if attempts > bis.max_iterations {
                return Err(Error::BisectionDiverged(bis.max_iterations));
            }
            let candidate = p + axis * *step;
            if vol.sample_occupancy(set, &candidate) >= INSIDE_THRESHOLD {
                p = candidate;
            } else {
                *step *= 0.5;
            }
        }
    }
    Ok(p)
}

/// First inside sample when marching from `from` along `direction` (inclusive
/// of `from`), up to `max_distance`.
pub fn first_inside_along(
    vol: &LabelVolume,
    set: &LabelSet,
    from: &WorldPoint,
    direction: &Vec3,
    step: f64,
    max_distance: f64,
) -> Option<WorldPoint> {
    let dir = direction.normalize();
    let n = (max_distance / step).floor() as usize;
    (0..=n)
        .map(|k| from + dir * (k as f64 * step))
        .find(|p| vol.sample_occupancy(set, p) >= INSIDE_THRESHOLD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AffineFrame, WorldConvention};

    /// Grid of spacing `h` covering `[-extent, extent]^3`, voxel centers at
    /// `(m + shift) * h`; voxels whose center satisfies `inside` get label 1.
    pub(crate) fn mask_volume_shifted(h: f64, shift: f64, extent: [f64; 3], inside: impl Fn(f64, f64, f64) -> bool) -> LabelVolume {
        let n: Vec<i64> = extent.iter().map(|e| (e / h).ceil() as i64).collect();
        let dims = [(2 * n[0] + 1) as usize, (2 * n[1] + 1) as usize, (2 * n[2] + 1) as usize];
        let origin = [(shift - n[0] as f64) * h, (shift - n[1] as f64) * h, (shift - n[2] as f64) * h];
        let frame = AffineFrame::from_spacing([h; 3], origin, WorldConvention::Ras).unwrap();
        let mut labels = vec![0; dims[0] * dims[1] * dims[2]];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let (x, y, z) = (origin[0] + i as f64 * h, origin[1] + j as f64 * h, origin[2] + k as f64 * h);
                    if inside(x, y, z) {
                        labels[i + dims[0] * (j + dims[1] * k)] = 1;
                    }
                }
            }
        }
        LabelVolume::new(dims, labels, frame).unwrap()
    }

    pub(crate) fn mask_volume(h: f64, extent: [f64; 3], inside: impl Fn(f64, f64, f64) -> bool) -> LabelVolume {
        mask_volume_shifted(h, 0.0, extent, inside)
    }

    /// Unit-spacing box whose voxel centers satisfy |x| <= half[0] etc.
    fn box_volume(half: [i64; 3], pad: i64) -> LabelVolume {
        let e = [(half[0] + pad) as f64, (half[1] + pad) as f64, (half[2] + pad) as f64];
        mask_volume(1.0, e, |x, y, z| x.abs() <= half[0] as f64 + 1e-9 && y.abs() <= half[1] as f64 + 1e-9 && z.abs() <= half[2] as f64 + 1e-9)
    }

    fn unit(x: f64, y: f64, z: f64) -> UnitVector {
        UnitVector::new_normalize(Vec3::new(x, y, z))
    }

    #[test]
    fn ray_hits_axis_aligned_face() {
        // Voxel centers to |x| <= 9.5 is impossible on an integer grid, so the
        // faces at x = +-10 come from centers up to 9 and occupancy 0.5 at 9.5.
        // Use centers up to 9 plus half a voxel: face at 9.5.
        let vol = box_volume([9, 7, 5], 3);
        let set = LabelSet::single(1);
        let p = raycast_surface_point(&vol, &set, &WorldPoint::origin(), &Vec3::x(), &RayConfig::default(), &BisectionConfig::default()).unwrap();
        assert!((p - WorldPoint::new(9.5, 0.0, 0.0)).norm() <= 0.05, "{p}");
        let p = raycast_surface_point(&vol, &set, &WorldPoint::origin(), &-Vec3::z(), &RayConfig::default(), &BisectionConfig::default()).unwrap();
        assert!((p - WorldPoint::new(0.0, 0.0, -5.5)).norm() <= 0.05, "{p}");
    }

    #[test]
    fn ray_origin_outside() {
        let vol = box_volume([3, 3, 3], 2);
        let set = LabelSet::single(1);
        let r = raycast_surface_point(&vol, &set, &WorldPoint::new(4.5, 0.0, 0.0), &Vec3::x(), &RayConfig::default(), &BisectionConfig::default());
        assert!(matches!(r, Err(Error::RayOriginOutside { .. })));
        let r = raycast_surface_point(&vol, &set, &WorldPoint::origin(), &Vec3::zeros(), &RayConfig::default(), &BisectionConfig::default());
        assert!(r.is_err());
    }

    #[test]
    fn rectangle_corner() {
        // 30 x 16 mm rectangle at 0.1 mm spacing with voxel faces on the
        // rectangle edges, so the 0.5 isoline sits on x = +-15, y = +-8.
        let h = 0.1;
        let vol = mask_volume_shifted(h, 0.5, [16.0, 9.0, 0.5], |x, y, _| x.abs() < 15.0 && y.abs() < 8.0);
        let set = LabelSet::single(1);
        let bis = BisectionConfig::default();
        for (sa, sb) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
            let p = corner_bisection_2d(&vol, &set, &WorldPoint::origin(), &unit(1.0, 0.0, 0.0), &unit(0.0, 1.0, 0.0), sa, sb, &bis).unwrap();
            assert!((p - WorldPoint::new(15.0 * sa, 8.0 * sb, 0.0)).norm() <= 2.0 * bis.precision_mm, "{p}");
            assert!(vol.sample_occupancy(&set, &p) >= 0.5);
        }
    }

    #[test]
    fn voxelized_corner_is_cut_by_interpolation() {
        // At 1 mm spacing the 0.5 isoline rounds the corner off; the walk ends
        // on that isoline, about half a voxel from the sharp corner.
        let vol = box_volume([14, 7, 3], 3);
        let set = LabelSet::single(1);
        let p = corner_bisection_2d(&vol, &set, &WorldPoint::origin(), &unit(1.0, 0.0, 0.0), &unit(0.0, 1.0, 0.0), 1.0, 1.0, &BisectionConfig::default()).unwrap();
        let d = (p - WorldPoint::new(14.5, 7.5, 0.0)).norm();
        assert!(d > 0.1 && d < 0.75, "{p}");
        assert!(vol.sample_occupancy(&set, &p) >= 0.5);
    }

    #[test]
    fn walk_from_boundary_is_fixed_point() {
        let vol = box_volume([4, 4, 4], 2);
        let set = LabelSet::single(1);
        let start = WorldPoint::new(4.5, 4.5, 0.0);
        let occ = vol.sample_occupancy(&set, &start);
        assert!(occ < 0.5); // the corner point itself is 0.25
        let start = WorldPoint::new(4.5, 0.0, 0.0);
        assert_eq!(vol.sample_occupancy(&set, &start), 0.5);
        let p = corner_bisection_2d(&vol, &set, &start, &unit(1.0, 0.0, 0.0), &unit(0.0, 0.0, 1.0), 1.0, 1.0, &BisectionConfig::default());
        // Only the second axis can move; the first stays pinned at the face.
        let p = p.unwrap();
        assert_eq!(p.x, 4.5);
        let p = bisect_1d(&vol, &set, &start, &Vec3::x(), &BisectionConfig::default()).unwrap();
        assert_eq!(p, start);
    }

    #[test]
    fn walk_start_outside_and_divergence() {
        let vol = box_volume([4, 4, 4], 2);
        let set = LabelSet::single(1);
        let r = bisect_1d(&vol, &set, &WorldPoint::new(6.0, 0.0, 0.0), &Vec3::x(), &BisectionConfig::default());
        assert!(matches!(r, Err(Error::BisectionStartOutside { .. })));
        let bis = BisectionConfig { max_iterations: 3, ..Default::default() };
        let r = bisect_1d(&vol, &set, &WorldPoint::origin(), &Vec3::x(), &bis);
        assert!(matches!(r, Err(Error::BisectionDiverged(3))));
    }

    #[test]
    fn first_inside() {
        let vol = box_volume([4, 4, 4], 4);
        let set = LabelSet::single(1);
        let p = first_inside_along(&vol, &set, &WorldPoint::new(8.0, 0.0, 0.0), &-Vec3::x(), 0.25, 10.0).unwrap();
        assert_eq!(p, WorldPoint::new(4.5, 0.0, 0.0));
        assert!(first_inside_along(&vol, &set, &WorldPoint::new(8.0, 0.0, 0.0), &Vec3::x(), 0.25, 10.0).is_none());
    }
}
