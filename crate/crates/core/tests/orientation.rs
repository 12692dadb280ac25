mod common;

use std::collections::BTreeMap;

use common::*;
use spinepoi::anatomy::{SpineInstance, SubregionLabel, VertebraInstance};
use spinepoi::grid::{LabelVolume, UnitVector, Vec3};
use spinepoi::orientation::*;
use spinepoi::phantom::{generate_spine, PhantomSpec, VertebraParams};

use SubregionLabel as S;

fn up_z() -> UnitVector {
    UnitVector::new_unchecked(Vec3::z())
}

fn block(c: Vec3, center: [f64; 3], half: [f64; 3]) -> bool {
    (0..3).all(|a| (c[a] - center[a]).abs() < half[a])
}

/// Corpus block at the origin with arcus and spinosus blocks centered at the
/// given points (posterior is RAS -y).
fn blocks_phantom(arcus_at: [f64; 3], spinosus_at: [f64; 3]) -> SpineInstance {
    spine_of(iso_volume(1.0, 0.5, 40.0, move |c| {
        if block(c, [0.0, 0.0, 0.0], [12.0, 9.0, 8.0]) {
            Some(S::Corpus)
        } else if block(c, arcus_at, [10.0, 3.0, 6.0]) {
            Some(S::Arcus)
        } else if block(c, spinosus_at, [2.0, 6.0, 3.0]) {
            Some(S::Spinosus)
        } else {
            None
        }
    }))
}

fn centers(vol: &LabelVolume, v: &VertebraInstance, subs: &[S]) -> Vec<Vec3> {
    subs.iter().flat_map(|&s| v.voxels(s).iter().map(|&i| vol.voxel_center(i as usize).coords)).collect()
}

fn mean(pts: &[Vec3]) -> Vec3 {
    pts.iter().sum::<Vec3>() / pts.len() as f64
}

/// Brute-force Projection2d: project every arcus/spinosus voxel center onto
/// the plane through the corpus center, average within each occupied cell of
/// the finest spacing, then average the cells.
fn projection_oracle(vol: &LabelVolume, v: &VertebraInstance, up: &UnitVector) -> Vec3 {
    let c = v.corpus_cms().coords;
    // Cells laid out along the in-plane direction to the posterior centroid.
    let toward = mean(&centers(vol, v, &[S::Arcus, S::Spinosus])) - c;
    let e1 = (toward - up.into_inner() * toward.dot(up)).normalize();
    let e2 = up.cross(&e1);
    let h = vol.min_spacing();
    let mut cells: BTreeMap<(i64, i64), Vec<(f64, f64)>> = BTreeMap::new();
    for p in centers(vol, v, &[S::Arcus, S::Spinosus]) {
        let (a, b) = ((p - c).dot(&e1), (p - c).dot(&e2));
        cells.entry(((a / h).floor() as i64, (b / h).floor() as i64)).or_default().push((a, b));
    }
    let per_cell: Vec<(f64, f64)> = cells
        .values()
        .map(|xs| (xs.iter().map(|x| x.0).sum::<f64>() / xs.len() as f64, xs.iter().map(|x| x.1).sum::<f64>() / xs.len() as f64))
        .collect();
    let n = per_cell.len() as f64;
    let (a, b) = per_cell.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    e1 * (a / n) + e2 * (b / n)
}

#[test]
fn block_directly_behind_gives_minus_y() {
    let spine = blocks_phantom([0.0, -15.0, 0.0], [0.0, -24.0, 0.0]);
    let v = &spine.vertebrae()[0];
    for m in OrientationMethod::ALL {
        let raw = posterior_raw(spine.volume(), v, &up_z(), m).unwrap();
        let d = raw.normalize();
        assert!((d - -Vec3::y()).norm() < 1e-9, "{m}: {d}");
    }
}

#[test]
fn projection_removes_superior_offset() {
    // Arcus 10 mm further back and 3 mm higher than the corpus center.
    let spine = blocks_phantom([0.0, -19.0, 3.0], [0.0, -28.0, 3.0]);
    let v = &spine.vertebrae()[0];
    let vol = spine.volume();
    let p2d = posterior_raw(vol, v, &up_z(), OrientationMethod::Projection2d).unwrap();
    assert!(p2d.z.abs() < 1e-9, "{p2d}");
    let arc = posterior_raw(vol, v, &up_z(), OrientationMethod::Cms3dArcusSpinosus).unwrap();
    let want = mean(&centers(vol, v, &[S::Arcus, S::Spinosus])) - v.corpus_cms().coords;
    assert!((arc - want).norm() < 1e-9, "{arc} vs {want}");
    assert!((arc.z - 3.0).abs() < 1e-9, "{arc}");
}

#[test]
fn skewed_spinosus_gap_matches_brute_force() {
    let params = VertebraParams { spinosus_deflection_deg: 15.0, arcus_skew_deg: 8.0, ..Default::default() };
    let (vol, _) = generate_spine(&PhantomSpec::single("C5", params)).unwrap();
    let spine = spine_of(vol);
    let v = &spine.vertebrae()[0];
    let vol = spine.volume();
    let up = up_z();

    let p2d = posterior_raw(vol, v, &up, OrientationMethod::Projection2d).unwrap();
    let all = posterior_raw(vol, v, &up, OrientationMethod::Cms3dAllPosterior).unwrap();
    let oracle_p2d = projection_oracle(vol, v, &up);
    let oracle_all = mean(&centers(vol, v, &S::POSTERIOR)) - v.corpus_cms().coords;
    assert!((p2d - oracle_p2d).norm() < 1e-9);
    assert!((all - oracle_all).norm() < 1e-9);

    let gap = |a: &Vec3, b: &Vec3| angular_deviation(&orthogonalize(a, &up).unwrap(), &orthogonalize(b, &up).unwrap());
    let g = gap(&p2d, &all);
    assert!((g - gap(&oracle_p2d, &oracle_all)).abs() < 1e-9);
    assert!(g > 0.1, "skew should separate the methods, gap {g}");
}

#[test]
fn projection_invariant_to_shift_along_up() {
    let base = blocks_phantom([3.0, -16.0, 0.0], [5.0, -25.0, 0.0]);
    let v0 = &base.vertebrae()[0];
    let r0 = posterior_raw(base.volume(), v0, &up_z(), OrientationMethod::Projection2d).unwrap();
    for dz in [-7.0, 2.0, 5.0] {
        let moved = blocks_phantom([3.0, -16.0, dz], [5.0, -25.0, dz]);
        let v = &moved.vertebrae()[0];
        let r = posterior_raw(moved.volume(), v, &up_z(), OrientationMethod::Projection2d).unwrap();
        let a = angular_deviation(&UnitVector::new_normalize(r0), &UnitVector::new_normalize(r));
        assert!(a < 1e-6, "shift {dz}: {a} deg");
    }
}

#[test]
fn frames_rotate_with_the_volume() {
    let mut spec = PhantomSpec::straight(&["T12", "L1", "L2", "L3"]);
    spec.curvature_deg = 10.0;
    spec.levels[1].params.spinosus_deflection_deg = 6.0;
    spec.levels[2].params.arcus_skew_deg = 10.0;
    let (vol, _) = generate_spine(&spec).unwrap();
    let spine = spine_of(vol);

    let r = rot(Vec3::new(0.3, 1.0, -0.6), 37.0);
    let mut moved = spec.clone();
    let m = rigid(r, Vec3::new(-20.0, 4.0, 11.0));
    moved.grid.world_transform = Some(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])));
    let (mvol, _) = generate_spine(&moved).unwrap();
    let mspine = spine_of(mvol);

    for method in OrientationMethod::ALL {
        for k in 0..spine.len() {
            let f = estimate_frame(&spine, k, method).unwrap();
            let g = estimate_frame(&mspine, k, method).unwrap();
            for (a, b) in [(f.superior, g.superior), (f.posterior, g.posterior), (f.lateral, g.lateral)] {
                let ra = UnitVector::new_normalize(r * a.into_inner());
                let dev = angular_deviation(&ra, &b);
                assert!(dev <= 0.5, "{method} level {k}: {dev} deg");
            }
        }
    }
}

#[test]
fn estimated_frames_are_orthonormal() {
    let mut spec = PhantomSpec::straight(&["T4", "T5", "T6", "T7", "T8"]);
    spec.curvature_deg = 25.0;
    spec.pose.rotation_deg = [10.0, -15.0, 30.0];
    let (vol, _) = generate_spine(&spec).unwrap();
    let spine = spine_of(vol);
    for method in OrientationMethod::ALL {
        for k in 0..spine.len() {
            let f = estimate_frame(&spine, k, method).unwrap();
            let (s, p, l) = (f.superior.into_inner(), f.posterior.into_inner(), f.lateral.into_inner());
            assert!(s.dot(&p).abs() < 1e-9 && s.dot(&l).abs() < 1e-9 && p.dot(&l).abs() < 1e-9);
            assert!((s.cross(&p) - l).amax() < 1e-9);
            assert!((f.determinant() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn empty_arcus_is_reported() {
    let spine = spine_of(iso_volume(1.0, 0.5, 20.0, |c| block(c, [0.0; 3], [12.0, 9.0, 8.0]).then_some(S::Corpus)));
    let v = &spine.vertebrae()[0];
    for m in [OrientationMethod::Projection2d, OrientationMethod::Cms3dArcusSpinosus] {
        let e = posterior_raw(spine.volume(), v, &up_z(), m).unwrap_err();
        assert!(matches!(e, spinepoi::Error::EmptySubregion(_)), "{e}");
    }
}
