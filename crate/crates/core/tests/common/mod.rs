//! Shared builders and independent oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{Matrix3, Matrix4, Rotation3};
use spinepoi::anatomy::{assemble_spine, LabelDictionary, SpineInstance, SubregionLabel};
use spinepoi::grid::{AffineFrame, LabelSet, LabelVolume, Vec3, WorldConvention, WorldPoint};

/// Axis-aligned RAS grid with `spacing`, covering at least `[-extent, extent]`,
/// voxel centers at `(m + shift) * spacing`. Each center is labelled with the
/// code of `classify(center)` at `level`.
pub fn labeled_volume(
    spacing: [f64; 3],
    shift: f64,
    extent: [f64; 3],
    level: &str,
    classify: impl Fn(Vec3) -> Option<SubregionLabel>,
) -> LabelVolume {
    let n: Vec<i64> = (0..3).map(|a| (extent[a] / spacing[a]).ceil() as i64).collect();
    let dims = [(2 * n[0] + 1) as usize, (2 * n[1] + 1) as usize, (2 * n[2] + 1) as usize];
    let origin: Vec<f64> = (0..3).map(|a| (shift - n[a] as f64) * spacing[a]).collect();
    let frame = AffineFrame::from_spacing(spacing, [origin[0], origin[1], origin[2]], WorldConvention::Ras).unwrap();
    let mut labels = vec![0u32; dims[0] * dims[1] * dims[2]];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let c = Vec3::new(
                    origin[0] + i as f64 * spacing[0],
                    origin[1] + j as f64 * spacing[1],
                    origin[2] + k as f64 * spacing[2],
                );
                if let Some(sub) = classify(c) {
                    labels[i + dims[0] * (j + dims[1] * k)] = LabelDictionary::spineps_code(level, sub).unwrap();
                }
            }
        }
    }
    LabelVolume::new(dims, labels, frame).unwrap()
}

/// Isotropic shorthand for [`labeled_volume`].
pub fn iso_volume(h: f64, shift: f64, extent: f64, classify: impl Fn(Vec3) -> Option<SubregionLabel>) -> LabelVolume {
    labeled_volume([h; 3], shift, [extent; 3], "L1", classify)
}

pub fn spine_of(vol: LabelVolume) -> SpineInstance {
    assemble_spine(Arc::new(vol), &LabelDictionary::spineps_blocks()).unwrap()
}

pub fn rot(axis: Vec3, deg: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), deg.to_radians()).matrix()
}

/// Rigid transform `x -> r x + t` as a homogeneous matrix.
pub fn rigid(r: Matrix3<f64>, t: Vec3) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// Trilinear occupancy written out independently of the library: voxel
/// coordinates from the inverse affine, eight corner labels, product weights.
pub fn occupancy_oracle(vol: &LabelVolume, set: &LabelSet, p: &WorldPoint) -> f64 {
    let inv = vol.frame().inverse();
    let v = inv * p.to_homogeneous();
    let base = [v.x.floor(), v.y.floor(), v.z.floor()];
    let frac = [v.x - base[0], v.y - base[1], v.z - base[2]];
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut w = 1.0;
        let mut ijk = [0i64; 3];
        for a in 0..3 {
            let hi = (corner >> a) & 1 == 1;
            w *= if hi { frac[a] } else { 1.0 - frac[a] };
            ijk[a] = base[a] as i64 + hi as i64;
        }
        if w > 0.0 && set.contains(vol.label_at(ijk[0], ijk[1], ijk[2])) {
            acc += w;
        }
    }
    acc
}

/// Inside test of the acceptance rule: occupancy of one half, with a 1e-9
/// allowance for points exactly on a voxel face.
pub fn inside_oracle(vol: &LabelVolume, set: &LabelSet, p: &WorldPoint) -> bool {
    occupancy_oracle(vol, set, p) >= 0.5 - 1e-9
}

/// One greedy pass replayed with the oracle occupancy, halving each axis'
/// step on rejection until every step is below `precision`.
pub fn replay_pass(vol: &LabelVolume, set: &LabelSet, start: &WorldPoint, axes: &[Vec3], initial: f64, precision: f64) -> WorldPoint {
    assert!(inside_oracle(vol, set, start));
    let mut p = *start;
    let mut steps = vec![initial; axes.len()];
    while steps.iter().any(|&s| s >= precision) {
        for (a, s) in axes.iter().zip(steps.iter_mut()) {
            if *s < precision {
                continue;
            }
            let q = p + a * *s;
            if inside_oracle(vol, set, &q) {
                p = q;
            } else {
                *s *= 0.5;
            }
        }
    }
    p
}

/// Full corner walk: passes restarted from a point backed off by up to
/// `back_off` along both axes, kept while they gain more than `gain` along
/// the summed outward direction.
#[allow(clippy::too_many_arguments)]
pub fn replay_walk(vol: &LabelVolume, set: &LabelSet, start: &WorldPoint, axes: &[Vec3], initial: f64, precision: f64, back_off: f64, gain: f64) -> WorldPoint {
    let out: Vec3 = axes.iter().sum();
    let mut best = replay_pass(vol, set, start, axes, initial, precision);
    loop {
        let mut d = back_off;
        let restart = loop {
            if d < gain {
                break None;
            }
            let q = best - out * d;
            if inside_oracle(vol, set, &q) {
                break Some(q);
            }
            d *= 0.5;
        };
        let Some(q) = restart else { return best };
        let p = replay_pass(vol, set, &q, axes, initial, precision);
        if (p - best).dot(&out) <= gain {
            return best;
        }
        best = p;
    }
}

/// Distance from `r` to the nearest cell of a dense in-plane scan (spacing
/// `h`, half-width `window`) that is inside while both of its outward
/// neighbours along `a` and `b` are outside, i.e. a cell where the greedy
/// walk can come to rest. `None` if the window holds no such cell.
pub fn terminal_distance(vol: &LabelVolume, set: &LabelSet, r: &WorldPoint, a: &Vec3, b: &Vec3, h: f64, window: f64) -> Option<f64> {
    let n = (window / h).round() as i64;
    let mut best: Option<f64> = None;
    for i in -n..=n {
        for j in -n..=n {
            let c = r + a * (i as f64 * h) + b * (j as f64 * h);
            if inside_oracle(vol, set, &c) && !inside_oracle(vol, set, &(c + a * h)) && !inside_oracle(vol, set, &(c + b * h)) {
                let d = (c - r).norm();
                if best.is_none_or(|x| d < x) {
                    best = Some(d);
                }
            }
        }
    }
    best
}

/// Farthest point along a ray (dense samples every `h`) whose oracle
/// occupancy is at least one half.
pub fn farthest_inside_oracle(vol: &LabelVolume, set: &LabelSet, origin: &WorldPoint, dir: &Vec3, travel: f64, h: f64) -> Option<WorldPoint> {
    let d = dir.normalize();
    let n = (travel / h) as usize;
    (0..=n).map(|k| origin + d * (k as f64 * h)).rfind(|p| inside_oracle(vol, set, p))
}

/// Last point of the inside run that starts at `origin` (dense samples).
pub fn first_exit_oracle(vol: &LabelVolume, set: &LabelSet, origin: &WorldPoint, dir: &Vec3, travel: f64, h: f64) -> WorldPoint {
    let d = dir.normalize();
    let n = (travel / h) as usize;
    let mut last = *origin;
    for k in 0..=n {
        let p = origin + d * (k as f64 * h);
        if !inside_oracle(vol, set, &p) {
            break;
        }
        last = p;
    }
    last
}

/// Mirror of `p` across the plane through `origin` with unit normal `n`.
pub fn mirror(p: &WorldPoint, origin: &WorldPoint, n: &Vec3) -> WorldPoint {
    p - n * (2.0 * (p - origin).dot(n))
}
