//! Seeded suite of asymmetric mini-spines for scoring orientation methods.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::anatomy::{assemble_spine, vid_to_level, LabelDictionary, SpineInstance};
use crate::error::Result;
use crate::grid::UnitVector;
use crate::orientation::{evaluate_orientation, OrientationCase, OrientationMethod, OrientationStats};

use super::generate::{generate_spine, GridSpec, LevelSpec, PhantomSpec, Pose};
use super::geometry::VertebraParams;

/// Seed of the reference suite.
pub const SUITE_SEED: u64 = 20_240_917;
/// Number of evaluated vertebrae in the reference suite.
pub const SUITE_SIZE: usize = 90;

/// One suite item: a three-level spine whose middle vertebra is scored.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub spec: PhantomSpec,
    pub eval_v_id: u32,
}

/// A generated suite item.
pub struct SuiteSample {
    pub spine: SpineInstance,
    pub v_id: u32,
    pub truth_posterior: UnitVector,
}

fn uniform(rng: &mut ChaCha8Rng, m: f64) -> f64 {
    rng.random_range(-m..=m)
}

/// Specs of the `n` suite cases for `seed`.
///
/// The middle vertebra gets strongly skewed posterior elements: a tilted
/// arcus roof, a laterally deflected spinous process, unequal costal
/// processes and an axial rotation. Its neighbours are mildly perturbed. The
/// whole spine has a random coronal curvature and a random rigid pose.
pub fn suite_cases(seed: u64, n: usize) -> Vec<SuiteCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            // Middle level anywhere from C3 to L4.
            let mid: u32 = rng.random_range(3..=23);
            let levels = (mid - 1..=mid + 1)
                .map(|v| {
                    let strong = v == mid;
                    let scale = if strong { 1.0 } else { 0.25 };
                    let base = VertebraParams::default();
                    let left = base.costal_length_mm[0];
                    let params = VertebraParams {
                        arcus_skew_deg: uniform(&mut rng, 20.0 * scale),
                        spinosus_deflection_deg: uniform(&mut rng, 6.0 * scale),
                        costal_length_mm: [left, left * (1.0 + uniform(&mut rng, 0.6 * scale))],
                        ..base
                    };
                    let pose = Pose { rotation_deg: [0.0, 0.0, uniform(&mut rng, 12.0 * scale)], translation_mm: [0.0; 3] };
                    LevelSpec { level: vid_to_level(v).expect("standard level"), params, pose }
                })
                .collect();
            let pose = Pose {
                rotation_deg: [uniform(&mut rng, 40.0), uniform(&mut rng, 40.0), uniform(&mut rng, 180.0)],
                translation_mm: [uniform(&mut rng, 20.0), uniform(&mut rng, 20.0), uniform(&mut rng, 20.0)],
            };
            let spec = PhantomSpec {
                levels,
                curvature_deg: uniform(&mut rng, 12.0),
                pitch_mm: 36.0,
                grid: GridSpec { margin_mm: 3.0, ..GridSpec::isotropic(1.0) },
                pose,
                seed: 0,
                jitter: None,
            };
            SuiteCase { spec, eval_v_id: mid }
        })
        .collect()
}

/// Generates and assembles every case (in parallel, order preserved).
pub fn generate_suite(cases: &[SuiteCase]) -> Result<Vec<SuiteSample>> {
    let dict = LabelDictionary::spineps_blocks();
    cases
        .par_iter()
        .map(|c| {
            let (vol, truth) = generate_spine(&c.spec)?;
            let spine = assemble_spine(Arc::new(vol), &dict)?;
            let t = truth.by_vid(c.eval_v_id).expect("evaluated level is generated");
            Ok(SuiteSample { spine, v_id: c.eval_v_id, truth_posterior: t.frame.posterior })
        })
        .collect()
}

/// Scores each method on generated samples.
pub fn score_methods(samples: &[SuiteSample], methods: &[OrientationMethod]) -> Result<Vec<OrientationStats>> {
    let cases: Vec<OrientationCase<'_>> =
        samples.iter().map(|s| OrientationCase { spine: &s.spine, v_id: s.v_id, truth_posterior: s.truth_posterior }).collect();
    methods.iter().map(|&m| evaluate_orientation(&cases, m)).collect()
}

/// Generates the suite for `seed` and scores all three methods.
pub fn run_orientation_suite(seed: u64, n: usize) -> Result<Vec<OrientationStats>> {
    let samples = generate_suite(&suite_cases(seed, n))?;
    score_methods(&samples, &OrientationMethod::ALL)
}
