//! Phantom spec files and ground-truth documents.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Vec3, WorldConvention};
use crate::phantom::{PhantomSpec, PhantomTruth, VertebraParams};

use super::round_sig9;

/// Value of the `role` field that marks a document as ground truth, so it is
/// never mistaken for extracted landmarks.
pub const TRUTH_ROLE: &str = "truth";

pub fn read_phantom_spec(path: impl AsRef<Path>) -> Result<PhantomSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

pub fn write_phantom_spec(spec: &PhantomSpec, path: impl AsRef<Path>) -> Result<()> {
    super::write_json(spec, path.as_ref())
}

fn v9(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z].map(round_sig9)
}

#[derive(Serialize)]
struct FrameDoc {
    origin: [f64; 3],
    superior: [f64; 3],
    posterior: [f64; 3],
    lateral: [f64; 3],
}

#[derive(Serialize)]
struct LandmarkDoc {
    name: &'static str,
    position: [f64; 3],
}

#[derive(Serialize)]
struct VertebraDoc<'a> {
    v_id: u32,
    level: &'a str,
    frame: FrameDoc,
    tangent: [f64; 3],
    params: &'a VertebraParams,
    landmarks: Vec<LandmarkDoc>,
}

#[derive(Serialize)]
struct TruthDoc<'a> {
    format: &'static str,
    version: u32,
    role: &'static str,
    convention: WorldConvention,
    vertebrae: Vec<VertebraDoc<'a>>,
}

fn truth_doc(truth: &PhantomTruth) -> TruthDoc<'_> {
    let vertebrae = truth
        .vertebrae
        .iter()
        .map(|v| VertebraDoc {
            v_id: v.v_id,
            level: &v.level,
            frame: FrameDoc {
                origin: v9(&v.frame.origin.coords),
                superior: v9(&v.frame.superior),
                posterior: v9(&v.frame.posterior),
                lateral: v9(&v.frame.lateral),
            },
            tangent: v9(&v.tangent),
            params: &v.params,
            landmarks: v.landmarks.iter().map(|(n, p)| LandmarkDoc { name: n.as_str(), position: v9(&p.coords) }).collect(),
        })
        .collect();
    TruthDoc { format: super::POI_FORMAT, version: super::POI_VERSION, role: TRUTH_ROLE, convention: truth.convention, vertebrae }
}

/// Ground truth as JSON (9 significant digits): vertebrae cranial to caudal,
/// landmarks in canonical order. Carries the landmark document's format tag
/// and version plus `role: "truth"`.
pub fn truth_to_json(truth: &PhantomTruth) -> Result<Vec<u8>> {
    super::to_json_bytes(&truth_doc(truth))
}

pub fn write_truth_json(truth: &PhantomTruth, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, truth_to_json(truth)?)?;
    Ok(())
}
