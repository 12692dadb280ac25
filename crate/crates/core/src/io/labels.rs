//! Label dictionary files.
//!
//! Three groupings are understood:
//!
//! ```json
//! { "version": 1, "grouping": "spineps_blocks", "ignore": [60, 61] }
//! { "version": 1, "grouping": "code_blocks",
//!   "levels": { "L1": { "corpus": 2050, "arcus": 2041 } } }
//! { "version": 1, "grouping": "instance_map", "instance_volume": "vert.nii.gz",
//!   "subregions": { "corpus": 50, "arcus": 41 }, "instances": { "L1": 20 } }
//! ```
//!
//! With an instance map the subregion volume carries only subregion codes and
//! a second volume tells which vertebra each voxel belongs to. The two are
//! merged into per-vertebra code blocks before assembly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anatomy::{LabelDictionary, LevelCodes, SubregionLabel};
use crate::error::{Error, Result};
use crate::grid::LabelVolume;

const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Grouping {
    SpinepsBlocks,
    CodeBlocks,
    InstanceMap,
}

/// Raw contents of a label dictionary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelDictionaryFile {
    version: u32,
    grouping: Grouping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<BTreeMap<String, BTreeMap<SubregionLabel, u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subregions: Option<BTreeMap<SubregionLabel, u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instances: Option<BTreeMap<String, u32>>,
    /// Path of the instance volume, relative to the dictionary file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance_volume: Option<PathBuf>,
    #[serde(default)]
    ignore: Vec<u32>,
}

/// What a dictionary file resolves to.
#[derive(Debug, Clone, PartialEq)]
pub enum DictionarySource {
    /// Codes are looked up directly in the label volume.
    Blocks(LabelDictionary),
    /// Subregion codes shared by all levels plus an instance volume; see
    /// [`merge_instance_map`].
    InstanceMap {
        subregions: BTreeMap<SubregionLabel, u32>,
        instances: BTreeMap<String, u32>,
        instance_volume: PathBuf,
        ignore: Vec<u32>,
    },
}

fn missing(field: &str, grouping: &str) -> Error {
    Error::LabelDictionary(format!("grouping '{grouping}' requires '{field}'"))
}

impl LabelDictionaryFile {
    /// Resolves the file contents; `base` is the directory relative paths start from.
    pub fn resolve(self, base: &Path) -> Result<DictionarySource> {
        if self.version != VERSION {
            return Err(Error::Version(format!("label dictionary version {} (supported: {VERSION})", self.version)));
        }
        match self.grouping {
            Grouping::SpinepsBlocks => {
                let d = LabelDictionary::spineps_blocks();
                Ok(DictionarySource::Blocks(LabelDictionary::new(d.levels().to_vec(), self.ignore)?))
            }
            Grouping::CodeBlocks => {
                let levels = self.levels.ok_or_else(|| missing("levels", "code_blocks"))?;
                let levels = levels.into_iter().map(|(level, codes)| LevelCodes { level, codes }).collect();
                Ok(DictionarySource::Blocks(LabelDictionary::new(levels, self.ignore)?))
            }
            Grouping::InstanceMap => {
                let subregions = self.subregions.ok_or_else(|| missing("subregions", "instance_map"))?;
                let instances = self.instances.ok_or_else(|| missing("instances", "instance_map"))?;
                let path = self.instance_volume.ok_or_else(|| missing("instance_volume", "instance_map"))?;
                let instance_volume = if path.is_absolute() { path } else { base.join(path) };
                Ok(DictionarySource::InstanceMap { subregions, instances, instance_volume, ignore: self.ignore })
            }
        }
    }
}

/// Reads and resolves a label dictionary file.
pub fn read_label_dictionary(path: impl AsRef<Path>) -> Result<DictionarySource> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let file: LabelDictionaryFile = serde_json::from_str(&text).map_err(|e| Error::LabelDictionary(format!("{}: {e}", path.display())))?;
    file.resolve(path.parent().unwrap_or(Path::new(".")))
}

/// Combines a subregion volume and an instance volume on the same grid into a
/// block-coded volume (`1000 * instance + subregion`) and the matching
/// dictionary. Voxels whose instance is undeclared, or whose subregion code is
/// in `ignore`, become background.
pub fn merge_instance_map(
    subregion_volume: &LabelVolume,
    instance_volume: &LabelVolume,
    subregions: &BTreeMap<SubregionLabel, u32>,
    instances: &BTreeMap<String, u32>,
    ignore: &[u32],
) -> Result<(LabelVolume, LabelDictionary)> {
    if subregion_volume.dims() != instance_volume.dims() {
        return Err(Error::InvalidVolume(format!(
            "instance volume dims {:?} differ from subregion volume dims {:?}",
            instance_volume.dims(),
            subregion_volume.dims()
        )));
    }
    if (subregion_volume.frame().matrix() - instance_volume.frame().matrix()).amax() > 1e-4 {
        return Err(Error::InvalidVolume("instance volume affine differs from the subregion volume".into()));
    }
    let sub_of: BTreeMap<u32, SubregionLabel> = subregions.iter().map(|(&s, &c)| (c, s)).collect();
    if sub_of.len() != subregions.len() {
        return Err(Error::LabelDictionary("two subregions share a code".into()));
    }
    let mut known = BTreeMap::new();
    for (level, &inst) in instances {
        if inst == 0 || inst >= 4_000_000 {
            return Err(Error::LabelDictionary(format!("instance value {inst} of {level} is out of range")));
        }
        if known.insert(inst, level.clone()).is_some() {
            return Err(Error::LabelDictionary(format!("instance value {inst} used twice")));
        }
    }

    let mut labels = vec![0u32; subregion_volume.len()];
    for (i, (&s, &inst)) in subregion_volume.labels().iter().zip(instance_volume.labels()).enumerate() {
        if s == 0 || ignore.contains(&s) || !known.contains_key(&inst) {
            continue;
        }
        let sub = sub_of.get(&s).ok_or_else(|| Error::LabelDictionary(format!("subregion code {s} is not declared")))?;
        labels[i] = 1000 * inst + sub.spineps_code();
    }
    let levels = known
        .iter()
        .map(|(&inst, level)| LevelCodes {
            level: level.clone(),
            codes: subregions.keys().map(|&s| (s, 1000 * inst + s.spineps_code())).collect(),
        })
        .collect();
    let dict = LabelDictionary::new(levels, [])?;
    let vol = LabelVolume::new(subregion_volume.dims(), labels, subregion_volume.frame().clone())?;
    Ok((vol, dict))
}
