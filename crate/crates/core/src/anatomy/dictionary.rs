use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{level_to_vid, vid_to_level, SubregionLabel};
use crate::error::{Error, Result};

/// Label codes of one vertebra level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelCodes {
    pub level: String,
    pub codes: BTreeMap<SubregionLabel, u32>,
}

/// Maps `(level, subregion)` to the integer code used in a label volume.
///
/// Codes listed in `ignored` may appear in a volume without belonging to any
/// vertebra (discs, endplates, spinal canal, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDictionary {
    levels: Vec<LevelCodes>,
    ignored: BTreeSet<u32>,
}

impl LabelDictionary {
    pub fn new(levels: Vec<LevelCodes>, ignored: impl IntoIterator<Item = u32>) -> Result<Self> {
        let ignored: BTreeSet<u32> = ignored.into_iter().collect();
        let mut seen_levels = BTreeSet::new();
        let mut seen_codes: HashMap<u32, (String, SubregionLabel)> = HashMap::new();
        for lc in &levels {
            if lc.level.is_empty() {
                return Err(Error::LabelDictionary("empty level name".into()));
            }
            if !seen_levels.insert(lc.level.clone()) {
                return Err(Error::LabelDictionary(format!("level '{}' declared twice", lc.level)));
            }
            if !lc.codes.contains_key(&SubregionLabel::Corpus) {
                return Err(Error::LabelDictionary(format!("level '{}' has no corpus code", lc.level)));
            }
            for (&sub, &code) in &lc.codes {
                if code == 0 {
                    return Err(Error::LabelDictionary(format!("{}/{sub}: code 0 is background", lc.level)));
                }
                if ignored.contains(&code) {
                    return Err(Error::LabelDictionary(format!("{}/{sub}: code {code} is also ignored", lc.level)));
                }
                if let Some((l, s)) = seen_codes.insert(code, (lc.level.clone(), sub)) {
                    return Err(Error::LabelDictionary(format!(
                        "code {code} assigned to both {l}/{s} and {}/{sub}",
                        lc.level
                    )));
                }
            }
        }
        if levels.is_empty() {
            return Err(Error::LabelDictionary("no levels declared".into()));
        }
        Ok(Self { levels, ignored })
    }

    /// Per-vertebra code blocks: `100 * v_id + subregion code`, with the SPINEPS
    /// subregion codes (corpus 50, arcus 41, spinosus 42, ...), for C1 through S1.
    pub fn spineps_blocks() -> Self {
        let levels = (1..=26)
            .map(|v| LevelCodes {
                level: vid_to_level(v).expect("standard level"),
                codes: SubregionLabel::ALL
                    .iter()
                    .map(|&s| (s, 100 * v + s.spineps_code()))
                    .collect(),
            })
            .collect();
        Self::new(levels, []).expect("default dictionary is valid")
    }

    /// Code block for a single level under [`LabelDictionary::spineps_blocks`].
    pub fn spineps_code(level: &str, sub: SubregionLabel) -> Option<u32> {
        level_to_vid(level).map(|v| 100 * v + sub.spineps_code())
    }

    pub fn levels(&self) -> &[LevelCodes] {
        &self.levels
    }

    pub fn ignored(&self) -> &BTreeSet<u32> {
        &self.ignored
    }

    pub fn code(&self, level: &str, sub: SubregionLabel) -> Option<u32> {
        self.levels
            .iter()
            .find(|l| l.level == level)
            .and_then(|l| l.codes.get(&sub).copied())
    }

    /// Reverse lookup table: code -> (level position, subregion).
    pub fn reverse(&self) -> HashMap<u32, (usize, SubregionLabel)> {
        let mut out = HashMap::new();
        for (i, lc) in self.levels.iter().enumerate() {
            for (&sub, &code) in &lc.codes {
                out.insert(code, (i, sub));
            }
        }
        out
    }

    /// Restricts the dictionary to the given levels (keeps ignored codes).
    pub fn retain_levels(&self, keep: &[&str]) -> Result<Self> {
        Self::new(
            self.levels.iter().filter(|l| keep.contains(&l.level.as_str())).cloned().collect(),
            self.ignored.iter().copied(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(name: &str, base: u32) -> LevelCodes {
        LevelCodes {
            level: name.into(),
            codes: [(SubregionLabel::Corpus, base), (SubregionLabel::Arcus, base + 1)].into_iter().collect(),
        }
    }

    #[test]
    fn default_blocks_are_injective() {
        let d = LabelDictionary::spineps_blocks();
        assert_eq!(d.levels().len(), 26);
        assert_eq!(d.reverse().len(), 26 * 9);
        assert_eq!(d.code("L4", SubregionLabel::Corpus), Some(2350));
        assert_eq!(LabelDictionary::spineps_code("C1", SubregionLabel::Arcus), Some(141));
    }

    #[test]
    fn rejects_duplicate_codes() {
        let err = LabelDictionary::new(vec![level("L1", 10), level("L2", 11)], []).unwrap_err();
        assert!(matches!(err, Error::LabelDictionary(_)));
    }

    #[test]
    fn rejects_missing_corpus_and_zero_codes() {
        let mut l = level("L1", 10);
        l.codes.remove(&SubregionLabel::Corpus);
        assert!(LabelDictionary::new(vec![l], []).is_err());
        assert!(LabelDictionary::new(vec![level("L1", 0)], []).is_err());
        assert!(LabelDictionary::new(vec![level("L1", 10)], [11]).is_err());
        assert!(LabelDictionary::new(vec![level("L1", 10), level("L1", 20)], []).is_err());
    }
}
