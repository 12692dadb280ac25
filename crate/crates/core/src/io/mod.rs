//! Files in and out: NIfTI label volumes, label dictionaries, landmark
//! documents, 3D Slicer markups, phantom specs and orientation reports.
//!
//! Every writer is deterministic: identical inputs give identical bytes.

mod labels;
pub mod nifti;
mod phantom;
mod poi_json;
mod report;
mod slicer;

pub use labels::{merge_instance_map, read_label_dictionary, DictionarySource, LabelDictionaryFile};
pub use nifti::{encode_label_volume, parse_label_volume, read_label_volume, write_label_volume};
pub use phantom::{read_phantom_spec, truth_to_json, write_phantom_spec, write_truth_json, TRUTH_ROLE};
pub use poi_json::{poi_from_json, poi_to_json, read_poi_json, write_poi_json, POI_FORMAT, POI_VERSION};
pub use report::{orientation_report_csv, orientation_report_json, orientation_table};
pub use slicer::{export_slicer, import_slicer, slicer_document, SLICER_SCHEMA};

use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// `x` rounded to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Pretty JSON with a trailing newline.
fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json_bytes(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(round_sig9(123.456789012), 123.456789);
        assert_eq!(round_sig9(-0.000123456789049), -0.000123456789);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(serde_json::to_string(&round_sig9(1.0 / 3.0)).unwrap(), "0.333333333");
    }
}
