//! Dataset manifests: a JSON index naming the keypoint file and, per
//! record, the image plus optional ground-truth mask and external score
//! maps. Paths resolve relative to the manifest's directory and all
//! referenced data is loaded and dimension-checked up front.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use partcut_core::model::{ImagePlane, LabelMask, PartTaxonomy, PersonKeypoints, ScoreMap};

use crate::formats::{self, FormatError};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    keypoints: String,
    records: Vec<RecordEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordEntry {
    image: String,
    #[serde(default)]
    gt_mask: Option<String>,
    #[serde(default)]
    scores: Option<String>,
}

/// One fully loaded dataset record.
#[derive(Debug, Clone)]
pub struct DatasetRecord {
    /// Image file stem, used to name per-image outputs.
    pub name: String,
    pub image_path: PathBuf,
    pub image: ImagePlane,
    pub persons: Vec<PersonKeypoints>,
    pub ground_truth: Option<LabelMask>,
    pub scores: Option<ScoreMap>,
}

/// A loaded dataset plus the annotation schema it uses.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: String,
    pub records: Vec<DatasetRecord>,
    pub warnings: Vec<String>,
}

fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads a manifest document:
/// `{"keypoints": "keypoints.json", "records": [{"image": ...,
/// "gt_mask": ..., "scores": ...}]}`.
///
/// Keypoint entries are matched to records by image file name. Records
/// without keypoint annotations load with zero persons and a warning.
pub fn load_manifest(path: &Path, taxonomy: &PartTaxonomy) -> Result<Dataset, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest: ManifestFile = serde_json::from_str(&text).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));

    let keypoint_path = resolve(base, &manifest.keypoints);
    let keypoints = formats::load_keypoints(&keypoint_path)?;
    let mut warnings = keypoints.warnings.clone();

    let max_label = (taxonomy.label_count() - 1) as u8;
    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        let image_path = resolve(base, &entry.image);
        let image = formats::load_image(&image_path)?;
        let file_name = image_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| entry.image.clone());
        let name = image_path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| entry.image.clone());

        let persons = match keypoints.persons_for(&file_name) {
            Some(p) => p.to_vec(),
            None => {
                warnings.push(format!("{file_name}: no keypoint annotations found"));
                Vec::new()
            }
        };

        let ground_truth = match &entry.gt_mask {
            Some(rel) => {
                let mask_path = resolve(base, rel);
                let mask = formats::load_mask(&mask_path, max_label)?;
                if (mask.width(), mask.height()) != (image.width(), image.height()) {
                    return Err(FormatError::Data {
                        path: mask_path,
                        message: format!(
                            "ground-truth mask is {}x{} but the image is {}x{}",
                            mask.width(),
                            mask.height(),
                            image.width(),
                            image.height()
                        ),
                    });
                }
                Some(mask)
            }
            None => None,
        };

        let scores = match &entry.scores {
            Some(rel) => {
                let score_path = resolve(base, rel);
                let map = formats::load_scores(&score_path)?;
                if (map.width(), map.height()) != (image.width(), image.height()) {
                    return Err(FormatError::Data {
                        path: score_path,
                        message: format!(
                            "score map is {}x{} but the image is {}x{}",
                            map.width(),
                            map.height(),
                            image.width(),
                            image.height()
                        ),
                    });
                }
                Some(map)
            }
            None => None,
        };

        records.push(DatasetRecord {
            name,
            image_path,
            image,
            persons,
            ground_truth,
            scores,
        });
    }
    Ok(Dataset {
        schema: keypoints.schema,
        records,
        warnings,
    })
}
