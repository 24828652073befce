//! File formats: keypoint annotation JSON, pipeline config JSON, 8-bit
//! mask rasters, float32 score-map blobs, CSV metric reports and overlay
//! renderings.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use partcut_core::evaluation::IouReport;
use partcut_core::model::{
    ImagePlane, Keypoint, LabelMask, PartTaxonomy, PersonKeypoints, ScoreMap,
};
use partcut_core::pipeline::{IterationReport, PipelineConfig};
use partcut_core::skeleton::{ConnectionRow, ConnectionTable};

#[derive(Error, Debug)]
pub enum FormatError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: malformed JSON: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema \"{got}\"; supported schemas: pascal, coco")]
    UnknownSchema { got: String },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("image codec error for {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
}

fn read_to_string(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn json_error(path: &Path, e: serde_json::Error) -> FormatError {
    FormatError::Json {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Keypoint annotations
// ---------------------------------------------------------------------------

pub const PASCAL_KEYPOINT_NAMES: [&str; 14] = [
    "forehead",
    "neck",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub const COCO_KEYPOINT_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub fn schema_keypoint_names(schema: &str) -> Option<&'static [&'static str]> {
    match schema {
        "pascal" => Some(&PASCAL_KEYPOINT_NAMES),
        "coco" => Some(&COCO_KEYPOINT_NAMES),
        _ => None,
    }
}

/// Builds the compiled-in connection table for a schema name.
pub fn connection_table_for(
    schema: &str,
    taxonomy: &PartTaxonomy,
) -> Result<ConnectionTable, FormatError> {
    let table = match schema {
        "pascal" => ConnectionTable::pascal(taxonomy),
        "coco" => ConnectionTable::coco(taxonomy),
        other => {
            return Err(FormatError::UnknownSchema {
                got: other.to_string(),
            })
        }
    };
    table.map_err(|e| FormatError::Data {
        path: PathBuf::new(),
        message: format!("taxonomy does not fit the {schema} schema: {e}"),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointDocument {
    schema: String,
    images: Vec<KeypointImage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointImage {
    file: String,
    persons: Vec<KeypointPerson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointPerson {
    keypoints: BTreeMap<String, (f64, f64, u8)>,
}

/// Parsed keypoint annotations for a whole dataset, keyed by image file
/// name. Unknown keypoint names are dropped with a warning.
#[derive(Debug, Clone)]
pub struct LoadedKeypoints {
    pub schema: String,
    images: BTreeMap<String, Vec<PersonKeypoints>>,
    pub warnings: Vec<String>,
}

impl LoadedKeypoints {
    pub fn persons_for(&self, file_name: &str) -> Option<&[PersonKeypoints]> {
        self.images.get(file_name).map(Vec::as_slice)
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }
}

/// Loads a keypoint annotation document:
/// `{"schema": "pascal"|"coco", "images": [{"file": ..., "persons":
/// [{"keypoints": {"name": [x, y, v], ...}}]}]}`.
/// A visibility flag of 0 marks the keypoint invisible.
pub fn load_keypoints(path: &Path) -> Result<LoadedKeypoints, FormatError> {
    let text = read_to_string(path)?;
    let document: KeypointDocument =
        serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    let known = schema_keypoint_names(&document.schema).ok_or(FormatError::UnknownSchema {
        got: document.schema.clone(),
    })?;

    let mut warnings = Vec::new();
    let mut images = BTreeMap::new();
    for image in document.images {
        let mut persons = Vec::with_capacity(image.persons.len());
        for (person_index, person) in image.persons.into_iter().enumerate() {
            let mut out = PersonKeypoints::new();
            for (name, (x, y, visibility)) in person.keypoints {
                if !known.contains(&name.as_str()) {
                    warnings.push(format!(
                        "{}: person {person_index}: ignoring unknown keypoint \"{name}\"",
                        image.file
                    ));
                    continue;
                }
                out.insert(
                    name,
                    Keypoint {
                        x,
                        y,
                        visible: visibility != 0,
                    },
                );
            }
            persons.push(out);
        }
        images.insert(image.file, persons);
    }
    Ok(LoadedKeypoints {
        schema: document.schema,
        images,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ConnectionOverride {
    /// Rows as `[keypoint_a, keypoint_b, part_name]`.
    pub rows: Vec<(String, String, String)>,
    pub synthesize_neck: bool,
}

/// The JSON-facing configuration. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub superpixel_scale: f64,
    pub superpixel_min_size: usize,
    pub smoothing_sigma: f64,
    pub thickness_radius: f64,
    pub background_distance: f64,
    pub large_value: f64,
    pub omega_color: f64,
    pub omega_position: f64,
    pub omega_texture: f64,
    pub sigma_color: Option<f64>,
    pub sigma_position: Option<f64>,
    pub sigma_texture: Option<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub scorer_learning_rate: f64,
    pub scorer_epochs: usize,
    pub scorer_l2: f64,
    pub loss_weight_part: f64,
    pub loss_weight_object: f64,
    pub loss_weight_refined: f64,
    /// Part names; label k is `parts[k - 1]`, background is label 0.
    pub parts: Vec<String>,
    /// Optional per-schema connection-table replacements.
    pub connections: BTreeMap<String, ConnectionOverride>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let c = PipelineConfig::default();
        Self {
            superpixel_scale: c.superpixel_scale,
            superpixel_min_size: c.superpixel_min_size,
            smoothing_sigma: c.smoothing_sigma,
            thickness_radius: c.thickness_radius,
            background_distance: c.background_distance,
            large_value: c.large_value,
            omega_color: c.omega_color,
            omega_position: c.omega_position,
            omega_texture: c.omega_texture,
            sigma_color: c.sigma_color,
            sigma_position: c.sigma_position,
            sigma_texture: c.sigma_texture,
            lambda: c.lambda,
            mu: c.mu,
            epsilon: c.epsilon,
            iterations: c.iterations,
            scorer_learning_rate: c.scorer_learning_rate,
            scorer_epochs: c.scorer_epochs,
            scorer_l2: c.scorer_l2,
            loss_weight_part: c.loss_weight_part,
            loss_weight_object: c.loss_weight_object,
            loss_weight_refined: c.loss_weight_refined,
            parts: vec!["head".into(), "torso".into(), "arm".into(), "leg".into()],
            connections: BTreeMap::new(),
        }
    }
}

impl ConfigFile {
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            superpixel_scale: self.superpixel_scale,
            superpixel_min_size: self.superpixel_min_size,
            smoothing_sigma: self.smoothing_sigma,
            thickness_radius: self.thickness_radius,
            background_distance: self.background_distance,
            large_value: self.large_value,
            omega_color: self.omega_color,
            omega_position: self.omega_position,
            omega_texture: self.omega_texture,
            sigma_color: self.sigma_color,
            sigma_position: self.sigma_position,
            sigma_texture: self.sigma_texture,
            lambda: self.lambda,
            mu: self.mu,
            epsilon: self.epsilon,
            iterations: self.iterations,
            scorer_learning_rate: self.scorer_learning_rate,
            scorer_epochs: self.scorer_epochs,
            scorer_l2: self.scorer_l2,
            loss_weight_part: self.loss_weight_part,
            loss_weight_object: self.loss_weight_object,
            loss_weight_refined: self.loss_weight_refined,
        }
    }

    pub fn taxonomy(&self) -> Result<PartTaxonomy, FormatError> {
        PartTaxonomy::new(self.parts.clone()).map_err(|e| FormatError::Data {
            path: PathBuf::new(),
            message: format!("invalid part list: {e}"),
        })
    }

    /// The connection table for a schema: the config override when present,
    /// otherwise the compiled-in default.
    pub fn connection_table(
        &self,
        schema: &str,
        taxonomy: &PartTaxonomy,
    ) -> Result<ConnectionTable, FormatError> {
        match self.connections.get(schema) {
            None => connection_table_for(schema, taxonomy),
            Some(over) => {
                let mut rows = Vec::with_capacity(over.rows.len());
                for (a, b, part_name) in &over.rows {
                    let part = taxonomy
                        .label_of(part_name)
                        .ok_or_else(|| FormatError::Data {
                            path: PathBuf::new(),
                            message: format!(
                                "connection override names unknown part \"{part_name}\""
                            ),
                        })?;
                    rows.push(ConnectionRow {
                        a: a.clone(),
                        b: b.clone(),
                        part,
                    });
                }
                ConnectionTable::new(schema, rows, over.synthesize_neck, taxonomy.part_count())
                    .map_err(|e| FormatError::Data {
                        path: PathBuf::new(),
                        message: format!("invalid connection override: {e}"),
                    })
            }
        }
    }
}

pub fn load_config(path: &Path) -> Result<ConfigFile, FormatError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| json_error(path, e))
}

pub fn save_config(config: &ConfigFile, path: &Path) -> Result<(), FormatError> {
    let text = serde_json::to_string_pretty(config).expect("config serializes");
    fs::write(path, text).map_err(|source| FormatError::Write {
        path: path.into(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

/// Writes a mask as an 8-bit grayscale PNG whose pixel values are the label
/// indices. The round trip through [`load_mask`] is bit-identical.
pub fn save_mask(mask: &LabelMask, path: &Path) -> Result<(), FormatError> {
    let buffer = GrayImage::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        mask.labels().to_vec(),
    )
    .expect("mask buffer length matches dimensions");
    buffer.save(path).map_err(|source| FormatError::Image {
        path: path.into(),
        source,
    })
}

/// Loads an 8-bit grayscale PNG as a label mask, rejecting any pixel value
/// above `max_label` with the offending pixel index.
pub fn load_mask(path: &Path, max_label: u8) -> Result<LabelMask, FormatError> {
    let decoded = ImageReader::open(path)
        .map_err(|source| FormatError::Read {
            path: path.into(),
            source,
        })?
        .decode()
        .map_err(|source| FormatError::Image {
            path: path.into(),
            source,
        })?;
    let gray = match decoded {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(FormatError::Data {
                path: path.into(),
                message: format!(
                    "mask must be an 8-bit grayscale raster, found {:?}",
                    other.color()
                ),
            })
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mask = LabelMask::new(w, h, gray.into_raw()).map_err(|e| FormatError::Data {
        path: path.into(),
        message: e.to_string(),
    })?;
    mask.validate_labels(max_label)
        .map_err(|e| FormatError::Data {
            path: path.into(),
            message: e.to_string(),
        })?;
    Ok(mask)
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

pub fn load_image(path: &Path) -> Result<ImagePlane, FormatError> {
    let decoded = ImageReader::open(path)
        .map_err(|source| FormatError::Read {
            path: path.into(),
            source,
        })?
        .decode()
        .map_err(|source| FormatError::Image {
            path: path.into(),
            source,
        })?;
    let rgb = decoded.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    ImagePlane::new(w, h, rgb.into_raw()).map_err(|e| FormatError::Data {
        path: path.into(),
        message: e.to_string(),
    })
}

pub fn save_image(image: &ImagePlane, path: &Path) -> Result<(), FormatError> {
    let buffer = RgbImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.pixels().to_vec(),
    )
    .expect("image buffer length matches dimensions");
    buffer.save(path).map_err(|source| FormatError::Image {
        path: path.into(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Score-map blobs
// ---------------------------------------------------------------------------

/// Writes a score map as raw little-endian data: a header of three u32
/// values (width, height, channels) followed by channel-major float32
/// planes.
pub fn save_scores(map: &ScoreMap, path: &Path) -> Result<(), FormatError> {
    let mut bytes = Vec::with_capacity(12 + map.values().len() * 4);
    bytes.extend_from_slice(&(map.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(map.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&(map.channels() as u32).to_le_bytes());
    for &v in map.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| FormatError::Write {
        path: path.into(),
        source,
    })
}

pub fn load_scores(path: &Path) -> Result<ScoreMap, FormatError> {
    let bytes = fs::read(path).map_err(|source| FormatError::Read {
        path: path.into(),
        source,
    })?;
    let data_error = |message: String| FormatError::Data {
        path: path.into(),
        message,
    };
    if bytes.len() < 12 {
        return Err(data_error(
            "score blob shorter than its 12-byte header".into(),
        ));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (u32_at(0), u32_at(4), u32_at(8));
    let expected = 12 + w * h * c * 4;
    if bytes.len() != expected {
        return Err(data_error(format!(
            "score blob is {} bytes but header {w}x{h}x{c} implies {expected}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|chunk| f32::from_le_bytes(chunk.try_into().unwrap()) as f64)
        .collect();
    ScoreMap::new(w, h, c, values).map_err(|e| data_error(e.to_string()))
}

// ---------------------------------------------------------------------------
// Overlays
// ---------------------------------------------------------------------------

const PART_PALETTE: [[u8; 3]; 8] = [
    [255, 0, 0],   // head: red
    [0, 255, 0],   // torso: green
    [0, 0, 255],   // arm: blue
    [255, 255, 0], // leg: yellow
    [255, 0, 255],
    [0, 255, 255],
    [255, 128, 0],
    [128, 0, 255],
];

/// Fixed palette: background maps to black, part label `k` to
/// `PART_PALETTE[(k - 1) % 8]`.
pub fn palette_color(label: u8) -> [u8; 3] {
    if label == 0 {
        [0, 0, 0]
    } else {
        PART_PALETTE[(label as usize - 1) % PART_PALETTE.len()]
    }
}

/// Alpha blend at 0.5 with round-half-up: `(image + palette + 1) / 2`.
pub fn blend_channel(image_value: u8, palette_value: u8) -> u8 {
    (image_value as u16 + palette_value as u16).div_ceil(2) as u8
}

/// Renders the mask palette over the image at 50% opacity.
pub fn save_overlay(image: &ImagePlane, mask: &LabelMask, path: &Path) -> Result<(), FormatError> {
    if (image.width(), image.height()) != (mask.width(), mask.height()) {
        return Err(FormatError::Data {
            path: path.into(),
            message: "overlay image and mask dimensions must match".into(),
        });
    }
    let mut pixels = Vec::with_capacity(image.pixels().len());
    for (i, &label) in mask.labels().iter().enumerate() {
        let color = palette_color(label);
        for c in 0..3 {
            pixels.push(blend_channel(image.pixels()[i * 3 + c], color[c]));
        }
    }
    let buffer = RgbImage::from_raw(image.width() as u32, image.height() as u32, pixels)
        .expect("buffer length matches");
    buffer.save(path).map_err(|source| FormatError::Image {
        path: path.into(),
        source,
    })
}

// ---------------------------------------------------------------------------
// CSV reports
// ---------------------------------------------------------------------------

fn iou_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => "na".into(),
    }
}

/// Renders one IoU report as `class,iou` rows followed by mean and object
/// lines, with parts in taxonomy order and background after them.
pub fn report_csv(report: &IouReport, taxonomy: &PartTaxonomy) -> String {
    let mut out = String::from("class,iou\n");
    for (index, name) in taxonomy.part_names().iter().enumerate() {
        out.push_str(&format!(
            "{name},{}\n",
            iou_cell(report.per_class[index + 1])
        ));
    }
    out.push_str(&format!("background,{}\n", iou_cell(report.per_class[0])));
    out.push_str(&format!("mean,{}\n", iou_cell(report.mean)));
    out.push_str(&format!("object,{}\n", iou_cell(report.object)));
    out
}

pub fn write_report(
    report: &IouReport,
    taxonomy: &PartTaxonomy,
    path: &Path,
) -> Result<(), FormatError> {
    fs::write(path, report_csv(report, taxonomy)).map_err(|source| FormatError::Write {
        path: path.into(),
        source,
    })
}

/// Renders per-iteration refinement metrics in wide table form:
/// `iteration,<parts...>,background,mean,object`.
pub fn refine_metrics_csv(iterations: &[IterationReport], taxonomy: &PartTaxonomy) -> String {
    let mut out = String::from("iteration");
    for name in taxonomy.part_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",background,mean,object,degenerate_scorer\n");
    for entry in iterations {
        out.push_str(&entry.iteration.to_string());
        match &entry.report {
            Some(r) => {
                for index in 0..taxonomy.part_count() {
                    out.push(',');
                    out.push_str(&iou_cell(r.per_class[index + 1]));
                }
                out.push(',');
                out.push_str(&iou_cell(r.per_class[0]));
                out.push(',');
                out.push_str(&iou_cell(r.mean));
                out.push(',');
                out.push_str(&iou_cell(r.object));
            }
            None => {
                for _ in 0..taxonomy.part_count() + 3 {
                    out.push_str(",na");
                }
            }
        }
        out.push(',');
        out.push_str(if entry.degenerate_scorer { "yes" } else { "no" });
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    let mut file = fs::File::create(path).map_err(|source| FormatError::Write {
        path: path.into(),
        source,
    })?;
    file.write_all(text.as_bytes())
        .map_err(|source| FormatError::Write {
            path: path.into(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blend_rounds_half_up() {
        // (200, 0, 0) under head red (255, 0, 0): (200 + 255) / 2 = 227.5
        assert_eq!(blend_channel(200, 255), 228);
        assert_eq!(blend_channel(0, 0), 0);
        assert_eq!(blend_channel(255, 255), 255);
        // all-background overlay halves the image values, rounding up
        assert_eq!(blend_channel(101, 0), 51);
        assert_eq!(blend_channel(100, 0), 50);
    }

    #[test]
    fn palette_is_stable() {
        assert_eq!(palette_color(0), [0, 0, 0]);
        assert_eq!(palette_color(1), [255, 0, 0]);
        assert_eq!(palette_color(2), [0, 255, 0]);
        assert_eq!(palette_color(3), [0, 0, 255]);
        assert_eq!(palette_color(4), [255, 255, 0]);
    }

    #[test]
    fn default_config_round_trips_through_json() {
        let config = ConfigFile::default();
        let text = serde_json::to_string(&config).unwrap();
        let back: ConfigFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.pipeline_config(), config.pipeline_config());
        assert_eq!(back.parts, config.parts);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let text = r#"{"superpixel_scale": 10.0, "superpixle_min_size": 3}"#;
        let result: Result<ConfigFile, _> = serde_json::from_str(text);
        let message = result.unwrap_err().to_string();
        assert!(message.contains("superpixle_min_size"), "got: {message}");
    }

    #[test]
    fn report_csv_shape() {
        let taxonomy = PartTaxonomy::human();
        let report = IouReport {
            per_class: vec![Some(0.9), Some(0.5), None, Some(0.25), Some(0.125)],
            mean: Some(0.44375),
            object: Some(0.5),
        };
        let csv = report_csv(&report, &taxonomy);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,iou");
        assert_eq!(lines[1], "head,0.500000");
        assert_eq!(lines[2], "torso,na");
        assert_eq!(lines[5], "background,0.900000");
        assert_eq!(lines[6], "mean,0.443750");
        assert_eq!(lines[7], "object,0.500000");
    }
}
