//! Shared domain types: images, part taxonomies, keypoints, label masks and
//! score maps. Everything here is an immutable value object once built.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Validation failure while constructing a domain value.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// Image or mask with zero width or height.
    ZeroArea,
    /// Buffer length does not match the declared dimensions.
    BufferLength { expected: usize, got: usize },
    /// Taxonomy with no parts.
    EmptyTaxonomy,
    /// Two parts share a name.
    DuplicatePartName(String),
    /// More parts than a `u8` label raster can address.
    TooManyParts(usize),
    /// A mask value exceeds the number of labels.
    LabelOutOfRange { index: usize, value: u8, max: u8 },
    /// A score-map sample is negative or non-finite.
    InvalidScoreValue { channel: usize, index: usize },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::ZeroArea => write!(f, "width and height must both be at least 1"),
            ModelError::BufferLength { expected, got } => {
                write!(
                    f,
                    "buffer length {got} does not match dimensions (expected {expected})"
                )
            }
            ModelError::EmptyTaxonomy => write!(f, "a taxonomy needs at least one part"),
            ModelError::DuplicatePartName(name) => write!(f, "duplicate part name: {name}"),
            ModelError::TooManyParts(n) => write!(f, "{n} parts exceed the 254-part limit"),
            ModelError::LabelOutOfRange { index, value, max } => {
                write!(
                    f,
                    "label {value} at pixel {index} exceeds the maximum label {max}"
                )
            }
            ModelError::InvalidScoreValue { channel, index } => {
                write!(
                    f,
                    "score value at channel {channel}, pixel {index} is negative or not finite"
                )
            }
        }
    }
}

impl core::error::Error for ModelError {}

/// An 8-bit RGB raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::ZeroArea);
        }
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(ModelError::BufferLength {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Single-color image, mostly useful in tests.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ModelError> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let base = (y * self.width + x) * 3;
        [
            self.pixels[base],
            self.pixels[base + 1],
            self.pixels[base + 2],
        ]
    }
}

/// Ordered part names. Label 0 is always the background; part `k` in the
/// list carries label index `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartTaxonomy {
    parts: Vec<String>,
}

/// The background label index.
pub const BACKGROUND: usize = 0;

impl PartTaxonomy {
    pub fn new(parts: Vec<String>) -> Result<Self, ModelError> {
        if parts.is_empty() {
            return Err(ModelError::EmptyTaxonomy);
        }
        if parts.len() > 254 {
            return Err(ModelError::TooManyParts(parts.len()));
        }
        for (i, name) in parts.iter().enumerate() {
            if parts[..i].contains(name) {
                return Err(ModelError::DuplicatePartName(name.clone()));
            }
        }
        Ok(Self { parts })
    }

    /// The four-part human taxonomy: head, torso, arm, leg.
    pub fn human() -> Self {
        Self {
            parts: vec!["head".into(), "torso".into(), "arm".into(), "leg".into()],
        }
    }

    /// Number of parts, excluding background.
    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    /// Number of labels including background, `K + 1`.
    pub fn label_count(&self) -> usize {
        self.parts.len() + 1
    }

    pub fn part_names(&self) -> &[String] {
        &self.parts
    }

    /// Label index of a part name (1-based); background is not a part.
    pub fn label_of(&self, name: &str) -> Option<usize> {
        self.parts.iter().position(|p| p == name).map(|i| i + 1)
    }

    /// Name for a label index; label 0 maps to "background".
    pub fn name_of(&self, label: usize) -> Option<&str> {
        if label == BACKGROUND {
            Some("background")
        } else {
            self.parts.get(label - 1).map(String::as_str)
        }
    }
}

/// One named keypoint. Coordinates are real-valued pixel positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// All keypoints of one person, keyed by name. At most one per name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonKeypoints {
    keypoints: BTreeMap<String, Keypoint>,
}

impl PersonKeypoints {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a keypoint, replacing any previous one with the same name.
    pub fn insert(&mut self, name: impl Into<String>, keypoint: Keypoint) {
        self.keypoints.insert(name.into(), keypoint);
    }

    pub fn get(&self, name: &str) -> Option<&Keypoint> {
        self.keypoints.get(name)
    }

    /// The keypoint if present and visible.
    pub fn visible(&self, name: &str) -> Option<&Keypoint> {
        self.keypoints.get(name).filter(|k| k.visible)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Keypoint)> {
        self.keypoints.iter().map(|(n, k)| (n.as_str(), k))
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Clamps every visible keypoint into `[0, width-1] x [0, height-1]`.
/// Invisible keypoints pass through untouched.
pub fn clamp_keypoints(
    persons: &[PersonKeypoints],
    width: usize,
    height: usize,
) -> Vec<PersonKeypoints> {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    persons
        .iter()
        .map(|person| {
            let mut out = PersonKeypoints::new();
            for (name, kp) in person.iter() {
                let clamped = if kp.visible {
                    Keypoint {
                        x: kp.x.clamp(0.0, max_x),
                        y: kp.y.clamp(0.0, max_y),
                        visible: true,
                    }
                } else {
                    *kp
                };
                out.insert(name, clamped);
            }
            out
        })
        .collect()
}

/// Per-pixel label indices in `0..=K`, row-major. 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::ZeroArea);
        }
        if labels.len() != width * height {
            return Err(ModelError::BufferLength {
                expected: width * height,
                got: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    /// Checks that no value exceeds `max_label`.
    pub fn validate_labels(&self, max_label: u8) -> Result<(), ModelError> {
        for (index, &value) in self.labels.iter().enumerate() {
            if value > max_label {
                return Err(ModelError::LabelOutOfRange {
                    index,
                    value,
                    max: max_label,
                });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Number of pixels carrying any part label.
    pub fn foreground_area(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

/// Collapses part labels to a binary object mask: 1 wherever the input
/// carries any part label, 0 elsewhere.
pub fn mask_to_object(mask: &LabelMask) -> LabelMask {
    let labels = mask.labels.iter().map(|&l| u8::from(l != 0)).collect();
    LabelMask {
        width: mask.width,
        height: mask.height,
        labels,
    }
}

/// Per-pixel class scores, stored channel-major (`channels` full planes).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

/// Tolerance for the per-pixel channel-sum normalization check.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

impl ScoreMap {
    /// Builds a map from channel-major samples, validating shape and that
    /// every value is finite and nonnegative. Normalization is checked
    /// separately with [`ScoreMap::is_normalized`].
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(ModelError::ZeroArea);
        }
        let expected = width * height * channels;
        if values.len() != expected {
            return Err(ModelError::BufferLength {
                expected,
                got: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::InvalidScoreValue {
                    channel: i / (width * height),
                    index: i % (width * height),
                });
            }
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    /// Uniform map: every channel gets `1 / channels` at every pixel.
    pub fn uniform(width: usize, height: usize, channels: usize) -> Self {
        let v = 1.0 / channels as f64;
        Self {
            width,
            height,
            channels,
            values: vec![v; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, channel: usize, x: usize, y: usize) -> f64 {
        self.values[channel * self.width * self.height + y * self.width + x]
    }

    #[cfg(test)]
    fn set(&mut self, channel: usize, x: usize, y: usize, v: f64) {
        self.values[channel * self.width * self.height + y * self.width + x] = v;
    }

    /// Sum over channels at one pixel.
    pub fn channel_sum(&self, x: usize, y: usize) -> f64 {
        (0..self.channels).map(|c| self.value(c, x, y)).sum()
    }

    /// True when every pixel's channel sum is within `tolerance` of 1.
    pub fn is_normalized(&self, tolerance: f64) -> bool {
        let plane = self.width * self.height;
        (0..plane).all(|i| {
            let sum: f64 = (0..self.channels).map(|c| self.values[c * plane + i]).sum();
            (sum - 1.0).abs() <= tolerance
        })
    }

    /// Per-pixel renormalization. Pixels whose channel sum is zero become
    /// uniform.
    pub fn normalized(&self) -> ScoreMap {
        let plane = self.width * self.height;
        let mut values = self.values.clone();
        for i in 0..plane {
            let sum: f64 = (0..self.channels).map(|c| values[c * plane + i]).sum();
            if sum > 0.0 {
                for c in 0..self.channels {
                    values[c * plane + i] /= sum;
                }
            } else {
                let v = 1.0 / self.channels as f64;
                for c in 0..self.channels {
                    values[c * plane + i] = v;
                }
            }
        }
        ScoreMap {
            width: self.width,
            height: self.height,
            channels: self.channels,
            values,
        }
    }

    /// Per-pixel argmax over channels; ties go to the smaller channel.
    pub fn argmax(&self, x: usize, y: usize) -> usize {
        let mut best = 0;
        let mut best_v = self.value(0, x, y);
        for c in 1..self.channels {
            let v = self.value(c, x, y);
            if v > best_v {
                best = c;
                best_v = v;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_zero_area_and_bad_buffers() {
        assert_eq!(ImagePlane::new(0, 4, vec![]), Err(ModelError::ZeroArea));
        assert!(matches!(
            ImagePlane::new(2, 2, vec![0; 5]),
            Err(ModelError::BufferLength {
                expected: 12,
                got: 5
            })
        ));
    }

    #[test]
    fn taxonomy_labels_are_contiguous() {
        let t = PartTaxonomy::human();
        assert_eq!(t.part_count(), 4);
        assert_eq!(t.label_count(), 5);
        assert_eq!(t.label_of("head"), Some(1));
        assert_eq!(t.label_of("leg"), Some(4));
        assert_eq!(t.name_of(0), Some("background"));
        assert_eq!(t.name_of(2), Some("torso"));
        assert_eq!(t.name_of(5), None);
    }

    #[test]
    fn taxonomy_rejects_duplicates() {
        let r = PartTaxonomy::new(vec!["a".into(), "a".into()]);
        assert_eq!(r, Err(ModelError::DuplicatePartName("a".into())));
    }

    #[test]
    fn clamp_moves_outside_points_onto_the_border() {
        let mut p = PersonKeypoints::new();
        p.insert(
            "a",
            Keypoint {
                x: -3.0,
                y: 10.0,
                visible: true,
            },
        );
        p.insert(
            "b",
            Keypoint {
                x: 50.0,
                y: 50.0,
                visible: true,
            },
        );
        p.insert(
            "c",
            Keypoint {
                x: 120.5,
                y: 99.0,
                visible: true,
            },
        );
        p.insert(
            "d",
            Keypoint {
                x: -77.0,
                y: 300.0,
                visible: false,
            },
        );
        let out = clamp_keypoints(&[p], 100, 100);
        assert_eq!(out[0].get("a").unwrap().x, 0.0);
        assert_eq!(out[0].get("a").unwrap().y, 10.0);
        assert_eq!(out[0].get("b").unwrap().x, 50.0);
        // clamp to width-1 by definition of the clamp rule
        assert_eq!(out[0].get("c").unwrap().x, 99.0);
        assert_eq!(out[0].get("c").unwrap().y, 99.0);
        // invisible keypoints pass through untouched
        assert_eq!(out[0].get("d").unwrap().x, -77.0);
        assert_eq!(out[0].get("d").unwrap().y, 300.0);
    }

    #[test]
    fn object_mask_collapses_part_labels() {
        let all_bg = LabelMask::zeros(3, 2);
        assert_eq!(mask_to_object(&all_bg).labels(), &[0; 6]);

        let mask = LabelMask::new(3, 2, vec![0, 1, 3, 0, 3, 1]).unwrap();
        let object = mask_to_object(&mask);
        assert_eq!(object.labels(), &[0, 1, 1, 0, 1, 1]);
        assert_eq!(object.foreground_area(), mask.foreground_area());
    }

    #[test]
    fn score_map_normalization_check() {
        let ok = ScoreMap::uniform(2, 2, 5);
        assert!(ok.is_normalized(SCORE_SUM_TOLERANCE));
        let mut bad = ok.clone();
        bad.set(0, 0, 0, 0.9);
        assert!(!bad.is_normalized(SCORE_SUM_TOLERANCE));
        let renorm = bad.normalized();
        assert!(renorm.is_normalized(SCORE_SUM_TOLERANCE));
    }

    #[test]
    fn score_map_rejects_negative_values() {
        let r = ScoreMap::new(1, 1, 2, vec![0.5, -0.5]);
        assert_eq!(
            r,
            Err(ModelError::InvalidScoreValue {
                channel: 1,
                index: 0
            })
        );
    }

    #[test]
    fn mask_label_validation_names_the_pixel() {
        let mask = LabelMask::new(2, 1, vec![1, 9]).unwrap();
        assert_eq!(
            mask.validate_labels(4),
            Err(ModelError::LabelOutOfRange {
                index: 1,
                value: 9,
                max: 4
            })
        );
    }
}
