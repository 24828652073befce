//! Keypoints to skeleton evidence: connection tables per annotation schema,
//! thick-segment rasterization, per-region label assignment and
//! background-confident region detection.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::edt;
use crate::math;
use crate::model::{Keypoint, PartTaxonomy, PersonKeypoints};
use crate::superpixels::SuperPixelPartition;

#[derive(Debug, Clone, PartialEq)]
pub enum SkeletonError {
    /// A builtin table references a part name missing from the taxonomy.
    UnknownPart(String),
    /// A connection row's part label is outside `1..=K`.
    PartLabelOutOfRange { part: usize, max: usize },
}

impl fmt::Display for SkeletonError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkeletonError::UnknownPart(name) => write!(f, "taxonomy has no part named {name}"),
            SkeletonError::PartLabelOutOfRange { part, max } => {
                write!(f, "part label {part} outside 1..={max}")
            }
        }
    }
}

impl core::error::Error for SkeletonError {}

/// One keypoint-pair connection carrying a part label.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionRow {
    pub a: String,
    pub b: String,
    pub part: usize,
}

/// The connection rows of one annotation schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionTable {
    schema: String,
    rows: Vec<ConnectionRow>,
    /// COCO has no neck point; when set, a neck is synthesized at the
    /// shoulder midpoint whenever both shoulders are visible.
    synthesize_neck: bool,
}

const TORSO_ROWS: [(&str, &str); 7] = [
    ("neck", "left_shoulder"),
    ("neck", "right_shoulder"),
    ("neck", "left_hip"),
    ("neck", "right_hip"),
    ("left_shoulder", "left_hip"),
    ("right_shoulder", "right_hip"),
    ("left_hip", "right_hip"),
];

const ARM_ROWS: [(&str, &str); 4] = [
    ("left_shoulder", "left_elbow"),
    ("left_elbow", "left_wrist"),
    ("right_shoulder", "right_elbow"),
    ("right_elbow", "right_wrist"),
];

const LEG_ROWS: [(&str, &str); 4] = [
    ("left_hip", "left_knee"),
    ("left_knee", "left_ankle"),
    ("right_hip", "right_knee"),
    ("right_knee", "right_ankle"),
];

impl ConnectionTable {
    pub fn new(
        schema: impl Into<String>,
        rows: Vec<ConnectionRow>,
        synthesize_neck: bool,
        part_count: usize,
    ) -> Result<Self, SkeletonError> {
        for row in &rows {
            if row.part == 0 || row.part > part_count {
                return Err(SkeletonError::PartLabelOutOfRange {
                    part: row.part,
                    max: part_count,
                });
            }
        }
        Ok(Self {
            schema: schema.into(),
            rows,
            synthesize_neck,
        })
    }

    /// PASCAL-pose schema: forehead/neck head plus the limb chains.
    pub fn pascal(taxonomy: &PartTaxonomy) -> Result<Self, SkeletonError> {
        let label = |name: &str| {
            taxonomy
                .label_of(name)
                .ok_or_else(|| SkeletonError::UnknownPart(name.into()))
        };
        let (head, torso, arm, leg) = (
            label("head")?,
            label("torso")?,
            label("arm")?,
            label("leg")?,
        );
        let mut rows = vec![ConnectionRow {
            a: "forehead".into(),
            b: "neck".into(),
            part: head,
        }];
        rows.extend(body_rows(torso, arm, leg));
        Ok(Self {
            schema: "pascal".into(),
            rows,
            synthesize_neck: false,
        })
    }

    /// COCO schema: nose/eye/ear head, synthesized neck at the shoulder
    /// midpoint when absent.
    pub fn coco(taxonomy: &PartTaxonomy) -> Result<Self, SkeletonError> {
        let label = |name: &str| {
            taxonomy
                .label_of(name)
                .ok_or_else(|| SkeletonError::UnknownPart(name.into()))
        };
        let (head, torso, arm, leg) = (
            label("head")?,
            label("torso")?,
            label("arm")?,
            label("leg")?,
        );
        let mut rows = vec![
            ConnectionRow {
                a: "nose".into(),
                b: "neck".into(),
                part: head,
            },
            ConnectionRow {
                a: "nose".into(),
                b: "left_eye".into(),
                part: head,
            },
            ConnectionRow {
                a: "nose".into(),
                b: "right_eye".into(),
                part: head,
            },
            ConnectionRow {
                a: "left_eye".into(),
                b: "left_ear".into(),
                part: head,
            },
            ConnectionRow {
                a: "right_eye".into(),
                b: "right_ear".into(),
                part: head,
            },
        ];
        rows.extend(body_rows(torso, arm, leg));
        Ok(Self {
            schema: "coco".into(),
            rows,
            synthesize_neck: true,
        })
    }

    pub fn schema(&self) -> &str {
        &self.schema
    }

    pub fn rows(&self) -> &[ConnectionRow] {
        &self.rows
    }

    pub fn synthesizes_neck(&self) -> bool {
        self.synthesize_neck
    }

    /// Rows carrying a given part label.
    pub fn rows_for_part(&self, part: usize) -> usize {
        self.rows.iter().filter(|r| r.part == part).count()
    }
}

fn body_rows(torso: usize, arm: usize, leg: usize) -> Vec<ConnectionRow> {
    let mut rows = Vec::new();
    for (a, b) in TORSO_ROWS {
        rows.push(ConnectionRow {
            a: a.into(),
            b: b.into(),
            part: torso,
        });
    }
    for (a, b) in ARM_ROWS {
        rows.push(ConnectionRow {
            a: a.into(),
            b: b.into(),
            part: arm,
        });
    }
    for (a, b) in LEG_ROWS {
        rows.push(ConnectionRow {
            a: a.into(),
            b: b.into(),
            part: leg,
        });
    }
    rows
}

/// A part-labeled line segment between two keypoint positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub part: usize,
}

/// Connects keypoints into labeled segments, one per satisfied connection
/// row per person. A row is satisfied when both endpoints are present and
/// visible; anything else silently skips the row.
pub fn build_segments(persons: &[PersonKeypoints], table: &ConnectionTable) -> Vec<Segment> {
    let mut segments = Vec::new();
    for person in persons {
        let synthesized_neck = if table.synthesize_neck && person.visible("neck").is_none() {
            match (
                person.visible("left_shoulder"),
                person.visible("right_shoulder"),
            ) {
                (Some(l), Some(r)) => Some(Keypoint {
                    x: (l.x + r.x) / 2.0,
                    y: (l.y + r.y) / 2.0,
                    visible: true,
                }),
                _ => None,
            }
        } else {
            None
        };
        let resolve = |name: &str| -> Option<Keypoint> {
            if name == "neck" {
                if let Some(n) = synthesized_neck {
                    return Some(n);
                }
            }
            person.visible(name).copied()
        };
        for row in &table.rows {
            if let (Some(a), Some(b)) = (resolve(&row.a), resolve(&row.b)) {
                segments.push(Segment {
                    a: (a.x, a.y),
                    b: (b.x, b.y),
                    part: row.part,
                });
            }
        }
    }
    segments
}

/// Part-labeled skeleton pixels. 0 means no skeleton; `provenance` holds
/// the index of the segment that painted each nonzero pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonRaster {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    provenance: Vec<u32>,
    label_count: usize,
}

pub const NO_SEGMENT: u32 = u32::MAX;

impl SkeletonRaster {
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

    /// Index into the segment list for each painted pixel, `NO_SEGMENT`
    /// elsewhere.
    pub fn provenance(&self) -> &[u32] {
        &self.provenance
    }

    /// Number of labels addressed by this raster (max part label + 1).
    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn painted_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

/// Draw priority: torso first, then leg, arm, head, so extremity labels
/// survive at joints. Labels beyond the canonical four draw last, in
/// ascending order.
fn draw_rank(part: usize) -> usize {
    match part {
        2 => 0, // torso
        4 => 1, // leg
        3 => 2, // arm
        1 => 3, // head
        p => 3 + p,
    }
}

fn squared_dist_to_segment(px: f64, py: f64, s: &Segment) -> f64 {
    let (ax, ay) = s.a;
    let (bx, by) = s.b;
    let (dx, dy) = (bx - ax, by - ay);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len_sq).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    (px - cx) * (px - cx) + (py - cy) * (py - cy)
}

/// Rasterizes segments as capsules: every pixel within Euclidean distance
/// `thickness_radius` of a segment takes that segment's part label.
/// Segments draw in priority order (torso, leg, arm, head), later ones
/// overwriting earlier ones.
pub fn rasterize(
    segments: &[Segment],
    width: usize,
    height: usize,
    thickness_radius: f64,
) -> SkeletonRaster {
    assert!(
        thickness_radius >= 0.0,
        "thickness_radius must be nonnegative"
    );
    let label_count = segments.iter().map(|s| s.part).max().unwrap_or(0) + 1;
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by_key(|&i| (draw_rank(segments[i].part), i));

    let mut labels = vec![0u8; width * height];
    let mut provenance = vec![NO_SEGMENT; width * height];
    let r_sq = thickness_radius * thickness_radius;
    for &idx in &order {
        let seg = &segments[idx];
        let x_lo = math::floor(seg.a.0.min(seg.b.0) - thickness_radius).max(0.0) as usize;
        let y_lo = math::floor(seg.a.1.min(seg.b.1) - thickness_radius).max(0.0) as usize;
        let x_hi = (math::ceil(seg.a.0.max(seg.b.0) + thickness_radius) as usize).min(width - 1);
        let y_hi = (math::ceil(seg.a.1.max(seg.b.1) + thickness_radius) as usize).min(height - 1);
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if squared_dist_to_segment(x as f64, y as f64, seg) <= r_sq {
                    labels[y * width + x] = seg.part as u8;
                    provenance[y * width + x] = idx as u32;
                }
            }
        }
    }
    SkeletonRaster {
        width,
        height,
        labels,
        provenance,
        label_count,
    }
}

/// Per-region state derived from skeleton overlap and keypoint distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionState {
    /// Hard part label from skeleton overlap.
    Part(usize),
    /// Every pixel farther than the background threshold from all keypoints.
    Background,
    /// No evidence either way.
    Uncommitted,
}

/// Hard assignments derived for every region of a partition: an optional
/// part label `L_i` from skeleton overlap, a background-confident flag,
/// and the raw per-label overlap counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionEvidence {
    part_label: Vec<Option<usize>>,
    background: Vec<bool>,
    overlap: Vec<Vec<u32>>,
    label_count: usize,
}

impl RegionEvidence {
    pub fn region_count(&self) -> usize {
        self.part_label.len()
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn part_label(&self, region: usize) -> Option<usize> {
        self.part_label[region]
    }

    pub fn is_background(&self, region: usize) -> bool {
        self.background[region]
    }

    pub fn overlap_counts(&self, region: usize) -> &[u32] {
        &self.overlap[region]
    }

    pub fn state(&self, region: usize) -> RegionState {
        match (self.part_label[region], self.background[region]) {
            (Some(l), false) => RegionState::Part(l),
            (None, true) => RegionState::Background,
            (None, false) => RegionState::Uncommitted,
            (Some(_), true) => unreachable!("region both part-labeled and background"),
        }
    }
}

/// Assigns each region overlapping the skeleton the part label with the
/// most overlapped pixels; ties break toward the smaller label index.
pub fn assign_region_labels(
    partition: &SuperPixelPartition,
    raster: &SkeletonRaster,
) -> RegionEvidence {
    assert_eq!(
        (partition.width(), partition.height()),
        (raster.width(), raster.height()),
        "partition and raster dimensions must match"
    );
    let n = partition.region_count();
    let label_count = raster.label_count().max(1);
    let mut overlap = vec![vec![0u32; label_count]; n];
    for (i, &label) in raster.labels().iter().enumerate() {
        if label != 0 {
            overlap[partition.region_of()[i] as usize][label as usize] += 1;
        }
    }
    let part_label = overlap
        .iter()
        .map(|counts| {
            let mut best: Option<usize> = None;
            for (label, &c) in counts.iter().enumerate().skip(1) {
                if c > 0 && best.is_none_or(|b| c > counts[b]) {
                    best = Some(label);
                }
            }
            best
        })
        .collect();
    RegionEvidence {
        part_label,
        background: vec![false; n],
        overlap,
        label_count,
    }
}

/// Flags regions whose every pixel lies farther than `distance_threshold`
/// from all visible keypoints, measured by an exact Euclidean distance
/// transform of the keypoints rounded to pixel positions. Regions already
/// holding a part label are never flagged. With zero visible keypoints the
/// condition is vacuous and every unlabeled region is flagged.
pub fn background_regions(
    partition: &SuperPixelPartition,
    persons: &[PersonKeypoints],
    distance_threshold: f64,
    evidence: &mut RegionEvidence,
) {
    assert!(
        distance_threshold >= 0.0,
        "distance threshold must be nonnegative"
    );
    assert_eq!(
        partition.region_count(),
        evidence.region_count(),
        "evidence/partition mismatch"
    );
    let (w, h) = (partition.width(), partition.height());
    let mut seeds = Vec::new();
    for person in persons {
        for (_, kp) in person.iter() {
            if kp.visible {
                let x = (math::round(kp.x) as isize).clamp(0, w as isize - 1) as usize;
                let y = (math::round(kp.y) as isize).clamp(0, h as isize - 1) as usize;
                seeds.push((x, y));
            }
        }
    }
    let threshold_sq = distance_threshold * distance_threshold;
    let dist_sq = edt::squared_distance_transform(w, h, &seeds);
    let mut min_dist_sq = vec![f64::INFINITY; partition.region_count()];
    for (i, &r) in partition.region_of().iter().enumerate() {
        if dist_sq[i] < min_dist_sq[r as usize] {
            min_dist_sq[r as usize] = dist_sq[i];
        }
    }
    for region in 0..partition.region_count() {
        if evidence.part_label[region].is_none() && min_dist_sq[region] > threshold_sq {
            evidence.background[region] = true;
        }
    }
}
