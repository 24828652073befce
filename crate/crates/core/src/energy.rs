//! Energy terms over the region graph: histogram features, skeleton and
//! score-map unary cost tables, contrast-sensitive Potts pairwise weights,
//! and total labeling energy.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::model::{ImagePlane, PartTaxonomy, ScoreMap};
use crate::skeleton::RegionEvidence;
use crate::superpixels::{AdjacencyGraph, SuperPixelPartition};

pub const COLOR_DIM: usize = 24;
pub const POSITION_DIM: usize = 16;
pub const TEXTURE_DIM: usize = 8;

/// Dimensionality of the concatenated per-region feature vector.
pub const FEATURE_DIM: usize = COLOR_DIM + POSITION_DIM + TEXTURE_DIM;

/// Per-region appearance histograms: color (8 bins per RGB channel, each
/// channel block L1-normalized), position (4x4 spatial cells) and texture
/// (8 gradient-orientation bins, magnitude weighted).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    region_count: usize,
    color: Vec<f64>,
    position: Vec<f64>,
    texture: Vec<f64>,
}

impl FeatureSet {
    /// Assembles a feature set from raw histogram blocks (color 24 values
    /// per region, position 16, texture 8); useful for synthetic fixtures.
    pub fn from_parts(
        region_count: usize,
        color: Vec<f64>,
        position: Vec<f64>,
        texture: Vec<f64>,
    ) -> Self {
        assert_eq!(color.len(), region_count * COLOR_DIM);
        assert_eq!(position.len(), region_count * POSITION_DIM);
        assert_eq!(texture.len(), region_count * TEXTURE_DIM);
        Self {
            region_count,
            color,
            position,
            texture,
        }
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn color_of(&self, region: usize) -> &[f64] {
        &self.color[region * COLOR_DIM..(region + 1) * COLOR_DIM]
    }

    pub fn position_of(&self, region: usize) -> &[f64] {
        &self.position[region * POSITION_DIM..(region + 1) * POSITION_DIM]
    }

    pub fn texture_of(&self, region: usize) -> &[f64] {
        &self.texture[region * TEXTURE_DIM..(region + 1) * TEXTURE_DIM]
    }

    /// Color, position and texture concatenated (48 values).
    pub fn concatenated(&self, region: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(FEATURE_DIM);
        out.extend_from_slice(self.color_of(region));
        out.extend_from_slice(self.position_of(region));
        out.extend_from_slice(self.texture_of(region));
        out
    }
}

fn luminance(rgb: [u8; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

/// Extracts per-region histogram features from the image.
///
/// Gradients use central differences on luminance with clamped borders.
/// Zero-magnitude pixels spread one unit of weight uniformly over all 8
/// orientation bins, so constant regions come out uniform.
pub fn extract_features(image: &ImagePlane, partition: &SuperPixelPartition) -> FeatureSet {
    assert_eq!(
        (image.width(), image.height()),
        (partition.width(), partition.height()),
        "image and partition dimensions must match"
    );
    let (w, h) = (image.width(), image.height());
    let n = partition.region_count();
    let mut color = vec![0.0f64; n * COLOR_DIM];
    let mut position = vec![0.0f64; n * POSITION_DIM];
    let mut texture = vec![0.0f64; n * TEXTURE_DIM];
    let mut texture_mass = vec![0.0f64; n];

    let lum: Vec<f64> = (0..w * h)
        .map(|i| luminance(image.rgb(i % w, i / w)))
        .collect();

    for y in 0..h {
        for x in 0..w {
            let region = partition.region_at(x, y);
            let rgb = image.rgb(x, y);
            for c in 0..3 {
                let bin = (rgb[c] >> 5) as usize; // 8 bins per channel
                color[region * COLOR_DIM + c * 8 + bin] += 1.0;
            }
            let cx = (4 * x / w).min(3);
            let cy = (4 * y / h).min(3);
            position[region * POSITION_DIM + cy * 4 + cx] += 1.0;

            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(h - 1);
            let gx = (lum[y * w + xr] - lum[y * w + xl]) / 2.0;
            let gy = (lum[yd * w + x] - lum[yu * w + x]) / 2.0;
            let mag = math::sqrt(gx * gx + gy * gy);
            if mag == 0.0 {
                for bin in 0..TEXTURE_DIM {
                    texture[region * TEXTURE_DIM + bin] += 1.0 / TEXTURE_DIM as f64;
                }
                texture_mass[region] += 1.0;
            } else {
                let angle = math::atan2(gy, gx); // (-pi, pi]
                let bin =
                    ((math::floor((angle + core::f64::consts::PI) / (core::f64::consts::PI / 4.0)))
                        as usize)
                        .min(TEXTURE_DIM - 1);
                texture[region * TEXTURE_DIM + bin] += mag;
                texture_mass[region] += mag;
            }
        }
    }

    for region in 0..n {
        let count = partition.regions()[region].pixel_count as f64;
        debug_assert!(count > 0.0, "empty region");
        for c in 0..3 {
            for bin in 0..8 {
                color[region * COLOR_DIM + c * 8 + bin] /= count;
            }
        }
        for cell in 0..POSITION_DIM {
            position[region * POSITION_DIM + cell] /= count;
        }
        let mass = texture_mass[region];
        debug_assert!(mass > 0.0);
        for bin in 0..TEXTURE_DIM {
            texture[region * TEXTURE_DIM + bin] /= mass;
        }
    }

    FeatureSet {
        region_count: n,
        color,
        position,
        texture,
    }
}

/// Per-region, per-label costs. Hard-flagged rows force a single label by
/// pairing one zero cost with `large_value` everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryTable {
    label_count: usize,
    costs: Vec<f64>,
    hard: Vec<bool>,
}

impl UnaryTable {
    pub fn zeros(region_count: usize, label_count: usize) -> Self {
        Self {
            label_count,
            costs: vec![0.0; region_count * label_count],
            hard: vec![false; region_count],
        }
    }

    /// Builds a soft table from row-major costs (`region * label_count +
    /// label`); no rows are hard-flagged.
    pub fn from_costs(label_count: usize, costs: Vec<f64>) -> Self {
        assert!(
            label_count > 0 && costs.len().is_multiple_of(label_count),
            "cost table shape mismatch"
        );
        let regions = costs.len() / label_count;
        Self {
            label_count,
            costs,
            hard: vec![false; regions],
        }
    }

    pub fn region_count(&self) -> usize {
        self.hard.len()
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn cost(&self, region: usize, label: usize) -> f64 {
        self.costs[region * self.label_count + label]
    }

    pub fn is_hard(&self, region: usize) -> bool {
        self.hard[region]
    }

    fn set(&mut self, region: usize, label: usize, cost: f64) {
        self.costs[region * self.label_count + label] = cost;
    }

    /// Element-wise sum of two tables over the same regions and labels.
    /// Hard flags survive from either operand.
    pub fn sum(&self, other: &UnaryTable) -> UnaryTable {
        assert_eq!(self.label_count, other.label_count, "label count mismatch");
        assert_eq!(self.hard.len(), other.hard.len(), "region count mismatch");
        UnaryTable {
            label_count: self.label_count,
            costs: self
                .costs
                .iter()
                .zip(&other.costs)
                .map(|(a, b)| a + b)
                .collect(),
            hard: self
                .hard
                .iter()
                .zip(&other.hard)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    /// Per-region argmin labeling; ties go to the smaller label index.
    pub fn argmin_labeling(&self) -> Vec<usize> {
        (0..self.region_count())
            .map(|r| {
                let mut best = 0;
                for label in 1..self.label_count {
                    if self.cost(r, label) < self.cost(r, best) {
                        best = label;
                    }
                }
                best
            })
            .collect()
    }

    /// Checks the hard-row shape: exactly one zero, `large_value` elsewhere.
    pub fn validate_hard_rows(&self, large_value: f64) -> bool {
        (0..self.region_count()).all(|r| {
            if !self.hard[r] {
                return true;
            }
            let zeros = (0..self.label_count)
                .filter(|&l| self.cost(r, l) == 0.0)
                .count();
            let large = (0..self.label_count)
                .filter(|&l| self.cost(r, l) == large_value)
                .count();
            zeros == 1 && large == self.label_count - 1
        })
    }
}

/// Builds the skeleton-evidence unary table.
///
/// A region with hard label `L_i` costs 0 there and `large_value` at every
/// other label (background included); a background-confident region mirrors
/// that with the zero at background. Uncommitted regions pay the uniform
/// cost `-log(1/(K+1))` at every label.
pub fn unary_skeleton(
    evidence: &RegionEvidence,
    taxonomy: &PartTaxonomy,
    large_value: f64,
) -> UnaryTable {
    let labels = taxonomy.label_count();
    let uniform = -math::ln(1.0 / labels as f64);
    let n = evidence.region_count();
    let mut table = UnaryTable::zeros(n, labels);
    for region in 0..n {
        if let Some(part) = evidence.part_label(region) {
            debug_assert!(part < labels, "evidence label outside taxonomy");
            for label in 0..labels {
                table.set(region, label, if label == part { 0.0 } else { large_value });
            }
            table.hard[region] = true;
        } else if evidence.is_background(region) {
            for label in 0..labels {
                table.set(region, label, if label == 0 { 0.0 } else { large_value });
            }
            table.hard[region] = true;
        } else {
            for label in 0..labels {
                table.set(region, label, uniform);
            }
        }
    }
    table
}

/// Builds the score-map unary table:
/// `cost(i, y) = -mu * log(mean over region pixels of P(y) + epsilon)`.
pub fn unary_score(
    scores: &ScoreMap,
    partition: &SuperPixelPartition,
    mu: f64,
    epsilon: f64,
) -> UnaryTable {
    assert_eq!(
        (scores.width(), scores.height()),
        (partition.width(), partition.height()),
        "score map and partition dimensions must match"
    );
    let labels = scores.channels();
    let n = partition.region_count();
    let plane = scores.width() * scores.height();
    let mut sums = vec![0.0f64; n * labels];
    for (i, &region) in partition.region_of().iter().enumerate() {
        for c in 0..labels {
            sums[region as usize * labels + c] += scores.values()[c * plane + i];
        }
    }
    let mut table = UnaryTable::zeros(n, labels);
    if mu == 0.0 {
        return table;
    }
    for region in 0..n {
        let count = partition.regions()[region].pixel_count as f64;
        for label in 0..labels {
            let mean = sums[region * labels + label] / count;
            table.set(region, label, -mu * math::ln(mean + epsilon));
        }
    }
    table
}

/// One weighted undirected edge of the region graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Contrast-sensitive Potts weights: the cost `lambda * weight` is charged
/// exactly when the edge endpoints take different labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseWeights {
    pub edges: Vec<PairEdge>,
    pub lambda: f64,
}

impl PairwiseWeights {
    /// Edge-free weights, for pure unary problems.
    pub fn none() -> Self {
        Self {
            edges: Vec::new(),
            lambda: 1.0,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian similarity weights over the adjacency graph:
/// `w = sum_f omega_f * exp(-||h_f(i) - h_f(j)||^2 / (2 sigma_f^2))`
/// for the color, position and texture histograms.
pub fn pairwise(
    graph: &AdjacencyGraph,
    features: &FeatureSet,
    omegas: [f64; 3],
    sigmas: [f64; 3],
    lambda: f64,
) -> PairwiseWeights {
    assert!(
        sigmas.iter().all(|&s| s > 0.0),
        "bandwidths must be positive"
    );
    let edges = graph
        .edges
        .iter()
        .map(|&(a, b)| {
            let (a, b) = (a as usize, b as usize);
            let dc = squared_distance(features.color_of(a), features.color_of(b));
            let dp = squared_distance(features.position_of(a), features.position_of(b));
            let dt = squared_distance(features.texture_of(a), features.texture_of(b));
            let weight = omegas[0] * math::exp(-dc / (2.0 * sigmas[0] * sigmas[0]))
                + omegas[1] * math::exp(-dp / (2.0 * sigmas[1] * sigmas[1]))
                + omegas[2] * math::exp(-dt / (2.0 * sigmas[2] * sigmas[2]));
            PairEdge { a, b, weight }
        })
        .collect();
    PairwiseWeights { edges, lambda }
}

/// Bandwidths estimated as the mean per-edge feature distance; zero means
/// (and the zero-edge case) fall back to 1.
pub fn estimate_bandwidths(graph: &AdjacencyGraph, features: &FeatureSet) -> [f64; 3] {
    if graph.edges.is_empty() {
        return [1.0, 1.0, 1.0];
    }
    let mut sums = [0.0f64; 3];
    for &(a, b) in &graph.edges {
        let (a, b) = (a as usize, b as usize);
        sums[0] += math::sqrt(squared_distance(features.color_of(a), features.color_of(b)));
        sums[1] += math::sqrt(squared_distance(
            features.position_of(a),
            features.position_of(b),
        ));
        sums[2] += math::sqrt(squared_distance(
            features.texture_of(a),
            features.texture_of(b),
        ));
    }
    let count = graph.edges.len() as f64;
    let mut out = [0.0; 3];
    for i in 0..3 {
        let mean = sums[i] / count;
        out[i] = if mean == 0.0 { 1.0 } else { mean };
    }
    out
}

/// Total labeling energy:
/// `E = sum_i unary(i, y_i) + sum_edges lambda * w * [y_i != y_j]`.
pub fn total_energy(labeling: &[usize], unary: &UnaryTable, pairwise: &PairwiseWeights) -> f64 {
    assert_eq!(
        labeling.len(),
        unary.region_count(),
        "labeling must cover every region"
    );
    let mut energy = 0.0;
    for (region, &label) in labeling.iter().enumerate() {
        energy += unary.cost(region, label);
    }
    for edge in &pairwise.edges {
        if labeling[edge.a] != labeling[edge.b] {
            energy += pairwise.lambda * edge.weight;
        }
    }
    energy
}
