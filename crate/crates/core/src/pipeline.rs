//! End-to-end pseudo-mask generation, iterative refinement with a
//! pluggable score source, the built-in region softmax scorer, correlation
//! fusion of part and object predictions, and the joint training loss.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::energy::{
    estimate_bandwidths, extract_features, pairwise, total_energy, unary_score, unary_skeleton,
    FeatureSet, PairwiseWeights, UnaryTable, FEATURE_DIM,
};
use crate::evaluation::{iou_report, ConfusionMatrix, IouReport};
use crate::graphcut::{alpha_expansion, Labeling, DEFAULT_MAX_CYCLES};
use crate::math;
use crate::model::{
    clamp_keypoints, ImagePlane, LabelMask, PartTaxonomy, PersonKeypoints, ScoreMap,
    SCORE_SUM_TOLERANCE,
};
use crate::skeleton::{
    assign_region_labels, background_regions, build_segments, rasterize, ConnectionTable,
    RegionEvidence,
};
use crate::superpixels::{
    build_adjacency, segment_graph_based, SuperPixelPartition, SuperpixelError,
};

/// Every tunable of the pipeline, with the working defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub superpixel_scale: f64,
    pub superpixel_min_size: usize,
    pub smoothing_sigma: f64,
    /// Skeleton capsule radius in pixels.
    pub thickness_radius: f64,
    /// Pixels farther than this from every keypoint seed background regions.
    pub background_distance: f64,
    /// Hard-constraint cost.
    pub large_value: f64,
    pub omega_color: f64,
    pub omega_position: f64,
    pub omega_texture: f64,
    /// None estimates the bandwidth as the mean per-edge feature distance.
    pub sigma_color: Option<f64>,
    pub sigma_position: Option<f64>,
    pub sigma_texture: Option<f64>,
    pub lambda: f64,
    /// Multiplier on the score-map unary term.
    pub mu: f64,
    pub epsilon: f64,
    /// Refinement iteration count T.
    pub iterations: usize,
    pub scorer_learning_rate: f64,
    pub scorer_epochs: usize,
    pub scorer_l2: f64,
    pub loss_weight_part: f64,
    pub loss_weight_object: f64,
    pub loss_weight_refined: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            superpixel_scale: 100.0,
            superpixel_min_size: 60,
            smoothing_sigma: 0.5,
            thickness_radius: 3.0,
            background_distance: 50.0,
            large_value: 1e7,
            omega_color: 1.0,
            omega_position: 1.0,
            omega_texture: 1.0,
            sigma_color: None,
            sigma_position: None,
            sigma_texture: None,
            lambda: 1.0,
            mu: 1.0,
            epsilon: 1e-8,
            iterations: 3,
            scorer_learning_rate: 0.5,
            scorer_epochs: 300,
            scorer_l2: 1e-4,
            loss_weight_part: 1.0,
            loss_weight_object: 1.0,
            loss_weight_refined: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.superpixel_scale) {
            return Err("superpixel_scale must be positive");
        }
        if self.superpixel_min_size == 0 {
            return Err("superpixel_min_size must be at least 1");
        }
        if !nonneg(self.smoothing_sigma) {
            return Err("smoothing_sigma must be nonnegative");
        }
        if !nonneg(self.thickness_radius) {
            return Err("thickness_radius must be nonnegative");
        }
        if !nonneg(self.background_distance) {
            return Err("background_distance must be nonnegative");
        }
        if !positive(self.large_value) {
            return Err("large_value must be positive");
        }
        if !(nonneg(self.omega_color) && nonneg(self.omega_position) && nonneg(self.omega_texture))
        {
            return Err("omegas must be nonnegative");
        }
        for s in [self.sigma_color, self.sigma_position, self.sigma_texture]
            .into_iter()
            .flatten()
        {
            if !positive(s) {
                return Err("configured sigmas must be positive");
            }
        }
        if !nonneg(self.lambda) {
            return Err("lambda must be nonnegative");
        }
        if !nonneg(self.mu) {
            return Err("mu must be nonnegative");
        }
        if !positive(self.epsilon) {
            return Err("epsilon must be positive");
        }
        if self.iterations == 0 {
            return Err("iterations must be at least 1");
        }
        if !positive(self.scorer_learning_rate) {
            return Err("scorer_learning_rate must be positive");
        }
        if self.scorer_epochs == 0 {
            return Err("scorer_epochs must be at least 1");
        }
        if !nonneg(self.scorer_l2) {
            return Err("scorer_l2 must be nonnegative");
        }
        if !(nonneg(self.loss_weight_part)
            && nonneg(self.loss_weight_object)
            && nonneg(self.loss_weight_refined))
        {
            return Err("loss weights must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineError {
    Config(&'static str),
    Superpixels(SuperpixelError),
    ScoreChannelMismatch { expected: usize, got: usize },
    ScoreDimensionMismatch,
    UnnormalizedScores,
    ExternalScoresMissing { image: usize },
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            PipelineError::Superpixels(e) => write!(f, "superpixel segmentation failed: {e}"),
            PipelineError::ScoreChannelMismatch { expected, got } => {
                write!(f, "score map has {got} channels, expected {expected}")
            }
            PipelineError::ScoreDimensionMismatch => {
                write!(f, "score map dimensions do not match the image")
            }
            PipelineError::UnnormalizedScores => {
                write!(f, "score map channel sums deviate from 1 beyond tolerance")
            }
            PipelineError::ExternalScoresMissing { image } => {
                write!(f, "no external score maps supplied for image {image}")
            }
        }
    }
}

impl core::error::Error for PipelineError {}

impl From<SuperpixelError> for PipelineError {
    fn from(e: SuperpixelError) -> Self {
        PipelineError::Superpixels(e)
    }
}

/// A pseudo-mask result: the painted mask, the underlying region labeling,
/// and a warning flag raised when the image had no visible keypoints.
#[derive(Debug, Clone)]
pub struct MaskOutcome {
    pub mask: LabelMask,
    pub region_labels: Vec<usize>,
    pub energy: f64,
    pub no_keypoint_warning: bool,
}

/// One dataset entry for the refinement loop.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub image: ImagePlane,
    pub persons: Vec<PersonKeypoints>,
    pub ground_truth: Option<LabelMask>,
}

/// Where score maps come from during refinement: the built-in scorer,
/// trained on the previous iteration's pseudo labels, or fixed external
/// per-image (part, object) map pairs.
#[derive(Debug, Clone, Copy)]
pub enum ScoreSource<'a> {
    Internal,
    External(&'a [(ScoreMap, ScoreMap)]),
}

/// Per-iteration refinement record. `report` is present when the dataset
/// carries ground truth.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iteration: usize,
    pub report: Option<IouReport>,
    pub degenerate_scorer: bool,
}

/// Result of the full refinement loop.
#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub masks: Vec<LabelMask>,
    pub region_labels: Vec<Vec<usize>>,
    pub model: Option<ScorerModel>,
    pub iterations: Vec<IterationReport>,
    /// Indices of images that had no visible keypoints.
    pub warnings: Vec<usize>,
}

/// Everything derived from one image that stays fixed across refinement
/// iterations.
pub struct ImageContext {
    pub partition: SuperPixelPartition,
    pub features: FeatureSet,
    pub evidence: RegionEvidence,
    pub skeleton_unary: UnaryTable,
    pub pairwise: PairwiseWeights,
    pub visible_keypoints: usize,
}

/// Paints per-region labels back onto the pixel grid.
pub fn labeling_to_mask(partition: &SuperPixelPartition, labels: &[usize]) -> LabelMask {
    assert_eq!(labels.len(), partition.region_count());
    let pixels = partition
        .region_of()
        .iter()
        .map(|&r| {
            let label = labels[r as usize];
            debug_assert!(label <= u8::MAX as usize);
            label as u8
        })
        .collect();
    LabelMask::new(partition.width(), partition.height(), pixels).expect("partition is non-empty")
}

/// A labeling violating hard evidence, reported by [`verify_hard_evidence`].
#[derive(Debug, Clone, PartialEq)]
pub struct HardConstraintViolation {
    pub region: usize,
    pub expected: usize,
    pub got: usize,
}

impl fmt::Display for HardConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "region {} must carry label {} but carries {}",
            self.region, self.expected, self.got
        )
    }
}

/// Checks that a labeling honors every hard constraint: skeleton-overlapped
/// regions keep their assigned part label and background-confident regions
/// stay background.
pub fn verify_hard_evidence(
    labels: &[usize],
    evidence: &RegionEvidence,
) -> Result<(), HardConstraintViolation> {
    assert_eq!(labels.len(), evidence.region_count());
    for region in 0..labels.len() {
        if let Some(expected) = evidence.part_label(region) {
            if labels[region] != expected {
                return Err(HardConstraintViolation {
                    region,
                    expected,
                    got: labels[region],
                });
            }
        } else if evidence.is_background(region) && labels[region] != 0 {
            return Err(HardConstraintViolation {
                region,
                expected: 0,
                got: labels[region],
            });
        }
    }
    Ok(())
}

/// The configured pipeline: taxonomy, connection table and parameters.
pub struct Pipeline {
    taxonomy: PartTaxonomy,
    connections: ConnectionTable,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(
        taxonomy: PartTaxonomy,
        connections: ConnectionTable,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        Ok(Self {
            taxonomy,
            connections,
            config,
        })
    }

    /// Human taxonomy, PASCAL-pose connections, default parameters.
    pub fn with_defaults() -> Self {
        let taxonomy = PartTaxonomy::human();
        let connections = ConnectionTable::pascal(&taxonomy).expect("builtin table");
        Self {
            taxonomy,
            connections,
            config: PipelineConfig::default(),
        }
    }

    pub fn taxonomy(&self) -> &PartTaxonomy {
        &self.taxonomy
    }

    pub fn connections(&self) -> &ConnectionTable {
        &self.connections
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Segments the image and derives everything the cut needs: features,
    /// skeleton evidence, the skeleton unary table and pairwise weights.
    ///
    /// With zero visible keypoints the background-distance rule is vacuous
    /// and is skipped entirely, leaving every region uncommitted; callers
    /// see the condition via `visible_keypoints == 0`.
    pub fn prepare_image(
        &self,
        image: &ImagePlane,
        persons: &[PersonKeypoints],
    ) -> Result<ImageContext, PipelineError> {
        let c = &self.config;
        let partition = segment_graph_based(
            image,
            c.superpixel_scale,
            c.superpixel_min_size,
            c.smoothing_sigma,
        )?;
        let graph = build_adjacency(&partition);
        let features = extract_features(image, &partition);

        let clamped = clamp_keypoints(persons, image.width(), image.height());
        let visible_keypoints = clamped
            .iter()
            .map(|p| p.iter().filter(|(_, k)| k.visible).count())
            .sum();
        let segments = build_segments(&clamped, &self.connections);
        let raster = rasterize(&segments, image.width(), image.height(), c.thickness_radius);
        let mut evidence = assign_region_labels(&partition, &raster);
        if visible_keypoints > 0 {
            background_regions(&partition, &clamped, c.background_distance, &mut evidence);
        }
        let skeleton_unary = unary_skeleton(&evidence, &self.taxonomy, c.large_value);

        let sigmas = {
            let estimated = estimate_bandwidths(&graph, &features);
            [
                c.sigma_color.unwrap_or(estimated[0]),
                c.sigma_position.unwrap_or(estimated[1]),
                c.sigma_texture.unwrap_or(estimated[2]),
            ]
        };
        let pairwise = pairwise(
            &graph,
            &features,
            [c.omega_color, c.omega_position, c.omega_texture],
            sigmas,
            c.lambda,
        );

        Ok(ImageContext {
            partition,
            features,
            evidence,
            skeleton_unary,
            pairwise,
            visible_keypoints,
        })
    }

    fn check_scores(&self, scores: &ScoreMap, image: &ImagePlane) -> Result<(), PipelineError> {
        if scores.channels() != self.taxonomy.label_count() {
            return Err(PipelineError::ScoreChannelMismatch {
                expected: self.taxonomy.label_count(),
                got: scores.channels(),
            });
        }
        if (scores.width(), scores.height()) != (image.width(), image.height()) {
            return Err(PipelineError::ScoreDimensionMismatch);
        }
        if !scores.is_normalized(SCORE_SUM_TOLERANCE) {
            return Err(PipelineError::UnnormalizedScores);
        }
        Ok(())
    }

    /// Cuts one prepared image, optionally adding a score unary table.
    fn cut(&self, context: &ImageContext, score_unary: Option<&UnaryTable>) -> Labeling {
        let labeling = match score_unary {
            Some(s) => {
                let combined = context.skeleton_unary.sum(s);
                alpha_expansion(&combined, &context.pairwise, None, DEFAULT_MAX_CYCLES)
            }
            None => alpha_expansion(
                &context.skeleton_unary,
                &context.pairwise,
                None,
                DEFAULT_MAX_CYCLES,
            ),
        };
        debug_assert!(
            verify_hard_evidence(&labeling.labels, &context.evidence).is_ok(),
            "cut violated hard evidence"
        );
        labeling
    }

    /// Generates one pseudo mask: superpixels, skeleton evidence, unary and
    /// pairwise terms, alpha-expansion, then paints region labels.
    ///
    /// An image with zero visible keypoints and no scores yields an
    /// all-background mask with the warning flag set; when scores are
    /// present the cut still runs on the score term alone.
    pub fn generate_pseudo_mask(
        &self,
        image: &ImagePlane,
        persons: &[PersonKeypoints],
        scores: Option<&ScoreMap>,
    ) -> Result<MaskOutcome, PipelineError> {
        if let Some(s) = scores {
            self.check_scores(s, image)?;
        }
        let context = self.prepare_image(image, persons)?;
        self.cut_outcome(&context, scores)
    }

    fn cut_outcome(
        &self,
        context: &ImageContext,
        scores: Option<&ScoreMap>,
    ) -> Result<MaskOutcome, PipelineError> {
        let no_keypoints = context.visible_keypoints == 0;
        let labeling = if no_keypoints && scores.is_none() {
            let labels = vec![0usize; context.partition.region_count()];
            let energy = total_energy(&labels, &context.skeleton_unary, &context.pairwise);
            Labeling { labels, energy }
        } else {
            let score_unary = scores
                .map(|s| unary_score(s, &context.partition, self.config.mu, self.config.epsilon));
            self.cut(context, score_unary.as_ref())
        };
        let mask = labeling_to_mask(&context.partition, &labeling.labels);
        Ok(MaskOutcome {
            mask,
            region_labels: labeling.labels,
            energy: labeling.energy,
            no_keypoint_warning: no_keypoints,
        })
    }

    /// Test-time refinement: the same energy as pseudo-mask generation with
    /// both the skeleton term (from test-time keypoints) and the score term.
    pub fn test_time_refine(
        &self,
        image: &ImagePlane,
        persons: &[PersonKeypoints],
        scores: &ScoreMap,
    ) -> Result<MaskOutcome, PipelineError> {
        self.generate_pseudo_mask(image, persons, Some(scores))
    }

    /// The iterative refinement loop. Iteration 1 cuts on keypoint evidence
    /// alone; each later iteration fits the scorer to the previous pseudo
    /// labels (or takes external maps), adds the score unary and cuts again.
    /// A degenerate scorer leaves that iteration's masks unchanged and
    /// flags the report.
    pub fn refine_iteratively(
        &self,
        dataset: &[DatasetItem],
        source: ScoreSource<'_>,
    ) -> Result<RefineOutcome, PipelineError> {
        if let ScoreSource::External(maps) = source {
            if maps.len() < dataset.len() {
                return Err(PipelineError::ExternalScoresMissing { image: maps.len() });
            }
            for (i, item) in dataset.iter().enumerate() {
                self.check_scores(&maps[i].0, &item.image)?;
            }
        }

        let contexts: Vec<ImageContext> = dataset
            .iter()
            .map(|item| self.prepare_image(&item.image, &item.persons))
            .collect::<Result<_, _>>()?;
        let warnings: Vec<usize> = contexts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.visible_keypoints == 0)
            .map(|(i, _)| i)
            .collect();

        // iteration 1: keypoints only
        let mut labelings: Vec<Vec<usize>> = contexts
            .iter()
            .map(|context| {
                if context.visible_keypoints == 0 {
                    vec![0usize; context.partition.region_count()]
                } else {
                    self.cut(context, None).labels
                }
            })
            .collect();
        let mut iterations = vec![self.iteration_report(1, false, dataset, &contexts, &labelings)?];
        let mut model = None;

        for iteration in 2..=self.config.iterations {
            let mut degenerate = false;
            let score_unaries: Option<Vec<UnaryTable>> = match source {
                ScoreSource::Internal => {
                    let training: Vec<(&FeatureSet, &[usize])> = contexts
                        .iter()
                        .zip(&labelings)
                        .map(|(c, l)| (&c.features, l.as_slice()))
                        .collect();
                    let fitted = fit_scorer(&training, self.taxonomy.label_count(), &self.config);
                    degenerate = fitted.degenerate;
                    let unaries = if degenerate {
                        None
                    } else {
                        Some(
                            contexts
                                .iter()
                                .map(|c| {
                                    let (part, _object) =
                                        predict_scores(&fitted, &c.partition, &c.features);
                                    unary_score(
                                        &part,
                                        &c.partition,
                                        self.config.mu,
                                        self.config.epsilon,
                                    )
                                })
                                .collect(),
                        )
                    };
                    model = Some(fitted);
                    unaries
                }
                ScoreSource::External(maps) => Some(
                    contexts
                        .iter()
                        .enumerate()
                        .map(|(i, c)| {
                            unary_score(
                                &maps[i].0,
                                &c.partition,
                                self.config.mu,
                                self.config.epsilon,
                            )
                        })
                        .collect(),
                ),
            };
            if let Some(unaries) = score_unaries {
                labelings = contexts
                    .iter()
                    .zip(&unaries)
                    .map(|(context, unary)| self.cut(context, Some(unary)).labels)
                    .collect();
            }
            iterations.push(
                self.iteration_report(iteration, degenerate, dataset, &contexts, &labelings)?,
            );
        }

        let masks: Vec<LabelMask> = contexts
            .iter()
            .zip(&labelings)
            .map(|(c, l)| labeling_to_mask(&c.partition, l))
            .collect();
        Ok(RefineOutcome {
            masks,
            region_labels: labelings,
            model,
            iterations,
            warnings,
        })
    }

    fn iteration_report(
        &self,
        iteration: usize,
        degenerate_scorer: bool,
        dataset: &[DatasetItem],
        contexts: &[ImageContext],
        labelings: &[Vec<usize>],
    ) -> Result<IterationReport, PipelineError> {
        let mut matrix = ConfusionMatrix::new(self.taxonomy.label_count());
        let mut any = false;
        for ((item, context), labels) in dataset.iter().zip(contexts).zip(labelings) {
            if let Some(gt) = &item.ground_truth {
                let mask = labeling_to_mask(&context.partition, labels);
                matrix
                    .accumulate(&mask, gt)
                    .expect("ground-truth masks must match image dimensions and labels");
                any = true;
            }
        }
        let report = if any {
            Some(iou_report(&matrix, &self.taxonomy).expect("matrix is non-empty"))
        } else {
            None
        };
        Ok(IterationReport {
            iteration,
            report,
            degenerate_scorer,
        })
    }
}

// ---------------------------------------------------------------------------
// Region softmax scorer
// ---------------------------------------------------------------------------

/// Linear softmax heads over the 48-dim region features (plus bias): a
/// (K+1)-way part head and a 2-way object head (class 1 = foreground).
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    label_count: usize,
    /// (FEATURE_DIM + 1) x label_count, row-major by feature.
    part_weights: Vec<f64>,
    /// (FEATURE_DIM + 1) x 2.
    object_weights: Vec<f64>,
    pub final_loss: f64,
    pub epochs_run: usize,
    /// Set when training data lacked either part or background samples.
    pub degenerate: bool,
}

impl ScorerModel {
    pub fn zeros(label_count: usize) -> Self {
        Self {
            label_count,
            part_weights: vec![0.0; (FEATURE_DIM + 1) * label_count],
            object_weights: vec![0.0; (FEATURE_DIM + 1) * 2],
            final_loss: 0.0,
            epochs_run: 0,
            degenerate: false,
        }
    }

    /// Builds a model from explicit weights: `(FEATURE_DIM + 1) x classes`,
    /// row-major by feature with the bias in the last row.
    pub fn from_weights(
        label_count: usize,
        part_weights: Vec<f64>,
        object_weights: Vec<f64>,
    ) -> Self {
        assert_eq!(part_weights.len(), (FEATURE_DIM + 1) * label_count);
        assert_eq!(object_weights.len(), (FEATURE_DIM + 1) * 2);
        Self {
            label_count,
            part_weights,
            object_weights,
            final_loss: 0.0,
            epochs_run: 0,
            degenerate: false,
        }
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn part_weights(&self) -> &[f64] {
        &self.part_weights
    }

    pub fn object_weights(&self) -> &[f64] {
        &self.object_weights
    }

    pub fn is_finite(&self) -> bool {
        self.part_weights
            .iter()
            .chain(&self.object_weights)
            .all(|w| w.is_finite())
    }

    pub fn part_logits(&self, features: &[f64]) -> Vec<f64> {
        logits(&self.part_weights, features, self.label_count)
    }

    pub fn object_logits(&self, features: &[f64]) -> Vec<f64> {
        logits(&self.object_weights, features, 2)
    }
}

fn logits(weights: &[f64], features: &[f64], classes: usize) -> Vec<f64> {
    assert_eq!(features.len(), FEATURE_DIM);
    let mut out = vec![0.0; classes];
    for (f, &x) in features.iter().enumerate() {
        for c in 0..classes {
            out[c] += weights[f * classes + c] * x;
        }
    }
    for c in 0..classes {
        out[c] += weights[FEATURE_DIM * classes + c]; // bias
    }
    out
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = logits.iter().map(|&z| math::exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Joint loss over per-region logits and its analytic logit gradients.
#[derive(Debug, Clone)]
pub struct JointLoss {
    pub loss: f64,
    /// d loss / d part_logits, same layout as the input.
    pub part_gradients: Vec<f64>,
    /// d loss / d object_logits.
    pub object_gradients: Vec<f64>,
}

/// Summed joint loss:
/// `w_part * CE(part) + w_obj * CE(object) + w_ref * -log(fused)` where the
/// fused probability at the true label is the raw product of the part
/// probability and the matching object probability (foreground for part
/// labels, background for label 0), exactly as the correlation step
/// multiplies them.
///
/// `weights` is `[w_part, w_obj, w_ref]`.
pub fn joint_loss(
    part_logits: &[f64],
    object_logits: &[f64],
    labels: &[usize],
    weights: [f64; 3],
) -> JointLoss {
    let n = labels.len();
    assert!(n > 0, "joint_loss needs at least one region");
    assert_eq!(part_logits.len() % n, 0);
    let classes = part_logits.len() / n;
    assert_eq!(object_logits.len(), n * 2);
    let [w_part, w_object, w_refined] = weights;

    let mut loss = 0.0;
    let mut part_gradients = vec![0.0; part_logits.len()];
    let mut object_gradients = vec![0.0; object_logits.len()];
    for i in 0..n {
        let label = labels[i];
        assert!(label < classes, "label {label} outside 0..{classes}");
        let object_class = usize::from(label > 0);
        let p = softmax(&part_logits[i * classes..(i + 1) * classes]);
        let q = softmax(&object_logits[i * 2..(i + 1) * 2]);

        let part_ce = -math::ln(p[label]);
        let object_ce = -math::ln(q[object_class]);
        let refined = -math::ln(p[label] * q[object_class]);
        loss += w_part * part_ce + w_object * object_ce + w_refined * refined;

        for c in 0..classes {
            let indicator = f64::from(c == label);
            part_gradients[i * classes + c] = (w_part + w_refined) * (p[c] - indicator);
        }
        for c in 0..2 {
            let indicator = f64::from(c == object_class);
            object_gradients[i * 2 + c] = (w_object + w_refined) * (q[c] - indicator);
        }
    }
    JointLoss {
        loss,
        part_gradients,
        object_gradients,
    }
}

struct TrainingData {
    /// Per sample: FEATURE_DIM features (bias handled separately).
    features: Vec<f64>,
    labels: Vec<usize>,
}

fn flatten_dataset(dataset: &[(&FeatureSet, &[usize])]) -> TrainingData {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (set, region_labels) in dataset {
        assert_eq!(set.region_count(), region_labels.len());
        for region in 0..set.region_count() {
            features.extend(set.concatenated(region));
            labels.push(region_labels[region]);
        }
    }
    TrainingData { features, labels }
}

fn evaluate_scorer(
    data: &TrainingData,
    part_weights: &[f64],
    object_weights: &[f64],
    label_count: usize,
    config: &PipelineConfig,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = data.labels.len();
    let mut part_logits = vec![0.0; n * label_count];
    let mut object_logits = vec![0.0; n * 2];
    for i in 0..n {
        let x = &data.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
        part_logits[i * label_count..(i + 1) * label_count].copy_from_slice(&logits(
            part_weights,
            x,
            label_count,
        ));
        object_logits[i * 2..(i + 1) * 2].copy_from_slice(&logits(object_weights, x, 2));
    }
    let weights = [
        config.loss_weight_part,
        config.loss_weight_object,
        config.loss_weight_refined,
    ];
    let joint = joint_loss(&part_logits, &object_logits, &data.labels, weights);

    // back-propagate logit gradients through the linear layer
    let mut part_grad = vec![0.0; part_weights.len()];
    let mut object_grad = vec![0.0; object_weights.len()];
    for i in 0..n {
        let x = &data.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
        for c in 0..label_count {
            let g = joint.part_gradients[i * label_count + c];
            for (f, &xf) in x.iter().enumerate() {
                part_grad[f * label_count + c] += g * xf;
            }
            part_grad[FEATURE_DIM * label_count + c] += g;
        }
        for c in 0..2 {
            let g = joint.object_gradients[i * 2 + c];
            for (f, &xf) in x.iter().enumerate() {
                object_grad[f * 2 + c] += g * xf;
            }
            object_grad[FEATURE_DIM * 2 + c] += g;
        }
    }

    // L2 on everything but the bias rows
    let mut loss = joint.loss;
    let l2 = config.scorer_l2;
    if l2 > 0.0 {
        for f in 0..FEATURE_DIM {
            for c in 0..label_count {
                let w = part_weights[f * label_count + c];
                loss += 0.5 * l2 * w * w;
                part_grad[f * label_count + c] += l2 * w;
            }
            for c in 0..2 {
                let w = object_weights[f * 2 + c];
                loss += 0.5 * l2 * w * w;
                object_grad[f * 2 + c] += l2 * w;
            }
        }
    }
    (loss, part_grad, object_grad)
}

/// The scorer's full-batch objective at a given weight setting: the joint
/// loss plus L2, with its analytic gradients for both weight matrices.
#[derive(Debug, Clone)]
pub struct ScorerObjective {
    pub loss: f64,
    pub part_gradients: Vec<f64>,
    pub object_gradients: Vec<f64>,
}

/// Evaluates the training objective `fit_scorer` descends on, at arbitrary
/// weights. Exposed so the analytic weight gradients can be checked
/// against finite differences.
pub fn scorer_objective(
    dataset: &[(&FeatureSet, &[usize])],
    label_count: usize,
    part_weights: &[f64],
    object_weights: &[f64],
    config: &PipelineConfig,
) -> ScorerObjective {
    assert_eq!(part_weights.len(), (FEATURE_DIM + 1) * label_count);
    assert_eq!(object_weights.len(), (FEATURE_DIM + 1) * 2);
    let data = flatten_dataset(dataset);
    let (loss, part_gradients, object_gradients) =
        evaluate_scorer(&data, part_weights, object_weights, label_count, config);
    ScorerObjective {
        loss,
        part_gradients,
        object_gradients,
    }
}

/// Fits the part and object heads by full-batch gradient descent on the
/// joint loss, starting from zero weights. The step is halved whenever a
/// proposed update would increase the loss, so the recorded loss sequence
/// never increases. Data with no part samples or no background samples
/// still trains but comes back with the degenerate flag set.
pub fn fit_scorer(
    dataset: &[(&FeatureSet, &[usize])],
    label_count: usize,
    config: &PipelineConfig,
) -> ScorerModel {
    let data = flatten_dataset(dataset);
    let mut model = ScorerModel::zeros(label_count);
    let part_samples = data.labels.iter().filter(|&&l| l > 0).count();
    let background_samples = data.labels.len() - part_samples;
    model.degenerate = part_samples == 0 || background_samples == 0;
    if data.labels.is_empty() {
        return model;
    }

    let mut learning_rate = config.scorer_learning_rate;
    let (mut loss, mut part_grad, mut object_grad) = evaluate_scorer(
        &data,
        &model.part_weights,
        &model.object_weights,
        label_count,
        config,
    );
    let mut epochs_run = 0;
    for _ in 0..config.scorer_epochs {
        let mut accepted = None;
        while learning_rate > 1e-18 {
            let part_try: Vec<f64> = model
                .part_weights
                .iter()
                .zip(&part_grad)
                .map(|(w, g)| w - learning_rate * g)
                .collect();
            let object_try: Vec<f64> = model
                .object_weights
                .iter()
                .zip(&object_grad)
                .map(|(w, g)| w - learning_rate * g)
                .collect();
            let (new_loss, new_pg, new_og) =
                evaluate_scorer(&data, &part_try, &object_try, label_count, config);
            if new_loss <= loss {
                accepted = Some((new_loss, part_try, object_try, new_pg, new_og));
                break;
            }
            learning_rate /= 2.0;
        }
        let Some((new_loss, pw, ow, pg, og)) = accepted else {
            break;
        };
        let improvement = loss - new_loss;
        model.part_weights = pw;
        model.object_weights = ow;
        part_grad = pg;
        object_grad = og;
        loss = new_loss;
        epochs_run += 1;
        if improvement <= 1e-12 * (1.0 + loss.abs()) {
            break;
        }
    }
    model.final_loss = loss;
    model.epochs_run = epochs_run;
    debug_assert!(model.is_finite());
    model
}

/// Evaluates the fitted heads on every region and broadcasts the softmax
/// probabilities to that region's pixels, yielding a normalized
/// (K+1)-channel part map and a 2-channel object map.
pub fn predict_scores(
    model: &ScorerModel,
    partition: &SuperPixelPartition,
    features: &FeatureSet,
) -> (ScoreMap, ScoreMap) {
    assert_eq!(partition.region_count(), features.region_count());
    let (w, h) = (partition.width(), partition.height());
    let classes = model.label_count();
    let n = partition.region_count();
    let mut part_probs = Vec::with_capacity(n);
    let mut object_probs = Vec::with_capacity(n);
    for region in 0..n {
        let x = features.concatenated(region);
        part_probs.push(softmax(&model.part_logits(&x)));
        object_probs.push(softmax(&model.object_logits(&x)));
    }
    let plane = w * h;
    let mut part_values = vec![0.0; plane * classes];
    let mut object_values = vec![0.0; plane * 2];
    for (i, &region) in partition.region_of().iter().enumerate() {
        let r = region as usize;
        for c in 0..classes {
            part_values[c * plane + i] = part_probs[r][c];
        }
        for c in 0..2 {
            object_values[c * plane + i] = object_probs[r][c];
        }
    }
    let part = ScoreMap::new(w, h, classes, part_values).expect("softmax output is valid");
    let object = ScoreMap::new(w, h, 2, object_values).expect("softmax output is valid");
    debug_assert!(part.is_normalized(SCORE_SUM_TOLERANCE));
    debug_assert!(object.is_normalized(SCORE_SUM_TOLERANCE));
    (part, object)
}

/// The raw correlation product and its per-pixel renormalization.
#[derive(Debug, Clone)]
pub struct FusedScores {
    /// Part channels scaled by the object probabilities; channel sums are
    /// generally below 1.
    pub raw: ScoreMap,
    /// Renormalized copy for inference argmax.
    pub normalized: ScoreMap,
}

/// Couples part and object predictions: each part channel `1..=K` is
/// multiplied by the object foreground probability (the foreground value
/// repeated across part channels) and the background channel by the object
/// background probability.
pub fn correlation_fuse(part: &ScoreMap, object: &ScoreMap) -> FusedScores {
    assert_eq!(object.channels(), 2, "object map must have 2 channels");
    assert_eq!(
        (part.width(), part.height()),
        (object.width(), object.height()),
        "part and object maps must share dimensions"
    );
    let (w, h) = (part.width(), part.height());
    let plane = w * h;
    let channels = part.channels();
    let mut values = vec![0.0; plane * channels];
    for i in 0..plane {
        let background = object.values()[i];
        let foreground = object.values()[plane + i];
        values[i] = part.values()[i] * background;
        for c in 1..channels {
            values[c * plane + i] = part.values()[c * plane + i] * foreground;
        }
    }
    let raw = ScoreMap::new(w, h, channels, values).expect("products of valid maps are valid");
    let normalized = raw.normalized();
    FusedScores { raw, normalized }
}
