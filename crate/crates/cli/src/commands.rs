//! Subcommand implementations. Per-image work fans out over `--jobs`
//! worker threads; every output goes to its own file under the output
//! directory, so workers never contend on writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};

use partcut_core::evaluation::{iou_report, ConfusionMatrix};
use partcut_core::model::PartTaxonomy;
use partcut_core::pipeline::{predict_scores, DatasetItem, Pipeline, ScoreSource};
use partcut_core::superpixels::SuperPixelPartition;

use crate::formats::{self, ConfigFile};
use crate::manifest::{self, Dataset};
use crate::synth::{self, SynthOptions};

/// Flags shared by every dataset-driven subcommand.
#[derive(Debug, Clone)]
pub struct CommonArgs {
    pub manifest: PathBuf,
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
}

pub struct Setup {
    pub config: ConfigFile,
    pub taxonomy: PartTaxonomy,
    pub dataset: Dataset,
    pub pipeline: Pipeline,
}

pub fn load_setup(args: &CommonArgs) -> Result<Setup> {
    let config = match &args.config {
        Some(path) => formats::load_config(path)?,
        None => ConfigFile::default(),
    };
    let taxonomy = config.taxonomy()?;
    let dataset = manifest::load_manifest(&args.manifest, &taxonomy)?;
    for warning in &dataset.warnings {
        eprintln!("warning: {warning}");
    }
    let connections = config.connection_table(&dataset.schema, &taxonomy)?;
    let pipeline = Pipeline::new(taxonomy.clone(), connections, config.pipeline_config())
        .context("pipeline configuration rejected")?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    Ok(Setup {
        config,
        taxonomy,
        dataset,
        pipeline,
    })
}

/// Runs `f` over item indices on up to `jobs` threads, collecting results
/// in index order. Errors from any worker surface after the pool drains.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs <= 1 {
        return items
            .iter()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<R>)>> = Mutex::new(Vec::with_capacity(items.len()));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= items.len() {
                    break;
                }
                let outcome = f(index, &items[index]);
                results
                    .lock()
                    .expect("worker poisoned the result lock")
                    .push((index, outcome));
            });
        }
    });
    let mut collected = results
        .into_inner()
        .expect("worker poisoned the result lock");
    collected.sort_by_key(|(i, _)| *i);
    collected.into_iter().map(|(_, r)| r).collect()
}

/// Region map blob: header (width, height, 1) as little-endian u32, then
/// row-major u32 region indices.
fn save_region_map(partition: &SuperPixelPartition, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + partition.region_of().len() * 4);
    bytes.extend_from_slice(&(partition.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(partition.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&1u32.to_le_bytes());
    for &r in partition.region_of() {
        bytes.extend_from_slice(&r.to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub fn run_superpixels(args: &CommonArgs) -> Result<()> {
    let setup = load_setup(args)?;
    let c = setup.pipeline.config();
    let counts = parallel_map(&setup.dataset.records, args.jobs, |_, record| {
        let partition = partcut_core::segment_graph_based(
            &record.image,
            c.superpixel_scale,
            c.superpixel_min_size,
            c.smoothing_sigma,
        )?;
        // mean-color visualization
        let n = partition.region_count();
        let mut sums = vec![[0u64; 3]; n];
        for (i, &r) in partition.region_of().iter().enumerate() {
            for ch in 0..3 {
                sums[r as usize][ch] += record.image.pixels()[i * 3 + ch] as u64;
            }
        }
        let mut pixels = Vec::with_capacity(record.image.pixels().len());
        for &r in partition.region_of() {
            let count = partition.regions()[r as usize].pixel_count as u64;
            for ch in 0..3 {
                pixels.push((sums[r as usize][ch] / count) as u8);
            }
        }
        let viz =
            partcut_core::ImagePlane::new(record.image.width(), record.image.height(), pixels)?;
        formats::save_image(
            &viz,
            &args
                .out_dir
                .join(format!("{}_superpixels.png", record.name)),
        )?;
        save_region_map(
            &partition,
            &args.out_dir.join(format!("{}_regions.bin", record.name)),
        )?;
        Ok((record.name.clone(), n))
    })?;

    let mut csv = String::from("image,region_count\n");
    for (name, count) in &counts {
        csv.push_str(&format!("{name},{count}\n"));
    }
    formats::write_text(&args.out_dir.join("region_counts.csv"), &csv)?;
    println!("segmented {} images into superpixels", counts.len());
    Ok(())
}

fn evaluate_masks(
    setup: &Setup,
    masks: &[(usize, partcut_core::LabelMask)],
) -> Result<Option<String>> {
    let mut matrix = ConfusionMatrix::new(setup.taxonomy.label_count());
    let mut any = false;
    for (index, mask) in masks {
        if let Some(gt) = &setup.dataset.records[*index].ground_truth {
            matrix.accumulate(mask, gt)?;
            any = true;
        }
    }
    if !any {
        return Ok(None);
    }
    let report = iou_report(&matrix, &setup.taxonomy)?;
    Ok(Some(formats::report_csv(&report, &setup.taxonomy)))
}

pub fn run_pseudo_mask(args: &CommonArgs, use_scores: bool) -> Result<()> {
    let setup = load_setup(args)?;
    let outcomes = parallel_map(&setup.dataset.records, args.jobs, |index, record| {
        let scores = if use_scores {
            record.scores.as_ref()
        } else {
            None
        };
        let outcome =
            setup
                .pipeline
                .generate_pseudo_mask(&record.image, &record.persons, scores)?;
        if outcome.no_keypoint_warning {
            eprintln!(
                "warning: {}: no visible keypoints; mask is background-only",
                record.name
            );
        }
        formats::save_mask(
            &outcome.mask,
            &args.out_dir.join(format!("{}_mask.png", record.name)),
        )?;
        Ok((index, outcome.mask))
    })?;

    if let Some(csv) = evaluate_masks(&setup, &outcomes)? {
        formats::write_text(&args.out_dir.join("report.csv"), &csv)?;
        print!("{csv}");
    }
    println!(
        "wrote {} pseudo masks to {}",
        outcomes.len(),
        args.out_dir.display()
    );
    Ok(())
}

pub fn run_refine(args: &CommonArgs, external_scores: bool) -> Result<()> {
    let setup = load_setup(args)?;
    let dataset: Vec<DatasetItem> = setup
        .dataset
        .records
        .iter()
        .map(|r| DatasetItem {
            image: r.image.clone(),
            persons: r.persons.clone(),
            ground_truth: r.ground_truth.clone(),
        })
        .collect();

    let external: Vec<(partcut_core::ScoreMap, partcut_core::ScoreMap)>;
    let source = if external_scores {
        external = setup
            .dataset
            .records
            .iter()
            .map(|r| {
                let part = r
                    .scores
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("{}: record has no score map", r.name))?;
                // synthesize the object map from the part map: foreground =
                // sum of part channels
                let object = object_map_from_parts(&part);
                Ok((part, object))
            })
            .collect::<Result<_>>()?;
        ScoreSource::External(&external)
    } else {
        ScoreSource::Internal
    };

    let outcome = setup.pipeline.refine_iteratively(&dataset, source)?;
    for &index in &outcome.warnings {
        eprintln!(
            "warning: {}: no visible keypoints; mask is background-only",
            setup.dataset.records[index].name
        );
    }
    for (record, mask) in setup.dataset.records.iter().zip(&outcome.masks) {
        formats::save_mask(
            mask,
            &args.out_dir.join(format!("{}_mask.png", record.name)),
        )?;
    }
    // final score maps, reusable as external inputs to test-refine
    if let Some(model) = &outcome.model {
        if !model.degenerate {
            for record in &setup.dataset.records {
                let c = setup.pipeline.config();
                let partition = partcut_core::segment_graph_based(
                    &record.image,
                    c.superpixel_scale,
                    c.superpixel_min_size,
                    c.smoothing_sigma,
                )?;
                let features = partcut_core::energy::extract_features(&record.image, &partition);
                let (part, object) = predict_scores(model, &partition, &features);
                formats::save_scores(
                    &part,
                    &args.out_dir.join(format!("{}_scores.bin", record.name)),
                )?;
                formats::save_scores(
                    &object,
                    &args
                        .out_dir
                        .join(format!("{}_object_scores.bin", record.name)),
                )?;
            }
        }
    }

    let csv = formats::refine_metrics_csv(&outcome.iterations, &setup.taxonomy);
    formats::write_text(&args.out_dir.join("metrics.csv"), &csv)?;
    print!("{csv}");
    println!(
        "refined {} images over {} iterations",
        outcome.masks.len(),
        outcome.iterations.len()
    );
    Ok(())
}

fn object_map_from_parts(part: &partcut_core::ScoreMap) -> partcut_core::ScoreMap {
    let (w, h) = (part.width(), part.height());
    let plane = w * h;
    let mut values = vec![0.0; plane * 2];
    for i in 0..plane {
        let background = part.values()[i];
        let foreground: f64 = (1..part.channels())
            .map(|c| part.values()[c * plane + i])
            .sum();
        values[i] = background;
        values[plane + i] = foreground;
    }
    partcut_core::ScoreMap::new(w, h, 2, values).expect("derived object map is valid")
}

pub fn run_test_refine(args: &CommonArgs) -> Result<()> {
    let setup = load_setup(args)?;
    let outcomes = parallel_map(&setup.dataset.records, args.jobs, |index, record| {
        let scores = record
            .scores
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("{}: record has no score map", record.name))?;
        let outcome = setup
            .pipeline
            .test_time_refine(&record.image, &record.persons, scores)?;
        formats::save_mask(
            &outcome.mask,
            &args.out_dir.join(format!("{}_mask.png", record.name)),
        )?;
        Ok((index, outcome.mask))
    })?;

    if let Some(csv) = evaluate_masks(&setup, &outcomes)? {
        formats::write_text(&args.out_dir.join("report.csv"), &csv)?;
        print!("{csv}");
    }
    println!(
        "wrote {} refined masks to {}",
        outcomes.len(),
        args.out_dir.display()
    );
    Ok(())
}

pub fn run_evaluate(args: &CommonArgs, pred_dir: &Path) -> Result<()> {
    let setup = load_setup(args)?;
    let max_label = (setup.taxonomy.label_count() - 1) as u8;
    let masks = parallel_map(&setup.dataset.records, args.jobs, |index, record| {
        let path = pred_dir.join(format!("{}_mask.png", record.name));
        let mask = formats::load_mask(&path, max_label)?;
        Ok((index, mask))
    })?;
    for (index, mask) in &masks {
        let record = &setup.dataset.records[*index];
        if record.ground_truth.is_none() {
            bail!("{}: manifest record has no ground-truth mask", record.name);
        }
        let gt = record.ground_truth.as_ref().unwrap();
        if (mask.width(), mask.height()) != (gt.width(), gt.height()) {
            bail!(
                "{}: prediction and ground truth dimensions differ",
                record.name
            );
        }
    }
    let csv = evaluate_masks(&setup, &masks)?.expect("ground truth verified above");
    formats::write_text(&args.out_dir.join("report.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn run_overlay(args: &CommonArgs, pred_dir: &Path) -> Result<()> {
    let setup = load_setup(args)?;
    let max_label = (setup.taxonomy.label_count() - 1) as u8;
    let count = parallel_map(&setup.dataset.records, args.jobs, |_, record| {
        let path = pred_dir.join(format!("{}_mask.png", record.name));
        let mask = formats::load_mask(&path, max_label)?;
        formats::save_overlay(
            &record.image,
            &mask,
            &args.out_dir.join(format!("{}_overlay.png", record.name)),
        )?;
        Ok(())
    })?
    .len();
    println!("wrote {count} overlays to {}", args.out_dir.display());
    Ok(())
}

pub fn run_synth_fixture(out_dir: &Path, seed: u64, count: usize, size: usize) -> Result<()> {
    if size < 64 {
        bail!("--size must be at least 64");
    }
    if count == 0 {
        bail!("--count must be at least 1");
    }
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let manifest = synth::write_fixture(out_dir, SynthOptions { count, size, seed })?;
    println!(
        "wrote {count} synthetic scenes; manifest at {}",
        manifest.display()
    );
    Ok(())
}
