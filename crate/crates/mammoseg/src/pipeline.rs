//! Stage runners: extract, detect, features, train, evaluate and run-all.

use std::fs;
use std::path::Path;

use mammoseg_core::breast::{cut_lines, extract_breast, BreastRegion, Extraction};
use mammoseg_core::classify::{
    evaluate, knn_classify, mlp_classify, mlp_train, AcrLabel, Evaluation, MlpModel, TrainingLog, TrainingSet,
};
use mammoseg_core::levelset::{detect_from_seeds, DetectedRegions};
use mammoseg_core::raster::{read_pgm, render_overlay, write_pgm, write_ppm};
use mammoseg_core::roi::{bounding_box_of, feature_vector_with, roi_bounding_box, FeatureVector, RoiBox};
use mammoseg_core::{BinaryMask, GrayImage, Point, Rect};

use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result, Stage};
use crate::manifest::{DatasetManifest, Split};
use crate::report::AccuracyReport;

pub const FEATURES_FILE: &str = "features.csv";
pub const MODEL_FILE: &str = "mlp_model.txt";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const CONFUSION_CSV: &str = "confusion.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    read_pgm(path).map_err(|e| PipelineError::stage(Stage::Read, &path.display().to_string(), e))
}

/// Image id used for output names: the file stem.
pub fn image_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn mask_image(mask: &BinaryMask) -> GrayImage {
    GrayImage::new(mask.width(), mask.height(), 255, mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect())
        .expect("mask shape is valid")
}

/// Enhancement, binarization, orientation, separation, labelling and selection.
pub fn run_extract(cfg: &PipelineConfig, img: &GrayImage, id: &str) -> Result<Extraction> {
    extract_breast(img, cfg.extract).map_err(|e| PipelineError::stage(Stage::Extract, id, e))
}

/// Writes `<id>_enhanced/_binary/_separated/_masked.pgm` and the `<id>_extract.ppm`
/// overlay (mask outline and separation lines).
pub fn write_extract_artifacts(dir: &Path, id: &str, img: &GrayImage, ex: &Extraction) -> Result<()> {
    ensure_dir(dir)?;
    let tag = |e| PipelineError::stage(Stage::Extract, id, e);
    write_pgm(&ex.enhanced, dir.join(format!("{id}_enhanced.pgm"))).map_err(tag)?;
    write_pgm(&mask_image(&ex.binary), dir.join(format!("{id}_binary.pgm"))).map_err(tag)?;
    write_pgm(&mask_image(&ex.separation.mask), dir.join(format!("{id}_separated.pgm"))).map_err(tag)?;
    write_pgm(&ex.region.masked_image, dir.join(format!("{id}_masked.pgm"))).map_err(tag)?;
    let mut outline = ex.region.mask.boundary();
    if let Some(anchors) = ex.separation.anchors {
        outline.extend(cut_lines(img.width(), img.height(), ex.orientation, anchors));
    }
    let overlay = render_overlay(img, &outline, None).map_err(tag)?;
    write_ppm(&overlay, dir.join(format!("{id}_extract.ppm"))).map_err(tag)
}

/// Output of [`run_detect`].
#[derive(Debug, Clone)]
pub struct Detection {
    pub regions: DetectedRegions,
    pub seeds: Vec<Point>,
    pub roi: RoiBox,
    /// No region survived the evolution and the ROI was taken from the seeds.
    pub roi_from_seeds: bool,
}

/// Brightest-stratum seeds restricted to the breast mask.
pub fn mask_seeds(region: &BreastRegion, top_fraction: f64) -> Vec<Point> {
    let img = &region.masked_image;
    let max = region
        .mask
        .data()
        .iter()
        .zip(img.data())
        .filter(|(&m, _)| m)
        .map(|(_, &v)| v)
        .max()
        .unwrap_or(0);
    if max == 0 {
        return Vec::new();
    }
    let cut = (1.0 - top_fraction.clamp(0.0, 1.0)) * max as f64;
    let w = img.width();
    (0..img.data().len())
        .filter(|&i| region.mask.data()[i] && img.data()[i] as f64 >= cut)
        .map(|i| Point::new(i % w, i / w))
        .collect()
}

/// Grows a box to at least `min` pixels per side around its centre, staying in the image.
pub fn grow_box(b: RoiBox, min: usize, width: usize, height: usize) -> RoiBox {
    let grow = |lo: usize, hi: usize, limit: usize| {
        let target = min.min(limit);
        let len = hi - lo + 1;
        if len >= target {
            return (lo, hi);
        }
        let extra = target - len;
        let mut lo2 = lo.saturating_sub(extra / 2);
        let mut hi2 = lo2 + target - 1;
        if hi2 >= limit {
            hi2 = limit - 1;
            lo2 = hi2 + 1 - target;
        }
        (lo2.min(lo), hi2.max(hi))
    };
    let r = b.rect();
    let (x_min, x_max) = grow(r.x_min, r.x_max, width);
    let (y_min, y_max) = grow(r.y_min, r.y_max, height);
    RoiBox::from_rect(Rect { x_min, y_min, x_max, y_max })
}

/// Seeds, fast march and level-set evolution on the masked breast, then the ROI box.
pub fn run_detect(cfg: &PipelineConfig, region: &BreastRegion, id: &str) -> Result<Detection> {
    let seeds = mask_seeds(region, cfg.schedule.seed_fraction);
    if seeds.is_empty() {
        return Err(PipelineError::stage_msg(Stage::Detect, id, "no pixel above the seed threshold inside the breast mask"));
    }
    let regions = detect_from_seeds(&region.masked_image, &seeds, &cfg.speed, &cfg.schedule)
        .map_err(|e| PipelineError::stage(Stage::Detect, id, e))?;
    if regions.degenerate {
        return Err(PipelineError::stage_msg(Stage::Detect, id, "degenerate seeding: every pixel is a seed"));
    }
    let (roi, roi_from_seeds) = match roi_bounding_box(&regions.regions) {
        Ok(b) => (b, false),
        Err(_) => (bounding_box_of(seeds.iter().copied()).expect("seeds are non-empty"), true),
    };
    let (w, h) = (region.mask.width(), region.mask.height());
    let roi = grow_box(roi, cfg.roi_min_size, w, h);
    Ok(Detection { regions, seeds, roi, roi_from_seeds })
}

/// Writes `<id>_detect.ppm`: contour in red and ROI box in green over the masked image.
pub fn write_detect_artifacts(dir: &Path, id: &str, region: &BreastRegion, det: &Detection) -> Result<()> {
    ensure_dir(dir)?;
    let tag = |e| PipelineError::stage(Stage::Detect, id, e);
    let overlay = render_overlay(&region.masked_image, &det.regions.contour, Some(det.roi.rect())).map_err(tag)?;
    write_ppm(&overlay, dir.join(format!("{id}_detect.ppm"))).map_err(tag)
}

pub fn run_features(cfg: &PipelineConfig, img: &GrayImage, roi: &RoiBox, id: &str) -> Result<FeatureVector> {
    feature_vector_with(img, roi, cfg.glcm_levels, cfg.moy_mode).map_err(|e| PipelineError::stage(Stage::Features, id, e))
}

/// One line of the features CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub roi: RoiBox,
    pub features: FeatureVector,
    pub label: Option<AcrLabel>,
}

pub const FEATURE_HEADER: [&str; 12] =
    ["id", "x_min", "y_min", "x_max", "y_max", "moy", "variance", "energy", "contrast", "entropy", "homogeneity", "label"];

pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FEATURE_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.id.clone(),
            r.roi.x_min().to_string(),
            r.roi.y_min().to_string(),
            r.roi.x_max().to_string(),
            r.roi.y_max().to_string(),
        ];
        rec.extend(r.features.to_array().iter().map(|v| format!("{v:?}")));
        rec.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let bad = |m: String| PipelineError::Manifest(format!("{}: {m}", path.display()));
    if reader.headers()?.iter().collect::<Vec<_>>() != FEATURE_HEADER {
        return Err(bad("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("bad number `{}`", &rec[i])));
        let idx = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(format!("bad coordinate `{}`", &rec[i])));
        let roi = RoiBox::from_rect(Rect { x_min: idx(1)?, y_min: idx(2)?, x_max: idx(3)?, y_max: idx(4)? });
        let features = FeatureVector::from_array([num(5)?, num(6)?, num(7)?, num(8)?, num(9)?, num(10)?]);
        let label = match &rec[11] {
            "" => None,
            s => Some(s.parse::<AcrLabel>().map_err(|e| bad(e.to_string()))?),
        };
        rows.push(FeatureRow { id: rec[0].to_string(), roi, features, label });
    }
    Ok(rows)
}

/// Extract, detect and feature stages for one image; artifacts go to `out` when given.
pub fn process_image(
    cfg: &PipelineConfig,
    img: &GrayImage,
    id: &str,
    label: Option<AcrLabel>,
    out: Option<&Path>,
) -> Result<FeatureRow> {
    let ex = run_extract(cfg, img, id)?;
    let det = run_detect(cfg, &ex.region, id)?;
    if let Some(dir) = out {
        write_extract_artifacts(dir, id, img, &ex)?;
        write_detect_artifacts(dir, id, &ex.region, &det)?;
    }
    let features = run_features(cfg, img, &det.roi, id)?;
    Ok(FeatureRow { id: id.to_string(), roi: det.roi, features, label })
}

/// Features for every manifest entry, written to `<out>/features.csv`.
pub fn manifest_features(cfg: &PipelineConfig, manifest: &DatasetManifest, out: &Path) -> Result<Vec<FeatureRow>> {
    ensure_dir(out)?;
    let mut rows = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let img = read_image(&e.path)?;
        rows.push(process_image(cfg, &img, &e.id, Some(e.label), Some(out))?);
    }
    write_features_csv(&out.join(FEATURES_FILE), &rows)?;
    Ok(rows)
}

/// Feature rows of one split, joined with the manifest by id.
fn split_rows<'a>(rows: &'a [FeatureRow], manifest: &DatasetManifest, split: Split) -> Result<Vec<(&'a FeatureRow, AcrLabel)>> {
    let mut out = Vec::new();
    for r in rows {
        let Some(e) = manifest.find(&r.id) else { continue };
        if e.split == split {
            out.push((r, r.label.unwrap_or(e.label)));
        }
    }
    if out.is_empty() {
        return Err(PipelineError::stage_msg(
            if split == Split::Train { Stage::Train } else { Stage::Evaluate },
            "manifest",
            format!("the {split} split is empty"),
        ));
    }
    Ok(out)
}

/// Classifiers fitted on the train split. A classifier that cannot be trained
/// is `None` and the reason is kept in `notes`.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub training: TrainingSet,
    pub knn: Option<usize>,
    pub mlp: Option<(MlpModel, TrainingLog)>,
    pub notes: Vec<String>,
}

fn missing_classes(labels: &[AcrLabel]) -> Vec<AcrLabel> {
    AcrLabel::ALL.into_iter().filter(|l| !labels.contains(l)).collect()
}

pub fn run_train(cfg: &PipelineConfig, rows: &[FeatureRow], manifest: &DatasetManifest) -> Result<TrainedModels> {
    let train = split_rows(rows, manifest, Split::Train)?;
    let samples: Vec<(FeatureVector, AcrLabel)> = train.iter().map(|(r, l)| (r.features, *l)).collect();
    let training = TrainingSet::new(&samples).map_err(|e| PipelineError::stage(Stage::Train, "train split", e))?;
    let missing = missing_classes(training.labels());
    let absent = |name: &str| {
        let list: Vec<String> = missing.iter().map(|l| l.to_string()).collect();
        format!("{name} not trained: {} absent from the train split", list.join(", "))
    };
    let mut notes = Vec::new();
    let knn = if !cfg.classifier.knn() {
        None
    } else if !missing.is_empty() {
        notes.push(absent("knn"));
        None
    } else if cfg.knn_k > training.len() {
        notes.push(format!("knn not trained: k = {} exceeds the {} training samples", cfg.knn_k, training.len()));
        None
    } else {
        Some(cfg.knn_k)
    };
    let mlp = if !cfg.classifier.mlp() {
        None
    } else if !missing.is_empty() {
        notes.push(absent("mlp"));
        None
    } else {
        Some(mlp_train(&training, &cfg.mlp).map_err(|e| PipelineError::stage(Stage::Train, "mlp", e))?)
    };
    Ok(TrainedModels { training, knn, mlp, notes })
}

/// Rebuilds [`TrainedModels`] from saved outputs: KNN is refitted from the
/// train rows and the MLP is read from `<out>/mlp_model.txt`.
pub fn load_models(cfg: &PipelineConfig, rows: &[FeatureRow], manifest: &DatasetManifest, out: &Path) -> Result<TrainedModels> {
    let knn_only = PipelineConfig { classifier: crate::config::ClassifierChoice::Knn, ..cfg.clone() };
    let mut models = run_train(&knn_only, rows, manifest)?;
    if cfg.classifier.mlp() {
        let path = out.join(MODEL_FILE);
        let model = MlpModel::load(&path).map_err(|e| PipelineError::stage(Stage::Evaluate, &path.display().to_string(), e))?;
        models.mlp = Some((model, TrainingLog { losses: Vec::new(), final_learning_rate: cfg.mlp.learning_rate }));
    }
    if !cfg.classifier.knn() {
        models.knn = None;
    }
    Ok(models)
}

/// Predicts the test split with every trained classifier.
pub fn run_evaluate(
    cfg: &PipelineConfig,
    models: &TrainedModels,
    rows: &[FeatureRow],
    manifest: &DatasetManifest,
) -> Result<AccuracyReport> {
    let test = split_rows(rows, manifest, Split::Test)?;
    let score = |predict: &dyn Fn(&FeatureVector) -> Result<AcrLabel>| -> Result<Evaluation> {
        let mut pairs = Vec::with_capacity(test.len());
        for (r, truth) in &test {
            pairs.push((predict(&r.features)?, *truth));
        }
        evaluate(&pairs).map_err(|e| PipelineError::stage(Stage::Evaluate, "test split", e))
    };
    let knn = match models.knn {
        Some(k) => Some(score(&|f| {
            knn_classify(&models.training, f, k).map_err(|e| PipelineError::stage(Stage::Evaluate, "knn", e))
        })?),
        None => None,
    };
    let mlp = match &models.mlp {
        Some((m, _)) => Some(score(&|f| Ok(mlp_classify(m, f)))?),
        None => None,
    };
    Ok(AccuracyReport {
        knn,
        mlp,
        notes: models.notes.clone(),
        train_count: models.training.len(),
        test_count: test.len(),
        config: cfg.echo(),
    })
}

/// Writes the MLP model (when trained) and the text and CSV reports.
pub fn write_outputs(out: &Path, models: &TrainedModels, report: &AccuracyReport) -> Result<()> {
    ensure_dir(out)?;
    if let Some((m, _)) = &models.mlp {
        let path = out.join(MODEL_FILE);
        m.save(&path).map_err(|e| PipelineError::stage(Stage::Train, "mlp", e))?;
    }
    write_text(&out.join(REPORT_TEXT), &report.to_text())?;
    write_text(&out.join(REPORT_CSV), &report.to_csv())?;
    write_text(&out.join(CONFUSION_CSV), &report.confusion_csv())
}

/// The whole pipeline over a manifest: features, training, evaluation and reports.
pub fn run_all(cfg: &PipelineConfig, manifest: &DatasetManifest, out: &Path) -> Result<AccuracyReport> {
    let rows = manifest_features(cfg, manifest, out)?;
    let models = run_train(cfg, &rows, manifest)?;
    let report = run_evaluate(cfg, &models, &rows, manifest)?;
    write_outputs(out, &models, &report)?;
    Ok(report)
}
