use mammoseg::pipeline::{
    read_features_csv, run_detect, run_extract, run_features, run_train, write_features_csv, FeatureRow,
};
use mammoseg::synthetic::half_ellipse_phantom;
use mammoseg::{DatasetManifest, PipelineConfig, PipelineError, Stage};
use mammoseg_core::classify::AcrLabel;
use mammoseg_core::roi::{compute_glcm, glcm_features, Orientation, RoiBox};
use mammoseg_core::{GrayImage, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Flat tissue half-ellipse against the left edge with gaussian spots at `spots`.
fn spotted_breast(spots: &[(f64, f64)]) -> GrayImage {
    let n = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    GrayImage::from_fn(n, n, 255, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let noise = rng.gen_range(0..3);
        if (fx / 90.0).hypot((fy - 64.0) / 54.0) > 1.0 {
            return noise;
        }
        let mut v = 120.0 + noise as f64;
        for &(sx, sy) in spots {
            v += 110.0 * (-((fx - sx).powi(2) + (fy - sy).powi(2)) / 4.5).exp();
        }
        v.round().min(255.0) as u16
    })
    .unwrap()
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    inter as f64 / union as f64
}

#[test]
fn all_black_image_fails_in_extract() {
    let img = GrayImage::from_fn(32, 32, 255, |_, _| 0).unwrap();
    let err = run_extract(&PipelineConfig::default(), &img, "black").unwrap_err();
    assert_eq!(err.stage_name(), Some(Stage::Extract));
    assert!(err.to_string().contains("black"), "{err}");
}

#[test]
fn clean_breast_mask_matches_its_foreground() {
    let f = half_ellipse_phantom(120, 100, 11);
    // drop the artefact, leaving only breast and background
    let clean = GrayImage::from_fn(120, 100, 255, |x, y| if f.artefact.contains(x, y) { 2 } else { f.image.get(x, y) }).unwrap();
    let ex = run_extract(&PipelineConfig::default(), &clean, "clean").unwrap();
    assert!(iou(ex.region.mask.data(), f.breast.data()) >= 0.95);
}

#[test]
fn roi_covers_three_spots() {
    let spots = [(30.0, 48.0), (46.0, 70.0), (34.0, 84.0)];
    let cfg = PipelineConfig::default();
    let ex = run_extract(&cfg, &spotted_breast(&spots), "three").unwrap();
    let det = run_detect(&cfg, &ex.region, "three").unwrap();
    assert!(!det.roi_from_seeds);
    let r = det.roi.rect();
    for (sx, sy) in spots {
        assert!(r.contains(sx as usize, sy as usize), "{r:?} misses ({sx}, {sy})");
    }
}

#[test]
fn single_spot_roi_is_tight() {
    let cfg = PipelineConfig::default();
    let ex = run_extract(&cfg, &spotted_breast(&[(40.0, 64.0)]), "one").unwrap();
    let det = run_detect(&cfg, &ex.region, "one").unwrap();
    let r = det.roi.rect();
    let slack = cfg.schedule.band_width as usize;
    assert!(r.contains(40, 64));
    assert!(r.x_min + slack >= 40 - 3 && r.x_max <= 40 + 3 + slack, "{r:?}");
    assert!(r.y_min + slack >= 64 - 3 && r.y_max <= 64 + 3 + slack, "{r:?}");
}

#[test]
fn no_bright_pixels_in_mask_is_a_detect_error() {
    let cfg = PipelineConfig::default();
    let f = half_ellipse_phantom(64, 64, 1);
    let mut ex = run_extract(&cfg, &f.image, "dark").unwrap();
    ex.region.masked_image = GrayImage::from_fn(64, 64, 255, |_, _| 0).unwrap();
    let err = run_detect(&cfg, &ex.region, "dark").unwrap_err();
    assert_eq!(err.stage_name(), Some(Stage::Detect));
}

#[test]
fn constant_roi_features() {
    let img = GrayImage::from_fn(10, 10, 255, |_, _| 77).unwrap();
    let roi = RoiBox::from_rect(Rect { x_min: 2, y_min: 2, x_max: 8, y_max: 7 });
    let f = run_features(&PipelineConfig::default(), &img, &roi, "flat").unwrap();
    assert_eq!(f.homogeneity, 1.0);
    assert_eq!(f.contrast, 0.0);
}

#[test]
fn checkerboard_horizontal_contrast_is_one() {
    let img = GrayImage::from_fn(6, 6, 255, |x, y| if (x + y) % 2 == 0 { 0 } else { 200 }).unwrap();
    let roi = RoiBox::from_rect(Rect { x_min: 0, y_min: 0, x_max: 5, y_max: 5 });
    let g = compute_glcm(&img, &roi, 2, Orientation::Deg0.offset()).unwrap();
    assert!((glcm_features(&g).unwrap().contrast - 1.0).abs() < 1e-12);
}

#[test]
fn features_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let img = spotted_breast(&[(40.0, 60.0), (44.0, 66.0)]);
    let ex = run_extract(&cfg, &img, "rt").unwrap();
    let det = run_detect(&cfg, &ex.region, "rt").unwrap();
    let features = run_features(&cfg, &img, &det.roi, "rt").unwrap();
    let rows = vec![
        FeatureRow { id: "rt".into(), roi: det.roi, features, label: Some(AcrLabel::Acr4) },
        FeatureRow { id: "nolabel".into(), roi: det.roi, features, label: None },
    ];
    let path = dir.path().join("f.csv");
    write_features_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("id,x_min,y_min,x_max,y_max,moy,variance,energy,contrast,entropy,homogeneity,label\n"));
    let back = read_features_csv(&path).unwrap();
    assert_eq!(back, rows);
    for (a, b) in back[0].features.to_array().iter().zip(features.to_array()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
    }
}

#[test]
fn classifier_without_full_class_coverage_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let mut manifest = String::from("path,label,split\n");
    let mut rows = Vec::new();
    for (i, label) in [AcrLabel::Acr1, AcrLabel::Acr2, AcrLabel::Acr3, AcrLabel::Acr1].into_iter().enumerate() {
        let name = format!("img{i}.pgm");
        std::fs::write(dir.path().join(&name), b"P2\n1 1\n255\n0\n").unwrap();
        manifest.push_str(&format!("{name},{label},train\n"));
        let mut features = mammoseg_core::roi::FeatureVector::from_array([i as f64; 6]);
        features.energy = 0.5;
        rows.push(FeatureRow { id: format!("img{i}"), roi: RoiBox::from_rect(Rect { x_min: 0, y_min: 0, x_max: 0, y_max: 0 }), features, label: Some(label) });
    }
    let m = DatasetManifest::parse(&manifest, dir.path()).unwrap();
    let models = run_train(&cfg, &rows, &m).unwrap();
    assert!(models.mlp.is_none());
    assert!(!models.notes.is_empty());
}

#[test]
fn manifest_rejects_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let err = DatasetManifest::parse("path,label,split\nnope.pgm,ACR1,train\n", dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::Manifest(_)), "{err:?}");
}
