//! Synthetic phantoms for tests, demos and the end-to-end benchmark.

use std::path::{Path, PathBuf};

use mammoseg_core::classify::AcrLabel;
use mammoseg_core::raster::write_pgm;
use mammoseg_core::{BinaryMask, GrayImage, Grid, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PipelineError, Result};
use crate::manifest::Split;

/// Normalized radius of `(x, y)` in a half-ellipse whose flat side is the left
/// image edge and whose centre is `(0, h/2)`; below 1 is inside.
fn ellipse_radius(x: f64, y: f64, a: f64, b: f64, cy: f64) -> f64 {
    (x / a).hypot((y - cy) / b)
}

/// Ground truth of [`half_ellipse_phantom`].
#[derive(Debug, Clone)]
pub struct ExtractionFixture {
    pub image: GrayImage,
    pub breast: BinaryMask,
    pub artefact: Rect,
}

/// Bright half-ellipse against the left edge on a near-black background, plus
/// a small bright square in the top-right corner standing in for a film label.
pub fn half_ellipse_phantom(w: usize, h: usize, seed: u64) -> ExtractionFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, cy) = (0.7 * w as f64, 0.42 * h as f64, h as f64 / 2.0);
    let side = (w.min(h) / 10).max(3);
    let artefact = Rect { x_min: w - 2 - side, y_min: 2, x_max: w - 3, y_max: 1 + side };
    let breast = Grid::from_fn(w, h, |x, y| ellipse_radius(x as f64, y as f64, a, b, cy) <= 1.0);
    let image = GrayImage::from_fn(w, h, 255, |x, y| {
        let noise: f64 = rng.gen_range(0.0..6.0);
        if *breast.get(x, y) {
            let rho = ellipse_radius(x as f64, y as f64, a, b, cy);
            (120.0 + 60.0 * (1.0 - rho) + noise).round() as u16
        } else if artefact.contains(x, y) {
            230
        } else {
            noise.round() as u16
        }
    })
    .expect("values below 255");
    ExtractionFixture { image, breast, artefact }
}

/// Calcification morphology per ACR category: more, larger and brighter spots
/// in tighter clusters as the category rises.
#[derive(Debug, Clone, Copy)]
struct SpotModel {
    count: usize,
    sigma: f64,
    amplitude: f64,
    spread: f64,
}

fn spot_model(label: AcrLabel) -> SpotModel {
    match label {
        AcrLabel::Acr1 => SpotModel { count: 0, sigma: 0.0, amplitude: 0.0, spread: 0.0 },
        AcrLabel::Acr2 => SpotModel { count: 2, sigma: 0.8, amplitude: 45.0, spread: 10.0 },
        AcrLabel::Acr3 => SpotModel { count: 5, sigma: 1.1, amplitude: 65.0, spread: 8.0 },
        AcrLabel::Acr4 => SpotModel { count: 9, sigma: 1.4, amplitude: 85.0, spread: 7.0 },
        AcrLabel::Acr5 => SpotModel { count: 14, sigma: 1.7, amplitude: 105.0, spread: 6.0 },
    }
}

/// A `size x size` breast phantom with label-dependent calcification spots.
pub fn breast_phantom(label: AcrLabel, size: usize, rng: &mut impl Rng) -> GrayImage {
    let n = size as f64;
    let (a, b, cy) = (0.75 * n, 0.45 * n, n / 2.0);
    let model = spot_model(label);
    // cluster centre well inside the breast
    let (ccx, ccy) = (rng.gen_range(0.2..0.45) * n, cy + rng.gen_range(-0.15..0.15) * n);
    let spots: Vec<(f64, f64)> = (0..model.count)
        .map(|_| {
            let r = model.spread * rng.gen::<f64>().sqrt();
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            (ccx + r * t.cos(), ccy + r * t.sin())
        })
        .collect();
    GrayImage::from_fn(size, size, 255, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let noise: f64 = rng.gen_range(-6.0..6.0);
        let rho = ellipse_radius(fx, fy, a, b, cy);
        if rho > 1.0 {
            return rng.gen_range(0..4);
        }
        let mut v = 90.0 + 25.0 * (1.0 - rho) + noise;
        for &(sx, sy) in &spots {
            let d2 = (fx - sx).powi(2) + (fy - sy).powi(2);
            v += model.amplitude * (-d2 / (2.0 * model.sigma * model.sigma)).exp();
        }
        v.round().clamp(0.0, 255.0) as u16
    })
    .expect("values clamped to 255")
}

/// Writes a balanced labelled dataset and its manifest; returns the manifest path.
///
/// Images are named `acr<k>_<split>_<nnn>.pgm`. Every image has its own RNG
/// stream derived from `seed`, so the output is fully reproducible.
pub fn write_benchmark(dir: &Path, train_per_class: usize, test_per_class: usize, size: usize, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut manifest = String::from("path,label,split\n");
    let mut stream = 0u64;
    for split in [Split::Train, Split::Test] {
        let per_class = if split == Split::Train { train_per_class } else { test_per_class };
        for label in AcrLabel::ALL {
            for i in 0..per_class {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                stream += 1;
                let img = breast_phantom(label, size, &mut rng);
                let name = format!("acr{}_{split}_{i:03}.pgm", label.index() + 1);
                let path = dir.join(&name);
                write_pgm(&img, &path).map_err(|e| PipelineError::stage(crate::error::Stage::Read, &name, e))?;
                manifest.push_str(&format!("{name},{label},{split}\n"));
            }
        }
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| PipelineError::io(&path, e))?;
    Ok(path)
}
