use mammoseg_core::levelset::{contour_curvatures, detect, Schedule, SpeedParams};
use mammoseg_core::{GrayImage, Point, RealField};

fn disk_phantom(n: usize, disks: &[(f64, f64, f64)], fg: f64, bg: f64) -> GrayImage {
    // 4x4 supersampled coverage for a smooth edge
    GrayImage::from_fn(n, n, 255, |x, y| {
        let mut hits = 0;
        for sy in 0..4 {
            for sx in 0..4 {
                let px = x as f64 + (sx as f64 + 0.5) / 4.0 - 0.5;
                let py = y as f64 + (sy as f64 + 0.5) / 4.0 - 0.5;
                if disks.iter().any(|&(cx, cy, r)| (px - cx).hypot(py - cy) <= r) {
                    hits += 1;
                }
            }
        }
        let c = hits as f64 / 16.0;
        (bg + c * (fg - bg)).round() as u16
    })
    .unwrap()
}

fn hausdorff_to_circle(contour: &[Point], cx: f64, cy: f64, r: f64) -> f64 {
    let forward = contour
        .iter()
        .map(|p| ((p.x as f64 - cx).hypot(p.y as f64 - cy) - r).abs())
        .fold(0.0, f64::max);
    let backward = (0..720)
        .map(|k| {
            let a = k as f64 * std::f64::consts::PI / 360.0;
            let (bx, by) = (cx + r * a.cos(), cy + r * a.sin());
            contour.iter().map(|p| (p.x as f64 - bx).hypot(p.y as f64 - by)).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    forward.max(backward)
}

#[test]
fn single_disk_boundary_recovered() {
    let img = disk_phantom(128, &[(64.0, 64.0, 25.0)], 200.0, 40.0);
    let d = detect(&img, &SpeedParams::default(), &Schedule::default()).unwrap();
    let hd = hausdorff_to_circle(&d.contour, 64.0, 64.0, 25.0);
    assert_eq!(d.regions.label_count(), 1);
    assert!(hd <= 2.0, "hausdorff {hd}");
}

#[test]
fn two_disks_two_regions() {
    let img = disk_phantom(128, &[(35.0, 40.0, 15.0), (90.0, 85.0, 18.0)], 210.0, 30.0);
    let d = detect(&img, &SpeedParams::default(), &Schedule::default()).unwrap();
    assert_eq!(d.regions.label_count(), 2);
}

#[test]
fn circle_curvature_matches_inverse_radius() {
    for r in [5.0, 10.0, 20.0] {
        let n = (2.0 * r) as usize + 16;
        let c = n as f64 / 2.0 + 0.3;
        let phi = RealField::from_fn(n, n, |x, y| (x as f64 - c).hypot(y as f64 - c) - r);
        let ks = contour_curvatures(&phi);
        assert!(!ks.is_empty());
        for k in ks {
            assert!((k * r - 1.0).abs() <= 0.1, "r {r}: kappa {k}");
        }
    }
}

#[test]
fn graded_noisy_disk_grows_to_edge() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let img = GrayImage::from_fn(128, 128, 255, |x, y| {
        let rho = (x as f64 - 64.0).hypot(y as f64 - 64.0) / 25.0;
        let base = if rho <= 1.0 { 150.0 + 60.0 * (1.0 - rho * rho) } else { 40.0 };
        (base + rng.gen_range(-10.0..10.0)).round() as u16
    })
    .unwrap();
    let d = detect(&img, &SpeedParams::default(), &Schedule::default()).unwrap();
    let hd = hausdorff_to_circle(&d.contour, 64.0, 64.0, 25.0);
    assert_eq!(d.regions.label_count(), 1);
    assert!(hd <= 2.0, "hausdorff {hd}");
}
