//! Co-occurrence matrices against explicit pair enumeration.

use mammoseg_core::roi::{compute_glcm, glcm_features, Glcm, Orientation, RoiBox};
use mammoseg_core::{GrayImage, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle(img: &GrayImage, r: Rect, levels: usize, offset: (isize, isize)) -> Option<Vec<f64>> {
    let pixels: Vec<(usize, usize)> = (r.y_min..=r.y_max).flat_map(|y| (r.x_min..=r.x_max).map(move |x| (x, y))).collect();
    let values: Vec<f64> = pixels.iter().map(|&(x, y)| img.get(x, y) as f64).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let q = |v: f64| ((v - lo) * levels as f64 / (hi - lo + 1.0)).floor() as usize;
    let mut counts = vec![0.0; levels * levels];
    let mut total = 0.0;
    for (a, &(ax, ay)) in pixels.iter().enumerate() {
        for (b, &(bx, by)) in pixels.iter().enumerate() {
            if bx as isize - ax as isize == offset.0 && by as isize - ay as isize == offset.1 {
                counts[q(values[a]) * levels + q(values[b])] += 1.0;
                total += 1.0;
            }
        }
    }
    (total > 0.0).then(|| counts.iter().map(|c| c / total).collect())
}

#[test]
fn glcm_matches_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let (w, h) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let max: u16 = rng.gen_range(1..=40);
        let img = GrayImage::from_fn(w, h, max, |_, _| rng.gen_range(0..=max)).unwrap();
        let (x0, x1) = {
            let (a, b) = (rng.gen_range(0..w), rng.gen_range(0..w));
            (a.min(b), a.max(b))
        };
        let (y0, y1) = {
            let (a, b) = (rng.gen_range(0..h), rng.gen_range(0..h));
            (a.min(b), a.max(b))
        };
        let r = Rect { x_min: x0, y_min: y0, x_max: x1, y_max: y1 };
        let levels = rng.gen_range(2..=4);
        for o in Orientation::ALL {
            let got = compute_glcm(&img, &RoiBox::from_rect(r), levels, o.offset());
            match oracle(&img, r, levels, o.offset()) {
                Some(expected) => assert_eq!(got.unwrap().matrix(), &expected[..], "{img:?} {r:?} {o:?}"),
                None => assert!(got.is_err()),
            }
        }
    }
}

#[test]
fn hand_evaluated_features() {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let f = glcm_features(&Glcm::from_matrix(2, vec![0.5, 0.0, 0.0, 0.5], (1, 0))).unwrap();
    assert!(close(f.energy, 0.5) && close(f.contrast, 0.0) && close(f.homogeneity, 1.0));
    assert!(close(f.entropy, 1.0) && close(f.moy, 0.5) && close(f.variance, 0.25));

    let f = glcm_features(&Glcm::from_matrix(3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0], (0, -1))).unwrap();
    assert!(close(f.energy, 1.0) && close(f.contrast, 0.0) && close(f.entropy, 0.0) && close(f.homogeneity, 1.0));

    let f = glcm_features(&Glcm::from_matrix(2, vec![0.25; 4], (1, -1))).unwrap();
    assert!(close(f.energy, 0.25) && close(f.entropy, 2.0));
    // off-diagonal mass: contrast 0.5, homogeneity 0.5 + 0.5 / 2
    assert!(close(f.contrast, 0.5) && close(f.homogeneity, 0.75));
}
