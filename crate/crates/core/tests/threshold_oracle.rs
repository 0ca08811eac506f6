//! Thresholds and connected components against brute-force references.

use std::collections::VecDeque;

use mammoseg_core::breast::{label_components, threshold, ThresholdMethod};
use mammoseg_core::{BinaryMask, GrayImage, Grid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Score of splitting at `t` computed straight from the pixel list.
fn oracle_score(values: &[u16], t: u16, method: ThresholdMethod) -> Option<f64> {
    let n = values.len() as f64;
    let (lo, hi): (Vec<u16>, Vec<u16>) = values.iter().partition(|&&v| v <= t);
    let count = |class: &[u16], v: u16| class.iter().filter(|&&x| x == v).count() as f64 / n;
    let distinct = |class: &[u16]| {
        let mut d = class.to_vec();
        d.sort_unstable();
        d.dedup();
        d
    };
    match method {
        ThresholdMethod::Otsu => {
            if lo.is_empty() || hi.is_empty() {
                return Some(0.0);
            }
            let mean = |c: &[u16]| c.iter().map(|&v| v as f64).sum::<f64>() / c.len() as f64;
            let (w0, w1) = (lo.len() as f64 / n, hi.len() as f64 / n);
            Some(w0 * w1 * (mean(&lo) - mean(&hi)).powi(2))
        }
        ThresholdMethod::MaxEntropy => {
            if lo.is_empty() || hi.is_empty() {
                return None;
            }
            let h = |c: &[u16]| {
                let mass = c.len() as f64 / n;
                -distinct(c).iter().map(|&v| count(c, v) / mass).map(|q| q * q.ln()).sum::<f64>()
            };
            Some(h(&lo) + h(&hi))
        }
        ThresholdMethod::MaxCorrelation => {
            if lo.is_empty() || hi.is_empty() {
                return None;
            }
            let g = |c: &[u16]| distinct(c).iter().map(|&v| count(c, v).powi(2)).sum::<f64>();
            let (p0, p1) = (lo.len() as f64 / n, hi.len() as f64 / n);
            Some(-(g(&lo) * g(&hi)).ln() + 2.0 * (p0 * p1).ln())
        }
    }
}

fn oracle_threshold(img: &GrayImage, method: ThresholdMethod) -> Option<u16> {
    let scores: Vec<Option<f64>> = (0..img.max_value()).map(|t| oracle_score(img.data(), t, method)).collect();
    let best = scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * best.abs().max(1.0);
    scores.iter().position(|s| matches!(s, Some(v) if *v >= best - tol)).map(|t| t as u16)
}

#[test]
fn thresholds_match_brute_force_on_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 200 {
        let levels: u16 = rng.gen_range(2..=16);
        let (w, h) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let data: Vec<u16> = (0..w * h).map(|_| rng.gen_range(0..levels)).collect();
        let img = GrayImage::new(w, h, levels - 1, data).unwrap();
        let distinct = {
            let mut d = img.data().to_vec();
            d.sort_unstable();
            d.dedup();
            d.len()
        };
        for method in [ThresholdMethod::Otsu, ThresholdMethod::MaxEntropy, ThresholdMethod::MaxCorrelation] {
            let got = threshold(&img, method);
            if distinct < 2 {
                assert!(got.is_err());
                continue;
            }
            assert_eq!(got.ok(), oracle_threshold(&img, method), "{method} on {img:?}");
        }
        if distinct >= 2 {
            checked += 1;
        }
    }
}

fn flood_fill(mask: &BinaryMask) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.data()[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, next)
}

fn random_mask() -> impl Strategy<Value = BinaryMask> {
    (1usize..=32, 1usize..=32, 0.05f64..0.8).prop_flat_map(|(w, h, density)| {
        prop::collection::vec(prop::bool::weighted(density), w * h).prop_map(move |d| Grid::from_vec(w, h, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn labelling_matches_flood_fill(mask in random_mask()) {
        let got = label_components(&mask);
        let (labels, count) = flood_fill(&mask);
        prop_assert_eq!(got.label_count(), count);
        prop_assert_eq!(got.labels(), &labels[..]);
    }

    #[test]
    fn threshold_splits_into_two_nonempty_classes(
        data in prop::collection::vec(0u16..=255, 2..200),
    ) {
        let w = data.len();
        let img = GrayImage::new(w, 1, 255, data).unwrap();
        let (lo, hi) = img.min_max();
        for method in [ThresholdMethod::Otsu, ThresholdMethod::MaxEntropy, ThresholdMethod::MaxCorrelation] {
            match threshold(&img, method) {
                Ok(t) => prop_assert!(t >= lo && t < hi, "{method}: {t} outside [{lo}, {hi})"),
                Err(_) => prop_assert_eq!(lo, hi),
            }
        }
    }
}
