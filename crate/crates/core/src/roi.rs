//! Region-of-interest bounding and GLCM texture features.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::raster::{GrayImage, LabelMap, Point, Rect};

#[derive(Debug, Error, PartialEq)]
pub enum RoiError {
    #[error("no detected region pixel")]
    EmptyRegions,
    #[error("box {0:?} does not fit in a {1}x{2} image")]
    BoxOutOfBounds(RoiBox, usize, usize),
    #[error("at least 2 gray levels are required, got {0}")]
    TooFewLevels(usize),
    #[error("offset {0:?} has no valid pixel pair in the box")]
    NoPairs((isize, isize)),
    #[error("co-occurrence matrix sums to {0}, not 1")]
    Unnormalized(f64),
    #[error("unknown mean mode `{0}`")]
    UnknownMeanMode(String),
}

pub type Result<T> = std::result::Result<T, RoiError>;

/// Axis-aligned ROI given by its `(x_min, y_max)` and `(x_max, y_min)` corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiBox {
    pub p1: Point,
    pub p2: Point,
}

impl RoiBox {
    pub fn from_rect(r: Rect) -> Self {
        Self { p1: Point::new(r.x_min, r.y_max), p2: Point::new(r.x_max, r.y_min) }
    }

    pub fn rect(&self) -> Rect {
        Rect { x_min: self.p1.x, y_min: self.p2.y, x_max: self.p2.x, y_max: self.p1.y }
    }

    pub fn x_min(&self) -> usize {
        self.p1.x
    }
    pub fn x_max(&self) -> usize {
        self.p2.x
    }
    pub fn y_min(&self) -> usize {
        self.p2.y
    }
    pub fn y_max(&self) -> usize {
        self.p1.y
    }
}

/// Tight box over every pixel in `points`.
pub fn bounding_box_of(points: impl IntoIterator<Item = Point>) -> Result<RoiBox> {
    let mut it = points.into_iter();
    let first = it.next().ok_or(RoiError::EmptyRegions)?;
    let mut r = Rect { x_min: first.x, y_min: first.y, x_max: first.x, y_max: first.y };
    for p in it {
        r.x_min = r.x_min.min(p.x);
        r.x_max = r.x_max.max(p.x);
        r.y_min = r.y_min.min(p.y);
        r.y_max = r.y_max.max(p.y);
    }
    Ok(RoiBox::from_rect(r))
}

/// Tight box over the union of all labelled regions.
pub fn roi_bounding_box(regions: &LabelMap) -> Result<RoiBox> {
    let w = regions.width();
    bounding_box_of(
        regions
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(i, _)| Point::new(i % w, i / w)),
    )
}

/// Pixel displacement for the four unit-distance orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::Deg0, Orientation::Deg45, Orientation::Deg90, Orientation::Deg135];

    /// `(dx, dy)` with y growing downward, so "up" is `dy = -1`.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Orientation::Deg0 => (1, 0),
            Orientation::Deg45 => (1, -1),
            Orientation::Deg90 => (0, -1),
            Orientation::Deg135 => (-1, -1),
        }
    }
}

/// Normalized gray-level co-occurrence matrix, row-major `levels x levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    matrix: Vec<f64>,
    offset: (isize, isize),
}

impl Glcm {
    /// Wraps an arbitrary matrix; [`glcm_features`] checks normalization.
    pub fn from_matrix(levels: usize, matrix: Vec<f64>, offset: (isize, isize)) -> Self {
        assert_eq!(matrix.len(), levels * levels, "matrix must be levels x levels");
        Self { levels, matrix, offset }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn offset(&self) -> (isize, isize) {
        self.offset
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.levels + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn transpose(&self) -> Glcm {
        let l = self.levels;
        let matrix = (0..l * l).map(|k| self.matrix[(k % l) * l + k / l]).collect();
        Glcm { levels: l, matrix, offset: (-self.offset.0, -self.offset.1) }
    }
}

/// Linear quantization of `v` in `[min, max]` to `0..levels`.
pub fn quantize(v: u16, min: u16, max: u16, levels: usize) -> usize {
    let span = (max - min) as usize + 1;
    ((v - min) as usize * levels) / span
}

fn check_box(img: &GrayImage, b: &RoiBox) -> Result<()> {
    if b.x_min() > b.x_max() || b.y_min() > b.y_max() || b.x_max() >= img.width() || b.y_max() >= img.height() {
        return Err(RoiError::BoxOutOfBounds(*b, img.width(), img.height()));
    }
    Ok(())
}

fn quantized_box(img: &GrayImage, b: &RoiBox, levels: usize) -> Result<(usize, usize, Vec<usize>)> {
    check_box(img, b)?;
    if levels < 2 {
        return Err(RoiError::TooFewLevels(levels));
    }
    let r = b.rect();
    let (bw, bh) = (r.width(), r.height());
    let mut min = u16::MAX;
    let mut max = 0;
    for y in r.y_min..=r.y_max {
        for x in r.x_min..=r.x_max {
            let v = img.get(x, y);
            min = min.min(v);
            max = max.max(v);
        }
    }
    let mut q = Vec::with_capacity(bw * bh);
    for y in r.y_min..=r.y_max {
        for x in r.x_min..=r.x_max {
            q.push(quantize(img.get(x, y), min, max, levels));
        }
    }
    Ok((bw, bh, q))
}

fn glcm_from_quantized(bw: usize, bh: usize, q: &[usize], levels: usize, offset: (isize, isize)) -> Result<Glcm> {
    let mut counts = vec![0u64; levels * levels];
    let mut pairs = 0u64;
    for y in 0..bh as isize {
        for x in 0..bw as isize {
            let (nx, ny) = (x + offset.0, y + offset.1);
            if nx < 0 || ny < 0 || nx >= bw as isize || ny >= bh as isize {
                continue;
            }
            let a = q[y as usize * bw + x as usize];
            let b = q[ny as usize * bw + nx as usize];
            counts[a * levels + b] += 1;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(RoiError::NoPairs(offset));
    }
    let matrix = counts.iter().map(|&c| c as f64 / pairs as f64).collect();
    Ok(Glcm { levels, matrix, offset })
}

/// Co-occurrence of quantized levels for pairs `(p, p + offset)` inside the box.
pub fn compute_glcm(img: &GrayImage, b: &RoiBox, levels: usize, offset: (isize, isize)) -> Result<Glcm> {
    let (bw, bh, q) = quantized_box(img, b, levels)?;
    glcm_from_quantized(bw, bh, &q, levels, offset)
}

/// How the `moy` statistic is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanMode {
    /// `sum_ij i * p(i, j)`.
    #[default]
    IndexWeighted,
    /// `(1 / L) * sum_ij p(i, j)`, which is always `1 / L`.
    Literal,
}

impl FromStr for MeanMode {
    type Err = RoiError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "index-weighted" => Ok(MeanMode::IndexWeighted),
            "literal" => Ok(MeanMode::Literal),
            other => Err(RoiError::UnknownMeanMode(other.to_string())),
        }
    }
}

impl fmt::Display for MeanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeanMode::IndexWeighted => "index-weighted",
            MeanMode::Literal => "literal",
        })
    }
}

/// The six texture statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub moy: f64,
    pub variance: f64,
    pub energy: f64,
    pub contrast: f64,
    pub entropy: f64,
    pub homogeneity: f64,
}

impl FeatureVector {
    pub const NAMES: [&'static str; 6] = ["moy", "variance", "energy", "contrast", "entropy", "homogeneity"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.moy, self.variance, self.energy, self.contrast, self.entropy, self.homogeneity]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { moy: a[0], variance: a[1], energy: a[2], contrast: a[3], entropy: a[4], homogeneity: a[5] }
    }
}

pub fn glcm_features(glcm: &Glcm) -> Result<FeatureVector> {
    glcm_features_with(glcm, MeanMode::IndexWeighted)
}

pub fn glcm_features_with(glcm: &Glcm, mode: MeanMode) -> Result<FeatureVector> {
    let l = glcm.levels;
    let sum: f64 = glcm.matrix.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || glcm.matrix.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(RoiError::Unnormalized(sum));
    }
    let moy = match mode {
        MeanMode::IndexWeighted => (0..l * l).map(|k| (k / l) as f64 * glcm.matrix[k]).sum(),
        MeanMode::Literal => sum / l as f64,
    };
    let mut f = FeatureVector { moy, ..Default::default() };
    for i in 0..l {
        for j in 0..l {
            let p = glcm.get(i, j);
            let d = i as f64 - j as f64;
            f.variance += (i as f64 - moy).powi(2) * p;
            f.energy += p * p;
            f.contrast += d * d * p;
            if p > 0.0 {
                f.entropy -= p * p.log2();
            }
            f.homogeneity += p / (1.0 + d * d);
        }
    }
    Ok(f)
}

/// Per-orientation features in [`Orientation::ALL`] order.
pub fn orientation_features(img: &GrayImage, b: &RoiBox, levels: usize, mode: MeanMode) -> Result<[FeatureVector; 4]> {
    let (bw, bh, q) = quantized_box(img, b, levels)?;
    let mut out = [FeatureVector::default(); 4];
    for (slot, o) in out.iter_mut().zip(Orientation::ALL) {
        *slot = glcm_features_with(&glcm_from_quantized(bw, bh, &q, levels, o.offset())?, mode)?;
    }
    Ok(out)
}

pub fn mean_features(per: &[FeatureVector]) -> FeatureVector {
    let mut acc = [0.0; 6];
    for f in per {
        for (a, v) in acc.iter_mut().zip(f.to_array()) {
            *a += v;
        }
    }
    FeatureVector::from_array(acc.map(|a| a / per.len() as f64))
}

/// Features averaged over the four orientations.
pub fn feature_vector(img: &GrayImage, b: &RoiBox, levels: usize) -> Result<FeatureVector> {
    feature_vector_with(img, b, levels, MeanMode::IndexWeighted)
}

pub fn feature_vector_with(img: &GrayImage, b: &RoiBox, levels: usize, mode: MeanMode) -> Result<FeatureVector> {
    Ok(mean_features(&orientation_features(img, b, levels, mode)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::breast::{label_components, mask_from_art};
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, data: Vec<u16>) -> GrayImage {
        GrayImage::new(w, h, 255, data).unwrap()
    }

    fn whole(img: &GrayImage) -> RoiBox {
        RoiBox::from_rect(Rect { x_min: 0, y_min: 0, x_max: img.width() - 1, y_max: img.height() - 1 })
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn box_examples() {
        let b = bounding_box_of([Point::new(5, 7)]).unwrap();
        assert_eq!((b.p1, b.p2), (Point::new(5, 7), Point::new(5, 7)));
        let b = bounding_box_of([Point::new(1, 2), Point::new(8, 3)]).unwrap();
        assert_eq!((b.p1, b.p2), (Point::new(1, 3), Point::new(8, 2)));
        let labels = label_components(&mask_from_art(&["###", "###"]));
        let b = roi_bounding_box(&labels).unwrap();
        assert_eq!(b.rect(), Rect { x_min: 0, y_min: 0, x_max: 2, y_max: 1 });
        let empty = label_components(&mask_from_art(&["..."]));
        assert_eq!(roi_bounding_box(&empty), Err(RoiError::EmptyRegions));
    }

    #[test]
    fn glcm_examples() {
        let im = gray(2, 2, vec![0, 0, 1, 1]);
        let g = compute_glcm(&im, &whole(&im), 2, (1, 0)).unwrap();
        assert_eq!(g.matrix(), &[0.5, 0.0, 0.0, 0.5]);
        let c = gray(3, 3, vec![42; 9]);
        let g = compute_glcm(&c, &whole(&c), 4, (1, -1)).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        let one = gray(1, 1, vec![3]);
        assert_eq!(compute_glcm(&one, &whole(&one), 2, (1, 0)), Err(RoiError::NoPairs((1, 0))));
        assert_eq!(compute_glcm(&im, &whole(&im), 1, (1, 0)), Err(RoiError::TooFewLevels(1)));
    }

    #[test]
    fn feature_examples() {
        let f = glcm_features(&Glcm::from_matrix(2, vec![0.5, 0.0, 0.0, 0.5], (1, 0))).unwrap();
        assert!(close(f.energy, 0.5) && close(f.contrast, 0.0) && close(f.homogeneity, 1.0));
        assert!(close(f.entropy, 1.0) && close(f.moy, 0.5) && close(f.variance, 0.25));
        let f = glcm_features(&Glcm::from_matrix(3, vec![0., 0., 0., 0., 1., 0., 0., 0., 0.], (1, 0))).unwrap();
        assert!(close(f.energy, 1.0) && close(f.contrast, 0.0) && close(f.entropy, 0.0) && close(f.homogeneity, 1.0));
        let f = glcm_features(&Glcm::from_matrix(2, vec![0.25; 4], (1, 0))).unwrap();
        assert!(close(f.energy, 0.25) && close(f.entropy, 2.0));
        let lit = glcm_features_with(&Glcm::from_matrix(4, vec![1.0 / 16.0; 16], (1, 0)), MeanMode::Literal).unwrap();
        assert!(close(lit.moy, 0.25));
        assert!(matches!(glcm_features(&Glcm::from_matrix(2, vec![0.5; 4], (1, 0))), Err(RoiError::Unnormalized(_))));
    }

    #[test]
    fn averaging() {
        let c = gray(4, 4, vec![9; 16]);
        let per = orientation_features(&c, &whole(&c), 4, MeanMode::IndexWeighted).unwrap();
        let avg = feature_vector(&c, &whole(&c), 4).unwrap();
        assert!(per.iter().all(|f| *f == per[0]));
        assert_eq!(avg, per[0]);
        let fs: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&c| FeatureVector { contrast: c, ..Default::default() }).collect();
        assert_eq!(mean_features(&fs).contrast, 2.5);
    }

    #[test]
    fn vertical_stripes() {
        let im = GrayImage::from_fn(6, 6, 255, |x, _| if x % 2 == 0 { 0 } else { 200 }).unwrap();
        let per = orientation_features(&im, &whole(&im), 4, MeanMode::IndexWeighted).unwrap();
        let avg = mean_features(&per);
        assert!(per[0].contrast > per[2].contrast);
        assert!(avg.contrast < per[0].contrast && avg.contrast > per[2].contrast);
    }

    #[test]
    fn quantization_edges() {
        assert_eq!(quantize(0, 0, 255, 16), 0);
        assert_eq!(quantize(255, 0, 255, 16), 15);
        assert_eq!(quantize(7, 7, 7, 16), 0);
    }

    fn small_image() -> impl Strategy<Value = GrayImage> {
        (2usize..=8, 2usize..=8).prop_flat_map(|(w, h)| {
            prop::collection::vec(0u16..=20, w * h).prop_map(move |d| GrayImage::new(w, h, 20, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalized_and_transposed(im in small_image(), levels in 2usize..=6) {
            let b = whole(&im);
            for o in Orientation::ALL {
                let (dx, dy) = o.offset();
                let g = compute_glcm(&im, &b, levels, (dx, dy)).unwrap();
                prop_assert!((g.matrix().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let back = compute_glcm(&im, &b, levels, (-dx, -dy)).unwrap();
                let t = back.transpose();
                for (a, c) in g.matrix().iter().zip(t.matrix()) {
                    prop_assert!((a - c).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn feature_bounds(im in small_image(), levels in 2usize..=16) {
            let f = feature_vector(&im, &whole(&im), levels).unwrap();
            prop_assert!(f.energy > 0.0 && f.energy <= 1.0 + 1e-12);
            prop_assert!(f.homogeneity > 0.0 && f.homogeneity <= 1.0 + 1e-12);
            prop_assert!(f.entropy >= 0.0 && f.contrast >= 0.0 && f.variance >= 0.0);
        }

        #[test]
        fn rotation_swaps_orientations(n in 2usize..=7, seed in prop::collection::vec(0u16..=9, 49)) {
            let im = GrayImage::from_fn(n, n, 9, |x, y| seed[y * 7 + x]).unwrap();
            // 90 degree clockwise rotation: (x, y) -> (n-1-y, x)
            let rot = GrayImage::from_fn(n, n, 9, |x, y| im.get(y, n - 1 - x)).unwrap();
            let a = orientation_features(&im, &whole(&im), 4, MeanMode::IndexWeighted).unwrap();
            let b = orientation_features(&rot, &whole(&rot), 4, MeanMode::IndexWeighted).unwrap();
            prop_assert!((a[0].contrast - b[2].contrast).abs() < 1e-12);
            prop_assert!((a[2].contrast - b[0].contrast).abs() < 1e-12);
            prop_assert!((a[1].contrast - b[3].contrast).abs() < 1e-12);
            prop_assert!((a[3].contrast - b[1].contrast).abs() < 1e-12);
        }
    }
}
