//! Breast-region extraction.
//!
//! The chain is: logarithmic enhancement, automatic binarization, breast
//! orientation, separation from tape artefacts with two cut lines,
//! 8-connected labelling and selection of the largest component, which is
//! finally multiplied with the original image.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::raster::{BinaryMask, GrayImage, Grid, LabelMap, Point, RasterError, RealField};

#[derive(Debug, Error)]
pub enum BreastError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("mask has no foreground pixel")]
    EmptyMask,
    #[error("label map has no foreground label")]
    EmptyLabels,
    #[error("unknown thresholding method `{0}`")]
    UnknownMethod(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

pub type Result<T> = std::result::Result<T, BreastError>;

/// Normalization of the logarithmic transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceParams {
    pub s_min: f64,
    pub s_max: f64,
    pub c: f64,
}

impl EnhanceParams {
    pub fn from_image(img: &GrayImage) -> Result<Self> {
        let (lo, hi) = img.min_max();
        if hi <= lo {
            return Err(BreastError::DegenerateInput("constant image has no enhancement range"));
        }
        let (s_min, s_max) = (lo as f64, hi as f64);
        let c = -2.0 / (s_max - s_min + 1.0).ln();
        Ok(Self { s_min, s_max, c })
    }

    #[inline]
    pub fn apply(&self, value: f64) -> f64 {
        self.c * (value - self.s_min + 1.0).ln() + 1.0
    }
}

/// `G = c * log(I - s_min + 1) + 1` with `c = -2 / log(s_max - s_min + 1)`.
///
/// The output spans `[-1, 1]` and decreases with intensity: `s_min` maps to
/// `1` and `s_max` to `-1`.
pub fn log_enhance(img: &GrayImage) -> Result<RealField> {
    let params = EnhanceParams::from_image(img)?;
    Ok(img.to_field().map(|&v| params.apply(v)))
}

/// Affine map of `[-1, 1]` onto `[0, max_value]` that flips the orientation of
/// [`log_enhance`], so bright tissue stays bright.
pub fn rescale_enhanced(field: &RealField, max_value: u16) -> RealField {
    let m = max_value as f64;
    field.map(|&g| (1.0 - g) * 0.5 * m)
}

/// Enhanced and rescaled image, rounded to integer gray levels.
pub fn enhance_for_binarization(img: &GrayImage) -> Result<GrayImage> {
    let rescaled = rescale_enhanced(&log_enhance(img)?, img.max_value());
    let max = img.max_value();
    let data = rescaled.data().iter().map(|&v| v.round().clamp(0.0, max as f64) as u16).collect();
    Ok(GrayImage::new(img.width(), img.height(), max, data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMethod {
    #[default]
    Otsu,
    MaxEntropy,
    MaxCorrelation,
}

impl FromStr for ThresholdMethod {
    type Err = BreastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "otsu" => Ok(Self::Otsu),
            "max-entropy" => Ok(Self::MaxEntropy),
            "max-correlation" => Ok(Self::MaxCorrelation),
            other => Err(BreastError::UnknownMethod(other.to_string())),
        }
    }
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Otsu => "otsu",
            Self::MaxEntropy => "max-entropy",
            Self::MaxCorrelation => "max-correlation",
        })
    }
}

/// Picks the smallest candidate whose score is within a relative 1e-12 of the
/// best one. `None` scores are invalid splits.
fn first_argmax(scores: &[Option<f64>]) -> Option<u16> {
    let best = scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let tol = 1e-12 * best.abs().max(1.0);
    scores.iter().position(|s| matches!(s, Some(v) if *v >= best - tol)).map(|t| t as u16)
}

fn normalized(hist: &[u64]) -> Result<Vec<f64>> {
    let total: u64 = hist.iter().sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(BreastError::DegenerateInput("fewer than two distinct gray values"));
    }
    Ok(hist.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Otsu scores for every split `t` (background `<= t`).
fn otsu_scores(p: &[f64]) -> Vec<Option<f64>> {
    let mean_total: f64 = p.iter().enumerate().map(|(i, &pi)| i as f64 * pi).sum();
    let mut w0 = 0.0;
    let mut m0 = 0.0;
    let mut out = Vec::with_capacity(p.len().saturating_sub(1));
    for (t, &pt) in p.iter().enumerate().take(p.len() - 1) {
        w0 += pt;
        m0 += t as f64 * pt;
        let w1 = 1.0 - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            out.push(Some(0.0));
            continue;
        }
        let mu0 = m0 / w0;
        let mu1 = (mean_total - m0) / w1;
        out.push(Some(w0 * w1 * (mu0 - mu1) * (mu0 - mu1)));
    }
    out
}

fn entropy_scores(p: &[f64]) -> Vec<Option<f64>> {
    let plogp = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    let total_plogp: f64 = p.iter().map(|&x| plogp(x)).sum();
    let mut p0 = 0.0;
    let mut s0 = 0.0;
    let mut out = Vec::with_capacity(p.len().saturating_sub(1));
    for &pt in p.iter().take(p.len() - 1) {
        p0 += pt;
        s0 += plogp(pt);
        let p1 = 1.0 - p0;
        if p0 <= 0.0 || p1 <= 1e-15 {
            out.push(None);
            continue;
        }
        let s1 = total_plogp - s0;
        out.push(Some(p0.ln() - s0 / p0 + p1.ln() - s1 / p1));
    }
    out
}

fn correlation_scores(p: &[f64]) -> Vec<Option<f64>> {
    let total_sq: f64 = p.iter().map(|x| x * x).sum();
    let mut p0 = 0.0;
    let mut g0 = 0.0;
    let mut out = Vec::with_capacity(p.len().saturating_sub(1));
    for &pt in p.iter().take(p.len() - 1) {
        p0 += pt;
        g0 += pt * pt;
        let p1 = 1.0 - p0;
        let g1 = total_sq - g0;
        if p0 <= 0.0 || p1 <= 1e-15 || g1 <= 0.0 {
            out.push(None);
            continue;
        }
        out.push(Some(-(g0 * g1).ln() + 2.0 * (p0 * p1).ln()));
    }
    out
}

fn threshold_with(hist: &[u64], scores: fn(&[f64]) -> Vec<Option<f64>>) -> Result<u16> {
    let p = normalized(hist)?;
    first_argmax(&scores(&p)).ok_or(BreastError::DegenerateInput("no valid threshold"))
}

/// Otsu's threshold: maximizes the between-class variance. Pixels strictly
/// above the returned value are foreground.
pub fn threshold_otsu(img: &GrayImage) -> Result<u16> {
    threshold_with(&img.histogram(), otsu_scores)
}

/// Kapur's maximum-entropy threshold.
pub fn threshold_max_entropy(img: &GrayImage) -> Result<u16> {
    threshold_with(&img.histogram(), entropy_scores)
}

/// Yen's maximum-correlation threshold.
pub fn threshold_max_correlation(img: &GrayImage) -> Result<u16> {
    threshold_with(&img.histogram(), correlation_scores)
}

pub fn threshold(img: &GrayImage, method: ThresholdMethod) -> Result<u16> {
    match method {
        ThresholdMethod::Otsu => threshold_otsu(img),
        ThresholdMethod::MaxEntropy => threshold_max_entropy(img),
        ThresholdMethod::MaxCorrelation => threshold_max_correlation(img),
    }
}

/// Side of the image the breast is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Chest wall on the left, breast pointing right.
    LeftToRight,
    /// Chest wall on the right.
    RightToLeft,
}

/// Compares foreground counts of the left and right halves; ties go left.
/// For odd widths the middle column belongs to neither half.
pub fn detect_orientation(mask: &BinaryMask) -> Result<Orientation> {
    if mask.count() == 0 {
        return Err(BreastError::EmptyMask);
    }
    let w = mask.width();
    let half = w / 2;
    let (mut left, mut right) = (0usize, 0usize);
    for y in 0..mask.height() {
        for x in 0..half {
            left += *mask.get(x, y) as usize;
        }
        for x in (w - half)..w {
            right += *mask.get(x, y) as usize;
        }
    }
    Ok(if right > left { Orientation::RightToLeft } else { Orientation::LeftToRight })
}

/// Integer midpoint (Bresenham) line, both endpoints included.
pub fn line_points(a: Point, b: Point) -> Vec<Point> {
    let (mut x, mut y) = (a.x as i64, a.y as i64);
    let (x1, y1) = (b.x as i64, b.y as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push(Point::new(x as usize, y as usize));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Result of [`separate_background`].
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub mask: BinaryMask,
    /// Points A (top strip) and B (bottom strip), when both were found.
    pub anchors: Option<(Point, Point)>,
    /// Set when a strip held no background pixel; the mask is then unchanged.
    pub warning: bool,
}

/// Height of the top and bottom search strips: `ceil(h / 12)`.
pub fn strip_height(height: usize) -> usize {
    height.div_ceil(12).max(1)
}

fn chest_columns(width: usize, orient: Orientation) -> Box<dyn Iterator<Item = usize>> {
    match orient {
        Orientation::LeftToRight => Box::new(0..width),
        Orientation::RightToLeft => Box::new((0..width).rev()),
    }
}

fn first_background(mask: &BinaryMask, orient: Orientation, rows: &[usize]) -> Option<Point> {
    for x in chest_columns(mask.width(), orient) {
        for &y in rows {
            if !*mask.get(x, y) {
                return Some(Point::new(x, y));
            }
        }
    }
    None
}

/// Cuts the breast free from tape artefacts along the top and bottom edges.
///
/// Point A is the first background pixel met when scanning the top strip
/// column by column from the chest-wall side, each column top to bottom;
/// point B is found the same way in the bottom strip scanning bottom to top.
/// The lines from the chest-wall corners to A and B are cleared.
pub fn separate_background(mask: &BinaryMask, orient: Orientation) -> Result<Separation> {
    if mask.count() == 0 {
        return Err(BreastError::EmptyMask);
    }
    let (w, h) = (mask.width(), mask.height());
    let strip = strip_height(h).min(h);
    let top: Vec<usize> = (0..strip).collect();
    let bottom: Vec<usize> = (h - strip..h).rev().collect();
    let (a, b) = match (first_background(mask, orient, &top), first_background(mask, orient, &bottom)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Ok(Separation { mask: mask.clone(), anchors: None, warning: true }),
    };
    let mut out = mask.clone();
    for p in cut_lines(w, h, orient, (a, b)) {
        out.set(p.x, p.y, false);
    }
    Ok(Separation { mask: out, anchors: Some((a, b)), warning: false })
}

/// Pixels of the two separation lines from the chest-wall corners to the anchors.
pub fn cut_lines(width: usize, height: usize, orient: Orientation, anchors: (Point, Point)) -> Vec<Point> {
    let corner_x = match orient {
        Orientation::LeftToRight => 0,
        Orientation::RightToLeft => width - 1,
    };
    let mut pts = line_points(Point::new(corner_x, 0), anchors.0);
    pts.extend(line_points(Point::new(corner_x, height - 1), anchors.1));
    pts
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass 8-connected labelling. Labels are dense from 1 and ordered by the
/// first pixel of each component in a row-major scan.
pub fn label_components(mask: &BinaryMask) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let mut provisional = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(provisional[y * w + x - 1]);
            }
            if y > 0 {
                if x > 0 {
                    push(provisional[(y - 1) * w + x - 1]);
                }
                push(provisional[(y - 1) * w + x]);
                if x + 1 < w {
                    push(provisional[(y - 1) * w + x + 1]);
                }
            }
            let label = if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let first = neighbours[0];
                for &other in &neighbours[1..n] {
                    union(&mut parent, first, other);
                }
                first
            };
            provisional[y * w + x] = label;
        }
    }

    let mut remap = vec![0u32; parent.len()];
    let mut count = 0u32;
    for l in provisional.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = find(&mut parent, *l) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *l = remap[root];
    }
    LabelMap::from_parts(w, h, provisional, count)
}

/// Selected breast region.
#[derive(Debug, Clone, PartialEq)]
pub struct BreastRegion {
    pub mask: BinaryMask,
    /// Original image where the mask is set, zero elsewhere.
    pub masked_image: GrayImage,
    pub anchor_points: Option<(Point, Point)>,
}

/// Keeps the largest label (smallest id on ties) and applies it to `original`.
pub fn select_breast(labels: &LabelMap, original: &GrayImage) -> Result<BreastRegion> {
    if labels.label_count() == 0 {
        return Err(BreastError::EmptyLabels);
    }
    let areas = labels.areas();
    let mut best = 1usize;
    for id in 2..areas.len() {
        if areas[id] > areas[best] {
            best = id;
        }
    }
    let mask = labels.mask_of(best as u32);
    let masked_image = original.masked(&mask);
    Ok(BreastRegion { mask, masked_image, anchor_points: None })
}

/// Settings for [`extract_breast`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractParams {
    pub enhance: bool,
    pub method: ThresholdMethod,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self { enhance: true, method: ThresholdMethod::Otsu }
    }
}

/// Every intermediate of the extraction chain.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub enhanced: GrayImage,
    pub threshold: u16,
    pub binary: BinaryMask,
    pub orientation: Orientation,
    pub separation: Separation,
    pub labels: LabelMap,
    pub region: BreastRegion,
}

pub fn extract_breast(img: &GrayImage, params: ExtractParams) -> Result<Extraction> {
    let enhanced = if params.enhance { enhance_for_binarization(img)? } else { img.clone() };
    let threshold = threshold(&enhanced, params.method)?;
    let binary = enhanced.threshold_mask(threshold);
    let orientation = detect_orientation(&binary)?;
    let separation = separate_background(&binary, orientation)?;
    let labels = label_components(&separation.mask);
    let mut region = select_breast(&labels, img)?;
    region.anchor_points = separation.anchors;
    Ok(Extraction { enhanced, threshold, binary, orientation, separation, labels, region })
}

/// Builds a mask from a string picture, `#` foreground. Test helper.
#[doc(hidden)]
pub fn mask_from_art(rows: &[&str]) -> BinaryMask {
    let h = rows.len();
    let w = rows[0].len();
    Grid::from_fn(w, h, |x, y| rows[y].as_bytes()[x] == b'#')
}
