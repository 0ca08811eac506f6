//! Narrow-band level-set detection of bright regions.
//!
//! The contour is the zero set of `phi` (negative inside). Detection seeds the
//! brightest pixels, propagates an initial front with fast marching, converts
//! an arrival-time iso-level into a signed distance function and then evolves
//! it with an edge + region speed:
//!
//! ```text
//! dphi/dt = eps * g * |grad phi| * kappa
//!         + beta * grad g . grad phi - beta * Moy / Max
//!         - s * nu * g * |grad phi|
//!         - theta * SkewNormal
//! ```
//!
//! where `g = 1 / (1 + |grad I|)`, `kappa = div(grad phi / |grad phi|)`, `Moy`
//! is the 3x3 mean, `Max` the image maximum, `SkewNormal` the 3x3 third
//! central moment normalized by its largest magnitude, and `s = +1` makes the
//! constant term inflate the region (`s = -1` shrinks it).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::breast::label_components;
use crate::raster::{BinaryMask, GrayImage, Grid, LabelMap, Point, RealField};

#[derive(Debug, Error)]
pub enum LevelSetError {
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("seed {0:?} lies outside the image")]
    SeedOutOfBounds(Point),
    #[error("arrival field has no finite value")]
    NoFiniteArrival,
    #[error("level-set function has a single sign, there is no contour")]
    UniformSign,
    #[error("time step {time_step} exceeds the stability bound {bound}")]
    Unstable { time_step: f64, bound: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, LevelSetError>;

/// Form of the windowed skewness statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkewMode {
    /// `(1/n) * sum (I - Moy)^3`.
    #[default]
    Cubic,
    /// `(1/n) * sum (I - Moy)`, which vanishes up to rounding.
    Literal,
}

/// Direction in which the constant `nu` term moves the contour.
///
/// Inward makes `nu` a brightness floor: the front only advances where the
/// local-mean term outweighs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Advection {
    Outward,
    #[default]
    Inward,
}

impl Advection {
    fn sign(self) -> f64 {
        match self {
            Advection::Outward => 1.0,
            Advection::Inward => -1.0,
        }
    }
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = LevelSetError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(LevelSetError::InvalidParams(format!("unknown {} `{other}`", stringify!($ty)))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name,)+ })
            }
        }
    };
}

str_enum!(SkewMode { Cubic => "cubic", Literal => "literal" });
str_enum!(Advection { Outward => "outward", Inward => "inward" });

/// Weights of the evolution speed and of the fast-marching speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedParams {
    /// Curvature weight.
    pub epsilon: f64,
    /// Edge-attraction and local-mean weight.
    pub beta: f64,
    /// Constant advection weight.
    pub nu: f64,
    /// Skewness weight.
    pub theta: f64,
    /// Gradient weight in the fast-marching speed `1 / (epsilon - alpha |grad I|)`.
    pub alpha: f64,
    /// Lower clamp of the fast-marching denominator.
    pub speed_floor: f64,
    pub skew: SkewMode,
    pub advection: Advection,
}

impl Default for SpeedParams {
    fn default() -> Self {
        Self {
            epsilon: 0.4,
            beta: 0.3,
            nu: 0.2,
            theta: 0.1,
            alpha: 1.0,
            speed_floor: 1e-3,
            skew: SkewMode::Cubic,
            advection: Advection::Inward,
        }
    }
}

impl SpeedParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("beta", self.beta), ("nu", self.nu), ("theta", self.theta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LevelSetError::InvalidParams(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !self.alpha.is_finite() {
            return Err(LevelSetError::InvalidParams("alpha must be finite".into()));
        }
        if !(self.speed_floor > 0.0 && self.speed_floor.is_finite()) {
            return Err(LevelSetError::InvalidParams("speed floor must be positive".into()));
        }
        Ok(())
    }
}

/// Iteration and narrow-band settings for [`detect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub max_iterations: usize,
    /// Steps between reinitializations; convergence is checked at the same cadence.
    pub reinit_period: usize,
    /// Converged when fewer than this fraction of band cells changed sign during a sweep.
    pub convergence_threshold: f64,
    pub band_width: f64,
    pub time_step: f64,
    /// Seeds are pixels at or above `(1 - seed_fraction) * max`.
    pub seed_fraction: f64,
    /// Quantile of finite arrival times used as the initial iso-level.
    pub t0_quantile: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            reinit_period: 10,
            convergence_threshold: 1e-3,
            band_width: 6.0,
            time_step: 0.2,
            seed_fraction: 0.05,
            t0_quantile: 0.01,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LevelSetError::InvalidParams(m.to_string()));
        if self.band_width < 3.0 {
            return bad("band width must be at least 3 cells");
        }
        if !(self.time_step > 0.0) {
            return bad("time step must be positive");
        }
        if self.reinit_period == 0 {
            return bad("reinit period must be positive");
        }
        if !(0.0..=1.0).contains(&self.seed_fraction) {
            return bad("seed fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.t0_quantile) {
            return bad("arrival quantile must lie in [0, 1]");
        }
        if !(self.convergence_threshold >= 0.0) {
            return bad("convergence threshold must be non-negative");
        }
        Ok(())
    }
}

/// Per-pixel arrival times of a fast-marching front.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalField {
    times: RealField,
    accepted: Vec<usize>,
}

impl ArrivalField {
    pub fn times(&self) -> &RealField {
        &self.times
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        *self.times.get(x, y)
    }

    /// Pixel indices in the order they were finalized.
    pub fn acceptance_order(&self) -> &[usize] {
        &self.accepted
    }

    /// The `q`-quantile (nearest rank, rounding down) of the finite times.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        let mut finite: Vec<f64> = self.times.data().iter().copied().filter(|t| t.is_finite()).collect();
        if finite.is_empty() {
            return Err(LevelSetError::NoFiniteArrival);
        }
        finite.sort_by(f64::total_cmp);
        let idx = ((q.clamp(0.0, 1.0)) * (finite.len() - 1) as f64).floor() as usize;
        Ok(finite[idx])
    }
}

/// Signed level-set function restricted to a narrow band.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    phi: RealField,
    band: BinaryMask,
    band_width: f64,
    time_step: f64,
}

impl LevelSetField {
    /// Wraps `phi`, with the band set to cells where `|phi| <= band_width`.
    pub fn new(phi: RealField, band_width: f64, time_step: f64) -> Self {
        let band = phi.map(|v| v.abs() <= band_width);
        Self { phi, band, band_width, time_step }
    }

    pub fn phi(&self) -> &RealField {
        &self.phi
    }

    pub fn band(&self) -> &BinaryMask {
        &self.band
    }

    pub fn band_width(&self) -> f64 {
        self.band_width
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    pub fn with_time_step(mut self, time_step: f64) -> Self {
        self.time_step = time_step;
        self
    }

    pub fn inside(&self) -> BinaryMask {
        self.phi.map(|&v| v < 0.0)
    }

    fn has_contour(&self) -> bool {
        let d = self.phi.data();
        d.iter().any(|&v| v < 0.0) && d.iter().any(|&v| v >= 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    value: f64,
    index: usize,
}

impl PartialEq for Trial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Trial {}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Trial {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.value.total_cmp(&self.value).then_with(|| other.index.cmp(&self.index))
    }
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Gradient by central differences, one-sided on the border.
pub fn gradient(field: &RealField) -> (RealField, RealField) {
    let (w, h) = (field.width(), field.height());
    let f = |x: usize, y: usize| *field.get(x, y);
    let gx = Grid::from_fn(w, h, |x, y| {
        if w == 1 {
            0.0
        } else if x == 0 {
            f(1, y) - f(0, y)
        } else if x == w - 1 {
            f(x, y) - f(x - 1, y)
        } else {
            0.5 * (f(x + 1, y) - f(x - 1, y))
        }
    });
    let gy = Grid::from_fn(w, h, |x, y| {
        if h == 1 {
            0.0
        } else if y == 0 {
            f(x, 1) - f(x, 0)
        } else if y == h - 1 {
            f(x, y) - f(x, y - 1)
        } else {
            0.5 * (f(x, y + 1) - f(x, y - 1))
        }
    });
    (gx, gy)
}

fn gradient_norm(img: &GrayImage) -> RealField {
    let (gx, gy) = gradient(&img.to_field());
    Grid::from_fn(img.width(), img.height(), |x, y| gx.get(x, y).hypot(*gy.get(x, y)))
}

/// Edge-stopping function `1 / (1 + |grad I|)` over the whole image.
pub fn edge_stop_map(img: &GrayImage) -> RealField {
    gradient_norm(img).map(|n| 1.0 / (1.0 + n))
}

/// Edge-stopping function at one pixel.
pub fn edge_stop(img: &GrayImage, at: Point) -> f64 {
    let (w, h) = (img.width(), img.height());
    let f = |x: usize, y: usize| img.get_f64(x, y);
    let (x, y) = (at.x, at.y);
    let gx = if w == 1 {
        0.0
    } else if x == 0 {
        f(1, y) - f(0, y)
    } else if x == w - 1 {
        f(x, y) - f(x - 1, y)
    } else {
        0.5 * (f(x + 1, y) - f(x - 1, y))
    };
    let gy = if h == 1 {
        0.0
    } else if y == 0 {
        f(x, 1) - f(x, 0)
    } else if y == h - 1 {
        f(x, y) - f(x, y - 1)
    } else {
        0.5 * (f(x, y + 1) - f(x, y - 1))
    };
    1.0 / (1.0 + gx.hypot(gy))
}

fn window(w: usize, h: usize, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> {
    let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
    let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
    (y0..=y1).flat_map(move |yy| (x0..=x1).map(move |xx| (xx, yy)))
}

/// Mean over the 3x3 window, clamped to the image.
pub fn local_mean_map(img: &GrayImage) -> RealField {
    let (w, h) = (img.width(), img.height());
    Grid::from_fn(w, h, |x, y| {
        let (mut s, mut n) = (0.0, 0usize);
        for (xx, yy) in window(w, h, x, y) {
            s += img.get_f64(xx, yy);
            n += 1;
        }
        s / n as f64
    })
}

/// Un-normalized windowed skewness numerator around the window's own mean.
pub fn skew_centred_map(img: &GrayImage, mode: SkewMode) -> RealField {
    let (w, h) = (img.width(), img.height());
    let mean = local_mean_map(img);
    Grid::from_fn(w, h, |x, y| {
        let m = *mean.get(x, y);
        let (mut s, mut n) = (0.0, 0usize);
        for (xx, yy) in window(w, h, x, y) {
            let d = img.get_f64(xx, yy) - m;
            s += match mode {
                SkewMode::Cubic => d * d * d,
                SkewMode::Literal => d,
            };
            n += 1;
        }
        s / n as f64
    })
}

/// Windowed skewness divided by its largest magnitude over the image, in `[-1, 1]`.
pub fn skew_centred_normal_map(img: &GrayImage, mode: SkewMode) -> RealField {
    let raw = skew_centred_map(img, mode);
    let norm = raw.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if norm == 0.0 {
        return raw.map(|_| 0.0);
    }
    raw.map(|v| v / norm)
}

pub fn skew_centred_normal(img: &GrayImage, at: Point, mode: SkewMode) -> f64 {
    *skew_centred_normal_map(img, mode).get(at.x, at.y)
}

/// Pixels at or above `(1 - top_fraction)` times the observed maximum.
pub fn seed_points(img: &GrayImage, top_fraction: f64) -> Vec<Point> {
    let (_, max) = img.min_max();
    let cut = (1.0 - top_fraction.clamp(0.0, 1.0)) * max as f64;
    let mut out = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.get_f64(x, y) >= cut {
                out.push(Point::new(x, y));
            }
        }
    }
    out
}

/// Fast-marching speed `1 / max(floor, epsilon - alpha |grad I|)`.
pub fn marching_speed(img: &GrayImage, params: &SpeedParams) -> RealField {
    gradient_norm(img).map(|n| 1.0 / (params.epsilon - params.alpha * n).max(params.speed_floor))
}

/// First-order upwind update from the smallest accepted neighbour on each axis.
#[inline]
fn eikonal_update(a: f64, b: f64, inv_speed: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if !hi.is_finite() || hi - lo >= inv_speed {
        return lo + inv_speed;
    }
    let disc = 2.0 * inv_speed * inv_speed - (hi - lo) * (hi - lo);
    0.5 * (lo + hi + disc.sqrt())
}

/// Solves `|grad T| F = 1` with `T = 0` on the seeds.
pub fn fast_march_with_speed(speed: &RealField, seeds: &[Point]) -> Result<ArrivalField> {
    if seeds.is_empty() {
        return Err(LevelSetError::EmptySeeds);
    }
    let (w, h) = (speed.width(), speed.height());
    if let Some(&bad) = seeds.iter().find(|p| p.x >= w || p.y >= h) {
        return Err(LevelSetError::SeedOutOfBounds(bad));
    }
    if let Some(v) = speed.data().iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(LevelSetError::InvalidParams(format!("speed {v} must be positive and finite")));
    }
    let n = w * h;
    let mut times = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for p in seeds {
        let i = p.y * w + p.x;
        times[i] = 0.0;
        heap.push(Trial { value: 0.0, index: i });
    }
    let mut accepted = Vec::with_capacity(n);
    let sd = speed.data();
    while let Some(Trial { value, index }) = heap.pop() {
        if done[index] || value > times[index] {
            continue;
        }
        done[index] = true;
        accepted.push(index);
        let (x, y) = (index % w, index / w);
        let mut visit = |nx: usize, ny: usize| {
            let j = ny * w + nx;
            if done[j] {
                return;
            }
            let axis = |i0: Option<usize>, i1: Option<usize>| {
                let pick = |i: Option<usize>| i.filter(|&k| done[k]).map_or(f64::INFINITY, |k| times[k]);
                pick(i0).min(pick(i1))
            };
            let a = axis((nx > 0).then(|| j - 1), (nx + 1 < w).then(|| j + 1));
            let b = axis((ny > 0).then(|| j - w), (ny + 1 < h).then(|| j + w));
            let t = eikonal_update(a, b, 1.0 / sd[j]);
            if t < times[j] {
                times[j] = t;
                heap.push(Trial { value: t, index: j });
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    Ok(ArrivalField { times: Grid::from_vec(w, h, times).expect("same shape"), accepted })
}

/// Fast marching under the image-driven speed of [`marching_speed`].
pub fn fast_march(img: &GrayImage, seeds: &[Point], params: &SpeedParams) -> Result<ArrivalField> {
    params.validate()?;
    fast_march_with_speed(&marching_speed(img, params), seeds)
}

/// Signed distance to the zero set of `phi`, exact to the sub-cell crossing
/// points found by linear interpolation between 4-neighbours of opposite sign.
///
/// Closest crossing points are propagated in increasing-distance order, the
/// same acceptance discipline as fast marching. Cells farther than `limit`
/// get `±limit`. The sign pattern (`phi < 0`) is preserved exactly.
pub fn redistance(phi: &RealField, limit: f64) -> Result<RealField> {
    let (w, h) = (phi.width(), phi.height());
    let p = phi.data();
    let inside: Vec<bool> = p.iter().map(|&v| v < 0.0).collect();
    if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
        return Err(LevelSetError::UniformSign);
    }
    let n = w * h;
    let mut dist = vec![f64::INFINITY; n];
    let mut closest = vec![(0.0f64, 0.0f64); n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();

    let pos = |i: usize| ((i % w) as f64, (i / w) as f64);
    let offer = |i: usize, c: (f64, f64), dist: &mut [f64], closest: &mut [(f64, f64)], heap: &mut BinaryHeap<Trial>| {
        let (px, py) = pos(i);
        let d = (px - c.0).hypot(py - c.1);
        if d < dist[i] {
            dist[i] = d;
            closest[i] = c;
            heap.push(Trial { value: d, index: i });
        }
    };

    for i in 0..n {
        let (x, y) = (i % w, i / w);
        for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
            if inside[i] == inside[j] {
                continue;
            }
            let (a, b) = (p[i], p[j]);
            let t = if a == b { 0.5 } else { (a / (a - b)).clamp(0.0, 1.0) };
            let (pi, pj) = (pos(i), pos(j));
            let c = (pi.0 + t * (pj.0 - pi.0), pi.1 + t * (pj.1 - pi.1));
            offer(i, c, &mut dist, &mut closest, &mut heap);
            offer(j, c, &mut dist, &mut closest, &mut heap);
        }
    }

    // One Newton step onto the zero set from each interface cell; much closer
    // to the true foot point than the axis crossings when the front is oblique.
    let (gx, gy) = gradient(phi);
    for i in 0..n {
        if !dist[i].is_finite() {
            continue;
        }
        let (dx, dy) = (gx.data()[i], gy.data()[i]);
        let g2 = dx * dx + dy * dy;
        if g2 < 1e-24 {
            continue;
        }
        let (px, py) = pos(i);
        let foot = (px - p[i] * dx / g2, py - p[i] * dy / g2);
        if (foot.0 - px).hypot(foot.1 - py) <= 1.5 {
            offer(i, foot, &mut dist, &mut closest, &mut heap);
        }
    }

    while let Some(Trial { value, index }) = heap.pop() {
        if done[index] || value > dist[index] {
            continue;
        }
        if value > limit {
            break;
        }
        done[index] = true;
        let c = closest[index];
        let (x, y) = (index % w, index / w);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !done[j] {
                    offer(j, c, &mut dist, &mut closest, &mut heap);
                }
            }
        }
    }

    // Closest points handed along by Dijkstra can miss a better foot held two
    // cells away; one sweep over a 5x5 window of candidates tightens this.
    let snapshot = closest.clone();
    let has = done.clone();
    for i in 0..n {
        if !has[i] {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let (px, py) = pos(i);
        for ny in y.saturating_sub(2)..=(y + 2).min(h - 1) {
            for nx in x.saturating_sub(2)..=(x + 2).min(w - 1) {
                let j = ny * w + nx;
                if !has[j] {
                    continue;
                }
                let c = snapshot[j];
                let d = (px - c.0).hypot(py - c.1);
                if d < dist[i] {
                    dist[i] = d;
                }
            }
        }
    }

    let out = (0..n)
        .map(|i| {
            let d = if done[i] { dist[i] } else { limit };
            if inside[i] {
                -d.max(1e-12)
            } else {
                d
            }
        })
        .collect();
    Ok(Grid::from_vec(w, h, out).expect("same shape"))
}

fn stencil_limit(band_width: f64) -> f64 {
    band_width + 2.0
}

/// Builds the initial level set from the arrival iso-level `t0`: cells with
/// `T <= t0` are inside, and `T - t0` is redistanced to unit gradient.
///
/// When every cell is inside there is no contour and `phi` is set to
/// `-(band_width + 2)` everywhere, leaving an empty band.
pub fn init_phi(arrival: &ArrivalField, t0: f64, band_width: f64, time_step: f64) -> Result<LevelSetField> {
    let times = arrival.times();
    if !times.data().iter().any(|t| t.is_finite()) {
        return Err(LevelSetError::NoFiniteArrival);
    }
    let finite_max = times.data().iter().copied().filter(|t| t.is_finite()).fold(0.0f64, f64::max);
    let far = (finite_max - t0).abs() + 1.0;
    let proxy = times.map(|&t| {
        if !t.is_finite() {
            far
        } else if t <= t0 {
            (t - t0).min(-1e-9)
        } else {
            t - t0
        }
    });
    let limit = stencil_limit(band_width);
    let phi = match redistance(&proxy, limit) {
        Ok(phi) => phi,
        Err(LevelSetError::UniformSign) => proxy.map(|&v| if v < 0.0 { -limit } else { limit }),
        Err(e) => return Err(e),
    };
    Ok(LevelSetField::new(phi, band_width, time_step))
}

/// Replaces `phi` by the signed distance to its own zero set and resets the band.
pub fn reinitialize(field: &LevelSetField) -> Result<LevelSetField> {
    let phi = redistance(&field.phi, stencil_limit(field.band_width))?;
    Ok(LevelSetField::new(phi, field.band_width, field.time_step))
}

/// Image-derived quantities of the evolution speed, computed once per image.
#[derive(Debug, Clone)]
pub struct SpeedTerms {
    params: SpeedParams,
    g: RealField,
    g_x: RealField,
    g_y: RealField,
    /// `-beta * Moy/Max - theta * SkewNormal`
    source: RealField,
    max_grad_g: f64,
}

impl SpeedTerms {
    pub fn new(img: &GrayImage, params: &SpeedParams) -> Result<Self> {
        params.validate()?;
        let g = edge_stop_map(img);
        let (g_x, g_y) = gradient(&g);
        let max_grad_g = g_x.data().iter().zip(g_y.data()).fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
        let (_, max) = img.min_max();
        let mean = local_mean_map(img);
        let skew = skew_centred_normal_map(img, params.skew);
        let source = Grid::from_fn(img.width(), img.height(), |x, y| {
            let ratio = if max > 0 { mean.get(x, y) / max as f64 } else { 0.0 };
            -params.beta * ratio - params.theta * skew.get(x, y)
        });
        Ok(Self { params: *params, g, g_x, g_y, source, max_grad_g })
    }

    pub fn params(&self) -> &SpeedParams {
        &self.params
    }

    pub fn edge_stop(&self) -> &RealField {
        &self.g
    }

    /// Largest stable explicit time step for these terms.
    pub fn stability_bound(&self) -> f64 {
        let p = &self.params;
        let denom = 4.0 * p.epsilon + p.nu + p.beta * self.max_grad_g + p.theta;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            0.5 / denom
        }
    }

    /// `dphi/dt` on band cells, zero elsewhere.
    pub fn rate(&self, field: &LevelSetField) -> Result<RealField> {
        if field.phi.width() != self.g.width() || field.phi.height() != self.g.height() {
            return Err(LevelSetError::InvalidParams("field and image shapes differ".into()));
        }
        let (w, h) = (field.phi.width(), field.phi.height());
        let phi = field.phi.data();
        let band = field.band.data();
        let p = &self.params;
        let nu_speed = p.advection.sign() * p.nu;
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !band[i] {
                    continue;
                }
                let at = |dx: isize, dy: isize| phi[clamp_idx(y as isize + dy, h) * w + clamp_idx(x as isize + dx, w)];
                let c = phi[i];
                let (l, r, u, d) = (at(-1, 0), at(1, 0), at(0, -1), at(0, 1));
                let dmx = c - l;
                let dpx = r - c;
                let dmy = c - u;
                let dpy = d - c;
                let g = *self.g.get(x, y);
                let mut rate = 0.0;

                if p.epsilon != 0.0 {
                    let fx = if x == 0 { dpx } else if x == w - 1 { dmx } else { 0.5 * (r - l) };
                    let fy = if y == 0 { dpy } else if y == h - 1 { dmy } else { 0.5 * (d - u) };
                    let fxx = r - 2.0 * c + l;
                    let fyy = d - 2.0 * c + u;
                    let fxy = 0.25 * (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1));
                    let den = fx * fx + fy * fy;
                    if den > 1e-12 {
                        let num = fxx * fy * fy - 2.0 * fx * fy * fxy + fyy * fx * fx;
                        rate += p.epsilon * g * num / den;
                    }
                }

                if p.beta != 0.0 {
                    // transport along -grad g, toward the edge-stopping minimum
                    let (gx, gy) = (*self.g_x.get(x, y), *self.g_y.get(x, y));
                    let ux = if gx < 0.0 { dmx } else { dpx };
                    let uy = if gy < 0.0 { dmy } else { dpy };
                    rate += p.beta * (gx * ux + gy * uy);
                }

                if nu_speed != 0.0 {
                    let f = nu_speed * g;
                    let grad = if f > 0.0 {
                        (dmx.max(0.0).powi(2) + dpx.min(0.0).powi(2) + dmy.max(0.0).powi(2) + dpy.min(0.0).powi(2)).sqrt()
                    } else {
                        (dmx.min(0.0).powi(2) + dpx.max(0.0).powi(2) + dmy.min(0.0).powi(2) + dpy.max(0.0).powi(2)).sqrt()
                    };
                    rate -= f * grad;
                }

                rate += self.source.data()[i];
                out[i] = rate;
            }
        }
        Ok(Grid::from_vec(w, h, out).expect("same shape"))
    }

    /// One explicit Euler step on the band; cells off the band are copied bitwise.
    pub fn evolve(&self, field: &LevelSetField) -> Result<LevelSetField> {
        let bound = self.stability_bound();
        if field.time_step > bound {
            return Err(LevelSetError::Unstable { time_step: field.time_step, bound });
        }
        let rate = self.rate(field)?;
        let mut phi = field.phi.clone();
        for (v, &r) in phi.data_mut().iter_mut().zip(rate.data()) {
            if r != 0.0 {
                *v += field.time_step * r;
            }
        }
        Ok(LevelSetField { phi, band: field.band.clone(), band_width: field.band_width, time_step: field.time_step })
    }
}

/// One evolution step; see [`SpeedTerms::evolve`].
pub fn evolve_step(field: &LevelSetField, img: &GrayImage, params: &SpeedParams) -> Result<LevelSetField> {
    SpeedTerms::new(img, params)?.evolve(field)
}

/// `div(grad phi / |grad phi|)` by central differences at an interior cell.
pub fn curvature(phi: &RealField, x: usize, y: usize) -> f64 {
    let (w, h) = (phi.width(), phi.height());
    let at = |dx: isize, dy: isize| *phi.get(clamp_idx(x as isize + dx, w), clamp_idx(y as isize + dy, h));
    let c = at(0, 0);
    let fx = 0.5 * (at(1, 0) - at(-1, 0));
    let fy = 0.5 * (at(0, 1) - at(0, -1));
    let fxx = at(1, 0) - 2.0 * c + at(-1, 0);
    let fyy = at(0, 1) - 2.0 * c + at(0, -1);
    let fxy = 0.25 * (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1));
    let den = fx * fx + fy * fy;
    if den <= 1e-12 {
        return 0.0;
    }
    (fxx * fy * fy - 2.0 * fx * fy * fxy + fyy * fx * fx) / den.powf(1.5)
}

/// Curvature interpolated to every zero crossing between 4-neighbours.
pub fn contour_curvatures(phi: &RealField) -> Vec<f64> {
    let (w, h) = (phi.width(), phi.height());
    let mut out = Vec::new();
    for y in 1..h.saturating_sub(2) {
        for x in 1..w.saturating_sub(2) {
            let a = *phi.get(x, y);
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                let b = *phi.get(nx, ny);
                if (a < 0.0) != (b < 0.0) {
                    let t = (a / (a - b)).clamp(0.0, 1.0);
                    out.push((1.0 - t) * curvature(phi, x, y) + t * curvature(phi, nx, ny));
                }
            }
        }
    }
    out
}

/// Inside pixels (`phi < 0`) with at least one 4-neighbour outside.
pub fn contour_pixels(phi: &RealField) -> Vec<Point> {
    let (w, h) = (phi.width(), phi.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if *phi.get(x, y) >= 0.0 {
                continue;
            }
            let outside = |nx: usize, ny: usize| *phi.get(nx, ny) >= 0.0;
            if (x > 0 && outside(x - 1, y))
                || (x + 1 < w && outside(x + 1, y))
                || (y > 0 && outside(x, y - 1))
                || (y + 1 < h && outside(x, y + 1))
            {
                out.push(Point::new(x, y));
            }
        }
    }
    out
}

/// Outcome of [`detect`].
#[derive(Debug, Clone)]
pub struct DetectedRegions {
    /// Connected components of `phi < 0`.
    pub regions: LabelMap,
    pub contour: Vec<Point>,
    pub phi: RealField,
    pub iterations: usize,
    pub converged: bool,
    /// Every pixel was a seed; no evolution was run.
    pub degenerate: bool,
    pub seed_count: usize,
}

/// Full detection from automatic bright-pixel seeds.
pub fn detect(img: &GrayImage, params: &SpeedParams, schedule: &Schedule) -> Result<DetectedRegions> {
    let seeds = seed_points(img, schedule.seed_fraction);
    detect_from_seeds(img, &seeds, params, schedule)
}

/// Seed → fast march → initial level set → evolution with periodic
/// reinitialization, until fewer than `convergence_threshold` of the band
/// cells change sign over one reinitialization period.
pub fn detect_from_seeds(img: &GrayImage, seeds: &[Point], params: &SpeedParams, schedule: &Schedule) -> Result<DetectedRegions> {
    params.validate()?;
    schedule.validate()?;
    if seeds.is_empty() {
        return Err(LevelSetError::EmptySeeds);
    }
    let (w, h) = (img.width(), img.height());
    if seeds.len() >= w * h {
        let phi = Grid::filled(w, h, -1.0);
        let regions = label_components(&phi.map(|&v: &f64| v < 0.0));
        return Ok(DetectedRegions {
            regions,
            contour: Vec::new(),
            phi,
            iterations: 0,
            converged: false,
            degenerate: true,
            seed_count: seeds.len(),
        });
    }

    let arrival = fast_march(img, seeds, params)?;
    let t0 = arrival.quantile(schedule.t0_quantile)?;
    let mut field = init_phi(&arrival, t0, schedule.band_width, schedule.time_step)?;
    let terms = SpeedTerms::new(img, params)?;
    let bound = terms.stability_bound();
    if schedule.time_step > bound {
        return Err(LevelSetError::Unstable { time_step: schedule.time_step, bound });
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut sweep_start = field.inside();
    while iterations < schedule.max_iterations && field.has_contour() {
        field = terms.evolve(&field)?;
        iterations += 1;
        if iterations % schedule.reinit_period == 0 {
            let band_cells = field.band.count();
            let flips = field
                .band
                .data()
                .iter()
                .zip(sweep_start.data())
                .zip(field.phi.data())
                .filter(|((&b, &was_in), &v)| b && was_in != (v < 0.0))
                .count();
            if !field.has_contour() {
                break;
            }
            field = reinitialize(&field)?;
            sweep_start = field.inside();
            if (flips as f64) < schedule.convergence_threshold * band_cells as f64 {
                converged = true;
                break;
            }
        }
    }

    let inside = field.inside();
    Ok(DetectedRegions {
        regions: label_components(&inside),
        contour: contour_pixels(&field.phi),
        phi: field.phi,
        iterations,
        converged,
        degenerate: false,
        seed_count: seeds.len(),
    })
}
