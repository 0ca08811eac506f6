//! Raster containers and netpbm I/O.
//!
//! Coordinates follow one convention everywhere: `x` is the column, `y` is
//! the row, the origin is the top-left pixel and storage is row-major.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("data length {found} does not match {width}x{height}")]
    DataLength { width: usize, height: usize, found: usize },
    #[error("pixel value {value} at index {index} exceeds max value {max_value}")]
    ValueExceedsMax { value: u32, max_value: u32, index: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} samples, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("coordinate ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds { x: usize, y: usize, width: usize, height: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RasterError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

impl Point {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Inclusive axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl Rect {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Pixels on the rectangle border, each listed once.
    pub fn perimeter(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for y in self.y_min..=self.y_max {
            for x in self.x_min..=self.x_max {
                if x == self.x_min || x == self.x_max || y == self.y_min || y == self.y_max {
                    out.push(Point::new(x, y));
                }
            }
        }
        out
    }
}

/// Dense row-major grid of per-pixel values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Per-pixel real values (enhanced images, level-set functions, arrival times).
pub type RealField = Grid<f64>;

/// Foreground (`true`) / background mask.
pub type BinaryMask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::DataLength { width, height, found: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn point(&self, index: usize) -> Point {
        Point::new(index % self.width, index / self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let w = self.width;
        self.data[y * w + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground pixels with at least one 4-neighbour (or the image border)
    /// in the background.
    pub fn boundary(&self) -> Vec<Point> {
        let (w, h) = (self.width, self.height);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !*self.get(x, y) {
                    continue;
                }
                let edge = x == 0
                    || y == 0
                    || x + 1 == w
                    || y + 1 == h
                    || !*self.get(x - 1, y)
                    || !*self.get(x + 1, y)
                    || !*self.get(x, y - 1)
                    || !*self.get(x, y + 1);
                if edge {
                    out.push(Point::new(x, y));
                }
            }
        }
        out
    }
}

/// Gray-level raster with an explicit maximum intensity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    max_value: u16,
    data: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, max_value: u16, data: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::DataLength { width, height, found: data.len() });
        }
        if max_value == 0 {
            return Err(RasterError::MalformedHeader("max value must be positive".into()));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > max_value) {
            return Err(RasterError::ValueExceedsMax {
                value: value as u32,
                max_value: max_value as u32,
                index,
            });
        }
        Ok(Self { width, height, max_value, data })
    }

    pub fn from_fn(width: usize, height: usize, max_value: u16, mut f: impl FnMut(usize, usize) -> u16) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).min(max_value));
            }
        }
        Self::new(width, height, max_value, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn max_value(&self) -> u16 {
        self.max_value
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_f64(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x] as f64
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn min_max(&self) -> (u16, u16) {
        let mut lo = u16::MAX;
        let mut hi = 0;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Histogram with `max_value + 1` bins.
    pub fn histogram(&self) -> Vec<u64> {
        let mut hist = vec![0u64; self.max_value as usize + 1];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }

    pub fn to_field(&self) -> RealField {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// Keeps pixels where `mask` is set and zeroes the rest.
    pub fn masked(&self, mask: &BinaryMask) -> GrayImage {
        assert_eq!((self.width, self.height), (mask.width(), mask.height()));
        let data = self
            .data
            .iter()
            .zip(mask.data())
            .map(|(&v, &m)| if m { v } else { 0 })
            .collect();
        GrayImage { width: self.width, height: self.height, max_value: self.max_value, data }
    }

    /// Copies the pixels inside `rect` into a new image.
    pub fn crop(&self, rect: Rect) -> GrayImage {
        let data = (rect.y_min..=rect.y_max)
            .flat_map(|y| (rect.x_min..=rect.x_max).map(move |x| (x, y)))
            .map(|(x, y)| self.get(x, y))
            .collect();
        GrayImage { width: rect.width(), height: rect.height(), max_value: self.max_value, data }
    }

    /// Mask of pixels strictly above `threshold`.
    pub fn threshold_mask(&self, threshold: u16) -> BinaryMask {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(|&v| v > threshold).collect() }
    }
}

/// Per-pixel component labels, `0` for background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    label_count: u32,
}

impl LabelMap {
    /// Builds a label map, checking that foreground labels are exactly `1..=label_count`.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(RasterError::DataLength { width, height, found: labels.len() });
        }
        let label_count = labels.iter().copied().max().unwrap_or(0);
        let mut seen = vec![false; label_count as usize + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if seen.iter().skip(1).any(|s| !s) {
            return Err(RasterError::MalformedHeader("labels are not contiguous".into()));
        }
        Ok(Self { width, height, labels, label_count })
    }

    pub(crate) fn from_parts(width: usize, height: usize, labels: Vec<u32>, label_count: u32) -> Self {
        Self { width, height, labels, label_count }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn label_count(&self) -> u32 {
        self.label_count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel count per label; index 0 holds the background count.
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.label_count as usize + 1];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    pub fn mask_of(&self, label: u32) -> BinaryMask {
        Grid { width: self.width, height: self.height, data: self.labels.iter().map(|&l| l == label).collect() }
    }

    pub fn foreground(&self) -> BinaryMask {
        Grid { width: self.width, height: self.height, data: self.labels.iter().map(|&l| l != 0).collect() }
    }
}

/// 8-bit RGB raster used for visual overlays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayImage {
    width: usize,
    height: usize,
    rgb: Vec<[u8; 3]>,
}

pub const CONTOUR_COLOR: [u8; 3] = [255, 0, 0];
pub const BOX_COLOR: [u8; 3] = [0, 255, 0];

impl OverlayImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.rgb[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.rgb
    }
}

fn to_u8(v: u16, max_value: u16) -> u8 {
    ((v as u32 * 255 + max_value as u32 / 2) / max_value as u32) as u8
}

/// Replicates the gray image to RGB (scaled to 8 bits), paints `contour`
/// pixels in [`CONTOUR_COLOR`] and the perimeter of `rect` in [`BOX_COLOR`].
pub fn render_overlay(img: &GrayImage, contour: &[Point], rect: Option<Rect>) -> Result<OverlayImage> {
    let (w, h) = (img.width, img.height);
    let check = |p: Point| {
        if p.x >= w || p.y >= h {
            Err(RasterError::OutOfBounds { x: p.x, y: p.y, width: w, height: h })
        } else {
            Ok(())
        }
    };
    for &p in contour {
        check(p)?;
    }
    if let Some(r) = rect {
        check(Point::new(r.x_max, r.y_max))?;
        if r.x_min > r.x_max || r.y_min > r.y_max {
            return Err(RasterError::InvalidDimensions { width: 0, height: 0 });
        }
    }
    let mut rgb: Vec<[u8; 3]> = img
        .data
        .iter()
        .map(|&v| {
            let g = to_u8(v, img.max_value);
            [g, g, g]
        })
        .collect();
    for p in contour {
        rgb[p.y * w + p.x] = CONTOUR_COLOR;
    }
    if let Some(r) = rect {
        for p in r.perimeter() {
            rgb[p.y * w + p.x] = BOX_COLOR;
        }
    }
    Ok(OverlayImage { width: w, height: h, rgb })
}

/// Netpbm graymap flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `P2`, whitespace-separated decimal samples.
    Plain,
    /// `P5`, one byte per sample (two, big-endian, when max value > 255).
    Binary,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next decimal token, or `None` at end of input.
    fn number(&mut self) -> std::result::Result<Option<u64>, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            if self.pos >= self.bytes.len() {
                return Ok(None);
            }
            return Err(format!("unexpected byte 0x{:02x} at offset {}", self.bytes[self.pos], self.pos));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|e| e.to_string())?;
        text.parse::<u64>().map(Some).map_err(|e| format!("{text}: {e}"))
    }

    fn header_field(&mut self, name: &str) -> Result<u64> {
        match self.number() {
            Ok(Some(v)) => Ok(v),
            Ok(None) => Err(RasterError::MalformedHeader(format!("missing {name}"))),
            Err(e) => Err(RasterError::MalformedHeader(format!("{name}: {e}"))),
        }
    }
}

/// Decodes a plain (`P2`) or binary (`P5`) graymap.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'2' || bytes[1] == b'5') {
        return Err(RasterError::MalformedHeader("expected magic P2 or P5".into()));
    }
    let binary = bytes[1] == b'5';
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.header_field("width")? as usize;
    let height = rd.header_field("height")? as usize;
    let max_value = rd.header_field("max value")?;
    if width == 0 || height == 0 {
        return Err(RasterError::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if max_value == 0 || max_value > u16::MAX as u64 {
        return Err(RasterError::MalformedHeader(format!("max value {max_value} outside 1..=65535")));
    }
    let max_value = max_value as u16;
    let expected = width * height;
    let mut data = Vec::with_capacity(expected);

    let check = |value: u64, index: usize| -> Result<u16> {
        if value > max_value as u64 {
            Err(RasterError::ValueExceedsMax { value: value.min(u32::MAX as u64) as u32, max_value: max_value as u32, index })
        } else {
            Ok(value as u16)
        }
    };

    if binary {
        // exactly one whitespace byte separates the header from the raster
        if rd.pos >= bytes.len() || !bytes[rd.pos].is_ascii_whitespace() {
            return Err(RasterError::TruncatedPayload { expected, found: 0 });
        }
        let payload = &bytes[rd.pos + 1..];
        let wide = max_value > 255;
        let sample_bytes = if wide { 2 } else { 1 };
        let found = payload.len() / sample_bytes;
        if found < expected {
            return Err(RasterError::TruncatedPayload { expected, found });
        }
        for i in 0..expected {
            let v = if wide {
                u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as u64
            } else {
                payload[i] as u64
            };
            data.push(check(v, i)?);
        }
    } else {
        for i in 0..expected {
            match rd.number() {
                Ok(Some(v)) => data.push(check(v, i)?),
                Ok(None) => return Err(RasterError::TruncatedPayload { expected, found: i }),
                Err(e) => return Err(RasterError::MalformedHeader(format!("sample {i}: {e}"))),
            }
        }
    }
    GrayImage::new(width, height, max_value, data)
}

pub fn encode_pgm(img: &GrayImage, encoding: PgmEncoding) -> Vec<u8> {
    let magic = match encoding {
        PgmEncoding::Plain => "P2",
        PgmEncoding::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.max_value).into_bytes();
    match encoding {
        PgmEncoding::Plain => {
            for row in img.data.chunks(img.width) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        PgmEncoding::Binary => {
            if img.max_value > 255 {
                for &v in &img.data {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            } else {
                out.extend(img.data.iter().map(|&v| v as u8));
            }
        }
    }
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

/// Writes a binary (`P5`) graymap.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_pgm_with(img, path, PgmEncoding::Binary)
}

pub fn write_pgm_with(img: &GrayImage, path: impl AsRef<Path>, encoding: PgmEncoding) -> Result<()> {
    fs::write(path, encode_pgm(img, encoding))?;
    Ok(())
}

pub fn encode_ppm(img: &OverlayImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    for px in &img.rgb {
        out.extend_from_slice(px);
    }
    out
}

/// Decodes an 8-bit binary pixmap (`P6`).
pub fn decode_ppm(bytes: &[u8]) -> Result<OverlayImage> {
    if !bytes.starts_with(b"P6") {
        return Err(RasterError::MalformedHeader("expected magic P6".into()));
    }
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.header_field("width")? as usize;
    let height = rd.header_field("height")? as usize;
    let max_value = rd.header_field("max value")?;
    if width == 0 || height == 0 || max_value != 255 {
        return Err(RasterError::MalformedHeader("only non-empty 8-bit pixmaps are supported".into()));
    }
    let expected = width * height;
    let payload = bytes.get(rd.pos + 1..).unwrap_or(&[]);
    if payload.len() / 3 < expected {
        return Err(RasterError::TruncatedPayload { expected, found: payload.len() / 3 });
    }
    let rgb = payload[..expected * 3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(OverlayImage { width, height, rgb })
}

pub fn write_ppm(img: &OverlayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ppm(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_two_by_two() {
        let img = decode_pgm(b"P2\n2 2\n3\n0 1\n2 3\n").unwrap();
        assert_eq!(img, GrayImage::new(2, 2, 3, vec![0, 1, 2, 3]).unwrap());
    }

    #[test]
    fn binary_bytes() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[10, 20, 30, 40]);
        assert_eq!(img.max_value(), 255);
    }

    #[test]
    fn comments_in_header() {
        let img = decode_pgm(b"P2\n# made by hand\n2 # width\n1\n# max\n9\n4 9\n").unwrap();
        assert_eq!(img.data(), &[4, 9]);
    }

    #[test]
    fn truncated_plain() {
        let err = decode_pgm(b"P2\n2 2\n3\n0 1 2\n").unwrap_err();
        assert!(matches!(err, RasterError::TruncatedPayload { expected: 4, found: 3 }), "{err:?}");
    }

    #[test]
    fn truncated_binary() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(decode_pgm(&bytes), Err(RasterError::TruncatedPayload { expected: 4, found: 3 })));
    }

    #[test]
    fn value_over_max() {
        let err = decode_pgm(b"P2\n2 1\n3\n1 4\n").unwrap_err();
        assert!(matches!(err, RasterError::ValueExceedsMax { value: 4, max_value: 3, index: 1 }));
        let mut bytes = b"P5\n1 1\n100\n".to_vec();
        bytes.push(101);
        assert!(matches!(decode_pgm(&bytes), Err(RasterError::ValueExceedsMax { .. })));
    }

    #[test]
    fn malformed_headers() {
        for bad in [&b"P3\n1 1\n1\n0"[..], b"P2\n1\n", b"P2\nx 1 1\n0", b"P2\n0 1\n1\n", b"P2\n1 1\n70000\n0"] {
            assert!(matches!(decode_pgm(bad), Err(RasterError::MalformedHeader(_))), "{:?}", String::from_utf8_lossy(bad));
        }
    }

    #[test]
    fn minimal_image() {
        let img = GrayImage::new(1, 1, 1, vec![0]).unwrap();
        for enc in [PgmEncoding::Plain, PgmEncoding::Binary] {
            assert_eq!(decode_pgm(&encode_pgm(&img, enc)).unwrap(), img);
        }
    }

    #[test]
    fn sixteen_bit_uses_two_bytes() {
        let img = GrayImage::new(2, 1, 65535, vec![258, 65535]).unwrap();
        let bytes = encode_pgm(&img, PgmEncoding::Binary);
        let header = b"P5\n2 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[1, 2, 255, 255]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = GrayImage::from_fn(5, 3, 1000, |x, y| (x * 100 + y * 7) as u16).unwrap();
        write_pgm(&img, &path).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);
        assert!(write_pgm(&img, dir.path().join("missing/a.pgm")).is_err());
    }

    fn arb_image() -> impl Strategy<Value = GrayImage> {
        (1usize..8, 1usize..8, prop_oneof![Just(1u16), Just(255u16), Just(4095u16), Just(65535u16)]).prop_flat_map(|(w, h, max)| {
            proptest::collection::vec(0..=max, w * h).prop_map(move |data| GrayImage::new(w, h, max, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_exact(img in arb_image(), plain in any::<bool>()) {
            let enc = if plain { PgmEncoding::Plain } else { PgmEncoding::Binary };
            prop_assert_eq!(decode_pgm(&encode_pgm(&img, enc)).unwrap(), img);
        }

        #[test]
        fn overlay_only_touches_marks(img in arb_image(), marks in proptest::collection::vec((0usize..8, 0usize..8), 0..6)) {
            let contour: Vec<Point> = marks.iter()
                .filter(|(x, y)| *x < img.width() && *y < img.height())
                .map(|&(x, y)| Point::new(x, y))
                .collect();
            let plain = render_overlay(&img, &[], None).unwrap();
            let marked = render_overlay(&img, &contour, None).unwrap();
            for y in 0..img.height() {
                for x in 0..img.width() {
                    if contour.contains(&Point::new(x, y)) {
                        prop_assert_eq!(marked.get(x, y), CONTOUR_COLOR);
                    } else {
                        prop_assert_eq!(marked.get(x, y), plain.get(x, y));
                    }
                }
            }
        }
    }

    #[test]
    fn overlay_identity() {
        let img = GrayImage::new(2, 2, 255, vec![0, 10, 200, 255]).unwrap();
        let ov = render_overlay(&img, &[], None).unwrap();
        assert_eq!(ov.pixels(), &[[0, 0, 0], [10, 10, 10], [200, 200, 200], [255, 255, 255]]);
    }

    #[test]
    fn overlay_single_contour_pixel() {
        let img = GrayImage::new(3, 3, 255, vec![7; 9]).unwrap();
        let ov = render_overlay(&img, &[Point::new(0, 0)], None).unwrap();
        assert_eq!(ov.pixels().iter().filter(|&&p| p == CONTOUR_COLOR).count(), 1);
        assert_eq!(ov.get(0, 0), CONTOUR_COLOR);
    }

    #[test]
    fn full_box_perimeter_count() {
        for (w, h) in [(1, 1), (1, 5), (2, 2), (3, 7), (10, 4)] {
            let img = GrayImage::new(w, h, 255, vec![9; w * h]).unwrap();
            let rect = Rect { x_min: 0, y_min: 0, x_max: w - 1, y_max: h - 1 };
            let ov = render_overlay(&img, &[], Some(rect)).unwrap();
            // enumeration: a pixel is on the border iff it sits in the first/last row or column
            let mut expected = 0;
            for y in 0..h {
                for x in 0..w {
                    if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                        expected += 1;
                    }
                }
            }
            let recolored = ov.pixels().iter().filter(|&&p| p == BOX_COLOR).count();
            assert_eq!(recolored, expected);
            if w >= 2 && h >= 2 {
                assert_eq!(recolored, 2 * (w + h) - 4);
            }
        }
    }

    #[test]
    fn overlay_out_of_bounds() {
        let img = GrayImage::new(2, 2, 255, vec![0; 4]).unwrap();
        assert!(matches!(render_overlay(&img, &[Point::new(2, 0)], None), Err(RasterError::OutOfBounds { .. })));
        let rect = Rect { x_min: 0, y_min: 0, x_max: 1, y_max: 2 };
        assert!(render_overlay(&img, &[], Some(rect)).is_err());
    }

    #[test]
    fn ppm_round_trip() {
        let img = GrayImage::from_fn(4, 3, 255, |x, y| (x * 60 + y) as u16).unwrap();
        let ov = render_overlay(&img, &[Point::new(1, 1)], Some(Rect { x_min: 2, y_min: 0, x_max: 3, y_max: 2 })).unwrap();
        assert_eq!(decode_ppm(&encode_ppm(&ov)).unwrap(), ov);
    }
}
