//! Colored ball detection in stereo frames: color bandpass, morphological
//! cleanup, connected components and an algebraic circle fit per component.
//!
//! Pixel `(i, j)` has its center at coordinates `(i, j)`; fitted centers and
//! radii are reported in that convention.

use crate::stereo::BallObservation;
use image::RgbImage;
use std::collections::VecDeque;
use thiserror::Error;

/// Components with fewer boundary pixels than this are ignored.
pub const MIN_BOUNDARY_PIXELS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("left frame is {left:?} but right frame is {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("invalid color band: {0}")]
    InvalidBand(String),
}

/// Inclusive per-channel RGB thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColorBand {
    pub low: [u8; 3],
    pub high: [u8; 3],
}

impl ColorBand {
    pub fn new(low: [u8; 3], high: [u8; 3]) -> Result<Self, DetectionError> {
        if low.iter().zip(high.iter()).any(|(l, h)| l > h) {
            return Err(DetectionError::InvalidBand(format!(
                "low {low:?} exceeds high {high:?}"
            )));
        }
        Ok(Self { low, high })
    }

    pub const ORANGE: ColorBand = ColorBand {
        low: [180, 40, 0],
        high: [255, 160, 90],
    };

    pub const GREEN: ColorBand = ColorBand {
        low: [0, 150, 0],
        high: [100, 255, 120],
    };

    pub fn contains(&self, px: [u8; 3]) -> bool {
        (0..3).all(|c| self.low[c] <= px[c] && px[c] <= self.high[c])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bands {
    pub orange: ColorBand,
    pub green: ColorBand,
}

impl Default for Bands {
    fn default() -> Self {
        Self {
            orange: ColorBand::ORANGE,
            green: ColorBand::GREEN,
        }
    }
}

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.data[(y as u32 * self.width + x as u32) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// 3×3 square erosion; pixels outside the image count as background.
    pub fn erode(&self) -> Mask {
        self.filter3(true)
    }

    /// 3×3 square dilation.
    pub fn dilate(&self) -> Mask {
        self.filter3(false)
    }

    fn filter3(&self, erode: bool) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                let mut v = erode;
                'win: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let p = self.get(x + dx, y + dy);
                        if erode && !p {
                            v = false;
                            break 'win;
                        }
                        if !erode && p {
                            v = true;
                            break 'win;
                        }
                    }
                }
                out.data[(y * self.width as i64 + x) as usize] = v;
            }
        }
        out
    }

    pub fn open(&self) -> Mask {
        self.erode().dilate()
    }

    pub fn close(&self) -> Mask {
        self.dilate().erode()
    }
}

/// Pixels inside `band` in all three channels, cleaned by one opening then
/// one closing with a 3×3 square.
pub fn segment_color(image: &RgbImage, band: &ColorBand) -> Mask {
    let (w, h) = image.dimensions();
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for (x, y, px) in image.enumerate_pixels() {
        if band.contains(px.0) {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
    }
    let mut mask = Mask::new(w, h);
    if x0 == u32::MAX {
        return mask;
    }
    // Filter only a window around the in-band pixels. A 3-pixel margin keeps
    // every pixel the open/close chain can reach inside the window, and a
    // window clamped to the image border sees the same outside-is-background
    // convention as the full image.
    const MARGIN: u32 = 3;
    let (x0, y0) = (x0.saturating_sub(MARGIN), y0.saturating_sub(MARGIN));
    let (x1, y1) = ((x1 + MARGIN).min(w - 1), (y1 + MARGIN).min(h - 1));
    let mut window = Mask::new(x1 - x0 + 1, y1 - y0 + 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if band.contains(image.get_pixel(x, y).0) {
                window.set(x - x0, y - y0, true);
            }
        }
    }
    let window = window.open().close();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if window.get((x - x0) as i64, (y - y0) as i64) {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// 8-connected components as lists of pixel coordinates.
pub fn connected_components(mask: &Mask) -> Vec<Vec<(i64, i64)>> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut seen = vec![false; mask.data.len()];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if !mask.data[idx] || seen[idx] {
                continue;
            }
            seen[idx] = true;
            queue.push_back((x, y));
            let mut comp = Vec::new();
            while let Some((cx, cy)) = queue.pop_front() {
                comp.push((cx, cy));
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (cx + dx, cy + dy);
                        if mask.get(nx, ny) {
                            let n = (ny * w + nx) as usize;
                            if !seen[n] {
                                seen[n] = true;
                                queue.push_back((nx, ny));
                            }
                        }
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

const FOUR_NEIGHBORS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Kåsa algebraic least-squares circle through `points`; `None` when the
/// points are degenerate (collinear or too few).
pub fn fit_circle(points: &[(f64, f64)]) -> Option<BallObservation> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    // Minimize Σ (u² + v² + D u + E v + F)² in centered coordinates.
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        let row = [u, v, 1.0];
        let z = -(u * u + v * v);
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * z;
        }
    }
    let [d, e, f] = solve3(a, b)?;
    let (cu, cv) = (-d / 2.0, -e / 2.0);
    let r2 = cu * cu + cv * cv - f;
    if !(r2 > 0.0) || !r2.is_finite() {
        return None;
    }
    Some(BallObservation::new(mx + cu, my + cv, r2.sqrt()))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for k in 0..3 {
        let p = (k..3).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-12 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..3 {
            let m = a[i][k] / a[k][k];
            for j in k..3 {
                a[i][j] -= m * a[k][j];
            }
            b[i] -= m * b[k];
        }
    }
    let mut x = [0.0; 3];
    for k in (0..3).rev() {
        let s: f64 = (k + 1..3).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

/// Fits a circle to the boundary of every qualifying component and returns
/// the largest. Boundary samples are the midpoints of pixel edges between a
/// foreground pixel and a 4-neighboring background pixel.
pub fn fit_largest_circle(mask: &Mask) -> BallObservation {
    let mut best: Option<BallObservation> = None;
    for comp in connected_components(mask) {
        let mut boundary_pixels = 0usize;
        let mut edge_points = Vec::new();
        for &(x, y) in &comp {
            let mut on_boundary = false;
            for (dx, dy) in FOUR_NEIGHBORS {
                if !mask.get(x + dx, y + dy) {
                    on_boundary = true;
                    edge_points.push((x as f64 + 0.5 * dx as f64, y as f64 + 0.5 * dy as f64));
                }
            }
            if on_boundary {
                boundary_pixels += 1;
            }
        }
        if boundary_pixels < MIN_BOUNDARY_PIXELS {
            continue;
        }
        if let Some(c) = fit_circle(&edge_points) {
            if best.is_none_or(|b| c.r > b.r) {
                best = Some(c);
            }
        }
    }
    best.unwrap_or(BallObservation::OCCLUDED)
}

/// Both balls in both frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDetection {
    pub green_left: BallObservation,
    pub orange_left: BallObservation,
    pub green_right: BallObservation,
    pub orange_right: BallObservation,
}

impl FrameDetection {
    /// Observations in raw-sequence column order: gl, rl, gr, rr.
    pub fn to_array(&self) -> [BallObservation; 4] {
        [
            self.green_left,
            self.orange_left,
            self.green_right,
            self.orange_right,
        ]
    }
}

/// Detects both balls in a stereo pair. A ball missed in either frame is
/// marked occluded in both.
pub fn detect_frame(
    left: &RgbImage,
    right: &RgbImage,
    bands: &Bands,
) -> Result<FrameDetection, DetectionError> {
    if left.dimensions() != right.dimensions() {
        return Err(DetectionError::DimensionMismatch {
            left: left.dimensions(),
            right: right.dimensions(),
        });
    }
    let detect = |img: &RgbImage, band: &ColorBand| fit_largest_circle(&segment_color(img, band));
    let pair = |band: &ColorBand| {
        let (l, r) = (detect(left, band), detect(right, band));
        if l.is_occluded() || r.is_occluded() {
            (BallObservation::OCCLUDED, BallObservation::OCCLUDED)
        } else {
            (l, r)
        }
    };
    let (green_left, green_right) = pair(&bands.green);
    let (orange_left, orange_right) = pair(&bands.orange);
    Ok(FrameDetection {
        green_left,
        orange_left,
        green_right,
        orange_right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    const GRAY: Rgb<u8> = Rgb([128, 128, 128]);
    const ORANGE: Rgb<u8> = Rgb([255, 128, 0]);
    const GREEN: Rgb<u8> = Rgb([0, 200, 0]);

    fn disc(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
        for (x, y, p) in img.enumerate_pixels_mut() {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                *p = color;
            }
        }
    }

    fn disc_mask(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> Mask {
        let mut m = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                m.set(x, y, dx * dx + dy * dy <= r * r);
            }
        }
        m
    }

    #[test]
    fn gray_image_gives_empty_mask() {
        let img = RgbImage::from_pixel(40, 30, GRAY);
        assert!(segment_color(&img, &ColorBand::ORANGE).is_empty());
    }

    #[test]
    fn speckles_are_removed_disc_kept() {
        let mut img = RgbImage::from_pixel(100, 80, GRAY);
        disc(&mut img, 50.0, 40.0, 8.5, ORANGE);
        for (x, y) in [(5, 5), (90, 10), (10, 70), (80, 70), (30, 20)] {
            img.put_pixel(x, y, ORANGE);
        }
        let mask = segment_color(&img, &ColorBand::ORANGE);
        assert_eq!(mask, disc_mask(100, 80, 50.0, 40.0, 8.5));
        for (x, y) in [(5, 5), (90, 10), (10, 70), (80, 70), (30, 20)] {
            assert!(!mask.get(x, y));
        }
    }

    #[test]
    fn rasterized_disc_fit() {
        let obs = fit_largest_circle(&disc_mask(120, 120, 50.0, 60.0, 10.0));
        assert!((obs.x - 50.0).abs() < 0.5);
        assert!((obs.y - 60.0).abs() < 0.5);
        assert!((obs.r - 10.0).abs() < 0.5);
    }

    #[test]
    fn empty_mask_is_occluded() {
        assert!(fit_largest_circle(&Mask::new(20, 20)).is_occluded());
    }

    #[test]
    fn largest_disc_wins() {
        let mut m = disc_mask(120, 80, 30.0, 40.0, 4.0);
        let big = disc_mask(120, 80, 80.0, 40.0, 10.0);
        for y in 0..80 {
            for x in 0..120 {
                if big.get(x, y) {
                    m.set(x as u32, y as u32, true);
                }
            }
        }
        let obs = fit_largest_circle(&m);
        assert!((obs.x - 80.0).abs() < 0.5 && (obs.r - 10.0).abs() < 0.5);
    }

    #[test]
    fn tiny_components_are_ignored() {
        let mut m = Mask::new(20, 20);
        m.set(5, 5, true);
        m.set(6, 5, true);
        assert!(fit_largest_circle(&m).is_occluded());
    }

    #[test]
    fn green_missing_in_one_frame_is_paired() {
        let mut left = RgbImage::from_pixel(100, 80, GRAY);
        let mut right = RgbImage::from_pixel(100, 80, GRAY);
        disc(&mut left, 60.0, 40.0, 6.0, ORANGE);
        disc(&mut right, 50.0, 40.0, 6.0, ORANGE);
        disc(&mut right, 20.0, 20.0, 6.0, GREEN);
        let det = detect_frame(&left, &right, &Bands::default()).unwrap();
        assert!(det.green_left.is_occluded() && det.green_right.is_occluded());
        assert!((det.orange_left.x - 60.0).abs() < 0.5);
        assert!((det.orange_right.x - 50.0).abs() < 0.5);
    }

    #[test]
    fn nothing_visible_is_all_occluded() {
        let img = RgbImage::from_pixel(40, 40, GRAY);
        let det = detect_frame(&img, &img, &Bands::default()).unwrap();
        assert!(det.to_array().iter().all(|o| o.is_occluded()));
    }

    #[test]
    fn mismatched_frames_rejected() {
        let a = RgbImage::from_pixel(40, 40, GRAY);
        let b = RgbImage::from_pixel(41, 40, GRAY);
        assert!(matches!(
            detect_frame(&a, &b, &Bands::default()),
            Err(DetectionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn band_validation() {
        assert!(ColorBand::new([10, 0, 0], [5, 255, 255]).is_err());
        assert!(ColorBand::new([0, 0, 0], [5, 255, 255]).is_ok());
    }

    proptest! {
        #[test]
        fn noiseless_small_discs_within_one_pixel(
            cx in 20.0f64..80.0, cy in 20.0f64..60.0, r in 3.0f64..12.0
        ) {
            let obs = fit_largest_circle(&segment_mask_of_disc(cx, cy, r));
            prop_assert!((obs.x - cx).abs() <= 1.0);
            prop_assert!((obs.y - cy).abs() <= 1.0);
            prop_assert!((obs.r - r).abs() <= 1.0);
        }

        #[test]
        fn fit_is_translation_equivariant(
            cx in 20.0f64..40.0, cy in 20.0f64..40.0, r in 3.0f64..10.0,
            dx in 0u32..30, dy in 0u32..20,
        ) {
            let base = disc_mask(100, 80, cx, cy, r);
            let mut shifted = Mask::new(100, 80);
            for y in 0..80 {
                for x in 0..100 {
                    if base.get(x, y) {
                        shifted.set(x as u32 + dx, y as u32 + dy, true);
                    }
                }
            }
            let a = fit_largest_circle(&base);
            let b = fit_largest_circle(&shifted);
            prop_assert!((b.x - a.x - dx as f64).abs() < 1e-9);
            prop_assert!((b.y - a.y - dy as f64).abs() < 1e-9);
            prop_assert!((b.r - a.r).abs() < 1e-9);
        }

        #[test]
        fn segmentation_is_idempotent(
            pixels in proptest::collection::vec((0u32..40, 0u32..30), 0..300)
        ) {
            let mut img = RgbImage::from_pixel(40, 30, GRAY);
            for (x, y) in pixels {
                img.put_pixel(x, y, GREEN);
            }
            let once = segment_color(&img, &ColorBand::GREEN);
            let mut repainted = RgbImage::from_pixel(40, 30, GRAY);
            for y in 0..30 {
                for x in 0..40 {
                    if once.get(x, y) {
                        repainted.put_pixel(x as u32, y as u32, GREEN);
                    }
                }
            }
            prop_assert_eq!(segment_color(&repainted, &ColorBand::GREEN), once);
        }
    }

    fn segment_mask_of_disc(cx: f64, cy: f64, r: f64) -> Mask {
        let mut img = RgbImage::from_pixel(100, 80, GRAY);
        disc(&mut img, cx, cy, r, ORANGE);
        segment_color(&img, &ColorBand::ORANGE)
    }
}
