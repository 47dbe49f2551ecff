use super::{resample_rows, RawColumn, RawSequence, TrajectoryError};
use image::{GrayImage, Luma};

/// Number of resampled points drawn in a trace raster.
pub const TRACE_POINTS: usize = 256;

const MARGIN: f64 = 0.1;
const DOT_RADIUS: i64 = 2;

/// Draws the left-camera tip path as dark dots on a white `size × size`
/// raster. The path is spline-resampled, then scaled uniformly to fit the
/// raster with a 10% margin on each side.
pub fn render_trace_image(
    seq: &RawSequence,
    frame_width: u32,
    frame_height: u32,
    size: u32,
) -> Result<GrayImage, TrajectoryError> {
    let mut pts: Vec<f64> = Vec::new();
    for i in 0..seq.len() {
        let o = seq.observation(i, RawColumn::OrangeLeft, frame_width, frame_height);
        if !o.is_occluded() {
            pts.extend_from_slice(&[o.x, o.y]);
        }
    }
    if pts.is_empty() {
        return Err(TrajectoryError::EmptyTrace);
    }
    let path: Vec<f64> = if pts.len() >= 8 {
        // resample_rows only accepts 3 or 6 columns; pad with a zero channel
        let padded: Vec<f64> = pts.chunks(2).flat_map(|p| [p[0], p[1], 0.0]).collect();
        let r = resample_rows(&padded, 3, TRACE_POINTS)?;
        r.rows().flat_map(|p| [p[0], p[1]]).collect()
    } else {
        pts
    };

    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in path.chunks(2) {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let extent = (max_x - min_x).max(max_y - min_y);
    let usable = size as f64 * (1.0 - 2.0 * MARGIN);
    let scale = if extent > 0.0 { usable / extent } else { 0.0 };
    let (mid_x, mid_y) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    let center = size as f64 / 2.0;

    let mut img = GrayImage::from_pixel(size, size, Luma([255]));
    for p in path.chunks(2) {
        let px = (center + (p[0] - mid_x) * scale).round() as i64;
        let py = (center + (p[1] - mid_y) * scale).round() as i64;
        for dy in -DOT_RADIUS..=DOT_RADIUS {
            for dx in -DOT_RADIUS..=DOT_RADIUS {
                if dx * dx + dy * dy > DOT_RADIUS * DOT_RADIUS {
                    continue;
                }
                let (x, y) = (px + dx, py + dy);
                if x >= 0 && y >= 0 && x < size as i64 && y < size as i64 {
                    img.put_pixel(x as u32, y as u32, Luma([0]));
                }
            }
        }
    }
    Ok(img)
}
