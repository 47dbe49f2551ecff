//! Signature representations and the transforms among them:
//!
//! * [`RawSequence`]: per-frame normalized `(x, y, r)` of both balls in both
//!   cameras, twelve columns, with `(-1, -1, -1)` marking an occluded ball.
//! * [`TipTailTrajectory`]: triangulated metric tip and tail centers.
//! * [`InterpolatedTrajectory`]: fixed-length spline resampling of a
//!   trajectory, the network input.
//! * a grayscale raster of the left-camera tip trace.

mod csv;
pub mod spline;
mod trace;

pub use csv::{
    decode_interpolated_csv, decode_raw_csv, decode_tip_tail_csv, encode_interpolated_csv, encode_raw_csv,
    encode_tip_tail_csv, format_value, RAW_HEADER, TIP_HEADER, TIP_TAIL_HEADER,
};
pub use spline::{CubicBSpline, SplineError};
pub use trace::{render_trace_image, TRACE_POINTS};

use crate::stereo::{triangulate, BallObservation, CameraRig, Point3, StereoError};
use thiserror::Error;

/// Default resampled length.
pub const DEFAULT_LENGTH: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("need at least 4 rows to fit a cubic spline, got {0}")]
    InsufficientData(usize),
    #[error("no valid tip observations to draw")]
    EmptyTrace,
    #[error("invalid trajectory: {0}")]
    Invalid(String),
}

impl From<SplineError> for TrajectoryError {
    fn from(e: SplineError) -> Self {
        match e {
            SplineError::InsufficientData(n) => TrajectoryError::InsufficientData(n),
            other => TrajectoryError::Invalid(other.to_string()),
        }
    }
}

/// Column groups of a raw row, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawColumn {
    GreenLeft = 0,
    OrangeLeft = 1,
    GreenRight = 2,
    OrangeRight = 3,
}

/// Twelve normalized values per stereo frame:
/// `xgl,ygl,rgl,xrl,yrl,rrl,xgr,ygr,rgr,xrr,yrr,rrr`.
/// `x` is divided by the frame width, `y` and `r` by the frame height.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawSequence {
    pub rows: Vec<[f64; 12]>,
}

impl RawSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one frame given pixel observations ordered green-left,
    /// orange-left, green-right, orange-right.
    pub fn push_frame(&mut self, obs: [BallObservation; 4], frame_width: u32, frame_height: u32) {
        let (w, h) = (frame_width as f64, frame_height as f64);
        let mut row = [0.0; 12];
        for (k, o) in obs.iter().enumerate() {
            let triple = if o.is_occluded() {
                [-1.0, -1.0, -1.0]
            } else {
                [o.x / w, o.y / h, o.r / h]
            };
            row[3 * k..3 * k + 3].copy_from_slice(&triple);
        }
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Pixel-space observation for one column group of one row.
    pub fn observation(
        &self,
        row: usize,
        col: RawColumn,
        frame_width: u32,
        frame_height: u32,
    ) -> BallObservation {
        let k = col as usize * 3;
        let r = &self.rows[row];
        if is_occluded_triple(&r[k..k + 3]) {
            return BallObservation::OCCLUDED;
        }
        BallObservation::new(
            r[k] * frame_width as f64,
            r[k + 1] * frame_height as f64,
            r[k + 2] * frame_height as f64,
        )
    }

    /// Checks the value-range invariants; returns the first offending row.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        for (i, row) in self.rows.iter().enumerate() {
            validate_raw_row(row).map_err(|message| TrajectoryError::Parse { row: i + 1, message })?;
        }
        Ok(())
    }
}

pub(crate) fn is_occluded_triple(t: &[f64]) -> bool {
    t[0] == -1.0 && t[1] == -1.0 && t[2] == -1.0
}

pub(crate) fn validate_raw_row(row: &[f64; 12]) -> Result<(), String> {
    for k in 0..4 {
        let t = &row[3 * k..3 * k + 3];
        if is_occluded_triple(t) {
            continue;
        }
        if let Some(v) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(format!("value {v} outside [0, 1] in column group {k}"));
        }
    }
    Ok(())
}

/// Metric tip (orange) and tail (green) centers per retained frame:
/// `Xr,Yr,Zr,Xg,Yg,Zg`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TipTailTrajectory {
    pub rows: Vec<[f64; 6]>,
}

impl TipTailTrajectory {
    pub fn from_points(points: impl IntoIterator<Item = (Point3, Point3)>) -> Self {
        Self {
            rows: points
                .into_iter()
                .map(|(tip, tail)| [tip.x, tip.y, tip.z, tail.x, tail.y, tail.z])
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn tip(&self, i: usize) -> Point3 {
        let r = &self.rows[i];
        Point3::new(r[0], r[1], r[2])
    }

    pub fn tail(&self, i: usize) -> Point3 {
        let r = &self.rows[i];
        Point3::new(r[3], r[4], r[5])
    }

    fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

/// Row counts from [`derive_tip_tail`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DeriveReport {
    pub input_rows: usize,
    pub green_occluded: usize,
    pub orange_occluded: usize,
    pub degenerate: usize,
}

impl DeriveReport {
    pub fn is_empty_output(&self) -> bool {
        self.input_rows == self.green_occluded + self.orange_occluded + self.degenerate
    }
}

/// Triangulates every frame in which both balls are visible in both cameras.
/// Frames with an occluded green ball are dropped; frames whose disparity is
/// degenerate are dropped and counted.
pub fn derive_tip_tail(seq: &RawSequence, rig: &CameraRig) -> (TipTailTrajectory, DeriveReport) {
    let (w, h) = (rig.image_width, rig.image_height);
    let mut report = DeriveReport {
        input_rows: seq.len(),
        ..Default::default()
    };
    let mut out = TipTailTrajectory::default();
    for i in 0..seq.len() {
        let gl = seq.observation(i, RawColumn::GreenLeft, w, h);
        let gr = seq.observation(i, RawColumn::GreenRight, w, h);
        if gl.is_occluded() || gr.is_occluded() {
            report.green_occluded += 1;
            continue;
        }
        let ol = seq.observation(i, RawColumn::OrangeLeft, w, h);
        let or = seq.observation(i, RawColumn::OrangeRight, w, h);
        if ol.is_occluded() || or.is_occluded() {
            report.orange_occluded += 1;
            continue;
        }
        match (triangulate(rig, &ol, &or), triangulate(rig, &gl, &gr)) {
            (Ok(tip), Ok(tail)) => out.rows.push([tip.x, tip.y, tip.z, tail.x, tail.y, tail.z]),
            (Err(StereoError::DegenerateDepth(_)), _) | (_, Err(StereoError::DegenerateDepth(_))) => {
                report.degenerate += 1
            }
            // occlusion was ruled out above
            _ => report.degenerate += 1,
        }
    }
    (out, report)
}

/// A fixed-length trajectory, `t × cols` with `cols` 6 (tip then tail) or
/// 3 (tip only).
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedTrajectory {
    cols: usize,
    data: Vec<f64>,
}

impl InterpolatedTrajectory {
    pub fn new(cols: usize, data: Vec<f64>) -> Result<Self, TrajectoryError> {
        if cols != 3 && cols != 6 {
            return Err(TrajectoryError::Invalid(format!(
                "expected 3 or 6 columns, got {cols}"
            )));
        }
        if !data.len().is_multiple_of(cols) {
            return Err(TrajectoryError::Invalid(format!(
                "{} values do not form rows of {cols}",
                data.len()
            )));
        }
        Ok(Self { cols, data })
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn has_tail(&self) -> bool {
        self.cols == 6
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Points of one ball: channel 0 is the tip, channel 1 the tail.
    pub fn channel(&self, channel: usize) -> Vec<Point3> {
        assert!(channel * 3 < self.cols, "channel {channel} not present");
        self.rows()
            .map(|r| Point3::new(r[3 * channel], r[3 * channel + 1], r[3 * channel + 2]))
            .collect()
    }

    /// Drops the tail columns.
    pub fn tip_only(&self) -> InterpolatedTrajectory {
        if self.cols == 3 {
            return self.clone();
        }
        let data = self.rows().flat_map(|r| r[..3].iter().copied()).collect();
        InterpolatedTrajectory { cols: 3, data }
    }

    /// Mean of the tip channel.
    pub fn tip_centroid(&self) -> Point3 {
        let n = self.len().max(1) as f64;
        let mut c = [0.0; 3];
        for r in self.rows() {
            for k in 0..3 {
                c[k] += r[k];
            }
        }
        Point3::new(c[0] / n, c[1] / n, c[2] / n)
    }
}

/// Fits each column with a cubic interpolating B-spline over the uniform
/// row-index parameter and evaluates it at `t` uniformly spaced parameters.
pub fn bspline_resample(
    traj: &TipTailTrajectory,
    t: usize,
) -> Result<InterpolatedTrajectory, TrajectoryError> {
    resample_rows(&traj.flat(), 6, t)
}

/// Same as [`bspline_resample`] for any row-major table with 3 or 6 columns.
pub fn resample_rows(
    samples: &[f64],
    cols: usize,
    t: usize,
) -> Result<InterpolatedTrajectory, TrajectoryError> {
    if t < 2 {
        return Err(TrajectoryError::Invalid(format!("target length {t} < 2")));
    }
    let spline = CubicBSpline::interpolate(samples, cols)?;
    InterpolatedTrajectory::new(cols, spline.sample_uniform(t))
}
