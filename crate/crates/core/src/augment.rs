//! Geometric training-set expansion: in-plane rotations about the tip
//! centroid combined with two-axis scalings.

use crate::stereo::Point3;
use crate::trajectory::InterpolatedTrajectory;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("scale factor must be positive, got {0}")]
    NonPositiveFactor(f64),
}

/// The pair of coordinates a scaling acts on; the third is left alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalePlane {
    Xz,
    Yz,
}

impl ScalePlane {
    fn axes(self) -> [usize; 2] {
        match self {
            ScalePlane::Xz => [0, 2],
            ScalePlane::Yz => [1, 2],
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ScalePlane::Xz => "xz",
            ScalePlane::Yz => "yz",
        }
    }
}

impl fmt::Display for ScalePlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

fn centroid_array(c: Point3) -> [f64; 3] {
    [c.x, c.y, c.z]
}

/// Rotates every point (tip and tail alike) about the Z-parallel axis
/// through the tip centroid. Angle 0 returns an exact copy.
pub fn rotate_traj(traj: &InterpolatedTrajectory, angle_deg: f64) -> InterpolatedTrajectory {
    let mut out = traj.clone();
    if angle_deg == 0.0 {
        return out;
    }
    let [cx, cy, _] = centroid_array(traj.tip_centroid());
    let (s, c) = angle_deg.to_radians().sin_cos();
    let cols = out.cols();
    for row in out.data_mut().chunks_mut(cols) {
        for p in row.chunks_mut(3) {
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            p[0] = cx + c * dx - s * dy;
            p[1] = cy + s * dx + c * dy;
        }
    }
    out
}

/// Scales the two coordinates named by `plane` about the tip centroid.
/// Factor 1 returns an exact copy.
pub fn scale_traj(
    traj: &InterpolatedTrajectory,
    factor: f64,
    plane: ScalePlane,
) -> Result<InterpolatedTrajectory, AugmentError> {
    if !(factor > 0.0) {
        return Err(AugmentError::NonPositiveFactor(factor));
    }
    let mut out = traj.clone();
    if factor == 1.0 {
        return Ok(out);
    }
    let center = centroid_array(traj.tip_centroid());
    let cols = out.cols();
    for row in out.data_mut().chunks_mut(cols) {
        for p in row.chunks_mut(3) {
            for a in plane.axes() {
                p[a] = center[a] + factor * (p[a] - center[a]);
            }
        }
    }
    Ok(out)
}

/// One grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentMember {
    pub angle_deg: f64,
    pub plane: ScalePlane,
    pub factor: f64,
}

impl AugmentMember {
    /// File-name suffix such as `_a-5_xz_s1.05`.
    pub fn suffix(&self) -> String {
        format!("_a{}_{}_s{}", self.angle_deg, self.plane, self.factor)
    }

    pub fn apply(&self, traj: &InterpolatedTrajectory) -> Result<InterpolatedTrajectory, AugmentError> {
        scale_traj(&rotate_traj(traj, self.angle_deg), self.factor, self.plane)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentGrid {
    pub angles_deg: Vec<f64>,
    pub scale_factors: Vec<f64>,
    pub planes: Vec<ScalePlane>,
}

impl Default for AugmentGrid {
    fn default() -> Self {
        Self {
            angles_deg: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            scale_factors: vec![0.95, 1.0, 1.05],
            planes: vec![ScalePlane::Xz, ScalePlane::Yz],
        }
    }
}

impl AugmentGrid {
    pub fn len(&self) -> usize {
        self.angles_deg.len() * self.scale_factors.len() * self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Members in angle-major, then plane, then factor order.
    pub fn members(&self) -> Vec<AugmentMember> {
        let mut out = Vec::with_capacity(self.len());
        for &angle_deg in &self.angles_deg {
            for &plane in &self.planes {
                for &factor in &self.scale_factors {
                    out.push(AugmentMember {
                        angle_deg,
                        plane,
                        factor,
                    });
                }
            }
        }
        out
    }

    pub fn expand(&self, traj: &InterpolatedTrajectory) -> Result<Vec<InterpolatedTrajectory>, AugmentError> {
        self.members().iter().map(|m| m.apply(traj)).collect()
    }
}

/// The default 5 angles × 2 planes × 3 factors expansion. The identity
/// scaling appears once per plane, so each pure rotation occurs twice.
pub fn augment_30(traj: &InterpolatedTrajectory) -> Vec<InterpolatedTrajectory> {
    AugmentGrid::default()
        .expand(traj)
        .expect("default factors are positive")
}
