//! Rectified pinhole stereo rig: projection of ball centers into each camera
//! and triangulation of matched left/right observations back to metric 3D.
//!
//! Disparity is `x_left - x_right`, positive for points in front of a rig
//! whose right camera sits `baseline` meters along +X from the left camera.

use thiserror::Error;

/// Below this absolute disparity (pixels) depth is considered undefined.
pub const DISPARITY_EPSILON: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StereoError {
    #[error("invalid camera rig: {0}")]
    InvalidRig(String),
    #[error("point is not in front of the camera (Z = {0})")]
    BehindCamera(f64),
    #[error("cannot triangulate an occluded observation")]
    Occluded,
    #[error("degenerate disparity {0} px")]
    DegenerateDepth(f64),
}

/// Intrinsics and baseline of a rectified stereo pair. Both cameras share
/// focal length, principal point and image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub focal_length: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            focal_length: 350.0,
            cx: 336.0,
            cy: 188.0,
            baseline: 0.12,
            image_width: 672,
            image_height: 376,
        }
    }
}

impl CameraRig {
    pub fn new(
        focal_length: f64,
        cx: f64,
        cy: f64,
        baseline: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, StereoError> {
        let rig = Self {
            focal_length,
            cx,
            cy,
            baseline,
            image_width,
            image_height,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<(), StereoError> {
        if !(self.focal_length > 0.0) {
            return Err(StereoError::InvalidRig("focal length must be positive".into()));
        }
        if !(self.baseline > 0.0) {
            return Err(StereoError::InvalidRig("baseline must be positive".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.image_width as f64) {
            return Err(StereoError::InvalidRig("cx outside image".into()));
        }
        if !(self.cy > 0.0 && self.cy < self.image_height as f64) {
            return Err(StereoError::InvalidRig("cy outside image".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Camera {
    Left,
    Right,
}

/// Circle center and radius of a ball in one camera frame, in pixels.
/// An occluded ball is encoded as `(-1, -1, -1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallObservation {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

impl BallObservation {
    pub const OCCLUDED: BallObservation = BallObservation {
        x: -1.0,
        y: -1.0,
        r: -1.0,
    };

    pub fn new(x: f64, y: f64, r: f64) -> Self {
        Self { x, y, r }
    }

    pub fn is_occluded(&self) -> bool {
        self.x == -1.0 && self.y == -1.0 && self.r == -1.0
    }
}

/// Metric point in the left-camera frame (Z along the optical axis).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(&self) -> Point3 {
        self.scale(1.0 / self.norm())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl std::ops::Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Projects a ball of metric radius `ball_radius` centered at `p` into one
/// camera. Returns the occlusion observation when the projected circle lies
/// entirely outside the image.
pub fn project_point(
    rig: &CameraRig,
    p: Point3,
    ball_radius: f64,
    camera: Camera,
) -> Result<BallObservation, StereoError> {
    if !(p.z > 0.0) {
        return Err(StereoError::BehindCamera(p.z));
    }
    let offset = match camera {
        Camera::Left => 0.0,
        Camera::Right => rig.baseline,
    };
    let f = rig.focal_length;
    let x = f * (p.x - offset) / p.z + rig.cx;
    let y = f * p.y / p.z + rig.cy;
    let r = f * ball_radius / p.z;
    let (w, h) = (rig.image_width as f64, rig.image_height as f64);
    if x + r < 0.0 || x - r > w || y + r < 0.0 || y - r > h {
        return Ok(BallObservation::OCCLUDED);
    }
    Ok(BallObservation { x, y, r })
}

/// Recovers the 3D center from a matched pair of observations. X and Y are
/// taken from the left frame.
pub fn triangulate(
    rig: &CameraRig,
    left: &BallObservation,
    right: &BallObservation,
) -> Result<Point3, StereoError> {
    if left.is_occluded() || right.is_occluded() {
        return Err(StereoError::Occluded);
    }
    let d = left.x - right.x;
    if d.abs() <= DISPARITY_EPSILON {
        return Err(StereoError::DegenerateDepth(d));
    }
    let z = rig.focal_length * rig.baseline / d;
    if !(z > 0.0) {
        return Err(StereoError::DegenerateDepth(d));
    }
    Ok(Point3 {
        x: (left.x - rig.cx) * z / rig.focal_length,
        y: (left.y - rig.cy) * z / rig.focal_length,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn on_axis_point_hits_principal_point() {
        let rig = CameraRig::default();
        let obs = project_point(&rig, Point3::new(0.0, 0.0, 2.0), 0.02, Camera::Left).unwrap();
        assert_eq!(obs, BallObservation::new(336.0, 188.0, 3.5));
        let right = project_point(&rig, Point3::new(0.0, 0.0, 2.0), 0.02, Camera::Right).unwrap();
        assert!((right.x - 315.0).abs() < 1e-12);
        assert_eq!(right.y, 188.0);
    }

    #[test]
    fn behind_camera_is_domain_error() {
        let rig = CameraRig::default();
        let err = project_point(&rig, Point3::new(0.0, 0.0, -1.0), 0.02, Camera::Left);
        assert!(matches!(err, Err(StereoError::BehindCamera(_))));
    }

    #[test]
    fn far_off_frame_projection_is_occluded() {
        let rig = CameraRig::default();
        let obs = project_point(&rig, Point3::new(10.0, 0.0, 2.0), 0.02, Camera::Left).unwrap();
        assert!(obs.is_occluded());
    }

    #[test]
    fn triangulation_closed_form() {
        let rig = CameraRig::default();
        let p = triangulate(
            &rig,
            &BallObservation::new(400.0, 188.0, 3.0),
            &BallObservation::new(380.0, 188.0, 3.0),
        )
        .unwrap();
        assert!((p.z - 2.1).abs() < 1e-12);
        assert!((p.x - 0.384).abs() < 1e-12);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn zero_disparity_and_occlusion_errors() {
        let rig = CameraRig::default();
        let a = BallObservation::new(400.0, 188.0, 3.0);
        assert!(matches!(
            triangulate(&rig, &a, &a),
            Err(StereoError::DegenerateDepth(_))
        ));
        assert_eq!(
            triangulate(&rig, &a, &BallObservation::OCCLUDED),
            Err(StereoError::Occluded)
        );
    }

    #[test]
    fn rig_validation() {
        assert!(CameraRig::new(0.0, 336.0, 188.0, 0.12, 672, 376).is_err());
        assert!(CameraRig::new(350.0, 336.0, 188.0, -0.1, 672, 376).is_err());
        assert!(CameraRig::new(350.0, 700.0, 188.0, 0.12, 672, 376).is_err());
        assert!(CameraRig::new(350.0, 336.0, 188.0, 0.12, 672, 376).is_ok());
    }

    proptest! {
        #[test]
        fn project_triangulate_round_trip(
            x in -0.8f64..0.8, y in -0.5f64..0.5, z in 0.5f64..5.0
        ) {
            let rig = CameraRig::default();
            let p = Point3::new(x * z / 2.0, y * z / 2.0, z);
            let l = project_point(&rig, p, 0.02, Camera::Left).unwrap();
            let r = project_point(&rig, p, 0.02, Camera::Right).unwrap();
            prop_assume!(!l.is_occluded() && !r.is_occluded());
            let q = triangulate(&rig, &l, &r).unwrap();
            prop_assert!(q.distance(&p) < 1e-9);
            // apparent radius law
            prop_assert!((l.r * p.z - rig.focal_length * 0.02).abs() < 1e-9);
        }

        #[test]
        fn larger_disparity_is_closer(d in 1.0f64..100.0, extra in 0.01f64..10.0) {
            let rig = CameraRig::default();
            let near = triangulate(&rig,
                &BallObservation::new(300.0 + d + extra, 100.0, 2.0),
                &BallObservation::new(300.0, 100.0, 2.0)).unwrap();
            let far = triangulate(&rig,
                &BallObservation::new(300.0 + d, 100.0, 2.0),
                &BallObservation::new(300.0, 100.0, 2.0)).unwrap();
            prop_assert!(near.z < far.z);
        }
    }
}
