//! Seeded synthetic signers.
//!
//! A signer is a control polygon for the pen-tip path plus a pen-orientation
//! style (mean tilt and a sinusoidal wobble). Genuine draws jitter the
//! signer's own polygon and style slightly; a skilled forgery copies the
//! target's polygon with a looser jitter but moves the pen with the forger's
//! orientation style. The rendered frames are what the detection chain
//! consumes, and the generating samples are its ground truth.

use crate::stereo::{project_point, Camera, CameraRig, Point3, StereoError};
use crate::trajectory::{resample_rows, CubicBSpline, TipTailTrajectory};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("forger and target must be different signers (both {0})")]
    SameSigner(u32),
    #[error("invalid synthesis parameter: {0}")]
    InvalidParameter(String),
}

pub const BACKGROUND: Rgb<u8> = Rgb([128, 128, 128]);
pub const ORANGE: Rgb<u8> = Rgb([255, 128, 0]);
pub const GREEN: Rgb<u8> = Rgb([0, 200, 0]);

/// Axis-aligned box in which tip control points are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WritingVolume {
    pub center: Point3,
    /// Full extents along X, Y, Z in meters.
    pub extent: [f64; 3],
}

impl Default for WritingVolume {
    fn default() -> Self {
        Self {
            center: Point3::new(0.0, 0.0, 2.0),
            extent: [0.30, 0.20, 0.10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub pen_length: f64,
    pub frame_rate: f64,
    /// Per-coordinate control-point jitter of a genuine draw (m).
    pub sigma_intra: f64,
    /// Per-coordinate control-point jitter of a forgery (m).
    pub sigma_forge: f64,
    /// Fraction of frames with the tail hidden.
    pub occlusion_fraction: f64,
    /// Relative amplitude of duration and speed variation.
    pub time_warp: f64,
    pub volume: WritingVolume,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            pen_length: 0.18,
            frame_rate: 80.0,
            sigma_intra: 0.004,
            sigma_forge: 0.008,
            occlusion_fraction: 0.05,
            time_warp: 0.10,
            volume: WritingVolume::default(),
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParameter(m.to_string()));
        if !(self.pen_length > 0.0) {
            return bad("pen_length must be positive");
        }
        if !(60.0..=100.0).contains(&self.frame_rate) {
            return bad("frame_rate must lie in [60, 100] Hz");
        }
        if !(self.sigma_intra >= 0.0 && self.sigma_forge >= 0.0) {
            return bad("jitter must be non-negative");
        }
        if !(0.0..0.5).contains(&self.occlusion_fraction) {
            return bad("occlusion_fraction must lie in [0, 0.5)");
        }
        if !(0.0..0.5).contains(&self.time_warp) {
            return bad("time_warp must lie in [0, 0.5)");
        }
        if self.volume.center.z - self.volume.extent[2] / 2.0 - self.pen_length <= 0.0 {
            return bad("writing volume too close to the camera");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationStyle {
    /// Unit vector from tip to tail at rest.
    pub mean_tilt: Point3,
    pub wobble_frequency: f64,
    /// Radians, within `[0, π/4]`.
    pub wobble_amplitude: f64,
    /// Direction of the wobble plane around `mean_tilt`, radians.
    pub wobble_axis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignerModel {
    pub signer_id: u32,
    pub tip_control_points: Vec<Point3>,
    pub orientation_style: OrientationStyle,
    /// Seconds, within `[2, 5]`.
    pub duration: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenSample {
    pub tip: Point3,
    pub tail: Point3,
    pub timestamp: f64,
    pub tail_visible: bool,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    let seed = parts
        .iter()
        .fold(0x5EED_u64, |acc, p| splitmix(acc ^ splitmix(*p)));
    ChaCha8Rng::seed_from_u64(seed)
}

const TAG_SIGNER: u64 = 1;
const TAG_GENUINE: u64 = 2;
const TAG_FORGERY: u64 = 3;

/// Deterministic signer model in the default writing volume.
pub fn make_signer(signer_id: u32, seed: u64) -> SignerModel {
    make_signer_in(&WritingVolume::default(), signer_id, seed)
}

pub fn make_signer_in(volume: &WritingVolume, signer_id: u32, seed: u64) -> SignerModel {
    let mut rng = rng_for(&[TAG_SIGNER, signer_id as u64, seed]);
    let n = rng.random_range(8..=16);
    let half = volume.extent.map(|e| e / 2.0);
    let tip_control_points = (0..n)
        .map(|_| {
            Point3::new(
                volume.center.x + rng.random_range(-half[0]..=half[0]),
                volume.center.y + rng.random_range(-half[1]..=half[1]),
                volume.center.z + rng.random_range(-half[2]..=half[2]),
            )
        })
        .collect();
    // Tail points up (−Y in image coordinates) and tilts by 15°–55° in a
    // signer-specific azimuth.
    let tilt = rng.random_range(15f64..55.0).to_radians();
    let azimuth = rng.random_range(0.0..2.0 * PI);
    let mean_tilt = Point3::new(
        tilt.sin() * azimuth.cos(),
        -tilt.cos(),
        tilt.sin() * azimuth.sin(),
    );
    let orientation_style = OrientationStyle {
        mean_tilt,
        wobble_frequency: rng.random_range(0.5..2.0),
        wobble_amplitude: rng.random_range(0.15..0.45),
        wobble_axis: rng.random_range(0.0..2.0 * PI),
    };
    SignerModel {
        signer_id,
        tip_control_points,
        orientation_style,
        duration: rng.random_range(2.0..=5.0),
        seed,
    }
}

/// Orthonormal pair perpendicular to unit vector `m`.
fn perpendicular_basis(m: Point3) -> (Point3, Point3) {
    let reference = if m.x.abs() < 0.9 {
        Point3::new(1.0, 0.0, 0.0)
    } else {
        Point3::new(0.0, 0.0, 1.0)
    };
    let u = m.cross(&reference).normalized();
    let w = m.cross(&u).normalized();
    (u, w)
}

/// Rotates unit `v` by `angle` about unit `axis` (Rodrigues).
fn rotate_about(v: Point3, axis: Point3, angle: f64) -> Point3 {
    let (s, c) = angle.sin_cos();
    v.scale(c) + axis.cross(&v).scale(s) + axis.scale(axis.dot(&v) * (1.0 - c))
}

/// Per-draw perturbation of an orientation style.
struct StyleDraw {
    mean_tilt: Point3,
    u: Point3,
    w: Point3,
    frequency: f64,
    amplitude: f64,
    phase: f64,
    axis: f64,
}

impl StyleDraw {
    fn new(style: &OrientationStyle, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let (u0, w0) = perpendicular_basis(style.mean_tilt);
        let tilt_axis = (u0.scale(normal.sample(rng)) + w0.scale(normal.sample(rng))).normalized();
        let mean_tilt =
            rotate_about(style.mean_tilt, tilt_axis, 2f64.to_radians() * normal.sample(rng)).normalized();
        let (u, w) = perpendicular_basis(mean_tilt);
        Self {
            mean_tilt,
            u,
            w,
            frequency: style.wobble_frequency * (1.0 + 0.03 * normal.sample(rng)),
            amplitude: (style.wobble_amplitude * (1.0 + 0.05 * normal.sample(rng))).clamp(0.0, PI / 4.0),
            phase: 0.2 * normal.sample(rng),
            axis: style.wobble_axis,
        }
    }

    fn direction(&self, t: f64) -> Point3 {
        let a = self.amplitude * (2.0 * PI * self.frequency * t + self.phase).sin();
        let psi = self.axis + 0.3 * (PI * self.frequency * t).sin();
        let off = self.u.scale(psi.cos()) + self.w.scale(psi.sin());
        (self.mean_tilt.scale(a.cos()) + off.scale(a.sin())).normalized()
    }
}

fn jittered_path(points: &[Point3], sigma: f64, rng: &mut ChaCha8Rng) -> CubicBSpline {
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let flat: Vec<f64> = points
        .iter()
        .flat_map(|p| {
            let mut q = p.to_array();
            if sigma > 0.0 {
                q.iter_mut().for_each(|v| *v += normal.sample(rng));
            }
            q
        })
        .collect();
    CubicBSpline::interpolate(&flat, 3).expect("control polygon has at least 8 points")
}

fn draw_samples(
    params: &SynthParams,
    path: &CubicBSpline,
    style: &StyleDraw,
    duration: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<PenSample> {
    let w = params.time_warp;
    let duration = duration * (1.0 + if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 });
    let warp = if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
    let n = ((duration * params.frame_rate).round() as usize).max(4);
    let mut samples: Vec<PenSample> = (0..n)
        .map(|k| {
            let tau = k as f64 / (n - 1) as f64;
            let u = tau + warp / PI * (PI * tau).sin();
            let tip_v = path.eval(u);
            let tip = Point3::new(tip_v[0], tip_v[1], tip_v[2]);
            let timestamp = k as f64 / params.frame_rate;
            let tail = tip + style.direction(timestamp).scale(params.pen_length);
            PenSample {
                tip,
                tail,
                timestamp,
                tail_visible: true,
            }
        })
        .collect();

    let hidden = (params.occlusion_fraction * n as f64).round() as usize;
    if hidden > 0 {
        let segments = if hidden >= 2 { rng.random_range(1..=2) } else { 1 };
        let first = if segments == 2 { hidden / 2 } else { hidden };
        for len in [first, hidden - first].into_iter().take(segments) {
            if len == 0 {
                continue;
            }
            let start = rng.random_range(0..=n - len);
            for s in &mut samples[start..start + len] {
                s.tail_visible = false;
            }
        }
    }
    samples
}

/// One genuine signature of `model`.
pub fn sample_genuine(params: &SynthParams, model: &SignerModel, variation_seed: u64) -> Vec<PenSample> {
    let mut rng = rng_for(&[TAG_GENUINE, model.signer_id as u64, model.seed, variation_seed]);
    let path = jittered_path(&model.tip_control_points, params.sigma_intra, &mut rng);
    let style = StyleDraw::new(&model.orientation_style, &mut rng);
    draw_samples(params, &path, &style, model.duration, &mut rng)
}

/// A skilled forgery: `target`'s tip shape, `forger`'s pen handling.
pub fn sample_forgery(
    params: &SynthParams,
    target: &SignerModel,
    forger: &SignerModel,
    seed: u64,
) -> Result<Vec<PenSample>, SynthError> {
    if target.signer_id == forger.signer_id {
        return Err(SynthError::SameSigner(target.signer_id));
    }
    let mut rng = rng_for(&[
        TAG_FORGERY,
        target.signer_id as u64,
        forger.signer_id as u64,
        target.seed,
        seed,
    ]);
    let path = jittered_path(&target.tip_control_points, params.sigma_forge, &mut rng);
    let style = StyleDraw::new(&forger.orientation_style, &mut rng);
    Ok(draw_samples(params, &path, &style, target.duration, &mut rng))
}

/// Exact tip-tail trajectory of the samples, dropping hidden-tail frames the
/// way reconstruction from frames does.
pub fn ground_truth_tip_tail(samples: &[PenSample]) -> TipTailTrajectory {
    TipTailTrajectory::from_points(samples.iter().filter(|s| s.tail_visible).map(|s| (s.tip, s.tail)))
}

/// Mean pointwise distance between two tip paths after resampling both to
/// `t` points.
pub fn mean_path_distance(a: &[Point3], b: &[Point3], t: usize) -> f64 {
    let resample = |p: &[Point3]| {
        let flat: Vec<f64> = p.iter().flat_map(|q| q.to_array()).collect();
        resample_rows(&flat, 3, t).expect("path has at least 4 points")
    };
    let (ra, rb) = (resample(a), resample(b));
    ra.rows()
        .zip(rb.rows())
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
        .sum::<f64>()
        / t as f64
}

/// Sizes and seed of a synthetic signer population.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub signers: u32,
    pub genuine_per_signer: usize,
    pub forgeries_per_signer: usize,
    pub seed: u64,
    pub params: SynthParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            signers: 8,
            genuine_per_signer: 25,
            forgeries_per_signer: 12,
            seed: 0,
            params: SynthParams::default(),
        }
    }
}

/// Pen samples for every signer; `forgeries[k]` imitate signer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub signers: Vec<SignerModel>,
    pub genuine: Vec<Vec<Vec<PenSample>>>,
    pub forgeries: Vec<Vec<Forgery>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forgery {
    pub forger_id: u32,
    pub samples: Vec<PenSample>,
}

/// Forger of the `j`-th forgery of `target`, cycling through the other
/// signers.
pub fn forger_for(target: u32, j: usize, signers: u32) -> u32 {
    (target + 1 + (j as u32 % (signers - 1))) % signers
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<SyntheticDataset, SynthError> {
    cfg.params.validate()?;
    if cfg.signers < 2 && cfg.forgeries_per_signer > 0 {
        return Err(SynthError::InvalidParameter(
            "forgeries need at least two signers".into(),
        ));
    }
    let signers: Vec<SignerModel> = (0..cfg.signers)
        .map(|id| make_signer_in(&cfg.params.volume, id, cfg.seed))
        .collect();
    let genuine = signers
        .iter()
        .map(|m| {
            (0..cfg.genuine_per_signer)
                .map(|j| sample_genuine(&cfg.params, m, j as u64))
                .collect()
        })
        .collect();
    let forgeries = signers
        .iter()
        .map(|target| {
            (0..cfg.forgeries_per_signer)
                .map(|j| {
                    let forger = &signers[forger_for(target.signer_id, j, cfg.signers) as usize];
                    Ok(Forgery {
                        forger_id: forger.signer_id,
                        samples: sample_forgery(&cfg.params, target, forger, j as u64)?,
                    })
                })
                .collect::<Result<Vec<_>, SynthError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(SyntheticDataset {
        signers,
        genuine,
        forgeries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Metric radius of both balls.
    pub ball_radius: f64,
    /// Maximum absolute per-channel uniform noise; 0 renders exact colors.
    pub noise_amplitude: u8,
    pub seed: u64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            ball_radius: 0.02,
            noise_amplitude: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StereoFrame {
    pub left: RgbImage,
    pub right: RgbImage,
}

fn fill_disc(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((cx - r).floor() as i64).max(0);
    let x1 = ((cx + r).ceil() as i64).min(w - 1);
    let y0 = ((cy - r).floor() as i64).max(0);
    let y1 = ((cy + r).ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

/// Renders one stereo pair: an orange disc at the projected tip and, when
/// visible, a green disc at the projected tail, farther ball drawn first.
pub fn render_frame(
    rig: &CameraRig,
    sample: &PenSample,
    opts: &RenderOptions,
    frame_index: u64,
) -> Result<StereoFrame, StereoError> {
    let mut balls = vec![(sample.tip, ORANGE)];
    if sample.tail_visible {
        balls.push((sample.tail, GREEN));
    }
    balls.sort_by(|a, b| b.0.z.total_cmp(&a.0.z));
    let mut frames = [Camera::Left, Camera::Right]
        .map(|_| RgbImage::from_pixel(rig.image_width, rig.image_height, BACKGROUND));
    for (img, cam) in frames.iter_mut().zip([Camera::Left, Camera::Right]) {
        for (p, color) in &balls {
            let obs = project_point(rig, *p, opts.ball_radius, cam)?;
            if !obs.is_occluded() {
                fill_disc(img, obs.x, obs.y, obs.r, *color);
            }
        }
    }
    if opts.noise_amplitude > 0 {
        let mut rng = rng_for(&[opts.seed, frame_index]);
        let a = opts.noise_amplitude as i16;
        for img in frames.iter_mut() {
            for px in img.pixels_mut() {
                for c in px.0.iter_mut() {
                    let v = *c as i16 + rng.random_range(-a..=a);
                    *c = v.clamp(0, 255) as u8;
                }
            }
        }
    }
    let [left, right] = frames;
    Ok(StereoFrame { left, right })
}

/// Lazily renders every sample; frames are produced in sample order.
pub fn render_stereo_frames<'a>(
    rig: &'a CameraRig,
    samples: &'a [PenSample],
    opts: &'a RenderOptions,
) -> impl Iterator<Item = Result<StereoFrame, StereoError>> + 'a {
    samples
        .iter()
        .enumerate()
        .map(move |(i, s)| render_frame(rig, s, opts, i as u64))
}
