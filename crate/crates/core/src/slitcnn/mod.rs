//! Sliding-time CNN for fixed-length tip/tail trajectories.
//!
//! Each stream sees a `rows × t` map (coordinates × time). Its first kernel
//! spans every coordinate row and 30 time steps, so it slides along time
//! only:
//!
//! ```text
//! 1×rows×t ─conv(rows×30, 64)─ leaky ─ layernorm ─conv(1×8, 128)─ leaky
//!          ─ maxpool(2 along t) ─ flatten ─ leaky ─ fc(128) ─ dropout
//! ```
//!
//! The two-stream variant feeds tip coordinates to one stream and tail
//! coordinates to the other, concatenates the two 128-vectors and applies
//! `fc(512) ─ leaky ─ fc(classes) ─ softmax`. The single-stream variants
//! (tip only, or tip and tail stacked as 6 rows) use the same head on their
//! single 128-vector.

mod train;

pub use train::{train, train_with_progress, EpochRecord, Example, TrainedModel};

/// Untrained model with seeded initialization.
pub fn build_model(spec: ModelSpec, seed: u64) -> Result<TrainedModel, NnError> {
    TrainedModel::new(spec, seed)
}

use crate::nn::{
    conv2d_backward, conv2d_forward, dropout, layer_norm_backward, layer_norm_forward, leaky_relu_backward,
    leaky_relu_inplace, linear_backward, linear_forward, max_pool_w2_backward, max_pool_w2_forward, softmax,
    softmax_cross_entropy, Conv2dGeometry, NnError, LEAKY_SLOPE,
};
use crate::trajectory::InterpolatedTrajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// One stream over the tip's `(X, Y, Z)`.
    TipOnly,
    /// One stream over tip and tail stacked as six rows.
    TipTailSingle,
    /// Tip stream and tail stream fused after per-stream FC layers.
    TwoStream,
}

impl Variant {
    pub fn tag(&self) -> &'static str {
        match self {
            Variant::TipOnly => "tip_only",
            Variant::TipTailSingle => "tiptail_single",
            Variant::TwoStream => "two_stream",
        }
    }

    pub fn streams(&self) -> usize {
        match self {
            Variant::TwoStream => 2,
            _ => 1,
        }
    }

    /// Coordinate rows seen by each stream.
    pub fn rows(&self) -> usize {
        match self {
            Variant::TipTailSingle => 6,
            _ => 3,
        }
    }

    /// Input columns a trajectory must provide.
    pub fn input_cols(&self) -> usize {
        match self {
            Variant::TipOnly => 3,
            _ => 6,
        }
    }

    /// First trajectory column consumed by stream `s`.
    fn column_offset(&self, s: usize) -> usize {
        3 * s
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tip_only" | "tip-only" => Ok(Variant::TipOnly),
            "tiptail_single" | "tiptail" | "tip-tail" => Ok(Variant::TipTailSingle),
            "two_stream" | "two-stream" => Ok(Variant::TwoStream),
            other => Err(NnError::Argument(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub t: usize,
    pub num_classes: usize,
    pub conv1_width: usize,
    pub conv1_channels: usize,
    pub conv2_width: usize,
    pub conv2_channels: usize,
    pub stream_fc: usize,
    pub fuse_fc: usize,
    pub dropout: f64,
}

impl ModelSpec {
    pub fn new(variant: Variant, t: usize, num_classes: usize) -> Self {
        Self {
            variant,
            t,
            num_classes,
            conv1_width: 30,
            conv1_channels: 64,
            conv2_width: 8,
            conv2_channels: 128,
            stream_fc: 128,
            fuse_fc: 512,
            dropout: 0.25,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.t < 64 {
            return Err(NnError::Argument(format!("t = {} < 64", self.t)));
        }
        if self.num_classes < 2 {
            return Err(NnError::Argument("need at least 2 classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Argument("dropout must lie in [0, 1)".into()));
        }
        let sizes = [
            self.conv1_width,
            self.conv1_channels,
            self.conv2_width,
            self.conv2_channels,
            self.stream_fc,
            self.fuse_fc,
        ];
        if sizes.contains(&0) {
            return Err(NnError::Argument("layer sizes must be positive".into()));
        }
        if self.conv1_width + self.conv2_width + 1 > self.t {
            return Err(NnError::Shape("kernels longer than the sequence".into()));
        }
        Ok(())
    }

    pub fn conv1(&self) -> Conv2dGeometry {
        Conv2dGeometry {
            c_in: 1,
            h: self.variant.rows(),
            w: self.t,
            c_out: self.conv1_channels,
            kh: self.variant.rows(),
            kw: self.conv1_width,
        }
    }

    pub fn conv2(&self) -> Conv2dGeometry {
        Conv2dGeometry {
            c_in: self.conv1_channels,
            h: 1,
            w: self.conv1().out_w(),
            c_out: self.conv2_channels,
            kh: 1,
            kw: self.conv2_width,
        }
    }

    /// Time steps after pooling.
    pub fn pooled_width(&self) -> usize {
        self.conv2().out_w() / 2
    }

    pub fn flat_len(&self) -> usize {
        self.conv2_channels * self.pooled_width()
    }

    /// Named parameter shapes in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let rows = self.variant.rows();
        for s in 0..self.variant.streams() {
            let p = format!("stream{s}");
            out.push((
                format!("{p}.conv1.weight"),
                vec![self.conv1_channels, 1, rows, self.conv1_width],
            ));
            out.push((format!("{p}.conv1.bias"), vec![self.conv1_channels]));
            out.push((
                format!("{p}.conv2.weight"),
                vec![self.conv2_channels, self.conv1_channels, 1, self.conv2_width],
            ));
            out.push((format!("{p}.conv2.bias"), vec![self.conv2_channels]));
            out.push((format!("{p}.fc.weight"), vec![self.stream_fc, self.flat_len()]));
            out.push((format!("{p}.fc.bias"), vec![self.stream_fc]));
        }
        let fused = self.variant.streams() * self.stream_fc;
        out.push(("fuse.weight".into(), vec![self.fuse_fc, fused]));
        out.push(("fuse.bias".into(), vec![self.fuse_fc]));
        out.push(("out.weight".into(), vec![self.num_classes, self.fuse_fc]));
        out.push(("out.bias".into(), vec![self.num_classes]));
        out
    }

    /// Total learnable values.
    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

const PER_STREAM: usize = 6;

/// Parameter tensor indices within one stream block.
const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;
const FC_W: usize = 4;
const FC_B: usize = 5;

/// Per-sample gradients of the loss with respect to the input.
type InputGrads = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    /// Flat parameter tensors in [`ModelSpec::parameter_shapes`] order.
    params: Vec<Vec<f64>>,
}

/// Per-sample, per-stream activations kept for the backward pass.
#[derive(Default)]
struct StreamCache {
    input: Vec<f64>,
    z1: Vec<f64>,
    n1: Vec<f64>,
    inv_std1: f64,
    z2: Vec<f64>,
    pooled: Vec<f64>,
    argmax: Vec<usize>,
}

/// Scratch buffers reused across forward/backward calls.
#[derive(Default)]
pub struct Workspace {
    col: Vec<f64>,
    caches: Vec<StreamCache>,
}

impl Network {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                if name.ends_with(".bias") {
                    return vec![0.0; n];
                }
                let fan_in: usize = shape[1..].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            })
            .collect();
        Ok(Self { spec, params })
    }

    /// Rebuilds a network from named tensors (e.g. a checkpoint).
    pub fn from_parameters(spec: ModelSpec, params: Vec<Vec<f64>>) -> Result<Self, NnError> {
        spec.validate()?;
        let shapes = spec.parameter_shapes();
        if shapes.len() != params.len() {
            return Err(NnError::Shape(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in shapes.iter().zip(&params) {
            if shape.iter().product::<usize>() != p.len() {
                return Err(NnError::Shape(format!("{name}: wrong size {}", p.len())));
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn parameters(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    fn stream_param(&self, s: usize, k: usize) -> &[f64] {
        &self.params[s * PER_STREAM + k]
    }

    fn head_index(&self) -> usize {
        self.spec.variant.streams() * PER_STREAM
    }

    fn check_input(&self, traj: &InterpolatedTrajectory) -> Result<(), NnError> {
        if traj.len() != self.spec.t {
            return Err(NnError::Shape(format!(
                "trajectory has {} rows, model expects {}",
                traj.len(),
                self.spec.t
            )));
        }
        if traj.cols() < self.spec.variant.input_cols() {
            return Err(NnError::Shape(format!(
                "{} needs {} columns, trajectory has {}",
                self.spec.variant,
                self.spec.variant.input_cols(),
                traj.cols()
            )));
        }
        Ok(())
    }

    /// Stream input as `rows × t` (coordinate-major).
    fn stream_input(&self, traj: &InterpolatedTrajectory, s: usize, out: &mut Vec<f64>) {
        let rows = self.spec.variant.rows();
        let t = self.spec.t;
        let off = self.spec.variant.column_offset(s);
        out.resize(rows * t, 0.0);
        for (j, r) in traj.rows().enumerate() {
            for k in 0..rows {
                out[k * t + j] = r[off + k];
            }
        }
    }

    /// Runs one stream up to the flattened, activated feature vector.
    fn stream_forward(&self, s: usize, cache: &mut StreamCache, col: &mut Vec<f64>, flat: &mut [f64]) {
        let (g1, g2) = (self.spec.conv1(), self.spec.conv2());
        cache.z1.resize(g1.output_len(), 0.0);
        conv2d_forward(
            &cache.input,
            self.stream_param(s, CONV1_W),
            self.stream_param(s, CONV1_B),
            &g1,
            col,
            &mut cache.z1,
        );
        let mut a1 = cache.z1.clone();
        leaky_relu_inplace(&mut a1, LEAKY_SLOPE);
        cache.n1.resize(a1.len(), 0.0);
        cache.inv_std1 = layer_norm_forward(&a1, &mut cache.n1);

        cache.z2.resize(g2.output_len(), 0.0);
        conv2d_forward(
            &cache.n1,
            self.stream_param(s, CONV2_W),
            self.stream_param(s, CONV2_B),
            &g2,
            col,
            &mut cache.z2,
        );
        let mut a2 = cache.z2.clone();
        leaky_relu_inplace(&mut a2, LEAKY_SLOPE);
        let flat_len = self.spec.flat_len();
        cache.pooled.resize(flat_len, 0.0);
        cache.argmax.resize(flat_len, 0);
        max_pool_w2_forward(&a2, g2.c_out, g2.out_w(), &mut cache.pooled, &mut cache.argmax);
        flat.copy_from_slice(&cache.pooled);
        leaky_relu_inplace(flat, LEAKY_SLOPE);
    }

    /// Backpropagates the flattened-feature gradient through one stream,
    /// accumulating parameter gradients. Returns the input gradient when
    /// `want_input` is set.
    fn stream_backward(
        &self,
        s: usize,
        cache: &StreamCache,
        col: &mut Vec<f64>,
        d_flat: &mut [f64],
        grads: &mut [Vec<f64>],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (g1, g2) = (self.spec.conv1(), self.spec.conv2());
        leaky_relu_backward(&cache.pooled, d_flat, LEAKY_SLOPE);
        let mut d_a2 = vec![0.0; g2.output_len()];
        max_pool_w2_backward(d_flat, &cache.argmax, &mut d_a2);
        leaky_relu_backward(&cache.z2, &mut d_a2, LEAKY_SLOPE);
        let base = s * PER_STREAM;
        let mut d_n1 = vec![0.0; g1.output_len()];
        {
            let (w_part, b_part) = grads.split_at_mut(base + CONV2_B);
            conv2d_backward(
                &cache.n1,
                self.stream_param(s, CONV2_W),
                &d_a2,
                &g2,
                col,
                &mut w_part[base + CONV2_W],
                &mut b_part[0],
                Some(&mut d_n1),
            );
        }
        let mut d_a1 = vec![0.0; d_n1.len()];
        layer_norm_backward(&cache.n1, cache.inv_std1, &d_n1, &mut d_a1);
        leaky_relu_backward(&cache.z1, &mut d_a1, LEAKY_SLOPE);
        let mut d_input = want_input.then(|| vec![0.0; g1.input_len()]);
        let (w_part, b_part) = grads.split_at_mut(base + CONV1_B);
        conv2d_backward(
            &cache.input,
            self.stream_param(s, CONV1_W),
            &d_a1,
            &g1,
            col,
            &mut w_part[base + CONV1_W],
            &mut b_part[0],
            d_input.as_deref_mut(),
        );
        d_input
    }

    /// Forward pass over a batch up to the logits. When `dropout_rng` is
    /// given, dropout runs in training mode.
    fn forward_batch(
        &self,
        batch: &[&InterpolatedTrajectory],
        ws: &mut Workspace,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BatchState, NnError> {
        for t in batch {
            self.check_input(t)?;
        }
        let spec = &self.spec;
        let (nb, ns) = (batch.len(), spec.variant.streams());
        let flat_len = spec.flat_len();
        ws.caches.resize_with(nb * ns, StreamCache::default);
        let mut flats = vec![vec![0.0; nb * flat_len]; ns];
        let mut hidden = vec![vec![0.0; nb * spec.stream_fc]; ns];
        let mut masks = Vec::with_capacity(ns);
        let mut rng = dropout_rng;
        for s in 0..ns {
            for (i, traj) in batch.iter().enumerate() {
                let cache = &mut ws.caches[i * ns + s];
                self.stream_input(traj, s, &mut cache.input);
                self.stream_forward(
                    s,
                    cache,
                    &mut ws.col,
                    &mut flats[s][i * flat_len..(i + 1) * flat_len],
                );
            }
            linear_forward(
                &flats[s],
                self.stream_param(s, FC_W),
                self.stream_param(s, FC_B),
                nb,
                flat_len,
                spec.stream_fc,
                &mut hidden[s],
            );
            let mask = match rng.as_deref_mut() {
                Some(r) => dropout(&mut hidden[s], spec.dropout, true, r),
                None => vec![1.0; hidden[s].len()],
            };
            masks.push(mask);
        }
        let fused_len = ns * spec.stream_fc;
        let mut fused = vec![0.0; nb * fused_len];
        for i in 0..nb {
            for s in 0..ns {
                fused[i * fused_len + s * spec.stream_fc..][..spec.stream_fc]
                    .copy_from_slice(&hidden[s][i * spec.stream_fc..(i + 1) * spec.stream_fc]);
            }
        }
        let h = self.head_index();
        let mut z3 = vec![0.0; nb * spec.fuse_fc];
        linear_forward(
            &fused,
            &self.params[h],
            &self.params[h + 1],
            nb,
            fused_len,
            spec.fuse_fc,
            &mut z3,
        );
        let mut a3 = z3.clone();
        leaky_relu_inplace(&mut a3, LEAKY_SLOPE);
        let mut logits = vec![0.0; nb * spec.num_classes];
        linear_forward(
            &a3,
            &self.params[h + 2],
            &self.params[h + 3],
            nb,
            spec.fuse_fc,
            spec.num_classes,
            &mut logits,
        );
        Ok(BatchState {
            flats,
            masks,
            fused,
            z3,
            a3,
            logits,
        })
    }

    /// Class-probability rows for a batch, inference mode.
    pub fn predict_proba(&self, batch: &[&InterpolatedTrajectory]) -> Result<Vec<Vec<f64>>, NnError> {
        let mut ws = Workspace::default();
        self.predict_proba_with(batch, &mut ws)
    }

    pub fn predict_proba_with(
        &self,
        batch: &[&InterpolatedTrajectory],
        ws: &mut Workspace,
    ) -> Result<Vec<Vec<f64>>, NnError> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(32) {
            let st = self.forward_batch(chunk, ws, None)?;
            out.extend(st.logits.chunks(self.spec.num_classes).map(softmax));
        }
        Ok(out)
    }

    /// Mean cross-entropy over the batch and its parameter gradients, which
    /// overwrite `grads`. Dropout is active only when `dropout_rng` is given.
    pub fn loss_and_gradients(
        &self,
        batch: &[&InterpolatedTrajectory],
        labels: &[usize],
        ws: &mut Workspace,
        dropout_rng: Option<&mut ChaCha8Rng>,
        grads: &mut Vec<Vec<f64>>,
    ) -> Result<f64, NnError> {
        self.backward_impl(batch, labels, ws, dropout_rng, grads, false)
            .map(|(loss, _)| loss)
    }

    /// As [`Self::loss_and_gradients`], also returning the gradient with
    /// respect to every input trajectory value (row-major `t × cols`).
    pub fn loss_and_input_gradients(
        &self,
        batch: &[&InterpolatedTrajectory],
        labels: &[usize],
        grads: &mut Vec<Vec<f64>>,
    ) -> Result<(f64, Vec<Vec<f64>>), NnError> {
        let mut ws = Workspace::default();
        let (loss, d_inputs) = self.backward_impl(batch, labels, &mut ws, None, grads, true)?;
        Ok((loss, d_inputs.expect("requested")))
    }

    fn backward_impl(
        &self,
        batch: &[&InterpolatedTrajectory],
        labels: &[usize],
        ws: &mut Workspace,
        dropout_rng: Option<&mut ChaCha8Rng>,
        grads: &mut Vec<Vec<f64>>,
        want_input: bool,
    ) -> Result<(f64, Option<InputGrads>), NnError> {
        if batch.len() != labels.len() || batch.is_empty() {
            return Err(NnError::Argument(format!(
                "{} samples but {} labels",
                batch.len(),
                labels.len()
            )));
        }
        let spec = self.spec;
        grads.resize_with(self.params.len(), Vec::new);
        for (g, p) in grads.iter_mut().zip(&self.params) {
            g.clear();
            g.resize(p.len(), 0.0);
        }
        let st = self.forward_batch(batch, ws, dropout_rng)?;
        let (nb, ns, nc) = (batch.len(), spec.variant.streams(), spec.num_classes);
        let scale = 1.0 / nb as f64;
        let mut loss = 0.0;
        let mut d_logits = vec![0.0; nb * nc];
        for (i, &label) in labels.iter().enumerate() {
            let (l, g, _) = softmax_cross_entropy(&st.logits[i * nc..(i + 1) * nc], label)?;
            loss += l * scale;
            for (d, gv) in d_logits[i * nc..(i + 1) * nc].iter_mut().zip(g) {
                *d = gv * scale;
            }
        }

        let h = self.head_index();
        let mut d_a3 = vec![0.0; nb * spec.fuse_fc];
        {
            let (lo, hi) = grads.split_at_mut(h + 3);
            linear_backward(
                &st.a3,
                &self.params[h + 2],
                &d_logits,
                nb,
                spec.fuse_fc,
                nc,
                &mut lo[h + 2],
                &mut hi[0],
                Some(&mut d_a3),
            );
        }
        leaky_relu_backward(&st.z3, &mut d_a3, LEAKY_SLOPE);
        let fused_len = ns * spec.stream_fc;
        let mut d_fused = vec![0.0; nb * fused_len];
        {
            let (lo, hi) = grads.split_at_mut(h + 1);
            linear_backward(
                &st.fused,
                &self.params[h],
                &d_a3,
                nb,
                fused_len,
                spec.fuse_fc,
                &mut lo[h],
                &mut hi[0],
                Some(&mut d_fused),
            );
        }

        let flat_len = spec.flat_len();
        let mut d_inputs = want_input.then(|| vec![vec![0.0; spec.t * spec.variant.input_cols()]; nb]);
        for s in 0..ns {
            let mut d_hidden = vec![0.0; nb * spec.stream_fc];
            for i in 0..nb {
                for k in 0..spec.stream_fc {
                    let idx = i * spec.stream_fc + k;
                    d_hidden[idx] = d_fused[i * fused_len + s * spec.stream_fc + k] * st.masks[s][idx];
                }
            }
            let mut d_flat = vec![0.0; nb * flat_len];
            {
                let base = s * PER_STREAM;
                let (lo, hi) = grads.split_at_mut(base + FC_B);
                linear_backward(
                    &st.flats[s],
                    self.stream_param(s, FC_W),
                    &d_hidden,
                    nb,
                    flat_len,
                    spec.stream_fc,
                    &mut lo[base + FC_W],
                    &mut hi[0],
                    Some(&mut d_flat),
                );
            }
            for i in 0..nb {
                let cache = &ws.caches[i * ns + s];
                let d_in = self.stream_backward(
                    s,
                    cache,
                    &mut ws.col,
                    &mut d_flat[i * flat_len..(i + 1) * flat_len],
                    grads,
                    want_input,
                );
                if let (Some(all), Some(d)) = (d_inputs.as_mut(), d_in) {
                    let rows = spec.variant.rows();
                    let cols = spec.variant.input_cols();
                    let off = spec.variant.column_offset(s);
                    for k in 0..rows {
                        for j in 0..spec.t {
                            all[i][j * cols + off + k] += d[k * spec.t + j];
                        }
                    }
                }
            }
        }
        Ok((loss, d_inputs))
    }
}

struct BatchState {
    flats: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    fused: Vec<f64>,
    z3: Vec<f64>,
    a3: Vec<f64>,
    logits: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_traj(t: usize, cols: usize, seed: u64) -> InterpolatedTrajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * cols).map(|_| rng.random_range(-0.3..0.3)).collect();
        InterpolatedTrajectory::new(cols, data).unwrap()
    }

    #[test]
    fn shape_chain_at_512() {
        let spec = ModelSpec::new(Variant::TwoStream, 512, 45);
        assert_eq!(spec.conv1().out_w(), 483);
        assert_eq!(spec.conv1().output_len(), 64 * 483);
        assert_eq!(spec.conv2().out_w(), 476);
        assert_eq!(spec.pooled_width(), 238);
        assert_eq!(spec.flat_len(), 30464);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(Variant::TipOnly, 63, 3).validate().is_err());
        assert!(ModelSpec::new(Variant::TipOnly, 64, 1).validate().is_err());
        assert!(Network::new(ModelSpec::new(Variant::TipOnly, 64, 2), 0).is_ok());
    }

    #[test]
    fn variant_parsing() {
        for v in [Variant::TipOnly, Variant::TipTailSingle, Variant::TwoStream] {
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("two-stream".parse::<Variant>().unwrap(), Variant::TwoStream);
        assert!("three".parse::<Variant>().is_err());
    }

    #[test]
    fn probabilities_sum_to_one_and_batch_is_equivariant() {
        let net = Network::new(ModelSpec::new(Variant::TwoStream, 64, 4), 1).unwrap();
        let a = random_traj(64, 6, 1);
        let b = random_traj(64, 6, 2);
        let p = net.predict_proba(&[&a, &b, &a]).unwrap();
        for row in &p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(p[0], p[2]);
        let q = net.predict_proba(&[&b, &a]).unwrap();
        assert_eq!(q[0], p[1]);
        assert_eq!(q[1], p[0]);
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let net = Network::new(ModelSpec::new(Variant::TipOnly, 64, 3), 1).unwrap();
        assert!(matches!(
            net.predict_proba(&[&random_traj(65, 3, 0)]),
            Err(NnError::Shape(_))
        ));
        let six = Network::new(ModelSpec::new(Variant::TipTailSingle, 64, 3), 1).unwrap();
        assert!(six.predict_proba(&[&random_traj(64, 3, 0)]).is_err());
        // tip-only accepts tip-tail input and reads the tip columns
        let full = random_traj(64, 6, 3);
        assert_eq!(
            net.predict_proba(&[&full]).unwrap(),
            net.predict_proba(&[&full.tip_only()]).unwrap()
        );
    }

    #[test]
    fn two_stream_symmetry() {
        let spec = ModelSpec::new(Variant::TwoStream, 64, 3);
        let net = Network::new(spec, 5).unwrap();
        let x = random_traj(64, 6, 9);
        let swapped_input: Vec<f64> = x
            .rows()
            .flat_map(|r| [r[3], r[4], r[5], r[0], r[1], r[2]])
            .collect();
        let xs = InterpolatedTrajectory::new(6, swapped_input).unwrap();
        let mut params = net.parameters().to_vec();
        for k in 0..PER_STREAM {
            params.swap(k, PER_STREAM + k);
        }
        // the fuse layer's two input blocks follow the streams
        let fuse = &mut params[2 * PER_STREAM];
        let (fc, width) = (spec.stream_fc, 2 * spec.stream_fc);
        for row in fuse.chunks_mut(width) {
            let (a, b) = row.split_at_mut(fc);
            a.swap_with_slice(b);
        }
        let swapped = Network::from_parameters(spec, params).unwrap();
        let p = net.predict_proba(&[&x]).unwrap();
        let q = swapped.predict_proba(&[&xs]).unwrap();
        for (a, b) in p[0].iter().zip(&q[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_seeded() {
        let spec = ModelSpec::new(Variant::TipOnly, 64, 3);
        assert_eq!(Network::new(spec, 3).unwrap(), Network::new(spec, 3).unwrap());
        assert_ne!(Network::new(spec, 3).unwrap(), Network::new(spec, 4).unwrap());
    }
}
