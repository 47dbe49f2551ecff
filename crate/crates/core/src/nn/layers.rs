use super::{gemm, NnError, Tensor};
use rand::Rng;

pub const LEAKY_SLOPE: f64 = 0.01;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Valid-padding, stride-1 2D cross-correlation geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
}

impl Conv2dGeometry {
    pub fn new(c_in: usize, h: usize, w: usize, c_out: usize, kh: usize, kw: usize) -> Result<Self, NnError> {
        if kh == 0 || kw == 0 || kh > h || kw > w {
            return Err(NnError::Shape(format!(
                "kernel {kh}×{kw} does not fit input {h}×{w}"
            )));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
        })
    }

    pub fn out_h(&self) -> usize {
        self.h - self.kh + 1
    }

    pub fn out_w(&self) -> usize {
        self.w - self.kw + 1
    }

    /// Rows of the unfolded input: `c_in · kh · kw`.
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    /// Output positions: `out_h · out_w`.
    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn kernel_len(&self) -> usize {
        self.c_out * self.patch_len()
    }

    pub fn input_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    pub fn output_len(&self) -> usize {
        self.c_out * self.positions()
    }
}

/// Unfolds `input` into `col` (`patch_len × positions`).
pub fn im2col(input: &[f64], g: &Conv2dGeometry, col: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let npos = oh * ow;
    for c in 0..g.c_in {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut col[row * npos..(row + 1) * npos];
                for y in 0..oh {
                    let src = &input[(c * g.h + y + i) * g.w + j..][..ow];
                    dst[y * ow..(y + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
}

/// Adds the folded-back `col` gradient into `input_grad`.
pub fn col2im_add(col: &[f64], g: &Conv2dGeometry, input_grad: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let npos = oh * ow;
    for c in 0..g.c_in {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &col[row * npos..(row + 1) * npos];
                for y in 0..oh {
                    let dst = &mut input_grad[(c * g.h + y + i) * g.w + j..][..ow];
                    for (d, s) in dst.iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// `out = kernels ⋆ input + bias`. `col` is scratch of at least
/// `patch_len · positions` values.
pub fn conv2d_forward(
    input: &[f64],
    kernels: &[f64],
    bias: &[f64],
    g: &Conv2dGeometry,
    col: &mut Vec<f64>,
    out: &mut [f64],
) {
    let npos = g.positions();
    col.resize(g.patch_len() * npos, 0.0);
    im2col(input, g, col);
    for (o, b) in out.chunks_mut(npos).zip(bias) {
        o.iter_mut().for_each(|v| *v = *b);
    }
    gemm(
        g.c_out,
        g.patch_len(),
        npos,
        1.0,
        kernels,
        false,
        col,
        false,
        1.0,
        out,
    );
}

/// Accumulates kernel and bias gradients and, when requested, writes the
/// input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    input: &[f64],
    kernels: &[f64],
    grad_out: &[f64],
    g: &Conv2dGeometry,
    col: &mut Vec<f64>,
    grad_kernels: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: Option<&mut [f64]>,
) {
    let npos = g.positions();
    let plen = g.patch_len();
    col.resize(plen * npos, 0.0);
    im2col(input, g, col);
    gemm(
        g.c_out,
        npos,
        plen,
        1.0,
        grad_out,
        false,
        col,
        true,
        1.0,
        grad_kernels,
    );
    for (gb, go) in grad_bias.iter_mut().zip(grad_out.chunks(npos)) {
        *gb += go.iter().sum::<f64>();
    }
    if let Some(gi) = grad_input {
        gemm(plen, g.c_out, npos, 1.0, kernels, true, grad_out, false, 0.0, col);
        gi.iter_mut().for_each(|v| *v = 0.0);
        col2im_add(col, g, gi);
    }
}

fn conv_geometry(input: &Tensor, kernels: &Tensor) -> Result<Conv2dGeometry, NnError> {
    let (is, ks) = (input.shape(), kernels.shape());
    if is.len() != 3 || ks.len() != 4 || is[0] != ks[1] {
        return Err(NnError::Shape(format!(
            "conv2d expects C×H×W input and Cout×C×kH×kW kernels, got {is:?} and {ks:?}"
        )));
    }
    Conv2dGeometry::new(is[0], is[1], is[2], ks[0], ks[2], ks[3])
}

/// Tensor form of [`conv2d_forward`]: `C_in×H×W` ⋆ `C_out×C_in×kH×kW`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: Option<&Tensor>) -> Result<Tensor, NnError> {
    let g = conv_geometry(input, kernels)?;
    let zero = vec![0.0; g.c_out];
    let bias = match bias {
        Some(b) if b.numel() != g.c_out => {
            return Err(NnError::Shape(format!("bias needs {} values", g.c_out)))
        }
        Some(b) => b.data(),
        None => &zero,
    };
    let mut out = Tensor::zeros(&[g.c_out, g.out_h(), g.out_w()]);
    conv2d_forward(
        input.data(),
        kernels.data(),
        bias,
        &g,
        &mut Vec::new(),
        out.data_mut(),
    );
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_grads(input: &Tensor, kernels: &Tensor, grad_out: &Tensor) -> Result<Conv2dGrads, NnError> {
    let g = conv_geometry(input, kernels)?;
    if grad_out.shape() != [g.c_out, g.out_h(), g.out_w()] {
        return Err(NnError::Shape(format!(
            "output gradient shape {:?} does not match convolution",
            grad_out.shape()
        )));
    }
    let mut gk = Tensor::zeros(kernels.shape());
    let mut gb = Tensor::zeros(&[g.c_out]);
    let mut gi = Tensor::zeros(input.shape());
    conv2d_backward(
        input.data(),
        kernels.data(),
        grad_out.data(),
        &g,
        &mut Vec::new(),
        gk.data_mut(),
        gb.data_mut(),
        Some(gi.data_mut()),
    );
    Ok(Conv2dGrads {
        input: gi,
        kernels: gk,
        bias: gb,
    })
}

pub fn leaky_relu_scalar(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu_inplace(x: &mut [f64], slope: f64) {
    x.iter_mut().for_each(|v| *v = leaky_relu_scalar(*v, slope));
}

/// Scales `grad` in place by the derivative at the pre-activation `x`.
pub fn leaky_relu_backward(x: &[f64], grad: &mut [f64], slope: f64) {
    for (g, v) in grad.iter_mut().zip(x) {
        if *v < 0.0 {
            *g *= slope;
        }
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    let mut y = x.clone();
    leaky_relu_inplace(y.data_mut(), slope);
    y
}

/// Normalizes the whole buffer to zero mean and unit variance (no affine).
/// Returns the inverse standard deviation needed by the backward pass.
pub fn layer_norm_forward(x: &[f64], out: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - mean) * inv_std;
    }
    inv_std
}

/// Input gradient given the normalized output `y`.
pub fn layer_norm_backward(y: &[f64], inv_std: f64, grad_out: &[f64], grad_in: &mut [f64]) {
    let n = y.len() as f64;
    let mean_g = grad_out.iter().sum::<f64>() / n;
    let mean_gy = grad_out.iter().zip(y).map(|(g, v)| g * v).sum::<f64>() / n;
    for ((gi, g), v) in grad_in.iter_mut().zip(grad_out).zip(y) {
        *gi = inv_std * (g - mean_g - v * mean_gy);
    }
}

pub fn layer_norm(x: &Tensor) -> Result<Tensor, NnError> {
    if x.numel() < 2 {
        return Err(NnError::Shape("layer norm needs at least 2 values".into()));
    }
    let mut y = Tensor::zeros(x.shape());
    layer_norm_forward(x.data(), y.data_mut());
    Ok(y)
}

/// Non-overlapping max pooling by 2 along the last axis of `rows × w`; a
/// trailing odd element is dropped. Ties pick the first element.
pub fn max_pool_w2_forward(x: &[f64], rows: usize, w: usize, out: &mut [f64], argmax: &mut [usize]) {
    let ow = w / 2;
    for r in 0..rows {
        for j in 0..ow {
            let i = r * w + 2 * j;
            let pick = if x[i + 1] > x[i] { i + 1 } else { i };
            out[r * ow + j] = x[pick];
            argmax[r * ow + j] = pick;
        }
    }
}

/// Routes `grad_out` to the recorded maxima; `grad_in` is overwritten.
pub fn max_pool_w2_backward(grad_out: &[f64], argmax: &[usize], grad_in: &mut [f64]) {
    grad_in.iter_mut().for_each(|v| *v = 0.0);
    for (g, &i) in grad_out.iter().zip(argmax) {
        grad_in[i] += g;
    }
}

/// Tensor form: `C×H×W → C×H×⌊W/2⌋`.
pub fn max_pool_w2(x: &Tensor) -> Result<(Tensor, Vec<usize>), NnError> {
    let s = x.shape();
    let w = *s.last().ok_or_else(|| NnError::Shape("empty shape".into()))?;
    if w < 2 {
        return Err(NnError::Shape("pooling needs width ≥ 2".into()));
    }
    let rows = x.numel() / w;
    let mut shape = s.to_vec();
    *shape.last_mut().expect("non-empty") = w / 2;
    let mut out = Tensor::zeros(&shape);
    let mut arg = vec![0; out.numel()];
    max_pool_w2_forward(x.data(), rows, w, out.data_mut(), &mut arg);
    Ok((out, arg))
}

/// `out (batch × m) = x (batch × n) · wᵀ + b`, with `w` of shape `m × n`.
pub fn linear_forward(x: &[f64], w: &[f64], b: &[f64], batch: usize, n: usize, m: usize, out: &mut [f64]) {
    for row in out.chunks_mut(m).take(batch) {
        row.copy_from_slice(b);
    }
    gemm(batch, n, m, 1.0, x, false, w, true, 1.0, out);
}

/// Accumulates weight and bias gradients; writes the input gradient when
/// requested.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    batch: usize,
    n: usize,
    m: usize,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    grad_x: Option<&mut [f64]>,
) {
    gemm(m, batch, n, 1.0, grad_out, true, x, false, 1.0, grad_w);
    for row in grad_out.chunks(m).take(batch) {
        for (gb, g) in grad_b.iter_mut().zip(row) {
            *gb += g;
        }
    }
    if let Some(gx) = grad_x {
        gemm(batch, m, n, 1.0, grad_out, false, w, false, 0.0, gx);
    }
}

pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let ws = w.shape();
    if ws.len() != 2 || ws[1] != x.numel() || b.numel() != ws[0] {
        return Err(NnError::Shape(format!(
            "linear: input {:?}, weights {ws:?}, bias {:?}",
            x.shape(),
            b.shape()
        )));
    }
    let mut out = Tensor::zeros(&[ws[0]]);
    linear_forward(x.data(), w.data(), b.data(), 1, ws[1], ws[0], out.data_mut());
    Ok(out)
}

/// Inverted dropout. In training each element is zeroed with probability
/// `p` and survivors are scaled by `1/(1-p)`; the returned mask holds the
/// per-element multiplier for the backward pass. Inference is identity.
pub fn dropout<R: Rng>(x: &mut [f64], p: f64, training: bool, rng: &mut R) -> Vec<f64> {
    if !training || p <= 0.0 {
        return vec![1.0; x.len()];
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    for (v, m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    mask
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`; returns the loss,
/// the gradient on the logits and the probabilities.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>, Vec<f64>), NnError> {
    if label >= logits.len() {
        return Err(NnError::Argument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = -(logits[label] - max - log_sum);
    let probs = softmax(logits);
    let mut grad = probs.clone();
    grad[label] -= 1.0;
    Ok((loss, grad, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_output_shape_chain() {
        let input = Tensor::zeros(&[1, 3, 512]);
        let k = Tensor::zeros(&[64, 1, 3, 30]);
        assert_eq!(conv2d(&input, &k, None).unwrap().shape(), &[64, 1, 483]);
        let too_big = Tensor::zeros(&[1, 1, 4, 30]);
        assert!(conv2d(&input, &too_big, None).is_err());
    }

    #[test]
    fn ones_kernel_is_running_sum() {
        let x: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let input = Tensor::from_vec(&[1, 1, 10], x.clone()).unwrap();
        let k = Tensor::from_vec(&[1, 1, 1, 4], vec![1.0; 4]).unwrap();
        let y = conv2d(&input, &k, None).unwrap();
        let expected: Vec<f64> = x.windows(4).map(|w| w.iter().sum()).collect();
        assert_eq!(y.data(), &expected[..]);
    }

    #[test]
    fn leaky_values() {
        assert_eq!(leaky_relu_scalar(-1.0, LEAKY_SLOPE), -0.01);
        assert_eq!(leaky_relu_scalar(2.0, LEAKY_SLOPE), 2.0);
    }

    #[test]
    fn layer_norm_statistics() {
        let c = Tensor::from_vec(&[2, 1, 3], vec![4.0; 6]).unwrap();
        assert!(layer_norm(&c).unwrap().data().iter().all(|v| *v == 0.0));
        let x = Tensor::from_vec(&[2, 1, 4], vec![1., 5., -2., 3., 0.5, 8., -7., 2.]).unwrap();
        let y = layer_norm(&x).unwrap();
        let n = y.numel() as f64;
        let mean = y.data().iter().sum::<f64>() / n;
        let var = y.data().iter().map(|v| v * v).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        // eps = 1e-5 shrinks the variance slightly below 1
        let raw_var = {
            let m = x.data().iter().sum::<f64>() / n;
            x.data().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
        };
        assert!((var - raw_var / (raw_var + LAYER_NORM_EPS)).abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn pooling_values() {
        let x = Tensor::from_vec(&[1, 1, 4], vec![1., 3., 2., 2.]).unwrap();
        let (y, arg) = max_pool_w2(&x).unwrap();
        assert_eq!(y.data(), &[3., 2.]);
        assert_eq!(arg, vec![1, 2]);
        let odd = Tensor::zeros(&[2, 1, 477]);
        assert_eq!(max_pool_w2(&odd).unwrap().0.shape(), &[2, 1, 238]);
    }

    #[test]
    fn linear_identity_and_bias() {
        let x = Tensor::from_vec(&[3], vec![1., -2., 3.]).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let zero_b = Tensor::zeros(&[3]);
        assert_eq!(linear(&x, &eye, &zero_b).unwrap().data(), x.data());
        let b = Tensor::from_vec(&[3], vec![0.5, 0.25, -1.0]).unwrap();
        assert_eq!(linear(&Tensor::zeros(&[3]), &eye, &b).unwrap().data(), b.data());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = vec![1.5; 100];
        let mut a = x.clone();
        dropout(&mut a, 0.0, true, &mut rng);
        assert_eq!(a, x);
        let mut b = x.clone();
        dropout(&mut b, 0.25, false, &mut rng);
        assert_eq!(b, x);
        let mut big = vec![1.0; 100_000];
        dropout(&mut big, 0.25, true, &mut rng);
        let zeros = big.iter().filter(|v| **v == 0.0).count() as f64 / 1e5;
        assert!((zeros - 0.25).abs() < 0.01);
        assert!(big.iter().all(|v| *v == 0.0 || (*v - 1.0 / 0.75).abs() < 1e-15));
    }

    #[test]
    fn dropout_is_seeded() {
        let mut a = vec![1.0; 64];
        let mut b = vec![1.0; 64];
        dropout(&mut a, 0.25, true, &mut ChaCha8Rng::seed_from_u64(9));
        dropout(&mut b, 0.25, true, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn cross_entropy_values() {
        let (loss, grad, probs) = softmax_cross_entropy(&[0.3; 7], 2).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-9);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((grad.iter().sum::<f64>()).abs() < 1e-12);
        let (confident, _, _) = softmax_cross_entropy(&[0.0, 60.0, 0.0], 1).unwrap();
        assert!(confident < 1e-20);
        let (huge, _, p) = softmax_cross_entropy(&[1000.0, -1000.0], 0).unwrap();
        assert!(huge.is_finite() && p[0] == 1.0);
        assert!(softmax_cross_entropy(&[0.0, 1.0], 2).is_err());
    }
}
