//! Central finite-difference checks of every analytic gradient.
//!
//! Each layer is wrapped in a scalar objective `L = Σ wᵢ·outᵢ` with fixed
//! random weights `w`, so every output element contributes to the check.
//! The difference quotient is accumulated per output element,
//! `Σ wᵢ·(outᵢ⁺ − outᵢ⁻) / 2h`, so outputs a perturbation does not reach
//! cancel exactly instead of adding roundoff. The relative error per
//! element is `|a − n| / max(|a|, |n|, REL_FLOOR)`.

use crate::nn::{
    conv2d_backward, conv2d_forward, dropout, layer_norm_backward, layer_norm_forward, leaky_relu_backward,
    leaky_relu_inplace, linear_backward, linear_forward, max_pool_w2_backward, max_pool_w2_forward,
    softmax_cross_entropy, Conv2dGeometry, NnError, LEAKY_SLOPE,
};
use crate::slitcnn::{ModelSpec, Network, Variant};
use crate::trajectory::InterpolatedTrajectory;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
/// Below this magnitude the difference is compared absolutely. A kernel
/// gradient that is a cancelling sum over many outputs carries about
/// `1e-9` of central-difference roundoff.
pub const REL_FLOOR: f64 = 1e-3;
/// Parameters probed per whole-model tensor.
const MODEL_PROBES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic[i]` with the central difference of `f` at `x[i]` for
/// every index in `indices`.
pub fn check_indices(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
) -> (f64, usize) {
    let mut xp = x.to_vec();
    let mut worst = 0.0f64;
    let mut n = 0;
    for i in indices {
        let orig = xp[i];
        xp[i] = orig + FD_STEP;
        let up = f(&xp);
        xp[i] = orig - FD_STEP;
        let down = f(&xp);
        xp[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * FD_STEP)));
        n += 1;
    }
    (worst, n)
}

fn check_all(f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> (f64, usize) {
    check_indices(f, x, analytic, 0..x.len())
}

/// Central differences of `L = w · f(x)` for every entry of `x`, taken
/// element-wise on the outputs of `f`.
fn check_weighted(
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
    w: &[f64],
    x: &[f64],
    analytic: &[f64],
) -> (f64, usize) {
    let mut xp = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + FD_STEP;
        let up = f(&xp);
        xp[i] = orig - FD_STEP;
        let down = f(&xp);
        xp[i] = orig;
        let numeric = up
            .iter()
            .zip(&down)
            .zip(w)
            .map(|((u, d), wi)| wi * (u - d))
            .sum::<f64>()
            / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    (worst, x.len())
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn record(out: &mut Vec<GradCheck>, name: &str, (max_rel_error, checked): (f64, usize)) {
    out.push(GradCheck {
        name: name.into(),
        max_rel_error,
        checked,
    });
}

fn conv_checks(rng: &mut ChaCha8Rng, label: &str, g: Conv2dGeometry, out: &mut Vec<GradCheck>) {
    let x = uniform(rng, g.input_len(), -1.0, 1.0);
    let k = uniform(rng, g.kernel_len(), -0.5, 0.5);
    let b = uniform(rng, g.c_out, -0.5, 0.5);
    let w = uniform(rng, g.output_len(), -1.0, 1.0);
    let mut col = Vec::new();
    let mut forward = |x: &[f64], k: &[f64], b: &[f64]| {
        let mut y = vec![0.0; g.output_len()];
        conv2d_forward(x, k, b, &g, &mut col, &mut y);
        y
    };
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; b.len()];
    let mut gx = vec![0.0; x.len()];
    conv2d_backward(&x, &k, &w, &g, &mut Vec::new(), &mut gk, &mut gb, Some(&mut gx));
    record(
        out,
        &format!("{label} input"),
        check_weighted(|v| forward(v, &k, &b), &w, &x, &gx),
    );
    record(
        out,
        &format!("{label} kernels"),
        check_weighted(|v| forward(&x, v, &b), &w, &k, &gk),
    );
    record(
        out,
        &format!("{label} bias"),
        check_weighted(|v| forward(&x, &k, v), &w, &b, &gb),
    );
}

/// Per-layer checks on small random inputs, kept away from the kinks of
/// leaky ReLU and max-pool ties.
pub fn layer_checks(seed: u64) -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let g1 = Conv2dGeometry::new(1, 3, 40, 4, 3, 30).expect("valid geometry");
    conv_checks(&mut rng, "conv2d 3x30", g1, &mut out);
    let g2 = Conv2dGeometry::new(3, 1, 20, 5, 1, 8).expect("valid geometry");
    conv_checks(&mut rng, "conv2d 1x8", g2, &mut out);

    let x: Vec<f64> = (0..64)
        .map(|_| {
            let m = rng.random_range(0.1..2.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    let w = uniform(&mut rng, x.len(), -1.0, 1.0);
    let mut gx = w.clone();
    leaky_relu_backward(&x, &mut gx, LEAKY_SLOPE);
    let leaky = |v: &[f64]| {
        let mut y = v.to_vec();
        leaky_relu_inplace(&mut y, LEAKY_SLOPE);
        y
    };
    record(&mut out, "leaky_relu", check_weighted(leaky, &w, &x, &gx));

    let x = uniform(&mut rng, 2 * 30, -2.0, 3.0);
    let w = uniform(&mut rng, x.len(), -1.0, 1.0);
    let mut y = vec![0.0; x.len()];
    let inv_std = layer_norm_forward(&x, &mut y);
    let mut gx = vec![0.0; x.len()];
    layer_norm_backward(&y, inv_std, &w, &mut gx);
    let norm = |v: &[f64]| {
        let mut y = vec![0.0; v.len()];
        layer_norm_forward(v, &mut y);
        y
    };
    record(&mut out, "layer_norm", check_weighted(norm, &w, &x, &gx));

    // pairs separated by at least 0.01 so no perturbation flips an argmax
    let (rows, width) = (3, 15);
    let x: Vec<f64> = (0..rows * width)
        .map(|i| i as f64 * 0.37 % 1.0 + 0.02 * (i % 2) as f64)
        .collect();
    let pooled = rows * (width / 2);
    let w = uniform(&mut rng, pooled, -1.0, 1.0);
    let mut y = vec![0.0; pooled];
    let mut arg = vec![0; pooled];
    max_pool_w2_forward(&x, rows, width, &mut y, &mut arg);
    let mut gx = vec![0.0; x.len()];
    max_pool_w2_backward(&w, &arg, &mut gx);
    let pool = |v: &[f64]| {
        let mut y = vec![0.0; pooled];
        let mut a = vec![0; pooled];
        max_pool_w2_forward(v, rows, width, &mut y, &mut a);
        y
    };
    record(&mut out, "max_pool", check_weighted(pool, &w, &x, &gx));

    let (batch, n, m) = (3, 7, 5);
    let x = uniform(&mut rng, batch * n, -1.0, 1.0);
    let wt = uniform(&mut rng, m * n, -1.0, 1.0);
    let b = uniform(&mut rng, m, -1.0, 1.0);
    let w = uniform(&mut rng, batch * m, -1.0, 1.0);
    let lin = |x: &[f64], wt: &[f64], b: &[f64]| {
        let mut y = vec![0.0; batch * m];
        linear_forward(x, wt, b, batch, n, m, &mut y);
        y
    };
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; m];
    let mut gx = vec![0.0; x.len()];
    linear_backward(&x, &wt, &w, batch, n, m, &mut gw, &mut gb, Some(&mut gx));
    record(
        &mut out,
        "linear input",
        check_weighted(|v| lin(v, &wt, &b), &w, &x, &gx),
    );
    record(
        &mut out,
        "linear weights",
        check_weighted(|v| lin(&x, v, &b), &w, &wt, &gw),
    );
    record(
        &mut out,
        "linear bias",
        check_weighted(|v| lin(&x, &wt, v), &w, &b, &gb),
    );

    // a fixed seed fixes the mask, making dropout linear in its input
    let x = uniform(&mut rng, 50, -1.0, 1.0);
    let w = uniform(&mut rng, x.len(), -1.0, 1.0);
    let drop_seed: u64 = rng.random();
    let drop = |v: &[f64]| {
        let mut y = v.to_vec();
        dropout(&mut y, 0.25, true, &mut ChaCha8Rng::seed_from_u64(drop_seed));
        y
    };
    let mask = dropout(
        &mut x.clone(),
        0.25,
        true,
        &mut ChaCha8Rng::seed_from_u64(drop_seed),
    );
    let gx: Vec<f64> = w.iter().zip(&mask).map(|(a, b)| a * b).collect();
    record(&mut out, "dropout", check_weighted(drop, &w, &x, &gx));

    let logits = uniform(&mut rng, 6, -3.0, 3.0);
    let (_, grad, _) = softmax_cross_entropy(&logits, 2).expect("label in range");
    let xent = |v: &[f64]| softmax_cross_entropy(v, 2).expect("label in range").0;
    record(&mut out, "softmax_cross_entropy", check_all(xent, &logits, &grad));

    out
}

/// Whole-network check on a tiny spec: every parameter tensor and the
/// input, probing a random subset of entries per tensor.
pub fn model_check(variant: Variant, t: usize, classes: usize, seed: u64) -> Result<GradCheck, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ModelSpec {
        dropout: 0.0,
        ..ModelSpec::new(variant, t, classes)
    };
    let net = Network::new(spec, seed)?;
    let cols = variant.input_cols();
    let inputs: Vec<InterpolatedTrajectory> = (0..2)
        .map(|_| InterpolatedTrajectory::new(cols, uniform(&mut rng, t * cols, -0.5, 0.5)).expect("valid"))
        .collect();
    let labels: Vec<usize> = (0..inputs.len()).map(|i| i % classes).collect();
    let refs: Vec<&InterpolatedTrajectory> = inputs.iter().collect();

    let mut grads = Vec::new();
    let (_, d_inputs) = net.loss_and_input_gradients(&refs, &labels, &mut grads)?;
    let mut ws = crate::slitcnn::Workspace::default();
    let mut scratch = Vec::new();
    let mut worst = 0.0f64;
    let mut checked = 0;

    for k in 0..net.parameters().len() {
        let n = net.parameters()[k].len();
        let picks = sample(&mut rng, n, MODEL_PROBES.min(n)).into_vec();
        let base = net.parameters()[k].clone();
        let mut probe = net.clone();
        let (e, c) = check_indices(
            |v| {
                probe.parameters_mut()[k].copy_from_slice(v);
                probe
                    .loss_and_gradients(&refs, &labels, &mut ws, None, &mut scratch)
                    .expect("valid batch")
            },
            &base,
            &grads[k],
            picks,
        );
        worst = worst.max(e);
        checked += c;
    }

    let n = t * cols;
    let picks = sample(&mut rng, n, MODEL_PROBES.min(n)).into_vec();
    let (e, c) = check_indices(
        |v| {
            let moved = InterpolatedTrajectory::new(cols, v.to_vec()).expect("valid");
            net.loss_and_gradients(&[&moved, refs[1]], &labels, &mut ws, None, &mut scratch)
                .expect("valid batch")
        },
        inputs[0].data(),
        &d_inputs[0],
        picks,
    );
    worst = worst.max(e);
    checked += c;

    Ok(GradCheck {
        name: format!("model {variant} t={t}"),
        max_rel_error: worst,
        checked,
    })
}

/// The full suite: every layer plus each model variant at `t = 64` with
/// three classes.
pub fn run_suite(seed: u64) -> Result<Vec<GradCheck>, NnError> {
    let mut out = layer_checks(seed);
    for (i, v) in [Variant::TipOnly, Variant::TipTailSingle, Variant::TwoStream]
        .into_iter()
        .enumerate()
    {
        out.push(model_check(v, 64, 3, seed.wrapping_add(i as u64 + 1))?);
    }
    Ok(out)
}
