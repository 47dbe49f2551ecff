//! Cubic interpolating B-splines over a uniform parameterization.
//!
//! Knot placement follows the FITPACK interpolation convention: clamped ends
//! and interior knots at the data parameters `u[2..n-2]`, which makes the
//! curve the not-a-knot cubic interpolant of the samples.

use thiserror::Error;

const DEGREE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("cubic interpolation needs at least 4 samples, got {0}")]
    InsufficientData(usize),
    #[error("sample buffer length {len} is not a multiple of {cols} columns")]
    Ragged { len: usize, cols: usize },
}

/// A multi-channel cubic B-spline curve on `u ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct CubicBSpline {
    knots: Vec<f64>,
    /// Control coefficients, row-major `n × cols`.
    coeffs: Vec<f64>,
    cols: usize,
}

impl CubicBSpline {
    /// Interpolates row-major samples (`rows × cols`) placed at `u_i = i/(rows-1)`.
    pub fn interpolate(samples: &[f64], cols: usize) -> Result<Self, SplineError> {
        if cols == 0 || !samples.len().is_multiple_of(cols) {
            return Err(SplineError::Ragged {
                len: samples.len(),
                cols,
            });
        }
        let n = samples.len() / cols;
        if n < DEGREE + 1 {
            return Err(SplineError::InsufficientData(n));
        }
        let params: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut knots = Vec::with_capacity(n + DEGREE + 1);
        knots.extend_from_slice(&[0.0; DEGREE + 1]);
        knots.extend_from_slice(&params[2..n - 2]);
        knots.extend_from_slice(&[1.0; DEGREE + 1]);

        // Banded collocation matrix, half-bandwidth 3: band[i][j - i + 3].
        const W: usize = 2 * DEGREE + 1;
        let mut band = vec![[0.0f64; W]; n];
        for (i, &u) in params.iter().enumerate() {
            let span = find_span(&knots, n, u);
            let basis = basis_funs(&knots, span, u);
            for (k, b) in basis.iter().enumerate() {
                let j = span - DEGREE + k;
                band[i][j + DEGREE - i] = *b;
            }
        }
        let mut rhs = samples.to_vec();

        // Gaussian elimination without pivoting; B-spline collocation
        // matrices are totally positive so the pivots stay positive.
        for k in 0..n {
            let pivot = band[k][DEGREE];
            for i in k + 1..(k + DEGREE + 1).min(n) {
                let m = band[i][k + DEGREE - i] / pivot;
                if m == 0.0 {
                    continue;
                }
                for j in k..(k + DEGREE + 1).min(n) {
                    band[i][j + DEGREE - i] -= m * band[k][j + DEGREE - k];
                }
                for c in 0..cols {
                    rhs[i * cols + c] -= m * rhs[k * cols + c];
                }
            }
        }
        for k in (0..n).rev() {
            for j in k + 1..(k + DEGREE + 1).min(n) {
                let a = band[k][j + DEGREE - k];
                if a != 0.0 {
                    for c in 0..cols {
                        rhs[k * cols + c] -= a * rhs[j * cols + c];
                    }
                }
            }
            let pivot = band[k][DEGREE];
            for c in 0..cols {
                rhs[k * cols + c] /= pivot;
            }
        }
        Ok(Self {
            knots,
            coeffs: rhs,
            cols,
        })
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn num_coeffs(&self) -> usize {
        self.coeffs.len() / self.cols
    }

    /// Evaluates the curve at `u` (clamped to `[0, 1]`) into `out`.
    pub fn eval_into(&self, u: f64, out: &mut [f64]) {
        let u = u.clamp(0.0, 1.0);
        let n = self.num_coeffs();
        let span = find_span(&self.knots, n, u);
        let basis = basis_funs(&self.knots, span, u);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, b) in basis.iter().enumerate() {
            let row = span - DEGREE + k;
            for c in 0..self.cols {
                out[c] += b * self.coeffs[row * self.cols + c];
            }
        }
    }

    pub fn eval(&self, u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.eval_into(u, &mut out);
        out
    }

    /// Evaluates at `count` uniformly spaced parameters; returns `count × cols`
    /// row-major values.
    pub fn sample_uniform(&self, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count * self.cols];
        for (i, row) in out.chunks_mut(self.cols).enumerate() {
            let u = if count == 1 {
                0.0
            } else {
                i as f64 / (count - 1) as f64
            };
            self.eval_into(u, row);
        }
        out
    }
}

fn find_span(knots: &[f64], n: usize, u: f64) -> usize {
    if u >= knots[n] {
        return n - 1;
    }
    // knots[DEGREE..=n] is non-decreasing; find last k with knots[k] <= u.
    let (mut lo, mut hi) = (DEGREE, n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if u < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Non-zero cubic basis functions at `u` for the given span (Cox–de Boor).
fn basis_funs(knots: &[f64], span: usize, u: f64) -> [f64; DEGREE + 1] {
    let mut n = [0.0; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}
