//! Dense row-major `f64` tensors and the forward/backward rules of the four
//! layer kinds used by the embedding network: stride-1 valid convolution,
//! 2×2 max-pooling, affine maps and the rectifier.
//!
//! Every function here is pure. Backward rules take the forward input (and
//! whatever the forward pass recorded, e.g. pooling argmaxes) plus the
//! upstream gradient and return exact gradients.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    fn dims3(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Shape(format!(
                "{what} must be rank 3 [C,H,W], got {:?}",
                self.shape
            ))),
        }
    }
}

/// Gradients of a convolution w.r.t. its input, kernels and bias.
#[derive(Clone, Debug)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

/// Gradients of an affine map w.r.t. its input, weights and bias.
#[derive(Clone, Debug)]
pub struct AffineGrads {
    pub input: Vec<f64>,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// Output of [`maxpool2`] together with the flat input index each output
/// cell was taken from.
#[derive(Clone, Debug)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

struct ConvGeometry {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

fn conv_geometry(input: &Tensor, kernels: &Tensor) -> Result<ConvGeometry> {
    let (c_in, h, w) = input.dims3("conv2d input")?;
    let (c_out, kc, kh, kw) = match kernels.shape[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::Shape(format!(
                "conv2d kernels must be rank 4 [C_out,C_in,k,k], got {:?}",
                kernels.shape
            )))
        }
    };
    if kc != c_in {
        return Err(Error::Shape(format!(
            "conv2d kernels expect {kc} input channels, input has {c_in}"
        )));
    }
    if kh != kw {
        return Err(Error::Shape(format!("conv2d kernels must be square, got {kh}×{kw}")));
    }
    if kh > h || kw > w {
        return Err(Error::Shape(format!(
            "conv2d kernel {kh}×{kw} larger than input {h}×{w}"
        )));
    }
    Ok(ConvGeometry {
        c_in,
        h,
        w,
        c_out,
        k: kh,
        ho: h - kh + 1,
        wo: w - kw + 1,
    })
}

/// Unrolls every k×k receptive field into a column: rows are `(c, i, j)`,
/// columns are output positions `(y, x)`.
fn im2col(input: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let positions = g.ho * g.wo;
    let mut cols = vec![0.0; g.c_in * g.k * g.k * positions];
    for c in 0..g.c_in {
        for i in 0..g.k {
            for j in 0..g.k {
                let row = (c * g.k + i) * g.k + j;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for y in 0..g.ho {
                    let src = (c * g.h + y + i) * g.w + j;
                    dst[y * g.wo..(y + 1) * g.wo].copy_from_slice(&input[src..src + g.wo]);
                }
            }
        }
    }
    cols
}

fn col2im_add(cols: &[f64], g: &ConvGeometry, out: &mut [f64]) {
    let positions = g.ho * g.wo;
    for c in 0..g.c_in {
        for i in 0..g.k {
            for j in 0..g.k {
                let row = (c * g.k + i) * g.k + j;
                let src = &cols[row * positions..(row + 1) * positions];
                for y in 0..g.ho {
                    let base = (c * g.h + y + i) * g.w + j;
                    for (o, s) in out[base..base + g.wo]
                        .iter_mut()
                        .zip(&src[y * g.wo..(y + 1) * g.wo])
                    {
                        *o += s;
                    }
                }
            }
        }
    }
}

/// `c = alpha * a·b + beta * c` for row/column-strided operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index dgemm touches for the given
    // dimensions and strides; `c` is row-major m×n and exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Stride-1, unpadded 2-D convolution (cross-correlation, as in most deep
/// learning frameworks).
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let g = conv_geometry(input, kernels)?;
    if bias.len() != g.c_out {
        return Err(Error::Shape(format!(
            "conv2d bias has {} entries, expected {}",
            bias.len(),
            g.c_out
        )));
    }
    let positions = g.ho * g.wo;
    let ckk = g.c_in * g.k * g.k;
    let cols = im2col(&input.data, &g);
    let mut out = vec![0.0; g.c_out * positions];
    for (o, b) in bias.iter().enumerate() {
        out[o * positions..(o + 1) * positions].fill(*b);
    }
    gemm(
        g.c_out,
        ckk,
        positions,
        &kernels.data,
        (ckk, 1),
        &cols,
        (positions, 1),
        1.0,
        &mut out,
    );
    Tensor::new(vec![g.c_out, g.ho, g.wo], out)
}

/// Exact gradients of [`conv2d`] given the upstream gradient of its output.
pub fn conv2d_backward(input: &Tensor, kernels: &Tensor, upstream: &Tensor) -> Result<Conv2dGrads> {
    let g = conv_geometry(input, kernels)?;
    if upstream.shape != [g.c_out, g.ho, g.wo] {
        return Err(Error::Shape(format!(
            "conv2d upstream gradient has shape {:?}, expected {:?}",
            upstream.shape,
            [g.c_out, g.ho, g.wo]
        )));
    }
    let mut kernel_grad = Tensor::zeros(&kernels.shape);
    let mut bias_grad = vec![0.0; g.c_out];
    let mut input_grad = Tensor::zeros(&input.shape);
    conv2d_backward_acc(
        input,
        kernels,
        upstream,
        &mut kernel_grad.data,
        &mut bias_grad,
        Some(&mut input_grad.data),
    )?;
    Ok(Conv2dGrads {
        input: input_grad,
        kernels: kernel_grad,
        bias: bias_grad,
    })
}

/// Accumulating form of [`conv2d_backward`]: gradients are added into the
/// given buffers. The input gradient is skipped when `input_grad` is `None`.
pub(crate) fn conv2d_backward_acc(
    input: &Tensor,
    kernels: &Tensor,
    upstream: &Tensor,
    kernel_grad: &mut [f64],
    bias_grad: &mut [f64],
    input_grad: Option<&mut [f64]>,
) -> Result<()> {
    let g = conv_geometry(input, kernels)?;
    let positions = g.ho * g.wo;
    let ckk = g.c_in * g.k * g.k;
    let up = &upstream.data;
    for (o, b) in bias_grad.iter_mut().enumerate() {
        *b += up[o * positions..(o + 1) * positions].iter().sum::<f64>();
    }
    let cols = im2col(&input.data, &g);
    // dK[o, r] += Σ_p up[o, p] · cols[r, p]
    gemm(
        g.c_out,
        positions,
        ckk,
        up,
        (positions, 1),
        &cols,
        (1, positions),
        1.0,
        kernel_grad,
    );
    if let Some(input_grad) = input_grad {
        // dcols[r, p] = Σ_o K[o, r] · up[o, p]
        let mut dcols = vec![0.0; ckk * positions];
        gemm(
            ckk,
            g.c_out,
            positions,
            &kernels.data,
            (1, ckk),
            up,
            (positions, 1),
            0.0,
            &mut dcols,
        );
        col2im_add(&dcols, &g, input_grad);
    }
    Ok(())
}

/// 2×2 max-pooling with stride 2. Ties go to the first cell of the window in
/// row-major order.
pub fn maxpool2(input: &Tensor) -> Result<Pooled> {
    let (c, h, w) = input.dims3("maxpool2 input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "maxpool2 needs even extents, got {h}×{w}"
        )));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut argmax = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let top = (ch * h + 2 * y) * w + 2 * x;
                let window = [top, top + 1, top + w, top + w + 1];
                let mut best = window[0];
                for &idx in &window[1..] {
                    if input.data[idx] > input.data[best] {
                        best = idx;
                    }
                }
                out.push(input.data[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![c, ho, wo], out)?,
        argmax,
    })
}

/// Routes each upstream value to the input cell recorded in `argmax`.
pub fn maxpool2_backward(input_shape: &[usize], argmax: &[usize], upstream: &Tensor) -> Result<Tensor> {
    if argmax.len() != upstream.len() {
        return Err(Error::Shape(format!(
            "maxpool2 backward: {} argmax entries for {} upstream values",
            argmax.len(),
            upstream.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(&upstream.data) {
        let cell = grad
            .data
            .get_mut(idx)
            .ok_or_else(|| Error::Shape(format!("argmax {idx} outside input {input_shape:?}")))?;
        *cell += g;
    }
    Ok(grad)
}

fn affine_dims(input: &[f64], weights: &Tensor, bias: Option<&[f64]>) -> Result<(usize, usize)> {
    let (m, n) = match weights.shape[..] {
        [m, n] => (m, n),
        _ => {
            return Err(Error::Shape(format!(
                "affine weights must be a matrix, got {:?}",
                weights.shape
            )))
        }
    };
    if input.len() != n {
        return Err(Error::Shape(format!(
            "affine input has {} entries, weights expect {n}",
            input.len()
        )));
    }
    if let Some(b) = bias {
        if b.len() != m {
            return Err(Error::Shape(format!(
                "affine bias has {} entries, expected {m}",
                b.len()
            )));
        }
    }
    Ok((m, n))
}

/// `W·input + b`.
pub fn affine(input: &[f64], weights: &Tensor, bias: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = affine_dims(input, weights, Some(bias))?;
    let mut out = bias.to_vec();
    gemm(m, n, 1, &weights.data, (n, 1), input, (1, 1), 1.0, &mut out);
    Ok(out)
}

/// Exact gradients of [`affine`]: `∂/∂W = upstream ⊗ input`,
/// `∂/∂input = Wᵀ·upstream`, `∂/∂b = upstream`.
pub fn affine_backward(input: &[f64], weights: &Tensor, upstream: &[f64]) -> Result<AffineGrads> {
    let mut w_grad = Tensor::zeros(&weights.shape);
    let mut b_grad = vec![0.0; upstream.len()];
    let mut in_grad = vec![0.0; input.len()];
    affine_backward_acc(
        input,
        weights,
        upstream,
        &mut w_grad.data,
        &mut b_grad,
        Some(&mut in_grad),
    )?;
    Ok(AffineGrads {
        input: in_grad,
        weights: w_grad,
        bias: b_grad,
    })
}

pub(crate) fn affine_backward_acc(
    input: &[f64],
    weights: &Tensor,
    upstream: &[f64],
    w_grad: &mut [f64],
    b_grad: &mut [f64],
    input_grad: Option<&mut [f64]>,
) -> Result<()> {
    let (m, n) = affine_dims(input, weights, None)?;
    if upstream.len() != m {
        return Err(Error::Shape(format!(
            "affine upstream has {} entries, expected {m}",
            upstream.len()
        )));
    }
    for (b, u) in b_grad.iter_mut().zip(upstream) {
        *b += u;
    }
    for (row, &u) in w_grad.chunks_exact_mut(n).zip(upstream) {
        if u != 0.0 {
            for (g, x) in row.iter_mut().zip(input) {
                *g += u * x;
            }
        }
    }
    if let Some(input_grad) = input_grad {
        gemm(n, m, 1, &weights.data, (1, n), upstream, (1, 1), 1.0, input_grad);
    }
    Ok(())
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: relu_slice(&input.data),
    }
}

pub(crate) fn relu_slice(input: &[f64]) -> Vec<f64> {
    input.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

/// Upstream gradient masked by `x > 0`; the gradient at exactly zero is zero.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if input.shape != upstream.shape {
        return Err(Error::Shape(format!(
            "relu backward: input {:?} vs upstream {:?}",
            input.shape, upstream.shape
        )));
    }
    Ok(Tensor {
        shape: input.shape.clone(),
        data: relu_backward_slice(&input.data, &upstream.data),
    })
}

pub(crate) fn relu_backward_slice(input: &[f64], upstream: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(upstream)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// Default central-difference step for [`grad_check`].
pub const GRAD_CHECK_EPS: f64 = 1e-5;

/// Compares an analytic gradient of the scalar function `f` at `x` against
/// central differences and returns the largest relative error
/// `|a − c| / max(1e-6, |a| + |c|)` over all coordinates.
pub fn grad_check<F>(mut f: F, x: &Tensor, analytic: &Tensor, eps: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("grad_check eps must be > 0, got {eps}")));
    }
    if analytic.shape != x.shape {
        return Err(Error::Shape(format!(
            "analytic gradient {:?} does not match point {:?}",
            analytic.shape, x.shape
        )));
    }
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "function value at coordinate {i} is not finite"
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.data[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
