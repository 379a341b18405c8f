//! Dense H x W x 3 tensors and the depthwise ops the network is built from:
//! depthwise 2-D convolution with zero-filled same padding, ReLU, elementwise
//! add, and their exact backward passes.
//!
//! All ops are pure functions; channels never mix.

use crate::error::{Error, Result};

/// Every tensor in the pipeline has exactly three channels (RGB).
pub const CHANNELS: usize = 3;

/// Row-major (row, column, channel) tensor of f32 values.
///
/// Doubles as the spec's `ImageTensor` (values in [0,1], see
/// [`Tensor::validate_image`]) and `ActivationMap` (any finite values).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * CHANNELS],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * CHANNELS {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{} = {} values", height, width, CHANNELS, height * width * CHANNELS),
                actual: format!("{} values", data.len()),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor data at index {i}")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, CHANNELS)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * CHANNELS + c] = v;
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Checks the image contract: all values finite and in [0,1].
    pub fn validate_image(&self) -> Result<()> {
        for (i, &v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("image data at index {i}")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { index: i, value: v });
            }
        }
        Ok(())
    }

    pub fn clamped(&self, lo: f32, hi: f32) -> Tensor {
        Tensor {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, CHANNELS)
    }
}

/// Per-channel k x k weights plus one bias per channel for a depthwise layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthwiseKernel {
    size: usize,
    /// weights[c] is a row-major k x k plane for channel c.
    weights: [Vec<f32>; CHANNELS],
    bias: [f32; CHANNELS],
}

impl DepthwiseKernel {
    pub fn new(size: usize, weights: [Vec<f32>; CHANNELS], bias: [f32; CHANNELS]) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::InvalidKernel(format!("size must be odd, got {size}")));
        }
        for (c, plane) in weights.iter().enumerate() {
            if plane.len() != size * size {
                return Err(Error::InvalidKernel(format!(
                    "channel {c} has {} weights, expected {}",
                    plane.len(),
                    size * size
                )));
            }
            if plane.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("kernel weights channel {c}")));
            }
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel bias".into()));
        }
        Ok(Self { size, weights, bias })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        let plane = vec![0.0; size * size];
        Self::new(size, [plane.clone(), plane.clone(), plane], [0.0; CHANNELS])
    }

    /// Identity kernel: center weight 1, everything else 0, zero bias.
    pub fn delta(size: usize) -> Result<Self> {
        let mut plane = vec![0.0; size * size];
        let r = size / 2;
        plane[r * size + r] = 1.0;
        Self::new(size, [plane.clone(), plane.clone(), plane], [0.0; CHANNELS])
    }

    /// Same plane replicated into all three channels, zero bias.
    pub fn replicated(size: usize, plane: &[f32]) -> Result<Self> {
        Self::new(size, [plane.to_vec(), plane.to_vec(), plane.to_vec()], [0.0; CHANNELS])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[Vec<f32>; CHANNELS] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f32>; CHANNELS] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f32; CHANNELS] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32; CHANNELS] {
        &mut self.bias
    }

    /// Weights plus biases.
    pub fn scalar_count(&self) -> usize {
        CHANNELS * self.size * self.size + CHANNELS
    }
}

/// Gradients for one depthwise kernel, shape-congruent with [`DepthwiseKernel`].
#[derive(Clone, Debug, PartialEq)]
pub struct KernelGrad {
    pub weights: [Vec<f32>; CHANNELS],
    pub bias: [f32; CHANNELS],
}

impl KernelGrad {
    pub fn zeros(size: usize) -> Self {
        let plane = vec![0.0; size * size];
        Self {
            weights: [plane.clone(), plane.clone(), plane],
            bias: [0.0; CHANNELS],
        }
    }
}

/// Depthwise 2-D convolution, stride 1, zero-filled same padding.
///
/// output[y][x][c] = bias[c] + sum over (dy,dx) of
///   input_padded[y+dy][x+dx][c] * weights[c][dy][dx]
pub fn depthwise_conv2d(input: &Tensor, kernel: &DepthwiseKernel) -> Tensor {
    let (h, w, _) = input.shape();
    let k = kernel.size();
    let r = (k / 2) as isize;
    let mut out = Tensor::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; CHANNELS];
            for ky in 0..k {
                let sy = y as isize + ky as isize - r;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = x as isize + kx as isize - r;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += input.get(sy as usize, sx as usize, c) * kernel.weights()[c][ky * k + kx];
                    }
                }
            }
            for (c, a) in acc.iter().enumerate() {
                out.set(y, x, c, a + kernel.bias()[c]);
            }
        }
    }
    out
}

/// Exact backward pass of [`depthwise_conv2d`].
///
/// Returns (grad_input, grad_kernel). grad_input is the same-padded
/// correlation of grad_output with the spatially flipped kernel; the bias
/// gradient is the per-channel sum of grad_output.
pub fn depthwise_conv2d_backward(
    input: &Tensor,
    kernel: &DepthwiseKernel,
    grad_output: &Tensor,
) -> Result<(Tensor, KernelGrad)> {
    if !input.same_shape(grad_output) {
        return Err(Error::ShapeMismatch {
            expected: input.shape_string(),
            actual: grad_output.shape_string(),
        });
    }
    let (h, w, _) = input.shape();
    let k = kernel.size();
    let r = (k / 2) as isize;
    let mut grad_input = Tensor::zeros(h, w);
    let mut grad_kernel = KernelGrad::zeros(k);

    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                let go = grad_output.get(y, x, c);
                grad_kernel.bias[c] += go;
                if go == 0.0 {
                    continue;
                }
                for ky in 0..k {
                    let sy = y as isize + ky as isize - r;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = x as isize + kx as isize - r;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let (sy, sx) = (sy as usize, sx as usize);
                        grad_kernel.weights[c][ky * k + kx] += go * input.get(sy, sx, c);
                        let gi = grad_input.get(sy, sx, c);
                        grad_input.set(sy, sx, c, gi + go * kernel.weights()[c][ky * k + kx]);
                    }
                }
            }
        }
    }
    Ok((grad_input, grad_kernel))
}

/// Elementwise max(0, x).
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Backward pass of [`relu`]: grad masked by (input > 0). The subgradient at
/// exactly 0 is 0.
pub fn relu_backward(input: &Tensor, grad_output: &Tensor) -> Result<Tensor> {
    if !input.same_shape(grad_output) {
        return Err(Error::ShapeMismatch {
            expected: input.shape_string(),
            actual: grad_output.shape_string(),
        });
    }
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor {
        height: input.height,
        width: input.width,
        data,
    })
}

/// Elementwise sum of two shape-matched tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch {
            expected: a.shape_string(),
            actual: b.shape_string(),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor {
        height: a.height,
        width: a.width,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
        let data = (0..h * w * CHANNELS).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::from_vec(h, w, data).unwrap()
    }

    fn random_kernel(rng: &mut ChaCha8Rng, k: usize) -> DepthwiseKernel {
        let plane = |rng: &mut ChaCha8Rng| {
            (0..k * k).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f32>>()
        };
        let planes = [plane(rng), plane(rng), plane(rng)];
        let bias = [
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ];
        DepthwiseKernel::new(k, planes, bias).unwrap()
    }

    /// Four-nested-loop brute-force depthwise convolution, kept independent
    /// of the production kernel loop. Computed in f64.
    fn brute_force_conv(input: &Tensor, kernel: &DepthwiseKernel) -> Tensor {
        let (h, w, _) = input.shape();
        let k = kernel.size();
        let r = (k / 2) as isize;
        let mut out = Tensor::zeros(h, w);
        for c in 0..CHANNELS {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = kernel.bias()[c] as f64;
                    for ky in 0..k as isize {
                        for kx in 0..k as isize {
                            let sy = y + ky - r;
                            let sx = x + kx - r;
                            let v = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                input.get(sy as usize, sx as usize, c) as f64
                            } else {
                                0.0
                            };
                            acc += v * kernel.weights()[c][(ky * k as isize + kx) as usize] as f64;
                        }
                    }
                    out.set(y as usize, x as usize, c, acc as f32);
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_tensor(&mut rng, 5, 5);
        let out = depthwise_conv2d(&input, &DepthwiseKernel::delta(3).unwrap());
        assert_eq!(out, input);
    }

    #[test]
    fn conv_padding_isolates_center_tap() {
        let input = Tensor::from_vec(1, 1, vec![0.2, 0.4, 0.6]).unwrap();
        let mut kernel = DepthwiseKernel::zeros(3).unwrap();
        let (w0, w1, w2) = (0.5, -0.25, 2.0);
        let (b0, b1, b2) = (0.1, 0.2, -0.3);
        kernel.weights_mut()[0][4] = w0;
        kernel.weights_mut()[1][4] = w1;
        kernel.weights_mut()[2][4] = w2;
        *kernel.bias_mut() = [b0, b1, b2];
        let out = depthwise_conv2d(&input, &kernel);
        assert!((out.get(0, 0, 0) - (0.2 * w0 + b0)).abs() < 1e-7);
        assert!((out.get(0, 0, 1) - (0.4 * w1 + b1)).abs() < 1e-7);
        assert!((out.get(0, 0, 2) - (0.6 * w2 + b2)).abs() < 1e-7);
    }

    #[test]
    fn conv_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let h = rng.gen_range(1..=7);
            let w = rng.gen_range(1..=7);
            let k = if rng.gen_bool(0.5) { 3 } else { 5 };
            let input = random_tensor(&mut rng, h, w);
            let kernel = random_kernel(&mut rng, k);
            let got = depthwise_conv2d(&input, &kernel);
            let want = brute_force_conv(&input, &kernel);
            let max_diff = got
                .data()
                .iter()
                .zip(want.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(max_diff < 1e-6, "max diff {max_diff}");
        }
    }

    #[test]
    fn conv_channel_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_tensor(&mut rng, 6, 6);
        let kernel = random_kernel(&mut rng, 3);
        let base = depthwise_conv2d(&input, &kernel);
        let mut perturbed = input.clone();
        perturbed.set(2, 3, 1, input.get(2, 3, 1) + 0.5);
        let out = depthwise_conv2d(&perturbed, &kernel);
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(out.get(y, x, 0), base.get(y, x, 0));
                assert_eq!(out.get(y, x, 2), base.get(y, x, 2));
            }
        }
        assert_ne!(out.get(2, 3, 1), base.get(2, 3, 1));
    }

    #[test]
    fn conv_linearity_with_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_tensor(&mut rng, 5, 4);
        let b = random_tensor(&mut rng, 5, 4);
        let mut kernel = random_kernel(&mut rng, 3);
        *kernel.bias_mut() = [0.0; CHANNELS];
        let (alpha, beta) = (0.7f32, -1.3f32);
        let combo = Tensor::from_vec(
            5,
            4,
            a.data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| alpha * x + beta * y)
                .collect(),
        )
        .unwrap();
        let lhs = depthwise_conv2d(&combo, &kernel);
        let ca = depthwise_conv2d(&a, &kernel);
        let cb = depthwise_conv2d(&b, &kernel);
        for i in 0..lhs.len() {
            let rhs = alpha * ca.data()[i] + beta * cb.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-5);
        }
    }

    #[test]
    fn relu_examples() {
        let t = Tensor::from_vec(1, 1, vec![-1.0, 0.0, 2.5]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.5]);
        let pos = Tensor::filled(2, 2, 0.3);
        assert_eq!(relu(&pos), pos);
        let neg = Tensor::filled(2, 2, -0.3);
        assert_eq!(relu(&neg), Tensor::zeros(2, 2));
    }

    #[test]
    fn add_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_tensor(&mut rng, 3, 3);
        assert_eq!(add(&a, &Tensor::zeros(3, 3)).unwrap(), a);
        let x = Tensor::filled(1, 1, 0.1);
        let y = Tensor::filled(1, 1, 0.2);
        assert!((add(&x, &y).unwrap().get(0, 0, 0) - 0.3).abs() < 1e-7);
        let b = random_tensor(&mut rng, 3, 3);
        assert_eq!(add(&a, &b).unwrap(), add(&b, &a).unwrap());
        assert!(add(&a, &Tensor::zeros(2, 3)).is_err());
    }

    #[test]
    fn conv_backward_zero_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random_tensor(&mut rng, 4, 4);
        let kernel = random_kernel(&mut rng, 3);
        let (gi, gk) = depthwise_conv2d_backward(&input, &kernel, &Tensor::zeros(4, 4)).unwrap();
        assert_eq!(gi, Tensor::zeros(4, 4));
        assert_eq!(gk, KernelGrad::zeros(3));
    }

    #[test]
    fn conv_backward_center_tap_1x1() {
        let input = Tensor::from_vec(1, 1, vec![0.2, 0.4, 0.6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kernel = random_kernel(&mut rng, 3);
        let ones = Tensor::filled(1, 1, 1.0);
        let (_, gk) = depthwise_conv2d_backward(&input, &kernel, &ones).unwrap();
        assert_eq!(gk.bias, [1.0, 1.0, 1.0]);
        for c in 0..CHANNELS {
            for (i, &w) in gk.weights[c].iter().enumerate() {
                if i == 4 {
                    assert!((w - input.get(0, 0, c)).abs() < 1e-7);
                } else {
                    assert_eq!(w, 0.0);
                }
            }
        }
    }

    /// Central finite differences (f64) of loss = sum(conv output) against
    /// each analytic gradient component.
    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let input = random_tensor(&mut rng, 8, 8);
        let kernel = random_kernel(&mut rng, 3);
        let ones = Tensor::filled(8, 8, 1.0);
        let (gi, gk) = depthwise_conv2d_backward(&input, &kernel, &ones).unwrap();

        // all-f64 loss oracle: sum of conv outputs, no f32 rounding
        let loss = |inp: &Tensor, ker: &DepthwiseKernel| -> f64 {
            let (h, w, _) = inp.shape();
            let k = ker.size();
            let r = (k / 2) as isize;
            let mut total = 0.0f64;
            for c in 0..CHANNELS {
                for y in 0..h as isize {
                    for x in 0..w as isize {
                        let mut acc = ker.bias()[c] as f64;
                        for ky in 0..k as isize {
                            for kx in 0..k as isize {
                                let sy = y + ky - r;
                                let sx = x + kx - r;
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    acc += inp.get(sy as usize, sx as usize, c) as f64
                                        * ker.weights()[c][(ky * k as isize + kx) as usize] as f64;
                                }
                            }
                        }
                        total += acc;
                    }
                }
            }
            total
        };
        let step = 1e-3f32;
        // f32 perturbations round, so divide by the realized spread
        let check = |analytic: f32, plus: f64, minus: f64, spread: f64, what: &str| {
            let fd = (plus - minus) / spread;
            let denom = (analytic as f64).abs().max(fd.abs()).max(1e-6);
            let rel = ((analytic as f64) - fd).abs() / denom;
            assert!(rel < 1e-4, "{what}: analytic {analytic} vs fd {fd} (rel {rel})");
        };

        for i in 0..input.len() {
            let base = input.data()[i];
            let mut p = input.clone();
            p.data_mut()[i] = base + step;
            let mut m = input.clone();
            m.data_mut()[i] = base - step;
            let spread = ((base + step) - (base - step)) as f64;
            check(
                gi.data()[i],
                loss(&p, &kernel),
                loss(&m, &kernel),
                spread,
                &format!("grad_input[{i}]"),
            );
        }
        for c in 0..CHANNELS {
            for i in 0..9 {
                let base = kernel.weights()[c][i];
                let mut p = kernel.clone();
                p.weights_mut()[c][i] = base + step;
                let mut m = kernel.clone();
                m.weights_mut()[c][i] = base - step;
                let spread = ((base + step) - (base - step)) as f64;
                check(
                    gk.weights[c][i],
                    loss(&input, &p),
                    loss(&input, &m),
                    spread,
                    &format!("grad_weights[{c}][{i}]"),
                );
            }
            let base = kernel.bias()[c];
            let mut p = kernel.clone();
            p.bias_mut()[c] = base + step;
            let mut m = kernel.clone();
            m.bias_mut()[c] = base - step;
            let spread = ((base + step) - (base - step)) as f64;
            check(
                gk.bias[c],
                loss(&input, &p),
                loss(&input, &m),
                spread,
                &format!("grad_bias[{c}]"),
            );
        }
    }

    #[test]
    fn relu_backward_convention() {
        let input = Tensor::from_vec(1, 1, vec![1.0, -1.0, 0.0]).unwrap();
        let grad = Tensor::from_vec(1, 1, vec![0.5, 0.5, 0.5]).unwrap();
        let out = relu_backward(&input, &grad).unwrap();
        assert_eq!(out.data(), &[0.5, 0.0, 0.0]);
    }

    #[test]
    fn kernel_validation() {
        assert!(DepthwiseKernel::zeros(4).is_err());
        assert!(DepthwiseKernel::zeros(0).is_err());
        let bad = DepthwiseKernel::new(3, [vec![0.0; 9], vec![0.0; 8], vec![0.0; 9]], [0.0; 3]);
        assert!(bad.is_err());
    }

    #[test]
    fn tensor_validation() {
        assert!(Tensor::from_vec(2, 2, vec![0.0; 11]).is_err());
        assert!(Tensor::from_vec(1, 1, vec![0.0, f32::NAN, 0.0]).is_err());
        let t = Tensor::from_vec(1, 1, vec![0.0, 1.5, 0.0]).unwrap();
        assert!(t.validate_image().is_err());
    }
}
