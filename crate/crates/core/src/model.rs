//! The retina pipeline: difference-of-Gaussians kernel construction, model
//! parameters and their initialization, the trained two-stage residual
//! forward pass, and the forward-only classic circuit variants.
//!
//! Stage g models horizontal-cell lateral feedback (3x3), stage f models the
//! bipolar-cell center-surround opponency (5x5). Both are depthwise, so the
//! RGB channels stay separate end to end.

use crate::error::{Error, Result};
use crate::tensor::{add, depthwise_conv2d, relu, DepthwiseKernel, Tensor};

/// The full learnable state: g (3x3) and f (5x5), 108 scalars total.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub g: DepthwiseKernel,
    pub f: DepthwiseKernel,
}

/// Total number of learnable scalars (weights + biases).
pub fn param_count(params: &ModelParams) -> usize {
    params.g.scalar_count() + params.f.scalar_count()
}

/// Unit-sum discrete Gaussian sampled at integer offsets, computed in f64.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::InvalidKernel(format!("size must be odd, got {size}")));
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidKernel(format!("sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as i64;
    let mut grid = Vec::with_capacity(size * size);
    let mut sum = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            grid.push(v);
            sum += v;
        }
    }
    for v in &mut grid {
        *v /= sum;
    }
    Ok(grid)
}

/// Difference-of-Gaussians kernel: each sampled Gaussian is normalized to
/// unit sum over the grid before subtraction, so the result sums to zero.
pub fn dog_kernel(size: usize, sigma1: f64, sigma2: f64) -> Result<Vec<f64>> {
    let narrow = gaussian_kernel(size, sigma1)?;
    let wide = gaussian_kernel(size, sigma2)?;
    Ok(narrow.iter().zip(&wide).map(|(a, b)| a - b).collect())
}

/// Default DoG sigmas for the f kernel.
pub const DOG_SIGMA1: f64 = 0.5;
pub const DOG_SIGMA2: f64 = 5.0;
/// Default sigma for the Gaussian-initialized g kernel.
pub const DEFAULT_SIGMA_G: f64 = 1.0;

fn replicate_f64(size: usize, plane: &[f64]) -> Result<DepthwiseKernel> {
    let plane32: Vec<f32> = plane.iter().map(|&v| v as f32).collect();
    DepthwiseKernel::replicated(size, &plane32)
}

/// DoG-initialized parameters: f gets the 5x5 DoG (sigma 0.5 / 5), g gets a
/// unit-sum 3x3 Gaussian, both replicated across channels with zero bias.
///
/// Initialization is deterministic; the seed is recorded by callers for
/// reproducibility and reserved for stochastic perturbations.
pub fn init_params(_seed: u64) -> ModelParams {
    init_params_with_sigma_g(_seed, DEFAULT_SIGMA_G).expect("default sigmas are valid")
}

pub fn init_params_with_sigma_g(_seed: u64, sigma_g: f64) -> Result<ModelParams> {
    let g_plane = gaussian_kernel(3, sigma_g)?;
    let f_plane = dog_kernel(5, DOG_SIGMA1, DOG_SIGMA2)?;
    Ok(ModelParams {
        g: replicate_f64(3, &g_plane)?,
        f: replicate_f64(5, &f_plane)?,
    })
}

/// All-zero parameters: the forward pass is an exact identity.
pub fn zero_params() -> ModelParams {
    ModelParams {
        g: DepthwiseKernel::zeros(3).expect("3 is odd"),
        f: DepthwiseKernel::zeros(5).expect("5 is odd"),
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub input: Tensor,
    /// conv(input, g), before ReLU.
    pub g_pre: Tensor,
    /// relu(g_pre) -- the horizontal-cell map h.
    pub h: Tensor,
    /// input + h -- the bipolar input b.
    pub b: Tensor,
    /// conv(b, f), before ReLU.
    pub f_pre: Tensor,
    /// relu(f_pre).
    pub u: Tensor,
}

/// The trained forward pass:
///   h = relu(conv(input, g)); b = input + h;
///   u = relu(conv(b, f));     v = input + u.
/// The output is left unclamped; clamping happens at image encoding and
/// metric evaluation.
pub fn forward(params: &ModelParams, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let g_pre = depthwise_conv2d(input, &params.g);
    let h = relu(&g_pre);
    let b = add(input, &h)?;
    let f_pre = depthwise_conv2d(&b, &params.f);
    let u = relu(&f_pre);
    let v = add(input, &u)?;
    let cache = ForwardCache {
        input: input.clone(),
        g_pre,
        h,
        b,
        f_pre,
        u,
    };
    Ok((v, cache))
}

/// Forward pass without keeping intermediates.
pub fn infer(params: &ModelParams, input: &Tensor) -> Result<Tensor> {
    let h = relu(&depthwise_conv2d(input, &params.g));
    let b = add(input, &h)?;
    let u = relu(&depthwise_conv2d(&b, &params.f));
    add(input, &u)
}

/// Horizontal-cell modulation for the classic (non-learned) variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HcMode {
    /// b = I / (alpha + h): the recursive, IIR-like form. Numerically
    /// unstable when alpha + h approaches zero.
    Divisive,
    /// b = alpha * I + beta * I .* h: the feedforward FIR approximation.
    Affine,
}

impl std::str::FromStr for HcMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "divisive" => Ok(HcMode::Divisive),
            "affine" => Ok(HcMode::Affine),
            _ => Err(Error::InvalidConfig(format!(
                "unknown variant mode {s:?} (expected divisive or affine)"
            ))),
        }
    }
}

/// Denominator guard for the divisive mode.
pub const DIVISIVE_GUARD: f32 = 1e-6;

/// Configuration for a classic retina-circuit run: the horizontal-cell
/// modulation mode, whether the ganglion output is residual, the alpha/beta
/// constants, and the two fixed (non-learned) kernels.
#[derive(Clone, Debug)]
pub struct ClassicVariantConfig {
    pub mode: HcMode,
    /// true: v = I + conv(b, f); false: v = conv(b, f).
    pub residual: bool,
    pub alpha: f32,
    pub beta: f32,
    pub g_kernel: DepthwiseKernel,
    pub f_kernel: DepthwiseKernel,
}

impl ClassicVariantConfig {
    /// Gaussian g and DoG f with the defaults used for the learned model's
    /// initialization; alpha = beta = 1.
    pub fn with_defaults(mode: HcMode, residual: bool) -> Result<Self> {
        let g_plane = gaussian_kernel(3, DEFAULT_SIGMA_G)?;
        let f_plane = dog_kernel(5, DOG_SIGMA1, DOG_SIGMA2)?;
        Ok(Self {
            mode,
            residual,
            alpha: 1.0,
            beta: 1.0,
            g_kernel: replicate_f64(3, &g_plane)?,
            f_kernel: replicate_f64(5, &f_plane)?,
        })
    }

}

/// Classic forward pass. No activations: the circuit equations are linear.
///
/// Divisive mode errors out when any |alpha + h| < [`DIVISIVE_GUARD`]; the
/// error carries the offending pixel count. A non-positive alpha is allowed
/// through so the guard itself surfaces the instability.
pub fn forward_classic(config: &ClassicVariantConfig, input: &Tensor) -> Result<Tensor> {
    let h = depthwise_conv2d(input, &config.g_kernel);
    let b = match config.mode {
        HcMode::Divisive => {
            let unstable = h
                .data()
                .iter()
                .filter(|&&v| (config.alpha + v).abs() < DIVISIVE_GUARD)
                .count();
            if unstable > 0 {
                return Err(Error::NumericalInstability {
                    count: unstable,
                    threshold: DIVISIVE_GUARD,
                });
            }
            let data = input
                .data()
                .iter()
                .zip(h.data())
                .map(|(&i, &hv)| i / (config.alpha + hv))
                .collect();
            Tensor::from_vec(input.height(), input.width(), data)?
        }
        HcMode::Affine => {
            let data = input
                .data()
                .iter()
                .zip(h.data())
                .map(|(&i, &hv)| config.alpha * i + config.beta * i * hv)
                .collect();
            Tensor::from_vec(input.height(), input.width(), data)?
        }
    };
    let v = depthwise_conv2d(&b, &config.f_kernel);
    if config.residual {
        add(input, &v)
    } else {
        Ok(v)
    }
}
