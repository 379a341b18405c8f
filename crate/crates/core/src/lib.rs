//! Retina-inspired low-light image restoration.
//!
//! A two-stage depthwise-convolutional residual network with 108 learnable
//! parameters: a 3x3 horizontal-cell stage g and a 5x5 bipolar-cell stage f,
//! each applied per channel and added back onto the input. The f stage is
//! initialized from a difference-of-Gaussians kernel. Everything is built
//! from scratch on the CPU: tensor ops, backpropagation, Adam, the training
//! loop, SSIM/PSNR evaluation, and the classic (non-learned) retina-circuit
//! variants.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dataset::{
    decode_image, encode_image, generate_synthetic_pairs, load_manifest, load_paired_dataset,
    PairedDataset,
};
pub use error::{Error, Result};
pub use metrics::{evaluate_set, psnr, ssim, MetricReport, Psnr, SsimConfig};
pub use model::{
    dog_kernel, forward, forward_classic, gaussian_kernel, infer, init_params,
    init_params_with_sigma_g, param_count, zero_params, ClassicVariantConfig, ForwardCache, HcMode,
    ModelParams,
};
pub use tensor::{
    add, depthwise_conv2d, depthwise_conv2d_backward, relu, relu_backward, DepthwiseKernel,
    KernelGrad, Tensor, CHANNELS,
};
pub use train::{
    adam_step, backward, mse_loss, sgd_step, train, GradientSet, LossKind, OptimizerKind,
    OptimizerState, TrainConfig, PARAM_COUNT,
};
