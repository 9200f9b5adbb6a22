//! Denoising diffusion for small grayscale image corpora.
//!
//! The crate covers the whole loop: a linear variance schedule, forward
//! noising and ancestral sampling, a time-conditioned UNet noise predictor
//! with its own reverse-mode gradients, the image preprocessing pipeline,
//! noise-prediction training with best-checkpoint persistence, and MSE/SSIM
//! corpus comparison.

pub mod batch;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod preprocess;
pub mod rng;
pub mod schedule;
pub mod synthetic;
pub mod train;

pub use batch::{batch_mse, gaussian_like, ImageBatch};
pub use denoiser::{
    linear_oracle_denoiser, sinusoidal_embedding, unet_init, unet_predict, Denoiser,
    LinearOracleDenoiser, ParameterSet, TimeEmbedding, UNet, UNetConfig, UNetDenoiser,
};
pub use diffusion::{
    forward_closed_form, forward_step, reverse_mean, reverse_step, sample, ForwardSample,
};
pub use error::{Error, Result};
pub use eval::{
    contrast_std, evaluate_pair, format_table, luminance_mean, ssim, EvalReport, PairingStrategy,
    SsimComponents, SsimWeights,
};
pub use preprocess::{
    decode_image, denormalize, load_corpus, preprocess, save_png, PipelineConfig, RawImage,
};
pub use rng::RngState;
pub use schedule::{linear_schedule, NoiseSchedule, PosteriorCoefficients, ScheduleConfig};
pub use train::{
    checkpoint_load, checkpoint_save, loss_simple, train, train_step, Checkpoint, EpochRecord,
    TrainConfig, TrainState,
};
