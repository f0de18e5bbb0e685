use crate::error::{Error, Result};

/// Layer widths of the encoder, decoder and sampling layer.
///
/// Encoder: shared per-point layers → grid max-pooling at `N` → `fine_blocks`
/// residual blocks at `N` → 2×2×2 stride-2 downsample → `coarse_blocks`
/// residual blocks at `N/2` → flatten → linear to the latent code. The
/// decoder mirrors this with a stride-2 transposed convolution, then emits
/// the occupancy head (sigmoid) and the feature head. The sampling layer is
/// two 1×1×1 convolutions over `[F ‖ u ‖ v]` followed by `tanh/2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub resolution: usize,
    /// Output widths of the shared per-point layers; the last one is the
    /// channel count of every 3D stage.
    pub point_widths: Vec<usize>,
    pub fine_blocks: usize,
    pub coarse_blocks: usize,
    pub latent_dim: usize,
    pub feature_channels: usize,
    pub sampler_hidden: usize,
}

impl ModelConfig {
    /// Full-size configuration: 3→64→128 point features, one residual block
    /// on each side of the downsample, 512-d latent, 32 feature channels.
    pub fn reference() -> Self {
        ModelConfig {
            resolution: 16,
            point_widths: vec![64, 128],
            fine_blocks: 1,
            coarse_blocks: 1,
            latent_dim: 512,
            feature_channels: 32,
            sampler_hidden: 64,
        }
    }

    /// Configuration sized for single-core CPU training at `N = 8`.
    pub fn desk() -> Self {
        ModelConfig {
            resolution: 8,
            point_widths: vec![16, 16],
            fine_blocks: 1,
            coarse_blocks: 1,
            latent_dim: 64,
            feature_channels: 16,
            sampler_hidden: 32,
        }
    }

    /// Width of every volumetric stage.
    pub fn channels(&self) -> usize {
        *self.point_widths.last().expect("validated")
    }

    pub fn coarse_resolution(&self) -> usize {
        self.resolution / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 || !self.resolution.is_multiple_of(2) {
            return Err(Error::Contract(format!(
                "model resolution must be even and at least 2, got {}",
                self.resolution
            )));
        }
        if self.point_widths.is_empty() || self.point_widths.contains(&0) {
            return Err(Error::Contract("point_widths must be non-empty and positive".into()));
        }
        if self.latent_dim == 0 || self.feature_channels == 0 || self.sampler_hidden == 0 {
            return Err(Error::Contract("layer widths must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}
