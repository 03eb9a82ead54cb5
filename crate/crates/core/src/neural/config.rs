use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed architecture of both branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Length of e_F and of e_C; e_L is twice this.
    pub embed_dim: usize,
    pub mapper_hidden: usize,
    pub mapper_layers: usize,
    pub hidden: usize,
    /// Fully connected layers per decoder, output layer included.
    pub decoder_layers: usize,
    /// Index of the layer whose input re-appends `[q, m]`.
    pub skip_layer: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            mapper_hidden: 128,
            mapper_layers: 3,
            hidden: 512,
            decoder_layers: 8,
            skip_layer: 4,
        }
    }
}

impl ArchConfig {
    /// Desk-scale variant: hidden width 256.
    pub fn desk() -> Self {
        Self {
            hidden: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.mapper_hidden == 0 || self.hidden == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if self.mapper_layers == 0 {
            return Err(Error::invalid("the mapper needs at least one layer"));
        }
        if self.decoder_layers < 2 {
            return Err(Error::invalid("the decoder needs at least two layers"));
        }
        if self.skip_layer == 0 || self.skip_layer >= self.decoder_layers - 1 {
            return Err(Error::invalid(format!(
                "skip layer {} must be a hidden layer in 1..{}",
                self.skip_layer,
                self.decoder_layers - 1
            )));
        }
        Ok(())
    }

    /// Width of `[q, m]`.
    pub fn decoder_input(&self) -> usize {
        3 + self.mapper_hidden
    }
}
