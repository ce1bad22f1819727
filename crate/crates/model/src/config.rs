use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub channels: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Window length in samples.
    pub k: usize,
    /// Hop between windows in samples.
    pub step: usize,
    /// Every segment is front-padded to this length.
    pub l_max: usize,
    pub d_model: usize,
    pub heads: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    pub num_classes: usize,
    pub conv: Vec<ConvLayer>,
    pub classifier_hidden: usize,
    pub use_spatial: bool,
    pub use_temporal: bool,
    pub use_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 50,
            step: 15,
            l_max: 500,
            d_model: 256,
            heads: 16,
            lstm_layers: 2,
            dropout: 0.2,
            num_classes: 5,
            conv: vec![ConvLayer { channels: 32, kernel: 5 }, ConvLayer { channels: 64, kernel: 5 }],
            classifier_hidden: 256,
            use_spatial: true,
            use_temporal: true,
            use_attention: true,
        }
    }
}

impl ModelConfig {
    /// Smallest configuration exercising every component; used for
    /// gradient checks and overfitting tests.
    pub fn tiny() -> Self {
        Self {
            k: 6,
            step: 2,
            l_max: 12,
            d_model: 8,
            heads: 2,
            lstm_layers: 1,
            dropout: 0.0,
            num_classes: 5,
            conv: vec![ConvLayer { channels: 4, kernel: 3 }, ConvLayer { channels: 4, kernel: 3 }],
            classifier_hidden: 16,
            ..Self::default()
        }
    }

    /// Reduced width used for CPU-scale cross-validation.
    pub fn desk() -> Self {
        Self {
            l_max: 250,
            d_model: 64,
            heads: 4,
            dropout: 0.0,
            conv: vec![ConvLayer { channels: 8, kernel: 5 }, ConvLayer { channels: 16, kernel: 5 }],
            ..Self::default()
        }
    }

    pub fn windows(&self) -> usize {
        (self.l_max - self.k) / self.step + 1
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    /// Positions left after the conv stack's pooling layers.
    pub fn conv_out_len(&self) -> usize {
        self.conv.iter().fold(self.k, |len, _| len / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.k == 0 || self.step == 0 {
            return err("k and step must be at least 1".into());
        }
        if self.k > self.l_max {
            return err(format!("window k = {} exceeds l_max = {}", self.k, self.l_max));
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return err(format!("d_model {} must be a positive multiple of heads {}", self.d_model, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.num_classes < 2 {
            return err("num_classes must be at least 2".into());
        }
        if self.use_temporal && self.lstm_layers == 0 {
            return err("lstm_layers must be at least 1 when the temporal encoder is on".into());
        }
        if self.classifier_hidden == 0 {
            return err("classifier_hidden must be at least 1".into());
        }
        if self.use_spatial {
            if self.conv.is_empty() {
                return err("conv stack is empty".into());
            }
            if self.conv.iter().any(|c| c.channels == 0 || c.kernel == 0 || c.kernel % 2 == 0) {
                return err("conv layers need positive channels and an odd kernel".into());
            }
            if self.conv_out_len() == 0 {
                return err(format!("window k = {} is too short for {} pooling layers", self.k, self.conv.len()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts() {
        assert_eq!(ModelConfig::default().windows(), 31);
        assert_eq!(ModelConfig::default().d_k(), 16);
        assert_eq!(ModelConfig::tiny().windows(), 4);
        assert_eq!(ModelConfig::desk().windows(), 14);
        assert_eq!(ModelConfig::default().conv_out_len(), 12);
    }

    #[test]
    fn validation() {
        for cfg in [ModelConfig::default(), ModelConfig::tiny(), ModelConfig::desk()] {
            cfg.validate().unwrap();
        }
        let bad = [
            ModelConfig { heads: 3, ..ModelConfig::tiny() },
            ModelConfig { k: 20, ..ModelConfig::tiny() },
            ModelConfig { step: 0, ..ModelConfig::tiny() },
            ModelConfig { dropout: 1.0, ..ModelConfig::tiny() },
            ModelConfig { num_classes: 1, ..ModelConfig::tiny() },
            ModelConfig { k: 3, l_max: 12, ..ModelConfig::tiny() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let no_spatial = ModelConfig {
            k: 3,
            use_spatial: false,
            ..ModelConfig::tiny()
        };
        no_spatial.validate().unwrap();
    }
}
