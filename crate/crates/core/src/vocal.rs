//! Slurred-speech detector: four conv1d/pool stages feeding an Elman cell and
//! a two-way dense head.

use crate::audio::{self, AudioClip, FilterSpec, FRAME_LEN};
use crate::nn::{LayerSpec, Model, NnError};
use crate::tensor::softmax;
use crate::Confidence;

/// Index of the "slurred" logit.
pub const SLURRED: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct VocalArch {
    pub input_len: usize,
    pub kernel: usize,
    pub channels: [usize; 4],
    pub pool: usize,
    pub hidden: usize,
}

impl Default for VocalArch {
    fn default() -> Self {
        Self {
            input_len: FRAME_LEN,
            kernel: 9,
            channels: [8, 16, 32, 64],
            pool: 4,
            hidden: 32,
        }
    }
}

impl VocalArch {
    pub fn input_shape(&self) -> Vec<usize> {
        vec![1, self.input_len]
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut in_ch = 1;
        for &ch in &self.channels {
            layers.push(LayerSpec::conv1d(in_ch, ch, self.kernel));
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::avgpool1d(self.pool));
            in_ch = ch;
        }
        layers.push(LayerSpec::recurrent(in_ch, self.hidden));
        layers.push(LayerSpec::dense(self.hidden, 2));
        layers
    }

    pub fn build(&self, seed: u64) -> Result<Model, NnError> {
        Model::new(self.input_shape(), self.layers(), seed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VocalError {
    #[error(transparent)]
    Audio(#[from] audio::AudioError),
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Filtered, framed network input for a clip.
pub fn vocal_input(clip: &AudioClip, input_len: usize) -> Result<crate::tensor::Tensor, VocalError> {
    let filtered = audio::low_pass(clip, &FilterSpec::default())?;
    Ok(audio::frame_features(&filtered, input_len)?)
}

/// Probability that `clip` is slurred speech.
pub fn vocal_confidence(model: &Model, clip: &AudioClip) -> Result<Confidence, VocalError> {
    let input_len = model.input_shape().last().copied().unwrap_or(FRAME_LEN);
    let logits = model.forward(&vocal_input(clip, input_len)?)?;
    Ok(Confidence::clamped(softmax(logits.data())[SLURRED]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_shapes() {
        let model = VocalArch::default().build(1).unwrap();
        assert_eq!(model.output_shape(), vec![2]);
        // 16384 → conv 16376 → pool 4094 → 4086 → 1021 → 1013 → 253 → 245 → 61 steps
        let mut shape = model.input_shape().to_vec();
        for layer in &model.layers()[..12] {
            shape = layer.output_shape(&shape).unwrap();
        }
        assert_eq!(shape, vec![64, 61]);
    }

    #[test]
    fn untrained_model_yields_open_interval_and_is_deterministic() {
        let arch = VocalArch {
            input_len: 1024,
            ..Default::default()
        };
        let model = arch.build(7).unwrap();
        let clip = AudioClip::new(16000, (0..3000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect()).unwrap();
        let a = vocal_confidence(&model, &clip).unwrap();
        let b = vocal_confidence(&model, &clip).unwrap();
        assert!(a.value() > 0.0 && a.value() < 1.0);
        assert_eq!(a, b);
    }
}
