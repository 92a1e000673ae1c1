//! Retinopathy detector over preprocessed 64×64 fundus images: two
//! conv/relu stages, then a global average over each feature map so lesions
//! count the same wherever they sit, and a small dense head.

use crate::image::{self, Image, INPUT_SIDE};
use crate::nn::{LayerSpec, Model, NnError};
use crate::tensor::softmax;
use crate::Confidence;

/// Index of the "retinopathy" logit.
pub const RETINOPATHY: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RetinaArch {
    pub side: usize,
    pub kernel: usize,
    pub channels: [usize; 2],
    pub pool: usize,
    pub hidden: usize,
}

impl Default for RetinaArch {
    fn default() -> Self {
        Self {
            side: INPUT_SIDE,
            kernel: 5,
            channels: [6, 16],
            pool: 2,
            hidden: 16,
        }
    }
}

impl RetinaArch {
    pub fn input_shape(&self) -> Vec<usize> {
        vec![1, self.side, self.side]
    }

    /// Side length of the second stage's feature maps, which are averaged
    /// down to one value each.
    pub fn final_side(&self) -> usize {
        let conv = |s: usize| s - self.kernel + 1;
        conv((conv(self.side) - self.pool) / self.pool + 1)
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let [c1, c2] = self.channels;
        vec![
            LayerSpec::conv2d(1, c1, self.kernel),
            LayerSpec::Relu,
            LayerSpec::avgpool2d(self.pool),
            LayerSpec::conv2d(c1, c2, self.kernel),
            LayerSpec::Relu,
            LayerSpec::avgpool2d(self.final_side()),
            LayerSpec::dense(c2, self.hidden),
            LayerSpec::Relu,
            LayerSpec::dense(self.hidden, 2),
        ]
    }

    pub fn build(&self, seed: u64) -> Result<Model, NnError> {
        Model::new(self.input_shape(), self.layers(), seed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetinaError {
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Probability that `img` shows hypertensive retinopathy.
pub fn retina_confidence(model: &Model, img: &Image) -> Result<Confidence, RetinaError> {
    let logits = model.forward(&image::preprocess(img)?)?;
    Ok(Confidence::clamped(softmax(logits.data())[RETINOPATHY]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_emits_two_logits() {
        // 64 → 60 → 30 → 26, pooled to 16 values
        let arch = RetinaArch::default();
        assert_eq!(arch.final_side(), 26);
        let model = arch.build(3).unwrap();
        assert_eq!(model.output_shape(), vec![2]);
        let img = Image::new(40, 40, (0..1600).map(|i| ((i * 37) % 101) as f64 / 100.0).collect()).unwrap();
        let logits = model.forward(&image::preprocess(&img).unwrap()).unwrap();
        assert_eq!(logits.shape(), &[2]);
        let c = retina_confidence(&model, &img).unwrap();
        assert!(c.value() > 0.0 && c.value() < 1.0);
        assert_eq!(c, retina_confidence(&model, &img).unwrap());
    }
}
