//! Mini-batch gradient descent on per-pixel binary cross-entropy.
//!
//! Each step draws a batch of training images, optionally applies a random
//! rotation/flip to each, samples pixels uniformly from every image in the
//! batch, and takes one averaged gradient step. Augmented samples are
//! featurized through the transform's inverse axes instead of materializing
//! the transformed image, which is exact for the window features used here.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetSplit, Dihedral, DIHEDRAL_ELEMENTS};
use super::{dot, features_at, sigmoid, SegmenterModel, VisionError, FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub augment: bool,
    pub seed: u64,
    /// Pixels sampled per image presentation.
    pub pixels_per_image: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 4,
            learning_rate: 0.001,
            augment: true,
            seed: 0,
            pixels_per_image: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VisionError> {
        if self.epochs < 1 || self.batch_size < 1 || self.pixels_per_image < 1 {
            return Err(VisionError::BadTrainConfig(
                "epochs, batch_size and pixels_per_image must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(VisionError::BadTrainConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A trained model plus its training trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SegmenterModel,
    /// Mean per-pixel loss of every gradient step, in order.
    pub loss_history: Vec<f64>,
    /// Exact number of image presentations that went through augmentation.
    pub augmented_images_used: usize,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.loss_history.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Numerically stable binary cross-entropy from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Trains the logistic segmenter on the train split. Deterministic in
/// `cfg.seed`; augmentation requires square images.
pub fn train(data: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainOutcome, VisionError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(VisionError::EmptySplit("train"));
    }
    if cfg.augment {
        if let Some(img) = data.train.iter().find(|i| i.width() != i.height()) {
            return Err(VisionError::NonSquareImage(img.width(), img.height()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = [0.0f64; FEATURE_COUNT];
    let mut loss_history = Vec::new();
    let mut augmented_images_used = 0usize;
    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut features = [0.0f64; FEATURE_COUNT];
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size as usize) {
            let mut grad = [0.0f64; FEATURE_COUNT];
            let mut loss_sum = 0.0f64;
            let mut samples = 0usize;
            for &img_idx in batch {
                let img = &data.train[img_idx];
                let elem = if cfg.augment {
                    augmented_images_used += 1;
                    DIHEDRAL_ELEMENTS[rng.random_range(0..DIHEDRAL_ELEMENTS.len())]
                } else {
                    Dihedral::Identity
                };
                let (ax, ay) = elem.inverse_axes();
                for _ in 0..cfg.pixels_per_image {
                    let x = rng.random_range(0..img.width());
                    let y = rng.random_range(0..img.height());
                    features_at(&img.rgb, x, y, ax, ay, &mut features);
                    let z = dot(&weights, &features);
                    let y_true = img.mask.get(x, y) as f64;
                    let err = sigmoid(z) - y_true;
                    for (g, f) in grad.iter_mut().zip(&features) {
                        *g += err * f;
                    }
                    loss_sum += bce_from_logit(z, y_true);
                    samples += 1;
                }
            }
            let mean_loss = loss_sum / samples as f64;
            if !mean_loss.is_finite() {
                return Err(VisionError::Diverged { step });
            }
            loss_history.push(mean_loss);
            let scale = cfg.learning_rate / samples as f64;
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= scale * g;
            }
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(VisionError::Diverged { step });
            }
            step += 1;
        }
    }

    Ok(TrainOutcome {
        model: SegmenterModel { weights, threshold: 0.5 },
        loss_history,
        augmented_images_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::{Mask, RgbImage};
    use crate::vision::dataset::LabeledImage;
    use crate::vision::{evaluate, segment};
    use rand::SeedableRng;

    /// Blue-ish pickable left half, red-ish unpickable right half; colors are
    /// linearly separable.
    fn separable_image(n: u32, rng: &mut ChaCha8Rng) -> LabeledImage {
        let mut rgb = RgbImage::new(n, n).unwrap();
        let mut mask = Mask::new(n, n).unwrap();
        for y in 0..n {
            for x in 0..n {
                let pickable = x < n / 2;
                let jitter = rng.random_range(-0.05..0.05);
                let color = if pickable {
                    [0.2 + jitter, 0.3, 0.7 + jitter]
                } else {
                    [0.7 + jitter, 0.3, 0.2 + jitter]
                };
                rgb.set(x, y, color);
                mask.set(x, y, pickable as u8);
            }
        }
        LabeledImage { rgb, mask }
    }

    fn separable_split(train: usize, test: usize, seed: u64) -> DatasetSplit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DatasetSplit {
            train: (0..train).map(|_| separable_image(24, &mut rng)).collect(),
            validation: Vec::new(),
            test: (0..test).map(|_| separable_image(24, &mut rng)).collect(),
        }
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig { epochs: 60, batch_size =_compile_guard(), ..Default::default() }
    }

    // placeholder to be removed
    fn _compile_guard() -> u32 {
        4
    }

    #[test]
    fn separable_data_trains_to_high_accuracy() {
        let data = separable_split(8, 2, 1);
        let cfg = TrainConfig { epochs: 80, learning_rate: 0.5, seed: 7, ..Default::default() };
        let out = train(&data, &cfg).unwrap();
        let mut counts = crate::vision::ConfusionCounts::default();
        for img in &data.train {
            let pred = segment(&out.model, &img.rgb);
            counts.add(&crate::vision::confusion(&pred, &img.mask).unwrap());
        }
        let m = counts.metrics();
        assert!(m.accuracy >= 0.99, "training accuracy {}", m.accuracy);
        assert!(out.final_loss() <= out.initial_loss());
    }

    #[test]
    fn held_out_iou_on_separable_data() {
        let data = separable_split(8, 2, 2);
        let cfg = TrainConfig { epochs: 80, learning_rate: 0.5, seed: 3, ..Default::default() };
        let out = train(&data, &cfg).unwrap();
        for img in &data.test {
            let pred = segment(&out.model, &img.rgb);
            let m = evaluate(&pred, &img.mask).unwrap();
            assert!(m.iou >= 0.95, "held-out IoU {}", m.iou);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let data = separable_split(2, 0, 3);
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, ..Default::default() };
        let out = train(&data, &cfg).unwrap();
        assert_eq!(out.model.weights, [0.0; FEATURE_COUNT]);
    }

    #[test]
    fn same_seed_reproduces_weights() {
        let data = separable_split(4, 0, 4);
        let cfg = TrainConfig { epochs: 10, seed: 99, ..Default::default() };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn non_finite_pixels_signal_divergence() {
        let mut data = separable_split(1, 0, 5);
        data.train[0].rgb.set(3, 3, [f64::NAN, 0.0, 0.0]);
        let cfg = TrainConfig { epochs: 2, pixels_per_image: 2048, ..Default::default() };
        assert!(matches!(train(&data, &cfg), Err(VisionError::Diverged { .. })));
    }

    #[test]
    fn loss_trend_decreases_on_separable_data() {
        let data = separable_split(6, 0, 6);
        let cfg = TrainConfig { epochs: 60, learning_rate: 0.5, seed: 11, ..Default::default() };
        let out = train(&data, &cfg).unwrap();
        let k = (out.loss_history.len() / 10).max(1);
        let head: f64 = out.loss_history[..k].iter().sum::<f64>() / k as f64;
        let tail: f64 = out.loss_history[out.loss_history.len() - k..].iter().sum::<f64>() / k as f64;
        assert!(tail <= head, "loss head {head}, tail {tail}");
    }

    #[test]
    fn empty_train_split_rejected() {
        let data = DatasetSplit::default();
        assert!(matches!(train(&data, &TrainConfig::default()), Err(VisionError::EmptySplit("train"))));
    }

    #[test]
    fn augmented_sample_count_is_exact() {
        let data = separable_split(5, 0, 7);
        let cfg = TrainConfig { epochs: 4, augment: true, ..Default::default() };
        let out = train(&data, &cfg).unwrap();
        assert_eq!(out.augmented_images_used, 4 * 5);
        let cfg_off = TrainConfig { epochs: 4, augment: false, ..Default::default() };
        assert_eq!(train(&data, &cfg_off).unwrap().augmented_images_used, 0);
    }
}
