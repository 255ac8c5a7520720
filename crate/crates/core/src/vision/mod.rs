//! Pixel-level soil segmentation: dataset handling, a trainable logistic
//! per-pixel classifier behind the [`Segmenter`] trait, and the evaluation
//! metric bundle.
//!
//! The classifier scores each pixel from 13 local features: the raw RGB
//! triple, the 3x3 window mean and standard deviation per channel, the 3x3
//! horizontal gradient per channel, and a bias term. Window statistics make
//! the score robust to isolated pixel noise; the gradient feature carries
//! local directional texture, which is exactly what random rotation/flip
//! augmentation is meant to stop the model from over-fitting to.

mod dataset;
mod train;

pub use dataset::{
    apply_dihedral, augment, load_dataset, resize_to_512, save_dataset, split_dataset, Dihedral,
    DatasetSplit, LabeledImage, DIHEDRAL_ELEMENTS,
};
pub use train::{train, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::img::{Mask, RgbImage};

pub const FEATURE_COUNT: usize = 13;
/// Version tag stored with serialized models; bumped whenever the feature
/// definition changes.
pub const FEATURE_VERSION: &str = "rgb-mean-std-xgrad-bias/1";

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("dataset split '{0}' is empty")]
    EmptySplit(&'static str),
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("rgb is {rgb_w}x{rgb_h} but mask is {mask_w}x{mask_h}")]
    DimensionMismatch { rgb_w: u32, rgb_h: u32, mask_w: u32, mask_h: u32 },
    #[error("operation requires a square image, got {0}x{1}")]
    NonSquareImage(u32, u32),
    #[error("split ratios must sum to 1, got {0}")]
    BadRatios(f64),
    #[error("training diverged at step {step}: loss became non-finite")]
    Diverged { step: usize },
    #[error("invalid training config: {0}")]
    BadTrainConfig(String),
    #[error("model file carries feature version '{0}', expected '{expected}'", expected = FEATURE_VERSION)]
    ModelVersionMismatch(String),
    #[error("model is invalid: {0}")]
    BadModel(String),
    #[error(transparent)]
    Image(#[from] crate::img::ImageError),
    #[error("dataset manifest error: {0}")]
    Manifest(String),
}

/// Anything that turns an RGB image into a binary pickable mask.
pub trait Segmenter {
    fn segment(&self, rgb: &RgbImage) -> Mask;
}

/// Logistic per-pixel classifier over the 13-feature window descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct SegmenterModel {
    pub weights: [f64; FEATURE_COUNT],
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    version: String,
    weights: Vec<f64>,
    threshold: f64,
}

impl From<SegmenterModel> for ModelRepr {
    fn from(m: SegmenterModel) -> Self {
        ModelRepr { version: FEATURE_VERSION.to_string(), weights: m.weights.to_vec(), threshold: m.threshold }
    }
}

impl TryFrom<ModelRepr> for SegmenterModel {
    type Error = VisionError;

    fn try_from(repr: ModelRepr) -> Result<Self, Self::Error> {
        if repr.version != FEATURE_VERSION {
            return Err(VisionError::ModelVersionMismatch(repr.version));
        }
        let weights: [f64; FEATURE_COUNT] = repr
            .weights
            .as_slice()
            .try_into()
            .map_err(|_| VisionError::BadModel(format!("expected {FEATURE_COUNT} weights, got {}", repr.weights.len())))?;
        let model = SegmenterModel { weights, threshold: repr.threshold };
        model.validate()?;
        Ok(model)
    }
}

impl Default for SegmenterModel {
    fn default() -> Self {
        SegmenterModel { weights: [0.0; FEATURE_COUNT], threshold: 0.5 }
    }
}

impl SegmenterModel {
    pub fn validate(&self) -> Result<(), VisionError> {
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(VisionError::BadModel("non-finite weight".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(VisionError::BadModel(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }

    /// Pickable probability for the pixel at (x, y).
    pub fn score(&self, rgb: &RgbImage, x: u32, y: u32) -> f64 {
        let mut f = [0.0; FEATURE_COUNT];
        features_at(rgb, x, y, (1, 0), (0, 1), &mut f);
        sigmoid(dot(&self.weights, &f))
    }
}

impl Segmenter for SegmenterModel {
    /// Thresholded per-pixel scores; probabilities exactly at the threshold
    /// classify as pickable.
    fn segment(&self, rgb: &RgbImage) -> Mask {
        let mut mask = Mask::new(rgb.width(), rgb.height()).expect("nonempty image");
        let mut f = [0.0; FEATURE_COUNT];
        for y in 0..rgb.height() {
            for x in 0..rgb.width() {
                features_at(rgb, x, y, (1, 0), (0, 1), &mut f);
                let p = sigmoid(dot(&self.weights, &f));
                mask.set(x, y, (p >= self.threshold) as u8);
            }
        }
        mask
    }
}

/// Free-function form of [`Segmenter::segment`] for the logistic model.
pub fn segment(model: &SegmenterModel, rgb: &RgbImage) -> Mask {
    Segmenter::segment(model, rgb)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(w: &[f64; FEATURE_COUNT], f: &[f64; FEATURE_COUNT]) -> f64 {
    w.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// Fills the 13-feature descriptor of pixel (x, y).
///
/// `ax`/`ay` are the window's lattice axes; identity is ((1,0), (0,1)).
/// Training passes the axes of a dihedral transform so that augmented
/// samples are featurized exactly as if the whole image had been rotated or
/// flipped first. Out-of-range window cells clamp to the border.
pub(crate) fn features_at(
    rgb: &RgbImage,
    x: u32,
    y: u32,
    ax: (i32, i32),
    ay: (i32, i32),
    out: &mut [f64; FEATURE_COUNT],
) {
    let w = rgb.width() as i32;
    let h = rgb.height() as i32;
    let center = rgb.get(x, y);
    let sample = |dx: i32, dy: i32| -> [f64; 3] {
        let sx = (x as i32 + dx * ax.0 + dy * ay.0).clamp(0, w - 1) as u32;
        let sy = (y as i32 + dx * ax.1 + dy * ay.1).clamp(0, h - 1) as u32;
        rgb.get(sx, sy)
    };

    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    let mut col_right = [0.0; 3];
    let mut col_left = [0.0; 3];
    for dx in -1..=1 {
        for dy in -1..=1 {
            let v = sample(dx, dy);
            for c in 0..3 {
                sum[c] += v[c];
                sum_sq[c] += v[c] * v[c];
                if dx == 1 {
                    col_right[c] += v[c];
                } else if dx == -1 {
                    col_left[c] += v[c];
                }
            }
        }
    }
    for c in 0..3 {
        out[c] = center[c];
        let mean = sum[c] / 9.0;
        out[3 + c] = mean;
        out[6 + c] = (sum_sq[c] / 9.0 - mean * mean).max(0.0).sqrt();
        out[9 + c] = (col_right[c] - col_left[c]) / 6.0;
    }
    out[12] = 1.0;
}

/// Accuracy, precision, recall and intersection-over-union, all in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
}

/// Raw confusion counts, poolable across images.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Metric bundle with the degenerate-denominator rule: a ratio whose
    /// denominator is zero reports 1 when the positive class is absent from
    /// both masks, otherwise 0.
    pub fn metrics(&self) -> Metrics {
        let n = self.tp + self.fp + self.fn_ + self.tn;
        let positives_absent = self.tp + self.fp + self.fn_ == 0;
        let ratio = |num: u64, den: u64| -> f64 {
            if den == 0 {
                if positives_absent { 1.0 } else { 0.0 }
            } else {
                num as f64 / den as f64
            }
        };
        Metrics {
            accuracy: if n == 0 { 1.0 } else { (self.tp + self.tn) as f64 / n as f64 },
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            iou: ratio(self.tp, self.tp + self.fp + self.fn_),
        }
    }
}

/// Confusion counts of a prediction against ground truth.
pub fn confusion(pred: &Mask, truth: &Mask) -> Result<ConfusionCounts, VisionError> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(VisionError::DimensionMismatch {
            rgb_w: pred.width(),
            rgb_h: pred.height(),
            mask_w: truth.width(),
            mask_h: truth.height(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in pred.values().iter().zip(truth.values()) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// Metric bundle of a prediction against ground truth.
pub fn evaluate(pred: &Mask, truth: &Mask) -> Result<Metrics, VisionError> {
    Ok(confusion(pred, truth)?.metrics())
}
