//! Labeled images, dataset splits, dihedral augmentation, and the on-disk
//! dataset format (paired PPM/PGM files plus a JSON manifest).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VisionError;
use crate::img::{Mask, RgbImage};

/// An RGB image paired with its pickable-region mask. Dimensions always
/// agree.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub rgb: RgbImage,
    pub mask: Mask,
}

impl LabeledImage {
    pub fn new(rgb: RgbImage, mask: Mask) -> Result<Self, VisionError> {
        if rgb.width() != mask.width() || rgb.height() != mask.height() {
            return Err(VisionError::DimensionMismatch {
                rgb_w: rgb.width(),
                rgb_h: rgb.height(),
                mask_w: mask.width(),
                mask_h: mask.height(),
            });
        }
        Ok(LabeledImage { rgb, mask })
    }

    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }
}

/// Disjoint train/validation/test partition.
#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<LabeledImage>,
    pub validation: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

/// The eight symmetries of a square image: rotations by multiples of 90
/// degrees and reflections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    Transpose,
    AntiTranspose,
}

pub const DIHEDRAL_ELEMENTS: [Dihedral; 8] = [
    Dihedral::Identity,
    Dihedral::Rot90,
    Dihedral::Rot180,
    Dihedral::Rot270,
    Dihedral::FlipH,
    Dihedral::FlipV,
    Dihedral::Transpose,
    Dihedral::AntiTranspose,
];

impl Dihedral {
    /// Destination of source pixel (x, y) in an n-by-n image.
    pub fn map(self, x: u32, y: u32, n: u32) -> (u32, u32) {
        let m = n - 1;
        match self {
            Dihedral::Identity => (x, y),
            Dihedral::Rot90 => (m - y, x),
            Dihedral::Rot180 => (m - x, m - y),
            Dihedral::Rot270 => (y, m - x),
            Dihedral::FlipH => (m - x, y),
            Dihedral::FlipV => (x, m - y),
            Dihedral::Transpose => (y, x),
            Dihedral::AntiTranspose => (m - y, m - x),
        }
    }

    /// Linear part of the inverse map: where the transformed image's +x and
    /// +y axes point in source coordinates. Used to featurize augmented
    /// samples without materializing the transformed image.
    pub fn inverse_axes(self) -> ((i32, i32), (i32, i32)) {
        match self {
            Dihedral::Identity => ((1, 0), (0, 1)),
            Dihedral::Rot90 => ((0, -1), (1, 0)),
            Dihedral::Rot180 => ((-1, 0), (0, -1)),
            Dihedral::Rot270 => ((0, 1), (-1, 0)),
            Dihedral::FlipH => ((-1, 0), (0, 1)),
            Dihedral::FlipV => ((1, 0), (0, -1)),
            Dihedral::Transpose => ((0, 1), (1, 0)),
            Dihedral::AntiTranspose => ((0, -1), (-1, 0)),
        }
    }
}

/// Applies one dihedral element to rgb and mask identically. Requires a
/// square image.
pub fn apply_dihedral(img: &LabeledImage, elem: Dihedral) -> LabeledImage {
    let n = img.width();
    assert_eq!(n, img.height(), "dihedral transforms require square images");
    let mut rgb = RgbImage::new(n, n).expect("nonempty");
    let mut mask = Mask::new(n, n).expect("nonempty");
    for y in 0..n {
        for x in 0..n {
            let (tx, ty) = elem.map(x, y, n);
            rgb.set(tx, ty, img.rgb.get(x, y));
            mask.set(tx, ty, img.mask.get(x, y));
        }
    }
    LabeledImage { rgb, mask }
}

/// A uniformly drawn rotation/flip of a square labeled image.
pub fn augment(img: &LabeledImage, rng: &mut ChaCha8Rng) -> Result<LabeledImage, VisionError> {
    if img.width() != img.height() {
        return Err(VisionError::NonSquareImage(img.width(), img.height()));
    }
    let elem = DIHEDRAL_ELEMENTS[rng.random_range(0..DIHEDRAL_ELEMENTS.len())];
    Ok(apply_dihedral(img, elem))
}

/// Bilinear-resamples the color channels and nearest-neighbor-resamples the
/// mask to 512x512.
pub fn resize_to_512(img: &LabeledImage) -> Result<LabeledImage, VisionError> {
    resize_to(img, 512, 512)
}

pub fn resize_to(img: &LabeledImage, width: u32, height: u32) -> Result<LabeledImage, VisionError> {
    if width == 0 || height == 0 {
        return Err(VisionError::EmptyImage);
    }
    LabeledImage::new(img.rgb.resize_bilinear(width, height)?, img.mask.resize_nearest(width, height)?)
}

/// Deterministic shuffle + largest-remainder split.
///
/// Ratios must sum to 1 within 1e-9. Every input image lands in exactly one
/// split; remainder seats go to the splits with the largest fractional
/// quota, ties resolved in train/validation/test order.
pub fn split_dataset(
    mut imgs: Vec<LabeledImage>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, VisionError> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 || ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(VisionError::BadRatios(sum));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    imgs.shuffle(&mut rng);

    let n = imgs.len();
    let quotas = [ratios.0 * n as f64, ratios.1 * n as f64, ratios.2 * n as f64];
    let mut sizes = [quotas[0].floor() as usize, quotas[1].floor() as usize, quotas[2].floor() as usize];
    let mut remainders: Vec<(usize, f64)> =
        quotas.iter().enumerate().map(|(i, q)| (i, q - q.floor())).collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut leftover = n - sizes.iter().sum::<usize>();
    for (i, _) in remainders {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }

    let test = imgs.split_off(sizes[0] + sizes[1]);
    let validation = imgs.split_off(sizes[0]);
    Ok(DatasetSplit { train: imgs, validation, test })
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    rgb: String,
    mask: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    width: u32,
    height: u32,
    images: Vec<ManifestEntry>,
}

/// Writes images as `img_NNNN.ppm` / `img_NNNN.pgm` pairs plus
/// `manifest.json` into `dir`.
pub fn save_dataset<P: AsRef<Path>>(dir: P, imgs: &[LabeledImage]) -> Result<(), VisionError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(crate::img::ImageError::Io)?;
    let mut manifest = Manifest {
        width: imgs.first().map_or(0, |i| i.width()),
        height: imgs.first().map_or(0, |i| i.height()),
        images: Vec::with_capacity(imgs.len()),
    };
    for (i, img) in imgs.iter().enumerate() {
        let rgb_name = format!("img_{i:04}.ppm");
        let mask_name = format!("img_{i:04}.pgm");
        img.rgb.save_ppm(dir.join(&rgb_name))?;
        img.mask.save_pgm(dir.join(&mask_name))?;
        manifest.images.push(ManifestEntry { rgb: rgb_name, mask: mask_name });
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| VisionError::Manifest(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json).map_err(crate::img::ImageError::Io)?;
    Ok(())
}

/// Loads a dataset directory written by [`save_dataset`].
pub fn load_dataset<P: AsRef<Path>>(dir: P) -> Result<Vec<LabeledImage>, VisionError> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join("manifest.json")).map_err(crate::img::ImageError::Io)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| VisionError::Manifest(e.to_string()))?;
    manifest
        .images
        .iter()
        .map(|e| {
            LabeledImage::new(RgbImage::load_ppm(dir.join(&e.rgb))?, Mask::load_pgm(dir.join(&e.mask))?)
        })
        .collect()
}
