//! Dataset plumbing: a seeded synthetic corpus with known (held-out) boxes,
//! leakage-safe patient-level splitting, and image preprocessing.
//!
//! Ground-truth boxes exist only for evaluation. The trainer receives
//! [`TrainItem`] views, a type with no box field, so training code cannot
//! read localization labels even by accident.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::byoa::{BoundingBox, ClassBoxPrior, PriorDims};
use crate::error::{Error, Result};
use crate::radiomics::GrayImage;
use crate::tensor::Tensor;

/// One corpus entry. `gt_boxes` is consulted only by evaluation code.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: GrayImage,
    pub labels: Vec<u8>,
    pub patient_id: String,
    pub gt_boxes: Vec<BoundingBox>,
}

/// What the trainer is allowed to see: no ground-truth boxes, by type.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a> {
    pub image: &'a GrayImage,
    pub labels: &'a [u8],
    pub patient_id: &'a str,
}

impl Sample {
    pub fn train_view(&self) -> TrainItem<'_> {
        TrainItem {
            image: &self.image,
            labels: &self.labels,
            patient_id: &self.patient_id,
        }
    }
}

/// Generator settings. The seed fully determines the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub image_size: usize,
    pub class_count: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Side of the square footprint a pathology blob occupies.
    pub blob_size: usize,
    /// Mean intensity lift of a blob over the local background.
    pub blob_contrast: f64,
    /// Standard deviation of the correlated background noise.
    pub noise_level: f64,
    /// Spatial frequency (radians per pixel) of the grating classes.
    pub texture_frequency: f64,
    /// Baseline background intensity.
    pub base_level: f64,
    /// Consecutive samples sharing one patient id.
    pub samples_per_patient: usize,
    /// Probability that any given class is positive in a sample.
    pub positive_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            image_size: 64,
            class_count: 2,
            train_count: 500,
            val_count: 100,
            test_count: 100,
            blob_size: 16,
            blob_contrast: 0.35,
            noise_level: 0.06,
            texture_frequency: 0.9,
            base_level: 0.3,
            samples_per_patient: 2,
            positive_rate: 0.5,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    const MARGIN: usize = 2;

    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.class_count > 4 {
            return Err(Error::Config(format!(
                "class_count must be 1..=4, got {}",
                self.class_count
            )));
        }
        if self.blob_size < 4 || self.blob_size + 2 * Self::MARGIN > self.image_size {
            return Err(Error::Config(format!(
                "blob size {} does not fit a {} px image",
                self.blob_size, self.image_size
            )));
        }
        if self.train_count + self.val_count + self.test_count == 0 {
            return Err(Error::Config("empty corpus requested".into()));
        }
        if self.samples_per_patient == 0 {
            return Err(Error::Config("samples_per_patient must be positive".into()));
        }
        if !(self.positive_rate >= 0.0 && self.positive_rate <= 1.0) {
            return Err(Error::Config(format!(
                "positive_rate must be in [0, 1], got {}",
                self.positive_rate
            )));
        }
        if !(self.blob_contrast >= 0.0 && self.noise_level >= 0.0 && self.base_level >= 0.0) {
            return Err(Error::Config(
                "contrast, noise and base level must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Blob footprint (height, width) per class; also the exported priors.
    fn blob_dims(&self, class_id: usize) -> (usize, usize) {
        let r = self.blob_size / 2;
        match class_id % 4 {
            0 => (2 * r + 1, 2 * r + 1), // disk
            _ => (self.blob_size, self.blob_size),
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        const NAMES: [&str; 4] = ["disk", "grating", "bands", "ring"];
        (0..self.class_count).map(|c| NAMES[c % 4].to_string()).collect()
    }
}

/// A generated corpus plus the per-class box priors the box pipeline needs.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub samples: Vec<Sample>,
    pub priors: ClassBoxPrior,
    pub class_names: Vec<String>,
}

/// 3x3 box blur, repeated to correlate the noise field spatially.
fn box_blur(field: &mut Vec<f64>, size: usize, passes: usize) {
    for _ in 0..passes {
        let src = field.clone();
        for y in 0..size {
            for x in 0..size {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                        if ny >= 0 && nx >= 0 && (ny as usize) < size && (nx as usize) < size {
                            acc += src[ny as usize * size + nx as usize];
                            n += 1.0;
                        }
                    }
                }
                field[y * size + x] = acc / n;
            }
        }
    }
}

/// Stamp the class pattern with its top-left corner at (y0, x0); the mean
/// lift over the stamped pixels is the configured contrast.
fn stamp_blob(pixels: &mut [f64], size: usize, class_id: usize, y0: usize, x0: usize, cfg: &SyntheticConfig) {
    let c = cfg.blob_contrast;
    let (bh, bw) = cfg.blob_dims(class_id);
    match class_id % 4 {
        0 => {
            let r = (bh / 2) as f64;
            for dy in 0..bh {
                for dx in 0..bw {
                    let (fy, fx) = (dy as f64 - r, dx as f64 - r);
                    if fy * fy + fx * fx <= r * r + 0.25 {
                        pixels[(y0 + dy) * size + (x0 + dx)] += c;
                    }
                }
            }
        }
        1 | 2 => {
            for dy in 0..bh {
                for dx in 0..bw {
                    let along = if class_id % 4 == 1 { dx } else { dy } as f64;
                    let wave = (cfg.texture_frequency * along).sin();
                    pixels[(y0 + dy) * size + (x0 + dx)] += c * (1.0 + 0.5 * wave);
                }
            }
        }
        _ => {
            let r = bh as f64 / 2.0;
            for dy in 0..bh {
                for dx in 0..bw {
                    let (fy, fx) = (dy as f64 + 0.5 - r, dx as f64 + 0.5 - r);
                    let d = (fy * fy + fx * fx).sqrt();
                    if d <= r && d >= r - 3.0 {
                        pixels[(y0 + dy) * size + (x0 + dx)] += c;
                    }
                }
            }
        }
    }
}

/// Build the full corpus. Every positive class stamps one blob at a random
/// in-bounds location and records its exact bounding box as ground truth.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let size = cfg.image_size;
    let total = cfg.train_count + cfg.val_count + cfg.test_count;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(total);

    for i in 0..total {
        let mut pixels = vec![0.0f64; size * size];
        for v in &mut pixels {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z;
        }
        box_blur(&mut pixels, size, 2);
        for v in &mut pixels {
            *v = cfg.base_level + *v * cfg.noise_level;
        }

        let mut labels = vec![0u8; cfg.class_count];
        let mut gt_boxes = Vec::new();
        for class_id in 0..cfg.class_count {
            if rng.gen_range(0.0..1.0) >= cfg.positive_rate {
                continue;
            }
            labels[class_id] = 1;
            let (bh, bw) = cfg.blob_dims(class_id);
            let y0 = rng.gen_range(SyntheticConfig::MARGIN..=size - bh - SyntheticConfig::MARGIN);
            let x0 = rng.gen_range(SyntheticConfig::MARGIN..=size - bw - SyntheticConfig::MARGIN);
            stamp_blob(&mut pixels, size, class_id, y0, x0, cfg);
            gt_boxes.push(BoundingBox {
                x: x0,
                y: y0,
                width: bw,
                height: bh,
                class_id,
            });
        }

        for v in &mut pixels {
            *v = v.clamp(0.0, 1.0);
        }
        samples.push(Sample {
            image: GrayImage::new(size, size, pixels)?,
            labels,
            patient_id: format!("p{:05}", i / cfg.samples_per_patient),
            gt_boxes,
        });
    }

    let priors = ClassBoxPrior::new(
        (0..cfg.class_count)
            .map(|c| {
                let (h, w) = cfg.blob_dims(c);
                PriorDims {
                    height: h as f64,
                    width: w as f64,
                }
            })
            .collect(),
    )?;
    Ok(SyntheticDataset {
        samples,
        priors,
        class_names: cfg.class_names(),
    })
}

/// Partition samples into train/val/test without splitting any patient
/// across subsets. Fractions apply to patient groups via largest-remainder
/// rounding; groups are shuffled by the seed first.
pub fn split_by_group(
    samples: Vec<Sample>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<[Vec<Sample>; 3]> {
    if fractions.iter().any(|f| *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be nonnegative and sum to 1, got {fractions:?}"
        )));
    }
    let mut groups: Vec<String> = Vec::new();
    for s in &samples {
        if !groups.contains(&s.patient_id) {
            groups.push(s.patient_id.clone());
        }
    }
    if groups.len() < 3 {
        return Err(Error::Data(format!(
            "need at least 3 patient groups to split, have {}",
            groups.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    // Largest-remainder allocation of group counts.
    let n = groups.len();
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut leftover = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(3 * 2) {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }

    let assignment = |pid: &str| -> usize {
        let idx = groups.iter().position(|g| g == pid).expect("known group");
        if idx < counts[0] {
            0
        } else if idx < counts[0] + counts[1] {
            1
        } else {
            2
        }
    };
    let mut out: [Vec<Sample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for s in samples {
        let split = assignment(&s.patient_id);
        out[split].push(s);
    }
    Ok(out)
}

/// Bilinear resampling with half-pixel centers; same-size input copies
/// through exactly.
pub fn resize_bilinear(img: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Config("resize target must be non-empty".into()));
    }
    let (h, w) = (img.height(), img.width());
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).max(0.0);
        let y0 = (fy.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).max(0.0);
            let x0 = (fx.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = img.at(y0, x0) * (1.0 - tx) + img.at(y0, x1) * tx;
            let bot = img.at(y1, x0) * (1.0 - tx) + img.at(y1, x1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    GrayImage::new(out_h, out_w, out)
}

/// Crop `size` pixels from the middle, offset rounded down on both axes.
pub fn center_crop(img: &GrayImage, size: usize) -> Result<GrayImage> {
    if size > img.height() || size > img.width() {
        return Err(Error::Config(format!(
            "cannot crop {size} px from a {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let oy = (img.height() - size) / 2;
    let ox = (img.width() - size) / 2;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            out.push(img.at(oy + y, ox + x));
        }
    }
    GrayImage::new(size, size, out)
}

pub fn hflip(img: &GrayImage) -> GrayImage {
    let (h, w) = (img.height(), img.width());
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(img.at(y, w - 1 - x));
        }
    }
    GrayImage::new(h, w, out).expect("same shape")
}

/// Pixel statistics used for the final normalization step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreprocessMode {
    Train,
    Eval,
}

/// Eval inputs are first resized to 8/7 of the target and center-cropped.
pub fn eval_resize_target(size: usize) -> usize {
    ((size as f64) * 8.0 / 7.0).round() as usize
}

/// Resize (train) or resize-and-crop (eval), min-max to [0, 1], then
/// normalize by the supplied stats. `flip` only applies in train mode.
pub fn preprocess(
    img: &GrayImage,
    size: usize,
    mode: PreprocessMode,
    stats: Option<ChannelStats>,
    flip: bool,
) -> Result<Tensor> {
    let shaped = match mode {
        PreprocessMode::Train => resize_bilinear(img, size, size)?,
        PreprocessMode::Eval => {
            let big = eval_resize_target(size);
            center_crop(&resize_bilinear(img, big, big)?, size)?
        }
    };
    let lo = shaped.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = shaped.pixels().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mut data: Vec<f64> = shaped.pixels().iter().map(|v| (v - lo) / range).collect();
    if let Some(st) = stats {
        if !(st.std > 0.0 && st.std.is_finite() && st.mean.is_finite()) {
            return Err(Error::Config(format!(
                "channel stats need a positive finite std, got mean {} std {}",
                st.mean, st.std
            )));
        }
        for v in &mut data {
            *v = (*v - st.mean) / st.std;
        }
    }
    if flip && mode == PreprocessMode::Train {
        for row in data.chunks_exact_mut(size) {
            row.reverse();
        }
    }
    Tensor::from_vec(&[size, size], data)
}

/// Map a box predicted on the eval-preprocessed canvas back to original
/// image coordinates (undo the center crop, then the resize).
pub fn map_box_to_original(b: &BoundingBox, size: usize, orig_h: usize, orig_w: usize) -> BoundingBox {
    let big = eval_resize_target(size);
    let (crop_y, crop_x) = ((big - size) / 2, (big - size) / 2);
    let sy = orig_h as f64 / big as f64;
    let sx = orig_w as f64 / big as f64;
    let x0 = ((b.x + crop_x) as f64 * sx).round() as usize;
    let y0 = ((b.y + crop_y) as f64 * sy).round() as usize;
    let x1 = (((b.x + b.width + crop_x) as f64 * sx).round() as usize).min(orig_w);
    let y1 = (((b.y + b.height + crop_y) as f64 * sy).round() as usize).min(orig_h);
    let x0 = x0.min(x1.saturating_sub(1));
    let y0 = y0.min(y1.saturating_sub(1));
    BoundingBox {
        x: x0,
        y: y0,
        width: (x1 - x0).max(1),
        height: (y1 - y0).max(1),
        class_id: b.class_id,
    }
}

/// One manifest line: where the image lives, its labels, and its group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub labels: Vec<u8>,
    pub patient_id: String,
}

/// One ground-truth box entry in the evaluation-only boxes file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthEntry {
    pub path: String,
    pub bbox: BoundingBox,
}
