//! Handcrafted quantitative image features over a region of interest.
//!
//! The extractor produces a fixed 107-value vector: 14 shape descriptors of
//! the region treated as a unit-thickness slab, 18 first-order intensity
//! statistics, and 73 texture statistics from five gray-level matrices
//! (co-occurrence, dependence, run-length, size-zone, neighborhood tone
//! difference). Values appear in one canonical order and are always finite:
//! every degenerate case (constant region, single pixel, single gray level)
//! resolves to a documented limit value.

mod firstorder;
mod glcm;
mod gldm;
mod glrlm;
mod glszm;
mod names;
mod ngtdm;
mod shape;
mod table;

pub use names::{FEATURE_NAMES, N_FEATURES};

use crate::error::{Error, Result};

/// Row-major grayscale image.
#[derive(Debug, Clone)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height * width != pixels.len() {
            return Err(Error::ShapeMismatch(format!(
                "image {height}x{width} needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite intensity {bad}")));
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Boolean region of interest with the same dims as its image.
#[derive(Debug, Clone)]
pub struct RegionMask {
    height: usize,
    width: usize,
    mask: Vec<bool>,
}

impl RegionMask {
    pub fn new(height: usize, width: usize, mask: Vec<bool>) -> Result<Self> {
        if height * width != mask.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask {height}x{width} needs {} entries, got {}",
                height * width,
                mask.len()
            )));
        }
        Ok(RegionMask {
            height,
            width,
            mask,
        })
    }

    /// Rasterize an axis-aligned rectangle, clipped to the image bounds.
    pub fn from_rect(
        height: usize,
        width: usize,
        x: usize,
        y: usize,
        rect_w: usize,
        rect_h: usize,
    ) -> Result<Self> {
        if rect_w == 0 || rect_h == 0 || x >= width || y >= height {
            return Err(Error::Data(format!(
                "degenerate region rectangle x={x} y={y} w={rect_w} h={rect_h} in {width}x{height}"
            )));
        }
        let x1 = (x + rect_w).min(width);
        let y1 = (y + rect_h).min(height);
        let mut mask = vec![false; height * width];
        for yy in y..y1 {
            for xx in x..x1 {
                mask[yy * width + xx] = true;
            }
        }
        Ok(RegionMask {
            height,
            width,
            mask,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        RegionMask {
            height,
            width,
            mask: vec![true; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Signed-index lookup treating everything outside the canvas as false.
    pub fn contains_signed(&self, y: isize, x: isize) -> bool {
        y >= 0
            && x >= 0
            && (y as usize) < self.height
            && (x as usize) < self.width
            && self.mask[y as usize * self.width + x as usize]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }
}

/// Extraction settings. Matrix features and the first-order histogram use a
/// fixed intensity width per gray level.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadiomicsSettings {
    pub bin_width: f64,
}

impl Default for RadiomicsSettings {
    fn default() -> Self {
        RadiomicsSettings { bin_width: 25.0 }
    }
}

/// Per-pixel gray levels: 0 marks out-of-mask pixels, in-mask pixels carry
/// levels 1..=ng where ng is the highest observed level.
#[derive(Debug, Clone)]
pub struct QuantizedRegion {
    pub height: usize,
    pub width: usize,
    pub levels: Vec<u32>,
    pub ng: usize,
    pub np: usize,
}

impl QuantizedRegion {
    pub fn level_signed(&self, y: isize, x: isize) -> u32 {
        if y < 0 || x < 0 || y as usize >= self.height || x as usize >= self.width {
            0
        } else {
            self.levels[y as usize * self.width + x as usize]
        }
    }
}

/// Assign each in-mask pixel the gray level
/// `floor((I - min_in_mask) / bin_width) + 1`.
pub fn discretize(img: &GrayImage, mask: &RegionMask, bin_width: f64) -> Result<QuantizedRegion> {
    if img.height != mask.height || img.width != mask.width {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.height, img.width, mask.height, mask.width
        )));
    }
    if bin_width <= 0.0 {
        return Err(Error::Config(format!("bin_width {bin_width} must be positive")));
    }
    let lo = mask
        .indices()
        .map(|i| img.pixels[i])
        .fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        return Err(Error::EmptyMask);
    }
    let mut levels = vec![0u32; img.pixels.len()];
    let mut ng = 0u32;
    let mut np = 0usize;
    for i in mask.indices() {
        let l = ((img.pixels[i] - lo) / bin_width).floor() as u32 + 1;
        levels[i] = l;
        ng = ng.max(l);
        np += 1;
    }
    Ok(QuantizedRegion {
        height: img.height,
        width: img.width,
        levels,
        ng: ng as usize,
        np,
    })
}

/// Region input for [`extract_all`]: an explicit mask or an axis-aligned
/// box rasterized on the fly.
#[derive(Debug, Clone)]
pub enum RegionOfInterest {
    Mask(RegionMask),
    Box {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
}

/// The full feature vector in canonical order, paired with
/// [`FEATURE_NAMES`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadiomicFeatureVector {
    values: Vec<f64>,
}

impl RadiomicFeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, prefixed_name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == prefixed_name)
            .map(|i| self.values[i])
    }

    /// (name, value) pairs in canonical order.
    pub fn named(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES.iter().copied().zip(self.values.iter().copied())
    }
}

/// Compute all 107 features of the region.
pub fn extract_all(
    img: &GrayImage,
    roi: &RegionOfInterest,
    settings: &RadiomicsSettings,
) -> Result<RadiomicFeatureVector> {
    match roi {
        RegionOfInterest::Mask(mask) => extract_from_mask(img, mask, settings),
        RegionOfInterest::Box {
            x,
            y,
            width,
            height,
        } => extract_box(img, *x, *y, *width, *height, settings),
    }
}

/// Compute all 107 features of the masked region.
pub fn extract_from_mask(
    img: &GrayImage,
    mask: &RegionMask,
    settings: &RadiomicsSettings,
) -> Result<RadiomicFeatureVector> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let q = discretize(img, mask, settings.bin_width)?;
    let mut values = Vec::with_capacity(N_FEATURES);
    values.extend(shape::features(mask));
    values.extend(firstorder::features(img, mask, &q));
    values.extend(glcm::features(&q));
    values.extend(gldm::features(&q));
    values.extend(glrlm::features(&q));
    values.extend(glszm::features(&q));
    values.extend(ngtdm::features(&q));
    debug_assert_eq!(values.len(), N_FEATURES);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "feature {} is not finite",
            FEATURE_NAMES[i]
        )));
    }
    Ok(RadiomicFeatureVector { values })
}

/// Convenience wrapper rasterizing a rectangle before extraction.
pub fn extract_box(
    img: &GrayImage,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    settings: &RadiomicsSettings,
) -> Result<RadiomicFeatureVector> {
    let mask = RegionMask::from_rect(img.height, img.width, x, y, w, h)?;
    extract_from_mask(img, &mask, settings)
}

/// The 14 shape descriptors of a region.
pub fn shape_features(mask: &RegionMask) -> Result<Vec<f64>> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(shape::features(mask))
}

/// The 18 first-order intensity statistics.
pub fn first_order(
    img: &GrayImage,
    mask: &RegionMask,
    settings: &RadiomicsSettings,
) -> Result<Vec<f64>> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let q = discretize(img, mask, settings.bin_width)?;
    Ok(firstorder::features(img, mask, &q))
}

/// The 24 co-occurrence features.
pub fn glcm_features(q: &QuantizedRegion) -> Vec<f64> {
    glcm::features(q)
}

/// The 14 dependence features.
pub fn gldm_features(q: &QuantizedRegion) -> Vec<f64> {
    gldm::features(q)
}

/// The 16 run-length features.
pub fn glrlm_features(q: &QuantizedRegion) -> Vec<f64> {
    glrlm::features(q)
}

/// The 16 size-zone features.
pub fn glszm_features(q: &QuantizedRegion) -> Vec<f64> {
    glszm::features(q)
}

/// The 5 tone-difference features.
pub fn ngtdm_features(q: &QuantizedRegion) -> Vec<f64> {
    ngtdm::features(q)
}

/// Normalized co-occurrence matrices per direction, for diagnostics: each
/// entry is ((dy, dx), row-major ng×ng probabilities). Directions that saw
/// no pairs are omitted.
pub fn glcm_matrices(q: &QuantizedRegion) -> Vec<((isize, isize), Vec<f64>)> {
    glcm::matrices(q)
}

/// Eigenvalues of a small symmetric matrix via cyclic Jacobi rotations,
/// returned in descending order. Used for the principal-axis lengths and the
/// co-occurrence correlation spectrum.
pub(crate) fn sym_eigenvalues(mat: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(mat.len(), n * n);
    let mut a = mat.to_vec();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
    eig
}
