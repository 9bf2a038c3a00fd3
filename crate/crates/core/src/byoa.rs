//! Turns a saliency map into bounding boxes: keep the brightest fraction of
//! pixels, smooth and grow the survivors into blobs, label connected
//! components, then box every component whose center of mass lands on a
//! bright-enough pixel. Train mode draws a fixed per-class box size around
//! that center; test mode fits the box to the blob itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiomics::RegionMask;

/// Per-pixel nonnegative saliency, max-normalized to [0, 1] on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl AttentionMap {
    /// Accepts any finite nonnegative values and rescales them so the peak
    /// is exactly 1 (an all-zero map stays all zero).
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Data("attention map must be non-empty".into()));
        }
        if height * width != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "attention map {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numeric(
                "attention values must be finite and nonnegative".into(),
            ));
        }
        let mut values = values;
        let max = values.iter().cloned().fold(0.0f64, f64::max);
        if max > 0.0 {
            for v in &mut values {
                *v /= max;
            }
        }
        Ok(AttentionMap {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    Eight,
}

/// Train mode draws the class's mean-sized box around each center of mass;
/// test mode relaxes that and fits the tight rectangle of the grown blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxMode {
    Train,
    Test,
}

/// Whether the center of mass weighs pixels by their saliency or counts them
/// equally. A component with zero total saliency falls back to the unweighted
/// centroid either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentroidWeighting {
    Attention,
    Uniform,
}

/// Knobs for the box pipeline. `keep_fraction` is the fraction of pixels that
/// survive thresholding; `gate_fraction` is the fraction of the intensity
/// distribution a center of mass must reach to emit a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ByoaConfig {
    pub keep_fraction: f64,
    pub max_filter_radius: usize,
    pub dilation_iterations: usize,
    pub connectivity: Connectivity,
    pub gate_fraction: f64,
    pub centroid_weighting: CentroidWeighting,
    pub mode: BoxMode,
}

impl Default for ByoaConfig {
    fn default() -> Self {
        ByoaConfig {
            keep_fraction: 0.1,
            max_filter_radius: 1,
            dilation_iterations: 5,
            connectivity: Connectivity::Eight,
            gate_fraction: 0.1,
            centroid_weighting: CentroidWeighting::Attention,
            mode: BoxMode::Train,
        }
    }
}

impl ByoaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "keep_fraction must be in (0, 1], got {}",
                self.keep_fraction
            )));
        }
        if !(self.gate_fraction > 0.0 && self.gate_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "gate_fraction must be in (0, 1], got {}",
                self.gate_fraction
            )));
        }
        Ok(())
    }
}

/// Mean box height and width for one class, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorDims {
    pub height: f64,
    pub width: f64,
}

/// Mean box dimensions per class, indexed by class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassBoxPrior {
    dims: Vec<PriorDims>,
}

impl ClassBoxPrior {
    pub fn new(dims: Vec<PriorDims>) -> Result<Self> {
        for (class_id, d) in dims.iter().enumerate() {
            if !(d.height.is_finite() && d.width.is_finite() && d.height > 0.0 && d.width > 0.0) {
                return Err(Error::Config(format!(
                    "box prior for class {class_id} must have positive finite dims, got {}x{}",
                    d.height, d.width
                )));
            }
        }
        Ok(ClassBoxPrior { dims })
    }

    pub fn dims(&self, class_id: usize) -> Result<PriorDims> {
        self.dims.get(class_id).copied().ok_or_else(|| {
            Error::Config(format!(
                "no box prior for class {class_id} (have {})",
                self.dims.len()
            ))
        })
    }

    pub fn class_count(&self) -> usize {
        self.dims.len()
    }
}

/// Axis-aligned box in integer pixel units, clipped to its image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub class_id: usize,
}

impl BoundingBox {
    /// Fallback box covering the full canvas, used by the trainer when no
    /// component survives the gate.
    pub fn whole_image(height: usize, width: usize, class_id: usize) -> Self {
        BoundingBox {
            x: 0,
            y: 0,
            width,
            height,
            class_id,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// A box plus the saliency at the center of mass it was drawn around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub score: f64,
}

/// One connected region of the thresholded-and-grown mask. Pixels are sorted
/// row-major; the center of mass is rounded to the nearest pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
    pub center_of_mass: (usize, usize),
}

/// Value of the k-th largest entry where k covers `fraction` of the input;
/// keeping everything `>=` the result keeps that fraction plus any ties.
fn top_fraction_threshold(values: &[f64], fraction: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    // The epsilon guards against fraction * n landing one ulp above an
    // integer and ceiling one rank too far.
    let k = ((fraction * n as f64) - 1e-9).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Binary mask of the pixels at or above the top-`keep_fraction` intensity
/// rank. Ties at the rank value are all kept, so a constant map survives
/// whole.
pub fn threshold_top_fraction(map: &AttentionMap, keep_fraction: f64) -> Result<RegionMask> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "keep_fraction must be in (0, 1], got {keep_fraction}"
        )));
    }
    let t = top_fraction_threshold(map.values(), keep_fraction);
    RegionMask::new(
        map.height(),
        map.width(),
        map.values().iter().map(|&v| v >= t).collect(),
    )
}

/// Binary dilation: a pixel turns on if any structuring-element offset hits a
/// set pixel.
fn dilate(mask: &RegionMask, offsets: &[(isize, isize)]) -> RegionMask {
    let (h, w) = (mask.height(), mask.width());
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = offsets
                .iter()
                .any(|&(dy, dx)| mask.contains_signed(y as isize + dy, x as isize + dx));
        }
    }
    RegionMask::new(h, w, out).expect("dilation preserves dimensions")
}

/// Maximum filter over a square window, then the configured number of binary
/// dilations with a 3x3 cross.
pub fn smooth_and_grow(mask: &RegionMask, config: &ByoaConfig) -> RegionMask {
    let r = config.max_filter_radius as isize;
    let square: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .collect();
    let cross = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];
    let mut out = dilate(mask, &square);
    for _ in 0..config.dilation_iterations {
        out = dilate(&out, &cross);
    }
    out
}

/// Label the mask's connected components and compute each one's center of
/// mass over the original map.
pub fn connected_components(
    map: &AttentionMap,
    mask: &RegionMask,
    config: &ByoaConfig,
) -> Vec<Component> {
    let (h, w) = (mask.height(), mask.width());
    let offsets: &[(isize, isize)] = match config.connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ],
    };
    let mut claimed = vec![false; h * w];
    let mut components = Vec::new();
    for start in 0..h * w {
        if !mask.contains(start / w, start % w) || claimed[start] {
            continue;
        }
        let mut pixels = Vec::new();
        let mut stack = vec![start];
        claimed[start] = true;
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            pixels.push((y, x));
            for &(dy, dx) in offsets {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if mask.contains_signed(ny, nx) && !claimed[ny as usize * w + nx as usize] {
                    claimed[ny as usize * w + nx as usize] = true;
                    stack.push(ny as usize * w + nx as usize);
                }
            }
        }
        pixels.sort_unstable();
        components.push(Component {
            center_of_mass: center_of_mass(map, &pixels, config.centroid_weighting),
            pixels,
        });
    }
    components
}

fn center_of_mass(
    map: &AttentionMap,
    pixels: &[(usize, usize)],
    weighting: CentroidWeighting,
) -> (usize, usize) {
    let weigh = |mode: CentroidWeighting| -> (f64, f64, f64) {
        let mut total = 0.0;
        let mut sum_y = 0.0;
        let mut sum_x = 0.0;
        for &(y, x) in pixels {
            let wgt = match mode {
                CentroidWeighting::Attention => map.at(y, x),
                CentroidWeighting::Uniform => 1.0,
            };
            total += wgt;
            sum_y += wgt * y as f64;
            sum_x += wgt * x as f64;
        }
        (total, sum_y, sum_x)
    };
    let (mut total, mut sum_y, mut sum_x) = weigh(weighting);
    if total == 0.0 {
        (total, sum_y, sum_x) = weigh(CentroidWeighting::Uniform);
    }
    ((sum_y / total).round() as usize, (sum_x / total).round() as usize)
}

/// Draw a box for every component whose center-of-mass pixel reaches the top
/// `gate_fraction` of the map's intensity distribution, ordered by descending
/// center-of-mass saliency.
pub fn emit_boxes(
    components: &[Component],
    map: &AttentionMap,
    prior: &ClassBoxPrior,
    class_id: usize,
    config: &ByoaConfig,
) -> Result<Vec<ScoredBox>> {
    let gate = top_fraction_threshold(map.values(), config.gate_fraction);
    let mut scored: Vec<(f64, usize, usize, BoundingBox)> = Vec::new();
    for comp in components {
        let (cy, cx) = comp.center_of_mass;
        let score = map.at(cy, cx);
        if score < gate {
            continue;
        }
        let bbox = match config.mode {
            BoxMode::Train => {
                let dims = prior.dims(class_id)?;
                prior_box(map, cy, cx, dims, class_id)
            }
            BoxMode::Test => tight_box(&comp.pixels, class_id),
        };
        scored.push((score, cy, cx, bbox));
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    Ok(scored
        .into_iter()
        .map(|(score, _, _, bbox)| ScoredBox { bbox, score })
        .collect())
}

/// Box of the class's mean dimensions centered on the given pixel, clipped to
/// the canvas (so a center near the border yields a smaller box).
fn prior_box(map: &AttentionMap, cy: usize, cx: usize, dims: PriorDims, class_id: usize) -> BoundingBox {
    let bw = (dims.width.round() as isize).max(1);
    let bh = (dims.height.round() as isize).max(1);
    let x0 = cx as isize - bw / 2;
    let y0 = cy as isize - bh / 2;
    let x_lo = x0.max(0);
    let y_lo = y0.max(0);
    let x_hi = (x0 + bw).min(map.width() as isize);
    let y_hi = (y0 + bh).min(map.height() as isize);
    BoundingBox {
        x: x_lo as usize,
        y: y_lo as usize,
        width: (x_hi - x_lo) as usize,
        height: (y_hi - y_lo) as usize,
        class_id,
    }
}

fn tight_box(pixels: &[(usize, usize)], class_id: usize) -> BoundingBox {
    let y_min = pixels.iter().map(|p| p.0).min().expect("non-empty component");
    let y_max = pixels.iter().map(|p| p.0).max().expect("non-empty component");
    let x_min = pixels.iter().map(|p| p.1).min().expect("non-empty component");
    let x_max = pixels.iter().map(|p| p.1).max().expect("non-empty component");
    BoundingBox {
        x: x_min,
        y: y_min,
        width: x_max - x_min + 1,
        height: y_max - y_min + 1,
        class_id,
    }
}

/// Full pipeline with per-box scores: threshold, smooth and grow, label
/// components, emit gated boxes. Deterministic in both content and order.
pub fn byoa_scored(
    map: &AttentionMap,
    prior: &ClassBoxPrior,
    class_id: usize,
    config: &ByoaConfig,
) -> Result<Vec<ScoredBox>> {
    config.validate()?;
    let kept = threshold_top_fraction(map, config.keep_fraction)?;
    let grown = smooth_and_grow(&kept, config);
    let components = connected_components(map, &grown, config);
    emit_boxes(&components, map, prior, class_id, config)
}

/// Full pipeline, boxes only.
pub fn byoa(
    map: &AttentionMap,
    prior: &ClassBoxPrior,
    class_id: usize,
    config: &ByoaConfig,
) -> Result<Vec<BoundingBox>> {
    Ok(byoa_scored(map, prior, class_id, config)?
        .into_iter()
        .map(|s| s.bbox)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(height: usize, width: usize, bright: &[(usize, usize, f64)]) -> AttentionMap {
        let mut values = vec![0.0; height * width];
        for &(y, x, v) in bright {
            values[y * width + x] = v;
        }
        AttentionMap::new(height, width, values).unwrap()
    }

    fn block(y0: usize, x0: usize, side: usize, v: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                out.push((y, x, v));
            }
        }
        out
    }

    fn prior8x8() -> ClassBoxPrior {
        ClassBoxPrior::new(vec![PriorDims {
            height: 8.0,
            width: 8.0,
        }])
        .unwrap()
    }

    #[test]
    fn keeps_exactly_the_top_fraction() {
        // 37 is coprime to 100, so this is a permutation of 0..100.
        let values: Vec<f64> = (0..100).map(|i| (i * 37 % 100) as f64).collect();
        let map = AttentionMap::new(10, 10, values.clone()).unwrap();
        let kept = threshold_top_fraction(&map, 0.1).unwrap();
        assert_eq!(kept.count(), 10);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let cutoff = sorted[90]; // ten largest of one hundred
        for (i, &v) in values.iter().enumerate() {
            assert_eq!(kept.contains(i / 10, i % 10), v >= cutoff);
        }
    }

    #[test]
    fn degenerate_fractions_keep_everything() {
        let values: Vec<f64> = (0..36).map(|i| (i * 7 % 36) as f64).collect();
        let map = AttentionMap::new(6, 6, values).unwrap();
        assert_eq!(threshold_top_fraction(&map, 1.0).unwrap().count(), 36);

        let uniform = AttentionMap::new(6, 6, vec![0.5; 36]).unwrap();
        assert_eq!(threshold_top_fraction(&uniform, 0.1).unwrap().count(), 36);
    }

    #[test]
    fn smoothing_matches_brute_force_morphology() {
        let mut bits = vec![false; 15 * 15];
        bits[7 * 15 + 7] = true;
        let mask = RegionMask::new(15, 15, bits).unwrap();
        let config = ByoaConfig::default();
        let grown = smooth_and_grow(&mask, &config);

        // Independent check: the grown region is every pixel within L1
        // distance 5 of the radius-1 square around the seed.
        let mut expected = 0usize;
        for y in 0..15usize {
            for x in 0..15usize {
                let dy = (y as isize - 7).abs().max(1) - 1;
                let dx = (x as isize - 7).abs().max(1) - 1;
                let inside = dy + dx <= 5;
                expected += inside as usize;
                assert_eq!(grown.contains(y, x), inside, "mismatch at ({y}, {x})");
            }
        }
        assert_eq!(grown.count(), expected);
        assert_eq!(grown.count(), 109);

        let empty = RegionMask::new(15, 15, vec![false; 225]).unwrap();
        assert_eq!(smooth_and_grow(&empty, &config).count(), 0);
        let full = RegionMask::full(15, 15);
        assert_eq!(smooth_and_grow(&full, &config).count(), 225);
    }

    #[test]
    fn components_respect_connectivity() {
        let map = map_with(4, 4, &[]);
        // Two pixels touching only at a corner.
        let mut bits = vec![false; 16];
        bits[0] = true;
        bits[1] = true;
        bits[4 + 2] = true;
        let mask = RegionMask::new(4, 4, bits).unwrap();

        let mut config = ByoaConfig::default();
        config.connectivity = Connectivity::Eight;
        assert_eq!(connected_components(&map, &mask, &config).len(), 1);
        config.connectivity = Connectivity::Four;
        assert_eq!(connected_components(&map, &mask, &config).len(), 2);

        // Two disjoint 2x2 blocks.
        let mut bits = vec![false; 8 * 8];
        for (y, x) in [(0, 0), (0, 1), (1, 0), (1, 1), (5, 5), (5, 6), (6, 5), (6, 6)] {
            bits[y * 8 + x] = true;
        }
        let mask = RegionMask::new(8, 8, bits).unwrap();
        let map = map_with(8, 8, &[]);
        let comps = connected_components(&map, &mask, &ByoaConfig::default());
        assert_eq!(comps.len(), 2);
        // Uniform fallback on a zero map: geometric centers, rounded up at .5.
        assert_eq!(comps[0].center_of_mass, (1, 1));
        assert_eq!(comps[1].center_of_mass, (6, 6));
    }

    #[test]
    fn weighted_centroid_follows_the_mass() {
        let map = AttentionMap::new(1, 4, vec![0.0, 0.0, 1.0, 3.0]).unwrap();
        let mask = RegionMask::full(1, 4);
        let mut config = ByoaConfig::default();
        let comps = connected_components(&map, &mask, &config);
        // (2*1 + 3*3) / 4 = 2.75 rounds to 3.
        assert_eq!(comps[0].center_of_mass, (0, 3));

        config.centroid_weighting = CentroidWeighting::Uniform;
        let comps = connected_components(&map, &mask, &config);
        assert_eq!(comps[0].center_of_mass, (0, 2));
    }

    #[test]
    fn bright_block_yields_one_prior_sized_box() {
        let map = map_with(16, 16, &block(6, 6, 5, 1.0));
        let boxes = byoa_scored(&map, &prior8x8(), 0, &ByoaConfig::default()).unwrap();
        assert_eq!(boxes.len(), 1);
        assert_eq!(
            boxes[0].bbox,
            BoundingBox {
                x: 4,
                y: 4,
                width: 8,
                height: 8,
                class_id: 0
            }
        );
        assert_eq!(boxes[0].score, 1.0);
    }

    #[test]
    fn edge_centroid_box_is_clipped() {
        let map = map_with(16, 16, &block(0, 0, 5, 1.0));
        let boxes = byoa(&map, &prior8x8(), 0, &ByoaConfig::default()).unwrap();
        assert_eq!(boxes.len(), 1);
        // Center of mass (2, 2) with an 8x8 prior hangs over the border.
        assert_eq!(
            boxes[0],
            BoundingBox {
                x: 0,
                y: 0,
                width: 6,
                height: 6,
                class_id: 0
            }
        );
        assert!(boxes[0].area() > 0 && boxes[0].area() < 64);
    }

    #[test]
    fn dark_center_of_mass_is_gated_out() {
        // A bright square outline: its center of mass is its dark middle.
        let mut ring = Vec::new();
        for i in 4..=11usize {
            ring.extend([(4, i, 1.0), (11, i, 1.0), (i, 4, 1.0), (i, 11, 1.0)]);
        }
        let map = map_with(16, 16, &ring);
        // 28 bright pixels out of 256: the top-decile gate value is 1.0, and
        // the centroid pixel (8, 8) reads 0.
        let boxes = byoa(&map, &prior8x8(), 0, &ByoaConfig::default()).unwrap();
        assert!(boxes.is_empty());
    }

    #[test]
    fn test_mode_draws_the_tight_rectangle() {
        // 169 bright pixels out of 1600 — above the keep fraction, so the
        // threshold keeps exactly the block, and growth adds radius 6.
        let map = map_with(40, 40, &block(13, 13, 13, 1.0));
        let config = ByoaConfig {
            mode: BoxMode::Test,
            ..ByoaConfig::default()
        };
        let boxes = byoa(&map, &prior8x8(), 0, &config).unwrap();
        assert_eq!(boxes.len(), 1);
        assert_eq!(
            boxes[0],
            BoundingBox {
                x: 7,
                y: 7,
                width: 25,
                height: 25,
                class_id: 0
            }
        );
    }

    #[test]
    fn train_boxes_share_the_class_dimensions() {
        let mut bright = block(4, 4, 3, 1.0);
        bright.extend(block(16, 16, 3, 0.6));
        let map = map_with(24, 24, &bright);
        let config = ByoaConfig {
            keep_fraction: 0.03,
            ..ByoaConfig::default()
        };
        let boxes = byoa_scored(&map, &prior8x8(), 0, &config).unwrap();
        assert_eq!(boxes.len(), 2);
        for b in &boxes {
            assert_eq!((b.bbox.width, b.bbox.height), (8, 8));
        }
        // Brighter center of mass first.
        assert!(boxes[0].score > boxes[1].score);
        assert_eq!((boxes[0].bbox.y, boxes[1].bbox.y), (1, 13));
    }

    #[test]
    fn scaling_the_map_changes_nothing() {
        for mode in [BoxMode::Train, BoxMode::Test] {
            let config = ByoaConfig {
                mode,
                ..ByoaConfig::default()
            };
            let base: Vec<f64> = (0..256).map(|i| (i * 61 % 256) as f64 / 255.0).collect();
            let reference = byoa_scored(
                &AttentionMap::new(16, 16, base.clone()).unwrap(),
                &prior8x8(),
                0,
                &config,
            )
            .unwrap();
            for scale in [7.3, 2.0f64.powi(-20), 1024.0] {
                let scaled: Vec<f64> = base.iter().map(|v| v * scale).collect();
                let boxes = byoa_scored(
                    &AttentionMap::new(16, 16, scaled).unwrap(),
                    &prior8x8(),
                    0,
                    &config,
                )
                .unwrap();
                assert_eq!(boxes, reference, "scale {scale} changed the boxes");
            }
        }
    }

    #[test]
    fn identical_runs_give_identical_boxes() {
        let map = map_with(16, 16, &block(6, 6, 5, 1.0));
        let first = byoa_scored(&map, &prior8x8(), 0, &ByoaConfig::default()).unwrap();
        for _ in 0..3 {
            let again = byoa_scored(&map, &prior8x8(), 0, &ByoaConfig::default()).unwrap();
            assert_eq!(again, first);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(AttentionMap::new(2, 2, vec![0.0, 0.5, -0.1, 1.0]).is_err());
        assert!(AttentionMap::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(AttentionMap::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ClassBoxPrior::new(vec![PriorDims {
            height: 0.0,
            width: 8.0
        }])
        .is_err());

        let map = map_with(8, 8, &[(4, 4, 1.0)]);
        let bad = ByoaConfig {
            keep_fraction: 0.0,
            ..ByoaConfig::default()
        };
        assert!(byoa(&map, &prior8x8(), 0, &bad).is_err());
        // Missing class prior.
        assert!(byoa(&map, &prior8x8(), 3, &ByoaConfig::default()).is_err());
    }
}
