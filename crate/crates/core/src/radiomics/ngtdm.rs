//! Neighborhood gray-tone difference features (5 values).
//!
//! For every in-mask pixel with at least one in-mask 8-neighbor, the
//! absolute difference between its level and the mean neighbor level
//! accumulates into the per-level roughness column s_i; n_i counts those
//! pixels. Pixels with no in-mask neighbor are excluded entirely, and a
//! region where every pixel is isolated falls back to fixed values
//! (coarseness saturates at 1e6, the rest report 0).

use super::QuantizedRegion;

const COARSENESS_CAP: f64 = 1e6;

struct ToneTable {
    /// Fraction of valid pixels per level.
    p: Vec<f64>,
    /// Summed absolute difference from the neighborhood mean per level.
    s: Vec<f64>,
    /// Number of valid pixels.
    nvp: f64,
    /// Number of levels with nonzero probability.
    ngp: usize,
}

fn tone_table(q: &QuantizedRegion) -> Option<ToneTable> {
    let mut n = vec![0.0f64; q.ng];
    let mut s = vec![0.0f64; q.ng];
    for y in 0..q.height as isize {
        for x in 0..q.width as isize {
            let level = q.level_signed(y, x);
            if level == 0 {
                continue;
            }
            let (mut total, mut count) = (0.0f64, 0u32);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dy, dx) == (0, 0) {
                        continue;
                    }
                    let b = q.level_signed(y + dy, x + dx);
                    if b > 0 {
                        total += b as f64;
                        count += 1;
                    }
                }
            }
            if count > 0 {
                n[level as usize - 1] += 1.0;
                s[level as usize - 1] += (level as f64 - total / count as f64).abs();
            }
        }
    }
    let nvp: f64 = n.iter().sum();
    if nvp == 0.0 {
        return None;
    }
    let p: Vec<f64> = n.iter().map(|&c| c / nvp).collect();
    let ngp = p.iter().filter(|&&v| v > 0.0).count();
    Some(ToneTable { p, s, nvp, ngp })
}

pub(super) fn features(q: &QuantizedRegion) -> Vec<f64> {
    let Some(t) = tone_table(q) else {
        return vec![0.0, COARSENESS_CAP, 0.0, 0.0, 0.0];
    };
    let ng = t.p.len();
    let level = |i: usize| (i + 1) as f64;
    // Pairs of levels that both carry mass, visited (i, j) in both orders.
    let live_pairs = |f: &mut dyn FnMut(usize, usize)| {
        for i in (0..ng).filter(|&i| t.p[i] > 0.0) {
            for j in (0..ng).filter(|&j| t.p[j] > 0.0) {
                f(i, j);
            }
        }
    };

    let roughness: f64 = (0..ng).map(|i| t.p[i] * t.s[i]).sum();
    let coarseness = if roughness == 0.0 {
        COARSENESS_CAP
    } else {
        1.0 / roughness
    };

    let contrast = if t.ngp <= 1 {
        0.0
    } else {
        let mut spread = 0.0;
        live_pairs(&mut |i, j| {
            spread += t.p[i] * t.p[j] * (level(i) - level(j)).powi(2);
        });
        let mean_s: f64 = t.s.iter().sum::<f64>() / t.nvp;
        spread / (t.ngp as f64 * (t.ngp as f64 - 1.0)) * mean_s
    };

    let busyness = {
        let mut flux = 0.0;
        live_pairs(&mut |i, j| {
            flux += (level(i) * t.p[i] - level(j) * t.p[j]).abs();
        });
        if flux == 0.0 {
            0.0
        } else {
            roughness / flux
        }
    };

    let complexity = {
        let mut acc = 0.0;
        live_pairs(&mut |i, j| {
            acc += (level(i) - level(j)).abs() * (t.p[i] * t.s[i] + t.p[j] * t.s[j])
                / (t.p[i] + t.p[j]);
        });
        acc / t.nvp
    };

    let strength = {
        let s_total: f64 = t.s.iter().sum();
        if s_total == 0.0 {
            0.0
        } else {
            let mut acc = 0.0;
            live_pairs(&mut |i, j| {
                acc += (t.p[i] + t.p[j]) * (level(i) - level(j)).powi(2);
            });
            acc / s_total
        }
    };

    vec![busyness, coarseness, complexity, contrast, strength]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radiomics::{discretize, GrayImage, RegionMask};

    #[test]
    fn isolated_pixel_hits_fallbacks() {
        let img = GrayImage::new(1, 1, vec![3.0]).unwrap();
        let q = discretize(&img, &RegionMask::full(1, 1), 1.0).unwrap();
        assert_eq!(features(&q), vec![0.0, COARSENESS_CAP, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_pair_has_zero_roughness() {
        let img = GrayImage::new(1, 2, vec![4.0, 4.0]).unwrap();
        let q = discretize(&img, &RegionMask::full(1, 2), 1.0).unwrap();
        let f = features(&q);
        assert_eq!(f[1], COARSENESS_CAP, "coarseness saturates");
        assert_eq!(f[3], 0.0, "single tone has no contrast");
    }

    #[test]
    fn alternating_pair_hand_values() {
        // Levels [1, 2]: each pixel's lone neighbor is the other level, so
        // s = [1, 1], p = [0.5, 0.5].
        let img = GrayImage::new(1, 2, vec![0.0, 1.0]).unwrap();
        let q = discretize(&img, &RegionMask::full(1, 2), 1.0).unwrap();
        let t = tone_table(&q).unwrap();
        assert_eq!(t.p, vec![0.5, 0.5]);
        assert_eq!(t.s, vec![1.0, 1.0]);
        let f = features(&q);
        // Coarseness = 1/(0.5+0.5) = 1.
        assert_eq!(f[1], 1.0);
        // Contrast = (2·0.25·1)/(2·1) · (2/2) = 0.25.
        assert!((f[3] - 0.25).abs() < 1e-15);
    }
}
