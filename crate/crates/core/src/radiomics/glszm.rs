//! Gray-level size-zone features (16 values).
//!
//! A zone is an 8-connected component of equal-level in-mask pixels; its
//! size is the pixel count. Unlike runs, zones are direction-free, so there
//! is a single matrix. Zone percentage divides the zone count by the region
//! pixel count.

use super::table::LevelSizeTable;
use super::QuantizedRegion;

/// Flood-fill every zone, returning (level, size) events.
fn zone_events(q: &QuantizedRegion) -> Vec<(u32, usize)> {
    let mut events = Vec::new();
    let mut claimed = vec![false; q.levels.len()];
    let mut stack = Vec::new();
    for seed in 0..q.levels.len() {
        let level = q.levels[seed];
        if level == 0 || claimed[seed] {
            continue;
        }
        claimed[seed] = true;
        stack.push(seed);
        let mut size = 0usize;
        while let Some(at) = stack.pop() {
            size += 1;
            let (y, x) = ((at / q.width) as isize, (at % q.width) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dy, dx) == (0, 0) || q.level_signed(y + dy, x + dx) != level {
                        continue;
                    }
                    let n = (y + dy) as usize * q.width + (x + dx) as usize;
                    if !claimed[n] {
                        claimed[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        events.push((level, size));
    }
    events
}

pub(super) fn features(q: &QuantizedRegion) -> Vec<f64> {
    let events = zone_events(q);
    let t = LevelSizeTable::from_events(q.ng, &events);
    vec![
        t.level_nonuniformity(false),
        t.level_nonuniformity(true),
        t.variance(true),
        t.moment(2, 0),
        t.moment(0, 2),
        t.moment(2, 2),
        t.moment(-2, 2),
        t.moment(-2, 0),
        t.size_nonuniformity(false),
        t.size_nonuniformity(true),
        t.moment(0, -2),
        t.moment(2, -2),
        t.moment(-2, -2),
        t.entropy(),
        t.total() / q.np as f64,
        t.variance(false),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radiomics::{discretize, GrayImage, RegionMask};

    fn quantized(vals: &[f64], h: usize, w: usize) -> QuantizedRegion {
        let img = GrayImage::new(h, w, vals.to_vec()).unwrap();
        discretize(&img, &RegionMask::full(h, w), 1.0).unwrap()
    }

    #[test]
    fn diagonal_touch_merges_zones() {
        // Two same-level pixels meeting only at a corner are one 8-connected
        // zone; the off-level pixels form their own zones.
        let q = quantized(&[1.0, 0.0, 0.0, 1.0], 2, 2);
        let mut events = zone_events(&q);
        events.sort();
        assert_eq!(events, vec![(1, 2), (2, 2)]);
    }

    #[test]
    fn zone_percentage_counts_zones_over_pixels() {
        let q = quantized(&[0.0, 0.0, 5.0, 5.0], 1, 4);
        let f = features(&q);
        assert_eq!(f[14], 0.5, "two zones over four pixels");
    }

    #[test]
    fn constant_region_is_one_zone() {
        let q = quantized(&[7.0; 6], 2, 3);
        let events = zone_events(&q);
        assert_eq!(events, vec![(1, 6)]);
        let f = features(&q);
        assert_eq!(f[4], 36.0, "large-area emphasis of a single 6-zone");
        assert_eq!(f[13], 0.0, "entropy of a lone zone");
    }
}
