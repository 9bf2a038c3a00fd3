//! Gray-level run-length features (16 values).
//!
//! A run is a maximal straight segment of equal-level in-mask pixels along
//! one of four directions (right, down, down-right, down-left). Each
//! direction yields its own matrix; features are computed per direction and
//! averaged over the directions that saw at least one run. Run percentage
//! divides the run count by the region pixel count.

use super::table::LevelSizeTable;
use super::QuantizedRegion;

const DIRECTIONS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// Maximal runs along `dir`, as (level, length) events. A run starts at any
/// in-mask pixel whose backward neighbor along the direction differs.
fn run_events(q: &QuantizedRegion, dir: (isize, isize)) -> Vec<(u32, usize)> {
    let (dy, dx) = dir;
    let mut events = Vec::new();
    for y in 0..q.height as isize {
        for x in 0..q.width as isize {
            let level = q.level_signed(y, x);
            if level == 0 || q.level_signed(y - dy, x - dx) == level {
                continue;
            }
            let mut length = 1usize;
            while q.level_signed(y + length as isize * dy, x + length as isize * dx) == level {
                length += 1;
            }
            events.push((level, length));
        }
    }
    events
}

fn direction_features(t: &LevelSizeTable, np: usize) -> [f64; 16] {
    [
        t.level_nonuniformity(false),
        t.level_nonuniformity(true),
        t.variance(true),
        t.moment(2, 0),
        t.moment(0, 2),
        t.moment(2, 2),
        t.moment(-2, 2),
        t.moment(-2, 0),
        t.entropy(),
        t.size_nonuniformity(false),
        t.size_nonuniformity(true),
        t.total() / np as f64,
        t.variance(false),
        t.moment(0, -2),
        t.moment(2, -2),
        t.moment(-2, -2),
    ]
}

pub(super) fn features(q: &QuantizedRegion) -> Vec<f64> {
    let mut acc = [0.0f64; 16];
    let mut used = 0usize;
    for dir in DIRECTIONS {
        let events = run_events(q, dir);
        if events.is_empty() {
            continue;
        }
        used += 1;
        let t = LevelSizeTable::from_events(q.ng, &events);
        for (a, v) in acc.iter_mut().zip(direction_features(&t, q.np)) {
            *a += v;
        }
    }
    let denom = used.max(1) as f64;
    acc.iter().map(|v| v / denom).collect()
}
