//! Gray-level dependence features (14 values).
//!
//! Every in-mask pixel contributes one dependence event: its gray level
//! paired with 1 + the number of its in-mask 8-neighbors that share that
//! exact level (distance 1, zero tolerance). A lone pixel therefore lands in
//! the size-1 column and the event count always equals the region size.

use super::table::LevelSizeTable;
use super::QuantizedRegion;

fn dependence_events(q: &QuantizedRegion) -> Vec<(u32, usize)> {
    let mut events = Vec::with_capacity(q.np);
    for y in 0..q.height as isize {
        for x in 0..q.width as isize {
            let level = q.level_signed(y, x);
            if level == 0 {
                continue;
            }
            let mut matching = 0usize;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dy, dx) != (0, 0) && q.level_signed(y + dy, x + dx) == level {
                        matching += 1;
                    }
                }
            }
            events.push((level, matching + 1));
        }
    }
    events
}

pub(super) fn features(q: &QuantizedRegion) -> Vec<f64> {
    let t = LevelSizeTable::from_events(q.ng, &dependence_events(q));
    vec![
        t.entropy(),
        t.size_nonuniformity(false),
        t.size_nonuniformity(true),
        t.variance(false),
        t.level_nonuniformity(false),
        t.variance(true),
        t.moment(2, 0),
        t.moment(0, 2),
        t.moment(2, 2),
        t.moment(-2, 2),
        t.moment(-2, 0),
        t.moment(0, -2),
        t.moment(2, -2),
        t.moment(-2, -2),
    ]
}
