//! Shared accumulator for the level-vs-size matrix families (dependence,
//! run-length, size-zone). Rows are 1-based gray levels, columns 1-based
//! sizes (dependence counts, run lengths, zone areas); features reduce to a
//! handful of weighted moments over the counts.

pub(super) struct LevelSizeTable {
    ng: usize,
    ns: usize,
    counts: Vec<f64>,
    total: f64,
}

impl LevelSizeTable {
    /// Build from (1-based level, 1-based size) events.
    pub fn from_events(ng: usize, events: &[(u32, usize)]) -> LevelSizeTable {
        let ns = events.iter().map(|e| e.1).max().unwrap_or(1);
        let mut counts = vec![0.0f64; ng * ns];
        for &(level, size) in events {
            debug_assert!(level >= 1 && size >= 1);
            counts[(level as usize - 1) * ns + (size - 1)] += 1.0;
        }
        LevelSizeTable {
            ng,
            ns,
            counts,
            total: events.len() as f64,
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Σ levelᵃ · sizeᵇ · count / total, the workhorse behind all emphasis
    /// features (a, b ∈ {−2, 0, 2}).
    pub fn moment(&self, level_pow: i32, size_pow: i32) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.ng {
            for j in 0..self.ns {
                let c = self.counts[i * self.ns + j];
                if c > 0.0 {
                    acc += ((i + 1) as f64).powi(level_pow) * ((j + 1) as f64).powi(size_pow) * c;
                }
            }
        }
        acc / self.total
    }

    fn marginal_sq_sum(&self, along_levels: bool) -> f64 {
        let (outer, inner) = if along_levels {
            (self.ng, self.ns)
        } else {
            (self.ns, self.ng)
        };
        (0..outer)
            .map(|o| {
                (0..inner)
                    .map(|i| {
                        if along_levels {
                            self.counts[o * self.ns + i]
                        } else {
                            self.counts[i * self.ns + o]
                        }
                    })
                    .sum::<f64>()
            })
            .map(|s| s * s)
            .sum()
    }

    /// Σ (row sums)², i.e. the gray-level non-uniformity numerator.
    pub fn level_nonuniformity(&self, normalized: bool) -> f64 {
        let sq = self.marginal_sq_sum(true);
        if normalized {
            sq / (self.total * self.total)
        } else {
            sq / self.total
        }
    }

    /// Σ (column sums)², the size non-uniformity numerator.
    pub fn size_nonuniformity(&self, normalized: bool) -> f64 {
        let sq = self.marginal_sq_sum(false);
        if normalized {
            sq / (self.total * self.total)
        } else {
            sq / self.total
        }
    }

    /// Probability-weighted variance of the level (rows) or size (columns).
    pub fn variance(&self, of_levels: bool) -> f64 {
        let value = |i: usize, j: usize| {
            if of_levels {
                (i + 1) as f64
            } else {
                (j + 1) as f64
            }
        };
        let mut mean = 0.0;
        for i in 0..self.ng {
            for j in 0..self.ns {
                mean += value(i, j) * self.counts[i * self.ns + j];
            }
        }
        mean /= self.total;
        let mut var = 0.0;
        for i in 0..self.ng {
            for j in 0..self.ns {
                let d = value(i, j) - mean;
                var += d * d * self.counts[i * self.ns + j];
            }
        }
        var / self.total
    }

    /// Shannon entropy (bits) of the normalized counts.
    pub fn entropy(&self) -> f64 {
        -self
            .counts
            .iter()
            .map(|&c| c / self.total)
            .filter(|&p| p > 0.0)
            .map(|p| p * p.log2())
            .sum::<f64>()
    }
}
