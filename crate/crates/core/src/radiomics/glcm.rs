//! Gray-level co-occurrence features (24 values).
//!
//! One co-occurrence matrix per direction — right, down, down-right,
//! down-left at distance 1 — accumulated symmetrically (each in-mask pair
//! counts in both orders) and normalized per direction. Features are
//! computed per direction and averaged over the directions that observed at
//! least one pair. Levels enter formulas 1-based. Degenerate limits:
//! Correlation is 1 when either marginal variance vanishes, Imc1 is 0 when
//! both marginal entropies vanish, Imc2 clamps its radicand at 0, and the
//! correlation spectrum (MCC) is 1 when at most one level carries mass.

use super::{sym_eigenvalues, QuantizedRegion};

const DIRECTIONS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// A normalized symmetric co-occurrence matrix with its marginals.
struct PairTable {
    ng: usize,
    p: Vec<f64>,          // ng×ng, row-major
    px: Vec<f64>,         // row marginal
    py: Vec<f64>,         // column marginal
    p_diff: Vec<f64>,     // P(|i-j| = k), k in 0..ng
    p_sum: Vec<f64>,      // P(i+j = k), k in 0..=2ng (1-based levels)
    mu_x: f64,
    mu_y: f64,
    sigma_x: f64,
    sigma_y: f64,
}

impl PairTable {
    /// Build for one direction; None if the direction saw no in-mask pairs.
    fn build(q: &QuantizedRegion, dir: (isize, isize)) -> Option<PairTable> {
        let ng = q.ng;
        let mut counts = vec![0.0f64; ng * ng];
        let mut total = 0.0;
        for y in 0..q.height as isize {
            for x in 0..q.width as isize {
                let a = q.level_signed(y, x);
                let b = q.level_signed(y + dir.0, x + dir.1);
                if a > 0 && b > 0 {
                    counts[(a as usize - 1) * ng + (b as usize - 1)] += 1.0;
                    counts[(b as usize - 1) * ng + (a as usize - 1)] += 1.0;
                    total += 2.0;
                }
            }
        }
        if total == 0.0 {
            return None;
        }
        for c in &mut counts {
            *c /= total;
        }

        let px: Vec<f64> = (0..ng).map(|i| counts[i * ng..(i + 1) * ng].iter().sum()).collect();
        let py: Vec<f64> = (0..ng).map(|j| (0..ng).map(|i| counts[i * ng + j]).sum()).collect();
        let mut p_diff = vec![0.0f64; ng];
        let mut p_sum = vec![0.0f64; 2 * ng + 1];
        for i in 0..ng {
            for j in 0..ng {
                p_diff[i.abs_diff(j)] += counts[i * ng + j];
                p_sum[i + j + 2] += counts[i * ng + j];
            }
        }
        let level = |i: usize| (i + 1) as f64;
        let mu_x: f64 = px.iter().enumerate().map(|(i, &v)| level(i) * v).sum();
        let mu_y: f64 = py.iter().enumerate().map(|(j, &v)| level(j) * v).sum();
        let var = |marg: &[f64], mu: f64| -> f64 {
            marg.iter()
                .enumerate()
                .map(|(i, &v)| (level(i) - mu) * (level(i) - mu) * v)
                .sum()
        };
        let sigma_x = var(&px, mu_x).sqrt();
        let sigma_y = var(&py, mu_y).sqrt();
        Some(PairTable {
            ng,
            p: counts,
            px,
            py,
            p_diff,
            p_sum,
            mu_x,
            mu_y,
            sigma_x,
            sigma_y,
        })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.ng + j]
    }

    /// Sum f(i, j, p_ij) over all cells (0-based indices).
    fn sum_cells(&self, f: impl Fn(usize, usize, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.ng {
            for j in 0..self.ng {
                acc += f(i, j, self.at(i, j));
            }
        }
        acc
    }

    fn entropy(dist: &[f64]) -> f64 {
        -dist.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
    }

    /// Second-largest eigenvalue (square-rooted) of the level-correlation
    /// spectrum, computed on levels with nonzero marginal mass.
    fn correlation_spectrum_root(&self) -> f64 {
        let live: Vec<usize> = (0..self.ng).filter(|&i| self.px[i] > 0.0).collect();
        let m = live.len();
        if m <= 1 {
            return 1.0;
        }
        // S = Dx^{-1/2} P Dy^{-1/2}; the symmetric product S Sᵀ shares the
        // squared singular values. The leading one is 1 by stochasticity.
        let mut s = vec![0.0f64; m * m];
        for (r, &i) in live.iter().enumerate() {
            for (c, &j) in live.iter().enumerate() {
                s[r * m + c] = self.at(i, j) / (self.px[i].sqrt() * self.py[j].sqrt());
            }
        }
        let mut sst = vec![0.0f64; m * m];
        for r in 0..m {
            for c in 0..m {
                sst[r * m + c] = (0..m).map(|k| s[r * m + k] * s[c * m + k]).sum();
            }
        }
        let eig = sym_eigenvalues(&sst, m);
        eig[1].max(0.0).sqrt()
    }

    /// The 24 features in canonical (alphabetical) order.
    fn features(&self) -> [f64; 24] {
        let level = |i: usize| (i + 1) as f64;
        let ng = self.ng as f64;

        let autocorrelation = self.sum_cells(|i, j, v| level(i) * level(j) * v);
        let cluster = |power: i32| {
            self.sum_cells(|i, j, v| (level(i) + level(j) - self.mu_x - self.mu_y).powi(power) * v)
        };
        let contrast = self.sum_cells(|i, j, v| {
            let d = level(i) - level(j);
            d * d * v
        });
        let correlation = if self.sigma_x == 0.0 || self.sigma_y == 0.0 {
            1.0
        } else {
            (autocorrelation - self.mu_x * self.mu_y) / (self.sigma_x * self.sigma_y)
        };
        let diff_average: f64 = self
            .p_diff
            .iter()
            .enumerate()
            .map(|(k, &v)| k as f64 * v)
            .sum();
        let diff_entropy = Self::entropy(&self.p_diff);
        let diff_variance: f64 = self
            .p_diff
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 - diff_average) * (k as f64 - diff_average) * v)
            .sum();
        let id = self.sum_cells(|i, j, v| v / (1.0 + i.abs_diff(j) as f64));
        let idm = self.sum_cells(|i, j, v| v / (1.0 + (i.abs_diff(j) as f64).powi(2)));
        let idmn = self.sum_cells(|i, j, v| v / (1.0 + (i.abs_diff(j) as f64 / ng).powi(2)));
        let idn = self.sum_cells(|i, j, v| v / (1.0 + i.abs_diff(j) as f64 / ng));

        let hxy = Self::entropy(&self.p);
        let hx = Self::entropy(&self.px);
        let hy = Self::entropy(&self.py);
        let hxy1 = -self.sum_cells(|i, j, v| {
            let q = self.px[i] * self.py[j];
            if v > 0.0 && q > 0.0 {
                v * q.log2()
            } else {
                0.0
            }
        });
        let hxy2 = -self.sum_cells(|i, j, _| {
            let q = self.px[i] * self.py[j];
            if q > 0.0 {
                q * q.log2()
            } else {
                0.0
            }
        });
        let imc1 = if hx.max(hy) == 0.0 {
            0.0
        } else {
            (hxy - hxy1) / hx.max(hy)
        };
        let imc2 = {
            let radicand = 1.0 - (-2.0 * (hxy2 - hxy)).exp();
            if radicand <= 0.0 {
                0.0
            } else {
                radicand.sqrt()
            }
        };
        let inverse_variance = self.sum_cells(|i, j, v| {
            if i == j {
                0.0
            } else {
                v / (i.abs_diff(j) as f64).powi(2)
            }
        });
        let joint_energy = self.sum_cells(|_, _, v| v * v);
        let max_probability = self.p.iter().fold(0.0f64, |m, &v| m.max(v));
        let sum_average: f64 = self
            .p_sum
            .iter()
            .enumerate()
            .map(|(k, &v)| k as f64 * v)
            .sum();
        let sum_entropy = Self::entropy(&self.p_sum);
        let sum_squares = self.sum_cells(|i, _, v| (level(i) - self.mu_x) * (level(i) - self.mu_x) * v);

        [
            autocorrelation,
            cluster(4),
            cluster(3),
            cluster(2),
            contrast,
            correlation,
            diff_average,
            diff_entropy,
            diff_variance,
            id,
            idm,
            idmn,
            idn,
            imc1,
            imc2,
            inverse_variance,
            self.mu_x, // JointAverage
            joint_energy,
            hxy, // JointEntropy
            self.correlation_spectrum_root(),
            max_probability,
            sum_average,
            sum_entropy,
            sum_squares,
        ]
    }
}

pub(super) fn features(q: &QuantizedRegion) -> Vec<f64> {
    let mut acc = [0.0f64; 24];
    let mut used = 0usize;
    for dir in DIRECTIONS {
        if let Some(table) = PairTable::build(q, dir) {
            used += 1;
            for (a, v) in acc.iter_mut().zip(table.features()) {
                *a += v;
            }
        }
    }
    let denom = used.max(1) as f64;
    acc.iter().map(|v| v / denom).collect()
}

/// Per-direction normalized matrices (directions without pairs omitted).
pub(super) fn matrices(q: &QuantizedRegion) -> Vec<((isize, isize), Vec<f64>)> {
    DIRECTIONS
        .iter()
        .filter_map(|&dir| PairTable::build(q, dir).map(|t| (dir, t.p)))
        .collect()
}
