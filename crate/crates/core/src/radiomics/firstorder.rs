//! First-order intensity statistics (18 values).
//!
//! All statistics run over raw in-mask intensities except Entropy and
//! Uniformity, which use the discretized histogram. Voxels are unit-sized,
//! so TotalEnergy equals Energy; with no resegmentation shift, Energy is the
//! plain sum of squares. Variance / Skewness / Kurtosis use population
//! moments, Kurtosis is non-excess (the Gaussian reference value is 3), and
//! both fall back to 0 for constant regions. Percentiles interpolate
//! linearly between closest ranks.

use super::{GrayImage, QuantizedRegion, RegionMask};

/// Linear-interpolation percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub(super) fn features(img: &GrayImage, mask: &RegionMask, q: &QuantizedRegion) -> Vec<f64> {
    let mut xs: Vec<f64> = mask.indices().map(|i| img.pixels()[i]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let energy: f64 = xs.iter().map(|x| x * x).sum();

    // Central moments in one pass.
    let (mut m2, mut m3, mut m4, mut mad) = (0.0, 0.0, 0.0, 0.0);
    for &x in &xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        mad += d.abs();
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mad /= n;

    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite intensities"));
    let (min, max) = (xs[0], xs[xs.len() - 1]);
    let p10 = percentile(&xs, 10.0);
    let p90 = percentile(&xs, 90.0);

    // Robust MAD restricted to the inclusive [P10, P90] band. The band always
    // holds at least one sample (the median of a single-element region is the
    // element itself).
    let band = {
        let lo = xs.partition_point(|&x| x < p10);
        let hi = xs.partition_point(|&x| x <= p90);
        &xs[lo..hi]
    };
    let band_mean = band.iter().sum::<f64>() / band.len() as f64;
    let rmad = band.iter().map(|x| (x - band_mean).abs()).sum::<f64>() / band.len() as f64;

    // Histogram statistics on gray levels.
    let mut hist = vec![0.0f64; q.ng];
    for &l in q.levels.iter().filter(|&&l| l > 0) {
        hist[(l - 1) as usize] += 1.0;
    }
    let mut entropy = 0.0;
    let mut uniformity = 0.0;
    for p in hist.iter().map(|c| c / n).filter(|&p| p > 0.0) {
        entropy -= p * p.log2();
        uniformity += p * p;
    }

    vec![
        p10,
        p90,
        energy,
        entropy,
        percentile(&xs, 75.0) - percentile(&xs, 25.0),
        if m2 == 0.0 { 0.0 } else { m4 / (m2 * m2) },
        max,
        mad,
        mean,
        percentile(&xs, 50.0),
        min,
        max - min,
        rmad,
        (energy / n).sqrt(),
        if m2 == 0.0 { 0.0 } else { m3 / m2.powf(1.5) },
        energy,
        uniformity,
        m2,
    ]
}
