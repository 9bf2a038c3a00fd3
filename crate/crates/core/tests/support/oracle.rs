//! Direct-formula reference implementation of the 107-feature vector.
//!
//! This module is the test-side oracle: every feature is computed straight
//! from its published definition with naive loops, sharing no code with the
//! engine under test. Eigenvalues come from nalgebra (the engine rolls its
//! own Jacobi sweep), mesh volume/area come from hand-derived per-cell
//! closed forms (the engine emits triangles and integrates), and percentiles
//! are recomputed from scratch. Agreement between the two paths is the
//! conformance gate; this file was written (and frozen) before the engine.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// Canonical 8×8 texture fixture: integer intensities from
/// `(3*y*x + 7*y + 13*x) mod 160`, giving 7 gray levels at bin width 25.
pub const FIX_W: usize = 8;
pub const FIX_H: usize = 8;
pub const FIXTURE: [f64; 64] = [
    0.0, 13.0, 26.0, 39.0, 52.0, 65.0, 78.0, 91.0, //
    7.0, 23.0, 39.0, 55.0, 71.0, 87.0, 103.0, 119.0, //
    14.0, 33.0, 52.0, 71.0, 90.0, 109.0, 128.0, 147.0, //
    21.0, 43.0, 65.0, 87.0, 109.0, 131.0, 153.0, 15.0, //
    28.0, 53.0, 78.0, 103.0, 128.0, 153.0, 18.0, 43.0, //
    35.0, 63.0, 91.0, 119.0, 147.0, 15.0, 43.0, 71.0, //
    42.0, 73.0, 104.0, 135.0, 6.0, 37.0, 68.0, 99.0, //
    49.0, 83.0, 117.0, 151.0, 25.0, 59.0, 93.0, 127.0, //
];

pub const BIN_WIDTH: f64 = 25.0;

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

/// Gray levels per pixel: 0 marks out-of-mask, in-mask levels are 1..=ng.
pub struct Quantized {
    pub h: usize,
    pub w: usize,
    pub level: Vec<u32>,
    pub ng: usize,
    pub np: usize,
}

pub fn quantize(img: &[f64], mask: &[bool], h: usize, w: usize, bin_width: f64) -> Quantized {
    let lo = img
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min);
    let mut level = vec![0u32; h * w];
    let mut ng = 0u32;
    let mut np = 0usize;
    for i in 0..h * w {
        if mask[i] {
            let l = ((img[i] - lo) / bin_width).floor() as u32 + 1;
            level[i] = l;
            ng = ng.max(l);
            np += 1;
        }
    }
    Quantized {
        h,
        w,
        level,
        ng: ng as usize,
        np,
    }
}

// ---------------------------------------------------------------------------
// First-order (18)
// ---------------------------------------------------------------------------

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn first_order(img: &[f64], mask: &[bool], h: usize, w: usize, bin_width: f64) -> Vec<(String, f64)> {
    let xs: Vec<f64> = (0..h * w).filter(|&i| mask[i]).map(|i| img[i]).collect();
    let n = xs.len() as f64;
    let mut sorted = xs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;

    let p10 = percentile(&sorted, 10.0);
    let p90 = percentile(&sorted, 90.0);
    let energy = xs.iter().map(|x| x * x).sum::<f64>();
    let q = quantize(img, mask, h, w, bin_width);
    let mut hist = vec![0.0f64; q.ng];
    for i in 0..h * w {
        if mask[i] {
            hist[(q.level[i] - 1) as usize] += 1.0;
        }
    }
    let entropy: f64 = -hist
        .iter()
        .map(|&c| c / n)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>();
    let uniformity: f64 = hist.iter().map(|&c| (c / n) * (c / n)).sum();

    let robust: Vec<f64> = xs.iter().copied().filter(|&x| x >= p10 && x <= p90).collect();
    let rmean = robust.iter().sum::<f64>() / robust.len() as f64;
    let rmad = robust.iter().map(|x| (x - rmean).abs()).sum::<f64>() / robust.len() as f64;

    vec![
        ("firstorder_10Percentile".into(), p10),
        ("firstorder_90Percentile".into(), p90),
        ("firstorder_Energy".into(), energy),
        ("firstorder_Entropy".into(), entropy),
        (
            "firstorder_InterquartileRange".into(),
            percentile(&sorted, 75.0) - percentile(&sorted, 25.0),
        ),
        (
            "firstorder_Kurtosis".into(),
            if m2 == 0.0 { 0.0 } else { m4 / (m2 * m2) },
        ),
        ("firstorder_Maximum".into(), sorted[sorted.len() - 1]),
        (
            "firstorder_MeanAbsoluteDeviation".into(),
            xs.iter().map(|x| (x - mean).abs()).sum::<f64>() / n,
        ),
        ("firstorder_Mean".into(), mean),
        ("firstorder_Median".into(), percentile(&sorted, 50.0)),
        ("firstorder_Minimum".into(), sorted[0]),
        ("firstorder_Range".into(), sorted[sorted.len() - 1] - sorted[0]),
        ("firstorder_RobustMeanAbsoluteDeviation".into(), rmad),
        ("firstorder_RootMeanSquared".into(), (energy / n).sqrt()),
        (
            "firstorder_Skewness".into(),
            if m2 == 0.0 { 0.0 } else { m3 / m2.powf(1.5) },
        ),
        ("firstorder_TotalEnergy".into(), energy),
        ("firstorder_Uniformity".into(), uniformity),
        ("firstorder_Variance".into(), m2),
    ]
}

// ---------------------------------------------------------------------------
// Shape (14)
// ---------------------------------------------------------------------------
//
// The mask is a single-slice slab with unit spacing: voxels at z = 0, padded
// by zeros, surfaced with midpoint marching cubes. Each 2×2 neighborhood of
// mask bits fully determines the surface inside the two half-cells above and
// below the mask plane, so mesh volume and area reduce to closed-form
// constants per neighborhood pattern (diagonal patterns use the separated
// convention; the three-corner pentagon is fanned from the vertex above the
// corner diagonal to the missing one):
//
//   1 corner  in: V = 1/48 per half,  A = sqrt(3)/8 per half
//   2 adjacent  : V = 1/8,            A = sqrt(2)/2
//   2 diagonal  : V = 2/48,           A = sqrt(3)/4
//   3 corners   : V = 11/48,          A = sqrt(2)/2 + sqrt(11)/8
//   4 corners   : V = 1/2,            A = 1 (the flat cap at z = ±0.5)

fn mask_at(mask: &[bool], h: usize, w: usize, y: isize, x: isize) -> bool {
    y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && mask[y as usize * w + x as usize]
}

pub fn shape(mask: &[bool], h: usize, w: usize) -> Vec<(String, f64)> {
    let np: usize = mask.iter().filter(|&&m| m).count();
    let sqrt3 = 3.0f64.sqrt();
    let sqrt2 = 2.0f64.sqrt();
    let sqrt11 = 11.0f64.sqrt();
    // Closed-form contributions of one half-cell (top), indexed by corner count
    // with the diagonal two-corner case handled separately.
    let mut mesh_volume = 0.0;
    let mut surface_area = 0.0;
    for y in -1..h as isize {
        for x in -1..w as isize {
            let b00 = mask_at(mask, h, w, y, x);
            let b01 = mask_at(mask, h, w, y, x + 1);
            let b10 = mask_at(mask, h, w, y + 1, x);
            let b11 = mask_at(mask, h, w, y + 1, x + 1);
            let c = b00 as u32 + b01 as u32 + b10 as u32 + b11 as u32;
            let diagonal = c == 2 && ((b00 && b11) || (b01 && b10));
            let (v, a) = match (c, diagonal) {
                (0, _) => (0.0, 0.0),
                (1, _) => (1.0 / 48.0, sqrt3 / 8.0),
                (2, false) => (1.0 / 8.0, sqrt2 / 2.0),
                (2, true) => (2.0 / 48.0, sqrt3 / 4.0),
                (3, _) => (11.0 / 48.0, sqrt2 / 2.0 + sqrt11 / 8.0),
                (4, _) => (0.5, 1.0),
                _ => unreachable!(),
            };
            // Top and bottom halves mirror each other.
            mesh_volume += 2.0 * v;
            surface_area += 2.0 * a;
        }
    }

    // Mesh vertices: one above and below every mask pixel, plus the midpoint
    // of every in/out 4-neighbor pair in the mask plane. Coordinates (z,y,x).
    let mut verts: Vec<[f64; 3]> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            verts.push([0.5, y as f64, x as f64]);
            verts.push([-0.5, y as f64, x as f64]);
            for (dy, dx) in [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)] {
                if !mask_at(mask, h, w, y as isize + dy, x as isize + dx) {
                    verts.push([
                        0.0,
                        y as f64 + dy as f64 * 0.5,
                        x as f64 + dx as f64 * 0.5,
                    ]);
                }
            }
        }
    }
    let mut max3d: f64 = 0.0;
    let mut max_slice: f64 = 0.0; // fixed z, distance in (y,x)
    let mut max_column: f64 = 0.0; // fixed x, distance in (z,y)
    let mut max_row: f64 = 0.0; // fixed y, distance in (z,x)
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            let dz = verts[i][0] - verts[j][0];
            let dy = verts[i][1] - verts[j][1];
            let dx = verts[i][2] - verts[j][2];
            let d3 = (dz * dz + dy * dy + dx * dx).sqrt();
            max3d = max3d.max(d3);
            if dz == 0.0 {
                max_slice = max_slice.max((dy * dy + dx * dx).sqrt());
            }
            if dx == 0.0 {
                max_column = max_column.max((dz * dz + dy * dy).sqrt());
            }
            if dy == 0.0 {
                max_row = max_row.max((dz * dz + dx * dx).sqrt());
            }
        }
    }

    // Principal axes from the sample covariance (n−1) of voxel coordinates.
    // The slab's z axis carries zero variance, so the least axis is 0 exactly.
    let coords: Vec<(f64, f64)> = (0..h * w)
        .filter(|&i| mask[i])
        .map(|i| ((i / w) as f64, (i % w) as f64))
        .collect();
    let (l_major, l_minor) = if coords.len() < 2 {
        (0.0, 0.0)
    } else {
        let n = coords.len() as f64;
        let my = coords.iter().map(|c| c.0).sum::<f64>() / n;
        let mx = coords.iter().map(|c| c.1).sum::<f64>() / n;
        let syy = coords.iter().map(|c| (c.0 - my) * (c.0 - my)).sum::<f64>() / (n - 1.0);
        let sxx = coords.iter().map(|c| (c.1 - mx) * (c.1 - mx)).sum::<f64>() / (n - 1.0);
        let sxy = coords.iter().map(|c| (c.0 - my) * (c.1 - mx)).sum::<f64>() / (n - 1.0);
        // Eigenvalues of [[syy, sxy], [sxy, sxx]] by the quadratic formula.
        let tr = syy + sxx;
        let det = syy * sxx - sxy * sxy;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 + disc, tr / 2.0 - disc)
    };
    let l_least = 0.0f64;
    let major_axis = 4.0 * l_major.max(0.0).sqrt();
    let minor_axis = 4.0 * l_minor.max(0.0).sqrt();
    let least_axis = 4.0 * l_least.sqrt();
    let (elongation, flatness) = if l_major <= 0.0 {
        (1.0, 1.0)
    } else {
        ((l_minor.max(0.0) / l_major).sqrt(), (l_least / l_major).sqrt())
    };

    let sphericity = (36.0 * std::f64::consts::PI * mesh_volume * mesh_volume).cbrt() / surface_area;

    vec![
        ("shape_Elongation".into(), elongation),
        ("shape_Flatness".into(), flatness),
        ("shape_LeastAxisLength".into(), least_axis),
        ("shape_MajorAxisLength".into(), major_axis),
        ("shape_Maximum2DDiameterColumn".into(), max_column),
        ("shape_Maximum2DDiameterRow".into(), max_row),
        ("shape_Maximum2DDiameterSlice".into(), max_slice),
        ("shape_Maximum3DDiameter".into(), max3d),
        ("shape_MeshVolume".into(), mesh_volume),
        ("shape_MinorAxisLength".into(), minor_axis),
        ("shape_Sphericity".into(), sphericity),
        ("shape_SurfaceArea".into(), surface_area),
        ("shape_SurfaceVolumeRatio".into(), surface_area / mesh_volume),
        ("shape_VoxelVolume".into(), np as f64),
    ]
}

// ---------------------------------------------------------------------------
// GLCM (24)
// ---------------------------------------------------------------------------

const GLCM_DIRS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

fn glcm_matrix(q: &Quantized, dir: (isize, isize)) -> Vec<Vec<f64>> {
    let ng = q.ng;
    let mut p = vec![vec![0.0f64; ng]; ng];
    for y in 0..q.h as isize {
        for x in 0..q.w as isize {
            let a = q.level[y as usize * q.w + x as usize];
            if a == 0 {
                continue;
            }
            let (ny, nx) = (y + dir.0, x + dir.1);
            if ny < 0 || nx < 0 || ny >= q.h as isize || nx >= q.w as isize {
                continue;
            }
            let b = q.level[ny as usize * q.w + nx as usize];
            if b == 0 {
                continue;
            }
            // Symmetric accumulation counts the pair in both orders.
            p[(a - 1) as usize][(b - 1) as usize] += 1.0;
            p[(b - 1) as usize][(a - 1) as usize] += 1.0;
        }
    }
    let total: f64 = p.iter().flatten().sum();
    if total > 0.0 {
        for row in &mut p {
            for v in row {
                *v /= total;
            }
        }
    }
    p
}

fn glcm_features_one(p: &[Vec<f64>], ng: usize) -> Vec<f64> {
    let i_of = |idx: usize| (idx + 1) as f64;
    let px: Vec<f64> = (0..ng).map(|i| p[i].iter().sum()).collect();
    let py: Vec<f64> = (0..ng).map(|j| (0..ng).map(|i| p[i][j]).sum()).collect();
    let mux: f64 = (0..ng).map(|i| i_of(i) * px[i]).sum();
    let muy: f64 = (0..ng).map(|j| i_of(j) * py[j]).sum();
    let sigx: f64 = (0..ng).map(|i| (i_of(i) - mux).powi(2) * px[i]).sum::<f64>().sqrt();
    let sigy: f64 = (0..ng).map(|j| (i_of(j) - muy).powi(2) * py[j]).sum::<f64>().sqrt();

    // Diagonal (difference) and cross-diagonal (sum) marginals.
    let mut pxmy = vec![0.0f64; ng]; // |i-j| = 0..ng-1
    let mut pxpy = vec![0.0f64; 2 * ng + 1]; // i+j = 2..2ng (1-based levels)
    for i in 0..ng {
        for j in 0..ng {
            pxmy[i.abs_diff(j)] += p[i][j];
            pxpy[i + j + 2] += p[i][j];
        }
    }

    let autocorrelation: f64 = (0..ng)
        .map(|i| (0..ng).map(|j| p[i][j] * i_of(i) * i_of(j)).sum::<f64>())
        .sum();
    let cluster = |power: i32| -> f64 {
        (0..ng)
            .map(|i| {
                (0..ng)
                    .map(|j| (i_of(i) + i_of(j) - mux - muy).powi(power) * p[i][j])
                    .sum::<f64>()
            })
            .sum()
    };
    let contrast: f64 = (0..ng)
        .map(|i| (0..ng).map(|j| (i_of(i) - i_of(j)).powi(2) * p[i][j]).sum::<f64>())
        .sum();
    let correlation = if sigx == 0.0 || sigy == 0.0 {
        1.0
    } else {
        (autocorrelation - mux * muy) / (sigx * sigy)
    };
    let diff_avg: f64 = (0..ng).map(|k| k as f64 * pxmy[k]).sum();
    let diff_ent: f64 = -pxmy.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>();
    let diff_var: f64 = (0..ng).map(|k| (k as f64 - diff_avg).powi(2) * pxmy[k]).sum();
    let id: f64 = (0..ng)
        .map(|i| (0..ng).map(|j| p[i][j] / (1.0 + i.abs_diff(j) as f64)).sum::<f64>())
        .sum();
    let idm: f64 = (0..ng)
        .map(|i| (0..ng).map(|j| p[i][j] / (1.0 + (i.abs_diff(j) as f64).powi(2))).sum::<f64>())
        .sum();
    let idmn: f64 = (0..ng)
        .map(|i| {
            (0..ng)
                .map(|j| p[i][j] / (1.0 + (i.abs_diff(j) as f64 / ng as f64).powi(2)))
                .sum::<f64>()
        })
        .sum();
    let idn: f64 = (0..ng)
        .map(|i| {
            (0..ng)
                .map(|j| p[i][j] / (1.0 + i.abs_diff(j) as f64 / ng as f64))
                .sum::<f64>()
        })
        .sum();

    let hxy: f64 = -(0..ng)
        .map(|i| {
            (0..ng)
                .filter(|&j| p[i][j] > 0.0)
                .map(|j| p[i][j] * p[i][j].log2())
                .sum::<f64>()
        })
        .sum::<f64>();
    let hx: f64 = -px.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>();
    let hy: f64 = -py.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>();
    let hxy1: f64 = -(0..ng)
        .map(|i| {
            (0..ng)
                .filter(|&j| p[i][j] > 0.0 && px[i] * py[j] > 0.0)
                .map(|j| p[i][j] * (px[i] * py[j]).log2())
                .sum::<f64>()
        })
        .sum::<f64>();
    let hxy2: f64 = -(0..ng)
        .map(|i| {
            (0..ng)
                .filter(|&j| px[i] * py[j] > 0.0)
                .map(|j| px[i] * py[j] * (px[i] * py[j]).log2())
                .sum::<f64>()
        })
        .sum::<f64>();
    let imc1 = if hx.max(hy) == 0.0 { 0.0 } else { (hxy - hxy1) / hx.max(hy) };
    let imc2 = {
        let inner = 1.0 - (-2.0 * (hxy2 - hxy)).exp();
        if inner <= 0.0 {
            0.0
        } else {
            inner.sqrt()
        }
    };
    let inverse_variance: f64 = (0..ng)
        .map(|i| {
            (0..ng)
                .filter(|&j| j != i)
                .map(|j| p[i][j] / (i.abs_diff(j) as f64).powi(2))
                .sum::<f64>()
        })
        .sum();
    let joint_energy: f64 = p.iter().flatten().map(|&v| v * v).sum();
    let max_prob: f64 = p.iter().flatten().cloned().fold(0.0, f64::max);
    let sum_avg: f64 = (2..=2 * ng).map(|k| k as f64 * pxpy[k]).sum();
    let sum_ent: f64 = -pxpy.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>();
    let sum_squares: f64 = (0..ng)
        .map(|i| (0..ng).map(|j| (i_of(i) - mux).powi(2) * p[i][j]).sum::<f64>())
        .sum();

    // Correlation-matrix eigenvalues via nalgebra on the symmetric product
    // S Sᵀ, S = Dx^{-1/2} P Dy^{-1/2}, restricted to levels with mass.
    let live: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let mcc = if live.len() <= 1 {
        1.0
    } else {
        let m = live.len();
        let mut s = DMatrix::<f64>::zeros(m, m);
        for (r, &i) in live.iter().enumerate() {
            for (c, &j) in live.iter().enumerate() {
                s[(r, c)] = p[i][j] / (px[i].sqrt() * py[j].sqrt());
            }
        }
        let sst = &s * s.transpose();
        let mut eig: Vec<f64> = sst.symmetric_eigen().eigenvalues.iter().cloned().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eig[1].max(0.0).sqrt()
    };

    vec![
        autocorrelation,
        cluster(4),
        cluster(3),
        cluster(2),
        contrast,
        correlation,
        diff_avg,
        diff_ent,
        diff_var,
        id,
        idm,
        idmn,
        idn,
        imc1,
        imc2,
        inverse_variance,
        mux, // JointAverage
        joint_energy,
        hxy, // JointEntropy
        mcc,
        max_prob,
        sum_avg,
        sum_ent,
        sum_squares,
    ]
}

pub fn glcm(q: &Quantized) -> Vec<(String, f64)> {
    let names = [
        "Autocorrelation",
        "ClusterProminence",
        "ClusterShade",
        "ClusterTendency",
        "Contrast",
        "Correlation",
        "DifferenceAverage",
        "DifferenceEntropy",
        "DifferenceVariance",
        "Id",
        "Idm",
        "Idmn",
        "Idn",
        "Imc1",
        "Imc2",
        "InverseVariance",
        "JointAverage",
        "JointEnergy",
        "JointEntropy",
        "MCC",
        "MaximumProbability",
        "SumAverage",
        "SumEntropy",
        "SumSquares",
    ];
    let mut acc = vec![0.0f64; names.len()];
    let mut used = 0usize;
    for dir in GLCM_DIRS {
        let p = glcm_matrix(q, dir);
        if p.iter().flatten().sum::<f64>() == 0.0 {
            continue;
        }
        used += 1;
        for (a, v) in acc.iter_mut().zip(glcm_features_one(&p, q.ng)) {
            *a += v;
        }
    }
    let denom = used.max(1) as f64;
    names
        .iter()
        .zip(acc)
        .map(|(n, v)| (format!("glcm_{n}"), v / denom))
        .collect()
}

// ---------------------------------------------------------------------------
// GLDM (14)
// ---------------------------------------------------------------------------

pub fn gldm(q: &Quantized) -> Vec<(String, f64)> {
    let ng = q.ng;
    // Dependence size = equal-level in-mask 8-neighbors + 1 (the center).
    let max_dep = 9;
    let mut p = vec![vec![0.0f64; max_dep]; ng];
    for y in 0..q.h as isize {
        for x in 0..q.w as isize {
            let a = q.level[y as usize * q.w + x as usize];
            if a == 0 {
                continue;
            }
            let mut dep = 0usize;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= q.h as isize || nx >= q.w as isize {
                        continue;
                    }
                    if q.level[ny as usize * q.w + nx as usize] == a {
                        dep += 1;
                    }
                }
            }
            p[(a - 1) as usize][dep] += 1.0;
        }
    }
    let nz: f64 = p.iter().flatten().sum();
    let i_of = |i: usize| (i + 1) as f64;
    let j_of = |j: usize| (j + 1) as f64;

    let sum_over = |f: &dyn Fn(usize, usize, f64) -> f64| -> f64 {
        let mut s = 0.0;
        for i in 0..ng {
            for j in 0..max_dep {
                if p[i][j] > 0.0 {
                    s += f(i, j, p[i][j]);
                }
            }
        }
        s
    };

    let gl_marg: Vec<f64> = (0..ng).map(|i| p[i].iter().sum()).collect();
    let dep_marg: Vec<f64> = (0..max_dep).map(|j| (0..ng).map(|i| p[i][j]).sum()).collect();

    let mu_i = sum_over(&|i, _, v| i_of(i) * v / nz);
    let mu_j = sum_over(&|_, j, v| j_of(j) * v / nz);

    vec![
        (
            "gldm_DependenceEntropy".into(),
            -sum_over(&|_, _, v| (v / nz) * (v / nz).log2()),
        ),
        (
            "gldm_DependenceNonUniformity".into(),
            dep_marg.iter().map(|&s| s * s).sum::<f64>() / nz,
        ),
        (
            "gldm_DependenceNonUniformityNormalized".into(),
            dep_marg.iter().map(|&s| s * s).sum::<f64>() / (nz * nz),
        ),
        (
            "gldm_DependenceVariance".into(),
            sum_over(&|_, j, v| (j_of(j) - mu_j).powi(2) * v / nz),
        ),
        (
            "gldm_GrayLevelNonUniformity".into(),
            gl_marg.iter().map(|&s| s * s).sum::<f64>() / nz,
        ),
        (
            "gldm_GrayLevelVariance".into(),
            sum_over(&|i, _, v| (i_of(i) - mu_i).powi(2) * v / nz),
        ),
        (
            "gldm_HighGrayLevelEmphasis".into(),
            sum_over(&|i, _, v| i_of(i).powi(2) * v) / nz,
        ),
        (
            "gldm_LargeDependenceEmphasis".into(),
            sum_over(&|_, j, v| j_of(j).powi(2) * v) / nz,
        ),
        (
            "gldm_LargeDependenceHighGrayLevelEmphasis".into(),
            sum_over(&|i, j, v| i_of(i).powi(2) * j_of(j).powi(2) * v) / nz,
        ),
        (
            "gldm_LargeDependenceLowGrayLevelEmphasis".into(),
            sum_over(&|i, j, v| j_of(j).powi(2) * v / i_of(i).powi(2)) / nz,
        ),
        (
            "gldm_LowGrayLevelEmphasis".into(),
            sum_over(&|i, _, v| v / i_of(i).powi(2)) / nz,
        ),
        (
            "gldm_SmallDependenceEmphasis".into(),
            sum_over(&|_, j, v| v / j_of(j).powi(2)) / nz,
        ),
        (
            "gldm_SmallDependenceHighGrayLevelEmphasis".into(),
            sum_over(&|i, j, v| i_of(i).powi(2) * v / j_of(j).powi(2)) / nz,
        ),
        (
            "gldm_SmallDependenceLowGrayLevelEmphasis".into(),
            sum_over(&|i, j, v| v / (i_of(i).powi(2) * j_of(j).powi(2))) / nz,
        ),
    ]
}

// ---------------------------------------------------------------------------
// GLRLM (16)
// ---------------------------------------------------------------------------

const GLRLM_DIRS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

fn glrlm_matrix(q: &Quantized, dir: (isize, isize)) -> Vec<Vec<f64>> {
    let ng = q.ng;
    let max_run = q.h.max(q.w);
    let mut p = vec![vec![0.0f64; max_run]; ng];
    let (dy, dx) = dir;
    // A pixel starts a run if its backward neighbor is outside or different.
    for y in 0..q.h as isize {
        for x in 0..q.w as isize {
            let a = q.level[y as usize * q.w + x as usize];
            if a == 0 {
                continue;
            }
            let (py_, px_) = (y - dy, x - dx);
            let prev = if py_ >= 0 && px_ >= 0 && py_ < q.h as isize && px_ < q.w as isize {
                q.level[py_ as usize * q.w + px_ as usize]
            } else {
                0
            };
            if prev == a {
                continue;
            }
            let mut len = 1usize;
            let (mut ny, mut nx) = (y + dy, x + dx);
            while ny >= 0
                && nx >= 0
                && ny < q.h as isize
                && nx < q.w as isize
                && q.level[ny as usize * q.w + nx as usize] == a
            {
                len += 1;
                ny += dy;
                nx += dx;
            }
            p[(a - 1) as usize][len - 1] += 1.0;
        }
    }
    p
}

fn glrlm_features_one(p: &[Vec<f64>], ng: usize, np: usize) -> Vec<f64> {
    let nruns = p[0].len();
    let nr: f64 = p.iter().flatten().sum();
    let i_of = |i: usize| (i + 1) as f64;
    let j_of = |j: usize| (j + 1) as f64;
    let sum_over = |f: &dyn Fn(usize, usize, f64) -> f64| -> f64 {
        let mut s = 0.0;
        for i in 0..ng {
            for j in 0..nruns {
                if p[i][j] > 0.0 {
                    s += f(i, j, p[i][j]);
                }
            }
        }
        s
    };
    let gl_marg: Vec<f64> = (0..ng).map(|i| p[i].iter().sum()).collect();
    let run_marg: Vec<f64> = (0..nruns).map(|j| (0..ng).map(|i| p[i][j]).sum()).collect();
    let mu_i = sum_over(&|i, _, v| i_of(i) * v / nr);
    let mu_j = sum_over(&|_, j, v| j_of(j) * v / nr);
    vec![
        gl_marg.iter().map(|&s| s * s).sum::<f64>() / nr,
        gl_marg.iter().map(|&s| s * s).sum::<f64>() / (nr * nr),
        sum_over(&|i, _, v| (i_of(i) - mu_i).powi(2) * v / nr),
        sum_over(&|i, _, v| i_of(i).powi(2) * v) / nr,
        sum_over(&|_, j, v| j_of(j).powi(2) * v) / nr,
        sum_over(&|i, j, v| i_of(i).powi(2) * j_of(j).powi(2) * v) / nr,
        sum_over(&|i, j, v| j_of(j).powi(2) * v / i_of(i).powi(2)) / nr,
        sum_over(&|i, _, v| v / i_of(i).powi(2)) / nr,
        -sum_over(&|_, _, v| (v / nr) * (v / nr).log2()),
        run_marg.iter().map(|&s| s * s).sum::<f64>() / nr,
        run_marg.iter().map(|&s| s * s).sum::<f64>() / (nr * nr),
        nr / np as f64,
        sum_over(&|_, j, v| (j_of(j) - mu_j).powi(2) * v / nr),
        sum_over(&|_, j, v| v / j_of(j).powi(2)) / nr,
        sum_over(&|i, j, v| i_of(i).powi(2) * v / j_of(j).powi(2)) / nr,
        sum_over(&|i, j, v| v / (i_of(i).powi(2) * j_of(j).powi(2))) / nr,
    ]
}

pub fn glrlm(q: &Quantized) -> Vec<(String, f64)> {
    let names = [
        "GrayLevelNonUniformity",
        "GrayLevelNonUniformityNormalized",
        "GrayLevelVariance",
        "HighGrayLevelRunEmphasis",
        "LongRunEmphasis",
        "LongRunHighGrayLevelEmphasis",
        "LongRunLowGrayLevelEmphasis",
        "LowGrayLevelRunEmphasis",
        "RunEntropy",
        "RunLengthNonUniformity",
        "RunLengthNonUniformityNormalized",
        "RunPercentage",
        "RunVariance",
        "ShortRunEmphasis",
        "ShortRunHighGrayLevelEmphasis",
        "ShortRunLowGrayLevelEmphasis",
    ];
    let mut acc = vec![0.0f64; names.len()];
    let mut used = 0usize;
    for dir in GLRLM_DIRS {
        let p = glrlm_matrix(q, dir);
        if p.iter().flatten().sum::<f64>() == 0.0 {
            continue;
        }
        used += 1;
        for (a, v) in acc.iter_mut().zip(glrlm_features_one(&p, q.ng, q.np)) {
            *a += v;
        }
    }
    let denom = used.max(1) as f64;
    names
        .iter()
        .zip(acc)
        .map(|(n, v)| (format!("glrlm_{n}"), v / denom))
        .collect()
}

// ---------------------------------------------------------------------------
// GLSZM (16)
// ---------------------------------------------------------------------------

pub fn glszm(q: &Quantized) -> Vec<(String, f64)> {
    let ng = q.ng;
    // Zones: 8-connected components of equal level; p[level][size-1] counts.
    let mut visited = vec![false; q.h * q.w];
    let mut zones: Vec<(usize, usize)> = Vec::new(); // (level-1, size)
    for start in 0..q.h * q.w {
        if visited[start] || q.level[start] == 0 {
            continue;
        }
        let lvl = q.level[start];
        let mut stack = vec![start];
        visited[start] = true;
        let mut size = 0usize;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (y, x) = ((idx / q.w) as isize, (idx % q.w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= q.h as isize || nx >= q.w as isize {
                        continue;
                    }
                    let nidx = ny as usize * q.w + nx as usize;
                    if !visited[nidx] && q.level[nidx] == lvl {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        zones.push(((lvl - 1) as usize, size));
    }
    let max_size = zones.iter().map(|z| z.1).max().unwrap_or(1);
    let mut p = vec![vec![0.0f64; max_size]; ng];
    for (lvl, size) in &zones {
        p[*lvl][*size - 1] += 1.0;
    }
    let nz: f64 = zones.len() as f64;
    let i_of = |i: usize| (i + 1) as f64;
    let j_of = |j: usize| (j + 1) as f64;
    let sum_over = |f: &dyn Fn(usize, usize, f64) -> f64| -> f64 {
        let mut s = 0.0;
        for i in 0..ng {
            for j in 0..max_size {
                if p[i][j] > 0.0 {
                    s += f(i, j, p[i][j]);
                }
            }
        }
        s
    };
    let gl_marg: Vec<f64> = (0..ng).map(|i| p[i].iter().sum()).collect();
    let size_marg: Vec<f64> = (0..max_size).map(|j| (0..ng).map(|i| p[i][j]).sum()).collect();
    let mu_i = sum_over(&|i, _, v| i_of(i) * v / nz);
    let mu_j = sum_over(&|_, j, v| j_of(j) * v / nz);

    vec![
        (
            "glszm_GrayLevelNonUniformity".into(),
            gl_marg.iter().map(|&s| s * s).sum::<f64>() / nz,
        ),
        (
            "glszm_GrayLevelNonUniformityNormalized".into(),
            gl_marg.iter().map(|&s| s * s).sum::<f64>() / (nz * nz),
        ),
        (
            "glszm_GrayLevelVariance".into(),
            sum_over(&|i, _, v| (i_of(i) - mu_i).powi(2) * v / nz),
        ),
        (
            "glszm_HighGrayLevelZoneEmphasis".into(),
            sum_over(&|i, _, v| i_of(i).powi(2) * v) / nz,
        ),
        (
            "glszm_LargeAreaEmphasis".into(),
            sum_over(&|_, j, v| j_of(j).powi(2) * v) / nz,
        ),
        (
            "glszm_LargeAreaHighGrayLevelEmphasis".into(),
            sum_over(&|i, j, v| i_of(i).powi(2) * j_of(j).powi(2) * v) / nz,
        ),
        (
            "glszm_LargeAreaLowGrayLevelEmphasis".into(),
            sum_over(&|i, j, v| j_of(j).powi(2) * v / i_of(i).powi(2)) / nz,
        ),
        (
            "glszm_LowGrayLevelZoneEmphasis".into(),
            sum_over(&|i, _, v| v / i_of(i).powi(2)) / nz,
        ),
        (
            "glszm_SizeZoneNonUniformity".into(),
            size_marg.iter().map(|&s| s * s).sum::<f64>() / nz,
        ),
        (
            "glszm_SizeZoneNonUniformityNormalized".into(),
            size_marg.iter().map(|&s| s * s).sum::<f64>() / (nz * nz),
        ),
        (
            "glszm_SmallAreaEmphasis".into(),
            sum_over(&|_, j, v| v / j_of(j).powi(2)) / nz,
        ),
        (
            "glszm_SmallAreaHighGrayLevelEmphasis".into(),
            sum_over(&|i, j, v| i_of(i).powi(2) * v / j_of(j).powi(2)) / nz,
        ),
        (
            "glszm_SmallAreaLowGrayLevelEmphasis".into(),
            sum_over(&|i, j, v| v / (i_of(i).powi(2) * j_of(j).powi(2))) / nz,
        ),
        (
            "glszm_ZoneEntropy".into(),
            -sum_over(&|_, _, v| (v / nz) * (v / nz).log2()),
        ),
        ("glszm_ZonePercentage".into(), nz / q.np as f64),
        (
            "glszm_ZoneVariance".into(),
            sum_over(&|_, j, v| (j_of(j) - mu_j).powi(2) * v / nz),
        ),
    ]
}

// ---------------------------------------------------------------------------
// NGTDM (5)
// ---------------------------------------------------------------------------

pub fn ngtdm(q: &Quantized) -> Vec<(String, f64)> {
    let ng = q.ng;
    let mut s = vec![0.0f64; ng];
    let mut n = vec![0.0f64; ng];
    for y in 0..q.h as isize {
        for x in 0..q.w as isize {
            let a = q.level[y as usize * q.w + x as usize];
            if a == 0 {
                continue;
            }
            let mut sum = 0.0;
            let mut cnt = 0usize;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= q.h as isize || nx >= q.w as isize {
                        continue;
                    }
                    let b = q.level[ny as usize * q.w + nx as usize];
                    if b != 0 {
                        sum += b as f64;
                        cnt += 1;
                    }
                }
            }
            if cnt == 0 {
                continue; // isolated pixels are excluded entirely
            }
            let idx = (a - 1) as usize;
            n[idx] += 1.0;
            s[idx] += (a as f64 - sum / cnt as f64).abs();
        }
    }
    let nvp: f64 = n.iter().sum();
    if nvp == 0.0 {
        // Every pixel isolated: no tone differences exist at all.
        return vec![
            ("ngtdm_Busyness".into(), 0.0),
            ("ngtdm_Coarseness".into(), 1e6),
            ("ngtdm_Complexity".into(), 0.0),
            ("ngtdm_Contrast".into(), 0.0),
            ("ngtdm_Strength".into(), 0.0),
        ];
    }
    let p: Vec<f64> = n.iter().map(|&c| c / nvp).collect();
    let ngp = p.iter().filter(|&&v| v > 0.0).count();
    let i_of = |i: usize| (i + 1) as f64;

    let coarseness = {
        let d: f64 = (0..ng).map(|i| p[i] * s[i]).sum();
        if d == 0.0 {
            1e6
        } else {
            1.0 / d
        }
    };
    let contrast = if ngp <= 1 {
        0.0
    } else {
        let pairs: f64 = (0..ng)
            .map(|i| {
                (0..ng)
                    .map(|j| p[i] * p[j] * (i_of(i) - i_of(j)).powi(2))
                    .sum::<f64>()
            })
            .sum();
        let mean_s: f64 = s.iter().sum::<f64>() / nvp;
        pairs / (ngp as f64 * (ngp as f64 - 1.0)) * mean_s
    };
    let busyness = {
        let denom: f64 = (0..ng)
            .filter(|&i| p[i] > 0.0)
            .map(|i| {
                (0..ng)
                    .filter(|&j| p[j] > 0.0)
                    .map(|j| (i_of(i) * p[i] - i_of(j) * p[j]).abs())
                    .sum::<f64>()
            })
            .sum();
        if denom == 0.0 {
            0.0
        } else {
            (0..ng).map(|i| p[i] * s[i]).sum::<f64>() / denom
        }
    };
    let complexity = (0..ng)
        .filter(|&i| p[i] > 0.0)
        .map(|i| {
            (0..ng)
                .filter(|&j| p[j] > 0.0)
                .map(|j| {
                    (i_of(i) - i_of(j)).abs() * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j])
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        / nvp;
    let strength = {
        let denom: f64 = s.iter().sum();
        if denom == 0.0 {
            0.0
        } else {
            (0..ng)
                .filter(|&i| p[i] > 0.0)
                .map(|i| {
                    (0..ng)
                        .filter(|&j| p[j] > 0.0)
                        .map(|j| (p[i] + p[j]) * (i_of(i) - i_of(j)).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / denom
        }
    };

    vec![
        ("ngtdm_Busyness".into(), busyness),
        ("ngtdm_Coarseness".into(), coarseness),
        ("ngtdm_Complexity".into(), complexity),
        ("ngtdm_Contrast".into(), contrast),
        ("ngtdm_Strength".into(), strength),
    ]
}

// ---------------------------------------------------------------------------
// Full vector
// ---------------------------------------------------------------------------

/// All 107 features in canonical order:
/// shape, first-order, GLCM, GLDM, GLRLM, GLSZM, NGTDM.
pub fn all_features(
    img: &[f64],
    mask: &[bool],
    h: usize,
    w: usize,
    bin_width: f64,
) -> Vec<(String, f64)> {
    let q = quantize(img, mask, h, w, bin_width);
    let mut out = shape(mask, h, w);
    out.extend(first_order(img, mask, h, w, bin_width));
    out.extend(glcm(&q));
    out.extend(gldm(&q));
    out.extend(glrlm(&q));
    out.extend(glszm(&q));
    out.extend(ngtdm(&q));
    out
}
