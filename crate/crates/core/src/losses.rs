//! Training objectives: focal loss for imbalanced multi-label classification,
//! a cross-view NT-Xent contrastive loss over the two branch projections, and
//! their convex combination.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Keeps the logs finite when a probability saturates. Each branch clamps
/// only the side it takes a log of, so an exactly-correct prediction still
/// costs exactly zero.
pub const PROB_EPSILON: f64 = 1e-7;

/// Stands in for minus infinity when masking similarity logits; large enough
/// that its exp underflows to exactly zero, finite so nothing turns into NaN.
const MASKED_LOGIT: f64 = -1e300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FocalConfig {
    /// Weight of the positive-label branch; the negative branch gets 1 - alpha.
    pub alpha: f64,
    /// Focusing exponent: 0 reduces the loss to alpha-weighted cross-entropy.
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        FocalConfig {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha)) {
            return Err(Error::Config(format!(
                "focal alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "focal gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// How the contrastive denominator is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NtXentVariant {
    /// Each anchor is contrasted against every other projection from both
    /// views; symmetrized over anchor roles and averaged.
    Standard,
    /// The denominator sums only the batch's positive-pair terms, so a
    /// single-pair batch costs exactly zero. Kept for fidelity experiments;
    /// it stops being contrastive for larger batches.
    PositiveOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastiveConfig {
    /// Temperature dividing the cosine similarities.
    pub tau: f64,
    pub variant: NtXentVariant,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            tau: 0.1,
            variant: NtXentVariant::Standard,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!(
                "contrastive temperature must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Mixing weight between the contrastive term (weight 1 - lambda) and the
/// focal term (weight lambda).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && (0.0..=1.0).contains(&self.lambda)) {
            return Err(Error::Config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Focal loss over per-class probabilities, averaged over every (sample,
/// class) cell. Labels must be exactly 0 or 1.
///
/// Positive cells cost -alpha * (1-p)^gamma * ln p, negative cells
/// -(1-alpha) * p^gamma * ln(1-p).
pub fn focal_loss(g: &mut Graph, probs: Var, labels: &Tensor, cfg: &FocalConfig) -> Result<Var> {
    cfg.validate()?;
    if g.shape(probs) != labels.shape() {
        return Err(Error::ShapeMismatch(format!(
            "probabilities {:?} vs labels {:?}",
            g.shape(probs),
            labels.shape()
        )));
    }
    if labels.data().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Data("labels must be exactly 0 or 1".into()));
    }
    if g.value(probs).data().iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("probabilities must be finite".into()));
    }

    // Positive branch: clamp only the lower side so ln stays finite and a
    // probability of exactly 1 still scores zero.
    let p_pos = g.clamp(probs, PROB_EPSILON, 1.0);
    let ln_p = g.log(p_pos);
    let one_minus_p = g.affine(p_pos, -1.0, 1.0);
    let hard_pos = g.powf(one_minus_p, cfg.gamma);
    let pos_raw = g.mul(hard_pos, ln_p)?;
    let pos_cost = g.scale(pos_raw, -cfg.alpha);

    // Negative branch: clamp only the upper side, mirroring the above.
    let p_neg = g.clamp(probs, 0.0, 1.0 - PROB_EPSILON);
    let one_minus_p = g.affine(p_neg, -1.0, 1.0);
    let ln_1mp = g.log(one_minus_p);
    let hard_neg = g.powf(p_neg, cfg.gamma);
    let neg_raw = g.mul(hard_neg, ln_1mp)?;
    let neg_cost = g.scale(neg_raw, -(1.0 - cfg.alpha));

    let y = g.constant(labels);
    let one_minus_y = g.affine(y, -1.0, 1.0);
    let pos_part = g.mul(y, pos_cost)?;
    let neg_part = g.mul(one_minus_y, neg_cost)?;
    let picked = g.add(pos_part, neg_part)?;
    g.mean_all(picked)
}

/// L2-normalize each row; errors if a row has zero or non-finite norm.
pub(crate) fn unit_rows(g: &mut Graph, z: Var) -> Result<Var> {
    let (n, d) = match g.shape(z) {
        [n, d] => (*n, *d),
        other => {
            return Err(Error::ShapeMismatch(format!(
                "projections must be (batch, dim), got {other:?}"
            )))
        }
    };
    if n == 0 || d == 0 {
        return Err(Error::Data("empty projection batch".into()));
    }
    let sq = g.mul(z, z)?;
    let ones = g.constant(&Tensor::full(&[d, 1], 1.0));
    let sq_sums = g.matmul(sq, ones)?;
    if g.value(sq_sums).data().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Numeric("zero-norm projection".into()));
    }
    let norms = g.sqrt(sq_sums);
    g.div(z, norms)
}

/// Row-major zero matrix with `v` written at the given coordinates.
fn sparse_const(rows: usize, cols: usize, at: &[(usize, usize)], v: f64) -> Tensor {
    let mut data = vec![0.0; rows * cols];
    for &(r, c) in at {
        data[r * cols + c] = v;
    }
    Tensor::from_vec(&[rows, cols], data).expect("shape/product agree")
}

/// Cross-view NT-Xent over two projection batches of shape (N, dim). Rows are
/// L2-normalized internally, so similarity is cosine.
pub fn nt_xent(g: &mut Graph, z_i: Var, z_r: Var, cfg: &ContrastiveConfig) -> Result<Var> {
    cfg.validate()?;
    if g.shape(z_i) != g.shape(z_r) {
        return Err(Error::ShapeMismatch(format!(
            "projection batches differ: {:?} vs {:?}",
            g.shape(z_i),
            g.shape(z_r)
        )));
    }
    let zi = unit_rows(g, z_i)?;
    let zr = unit_rows(g, z_r)?;
    let n = g.shape(zi)[0];

    match cfg.variant {
        NtXentVariant::PositiveOnly => {
            // Per anchor k: lse(s) - s_k where s holds the positive-pair
            // similarities; summed over the batch. For n = 1 this is exactly
            // lse(s_1) - s_1 = 0.
            let zr_t = g.transpose2(zr)?;
            let sim = g.matmul(zi, zr_t)?;
            let eye = g.constant(&sparse_const(n, n, &diag_coords(n), 1.0));
            let picked = g.mul(sim, eye)?;
            let ones = g.constant(&Tensor::full(&[n, 1], 1.0));
            let diag = g.matmul(picked, ones)?;
            let diag_flat = g.reshape(diag, &[n])?;
            let s = g.scale(diag_flat, 1.0 / cfg.tau);
            let lse = g.logsumexp(s)?;
            let total_pos = g.sum_all(s)?;
            let lse_times_n = g.scale(lse, n as f64);
            g.sub(lse_times_n, total_pos)
        }
        NtXentVariant::Standard => {
            // Stack both views; every projection anchors once, contrasted
            // against the 2N - 1 others, and the mean over anchors is taken.
            let all = g.concat0(&[zi, zr])?;
            let all_t = g.transpose2(all)?;
            let sim = g.matmul(all, all_t)?;
            let logits = g.scale(sim, 1.0 / cfg.tau);
            let self_mask = g.constant(&sparse_const(
                2 * n,
                2 * n,
                &diag_coords(2 * n),
                MASKED_LOGIT,
            ));
            let masked = g.add(logits, self_mask)?;
            let lse = g.logsumexp(masked)?;
            let pair_coords: Vec<(usize, usize)> =
                (0..n).flat_map(|k| [(k, n + k), (n + k, k)]).collect();
            let pos_mask = g.constant(&sparse_const(2 * n, 2 * n, &pair_coords, 1.0));
            let picked = g.mul(logits, pos_mask)?;
            let ones = g.constant(&Tensor::full(&[2 * n, 1], 1.0));
            let pos_col = g.matmul(picked, ones)?;
            let pos = g.reshape(pos_col, &[2 * n])?;
            let per_anchor = g.sub(lse, pos)?;
            g.mean_all(per_anchor)
        }
    }
}

fn diag_coords(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, i)).collect()
}

/// (1 - lambda) * contrastive + lambda * focal. The endpoints return the
/// surviving term itself, bit for bit, and skip the other term's gradient.
pub fn combined_loss(g: &mut Graph, l_cl: Var, l_fl: Var, w: &LossWeights) -> Result<Var> {
    w.validate()?;
    if w.lambda == 0.0 {
        return Ok(l_cl);
    }
    if w.lambda == 1.0 {
        return Ok(l_fl);
    }
    let cl = g.scale(l_cl, 1.0 - w.lambda);
    let fl = g.scale(l_fl, w.lambda);
    g.add(cl, fl)
}
