//! NumPy-style shape broadcasting for elementwise binary ops.

use crate::error::{Error, Result};

/// Broadcast output shape of two operand shapes (right-aligned, a dimension
/// may stretch when it is 1).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = dim_from_right(a, rank, i);
        let db = dim_from_right(b, rank, i);
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::ShapeMismatch(format!(
                "cannot broadcast {a:?} with {b:?}"
            )));
        };
    }
    Ok(out)
}

fn dim_from_right(shape: &[usize], rank: usize, i: usize) -> usize {
    let pad = rank - shape.len();
    if i < pad {
        1
    } else {
        shape[i - pad]
    }
}

/// Row-major strides with broadcast dimensions zeroed out.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let pad = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        strides[pad + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Apply `f` elementwise over the broadcast of `a` and `b`.
pub(crate) fn zip_broadcast(
    a: &[f64],
    a_shape: &[usize],
    b: &[f64],
    b_shape: &[usize],
    out_shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let numel: usize = out_shape.iter().product();
    // Fast paths: identical shapes and scalar operands cover most traffic.
    if a_shape == b_shape {
        return a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    }
    if b.len() == 1 {
        return a.iter().map(|&x| f(x, b[0])).collect();
    }
    if a.len() == 1 {
        return b.iter().map(|&y| f(a[0], y)).collect();
    }
    let sa = broadcast_strides(a_shape, out_shape);
    let sb = broadcast_strides(b_shape, out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut oa = 0usize;
    let mut ob = 0usize;
    let mut out = Vec::with_capacity(numel);
    for _ in 0..numel {
        out.push(f(a[oa], b[ob]));
        for d in (0..rank).rev() {
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
        }
    }
    out
}

/// Sum a gradient of `grad_shape` down to `target_shape` (the inverse of a
/// broadcast expansion).
pub(crate) fn reduce_to_shape(grad: &[f64], grad_shape: &[usize], target_shape: &[usize]) -> Vec<f64> {
    if grad_shape == target_shape {
        return grad.to_vec();
    }
    let target_numel: usize = target_shape.iter().product();
    if target_numel == 1 {
        return vec![grad.iter().sum()];
    }
    let strides = broadcast_strides(target_shape, grad_shape);
    let rank = grad_shape.len();
    let mut out = vec![0.0; target_numel];
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for &g in grad {
        out[off] += g;
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < grad_shape[d] {
                break;
            }
            idx[d] = 0;
            off -= strides[d] * grad_shape[d];
        }
    }
    out
}
