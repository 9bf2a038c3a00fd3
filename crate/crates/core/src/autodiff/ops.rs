//! Differentiable operations on graph variables.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::broadcast::{broadcast_shape, reduce_to_shape, zip_broadcast};
use super::{matmul_nn, matmul_nt, matmul_tn, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

impl Graph {
    fn binary_broadcast(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        back: impl Fn(&Tensor, &Tensor, &Tensor, &Tensor) -> (Tensor, Tensor) + 'static,
    ) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&ash, &bsh)?;
        let data = zip_broadcast(
            self.values[a.id].data(),
            &ash,
            self.values[b.id].data(),
            &bsh,
            &out_shape,
            f,
        );
        let value = Tensor::from_vec(&out_shape, data)?;
        Ok(self.push(
            value,
            vec![a.id, b.id],
            Some(Box::new(move |args| {
                let (ga, gb) = back(
                    &args.values[a.id],
                    &args.values[b.id],
                    &args.values[args.out],
                    args.grad,
                );
                let ga = reduce_to_shape(ga.data(), ga.shape(), &ash);
                let gb = reduce_to_shape(gb.data(), gb.shape(), &bsh);
                vec![
                    (a.id, Tensor::from_vec(&ash, ga).expect("reduced shape")),
                    (b.id, Tensor::from_vec(&bsh, gb).expect("reduced shape")),
                ]
            })),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_broadcast(a, b, |x, y| x + y, |_, _, _, g| (g.clone(), g.clone()))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_broadcast(
            a,
            b,
            |x, y| x - y,
            |_, _, _, g| (g.clone(), g.map(|v| -v)),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_broadcast(
            a,
            b,
            |x, y| x * y,
            |av, bv, out, g| {
                let ga = zip_broadcast(g.data(), out.shape(), bv.data(), bv.shape(), out.shape(), |x, y| x * y);
                let gb = zip_broadcast(g.data(), out.shape(), av.data(), av.shape(), out.shape(), |x, y| x * y);
                (
                    Tensor::from_vec(out.shape(), ga).expect("shape"),
                    Tensor::from_vec(out.shape(), gb).expect("shape"),
                )
            },
        )
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_broadcast(
            a,
            b,
            |x, y| x / y,
            |av, bv, out, g| {
                let ga = zip_broadcast(g.data(), out.shape(), bv.data(), bv.shape(), out.shape(), |x, y| x / y);
                // d/db (a/b) = -a / b^2
                let a_over_b2 = zip_broadcast(
                    av.data(),
                    av.shape(),
                    bv.data(),
                    bv.shape(),
                    out.shape(),
                    |x, y| -x / (y * y),
                );
                let gb: Vec<f64> = g.data().iter().zip(&a_over_b2).map(|(&x, &y)| x * y).collect();
                (
                    Tensor::from_vec(out.shape(), ga).expect("shape"),
                    Tensor::from_vec(out.shape(), gb).expect("shape"),
                )
            },
        )
    }

    fn unary(
        &mut self,
        x: Var,
        f: impl Fn(f64) -> f64,
        // maps (input, output, upstream) -> downstream, elementwise
        df: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Var {
        let value = self.values[x.id].map(f);
        self.push(
            value,
            vec![x.id],
            Some(Box::new(move |args| {
                let xv = &args.values[x.id];
                let yv = &args.values[args.out];
                let data: Vec<f64> = xv
                    .data()
                    .iter()
                    .zip(yv.data())
                    .zip(args.grad.data())
                    .map(|((&xi, &yi), &gi)| df(xi, yi, gi))
                    .collect();
                vec![(x.id, Tensor::from_vec(xv.shape(), data).expect("shape"))]
            })),
        )
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, |_, _, g| -g)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, |_, y, g| y * g)
    }

    /// Natural logarithm.
    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, |xi, _, g| g / xi)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, |_, y, g| g / (2.0 * y))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, f64::sin, |xi, _, g| g * xi.cos())
    }

    /// Elementwise power with a constant exponent.
    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        self.unary(
            x,
            move |v| v.powf(p),
            move |xi, _, g| {
                if p == 0.0 {
                    0.0
                } else {
                    g * p * xi.powf(p - 1.0)
                }
            },
        )
    }

    /// a * x + b with constant coefficients.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        self.unary(x, move |v| a * v + b, move |_, _, g| a * g)
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.affine(x, a, 0.0)
    }

    /// Clamp to [lo, hi]; gradient is blocked outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(
            x,
            move |v| v.clamp(lo, hi),
            move |xi, _, g| if (lo..=hi).contains(&xi) { g } else { 0.0 },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            },
            |_, y, g| g * y * (1.0 - y),
        )
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const A: f64 = 0.044715;
        self.unary(
            x,
            |v| 0.5 * v * (1.0 + (C * (v + A * v * v * v)).tanh()),
            |xi, _, g| {
                let u = C * (xi + A * xi * xi * xi);
                let t = u.tanh();
                let du = C * (1.0 + 3.0 * A * xi * xi);
                g * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du)
            },
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.values[x.id].data().iter().sum();
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            Tensor::scalar(s),
            vec![x.id],
            Some(Box::new(move |args| {
                let g = args.grad.item();
                vec![(x.id, Tensor::full(&shape, g))]
            })),
        ))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.values[x.id].numel();
        if n == 0 {
            return Err(Error::ShapeMismatch("mean of empty tensor".into()));
        }
        let s: f64 = self.values[x.id].data().iter().sum();
        let shape = self.shape(x).to_vec();
        let inv = 1.0 / n as f64;
        Ok(self.push(
            Tensor::scalar(s * inv),
            vec![x.id],
            Some(Box::new(move |args| {
                let g = args.grad.item() * inv;
                vec![(x.id, Tensor::full(&shape, g))]
            })),
        ))
    }

    /// Matrix product of rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(Error::ShapeMismatch(format!(
                "matmul: {ash:?} x {bsh:?}"
            )));
        }
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let mut out = vec![0.0; m * n];
        matmul_nn(self.values[a.id].data(), self.values[b.id].data(), m, k, n, &mut out);
        let value = Tensor::from_vec(&[m, n], out)?;
        Ok(self.push(
            value,
            vec![a.id, b.id],
            Some(Box::new(move |args| {
                let g = args.grad.data();
                let av = args.values[a.id].data();
                let bv = args.values[b.id].data();
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                matmul_nt(g, bv, m, n, k, &mut ga);
                matmul_tn(av, g, k, m, n, &mut gb);
                vec![
                    (a.id, Tensor::from_vec(&[m, k], ga).expect("shape")),
                    (b.id, Tensor::from_vec(&[k, n], gb).expect("shape")),
                ]
            })),
        ))
    }

    /// Batched matrix product of rank-3 tensors with a shared leading dim.
    pub fn matmul_batched(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() != 3 || bsh.len() != 3 || ash[0] != bsh[0] || ash[2] != bsh[1] {
            return Err(Error::ShapeMismatch(format!(
                "matmul_batched: {ash:?} x {bsh:?}"
            )));
        }
        let (bt, m, k, n) = (ash[0], ash[1], ash[2], bsh[2]);
        let mut out = vec![0.0; bt * m * n];
        for i in 0..bt {
            matmul_nn(
                &self.values[a.id].data()[i * m * k..(i + 1) * m * k],
                &self.values[b.id].data()[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let value = Tensor::from_vec(&[bt, m, n], out)?;
        Ok(self.push(
            value,
            vec![a.id, b.id],
            Some(Box::new(move |args| {
                let av = args.values[a.id].data();
                let bv = args.values[b.id].data();
                let g = args.grad.data();
                let mut ga = vec![0.0; bt * m * k];
                let mut gb = vec![0.0; bt * k * n];
                for i in 0..bt {
                    matmul_nt(
                        &g[i * m * n..(i + 1) * m * n],
                        &bv[i * k * n..(i + 1) * k * n],
                        m,
                        n,
                        k,
                        &mut ga[i * m * k..(i + 1) * m * k],
                    );
                    matmul_tn(
                        &av[i * m * k..(i + 1) * m * k],
                        &g[i * m * n..(i + 1) * m * n],
                        k,
                        m,
                        n,
                        &mut gb[i * k * n..(i + 1) * k * n],
                    );
                }
                vec![
                    (a.id, Tensor::from_vec(&[bt, m, k], ga).expect("shape")),
                    (b.id, Tensor::from_vec(&[bt, k, n], gb).expect("shape")),
                ]
            })),
        ))
    }

    pub fn transpose2(&mut self, x: Var) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.len() != 2 {
            return Err(Error::ShapeMismatch(format!("transpose2 on rank {}", sh.len())));
        }
        let (r, c) = (sh[0], sh[1]);
        let src = self.values[x.id].data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let value = Tensor::from_vec(&[c, r], data)?;
        Ok(self.push(
            value,
            vec![x.id],
            Some(Box::new(move |args| {
                let g = args.grad.data();
                let mut gx = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        gx[i * c + j] = g[j * r + i];
                    }
                }
                vec![(x.id, Tensor::from_vec(&[r, c], gx).expect("shape"))]
            })),
        ))
    }

    /// Permute the axes of a rank-3 tensor.
    pub fn permute3(&mut self, x: Var, perm: [usize; 3]) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.len() != 3 {
            return Err(Error::ShapeMismatch(format!("permute3 on rank {}", sh.len())));
        }
        let out_shape = [sh[perm[0]], sh[perm[1]], sh[perm[2]]];
        let data = permute3_raw(self.values[x.id].data(), &sh, perm);
        let value = Tensor::from_vec(&out_shape, data)?;
        // The inverse permutation maps output axes back to input axes.
        let mut inv = [0usize; 3];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        Ok(self.push(
            value,
            vec![x.id],
            Some(Box::new(move |args| {
                let gx = permute3_raw(args.grad.data(), &out_shape, inv);
                vec![(x.id, Tensor::from_vec(&sh, gx).expect("shape"))]
            })),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.values[x.id].reshaped(shape)?;
        let orig = self.shape(x).to_vec();
        Ok(self.push(
            value,
            vec![x.id],
            Some(Box::new(move |args| {
                vec![(
                    x.id,
                    args.grad.reshaped(&orig).expect("same element count"),
                )]
            })),
        ))
    }

    /// Concatenate along axis 0. All inputs must agree on trailing dims.
    pub fn concat0(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch("concat0 of zero tensors".into()));
        }
        let first = self.shape(xs[0]).to_vec();
        if first.is_empty() {
            return Err(Error::ShapeMismatch("concat0 of scalars; reshape first".into()));
        }
        let trailing = &first[1..];
        let mut rows = 0usize;
        for &x in xs {
            let sh = self.shape(x);
            if sh.is_empty() || &sh[1..] != trailing {
                return Err(Error::ShapeMismatch(format!(
                    "concat0: incompatible shapes {:?} vs {:?}",
                    first,
                    sh
                )));
            }
            rows += sh[0];
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(trailing);
        let mut data = Vec::with_capacity(shape.iter().product());
        let mut spans = Vec::with_capacity(xs.len());
        for &x in xs {
            let v = self.values[x.id].data();
            spans.push((x.id, data.len(), v.len(), self.shape(x).to_vec()));
            data.extend_from_slice(v);
        }
        let value = Tensor::from_vec(&shape, data)?;
        Ok(self.push(
            value,
            xs.iter().map(|v| v.id).collect(),
            Some(Box::new(move |args| {
                let g = args.grad.data();
                spans
                    .iter()
                    .map(|(id, start, len, sh)| {
                        (
                            *id,
                            Tensor::from_vec(sh, g[*start..*start + *len].to_vec()).expect("shape"),
                        )
                    })
                    .collect()
            })),
        ))
    }

    /// Slice `len` rows starting at `start` along axis 0.
    pub fn narrow0(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.is_empty() || start + len > sh[0] {
            return Err(Error::ShapeMismatch(format!(
                "narrow0 [{start}, {}) of shape {sh:?}",
                start + len
            )));
        }
        let row: usize = sh[1..].iter().product();
        let mut shape = sh.clone();
        shape[0] = len;
        let data = self.values[x.id].data()[start * row..(start + len) * row].to_vec();
        let value = Tensor::from_vec(&shape, data)?;
        Ok(self.push(
            value,
            vec![x.id],
            Some(Box::new(move |args| {
                let mut gx = vec![0.0; sh.iter().product()];
                gx[start * row..(start + len) * row].copy_from_slice(args.grad.data());
                vec![(x.id, Tensor::from_vec(&sh, gx).expect("shape"))]
            })),
        ))
    }

    /// Row lookup into a rank-2 table; the embedding primitive.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let sh = self.shape(table).to_vec();
        if sh.len() != 2 {
            return Err(Error::ShapeMismatch("gather_rows expects a rank-2 table".into()));
        }
        let (v, d) = (sh[0], sh[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(Error::ShapeMismatch(format!(
                "gather_rows: index {bad} out of range for {v} rows"
            )));
        }
        let src = self.values[table.id].data();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let idx = indices.to_vec();
        let value = Tensor::from_vec(&[indices.len(), d], data)?;
        Ok(self.push(
            value,
            vec![table.id],
            Some(Box::new(move |args| {
                let g = args.grad.data();
                let mut gt = vec![0.0; v * d];
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..d {
                        gt[i * d + c] += g[r * d + c];
                    }
                }
                vec![(table.id, Tensor::from_vec(&[v, d], gt).expect("shape"))]
            })),
        ))
    }

    /// Numerically stable softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.is_empty() {
            return Err(Error::ShapeMismatch("softmax of a scalar".into()));
        }
        let d = *sh.last().expect("non-empty");
        let src = self.values[x.id].data();
        let mut data = vec![0.0; src.len()];
        for (row_in, row_out) in src.chunks_exact(d).zip(data.chunks_exact_mut(d)) {
            softmax_row(row_in, row_out);
        }
        let value = Tensor::from_vec(&sh, data)?;
        Ok(self.push(
            value,
            vec![x.id],
            Some(Box::new(move |args| {
                let y = args.values[args.out].data();
                let g = args.grad.data();
                let mut gx = vec![0.0; y.len()];
                for ((yr, gr), xr) in y.chunks_exact(d).zip(g.chunks_exact(d)).zip(gx.chunks_exact_mut(d)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for i in 0..d {
                        xr[i] = yr[i] * (gr[i] - dot);
                    }
                }
                vec![(x.id, Tensor::from_vec(&sh, gx).expect("shape"))]
            })),
        ))
    }

    /// log(sum(exp(x))) along the last axis, computed stably.
    pub fn logsumexp(&mut self, x: Var) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.is_empty() {
            return Err(Error::ShapeMismatch("logsumexp of a scalar".into()));
        }
        let d = *sh.last().expect("non-empty");
        let out_shape = sh[..sh.len() - 1].to_vec();
        let src = self.values[x.id].data();
        let mut data = Vec::with_capacity(src.len() / d);
        for row in src.chunks_exact(d) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|&v| (v - m).exp()).sum();
            data.push(m + s.ln());
        }
        let value = Tensor::from_vec(&out_shape, data)?;
        Ok(self.push(
            value,
            vec![x.id],
            Some(Box::new(move |args| {
                let xv = args.values[x.id].data();
                let g = args.grad.data();
                let mut gx = vec![0.0; xv.len()];
                let mut soft = vec![0.0; d];
                for (r, xr) in xv.chunks_exact(d).enumerate() {
                    softmax_row(xr, &mut soft);
                    for i in 0..d {
                        gx[r * d + i] = soft[i] * g[r];
                    }
                }
                vec![(x.id, Tensor::from_vec(&sh, gx).expect("shape"))]
            })),
        ))
    }

    /// Layer normalization over the last axis, then elementwise affine.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        let d = *sh
            .last()
            .ok_or_else(|| Error::ShapeMismatch("layer_norm of a scalar".into()))?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::ShapeMismatch(format!(
                "layer_norm: gain/bias must have shape [{d}]"
            )));
        }
        let src = self.values[x.id].data();
        let gv = self.values[gain.id].data().to_vec();
        let bv = self.values[bias.id].data();
        let mut data = vec![0.0; src.len()];
        let mut hats = vec![0.0; src.len()];
        let mut inv_stds = Vec::with_capacity(src.len() / d);
        for (r, row) in src.chunks_exact(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            inv_stds.push(inv_std);
            for i in 0..d {
                let h = (row[i] - mean) * inv_std;
                hats[r * d + i] = h;
                data[r * d + i] = gv[i] * h + bv[i];
            }
        }
        let value = Tensor::from_vec(&sh, data)?;
        Ok(self.push(
            value,
            vec![x.id, gain.id, bias.id],
            Some(Box::new(move |args| {
                let g = args.grad.data();
                let rows = g.len() / d;
                let mut gx = vec![0.0; g.len()];
                let mut ggain = vec![0.0; d];
                let mut gbias = vec![0.0; d];
                for r in 0..rows {
                    let h = &hats[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let inv_std = inv_stds[r];
                    let mut sum_gh = 0.0; // sum of gain-scaled grads
                    let mut sum_ghh = 0.0; // hat-weighted sum
                    for i in 0..d {
                        let gh = gr[i] * gv[i];
                        sum_gh += gh;
                        sum_ghh += gh * h[i];
                        ggain[i] += gr[i] * h[i];
                        gbias[i] += gr[i];
                    }
                    let m1 = sum_gh / d as f64;
                    let m2 = sum_ghh / d as f64;
                    for i in 0..d {
                        let gh = gr[i] * gv[i];
                        gx[r * d + i] = inv_std * (gh - m1 - h[i] * m2);
                    }
                }
                vec![
                    (x.id, Tensor::from_vec(&sh, gx).expect("shape")),
                    (gain.id, Tensor::from_vec(&[d], ggain).expect("shape")),
                    (bias.id, Tensor::from_vec(&[d], gbias).expect("shape")),
                ]
            })),
        ))
    }

    /// Bilinear interpolation of a (H, W, D) grid at continuous (y, x)
    /// points, differentiable in both the grid and the points.
    /// Out-of-range coordinates are clamped to the border; the clamp blocks
    /// the point gradient there.
    pub fn bilinear_sample(&mut self, grid: Var, points: Var) -> Result<Var> {
        let gsh = self.shape(grid).to_vec();
        let psh = self.shape(points).to_vec();
        if gsh.len() != 3 {
            return Err(Error::ShapeMismatch("bilinear_sample: grid must be (H, W, D)".into()));
        }
        if psh.len() != 2 || psh[1] != 2 {
            return Err(Error::ShapeMismatch("bilinear_sample: points must be (N, 2)".into()));
        }
        let (h, w, d) = (gsh[0], gsh[1], gsh[2]);
        let n = psh[0];
        let gv = self.values[grid.id].data();
        let pv = self.values[points.id].data();
        let mut out = vec![0.0; n * d];
        for p in 0..n {
            let (y, x) = (pv[2 * p], pv[2 * p + 1]);
            let c = BilinearCell::locate(y, x, h, w);
            for k in 0..d {
                out[p * d + k] = c.w00 * gv[(c.y0 * w + c.x0) * d + k]
                    + c.w01 * gv[(c.y0 * w + c.x1) * d + k]
                    + c.w10 * gv[(c.y1 * w + c.x0) * d + k]
                    + c.w11 * gv[(c.y1 * w + c.x1) * d + k];
            }
        }
        let value = Tensor::from_vec(&[n, d], out)?;
        Ok(self.push(
            value,
            vec![grid.id, points.id],
            Some(Box::new(move |args| {
                let gv = args.values[grid.id].data();
                let pv = args.values[points.id].data();
                let g = args.grad.data();
                let mut ggrid = vec![0.0; h * w * d];
                let mut gpoints = vec![0.0; n * 2];
                for p in 0..n {
                    let (y, x) = (pv[2 * p], pv[2 * p + 1]);
                    let c = BilinearCell::locate(y, x, h, w);
                    let mut dy = 0.0;
                    let mut dx = 0.0;
                    for k in 0..d {
                        let go = g[p * d + k];
                        let v00 = gv[(c.y0 * w + c.x0) * d + k];
                        let v01 = gv[(c.y0 * w + c.x1) * d + k];
                        let v10 = gv[(c.y1 * w + c.x0) * d + k];
                        let v11 = gv[(c.y1 * w + c.x1) * d + k];
                        ggrid[(c.y0 * w + c.x0) * d + k] += go * c.w00;
                        ggrid[(c.y0 * w + c.x1) * d + k] += go * c.w01;
                        ggrid[(c.y1 * w + c.x0) * d + k] += go * c.w10;
                        ggrid[(c.y1 * w + c.x1) * d + k] += go * c.w11;
                        dy += go * ((1.0 - c.wx) * (v10 - v00) + c.wx * (v11 - v01));
                        dx += go * ((1.0 - c.wy) * (v01 - v00) + c.wy * (v11 - v10));
                    }
                    // Clamped coordinates have zero derivative.
                    if y > 0.0 && y < (h - 1) as f64 {
                        gpoints[2 * p] = dy;
                    }
                    if x > 0.0 && x < (w - 1) as f64 {
                        gpoints[2 * p + 1] = dx;
                    }
                }
                vec![
                    (grid.id, Tensor::from_vec(&[h, w, d], ggrid).expect("shape")),
                    (points.id, Tensor::from_vec(&[n, 2], gpoints).expect("shape")),
                ]
            })),
        ))
    }

    /// Inverted dropout. `rate == 0` or eval mode is the identity.
    pub fn dropout(&mut self, x: Var, rate: f64, train: bool, rng: &mut ChaCha8Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..self.values[x.id].numel())
            .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let sh = self.shape(x).to_vec();
        let data: Vec<f64> = self.values[x.id]
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let value = Tensor::from_vec(&sh, data)?;
        Ok(self.push(
            value,
            vec![x.id],
            Some(Box::new(move |args| {
                let gx: Vec<f64> = args
                    .grad
                    .data()
                    .iter()
                    .zip(&mask)
                    .map(|(&g, &m)| g * m)
                    .collect();
                vec![(x.id, Tensor::from_vec(&sh, gx).expect("shape"))]
            })),
        ))
    }

    /// Stack rank-1 vectors into the rows of a rank-2 tensor.
    pub fn stack_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let mut rows = Vec::with_capacity(xs.len());
        for &x in xs {
            let d = self.values[x.id].numel();
            rows.push(self.reshape(x, &[1, d])?);
        }
        self.concat0(&rows)
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - m).exp();
        *o = e;
        s += e;
    }
    let inv = 1.0 / s;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

fn permute3_raw(src: &[f64], shape: &[usize], perm: [usize; 3]) -> Vec<f64> {
    let (s1, s2) = (shape[1], shape[2]);
    let out_shape = [shape[perm[0]], shape[perm[1]], shape[perm[2]]];
    let in_strides = [s1 * s2, s2, 1];
    let os = [in_strides[perm[0]], in_strides[perm[1]], in_strides[perm[2]]];
    let mut out = Vec::with_capacity(src.len());
    for i in 0..out_shape[0] {
        for j in 0..out_shape[1] {
            for k in 0..out_shape[2] {
                out.push(src[i * os[0] + j * os[1] + k * os[2]]);
            }
        }
    }
    out
}

struct BilinearCell {
    y0: usize,
    y1: usize,
    x0: usize,
    x1: usize,
    wy: f64,
    wx: f64,
    w00: f64,
    w01: f64,
    w10: f64,
    w11: f64,
}

impl BilinearCell {
    fn locate(y: f64, x: f64, h: usize, w: usize) -> Self {
        let yc = y.clamp(0.0, (h - 1) as f64);
        let xc = x.clamp(0.0, (w - 1) as f64);
        let y0f = yc.floor();
        let x0f = xc.floor();
        let y0 = y0f as usize;
        let x0 = x0f as usize;
        let y1 = (y0 + 1).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let wy = yc - y0f;
        let wx = xc - x0f;
        BilinearCell {
            y0,
            y1,
            x0,
            x1,
            wy,
            wx,
            w00: (1.0 - wy) * (1.0 - wx),
            w01: (1.0 - wy) * wx,
            w10: wy * (1.0 - wx),
            w11: wy * wx,
        }
    }
}
