//! Neural network building blocks: layers, initialization, the optimizer and
//! its learning-rate schedule, plus running feature statistics.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Parameter, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Normal(0, std) truncated to ±2 std by resampling.
pub fn trunc_normal(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            data.push(z * std);
        }
    }
    Tensor::from_vec(shape, data).expect("shape/product agree")
}

/// Fully connected layer storing weights as (in, out) so the forward pass is
/// a plain row-major matmul.
pub struct Linear {
    pub w: Parameter,
    pub b: Option<Parameter>,
}

impl Linear {
    pub fn new(name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: Parameter::new(format!("{name}.w"), trunc_normal(&[d_in, d_out], 0.02, rng)),
            b: bias.then(|| Parameter::new(format!("{name}.b"), Tensor::zeros(&[d_out]))),
        }
    }

    /// Zero-initialized variant, used where updates must start as a no-op.
    /// Like `new` but with a caller-chosen weight scale. Heads whose output
    /// is normalized afterwards want ~1/sqrt(d_in) so the raw vector starts
    /// at unit scale; a near-zero norm there blows up the normalization
    /// Jacobian.
    pub fn with_std(name: &str, d_in: usize, d_out: usize, bias: bool, std: f64, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: Parameter::new(format!("{name}.w"), trunc_normal(&[d_in, d_out], std, rng)),
            b: bias.then(|| Parameter::new(format!("{name}.b"), Tensor::zeros(&[d_out]))),
        }
    }

    pub fn zeros(name: &str, d_in: usize, d_out: usize, bias: bool) -> Self {
        Linear {
            w: Parameter::new(format!("{name}.w"), Tensor::zeros(&[d_in, d_out])),
            b: bias.then(|| Parameter::new(format!("{name}.b"), Tensor::zeros(&[d_out]))),
        }
    }

    /// Apply to a (N, in) batch of rows.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&self.w);
        let y = g.matmul(x, w)?;
        match &self.b {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => Ok(y),
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        match &self.b {
            Some(b) => vec![&self.w, b],
            None => vec![&self.w],
        }
    }
}

pub struct LayerNorm {
    pub gain: Parameter,
    pub bias: Parameter,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(name: &str, d: usize) -> Self {
        LayerNorm {
            gain: Parameter::new(format!("{name}.gain"), Tensor::ones(&[d])),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[d])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gain = g.param(&self.gain);
        let bias = g.param(&self.bias);
        g.layer_norm(x, gain, bias, self.eps)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![&self.gain, &self.bias]
    }
}

/// Multi-head scaled dot-product attention over row-token matrices.
///
/// Queries may come from a different token set than keys/values, which is how
/// the cross-branch fusion layer reuses this block.
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
}

/// Attention output together with the per-head weight tensor (H, Nq, Nk).
pub struct AttentionOut {
    pub out: Var,
    pub weights: Var,
}

impl MultiHeadAttention {
    pub fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if dim % heads != 0 {
            return Err(Error::Config(format!(
                "attention dim {dim} not divisible by {heads} heads"
            )));
        }
        if heads == 0 {
            return Err(Error::Config("attention needs at least one head".into()));
        }
        Ok(MultiHeadAttention {
            wq: Linear::new(&format!("{name}.wq"), dim, dim, true, rng),
            // No key bias: a constant added to every key shifts each softmax
            // row uniformly, so the parameter would be exactly inert.
            wk: Linear::new(&format!("{name}.wk"), dim, dim, false, rng),
            wv: Linear::new(&format!("{name}.wv"), dim, dim, true, rng),
            wo: Linear::new(&format!("{name}.wo"), dim, dim, true, rng),
            heads,
            dim,
        })
    }

    /// `q_in` is (Nq, D) and `kv_in` is (Nk, D).
    pub fn forward(&self, g: &mut Graph, q_in: Var, kv_in: Var) -> Result<AttentionOut> {
        let (nq, nk) = (g.shape(q_in)[0], g.shape(kv_in)[0]);
        let (h, dh) = (self.heads, self.dim / self.heads);
        let q = self.wq.forward(g, q_in)?;
        let k = self.wk.forward(g, kv_in)?;
        let v = self.wv.forward(g, kv_in)?;
        // (N, D) -> (N, H, Dh) -> (H, N, Dh)
        let split = |g: &mut Graph, x: Var, n: usize| -> Result<Var> {
            let r = g.reshape(x, &[n, h, dh])?;
            g.permute3(r, [1, 0, 2])
        };
        let qh = split(g, q, nq)?;
        let kh = split(g, k, nk)?;
        let vh = split(g, v, nk)?;
        let kt = g.permute3(kh, [0, 2, 1])?;
        let scores = g.matmul_batched(qh, kt)?;
        let scaled = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let weights = g.softmax(scaled)?;
        let ctx = g.matmul_batched(weights, vh)?;
        let merged = g.permute3(ctx, [1, 0, 2])?;
        let flat = g.reshape(merged, &[nq, self.dim])?;
        let out = self.wo.forward(g, flat)?;
        Ok(AttentionOut { out, weights })
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut p = self.wq.params();
        p.extend(self.wk.params());
        p.extend(self.wv.params());
        p.extend(self.wo.params());
        p
    }
}

/// Pre-norm transformer encoder layer:
/// `x + Attn(LN(x))` followed by `x + MLP(LN(x))` with GELU.
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// Layer output plus the self-attention weights (H, N, N).
pub struct EncoderOut {
    pub out: Var,
    pub attn: Var,
}

impl EncoderLayer {
    pub fn new(name: &str, dim: usize, heads: usize, mlp_ratio: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(EncoderLayer {
            norm1: LayerNorm::new(&format!("{name}.norm1"), dim),
            attn: MultiHeadAttention::new(&format!("{name}.attn"), dim, heads, rng)?,
            norm2: LayerNorm::new(&format!("{name}.norm2"), dim),
            fc1: Linear::new(&format!("{name}.fc1"), dim, dim * mlp_ratio, true, rng),
            fc2: Linear::new(&format!("{name}.fc2"), dim * mlp_ratio, dim, true, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<EncoderOut> {
        let n1 = self.norm1.forward(g, x)?;
        let a = self.attn.forward(g, n1, n1)?;
        let x = g.add(x, a.out)?;
        let n2 = self.norm2.forward(g, x)?;
        let hiddens = self.fc1.forward(g, n2)?;
        let act = g.gelu(hiddens);
        let mlp = self.fc2.forward(g, act)?;
        let out = g.add(x, mlp)?;
        Ok(EncoderOut {
            out,
            attn: a.weights,
        })
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut p = self.norm1.params();
        p.extend(self.attn.params());
        p.extend(self.norm2.params());
        p.extend(self.fc1.params());
        p.extend(self.fc2.params());
        p
    }
}

/// AdamW with decoupled weight decay. Optimizer state is keyed by parameter
/// identity, so one optimizer can drive any subset of the model.
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    state: std::collections::HashMap<crate::autodiff::ParamId, AdamState>,
    step: u64,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            state: std::collections::HashMap::new(),
            step: 0,
        }
    }

    /// Apply one update using each parameter's accumulated `grad`, then clear
    /// the gradients. Parameters without a gradient are skipped.
    pub fn step(&mut self, params: &[&Parameter], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for p in params {
            let mut t = p.value_mut();
            let Some(grad) = t.grad.take() else { continue };
            let n = grad.len();
            let st = self.state.entry(p.id()).or_insert_with(|| AdamState {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let data = t.data_mut();
            for i in 0..n {
                // Decoupled decay acts on the weight directly.
                data[i] -= lr * self.weight_decay * data[i];
                st.m[i] = self.beta1 * st.m[i] + (1.0 - self.beta1) * grad[i];
                st.v[i] = self.beta2 * st.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = st.m[i] / bc1;
                let v_hat = st.v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }

    pub fn zero_grads(params: &[&Parameter]) {
        for p in params {
            p.value_mut().grad = None;
        }
    }
}

/// Linear warmup followed by cosine decay to zero, parameterized in epochs.
/// Fractional epochs give a smooth per-step schedule.
#[derive(Debug, Clone, Copy)]
pub struct WarmupCosine {
    pub base_lr: f64,
    pub warmup_epochs: f64,
    pub total_epochs: f64,
}

impl WarmupCosine {
    pub fn lr_at(&self, epoch: f64) -> f64 {
        if self.total_epochs <= 0.0 {
            return self.base_lr;
        }
        let t = epoch.clamp(0.0, self.total_epochs);
        if t < self.warmup_epochs {
            return self.base_lr * t / self.warmup_epochs;
        }
        let span = (self.total_epochs - self.warmup_epochs).max(f64::MIN_POSITIVE);
        let frac = (t - self.warmup_epochs) / span;
        self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Per-feature running mean and variance via Welford's online update.
/// Used to z-score the handcrafted features; frozen by simply not updating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        RunningStats {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population standard deviation; zero until two samples are seen.
    pub fn std(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.m2.len()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|&v| (v / n).sqrt()).collect()
    }

    /// Standardize in place with a floor on std so constant features map to 0.
    pub fn standardize(&self, x: &mut [f64]) {
        let std = self.std();
        for i in 0..x.len() {
            x[i] = (x[i] - self.mean[i]) / std[i].max(1e-8);
        }
    }
}

/// Uniformly spaced sample positions for an `n`-point grid embedded in
/// `extent` pixels, matching evenly strided pooling centers.
pub fn uniform_grid_coords(n: usize, extent: usize) -> Vec<f64> {
    let step = extent as f64 / n as f64;
    (0..n).map(|i| (i as f64 + 0.5) * step - 0.5).collect()
}

/// Dropout switch carried through forward passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train)
    }
}
