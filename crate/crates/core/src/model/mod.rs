//! The dual-branch classifier. An image branch tokenizes the input by
//! patches, refines token locations with learned progressive sampling, and
//! encodes them with a transformer; its CLS self-attention becomes a saliency
//! map that drives the box pipeline, whose top box selects the region the
//! handcrafted-feature branch describes. A cross-attention stage fuses the
//! two CLS tokens for classification and for the contrastive projections.
//!
//! The handcrafted-feature path is a data feedback, not a differentiable one:
//! boxes and extracted features enter the graph as constants, so gradients
//! flow only through network weights.

pub mod audit;
pub mod train;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Parameter, Var};
use crate::byoa::{
    byoa, AttentionMap, BoundingBox, ByoaConfig, ClassBoxPrior,
};
use crate::data::resize_bilinear;
use crate::error::{Error, Result};
use crate::losses::unit_rows;
use crate::nn::{uniform_grid_coords, EncoderLayer, LayerNorm, Linear, MultiHeadAttention, RunningStats};
use crate::radiomics::{extract_all, GrayImage, RadiomicsSettings, RegionOfInterest};
use crate::tensor::Tensor;

/// How the two branch heads combine into one set of class logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadCombine {
    /// Per-branch linear heads, logits averaged.
    Average,
    /// One linear head over the concatenated CLS pair.
    Concat,
}

/// Architecture hyperparameters. The default is the desk-scale profile
/// (64 px inputs); a full radiograph profile would raise `image_size` to 224,
/// with the eval-time resize to 256 and center crop back to 224 following
/// from the fixed 8/7 resize rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RGTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub image_depth: usize,
    pub radiomics_depth: usize,
    pub fusion_depth: usize,
    pub sampling_iterations: usize,
    /// Side of the progressive sampling point grid; tokens = grid².
    pub sampling_grid: usize,
    /// Number of scalar features the second branch consumes.
    pub radiomics_dim: usize,
    pub class_count: usize,
    /// Output width of the contrastive projection heads.
    pub projection_dim: usize,
    pub mlp_ratio: usize,
    pub head_combine: HeadCombine,
    /// Project post-fusion CLS tokens (true) or pre-fusion ones (false).
    pub project_fused: bool,
}

impl Default for RGTConfig {
    fn default() -> Self {
        RGTConfig {
            image_size: 64,
            patch_size: 4,
            embed_dim: 32,
            heads: 4,
            image_depth: 6,
            radiomics_depth: 2,
            fusion_depth: 1,
            sampling_iterations: 4,
            sampling_grid: 8,
            radiomics_dim: 107,
            class_count: 2,
            projection_dim: 16,
            mlp_ratio: 2,
            head_combine: HeadCombine::Average,
            project_fused: true,
        }
    }
}

impl RGTConfig {
    /// Minimal self-test profile: dim 8, two heads, a 3×3 sampling grid and
    /// two feature tokens. Small enough for exhaustive finite-difference
    /// checks over every parameter.
    pub fn tiny() -> Self {
        RGTConfig {
            image_size: 16,
            patch_size: 4,
            embed_dim: 8,
            heads: 2,
            image_depth: 2,
            radiomics_depth: 1,
            fusion_depth: 1,
            sampling_iterations: 2,
            sampling_grid: 3,
            radiomics_dim: 2,
            class_count: 2,
            projection_dim: 4,
            mlp_ratio: 2,
            head_combine: HeadCombine::Average,
            project_fused: true,
        }
    }

    pub fn feature_grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn token_count(&self) -> usize {
        self.sampling_grid * self.sampling_grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed dim {} must be a positive multiple of {} heads",
                self.embed_dim, self.heads
            )));
        }
        if self.image_depth < 1 || self.radiomics_depth < 1 || self.fusion_depth < 1 {
            return Err(Error::Config("all branch depths must be at least 1".into()));
        }
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "image size {} is not divisible into {} px patches",
                self.image_size, self.patch_size
            )));
        }
        if self.feature_grid() < 2 {
            return Err(Error::Config("patch grid must be at least 2x2".into()));
        }
        if self.sampling_iterations < 1 || self.sampling_grid < 1 {
            return Err(Error::Config(
                "sampling needs at least one iteration and one point".into(),
            ));
        }
        if self.radiomics_dim == 0 || self.class_count == 0 || self.projection_dim == 0 {
            return Err(Error::Config(
                "feature dim, class count and projection dim must be positive".into(),
            ));
        }
        if self.mlp_ratio == 0 {
            return Err(Error::Config("mlp_ratio must be positive".into()));
        }
        Ok(())
    }
}

/// Which branch produced a [`BranchOutput`]. Saliency extraction is only
/// defined for the image branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Image,
    Radiomics,
}

/// A branch's encoded CLS token, its patch tokens, and the last layer's
/// self-attention weights (heads, tokens+1, tokens+1). Image branches also
/// carry the final (y, x) sampling position of each token in patch-grid
/// coordinates.
pub struct BranchOutput {
    pub kind: BranchKind,
    pub cls: Var,
    pub tokens: Var,
    pub attention: Var,
    pub token_points: Option<Vec<(f64, f64)>>,
}

/// Unit-norm contrastive views of the two CLS tokens.
pub struct Projections {
    pub z_i: Var,
    pub z_r: Var,
}

/// The network pass alone: probabilities plus both branch outputs, given an
/// already-chosen feature vector.
pub struct NetworkPass {
    pub probs: Var,
    pub projections: Projections,
    pub image: BranchOutput,
    pub radiomics: BranchOutput,
}

/// Everything non-network the full forward needs: the per-class box priors,
/// the box pipeline settings, and the feature extraction settings.
#[derive(Clone, Copy)]
pub struct PipelineContext<'a> {
    pub priors: &'a ClassBoxPrior,
    pub byoa: &'a ByoaConfig,
    pub radiomics: &'a RadiomicsSettings,
}

/// One full forward through the feedback loop.
pub struct ForwardPass {
    pub probs: Var,
    pub probabilities: Vec<f64>,
    pub projections: Projections,
    pub attention: AttentionMap,
    pub boxes: Vec<BoundingBox>,
    /// True when no box survived the pipeline (or the caller forced it) and
    /// the whole canvas seeded feature extraction instead.
    pub used_whole_image: bool,
    pub raw_features: Vec<f64>,
}

struct FusionBlock {
    norm_q: LayerNorm,
    norm_kv: LayerNorm,
    attn: MultiHeadAttention,
}

impl FusionBlock {
    fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(FusionBlock {
            norm_q: LayerNorm::new(&format!("{name}.norm_q"), dim),
            norm_kv: LayerNorm::new(&format!("{name}.norm_kv"), dim),
            attn: MultiHeadAttention::new(&format!("{name}.attn"), dim, heads, rng)?,
        })
    }

    /// Query CLS attends over the other branch's tokens; residual onto CLS.
    fn apply(&self, g: &mut Graph, cls: Var, other_tokens: Var) -> Result<Var> {
        let q = self.norm_q.forward(g, cls)?;
        let kv = self.norm_kv.forward(g, other_tokens)?;
        let a = self.attn.forward(g, q, kv)?;
        g.add(cls, a.out)
    }

    fn params(&self) -> Vec<&Parameter> {
        let mut p = self.norm_q.params();
        p.extend(self.norm_kv.params());
        p.extend(self.attn.params());
        p
    }
}

struct ProjectionHead {
    fc1: Linear,
    fc2: Linear,
}

impl ProjectionHead {
    fn new(name: &str, dim: usize, out: usize, rng: &mut ChaCha8Rng) -> Self {
        // Unit-scale init keeps the raw output's norm O(1); the row
        // normalization that follows has a 1/norm Jacobian, so a small-scale
        // init here would start training with huge, ill-conditioned
        // contrastive gradients.
        let std = 1.0 / (dim as f64).sqrt();
        ProjectionHead {
            fc1: Linear::with_std(&format!("{name}.fc1"), dim, dim, true, std, rng),
            fc2: Linear::with_std(&format!("{name}.fc2"), dim, out, true, std, rng),
        }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, x)?;
        let a = g.gelu(h);
        let raw = self.fc2.forward(g, a)?;
        unit_rows(g, raw)
    }

    fn params(&self) -> Vec<&Parameter> {
        let mut p = self.fc1.params();
        p.extend(self.fc2.params());
        p
    }
}

enum ClassifierHead {
    Average { head_i: Linear, head_r: Linear },
    Concat { head: Linear },
}

impl ClassifierHead {
    fn params(&self) -> Vec<&Parameter> {
        match self {
            ClassifierHead::Average { head_i, head_r } => {
                let mut p = head_i.params();
                p.extend(head_r.params());
                p
            }
            ClassifierHead::Concat { head } => head.params(),
        }
    }
}

/// The dual-branch model. All learnable state lives in [`Parameter`]s with
/// stable names, so checkpoints are keyed by name.
pub struct RgtModel {
    cfg: RGTConfig,
    patch_embed: Linear,
    pos_embed: Parameter,
    img_cls: Parameter,
    offset_heads: Vec<Linear>,
    img_layers: Vec<EncoderLayer>,
    rad_embed: Parameter,
    rad_bias: Parameter,
    rad_cls: Parameter,
    rad_layers: Vec<EncoderLayer>,
    fuse_i: Vec<FusionBlock>,
    fuse_r: Vec<FusionBlock>,
    final_norm_i: LayerNorm,
    final_norm_r: LayerNorm,
    classifier: ClassifierHead,
    proj_i: ProjectionHead,
    proj_r: ProjectionHead,
}

impl RgtModel {
    pub fn new(cfg: &RGTConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let grid = cfg.feature_grid();
        let patch_embed = Linear::new("img.patch_embed", cfg.patch_size * cfg.patch_size, d, true, rng);
        let pos_embed = Parameter::new(
            "img.pos_embed",
            crate::nn::trunc_normal(&[grid * grid, d], 0.02, rng),
        );
        let img_cls = Parameter::new("img.cls", crate::nn::trunc_normal(&[1, d], 0.02, rng));
        // Offset heads start at zero so the first forward samples the
        // unmoved regular grid.
        let offset_heads = (0..cfg.sampling_iterations)
            .map(|i| Linear::zeros(&format!("img.offset{i}"), d, 2, true))
            .collect();
        let img_layers = (0..cfg.image_depth)
            .map(|i| EncoderLayer::new(&format!("img.layer{i}"), d, cfg.heads, cfg.mlp_ratio, rng))
            .collect::<Result<Vec<_>>>()?;
        let rad_embed = Parameter::new(
            "rad.embed",
            crate::nn::trunc_normal(&[cfg.radiomics_dim, d], 0.02, rng),
        );
        let rad_bias = Parameter::new("rad.embed_bias", Tensor::zeros(&[cfg.radiomics_dim, d]));
        let rad_cls = Parameter::new("rad.cls", crate::nn::trunc_normal(&[1, d], 0.02, rng));
        let rad_layers = (0..cfg.radiomics_depth)
            .map(|i| EncoderLayer::new(&format!("rad.layer{i}"), d, cfg.heads, cfg.mlp_ratio, rng))
            .collect::<Result<Vec<_>>>()?;
        let fuse_i = (0..cfg.fusion_depth)
            .map(|i| FusionBlock::new(&format!("fuse.i{i}"), d, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let fuse_r = (0..cfg.fusion_depth)
            .map(|i| FusionBlock::new(&format!("fuse.r{i}"), d, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        // The residual stream of a pre-norm stack is unnormalized and starts
        // near the 0.02 init scale; heads read a normalized view instead.
        let final_norm_i = LayerNorm::new("img.final_norm", d);
        let final_norm_r = LayerNorm::new("rad.final_norm", d);
        let classifier = match cfg.head_combine {
            HeadCombine::Average => ClassifierHead::Average {
                head_i: Linear::new("head.img", d, cfg.class_count, true, rng),
                head_r: Linear::new("head.rad", d, cfg.class_count, true, rng),
            },
            HeadCombine::Concat => ClassifierHead::Concat {
                head: Linear::new("head.cat", 2 * d, cfg.class_count, true, rng),
            },
        };
        let proj_i = ProjectionHead::new("proj.img", d, cfg.projection_dim, rng);
        let proj_r = ProjectionHead::new("proj.rad", d, cfg.projection_dim, rng);
        Ok(RgtModel {
            cfg: cfg.clone(),
            patch_embed,
            pos_embed,
            img_cls,
            offset_heads,
            img_layers,
            rad_embed,
            rad_bias,
            rad_cls,
            rad_layers,
            fuse_i,
            fuse_r,
            final_norm_i,
            final_norm_r,
            classifier,
            proj_i,
            proj_r,
        })
    }

    pub fn config(&self) -> &RGTConfig {
        &self.cfg
    }

    /// All parameters in a stable order; this order defines checkpoints.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut p = self.patch_embed.params();
        p.push(&self.pos_embed);
        p.push(&self.img_cls);
        for h in &self.offset_heads {
            p.extend(h.params());
        }
        for l in &self.img_layers {
            p.extend(l.params());
        }
        p.push(&self.rad_embed);
        p.push(&self.rad_bias);
        p.push(&self.rad_cls);
        for l in &self.rad_layers {
            p.extend(l.params());
        }
        for f in &self.fuse_i {
            p.extend(f.params());
        }
        for f in &self.fuse_r {
            p.extend(f.params());
        }
        p.extend(self.final_norm_i.params());
        p.extend(self.final_norm_r.params());
        p.extend(self.classifier.params());
        p.extend(self.proj_i.params());
        p.extend(self.proj_r.params());
        p
    }

    /// Cut the image into patches, embed each linearly and add the learned
    /// per-position vector. Returns the (grid², dim) token matrix.
    pub fn tokenize_image(&self, g: &mut Graph, img: &Tensor) -> Result<Var> {
        let s = self.cfg.image_size;
        let p = self.cfg.patch_size;
        if img.shape() != [s, s] {
            return Err(Error::ShapeMismatch(format!(
                "expected a [{s}, {s}] input, got {:?}",
                img.shape()
            )));
        }
        let grid = self.cfg.feature_grid();
        let mut data = Vec::with_capacity(grid * grid * p * p);
        let src = img.data();
        for gy in 0..grid {
            for gx in 0..grid {
                for py in 0..p {
                    for px in 0..p {
                        data.push(src[(gy * p + py) * s + gx * p + px]);
                    }
                }
            }
        }
        let patches = Tensor::from_vec(&[grid * grid, p * p], data)?;
        let patches = g.constant(&patches);
        let emb = self.patch_embed.forward(g, patches)?;
        let pos = g.param(&self.pos_embed);
        g.add(emb, pos)
    }

    /// Iteratively move sampling points by learned offsets and re-read the
    /// feature grid bilinearly. Zero-initialized offset heads leave the
    /// points exactly on the start grid, reproducing fixed-grid sampling.
    pub fn progressive_sample(&self, g: &mut Graph, grid_tokens: Var) -> Result<(Var, Vec<(f64, f64)>)> {
        let grid = self.cfg.feature_grid();
        let d = self.cfg.embed_dim;
        let n_side = self.cfg.sampling_grid;
        let n = n_side * n_side;
        let grid3 = g.reshape(grid_tokens, &[grid, grid, d])?;
        let coords = uniform_grid_coords(n_side, grid);
        let mut pts = Vec::with_capacity(n * 2);
        for &y in &coords {
            for &x in &coords {
                pts.push(y);
                pts.push(x);
            }
        }
        let mut points = g.constant(&Tensor::from_vec(&[n, 2], pts)?);
        let mut sampled = g.bilinear_sample(grid3, points)?;
        for head in &self.offset_heads {
            let off = head.forward(g, sampled)?;
            let moved = g.add(points, off)?;
            points = g.clamp(moved, 0.0, (grid - 1) as f64);
            sampled = g.bilinear_sample(grid3, points)?;
        }
        let final_points = g
            .value(points)
            .data()
            .chunks_exact(2)
            .map(|c| (c[0], c[1]))
            .collect();
        Ok((sampled, final_points))
    }

    /// Tokenize, sample, prepend CLS and run the image encoder stack.
    pub fn image_branch(&self, g: &mut Graph, img: &Tensor) -> Result<BranchOutput> {
        let grid_tokens = self.tokenize_image(g, img)?;
        let (tokens, points) = self.progressive_sample(g, grid_tokens)?;
        let cls = g.param(&self.img_cls);
        let mut x = g.concat0(&[cls, tokens])?;
        let mut last_attn = None;
        for layer in &self.img_layers {
            let out = layer.forward(g, x)?;
            x = out.out;
            last_attn = Some(out.attn);
        }
        let n = self.cfg.token_count();
        Ok(BranchOutput {
            kind: BranchKind::Image,
            cls: g.narrow0(x, 0, 1)?,
            tokens: g.narrow0(x, 1, n)?,
            attention: last_attn.expect("depth >= 1"),
            token_points: Some(points),
        })
    }

    /// Embed each scalar feature as its own token (value times a per-index
    /// vector, plus a per-index bias), prepend CLS, and encode. No positional
    /// information is added: the features form a set, not a sequence.
    pub fn radiomics_branch(&self, g: &mut Graph, features: &[f64]) -> Result<BranchOutput> {
        let f = self.cfg.radiomics_dim;
        if features.len() != f {
            return Err(Error::ShapeMismatch(format!(
                "expected {f} features, got {}",
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature input".into()));
        }
        let x = g.constant(&Tensor::from_vec(&[f, 1], features.to_vec())?);
        let e = g.param(&self.rad_embed);
        let scaled = g.mul(e, x)?;
        let b = g.param(&self.rad_bias);
        let tokens_in = g.add(scaled, b)?;
        let cls = g.param(&self.rad_cls);
        let mut t = g.concat0(&[cls, tokens_in])?;
        let mut last_attn = None;
        for layer in &self.rad_layers {
            let out = layer.forward(g, t)?;
            t = out.out;
            last_attn = Some(out.attn);
        }
        Ok(BranchOutput {
            kind: BranchKind::Radiomics,
            cls: g.narrow0(t, 0, 1)?,
            tokens: g.narrow0(t, 1, f)?,
            attention: last_attn.expect("depth >= 1"),
            token_points: None,
        })
    }

    /// Each branch's CLS attends over the other branch's patch tokens, with
    /// a residual back onto the CLS. Returns the fused (I_cls, R_cls).
    pub fn cross_attention_fuse(
        &self,
        g: &mut Graph,
        image: &BranchOutput,
        radiomics: &BranchOutput,
    ) -> Result<(Var, Var)> {
        let d = self.cfg.embed_dim;
        if g.shape(image.cls) != [1, d] || g.shape(radiomics.cls) != [1, d] {
            return Err(Error::ShapeMismatch(format!(
                "fusion expects [1, {d}] CLS tokens, got {:?} and {:?}",
                g.shape(image.cls),
                g.shape(radiomics.cls)
            )));
        }
        let mut i_cls = image.cls;
        let mut r_cls = radiomics.cls;
        for block in &self.fuse_i {
            i_cls = block.apply(g, i_cls, radiomics.tokens)?;
        }
        for block in &self.fuse_r {
            r_cls = block.apply(g, r_cls, image.tokens)?;
        }
        Ok((i_cls, r_cls))
    }

    /// Per-class probabilities from the two fused CLS tokens. Each token is
    /// read through its branch's final norm before the linear heads.
    pub fn classify(&self, g: &mut Graph, i_cls: Var, r_cls: Var) -> Result<Var> {
        let ni = self.final_norm_i.forward(g, i_cls)?;
        let nr = self.final_norm_r.forward(g, r_cls)?;
        let logits = match &self.classifier {
            ClassifierHead::Average { head_i, head_r } => {
                let li = head_i.forward(g, ni)?;
                let lr = head_r.forward(g, nr)?;
                let sum = g.add(li, lr)?;
                g.scale(sum, 0.5)
            }
            ClassifierHead::Concat { head } => {
                let pair = g.concat0(&[ni, nr])?;
                let flat = g.reshape(pair, &[1, 2 * self.cfg.embed_dim])?;
                head.forward(g, flat)?
            }
        };
        Ok(g.sigmoid(logits))
    }

    /// Unit-normalized contrastive views of the two CLS tokens, read through
    /// the same final norms the classifier uses.
    pub fn project(&self, g: &mut Graph, i_cls: Var, r_cls: Var) -> Result<Projections> {
        let ni = self.final_norm_i.forward(g, i_cls)?;
        let nr = self.final_norm_r.forward(g, r_cls)?;
        Ok(Projections {
            z_i: self.proj_i.apply(g, ni)?,
            z_r: self.proj_r.apply(g, nr)?,
        })
    }

    /// Average the CLS-query attention row over heads, place each token's
    /// weight at its sampling position on the patch grid, and upsample to
    /// image resolution. Only the image branch carries spatial meaning.
    pub fn extract_cls_attention(&self, g: &Graph, branch: &BranchOutput) -> Result<AttentionMap> {
        if branch.kind != BranchKind::Image {
            return Err(Error::Config(
                "saliency maps come from the image branch only".into(),
            ));
        }
        let points = branch
            .token_points
            .as_ref()
            .ok_or_else(|| Error::Config("image branch output lacks sampling positions".into()))?;
        let attn = g.value(branch.attention);
        let sh = attn.shape();
        if sh.len() != 3 || sh[1] != sh[2] || sh[1] != points.len() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "attention shape {sh:?} does not match {} tokens",
                points.len()
            )));
        }
        let (h, t) = (sh[0], sh[1]);
        let data = attn.data();
        let mut weights = vec![0.0; points.len()];
        for head in 0..h {
            let row = &data[head * t * t..head * t * t + t];
            for (k, w) in weights.iter_mut().enumerate() {
                *w += row[k + 1];
            }
        }
        for w in &mut weights {
            *w /= h as f64;
        }
        let grid = self.cfg.feature_grid();
        let mut acc = vec![0.0; grid * grid];
        for (&(y, x), &w) in points.iter().zip(&weights) {
            let y = y.clamp(0.0, (grid - 1) as f64);
            let x = x.clamp(0.0, (grid - 1) as f64);
            let y0 = (y.floor() as usize).min(grid - 1);
            let x0 = (x.floor() as usize).min(grid - 1);
            let y1 = (y0 + 1).min(grid - 1);
            let x1 = (x0 + 1).min(grid - 1);
            let (wy, wx) = (y - y0 as f64, x - x0 as f64);
            acc[y0 * grid + x0] += w * (1.0 - wy) * (1.0 - wx);
            acc[y0 * grid + x1] += w * (1.0 - wy) * wx;
            acc[y1 * grid + x0] += w * wy * (1.0 - wx);
            acc[y1 * grid + x1] += w * wy * wx;
        }
        let coarse = GrayImage::new(grid, grid, acc)?;
        let s = self.cfg.image_size;
        let fine = resize_bilinear(&coarse, s, s)?;
        AttentionMap::new(s, s, fine.pixels().to_vec())
    }

    /// Run both branches and the heads with an externally chosen feature
    /// vector. This is the purely differentiable part of the forward pass.
    pub fn network_forward(&self, g: &mut Graph, net_input: &Tensor, features: &[f64]) -> Result<NetworkPass> {
        let image = self.image_branch(g, net_input)?;
        let radiomics = self.radiomics_branch(g, features)?;
        let (i_fused, r_fused) = self.cross_attention_fuse(g, &image, &radiomics)?;
        let probs = self.classify(g, i_fused, r_fused)?;
        let (zi_src, zr_src) = if self.cfg.project_fused {
            (i_fused, r_fused)
        } else {
            (image.cls, radiomics.cls)
        };
        let projections = self.project(g, zi_src, zr_src)?;
        Ok(NetworkPass {
            probs,
            projections,
            image,
            radiomics,
        })
    }

    /// The full feedback loop: encode the image, turn its CLS attention into
    /// boxes, extract features from the top box of `box_class` (whole canvas
    /// when nothing survives or `force_whole_image` is set), standardize them
    /// with `stats`, and finish with the feature branch, fusion and heads.
    ///
    /// Boxes and features cross into the graph as constants: no gradient
    /// flows through the box pipeline.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        g: &mut Graph,
        net_input: &Tensor,
        rad_source: &GrayImage,
        box_class: usize,
        ctx: &PipelineContext<'_>,
        stats: &mut RunningStats,
        update_stats: bool,
        force_whole_image: bool,
    ) -> Result<ForwardPass> {
        let s = self.cfg.image_size;
        if rad_source.height() != s || rad_source.width() != s {
            return Err(Error::ShapeMismatch(format!(
                "feature source is {}x{}, model canvas is {s}x{s}",
                rad_source.height(),
                rad_source.width()
            )));
        }
        let image = self.image_branch(g, net_input)?;
        let attention = self.extract_cls_attention(g, &image)?;
        let (boxes, used_whole_image) = if force_whole_image {
            (vec![BoundingBox::whole_image(s, s, box_class)], true)
        } else {
            let found = byoa(&attention, ctx.priors, box_class, ctx.byoa)?;
            if found.is_empty() {
                (vec![BoundingBox::whole_image(s, s, box_class)], true)
            } else {
                (found, false)
            }
        };
        let top = &boxes[0];
        let roi = RegionOfInterest::Box {
            x: top.x,
            y: top.y,
            width: top.width,
            height: top.height,
        };
        let raw_features = extract_all(rad_source, &roi, ctx.radiomics)?.values().to_vec();
        if raw_features.len() != self.cfg.radiomics_dim {
            return Err(Error::Config(format!(
                "model expects {} feature inputs but extraction produced {}",
                self.cfg.radiomics_dim,
                raw_features.len()
            )));
        }
        if update_stats {
            stats.update(&raw_features);
        }
        let mut standardized = raw_features.clone();
        stats.standardize(&mut standardized);
        let radiomics = self.radiomics_branch(g, &standardized)?;
        let (i_fused, r_fused) = self.cross_attention_fuse(g, &image, &radiomics)?;
        let probs = self.classify(g, i_fused, r_fused)?;
        let (zi_src, zr_src) = if self.cfg.project_fused {
            (i_fused, r_fused)
        } else {
            (image.cls, radiomics.cls)
        };
        let projections = self.project(g, zi_src, zr_src)?;
        let probabilities = g.value(probs).data().to_vec();
        Ok(ForwardPass {
            probs,
            probabilities,
            projections,
            attention,
            boxes,
            used_whole_image,
            raw_features,
        })
    }
}
