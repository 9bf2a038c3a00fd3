//! Training and evaluation drivers: seeded epoch loops over the feedback
//! pipeline, per-epoch loss logging, checkpointing, and the record-producing
//! evaluation pass.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PipelineContext, RGTConfig, RgtModel};
use crate::autodiff::Graph;
use crate::byoa::byoa;
use crate::data::{map_box_to_original, preprocess, ChannelStats, PreprocessMode, Sample, TrainItem};
use crate::error::{Error, Result};
use crate::io::{load_checkpoint, save_checkpoint, Dtype};
use crate::losses::{combined_loss, focal_loss, nt_xent, ContrastiveConfig, FocalConfig, LossWeights};
use crate::metrics::{ClassificationRecord, LocalizationRecord};
use crate::nn::{AdamW, RunningStats, WarmupCosine};
use crate::radiomics::GrayImage;
use crate::tensor::Tensor;

/// Optimization hyperparameters. `cold_start_epochs` counts initial epochs
/// in which feature extraction sees the whole canvas instead of predicted
/// boxes, giving the attention maps time to become meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: f64,
    pub cold_start_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            base_lr: 1e-3,
            weight_decay: 1e-4,
            warmup_epochs: 5.0,
            cold_start_epochs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("need at least one epoch and batch slot".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("bad base_lr {}", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("bad weight_decay {}", self.weight_decay)));
        }
        if !(self.warmup_epochs >= 0.0) || self.warmup_epochs > self.epochs as f64 {
            return Err(Error::Config(format!(
                "warmup {} must sit inside {} epochs",
                self.warmup_epochs, self.epochs
            )));
        }
        Ok(())
    }
}

/// One epoch's averaged loss components and the whole-image extraction rate
/// (1.0 during cold-start epochs by construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub focal: f64,
    pub contrastive: f64,
    pub fallback_rate: f64,
}

impl EpochStats {
    pub fn csv_header() -> &'static str {
        "epoch,lr,loss,focal,contrastive,fallback_rate"
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6e},{:.12e},{:.12e},{:.12e},{:.4}",
            self.epoch, self.lr, self.loss, self.focal, self.contrastive, self.fallback_rate
        )
    }
}

/// Network input plus the matching extraction source: both views come from
/// the same resize/crop/flip so boxes land on the pixels the features see.
pub struct Prepared {
    pub net: Tensor,
    pub rad: GrayImage,
}

pub fn prepare_input(
    img: &GrayImage,
    size: usize,
    mode: PreprocessMode,
    stats: ChannelStats,
    flip: bool,
) -> Result<Prepared> {
    let net = preprocess(img, size, mode, Some(stats), flip)?;
    let raw = preprocess(img, size, mode, None, flip)?;
    let rad = GrayImage::new(size, size, raw.data().to_vec())?;
    Ok(Prepared { net, rad })
}

/// Mean and deviation of min-maxed train-resized pixels across the corpus,
/// computed once before training and then fixed.
pub fn compute_channel_stats(items: &[TrainItem<'_>], size: usize) -> Result<ChannelStats> {
    let mut count = 0u64;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for it in items {
        let t = preprocess(it.image, size, PreprocessMode::Train, None, false)?;
        for &v in t.data() {
            count += 1;
            let d = v - mean;
            mean += d / count as f64;
            m2 += d * (v - mean);
        }
    }
    if count < 2 {
        return Err(Error::Data("not enough pixels for channel statistics".into()));
    }
    let std = (m2 / count as f64).sqrt();
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::Data(
            "training corpus is constant; cannot normalize".into(),
        ));
    }
    Ok(ChannelStats { mean, std })
}

/// The class whose box prior seeds feature extraction for a training sample:
/// the first positive label in canonical order, class 0 when all-negative.
pub fn training_box_class(labels: &[u8]) -> usize {
    labels.iter().position(|&l| l != 0).unwrap_or(0)
}

/// Run the optimization loop. Gradients flow through network weights only;
/// box finding and feature extraction happen between graphs as plain data.
/// Deterministic given the model's initial weights, the items and the seed.
/// A non-finite loss aborts with a diagnostic naming the epoch, batch and
/// loss components.
#[allow(clippy::too_many_arguments)]
pub fn train_loop(
    model: &RgtModel,
    items: &[TrainItem<'_>],
    ctx: &PipelineContext<'_>,
    channel: ChannelStats,
    focal: &FocalConfig,
    contrastive: &ContrastiveConfig,
    weights: &LossWeights,
    cfg: &TrainConfig,
    stats: &mut RunningStats,
    seed: u64,
    mut log: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::Data("no training items".into()));
    }
    let size = model.config().image_size;
    let class_count = model.config().class_count;
    for it in items {
        if it.labels.len() != class_count {
            return Err(Error::ShapeMismatch(format!(
                "sample of patient {} has {} labels, model has {class_count} classes",
                it.patient_id,
                it.labels.len()
            )));
        }
    }
    let params = model.params();
    let mut opt = AdamW::new(cfg.weight_decay);
    let sched = WarmupCosine {
        base_lr: cfg.base_lr,
        warmup_epochs: cfg.warmup_epochs,
        total_epochs: cfg.epochs as f64,
    };
    let n = items.len();
    let batches = n.div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let flips: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let cold = epoch < cfg.cold_start_epochs;
        let mut sums = (0.0, 0.0, 0.0); // loss, focal, contrastive, sample-weighted
        let mut fallbacks = 0usize;
        let mut last_lr = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Graph::new();
            let mut prob_rows = Vec::with_capacity(chunk.len());
            let mut zi_rows = Vec::with_capacity(chunk.len());
            let mut zr_rows = Vec::with_capacity(chunk.len());
            let mut label_data = Vec::with_capacity(chunk.len() * class_count);
            for (slot, &idx) in chunk.iter().enumerate() {
                let item = &items[idx];
                let prepared =
                    prepare_input(item.image, size, PreprocessMode::Train, channel, flips[bi * cfg.batch_size + slot])?;
                let pass = model.forward(
                    &mut g,
                    &prepared.net,
                    &prepared.rad,
                    training_box_class(item.labels),
                    ctx,
                    stats,
                    true,
                    cold,
                )?;
                if pass.used_whole_image {
                    fallbacks += 1;
                }
                prob_rows.push(pass.probs);
                zi_rows.push(pass.projections.z_i);
                zr_rows.push(pass.projections.z_r);
                label_data.extend(item.labels.iter().map(|&l| f64::from(l)));
            }
            let probs = g.concat0(&prob_rows)?;
            let z_i = g.concat0(&zi_rows)?;
            let z_r = g.concat0(&zr_rows)?;
            let labels = Tensor::from_vec(&[chunk.len(), class_count], label_data)?;
            let l_fl = focal_loss(&mut g, probs, &labels, focal)?;
            let l_cl = nt_xent(&mut g, z_i, z_r, contrastive)?;
            let total = combined_loss(&mut g, l_cl, l_fl, weights)?;
            let (tv, fv, cv) = (
                g.value(total).data()[0],
                g.value(l_fl).data()[0],
                g.value(l_cl).data()[0],
            );
            if !tv.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch} batch {bi}: total {tv}, focal {fv}, contrastive {cv}, lr {last_lr}"
                )));
            }
            g.backward(total)?;
            g.write_grads(&params);
            let progress = epoch as f64 + (bi + 1) as f64 / batches as f64;
            last_lr = sched.lr_at(progress);
            opt.step(&params, last_lr);
            let b = chunk.len() as f64;
            sums.0 += tv * b;
            sums.1 += fv * b;
            sums.2 += cv * b;
        }
        let stats_line = EpochStats {
            epoch,
            lr: last_lr,
            loss: sums.0 / n as f64,
            focal: sums.1 / n as f64,
            contrastive: sums.2 / n as f64,
            fallback_rate: fallbacks as f64 / n as f64,
        };
        log(&stats_line);
        history.push(stats_line);
    }
    Ok(history)
}

/// Classification records plus per-positive-class localization records for a
/// labeled, box-annotated evaluation split. Feature statistics stay frozen;
/// the extraction box comes from class 0's prior so evaluation never reads a
/// label before predicting.
pub fn evaluate(
    model: &RgtModel,
    samples: &[Sample],
    ctx: &PipelineContext<'_>,
    channel: ChannelStats,
    stats: &RunningStats,
) -> Result<EvalOutput> {
    let size = model.config().image_size;
    let class_count = model.config().class_count;
    let mut frozen = stats.clone();
    let mut classification = Vec::with_capacity(samples.len());
    let mut localization = Vec::new();
    let mut fallbacks = 0usize;
    for (i, sample) in samples.iter().enumerate() {
        let prepared = prepare_input(&sample.image, size, PreprocessMode::Eval, channel, false)?;
        let mut g = Graph::new();
        let pass = model.forward(&mut g, &prepared.net, &prepared.rad, 0, ctx, &mut frozen, false, false)?;
        if pass.used_whole_image {
            fallbacks += 1;
        }
        let image_id = format!("{}/{i:05}", sample.patient_id);
        if sample.labels.len() != class_count {
            return Err(Error::ShapeMismatch(format!(
                "sample {image_id} has {} labels, model has {class_count} classes",
                sample.labels.len()
            )));
        }
        classification.push(ClassificationRecord {
            image_id: image_id.clone(),
            scores: pass.probabilities.clone(),
            labels: sample.labels.clone(),
        });
        let (oh, ow) = (sample.image.height(), sample.image.width());
        for class_id in 0..class_count {
            let truth: Vec<_> = sample
                .gt_boxes
                .iter()
                .filter(|b| b.class_id == class_id)
                .copied()
                .collect();
            if truth.is_empty() {
                continue;
            }
            let predicted = byoa(&pass.attention, ctx.priors, class_id, ctx.byoa)?
                .into_iter()
                .map(|b| map_box_to_original(&b, size, oh, ow))
                .collect();
            localization.push(LocalizationRecord {
                image_id: image_id.clone(),
                class_id,
                predicted,
                truth,
            });
        }
    }
    Ok(EvalOutput {
        classification,
        localization,
        fallback_rate: fallbacks as f64 / samples.len().max(1) as f64,
    })
}

pub struct EvalOutput {
    pub classification: Vec<ClassificationRecord>,
    pub localization: Vec<LocalizationRecord>,
    pub fallback_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    model: RGTConfig,
    feature_stats: RunningStats,
    channel: ChannelStats,
    extra: serde_json::Value,
}

/// Persist weights plus everything needed to reproduce inference: the
/// architecture, the frozen feature statistics and the channel statistics.
pub fn save_model(
    path: &Path,
    model: &RgtModel,
    feature_stats: &RunningStats,
    channel: ChannelStats,
    extra: serde_json::Value,
) -> Result<()> {
    let manifest = RunManifest {
        model: model.config().clone(),
        feature_stats: feature_stats.clone(),
        channel,
        extra,
    };
    let value = serde_json::to_value(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    save_checkpoint(path, &value, &model.params(), Dtype::F64)
}

pub struct SavedRun {
    pub model: RgtModel,
    pub feature_stats: RunningStats,
    pub channel: ChannelStats,
    pub extra: serde_json::Value,
}

pub fn load_model(path: &Path) -> Result<SavedRun> {
    let ckpt = load_checkpoint(path)?;
    let manifest: RunManifest =
        serde_json::from_value(ckpt.config.clone()).map_err(|e| Error::Serde(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = RgtModel::new(&manifest.model, &mut rng)?;
    ckpt.load_into(&model.params())?;
    Ok(SavedRun {
        model,
        feature_stats: manifest.feature_stats,
        channel: manifest.channel,
        extra: manifest.extra,
    })
}
