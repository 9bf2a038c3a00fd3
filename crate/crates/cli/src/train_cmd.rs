//! The `train` command: synthesize the corpus, run the optimization loop,
//! checkpoint the model and write evaluation artifacts for the held-out
//! test split.

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgt_core::data::{generate_synthetic, TrainItem};
use rgt_core::metrics::{iou_accuracy, per_class_auc};
use rgt_core::model::train::{
    compute_channel_stats, evaluate, save_model, train_loop, EpochStats,
};
use rgt_core::model::{PipelineContext, RgtModel};
use rgt_core::nn::RunningStats;
use rgt_core::{Error, Result};

use crate::config::{self, Overrides};
use crate::formats::{write_json, BoxesEntry, LabelsEntry, ScoresEntry};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn train(config_path: Option<&Path>, over: &Overrides) -> Result<()> {
    let cfg = config::resolve(config_path, over)?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::Data(format!("{}: {e}", out.display())))?;

    let dataset = generate_synthetic(&cfg.synthetic)?;
    let n_train = cfg.synthetic.train_count;
    let n_val = cfg.synthetic.val_count;
    let train_samples = &dataset.samples[..n_train];
    let test_samples = &dataset.samples[n_train + n_val..];
    eprintln!(
        "corpus: {} train / {} val / {} test, {} classes",
        n_train,
        n_val,
        test_samples.len(),
        dataset.class_names.len()
    );

    let items: Vec<TrainItem<'_>> = train_samples.iter().map(|s| s.train_view()).collect();
    let channel = compute_channel_stats(&items, cfg.model.image_size)?;
    eprintln!("channel: mean {:.6} std {:.6}", channel.mean, channel.std);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = RgtModel::new(&cfg.model, &mut rng)?;
    let mut stats = RunningStats::new(cfg.model.radiomics_dim);
    let ctx = PipelineContext {
        priors: &dataset.priors,
        byoa: &cfg.byoa,
        radiomics: &cfg.radiomics,
    };

    println!("{}", EpochStats::csv_header());
    let history = train_loop(
        &model,
        &items,
        &ctx,
        channel,
        &cfg.focal,
        &cfg.contrastive,
        &cfg.weights,
        &cfg.train,
        &mut stats,
        cfg.seed,
        |e| println!("{}", e.csv_line()),
    )?;

    let mut csv = String::from(EpochStats::csv_header());
    csv.push('\n');
    for e in &history {
        csv.push_str(&e.csv_line());
        csv.push('\n');
    }
    write_text(&out.join("train_log.csv"), &csv)?;

    let extra = serde_json::to_value(&cfg).map_err(|e| Error::Serde(e.to_string()))?;
    save_model(&out.join("model.rgt"), &model, &stats, channel, extra)?;

    let eval = evaluate(&model, test_samples, &ctx, channel, &stats)?;
    let scores: Vec<ScoresEntry> = eval
        .classification
        .iter()
        .map(|r| ScoresEntry {
            image_id: r.image_id.clone(),
            scores: r.scores.clone(),
        })
        .collect();
    let labels: Vec<LabelsEntry> = eval
        .classification
        .iter()
        .map(|r| LabelsEntry {
            image_id: r.image_id.clone(),
            labels: r.labels.clone(),
        })
        .collect();
    let pred_boxes: Vec<BoxesEntry> = eval
        .localization
        .iter()
        .map(|r| BoxesEntry {
            image_id: r.image_id.clone(),
            class_id: r.class_id,
            boxes: r.predicted.clone(),
        })
        .collect();
    let gt_boxes: Vec<BoxesEntry> = eval
        .localization
        .iter()
        .map(|r| BoxesEntry {
            image_id: r.image_id.clone(),
            class_id: r.class_id,
            boxes: r.truth.clone(),
        })
        .collect();
    write_json(&out.join("scores.json"), &scores)?;
    write_json(&out.join("labels.json"), &labels)?;
    write_json(&out.join("pred_boxes.json"), &pred_boxes)?;
    write_json(&out.join("gt_boxes.json"), &gt_boxes)?;

    let aucs = per_class_auc(&eval.classification, cfg.model.class_count)?;
    let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
    let mean_auc = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let mut iou_acc = serde_json::Map::new();
    let mut acc_at_01 = f64::NAN;
    if !eval.localization.is_empty() {
        for t in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7] {
            let acc = iou_accuracy(&eval.localization, t, false)?;
            if t == 0.1 {
                acc_at_01 = acc.mean;
            }
            iou_acc.insert(format!("{t}"), serde_json::json!(acc.mean));
        }
    }
    let summary = serde_json::json!({
        "mean_auc": mean_auc,
        "per_class_auc": aucs,
        "iou_accuracy": iou_acc,
        "eval_fallback_rate": eval.fallback_rate,
        "lambda": cfg.weights.lambda,
        "keep_fraction": cfg.byoa.keep_fraction,
        "seed": cfg.seed,
        "epochs": history.len(),
    });
    write_json(&out.join("summary.json"), &summary)?;

    println!(
        "test mean_auc={mean_auc:.6} iou_acc@0.1={acc_at_01:.6} fallback_rate={:.4}",
        eval.fallback_rate
    );
    println!("artifacts -> {}", out.display());
    Ok(())
}
