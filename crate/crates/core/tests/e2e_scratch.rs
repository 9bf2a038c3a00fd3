//! Scratch: desk-scale end-to-end timing/learning probe. Not part of the suite.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgt_core::byoa::ByoaConfig;
use rgt_core::data::{generate_synthetic, SyntheticConfig};
use rgt_core::losses::{ContrastiveConfig, FocalConfig, LossWeights};
use rgt_core::metrics::{iou_accuracy, per_class_auc};
use rgt_core::model::train::{compute_channel_stats, evaluate, train_loop, TrainConfig};
use rgt_core::model::{PipelineContext, RGTConfig, RgtModel};
use rgt_core::nn::RunningStats;
use rgt_core::radiomics::RadiomicsSettings;

#[test]
#[ignore]
fn desk_scale_probe() {
    let t0 = Instant::now();
    let data_cfg = SyntheticConfig::default();
    let data = generate_synthetic(&data_cfg).unwrap();
    let n_train = data_cfg.train_count;
    let n_val = data_cfg.val_count;
    let train = &data.samples[..n_train];
    let test = &data.samples[n_train + n_val..];
    println!("corpus: {} train / {} test  ({:.1}s)", train.len(), test.len(), t0.elapsed().as_secs_f64());

    let cfg = RGTConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(613);
    let model = RgtModel::new(&cfg, &mut rng).unwrap();
    let byoa_cfg = ByoaConfig::default();
    let rad_cfg = RadiomicsSettings { bin_width: 0.05 };
    let ctx = PipelineContext { priors: &data.priors, byoa: &byoa_cfg, radiomics: &rad_cfg };

    let items: Vec<_> = train.iter().map(|s| s.train_view()).collect();
    let channel = compute_channel_stats(&items, cfg.image_size).unwrap();
    println!("channel stats mean {:.4} std {:.4}", channel.mean, channel.std);

    let mut stats = RunningStats::new(cfg.radiomics_dim);
    let tcfg = TrainConfig::default();
    let t1 = Instant::now();
    let history = train_loop(
        &model, &items, &ctx, channel,
        &FocalConfig::default(), &ContrastiveConfig::default(), &LossWeights::default(),
        &tcfg, &mut stats, 613,
        |e| println!("  epoch {:2} lr {:.2e} loss {:.5} focal {:.5} ctr {:.5} fb {:.2} [{:.0}s]",
            e.epoch, e.lr, e.loss, e.focal, e.contrastive, e.fallback_rate, t1.elapsed().as_secs_f64()),
    ).unwrap();
    println!("train time {:.1}s, final loss {:.5}", t1.elapsed().as_secs_f64(), history.last().unwrap().loss);

    let t2 = Instant::now();
    let out = evaluate(&model, test, &ctx, channel, &stats).unwrap();
    let aucs = per_class_auc(&out.classification, cfg.class_count).unwrap();
    let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
    let mean_auc = defined.iter().sum::<f64>() / defined.len() as f64;
    let acc = iou_accuracy(&out.localization, 0.1, false).unwrap();
    println!("eval time {:.1}s  per-class AUC {:?}  mean {:.4}", t2.elapsed().as_secs_f64(), aucs, mean_auc);
    println!("iou-acc@0.1 mean {:.4} per-class {:?}", acc.mean, acc.per_class);
    println!("eval fallback rate {:.3}", out.fallback_rate);
    println!("TOTAL {:.1}s", t0.elapsed().as_secs_f64());
}
