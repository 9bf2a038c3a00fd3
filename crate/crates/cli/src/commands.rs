//! Implementations of the subcommands. Each returns `Result<()>`; `main`
//! maps errors to the exit-code convention (2 config, 3 data, 4 numeric).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rgt_core::byoa::{byoa, AttentionMap, BoundingBox, BoxMode, ByoaConfig};
use rgt_core::data::{GroundTruthEntry, ManifestEntry};
use rgt_core::losses::{ContrastiveConfig, FocalConfig, LossWeights};
use rgt_core::metrics::{
    classification_table, localization_table, per_class_auc, ClassificationRecord,
    LocalizationRecord,
};
use rgt_core::model::audit::audit_gradients;
use rgt_core::model::RGTConfig;
use rgt_core::radiomics::{extract_all, RadiomicsSettings, RegionOfInterest};
use rgt_core::{Error, Result};

use crate::config::{self, Overrides, RunConfig};
use crate::formats::{
    parse_box, parse_list, read_json, write_json, BoxesEntry, LabelsEntry, PriorsFile,
    ScoresEntry,
};
use crate::pngio;

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// `extract`: handcrafted features of one image region, as JSON or CSV.
pub fn extract(image: &Path, region: Option<&str>, bin_width: f64, out: &Path) -> Result<()> {
    let img = pngio::read_gray(image)?;
    let roi = match region {
        Some(text) => {
            let b = parse_box(text, 0)?;
            RegionOfInterest::Box {
                x: b.x,
                y: b.y,
                width: b.width,
                height: b.height,
            }
        }
        None => RegionOfInterest::Box {
            x: 0,
            y: 0,
            width: img.width(),
            height: img.height(),
        },
    };
    let settings = RadiomicsSettings { bin_width };
    let features = extract_all(&img, &roi, &settings)?;

    let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "json" => {
            let rows: Vec<serde_json::Value> = features
                .named()
                .map(|(name, value)| serde_json::json!({ "name": name, "value": value }))
                .collect();
            write_json(out, &rows)?;
        }
        "csv" => {
            let mut text = String::from("name,value\n");
            for (name, value) in features.named() {
                text.push_str(&format!("{name},{value}\n"));
            }
            write_text(out, &text)?;
        }
        other => {
            return Err(Error::Config(format!(
                "output {}: unsupported extension {other:?} (expected .json or .csv)",
                out.display()
            )))
        }
    }
    println!("extracted {} features -> {}", features.values().len(), out.display());
    Ok(())
}

/// `gen-data`: write the synthetic corpus as PNGs plus manifests, boxes and
/// class box priors.
pub fn gen_data(config: Option<&Path>, out_flag: Option<PathBuf>) -> Result<()> {
    let over = Overrides {
        output_dir: out_flag,
        ..Overrides::default()
    };
    let cfg = config::resolve(config, &over)?;
    let dataset = rgt_core::data::generate_synthetic(&cfg.synthetic)?;
    let root = &cfg.output_dir;
    ensure_dir(root)?;

    write_json(
        &root.join("priors.json"),
        &PriorsFile {
            class_names: dataset.class_names.clone(),
            priors: dataset.priors.clone(),
        },
    )?;

    let counts = [
        ("train", cfg.synthetic.train_count),
        ("val", cfg.synthetic.val_count),
        ("test", cfg.synthetic.test_count),
    ];
    let mut offset = 0usize;
    for (split, count) in counts {
        let img_dir = root.join(split).join("images");
        ensure_dir(&img_dir)?;
        let mut manifest = String::new();
        let mut boxes: Vec<GroundTruthEntry> = Vec::new();
        for i in 0..count {
            let sample = &dataset.samples[offset + i];
            let rel = format!("{split}/images/{i:05}.png");
            pngio::write_gray(&root.join(&rel), &sample.image)?;
            let entry = ManifestEntry {
                path: rel.clone(),
                labels: sample.labels.clone(),
                patient_id: sample.patient_id.clone(),
            };
            manifest.push_str(
                &serde_json::to_string(&entry).map_err(|e| Error::Serde(e.to_string()))?,
            );
            manifest.push('\n');
            for b in &sample.gt_boxes {
                boxes.push(GroundTruthEntry {
                    path: rel.clone(),
                    bbox: *b,
                });
            }
        }
        write_text(&root.join(split).join("manifest.jsonl"), &manifest)?;
        write_json(&root.join(split).join("boxes.json"), &boxes)?;
        println!("{split}: {count} images -> {}", root.join(split).display());
        offset += count;
    }
    Ok(())
}

/// `byoa`: boxes from a saliency-map PNG and per-class priors, plus an
/// overlay image for eyeballing.
pub fn byoa_cmd(
    map_path: &Path,
    priors_path: &Path,
    class: usize,
    mode: BoxMode,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let img = pngio::read_gray(map_path)?;
    let map = AttentionMap::new(img.height(), img.width(), img.pixels().to_vec())?;
    let priors: PriorsFile = read_json(priors_path)?;

    let mut bcfg = match config {
        Some(p) => config::load_file(p)?.byoa,
        None => ByoaConfig::default(),
    };
    bcfg.mode = mode;

    let boxes = byoa(&map, &priors.priors, class, &bcfg)?;
    ensure_dir(out)?;
    write_json(&out.join("boxes.json"), &boxes)?;
    pngio::write_overlay(&out.join("overlay.png"), &map, &boxes)?;
    println!(
        "{} box(es) for class {class} -> {}",
        boxes.len(),
        out.display()
    );
    Ok(())
}

fn class_names_for(flag: Option<&str>, class_count: usize) -> Result<Vec<String>> {
    match flag {
        Some(text) => {
            let names: Vec<String> = parse_list("class name", text)?;
            if names.len() < class_count {
                return Err(Error::Config(format!(
                    "{} class names given, data references {class_count} classes",
                    names.len()
                )));
            }
            Ok(names)
        }
        None => Ok((0..class_count).map(|c| format!("class_{c}")).collect()),
    }
}

/// `eval-loc`: thresholded localization accuracy table from prediction and
/// ground-truth box files joined on (image_id, class_id).
pub fn eval_loc(
    pred: &Path,
    gt: &Path,
    thresholds: &str,
    strict: bool,
    class_names: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let pred_entries: Vec<BoxesEntry> = read_json(pred)?;
    let gt_entries: Vec<BoxesEntry> = read_json(gt)?;
    let thresholds: Vec<f64> = parse_list("threshold", thresholds)?;

    let mut truth: BTreeMap<(String, usize), Vec<BoundingBox>> = BTreeMap::new();
    for e in gt_entries {
        truth.insert((e.image_id, e.class_id), e.boxes);
    }
    let mut predicted: BTreeMap<(String, usize), Vec<BoundingBox>> = BTreeMap::new();
    for e in pred_entries {
        let key = (e.image_id, e.class_id);
        if !truth.contains_key(&key) {
            return Err(Error::Data(format!(
                "prediction for {}/{} has no ground-truth entry",
                key.0, key.1
            )));
        }
        predicted.insert(key, e.boxes);
    }

    let mut records = Vec::with_capacity(truth.len());
    let mut max_class = 0usize;
    for ((image_id, class_id), boxes) in truth {
        max_class = max_class.max(class_id);
        records.push(LocalizationRecord {
            image_id: image_id.clone(),
            class_id,
            predicted: predicted.remove(&(image_id, class_id)).unwrap_or_default(),
            truth: boxes,
        });
    }
    let names = class_names_for(class_names, max_class + 1)?;

    let table = localization_table(&records, &names, &thresholds, strict)?;
    let text = table.to_markdown();
    print!("{text}");
    if let Some(path) = out {
        write_text(path, &text)?;
        eprintln!("report -> {}", path.display());
    }
    Ok(())
}

fn scores_to_records(
    scores: Vec<ScoresEntry>,
    labels: &BTreeMap<String, Vec<u8>>,
    class_count: usize,
) -> Result<Vec<ClassificationRecord>> {
    let mut records = Vec::with_capacity(scores.len());
    for e in scores {
        let l = labels.get(&e.image_id).ok_or_else(|| {
            Error::Data(format!("scores for {} have no label entry", e.image_id))
        })?;
        if e.scores.len() != class_count {
            return Err(Error::Data(format!(
                "{}: {} scores, labels define {class_count} classes",
                e.image_id,
                e.scores.len()
            )));
        }
        records.push(ClassificationRecord {
            image_id: e.image_id,
            scores: e.scores,
            labels: l.clone(),
        });
    }
    Ok(records)
}

/// `eval-cls`: per-class AUC table; with `--seeds-dir`, mean and standard
/// deviation across one score file per seed.
pub fn eval_cls(
    pred: Option<&Path>,
    labels_path: &Path,
    seeds_dir: Option<&Path>,
    method: &str,
    class_names: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let label_entries: Vec<LabelsEntry> = read_json(labels_path)?;
    if label_entries.is_empty() {
        return Err(Error::Data(format!("{}: no label entries", labels_path.display())));
    }
    let class_count = label_entries[0].labels.len();
    let mut labels: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for e in label_entries {
        if e.labels.len() != class_count {
            return Err(Error::Data(format!(
                "{}: {} labels, expected {class_count}",
                e.image_id,
                e.labels.len()
            )));
        }
        labels.insert(e.image_id, e.labels);
    }

    let score_files: Vec<PathBuf> = match (pred, seeds_dir) {
        (Some(p), None) => vec![p.to_path_buf()],
        (None, Some(dir)) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Data(format!(
                    "{}: no .json score files",
                    dir.display()
                )));
            }
            files
        }
        _ => {
            return Err(Error::Config(
                "pass exactly one of --pred or --seeds-dir".into(),
            ))
        }
    };

    let mut runs = Vec::with_capacity(score_files.len());
    for f in &score_files {
        let scores: Vec<ScoresEntry> = read_json(f)?;
        let records = scores_to_records(scores, &labels, class_count)?;
        runs.push(per_class_auc(&records, class_count)?);
    }
    let names = class_names_for(class_names, class_count)?;

    let table = classification_table(method, &names, &runs)?;
    let text = table.to_markdown();
    print!("{text}");
    if let Some(path) = out {
        write_text(path, &text)?;
        eprintln!("report -> {}", path.display());
    }
    Ok(())
}

/// `gradcheck`: finite-difference audit of every model parameter, reported
/// per module. Exceeding the tolerance is a numeric failure (exit 4).
pub fn gradcheck(config: Option<&Path>) -> Result<()> {
    const TOL: f64 = 1e-4;
    let (model_cfg, focal, contrastive, weights) = match config {
        Some(p) => {
            let cfg: RunConfig = config::load_file(p)?;
            eprintln!("config: loaded {}", p.display());
            (cfg.model, cfg.focal, cfg.contrastive, cfg.weights)
        }
        None => {
            eprintln!("config: small audit profile (no --config)");
            (
                RGTConfig::tiny(),
                FocalConfig::default(),
                ContrastiveConfig::default(),
                LossWeights::default(),
            )
        }
    };

    let reports = audit_gradients(&model_cfg, &focal, &contrastive, &weights, 1e-5)?;
    println!("module,checked,max_rel_err");
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for r in &reports {
        println!("{},{},{:.3e}", r.module, r.checked, r.max_rel_err);
        worst = worst.max(r.max_rel_err);
        checked += r.checked;
    }
    println!("overall,{checked},{worst:.3e}");
    if worst < TOL {
        println!("gradcheck: pass (tolerance {TOL:.0e})");
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient audit failed: max rel err {worst:.3e} exceeds {TOL:.0e}"
        )))
    }
}
