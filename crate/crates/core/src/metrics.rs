//! Evaluation: box overlap, thresholded localization accuracy, ranking AUC,
//! and the report tables the CLI renders from prediction files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::byoa::BoundingBox;
use crate::error::{Error, Result};

/// Intersection over union of two boxes on the integer pixel grid, using
/// half-open extents. Exactly symmetric, exactly 1 for identical boxes and 0
/// for disjoint ones.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let overlap = |a0: usize, alen: usize, b0: usize, blen: usize| -> usize {
        let lo = a0.max(b0);
        let hi = (a0 + alen).min(b0 + blen);
        hi.saturating_sub(lo)
    };
    let inter = overlap(a.x, a.width, b.x, b.width) * overlap(a.y, a.height, b.y, b.height);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Predicted and ground-truth boxes for one positive (image, class) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub image_id: String,
    pub class_id: usize,
    pub predicted: Vec<BoundingBox>,
    pub truth: Vec<BoundingBox>,
}

impl LocalizationRecord {
    /// Overlap of the best-matching (prediction, truth) pair; 0 with no
    /// predictions.
    pub fn best_iou(&self) -> f64 {
        let mut best = 0.0f64;
        for p in &self.predicted {
            for t in &self.truth {
                best = best.max(iou(p, t));
            }
        }
        best
    }
}

/// Per-class fraction of records counted correct at the threshold, plus the
/// macro mean over the classes present.
#[derive(Debug, Clone, PartialEq)]
pub struct IouAccuracy {
    pub per_class: BTreeMap<usize, f64>,
    pub mean: f64,
}

/// Thresholded localization accuracy. A record counts as correct when its
/// best box overlap reaches `threshold` (`>=` by default; `strict` switches
/// to `>`). Every record needs at least one ground-truth box.
pub fn iou_accuracy(
    records: &[LocalizationRecord],
    threshold: f64,
    strict: bool,
) -> Result<IouAccuracy> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "IoU threshold must be in (0, 1), got {threshold}"
        )));
    }
    let mut hits: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records {
        if r.truth.is_empty() {
            return Err(Error::Data(format!(
                "record {} class {} has no ground-truth box",
                r.image_id, r.class_id
            )));
        }
        let best = r.best_iou();
        let correct = if strict { best > threshold } else { best >= threshold };
        let entry = hits.entry(r.class_id).or_insert((0, 0));
        entry.0 += correct as usize;
        entry.1 += 1;
    }
    let per_class: BTreeMap<usize, f64> = hits
        .into_iter()
        .map(|(c, (ok, total))| (c, ok as f64 / total as f64))
        .collect();
    if per_class.is_empty() {
        return Err(Error::Data("no localization records".into()));
    }
    let mean = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(IouAccuracy { per_class, mean })
}

/// Per-class sigmoid scores and binary labels for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub image_id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Area under the ROC curve by the rank-sum route, with tied scores counted
/// half. Returns None when the labels are single-class, which callers leave
/// out of any mean.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("scores must be finite".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Walk tie groups, handing every member the group's mid-rank. All the
    // arithmetic below stays on exact dyadic values, so the result matches a
    // pairwise count bit for bit.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the mid-rank.
        let mid = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Some(u / (n_pos * n_neg) as f64))
}

/// Per-class AUC over a batch of per-image score/label records.
pub fn per_class_auc(records: &[ClassificationRecord], class_count: usize) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(class_count);
    for c in 0..class_count {
        let mut scores = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for r in records {
            if r.scores.len() != class_count || r.labels.len() != class_count {
                return Err(Error::ShapeMismatch(format!(
                    "record {} has {} scores / {} labels, expected {class_count}",
                    r.image_id,
                    r.scores.len(),
                    r.labels.len()
                )));
            }
            scores.push(r.scores[c]);
            labels.push(r.labels[c]);
        }
        out.push(roc_auc(&scores, &labels)?);
    }
    Ok(out)
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "-".into(),
    }
}

/// Accuracy-per-threshold grid: one row per threshold, one column per class,
/// plus the macro-mean column.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationTable {
    pub class_names: Vec<String>,
    pub thresholds: Vec<f64>,
    /// rows[t][c] mirrors thresholds x class_names; None marks a class with
    /// no records.
    pub rows: Vec<Vec<Option<f64>>>,
    pub means: Vec<f64>,
}

/// Evaluate the records at every threshold and lay the results out as the
/// localization grid.
pub fn localization_table(
    records: &[LocalizationRecord],
    class_names: &[String],
    thresholds: &[f64],
    strict: bool,
) -> Result<LocalizationTable> {
    if thresholds.is_empty() {
        return Err(Error::Config("no IoU thresholds given".into()));
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    let mut means = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let acc = iou_accuracy(records, t, strict)?;
        rows.push(
            (0..class_names.len())
                .map(|c| acc.per_class.get(&c).copied())
                .collect(),
        );
        means.push(acc.mean);
    }
    Ok(LocalizationTable {
        class_names: class_names.to_vec(),
        thresholds: thresholds.to_vec(),
        rows,
        means,
    })
}

impl LocalizationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T(IoU)");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",Mean\n");
        for (i, &t) in self.thresholds.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for cell in &self.rows[i] {
                out.push(',');
                out.push_str(&fmt_cell(*cell));
            }
            out.push_str(&format!(",{:.3}\n", self.means[i]));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| T(IoU) |");
        for name in &self.class_names {
            out.push_str(&format!(" {name} |"));
        }
        out.push_str(" Mean |\n|---|");
        for _ in &self.class_names {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        for (i, &t) in self.thresholds.iter().enumerate() {
            out.push_str(&format!("| {t} |"));
            for cell in &self.rows[i] {
                out.push_str(&format!(" {} |", fmt_cell(*cell)));
            }
            out.push_str(&format!(" {:.3} |\n", self.means[i]));
        }
        out
    }
}

/// Per-class AUC summary over one or more runs: mean with the run-to-run
/// standard deviation in parentheses once there are at least two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationTable {
    pub label: String,
    pub class_names: Vec<String>,
    /// cells[c] = (mean, Some(std)) per class; None marks a class undefined
    /// in some run.
    pub cells: Vec<Option<(f64, Option<f64>)>>,
    pub mean: Option<(f64, Option<f64>)>,
}

fn mean_and_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Aggregate per-run, per-class AUCs into the classification summary row.
/// `runs[s][c]` is run s's AUC for class c.
pub fn classification_table(
    label: &str,
    class_names: &[String],
    runs: &[Vec<Option<f64>>],
) -> Result<ClassificationTable> {
    if runs.is_empty() {
        return Err(Error::Data("no runs to aggregate".into()));
    }
    for run in runs {
        if run.len() != class_names.len() {
            return Err(Error::ShapeMismatch(format!(
                "run has {} classes, expected {}",
                run.len(),
                class_names.len()
            )));
        }
    }
    let mut cells = Vec::with_capacity(class_names.len());
    for c in 0..class_names.len() {
        let per_run: Option<Vec<f64>> = runs.iter().map(|r| r[c]).collect();
        cells.push(per_run.map(|v| mean_and_std(&v)));
    }
    // Mean column: each run's macro mean over its defined classes, then the
    // spread of those run means.
    let run_means: Vec<f64> = runs
        .iter()
        .filter_map(|r| {
            let defined: Vec<f64> = r.iter().flatten().copied().collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        })
        .collect();
    let mean = (!run_means.is_empty()).then(|| mean_and_std(&run_means));
    Ok(ClassificationTable {
        label: label.to_string(),
        class_names: class_names.to_vec(),
        cells,
        mean,
    })
}

fn fmt_stat(cell: Option<(f64, Option<f64>)>) -> String {
    match cell {
        Some((m, Some(s))) => format!("{m:.3} ({s:.3})"),
        Some((m, None)) => format!("{m:.3}"),
        None => "-".into(),
    }
}

impl ClassificationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Method");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",Mean\n");
        out.push_str(&self.label);
        for cell in &self.cells {
            out.push(',');
            out.push_str(&fmt_stat(*cell));
        }
        out.push(',');
        out.push_str(&fmt_stat(self.mean));
        out.push('\n');
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Method |");
        for name in &self.class_names {
            out.push_str(&format!(" {name} |"));
        }
        out.push_str(" Mean |\n|---|");
        for _ in &self.class_names {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        out.push_str(&format!("| {} |", self.label));
        for cell in &self.cells {
            out.push_str(&format!(" {} |", fmt_stat(*cell)));
        }
        out.push_str(&format!(" {} |\n", fmt_stat(self.mean)));
        out
    }
}
