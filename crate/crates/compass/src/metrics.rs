//! Basic classification metrics: confusion matrix, rate table in micro and
//! macro averaging, ROC AUC, cross-entropy loss, and attack success rate.

use serde::Serialize;
use thiserror::Error;

use crate::attacks::AdversarialBatch;
use crate::data::LabeledDataset;
use crate::model::{softmax, Model, ModelError};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has {dataset} classes but model `{model}` has {model_classes}")]
    ClassCountMismatch {
        dataset: usize,
        model: String,
        model_classes: usize,
    },
    #[error("score row {row} sums to {sum}, expected 1")]
    ScoresNotNormalized { row: usize, sum: f64 },
    #[error("no class has both positive and negative samples")]
    AucUndefined,
    #[error("adversarial batch is empty")]
    EmptyBatch,
    #[error("scores and labels disagree in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
}

/// C x C counts; rows index the true class, columns the predicted class.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Self {
        let mut counts = vec![0usize; classes * classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            counts[t * classes + p] += 1;
        }
        ConfusionMatrix { classes, counts }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// One-vs-rest (tp, fp, fn, tn) for a class.
    pub fn binary(&self, class: usize) -> (usize, usize, usize, usize) {
        let tp = self.count(class, class);
        let fp: usize = (0..self.classes)
            .filter(|&t| t != class)
            .map(|t| self.count(t, class))
            .sum();
        let fn_: usize = (0..self.classes)
            .filter(|&p| p != class)
            .map(|p| self.count(class, p))
            .sum();
        let tn = self.total() - tp - fp - fn_;
        (tp, fp, fn_, tn)
    }
}

/// The seven one-vs-rest rates in one averaging mode. `None` marks a rate
/// whose denominator was zero in every contributing class.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateSet {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub fdr: Option<f64>,
}

/// Per-class one-vs-rest rates plus support.
#[derive(Debug, Clone, Serialize)]
pub struct ClassRates {
    pub class: usize,
    pub support: usize,
    pub rates: RateSet,
    pub f1: Option<f64>,
}

/// Everything the basic-metrics table reports for one (model, dataset) pair.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub model: String,
    pub accuracy: f64,
    /// Mean cross-entropy, natural log.
    pub loss: f64,
    pub macro_rates: RateSet,
    pub micro_rates: RateSet,
    pub roc_auc: Option<f64>,
    /// Macro precision / recall / F1 over classes with defined values.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub per_class: Vec<ClassRates>,
    /// How many (class, rate) cells were undefined and excluded from macro
    /// averages.
    pub undefined_cells: usize,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn rate_set(tp: usize, fp: usize, fn_: usize, tn: usize) -> RateSet {
    RateSet {
        tpr: ratio(tp, tp + fn_),
        tnr: ratio(tn, tn + fp),
        ppv: ratio(tp, tp + fp),
        npv: ratio(tn, tn + fn_),
        fpr: ratio(fp, fp + tn),
        fnr: ratio(fn_, fn_ + tp),
        fdr: ratio(fp, fp + tp),
    }
}

fn macro_mean(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut undefined = 0usize;
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => undefined += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), undefined)
}

/// Full metric table for a model over a dataset.
pub fn classification_report(
    model: &Model,
    dataset: &LabeledDataset,
) -> Result<ClassificationReport, MetricError> {
    if dataset.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    if dataset.class_count() != model.class_count() {
        return Err(MetricError::ClassCountMismatch {
            dataset: dataset.class_count(),
            model: model.name().to_string(),
            model_classes: model.class_count(),
        });
    }
    let classes = model.class_count();
    let mut predicted = Vec::with_capacity(dataset.len());
    let mut scores = Vec::with_capacity(dataset.len());
    let mut sample_loss = Vec::with_capacity(dataset.len());
    for (input, label) in dataset.iter() {
        let logits = model.logits(input)?;
        let probs = softmax(&logits);
        predicted.push(logits.argmax());
        sample_loss.push(-probs.data()[label].ln());
        scores.push(probs.data().to_vec());
    }
    // sum per-sample losses in stable-id order so reordering the dataset
    // cannot perturb the floating-point accumulation
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by_key(|&i| dataset.ids()[i]);
    let loss = order.iter().map(|&i| sample_loss[i]).sum::<f64>() / dataset.len() as f64;

    let confusion = ConfusionMatrix::from_predictions(dataset.labels(), &predicted, classes);
    let accuracy = dataset
        .labels()
        .iter()
        .zip(&predicted)
        .filter(|(t, p)| t == p)
        .count() as f64
        / dataset.len() as f64;

    let per_class: Vec<ClassRates> = (0..classes)
        .map(|class| {
            let (tp, fp, fn_, tn) = confusion.binary(class);
            let rates = rate_set(tp, fp, fn_, tn);
            let f1 = match (rates.ppv, rates.tpr) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            ClassRates {
                class,
                support: tp + fn_,
                rates,
                f1,
            }
        })
        .collect();

    // micro: pool counts over classes, then compute each rate once
    let pooled = (0..classes).fold((0, 0, 0, 0), |acc, class| {
        let (tp, fp, fn_, tn) = confusion.binary(class);
        (acc.0 + tp, acc.1 + fp, acc.2 + fn_, acc.3 + tn)
    });
    let micro_rates = rate_set(pooled.0, pooled.1, pooled.2, pooled.3);

    let mut undefined_cells = 0;
    let mut field = |get: fn(&RateSet) -> Option<f64>| {
        let (mean, undef) = macro_mean(per_class.iter().map(|c| get(&c.rates)));
        undefined_cells += undef;
        mean
    };
    let macro_rates = RateSet {
        tpr: field(|r| r.tpr),
        tnr: field(|r| r.tnr),
        ppv: field(|r| r.ppv),
        npv: field(|r| r.npv),
        fpr: field(|r| r.fpr),
        fnr: field(|r| r.fnr),
        fdr: field(|r| r.fdr),
    };

    let (f1, f1_undef) = macro_mean(per_class.iter().map(|c| c.f1));
    undefined_cells += f1_undef;

    let roc_auc = roc_auc(&scores, dataset.labels()).ok();

    Ok(ClassificationReport {
        model: model.name().to_string(),
        accuracy,
        loss,
        precision: macro_rates.ppv,
        recall: macro_rates.tpr,
        f1,
        macro_rates,
        micro_rates,
        roc_auc,
        per_class,
        undefined_cells,
        confusion,
    })
}

/// Macro one-vs-rest ROC AUC via the rank statistic; ties contribute 0.5.
/// Classes lacking positives or negatives are skipped.
pub fn roc_auc(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    for (row, s) in scores.iter().enumerate() {
        let sum: f64 = s.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(MetricError::ScoresNotNormalized { row, sum });
        }
    }
    let classes = scores.first().map_or(0, Vec::len);
    let mut total = 0.0;
    let mut used = 0usize;
    for class in 0..classes {
        let pos = labels.iter().filter(|&&l| l == class).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            continue;
        }
        total += binary_auc(
            scores.iter().map(|s| s[class]),
            labels.iter().map(|&l| l == class),
        );
        used += 1;
    }
    if used == 0 {
        return Err(MetricError::AucUndefined);
    }
    Ok(total / used as f64)
}

/// AUC of one score column via mid-ranks (Mann-Whitney).
fn binary_auc(scores: impl Iterator<Item = f64>, positives: impl Iterator<Item = bool>) -> f64 {
    let mut rows: Vec<(f64, bool)> = scores.zip(positives).collect();
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let n = rows.len();
    let mut rank_sum = 0.0;
    let mut n_pos = 0usize;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && rows[j].0 == rows[i].0 {
            j += 1;
        }
        // tied block [i, j) shares the mid-rank
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        for row in &rows[i..j] {
            if row.1 {
                rank_sum += mid_rank;
                n_pos += 1;
            }
        }
        i = j;
    }
    let n_neg = n - n_pos;
    (rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64)
}

/// Fraction of attacked samples the target model misclassifies. Only samples
/// the source model originally classified correctly count toward the
/// denominator.
pub fn attack_success_rate(
    batch: &AdversarialBatch,
    target_model: &Model,
) -> Result<f64, MetricError> {
    if batch.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let mut total = 0usize;
    let mut success = 0usize;
    for i in 0..batch.len() {
        if !batch.originally_correct()[i] {
            continue;
        }
        total += 1;
        let predicted = target_model.predict_class(&batch.adversarials()[i])?;
        if predicted != batch.labels()[i] {
            success += 1;
        }
    }
    if total == 0 {
        return Err(MetricError::EmptyBatch);
    }
    Ok(success as f64 / total as f64)
}

/// CSV serialization matching the basic-metrics table layout: a headline
/// macro row, a micro row, then per-class rows.
pub fn report_to_csv(report: &ClassificationReport) -> String {
    fn cell(v: Option<f64>) -> String {
        v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.6}"))
    }
    let mut out = String::from(
        "Row,Accuracy,Loss Value,TPR,TNR,PPV,NPV,FPR,FNR,FDR,ROC_AUC,Precision,Recall,F1-Score\n",
    );
    let r = &report.macro_rates;
    out.push_str(&format!(
        "macro,{:.6},{:.6},{},{},{},{},{},{},{},{},{},{},{}\n",
        report.accuracy,
        report.loss,
        cell(r.tpr),
        cell(r.tnr),
        cell(r.ppv),
        cell(r.npv),
        cell(r.fpr),
        cell(r.fnr),
        cell(r.fdr),
        cell(report.roc_auc),
        cell(report.precision),
        cell(report.recall),
        cell(report.f1),
    ));
    let r = &report.micro_rates;
    out.push_str(&format!(
        "micro,{:.6},{:.6},{},{},{},{},{},{},{},{},{},{},{}\n",
        report.accuracy,
        report.loss,
        cell(r.tpr),
        cell(r.tnr),
        cell(r.ppv),
        cell(r.npv),
        cell(r.fpr),
        cell(r.fnr),
        cell(r.fdr),
        cell(report.roc_auc),
        cell(r.ppv),
        cell(r.tpr),
        cell(None),
    ));
    for c in &report.per_class {
        let r = &c.rates;
        out.push_str(&format!(
            "class-{},,,{},{},{},{},{},{},{},,{},{},{}\n",
            c.class,
            cell(r.tpr),
            cell(r.tnr),
            cell(r.ppv),
            cell(r.npv),
            cell(r.fpr),
            cell(r.fnr),
            cell(r.fdr),
            cell(r.ppv),
            cell(r.tpr),
            cell(c.f1),
        ));
    }
    out
}
