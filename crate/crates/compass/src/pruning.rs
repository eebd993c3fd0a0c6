//! Neuron analysis: unit importance scoring (Taylor, OBD, magnitude),
//! structured masking at a target pruning rate, and the pruning-rate sweep.
//!
//! Pruning is structured (whole dense neurons / conv filters) and realized
//! by zero-masking, so tensor shapes survive and every downstream module
//! runs unchanged on a pruned model.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{self, AttackConfig};
use crate::attribution::{self, BaselineKind, PathSpec};
use crate::data::LabeledDataset;
use crate::metrics::{self, ClassificationReport, MetricError};
use crate::model::{LayerParams, Model, ModelError};
use crate::tensor::Tensor;

/// Hard cap for the exact diagonal-Hessian method; beyond this the cost of
/// one second-difference pass per parameter is prohibitive.
pub const OBD_EXACT_PARAM_LIMIT: usize = 5_000;

#[derive(Debug, Error)]
pub enum PruningError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Attack(#[from] attacks::AttackError),
    #[error(transparent)]
    Attribution(#[from] attribution::AttributionError),
    #[error("obd-exact requires <= {limit} parameters, model has {params}")]
    ModelTooLarge { params: usize, limit: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("pruning rate {0} outside [0, 1)")]
    RateOutOfRange(f64),
    #[error("mask was built for a different layer structure: {0}")]
    StructureMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceMethod {
    Taylor,
    ObdExact,
    ObdFisher,
    Magnitude,
}

impl ImportanceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ImportanceMethod::Taylor => "taylor",
            ImportanceMethod::ObdExact => "obd-exact",
            ImportanceMethod::ObdFisher => "obd-fisher",
            ImportanceMethod::Magnitude => "magnitude",
        }
    }
}

/// First-order importance of a single parameter: (mean gradient x value)^2.
pub fn taylor_score(mean_gradient: f64, value: f64) -> f64 {
    let s = mean_gradient * value;
    s * s
}

/// Second-order importance of a single parameter: 1/2 * h * w^2, with the
/// diagonal Hessian entry estimated by a central second difference of the
/// supplied loss-as-a-function-of-this-parameter. Exact on quadratics for
/// any step; clamped at zero because a saliency is a deletion cost.
pub fn obd_score(loss_at: impl Fn(f64) -> f64, value: f64, step: f64) -> f64 {
    let h_ii = (loss_at(value + step) - 2.0 * loss_at(value) + loss_at(value - step))
        / (step * step);
    (0.5 * h_ii * value * value).max(0.0)
}

/// Importance of every prunable unit in one layer.
#[derive(Debug, Clone, Serialize)]
pub struct LayerScores {
    /// Index into the model's layer list.
    pub layer: usize,
    /// One score per output unit (dense neuron or conv filter).
    pub scores: Vec<f64>,
    /// Parameters owned by each unit of this layer (weights + bias).
    pub params_per_unit: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImportanceScores {
    pub method: String,
    pub layers: Vec<LayerScores>,
    /// Hash of the dataset ids/shape the scores were computed against.
    pub dataset_fingerprint: u64,
}

fn dataset_fingerprint(dataset: &LabeledDataset) -> u64 {
    let mut hasher = DefaultHasher::new();
    dataset.ids().hash(&mut hasher);
    dataset.input_shape().hash(&mut hasher);
    dataset.len().hash(&mut hasher);
    hasher.finish()
}

/// The per-unit slices of a layer's (weight, bias) tensors: unit `u` owns
/// row `u` of the weight/kernel and entry `u` of the bias.
fn unit_count(params: &LayerParams) -> Option<usize> {
    match params {
        LayerParams::Dense { bias, .. } | LayerParams::Conv2d { bias, .. } => {
            Some(bias.numel())
        }
        LayerParams::None => None,
    }
}

fn unit_values(params: &LayerParams, unit: usize) -> Vec<f64> {
    let (weight, bias) = match params {
        LayerParams::Dense { weight, bias } => (weight, bias),
        LayerParams::Conv2d { kernel, bias } => (kernel, bias),
        LayerParams::None => return vec![],
    };
    let row = weight.numel() / bias.numel();
    let mut out = weight.data()[unit * row..(unit + 1) * row].to_vec();
    out.push(bias.data()[unit]);
    out
}

/// Score every prunable unit of the model against the dataset.
pub fn importance(
    model: &Model,
    dataset: &LabeledDataset,
    method: ImportanceMethod,
) -> Result<ImportanceScores, PruningError> {
    let needs_data = !matches!(method, ImportanceMethod::Magnitude);
    if needs_data && dataset.is_empty() {
        return Err(PruningError::EmptyDataset);
    }
    if method == ImportanceMethod::ObdExact && model.param_count() > OBD_EXACT_PARAM_LIMIT {
        return Err(PruningError::ModelTooLarge {
            params: model.param_count(),
            limit: OBD_EXACT_PARAM_LIMIT,
        });
    }

    let pairs = dataset.pairs();
    let mean_grads = if matches!(
        method,
        ImportanceMethod::Taylor | ImportanceMethod::ObdFisher
    ) {
        Some(model.parameter_loss_gradients(&pairs)?)
    } else {
        None
    };
    // obd-fisher wants the mean of squared per-sample gradients, not the
    // squared mean gradient
    let fisher = if method == ImportanceMethod::ObdFisher {
        Some(mean_squared_gradients(model, &pairs)?)
    } else {
        None
    };

    let mut layers = Vec::new();
    for (layer, params) in model.params().iter().enumerate() {
        let Some(units) = unit_count(params) else {
            continue;
        };
        let params_per_unit = params
            .tensors()
            .iter()
            .map(|t| t.numel())
            .sum::<usize>()
            / units;
        let mut scores = Vec::with_capacity(units);
        for unit in 0..units {
            let values = unit_values(params, unit);
            let score = match method {
                ImportanceMethod::Magnitude => values.iter().map(|w| w * w).sum(),
                ImportanceMethod::Taylor => {
                    let grads = unit_gradients(mean_grads.as_ref().unwrap(), model, layer, unit);
                    values
                        .iter()
                        .zip(&grads)
                        .map(|(&w, &g)| taylor_score(g, w))
                        .sum()
                }
                ImportanceMethod::ObdFisher => {
                    let h = unit_gradients(fisher.as_ref().unwrap(), model, layer, unit);
                    values
                        .iter()
                        .zip(&h)
                        .map(|(&w, &h_ii)| (0.5 * h_ii * w * w).max(0.0))
                        .sum()
                }
                ImportanceMethod::ObdExact => {
                    obd_exact_unit(model, &pairs, layer, unit)?
                }
            };
            scores.push(score);
        }
        layers.push(LayerScores {
            layer,
            scores,
            params_per_unit,
        });
    }
    Ok(ImportanceScores {
        method: method.name().into(),
        layers,
        dataset_fingerprint: dataset_fingerprint(dataset),
    })
}

/// Pull the gradient entries for one unit out of a per-layer gradient list
/// shaped like the model's parameters.
fn unit_gradients(
    grads: &[Vec<Tensor>],
    model: &Model,
    layer: usize,
    unit: usize,
) -> Vec<f64> {
    let fake = LayerParams::from_tensors(&model.params()[layer], &grads[layer]);
    unit_values(&fake, unit)
}

/// Dataset mean of squared per-sample loss gradients, per parameter.
fn mean_squared_gradients(
    model: &Model,
    pairs: &[(Tensor, usize)],
) -> Result<Vec<Vec<Tensor>>, PruningError> {
    let mut acc: Option<Vec<Vec<Tensor>>> = None;
    let n = pairs.len() as f64;
    for pair in pairs {
        let grads = model.parameter_loss_gradients(std::slice::from_ref(pair))?;
        match &mut acc {
            None => {
                acc = Some(
                    grads
                        .into_iter()
                        .map(|layer| layer.into_iter().map(|g| g.map(|v| v * v / n)).collect())
                        .collect(),
                );
            }
            Some(acc) => {
                for (a_layer, g_layer) in acc.iter_mut().zip(grads) {
                    for (a, g) in a_layer.iter_mut().zip(g_layer) {
                        *a = a.zip(&g, |a, g| a + g * g / n).expect("shapes match");
                    }
                }
            }
        }
    }
    Ok(acc.expect("non-empty dataset"))
}

/// Sum of 1/2 h_ii w_i^2 over a unit's parameters, h_ii by central second
/// difference of the dataset mean loss.
fn obd_exact_unit(
    model: &Model,
    pairs: &[(Tensor, usize)],
    layer: usize,
    unit: usize,
) -> Result<f64, PruningError> {
    const STEP: f64 = 1e-3;
    let params = &model.params()[layer];
    let (rows, bias_len) = match params {
        LayerParams::Dense { weight, bias } => (weight.numel() / bias.numel(), bias.numel()),
        LayerParams::Conv2d { kernel, bias } => (kernel.numel() / bias.numel(), bias.numel()),
        LayerParams::None => return Ok(0.0),
    };
    let _ = bias_len;
    let mut total = 0.0;
    // weight entries of the unit, then its bias
    for slot in 0..=rows {
        let value = if slot < rows {
            tensor_entry(params, false, unit * rows + slot)
        } else {
            tensor_entry(params, true, unit)
        };
        let loss_at = |v: f64| -> f64 {
            let mut perturbed = model.clone();
            set_entry(
                &mut perturbed.params_mut()[layer],
                slot == rows,
                if slot < rows { unit * rows + slot } else { unit },
                v,
            );
            perturbed.mean_loss(pairs).expect("loss evaluates")
        };
        total += obd_score(loss_at, value, STEP);
    }
    Ok(total)
}

fn tensor_entry(params: &LayerParams, bias: bool, index: usize) -> f64 {
    let tensors = params.tensors();
    tensors[usize::from(bias)].data()[index]
}

fn set_entry(params: &mut LayerParams, bias: bool, index: usize, value: f64) {
    match params {
        LayerParams::Dense { weight, bias: b } | LayerParams::Conv2d { kernel: weight, bias: b } => {
            if bias {
                b.data_mut()[index] = value;
            } else {
                weight.data_mut()[index] = value;
            }
        }
        LayerParams::None => {}
    }
}

/// Per-layer keep-vector over prunable units.
#[derive(Debug, Clone, Serialize)]
pub struct PruningMask {
    /// Parallel to `ImportanceScores::layers`.
    pub layers: Vec<LayerMask>,
    pub requested_rate: f64,
    /// Parameter-weighted fraction of the model actually zeroed.
    pub achieved_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerMask {
    pub layer: usize,
    /// `true` = keep the unit, `false` = prune it.
    pub keep: Vec<bool>,
}

impl PruningMask {
    pub fn masked_units(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for (unit, &keep) in layer.keep.iter().enumerate() {
                if !keep {
                    out.push((layer.layer, unit));
                }
            }
        }
        out
    }
}

/// Mask the lowest-scoring floor(r * units) units of each prunable layer,
/// ties toward the lowest unit index, never masking a layer's last unit.
pub fn build_mask(scores: &ImportanceScores, rate: f64) -> Result<PruningMask, PruningError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(PruningError::RateOutOfRange(rate));
    }
    let mut layers = Vec::with_capacity(scores.layers.len());
    let mut masked_params = 0usize;
    let mut total_params = 0usize;
    for layer in &scores.layers {
        let units = layer.scores.len();
        total_params += units * layer.params_per_unit;
        let prune_count = ((rate * units as f64).floor() as usize).min(units.saturating_sub(1));
        let mut order: Vec<usize> = (0..units).collect();
        order.sort_by(|&a, &b| {
            layer.scores[a]
                .partial_cmp(&layer.scores[b])
                .expect("finite scores")
                .then(a.cmp(&b))
        });
        let mut keep = vec![true; units];
        for &unit in &order[..prune_count] {
            keep[unit] = false;
        }
        masked_params += prune_count * layer.params_per_unit;
        layers.push(LayerMask {
            layer: layer.layer,
            keep,
        });
    }
    let achieved_rate = if total_params > 0 {
        masked_params as f64 / total_params as f64
    } else {
        0.0
    };
    Ok(PruningMask {
        layers,
        requested_rate: rate,
        achieved_rate,
    })
}

/// A masked copy of the base model. The masked parameters are materialized,
/// so the pruned model behaves exactly like a `Model` everywhere.
#[derive(Debug, Clone)]
pub struct PrunedModel {
    pub model: Model,
    pub mask: PruningMask,
    pub base_name: String,
}

/// Zero a masked unit's weight row (its incoming weights) and bias, making
/// the unit's activation exactly zero for every input.
pub fn apply_mask(model: &Model, mask: &PruningMask) -> Result<PrunedModel, PruningError> {
    let mut pruned = model.clone();
    for layer_mask in &mask.layers {
        let params = pruned
            .params_mut()
            .get_mut(layer_mask.layer)
            .ok_or_else(|| {
                PruningError::StructureMismatch(format!(
                    "mask references layer {} beyond model depth",
                    layer_mask.layer
                ))
            })?;
        let units = unit_count(params).ok_or_else(|| {
            PruningError::StructureMismatch(format!(
                "layer {} has no prunable units",
                layer_mask.layer
            ))
        })?;
        if units != layer_mask.keep.len() {
            return Err(PruningError::StructureMismatch(format!(
                "layer {} has {units} units, mask has {}",
                layer_mask.layer,
                layer_mask.keep.len()
            )));
        }
        let rows = match params {
            LayerParams::Dense { weight, bias } => weight.numel() / bias.numel(),
            LayerParams::Conv2d { kernel, bias } => kernel.numel() / bias.numel(),
            LayerParams::None => unreachable!("unit_count returned Some"),
        };
        for (unit, &keep) in layer_mask.keep.iter().enumerate() {
            if keep {
                continue;
            }
            match params {
                LayerParams::Dense { weight, bias }
                | LayerParams::Conv2d { kernel: weight, bias } => {
                    for v in &mut weight.data_mut()[unit * rows..(unit + 1) * rows] {
                        *v = 0.0;
                    }
                    bias.data_mut()[unit] = 0.0;
                }
                LayerParams::None => {}
            }
        }
    }
    Ok(PrunedModel {
        model: pruned,
        mask: mask.clone(),
        base_name: model.name().to_string(),
    })
}

/// Optional extra columns for the sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepExtras {
    /// Attacks whose success rates are averaged per row.
    pub attacks: Vec<AttackConfig>,
    /// When set, average insertion/deletion AUC of integrated gradients over
    /// at most `attribution_samples` dataset samples.
    pub attribution_samples: usize,
    pub ig_steps: usize,
    pub curve_steps: usize,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model: String,
    pub method: String,
    pub requested_rate: f64,
    pub achieved_rate: f64,
    pub report: ClassificationReport,
    pub average_asr: Option<f64>,
    pub average_insertion: Option<f64>,
    pub average_deletion: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub has_asr: bool,
    pub has_attribution: bool,
}

impl SweepReport {
    /// Table V-style CSV: identification columns, classification metrics,
    /// then any configured extras.
    pub fn to_csv(&self) -> String {
        let mut header = String::from(
            "Model,Method,Pruning Rate,Achieved Rate,Accuracy,Loss Value,TPR,TNR,PPV,NPV,FPR,FNR,FDR,ROC_AUC,Precision,Recall,F1-Score",
        );
        if self.has_asr {
            header.push_str(",Avg ASR");
        }
        if self.has_attribution {
            header.push_str(",Avg Insertion,Avg Deletion");
        }
        header.push('\n');
        let mut out = header;
        let cell = |v: Option<f64>| match v {
            Some(v) => format!("{v:.4}"),
            None => "N/A".into(),
        };
        for row in &self.rows {
            let r = &row.report;
            let m = &r.macro_rates;
            out.push_str(&format!(
                "{},{},{:.2},{:.4},{:.4},{:.4},{},{},{},{},{},{},{},{},{},{},{}",
                row.model,
                row.method,
                row.requested_rate,
                row.achieved_rate,
                r.accuracy,
                r.loss,
                cell(m.tpr),
                cell(m.tnr),
                cell(m.ppv),
                cell(m.npv),
                cell(m.fpr),
                cell(m.fnr),
                cell(m.fdr),
                cell(r.roc_auc),
                cell(r.precision),
                cell(r.recall),
                cell(r.f1),
            ));
            if self.has_asr {
                out.push_str(&format!(",{}", cell(row.average_asr)));
            }
            if self.has_attribution {
                out.push_str(&format!(
                    ",{},{}",
                    cell(row.average_insertion),
                    cell(row.average_deletion)
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Score, mask, and evaluate the model at every (method, rate) pair.
/// Importance is always computed on the unpruned model.
pub fn prune_and_evaluate(
    model: &Model,
    dataset: &LabeledDataset,
    methods: &[ImportanceMethod],
    rates: &[f64],
    extras: &SweepExtras,
) -> Result<SweepReport, PruningError> {
    for &r in rates {
        if !(0.0..1.0).contains(&r) {
            return Err(PruningError::RateOutOfRange(r));
        }
    }
    let mut rows = Vec::new();
    for &method in methods {
        let scores = importance(model, dataset, method)?;
        for &rate in rates {
            let mask = build_mask(&scores, rate)?;
            let pruned = apply_mask(model, &mask)?;
            let report = metrics::classification_report(&pruned.model, dataset)?;
            let average_asr = if extras.attacks.is_empty() {
                None
            } else {
                let mut total = 0.0;
                for config in &extras.attacks {
                    let batch = attacks::run_attack(&pruned.model, dataset, config)?;
                    total += metrics::attack_success_rate(&batch, &pruned.model)?;
                }
                Some(total / extras.attacks.len() as f64)
            };
            let (average_insertion, average_deletion) = if extras.attribution_samples > 0 {
                let n = extras.attribution_samples.min(dataset.len());
                let mut ins = 0.0;
                let mut del = 0.0;
                for i in 0..n {
                    let (input, label, id) = dataset.sample(i);
                    let path = PathSpec::zeros(input.shape(), extras.ig_steps.max(1));
                    let map = attribution::integrated_gradients(
                        &pruned.model,
                        input,
                        label,
                        &path,
                        id,
                    )?;
                    let (i_curve, d_curve) = attribution::insertion_deletion(
                        &pruned.model,
                        input,
                        label,
                        &map,
                        extras.curve_steps.max(1),
                        BaselineKind::Zeros,
                    )?;
                    ins += i_curve.auc;
                    del += d_curve.auc;
                }
                (Some(ins / n as f64), Some(del / n as f64))
            } else {
                (None, None)
            };
            rows.push(SweepRow {
                model: model.name().to_string(),
                method: method.name().into(),
                requested_rate: rate,
                achieved_rate: mask.achieved_rate,
                report,
                average_asr,
                average_insertion,
                average_deletion,
            });
        }
    }
    Ok(SweepReport {
        rows,
        has_asr: !extras.attacks.is_empty(),
        has_attribution: extras.attribution_samples > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerSpec;
    use crate::rng::CounterRng;

    fn dense_model(weight_rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Model {
        let classes = weight_rows.len();
        let n = weight_rows[0].len();
        let flat: Vec<f64> = weight_rows.into_iter().flatten().collect();
        Model::new(
            "dense",
            vec![n],
            classes,
            vec![LayerSpec::Dense { input: n, output: classes }],
            vec![LayerParams::Dense {
                weight: Tensor::new(vec![classes, n], flat).unwrap(),
                bias: Tensor::from_vec(bias).unwrap(),
            }],
        )
        .unwrap()
    }

    fn small_dataset() -> LabeledDataset {
        LabeledDataset::new(
            vec![
                Tensor::from_vec(vec![0.9, 0.1]).unwrap(),
                Tensor::from_vec(vec![0.1, 0.9]).unwrap(),
                Tensor::from_vec(vec![0.8, 0.3]).unwrap(),
                Tensor::from_vec(vec![0.2, 0.7]).unwrap(),
            ],
            vec![0, 1, 0, 1],
            vec![2],
            2,
        )
        .unwrap()
    }

    #[test]
    fn taylor_scalar_example() {
        assert_eq!(taylor_score(3.0, 2.0), 36.0);
    }

    #[test]
    fn obd_quadratic_example_is_exact() {
        // L = 1/2 * 2 * w^2, w = 3 -> 1/2 * 2 * 9 = 9, exact for any step
        let score = obd_score(|w| 0.5 * 2.0 * w * w, 3.0, 1e-3);
        assert!((score - 9.0).abs() < 1e-6, "got {score}");
        let coarse = obd_score(|w| 0.5 * 2.0 * w * w, 3.0, 0.5);
        assert!((coarse - 9.0).abs() < 1e-9, "got {coarse}");
    }

    #[test]
    fn zero_weight_unit_scores_zero_for_taylor_and_magnitude() {
        let model = dense_model(vec![vec![0.0, 0.0], vec![1.0, -1.0]], vec![0.0, 0.5]);
        let ds = small_dataset();
        for method in [ImportanceMethod::Taylor, ImportanceMethod::Magnitude] {
            let scores = importance(&model, &ds, method).unwrap();
            assert_eq!(scores.layers.len(), 1);
            assert_eq!(scores.layers[0].scores[0], 0.0, "{method:?}");
            assert!(scores.layers[0].scores[1] > 0.0, "{method:?}");
        }
    }

    #[test]
    fn all_scores_finite_and_nonnegative() {
        let model = crate::model::reference::tiny_mlp().unwrap();
        let ds = crate::data::LabeledDataset::load(std::path::Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/synth_test.ds"
        )))
        .unwrap();
        let subset = LabeledDataset::new(
            ds.inputs()[..6].to_vec(),
            ds.labels()[..6].to_vec(),
            ds.input_shape().to_vec(),
            ds.class_count(),
        )
        .unwrap();
        for method in [
            ImportanceMethod::Taylor,
            ImportanceMethod::ObdFisher,
            ImportanceMethod::Magnitude,
        ] {
            let scores = importance(&model, &subset, method).unwrap();
            for layer in &scores.layers {
                assert!(layer.scores.iter().all(|s| s.is_finite() && *s >= 0.0));
            }
        }
    }

    #[test]
    fn obd_exact_rejects_oversized_model() {
        // 80x80 dense layer: 6480 params > 5000
        let n = 80;
        let model = Model::new(
            "big",
            vec![n],
            n,
            vec![LayerSpec::Dense { input: n, output: n }],
            vec![LayerParams::Dense {
                weight: Tensor::zeros(vec![n, n]),
                bias: Tensor::zeros(vec![n]),
            }],
        )
        .unwrap();
        let ds = LabeledDataset::new(
            vec![Tensor::zeros(vec![n])],
            vec![0],
            vec![n],
            n,
        )
        .unwrap();
        assert!(matches!(
            importance(&model, &ds, ImportanceMethod::ObdExact),
            Err(PruningError::ModelTooLarge { .. })
        ));
    }

    #[test]
    fn obd_exact_and_fisher_within_factor_two_on_fixture_model() {
        // near-uniform predictions: the Fisher information approaches the
        // exact Hessian of the cross-entropy, so the bound is comfortable
        let model = dense_model(vec![vec![0.1, -0.1], vec![-0.1, 0.1]], vec![0.05, -0.05]);
        let ds = small_dataset();
        let exact = importance(&model, &ds, ImportanceMethod::ObdExact).unwrap();
        let fisher = importance(&model, &ds, ImportanceMethod::ObdFisher).unwrap();
        let sum = |s: &ImportanceScores| -> f64 {
            s.layers.iter().flat_map(|l| l.scores.iter()).sum()
        };
        let (e, f) = (sum(&exact), sum(&fisher));
        assert!(e > 0.0 && f > 0.0);
        assert!(e / f < 2.0 && f / e < 2.0, "exact {e} vs fisher {f}");
    }

    fn manual_scores(scores: Vec<Vec<f64>>, params_per_unit: usize) -> ImportanceScores {
        ImportanceScores {
            method: "manual".into(),
            layers: scores
                .into_iter()
                .enumerate()
                .map(|(layer, scores)| LayerScores {
                    layer,
                    scores,
                    params_per_unit,
                })
                .collect(),
            dataset_fingerprint: 0,
        }
    }

    #[test]
    fn build_mask_rate_zero_is_identity() {
        let scores = manual_scores(vec![vec![5.0, 1.0, 3.0, 2.0]], 3);
        let mask = build_mask(&scores, 0.0).unwrap();
        assert!(mask.layers[0].keep.iter().all(|&k| k));
        assert_eq!(mask.achieved_rate, 0.0);
    }

    #[test]
    fn build_mask_prunes_lowest_scores() {
        let scores = manual_scores(vec![vec![5.0, 1.0, 3.0, 2.0]], 3);
        let mask = build_mask(&scores, 0.5).unwrap();
        assert_eq!(mask.layers[0].keep, vec![true, false, true, false]);
        assert!((mask.achieved_rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn build_mask_ties_go_to_lowest_index() {
        let scores = manual_scores(vec![vec![1.0, 1.0, 1.0, 1.0]], 2);
        let mask = build_mask(&scores, 0.5).unwrap();
        assert_eq!(mask.layers[0].keep, vec![false, false, true, true]);
    }

    #[test]
    fn build_mask_never_removes_last_unit() {
        let scores = manual_scores(vec![vec![1.0, 2.0]], 4);
        let mask = build_mask(&scores, 0.99).unwrap();
        assert_eq!(mask.layers[0].keep, vec![false, true]);
        let solo = manual_scores(vec![vec![7.0]], 4);
        let mask = build_mask(&solo, 0.99).unwrap();
        assert_eq!(mask.layers[0].keep, vec![true]);
        assert_eq!(mask.achieved_rate, 0.0);
    }

    #[test]
    fn build_mask_rejects_out_of_range_rate() {
        let scores = manual_scores(vec![vec![1.0, 2.0]], 1);
        assert!(matches!(
            build_mask(&scores, 1.0),
            Err(PruningError::RateOutOfRange(_))
        ));
        assert!(matches!(
            build_mask(&scores, -0.1),
            Err(PruningError::RateOutOfRange(_))
        ));
    }

    #[test]
    fn masks_nest_over_the_sweep_rates() {
        let model = crate::model::reference::tiny_mlp().unwrap();
        let scores = importance(&model, &small_dataset_8x8(), ImportanceMethod::Magnitude).unwrap();
        let rates = [0.35, 0.4, 0.45, 0.5];
        let masks: Vec<PruningMask> = rates
            .iter()
            .map(|&r| build_mask(&scores, r).unwrap())
            .collect();
        for pair in masks.windows(2) {
            let smaller: std::collections::HashSet<_> =
                pair[0].masked_units().into_iter().collect();
            let larger: std::collections::HashSet<_> =
                pair[1].masked_units().into_iter().collect();
            assert!(smaller.is_subset(&larger));
            assert!(pair[0].achieved_rate <= pair[1].achieved_rate);
        }
    }

    fn small_dataset_8x8() -> LabeledDataset {
        let ds = crate::data::LabeledDataset::load(std::path::Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/synth_test.ds"
        )))
        .unwrap();
        LabeledDataset::new(
            ds.inputs()[..8].to_vec(),
            ds.labels()[..8].to_vec(),
            ds.input_shape().to_vec(),
            ds.class_count(),
        )
        .unwrap()
    }

    #[test]
    fn identity_mask_is_bitwise_identical() {
        let model = crate::model::reference::tiny_mlp().unwrap();
        let ds = small_dataset_8x8();
        let scores = importance(&model, &ds, ImportanceMethod::Magnitude).unwrap();
        let mask = build_mask(&scores, 0.0).unwrap();
        let pruned = apply_mask(&model, &mask).unwrap();
        for (input, _) in ds.iter() {
            let a = model.logits(input).unwrap();
            let b = pruned.model.logits(input).unwrap();
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn masked_unit_activation_is_exactly_zero() {
        // two-layer MLP; mask a hidden unit and check its pre-activation
        let hidden = Model::new(
            "mlp",
            vec![3],
            2,
            vec![
                LayerSpec::Dense { input: 3, output: 4 },
                LayerSpec::Relu,
                LayerSpec::Dense { input: 4, output: 2 },
            ],
            vec![
                LayerParams::Dense {
                    weight: Tensor::new(
                        vec![4, 3],
                        vec![0.5, -0.3, 0.2, 0.1, 0.9, -0.6, -0.2, 0.4, 0.7, 0.3, -0.8, 0.5],
                    )
                    .unwrap(),
                    bias: Tensor::from_vec(vec![0.1, -0.2, 0.3, 0.0]).unwrap(),
                },
                LayerParams::None,
                LayerParams::Dense {
                    weight: Tensor::new(
                        vec![2, 4],
                        vec![0.4, -0.1, 0.6, 0.2, -0.5, 0.3, 0.1, -0.7],
                    )
                    .unwrap(),
                    bias: Tensor::from_vec(vec![0.0, 0.1]).unwrap(),
                },
            ],
        )
        .unwrap();
        let mask = PruningMask {
            layers: vec![LayerMask {
                layer: 0,
                keep: vec![true, false, true, true],
            }],
            requested_rate: 0.25,
            achieved_rate: 0.0,
        };
        let pruned = apply_mask(&hidden, &mask).unwrap();
        let rng = CounterRng::new(99);
        for i in 0..100u64 {
            let input = Tensor::from_vec(
                (0..3).map(|j| rng.uniform_at(i, j)).collect(),
            )
            .unwrap();
            // unit 1's incoming row and bias are zero, so its activation is
            // exactly w.x = 0
            let params = &pruned.model.params()[0];
            let LayerParams::Dense { weight, bias } = params else {
                panic!()
            };
            let act: f64 = (0..3)
                .map(|j| weight.data()[3 + j] * input.data()[j])
                .sum::<f64>()
                + bias.data()[1];
            assert_eq!(act, 0.0);
        }
    }

    #[test]
    fn apply_mask_rejects_structure_mismatch() {
        let model = dense_model(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        let mask = PruningMask {
            layers: vec![LayerMask {
                layer: 0,
                keep: vec![true, true, true],
            }],
            requested_rate: 0.0,
            achieved_rate: 0.0,
        };
        assert!(matches!(
            apply_mask(&model, &mask),
            Err(PruningError::StructureMismatch(_))
        ));
    }

    #[test]
    fn sweep_rate_zero_row_matches_unpruned_report() {
        let model = crate::model::reference::tiny_mlp().unwrap();
        let ds = small_dataset_8x8();
        let sweep = prune_and_evaluate(
            &model,
            &ds,
            &[ImportanceMethod::Magnitude],
            &[0.0, 0.5],
            &SweepExtras::default(),
        )
        .unwrap();
        let base = metrics::classification_report(&model, &ds).unwrap();
        assert_eq!(sweep.rows.len(), 2);
        assert_eq!(sweep.rows[0].report.accuracy, base.accuracy);
        assert_eq!(sweep.rows[0].report.loss, base.loss);
        assert_eq!(sweep.rows[0].achieved_rate, 0.0);
        assert_eq!(
            metrics::report_to_csv(&sweep.rows[0].report),
            metrics::report_to_csv(&base)
        );
    }

    #[test]
    fn sweep_csv_has_expected_shape() {
        let model = crate::model::reference::tiny_mlp().unwrap();
        let ds = small_dataset_8x8();
        let sweep = prune_and_evaluate(
            &model,
            &ds,
            &[ImportanceMethod::Taylor, ImportanceMethod::Magnitude],
            &[0.35, 0.4, 0.45, 0.5],
            &SweepExtras::default(),
        )
        .unwrap();
        let csv = sweep.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert!(lines[0].starts_with("Model,Method,Pruning Rate,Achieved Rate,Accuracy"));
        assert!(lines[1].starts_with("tiny-mlp,taylor,0.35,"));
        assert!(lines[8].starts_with("tiny-mlp,magnitude,0.50,"));
    }

    #[test]
    fn achieved_rate_nondecreasing_in_requested_rate() {
        let model = crate::model::reference::tiny_cnn().unwrap();
        let ds = small_dataset_8x8();
        let scores = importance(&model, &ds, ImportanceMethod::Taylor).unwrap();
        let mut last = -1.0;
        for rate in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7] {
            let mask = build_mask(&scores, rate).unwrap();
            assert!(mask.achieved_rate >= last);
            last = mask.achieved_rate;
        }
    }
}
