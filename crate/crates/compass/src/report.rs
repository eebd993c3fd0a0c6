//! Run orchestration: config loading/validation, the fixed module pipeline,
//! radar scoring, and SVG radar rendering.
//!
//! Everything emitted here is deterministic for a fixed config: all module
//! seeds derive from the global seed, floats are printed with fixed
//! precision, and map-like JSON uses struct field order.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{self, AttackConfig, AttackMethod};
use crate::attribution::{self, AgiConfig, BaselineKind, PathSpec};
use crate::data::{LabeledDataset, MutationKind, MutationSpec};
use crate::metrics;
use crate::model::Model;
use crate::pruning::{self, ImportanceMethod, SweepExtras};

/// Marker file dropped in the output directory when a run aborts mid-way.
pub const PARTIAL_MARKER: &str = "INCOMPLETE";
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config at `{field}`: {message}")]
    Invalid { field: String, message: String },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("module {module} failed: {message}")]
    Module { module: String, message: String },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: io::Error },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

// ---- config ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub models: Vec<PathBuf>,
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub metrics: Option<MetricsConfig>,
    #[serde(default)]
    pub mutants: Option<MutantsConfig>,
    #[serde(default)]
    pub attacks: Option<AttacksConfig>,
    #[serde(default)]
    pub attribution: Option<AttributionConfig>,
    #[serde(default)]
    pub pruning: Option<PruningConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutantsConfig {
    pub mutations: Vec<MutationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationEntry {
    pub kind: MutationKind,
    #[serde(default)]
    pub intensity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttacksConfig {
    pub methods: Vec<AttackMethod>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    /// Cap on attacked samples per run (keeps the demo fast). 0 = all.
    #[serde(default)]
    pub max_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionMethodSel {
    Saliency,
    Smoothgrad,
    IntegratedGradients,
    Big,
    Agi,
}

impl AttributionMethodSel {
    pub fn name(&self) -> &'static str {
        match self {
            AttributionMethodSel::Saliency => "saliency",
            AttributionMethodSel::Smoothgrad => "smoothgrad",
            AttributionMethodSel::IntegratedGradients => "integrated-gradients",
            AttributionMethodSel::Big => "big",
            AttributionMethodSel::Agi => "agi",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionConfig {
    pub methods: Vec<AttributionMethodSel>,
    #[serde(default = "default_ig_steps")]
    pub ig_steps: usize,
    #[serde(default = "default_curve_steps")]
    pub curve_steps: usize,
    /// Samples scored per model. 0 = all.
    #[serde(default)]
    pub max_samples: usize,
    #[serde(default)]
    pub heatmaps: bool,
}

fn default_ig_steps() -> usize {
    50
}

fn default_curve_steps() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruningConfig {
    pub methods: Vec<ImportanceMethod>,
    pub rates: Vec<f64>,
    /// A pruned model "preserves performance" while its accuracy stays
    /// within this many points of the unpruned accuracy.
    #[serde(default = "default_accuracy_tolerance")]
    pub accuracy_tolerance: f64,
}

fn default_accuracy_tolerance() -> f64 {
    0.02
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            source: e,
        })?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(
                "version",
                format!("expected {CONFIG_VERSION}, got {}", self.version),
            ));
        }
        if self.models.is_empty() {
            return Err(invalid("models", "at least one model path required"));
        }
        for (i, path) in self.models.iter().enumerate() {
            if !path.exists() {
                return Err(invalid(
                    &format!("models[{i}]"),
                    format!("path does not exist: {}", path.display()),
                ));
            }
        }
        if !self.dataset.exists() {
            return Err(invalid(
                "dataset",
                format!("path does not exist: {}", self.dataset.display()),
            ));
        }
        if self.enabled_modules().is_empty() {
            return Err(invalid("modules", "at least one module must be enabled"));
        }
        if let Some(mutants) = &self.mutants {
            if mutants.mutations.is_empty() {
                return Err(invalid("mutants.mutations", "must not be empty"));
            }
            for (i, entry) in mutants.mutations.iter().enumerate() {
                if let Some(p) = entry.intensity {
                    let spec = MutationSpec::new(entry.kind, p, 0);
                    if let Err(e) = spec.validate() {
                        return Err(invalid(
                            &format!("mutants.mutations[{i}].intensity"),
                            e.to_string(),
                        ));
                    }
                }
            }
        }
        if let Some(attacks) = &self.attacks {
            if attacks.methods.is_empty() {
                return Err(invalid("attacks.methods", "must not be empty"));
            }
            if let Some(eps) = attacks.epsilon {
                if !(eps > 0.0) {
                    return Err(invalid("attacks.epsilon", "must be > 0"));
                }
            }
            if let Some(alpha) = attacks.alpha {
                if !(alpha > 0.0) {
                    return Err(invalid("attacks.alpha", "must be > 0"));
                }
            }
            if attacks.steps == Some(0) {
                return Err(invalid("attacks.steps", "must be >= 1"));
            }
        }
        if let Some(attr) = &self.attribution {
            if attr.methods.is_empty() {
                return Err(invalid("attribution.methods", "must not be empty"));
            }
            if attr.ig_steps == 0 {
                return Err(invalid("attribution.ig_steps", "must be >= 1"));
            }
            if attr.curve_steps == 0 {
                return Err(invalid("attribution.curve_steps", "must be >= 1"));
            }
        }
        if let Some(pruning) = &self.pruning {
            if pruning.methods.is_empty() {
                return Err(invalid("pruning.methods", "must not be empty"));
            }
            if pruning.rates.is_empty() {
                return Err(invalid("pruning.rates", "must not be empty"));
            }
            for (i, &r) in pruning.rates.iter().enumerate() {
                if !(0.0..1.0).contains(&r) {
                    return Err(invalid(
                        &format!("pruning.rates[{i}]"),
                        format!("rate {r} outside [0, 1)"),
                    ));
                }
            }
            if !(0.0..1.0).contains(&pruning.accuracy_tolerance) {
                return Err(invalid("pruning.accuracy_tolerance", "must be in [0, 1)"));
            }
        }
        Ok(())
    }

    pub fn enabled_modules(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.metrics.is_some() {
            out.push("metrics");
        }
        if self.mutants.is_some() {
            out.push("mutants");
        }
        if self.attacks.is_some() {
            out.push("attacks");
        }
        if self.attribution.is_some() {
            out.push("attribution");
        }
        if self.pruning.is_some() {
            out.push("pruning");
        }
        out
    }
}

// ---- radar scoring ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisDirection {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Error)]
pub enum RadarError {
    #[error("no models to score")]
    NoModels,
    #[error("nonpositive value {value} on lower-better axis {axis}")]
    NonpositiveValue { axis: String, value: f64 },
    #[error("axis/value arity mismatch")]
    ArityMismatch,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxisScores {
    pub label: String,
    pub direction: AxisDirection,
    /// Raw metric value per model.
    pub values: Vec<f64>,
    /// Radar score per model, in (0, 5].
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuleScores {
    pub models: Vec<String>,
    pub axes: Vec<AxisScores>,
}

/// Proportional radar scoring: the best model on an axis gets exactly 5,
/// others scale by ratio (5*v/v_max higher-better, 5*v_min/v lower-better).
pub fn radar_scores(
    models: &[String],
    axes: &[(String, AxisDirection, Vec<f64>)],
) -> Result<ModuleScores, RadarError> {
    if models.is_empty() {
        return Err(RadarError::NoModels);
    }
    let mut out = Vec::with_capacity(axes.len());
    for (label, direction, values) in axes {
        if values.len() != models.len() {
            return Err(RadarError::ArityMismatch);
        }
        let scores = match direction {
            AxisDirection::HigherBetter => {
                let v_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if v_max <= 0.0 {
                    // degenerate all-zero axis: treat every model as tied best
                    vec![5.0; values.len()]
                } else {
                    // grouped so the best model scores exactly 5.0
                    values.iter().map(|v| 5.0 * (v / v_max)).collect()
                }
            }
            AxisDirection::LowerBetter => {
                if let Some(&bad) = values.iter().find(|v| **v <= 0.0) {
                    return Err(RadarError::NonpositiveValue {
                        axis: label.clone(),
                        value: bad,
                    });
                }
                let v_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                values.iter().map(|v| 5.0 * (v_min / v)).collect()
            }
        };
        out.push(AxisScores {
            label: label.clone(),
            direction: *direction,
            values: values.clone(),
            scores,
        });
    }
    Ok(ModuleScores {
        models: models.to_vec(),
        axes: out,
    })
}

// ---- radar SVG ----

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Render the radar chart: pentagon grid with rings at 1..5, one closed
/// polygon per model, axis labels, legend. Output bytes are deterministic.
pub fn emit_radar_svg(scores: &ModuleScores, path: &Path) -> Result<(), PipelineError> {
    let svg = radar_svg_string(scores);
    fs::write(path, svg).map_err(|e| PipelineError::Write {
        path: path.display().to_string(),
        source: e,
    })
}

fn radar_svg_string(scores: &ModuleScores) -> String {
    let axes = scores.axes.len();
    let (cx, cy, radius) = (260.0, 240.0, 170.0);
    let point = |axis: usize, value: f64| -> (f64, f64) {
        let angle = -std::f64::consts::FRAC_PI_2
            + axis as f64 * std::f64::consts::TAU / axes as f64;
        let r = radius * value / 5.0;
        (cx + r * angle.cos(), cy + r * angle.sin())
    };
    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n",
    );
    svg.push_str("<rect width=\"640\" height=\"480\" fill=\"white\"/>\n");
    // grid rings 1..5
    for ring in 1..=5 {
        let pts: Vec<String> = (0..axes)
            .map(|a| {
                let (x, y) = point(a, ring as f64);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polygon points=\"{}\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"1\"/>",
            pts.join(" ")
        );
    }
    // spokes and axis labels
    for (a, axis) in scores.axes.iter().enumerate() {
        let (x, y) = point(a, 5.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{cx:.2}\" y1=\"{cy:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"#cccccc\" stroke-width=\"1\"/>"
        );
        let (lx, ly) = point(a, 5.8);
        let anchor = if (lx - cx).abs() < 1.0 {
            "middle"
        } else if lx > cx {
            "start"
        } else {
            "end"
        };
        let _ = writeln!(
            svg,
            "<text x=\"{lx:.2}\" y=\"{ly:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"{anchor}\">{}</text>",
            axis.label
        );
    }
    // model polygons
    for (m, model) in scores.models.iter().enumerate() {
        let color = PALETTE[m % PALETTE.len()];
        let pts: Vec<String> = scores
            .axes
            .iter()
            .enumerate()
            .map(|(a, axis)| {
                let (x, y) = point(a, axis.scores[m]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        // legend entry
        let ly = 30.0 + 22.0 * m as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"500\" y=\"{:.2}\" width=\"14\" height=\"14\" fill=\"{color}\"/>",
            ly - 11.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"520\" y=\"{ly:.2}\" font-family=\"sans-serif\" font-size=\"13\">{model}</text>"
        );
    }
    svg.push_str("</svg>\n");
    svg
}

// ---- pipeline ----

/// Radar axis labels, in module order.
pub const AXIS_LABELS: [&str; 5] = [
    "Basic Metrics",
    "Data Mutation",
    "Adversarial Robustness",
    "Interpretability",
    "Neural Analysis",
];

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_version: u32,
    pub seed: u64,
    pub models: Vec<String>,
    pub modules: Vec<String>,
    /// Per model: raw axis values keyed by enabled module.
    pub module_values: Vec<ModelValues>,
    /// Present when all five modules ran.
    pub radar: Option<ModuleScores>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelValues {
    pub model: String,
    pub accuracy: Option<f64>,
    pub mutant_accuracy: Option<f64>,
    pub average_asr: Option<f64>,
    pub average_insertion: Option<f64>,
    pub average_deletion: Option<f64>,
    pub max_preserving_pruning_rate: Option<f64>,
}

fn module_err(module: &str, message: impl ToString) -> PipelineError {
    PipelineError::Module {
        module: module.into(),
        message: message.to_string(),
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|e| PipelineError::Write {
        path: path.display().to_string(),
        source: e,
    })
}

fn subset(dataset: &LabeledDataset, max: usize) -> LabeledDataset {
    if max == 0 || max >= dataset.len() {
        return dataset.clone();
    }
    LabeledDataset::with_ids(
        dataset.inputs()[..max].to_vec(),
        dataset.labels()[..max].to_vec(),
        dataset.ids()[..max].to_vec(),
        dataset.input_shape().to_vec(),
        dataset.class_count(),
    )
    .expect("subset of a valid dataset")
}

/// Derive a module seed from the global seed; splitmix-style so adjacent
/// module indexes do not produce adjacent streams.
fn derive_seed(global: u64, module: u64) -> u64 {
    let mut z = global
        .wrapping_add(module.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Execute the enabled modules in fixed order and write one CSV per module
/// plus `summary.json` and (when all five modules ran) `radar.svg`.
///
/// On any module failure an `INCOMPLETE` marker is left in the output
/// directory next to whatever was already written.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir).map_err(|e| PipelineError::Write {
        path: config.output_dir.display().to_string(),
        source: e,
    })?;
    // mark the run in-flight; removed on success
    let marker = config.output_dir.join(PARTIAL_MARKER);
    write_output(&marker, b"run incomplete\n")?;

    let result = run_modules(config);
    if result.is_ok() {
        let _ = fs::remove_file(&marker);
    }
    result
}

fn run_modules(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    let models: Vec<Model> = config
        .models
        .iter()
        .map(|p| Model::load(p))
        .collect::<Result<_, _>>()
        .map_err(|e| module_err("load", e))?;
    let dataset =
        LabeledDataset::load(&config.dataset).map_err(|e| module_err("load", e))?;
    let names: Vec<String> = models.iter().map(|m| m.name().to_string()).collect();
    let mut values: Vec<ModelValues> = names
        .iter()
        .map(|n| ModelValues {
            model: n.clone(),
            accuracy: None,
            mutant_accuracy: None,
            average_asr: None,
            average_insertion: None,
            average_deletion: None,
            max_preserving_pruning_rate: None,
        })
        .collect();

    // 1. basic metrics
    if config.metrics.is_some() {
        let mut csv = String::new();
        for (m, model) in models.iter().enumerate() {
            let report = metrics::classification_report(model, &dataset)
                .map_err(|e| module_err("metrics", e))?;
            let _ = writeln!(csv, "# {}", model.name());
            csv.push_str(&metrics::report_to_csv(&report));
            values[m].accuracy = Some(report.accuracy);
        }
        write_output(&config.output_dir.join("metrics.csv"), csv.as_bytes())?;
    }

    // 2. dataset mutation
    if let Some(mutants) = &config.mutants {
        let mut csv =
            String::from("Model,Mutation,Intensity,Accuracy,Loss Value,ROC_AUC\n");
        let mut mean_acc = vec![0.0f64; models.len()];
        for (k, entry) in mutants.mutations.iter().enumerate() {
            let intensity = entry
                .intensity
                .unwrap_or_else(|| entry.kind.default_intensity());
            let spec = MutationSpec::new(entry.kind, intensity, derive_seed(config.seed, 100 + k as u64));
            let mutated =
                crate::data::mutate(&dataset, &spec).map_err(|e| module_err("mutants", e))?;
            for (m, model) in models.iter().enumerate() {
                let report = metrics::classification_report(model, &mutated)
                    .map_err(|e| module_err("mutants", e))?;
                let _ = writeln!(
                    csv,
                    "{},{},{:.4},{:.6},{:.6},{}",
                    model.name(),
                    entry.kind.name(),
                    intensity,
                    report.accuracy,
                    report.loss,
                    report
                        .roc_auc
                        .map_or_else(|| "N/A".to_string(), |v| format!("{v:.6}")),
                );
                mean_acc[m] += report.accuracy / mutants.mutations.len() as f64;
            }
        }
        for (m, acc) in mean_acc.into_iter().enumerate() {
            values[m].mutant_accuracy = Some(acc);
        }
        write_output(&config.output_dir.join("mutants.csv"), csv.as_bytes())?;
    }

    // 3. adversarial attacks (white-box per model + transfer to the others)
    if let Some(attacks_cfg) = &config.attacks {
        let attack_set = subset(&dataset, attacks_cfg.max_samples);
        let configs: Vec<AttackConfig> = attacks_cfg
            .methods
            .iter()
            .map(|&method| {
                let mut c = AttackConfig::new(method).with_seed(derive_seed(config.seed, 200));
                if let Some(eps) = attacks_cfg.epsilon {
                    c.epsilon = eps;
                }
                if let Some(alpha) = attacks_cfg.alpha {
                    c.alpha = alpha;
                }
                if let Some(steps) = attacks_cfg.steps {
                    if method != AttackMethod::Fgsm {
                        c.steps = steps;
                    }
                }
                c
            })
            .collect();
        let mut csv = String::new();
        for (m, model) in models.iter().enumerate() {
            let targets: Vec<&Model> = models
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != m)
                .map(|(_, t)| t)
                .collect();
            let result = attacks::evaluate_transfer(model, &targets, &attack_set, &configs)
                .map_err(|e| module_err("attacks", e))?;
            csv.push_str(&result.to_csv());
            csv.push('\n');
            values[m].average_asr = Some(result.average[0]);
        }
        write_output(&config.output_dir.join("attacks.csv"), csv.as_bytes())?;
    }

    // 4. attribution + faithfulness
    if let Some(attr) = &config.attribution {
        let attr_set = subset(&dataset, attr.max_samples);
        let mut csv = String::from("Model,Method,Avg Insertion,Avg Deletion\n");
        for (m, model) in models.iter().enumerate() {
            let mut model_ins = 0.0;
            let mut model_del = 0.0;
            for &method in &attr.methods {
                let mut ins = 0.0;
                let mut del = 0.0;
                for i in 0..attr_set.len() {
                    let (input, label, id) = attr_set.sample(i);
                    let map = attribute_one(
                        model,
                        input,
                        label,
                        id,
                        method,
                        attr,
                        derive_seed(config.seed, 300),
                    )
                    .map_err(|e| module_err("attribution", e))?;
                    let (i_curve, d_curve) = attribution::insertion_deletion(
                        model,
                        input,
                        label,
                        &map,
                        attr.curve_steps,
                        BaselineKind::Zeros,
                    )
                    .map_err(|e| module_err("attribution", e))?;
                    ins += i_curve.auc;
                    del += d_curve.auc;
                    if attr.heatmaps {
                        let dir = config.output_dir.join("heatmaps");
                        fs::create_dir_all(&dir).map_err(|e| PipelineError::Write {
                            path: dir.display().to_string(),
                            source: e,
                        })?;
                        let file = dir.join(format!(
                            "{}_{}_{id}.pgm",
                            model.name(),
                            method.name()
                        ));
                        attribution::render_heatmap(&map, &file)
                            .map_err(|e| module_err("attribution", e))?;
                    }
                }
                let n = attr_set.len() as f64;
                let _ = writeln!(
                    csv,
                    "{},{},{:.6},{:.6}",
                    model.name(),
                    method.name(),
                    ins / n,
                    del / n
                );
                model_ins += ins / n / attr.methods.len() as f64;
                model_del += del / n / attr.methods.len() as f64;
            }
            values[m].average_insertion = Some(model_ins);
            values[m].average_deletion = Some(model_del);
        }
        write_output(&config.output_dir.join("attribution.csv"), csv.as_bytes())?;
    }

    // 5. pruning sweep
    if let Some(pruning_cfg) = &config.pruning {
        let mut all_rows = Vec::new();
        for (m, model) in models.iter().enumerate() {
            let sweep = pruning::prune_and_evaluate(
                model,
                &dataset,
                &pruning_cfg.methods,
                &pruning_cfg.rates,
                &SweepExtras::default(),
            )
            .map_err(|e| module_err("pruning", e))?;
            let base = metrics::classification_report(model, &dataset)
                .map_err(|e| module_err("pruning", e))?;
            // neural-analysis value: maximum tested rate whose accuracy stays
            // within the tolerance of the unpruned accuracy (0 if none)
            let mut best = 0.0f64;
            for row in &sweep.rows {
                if row.report.accuracy >= base.accuracy - pruning_cfg.accuracy_tolerance
                    && row.requested_rate > best
                {
                    best = row.requested_rate;
                }
            }
            values[m].max_preserving_pruning_rate = Some(best);
            all_rows.extend(sweep.rows);
        }
        let merged = pruning::SweepReport {
            rows: all_rows,
            has_asr: false,
            has_attribution: false,
        };
        write_output(&config.output_dir.join("pruning.csv"), merged.to_csv().as_bytes())?;
    }

    // radar: only meaningful when every axis was produced
    let radar = if config.enabled_modules().len() == 5 {
        let axes = vec![
            (
                AXIS_LABELS[0].to_string(),
                AxisDirection::HigherBetter,
                values.iter().map(|v| v.accuracy.unwrap()).collect(),
            ),
            (
                AXIS_LABELS[1].to_string(),
                AxisDirection::HigherBetter,
                values.iter().map(|v| v.mutant_accuracy.unwrap()).collect(),
            ),
            (
                AXIS_LABELS[2].to_string(),
                AxisDirection::LowerBetter,
                values.iter().map(|v| v.average_asr.unwrap()).collect(),
            ),
            (
                AXIS_LABELS[3].to_string(),
                AxisDirection::HigherBetter,
                values.iter().map(|v| v.average_insertion.unwrap()).collect(),
            ),
            (
                AXIS_LABELS[4].to_string(),
                AxisDirection::HigherBetter,
                values
                    .iter()
                    .map(|v| v.max_preserving_pruning_rate.unwrap())
                    .collect(),
            ),
        ];
        let scores = radar_scores(&names, &axes).map_err(|e| module_err("radar", e))?;
        emit_radar_svg(&scores, &config.output_dir.join("radar.svg"))?;
        Some(scores)
    } else {
        None
    };

    let summary = RunSummary {
        config_version: config.version,
        seed: config.seed,
        models: names,
        modules: config
            .enabled_modules()
            .iter()
            .map(|s| s.to_string())
            .collect(),
        module_values: values,
        radar,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_output(
        &config.output_dir.join("summary.json"),
        format!("{json}\n").as_bytes(),
    )?;
    Ok(summary)
}

fn attribute_one(
    model: &Model,
    input: &crate::tensor::Tensor,
    label: usize,
    id: u64,
    method: AttributionMethodSel,
    attr: &AttributionConfig,
    seed: u64,
) -> Result<attribution::AttributionMap, attribution::AttributionError> {
    match method {
        AttributionMethodSel::Saliency => attribution::saliency_map(model, input, label, id),
        AttributionMethodSel::Smoothgrad => {
            attribution::smoothgrad(model, input, label, 16, 0.1, seed, id)
        }
        AttributionMethodSel::IntegratedGradients => {
            let path = PathSpec::zeros(input.shape(), attr.ig_steps);
            attribution::integrated_gradients(model, input, label, &path, id)
        }
        AttributionMethodSel::Big => {
            let config = AttackConfig::new(AttackMethod::Pgd).with_seed(seed);
            match attribution::big(model, input, label, &config, attr.ig_steps, 1e-4, id) {
                // no boundary within the budget: fall back to plain IG so
                // the sweep still yields a map for every sample
                Err(attribution::AttributionError::NoAdversarialFound) => {
                    let path = PathSpec::zeros(input.shape(), attr.ig_steps);
                    attribution::integrated_gradients(model, input, label, &path, id)
                }
                other => other,
            }
        }
        AttributionMethodSel::Agi => {
            let config = AgiConfig {
                seed,
                ..AgiConfig::default()
            };
            attribution::agi(model, input, label, &config, id).map(|(map, _)| map)
        }
    }
}
