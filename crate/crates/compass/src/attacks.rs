//! White-box adversarial attacks under the L-inf threat model, plus the
//! source -> target transfer harness.
//!
//! All attacks maximize cross-entropy of the true label (untargeted) and
//! keep the adversarial within the epsilon ball intersected with [0,1].
//! Randomized pieces (PGD start, input diversity) draw counter-based
//! randomness keyed by sample id and iteration, so generation is bitwise
//! reproducible and schedule-independent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledDataset;
use crate::model::{Model, ModelError};
use crate::rng::CounterRng;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid attack config: {0}")]
    BadConfig(String),
    #[error("models disagree on input shape: {left:?} vs {right:?}")]
    IncompatibleModels {
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("config method {expected:?} required, got {got:?}")]
    WrongMethod {
        expected: AttackMethod,
        got: AttackMethod,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMethod {
    Fgsm,
    IFgsm,
    MiFgsm,
    DiFgsm,
    TiFgsm,
    SiniFgsm,
    Pgd,
}

impl AttackMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::IFgsm => "i-fgsm",
            AttackMethod::MiFgsm => "mi-fgsm",
            AttackMethod::DiFgsm => "di-fgsm",
            AttackMethod::TiFgsm => "ti-fgsm",
            AttackMethod::SiniFgsm => "sini-fgsm",
            AttackMethod::Pgd => "pgd",
        }
    }
}

/// Attack hyperparameters. `AttackConfig::new` fills the conventional
/// defaults for a method; fields are public for explicit control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    /// L-inf budget.
    pub epsilon: f64,
    /// Per-step size.
    pub alpha: f64,
    /// Iteration count.
    pub steps: usize,
    /// Momentum decay; 0 disables momentum accumulation.
    pub momentum: f64,
    /// Probability of applying the diversity transform (DI).
    pub diversity_prob: f64,
    /// Resize range as fractions of the spatial side (DI).
    pub resize_range: (f64, f64),
    /// Gaussian kernel size (TI); odd.
    pub kernel_size: usize,
    /// Number of scale copies (SINI).
    pub scale_copies: usize,
    /// Uniform random start inside the epsilon ball (PGD).
    pub random_start: bool,
    pub seed: u64,
}

impl AttackConfig {
    /// Conventional defaults: epsilon 8/255, alpha 2/255, 10 steps,
    /// momentum 1.0 where the method uses it.
    pub fn new(method: AttackMethod) -> Self {
        let uses_momentum = matches!(method, AttackMethod::MiFgsm | AttackMethod::SiniFgsm);
        AttackConfig {
            method,
            epsilon: 8.0 / 255.0,
            alpha: 2.0 / 255.0,
            steps: if method == AttackMethod::Fgsm { 1 } else { 10 },
            momentum: if uses_momentum { 1.0 } else { 0.0 },
            diversity_prob: 0.5,
            resize_range: (0.9, 1.0),
            kernel_size: 5,
            scale_copies: 5,
            random_start: method == AttackMethod::Pgd,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |msg: String| Err(AttackError::BadConfig(msg));
        if self.epsilon <= 0.0 {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.alpha <= 0.0 {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if self.momentum < 0.0 {
            return bad(format!("momentum must be >= 0, got {}", self.momentum));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if self.scale_copies == 0 {
            return bad("scale copies must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.diversity_prob) {
            return bad(format!(
                "diversity prob must be in [0,1], got {}",
                self.diversity_prob
            ));
        }
        if !(self.resize_range.0 <= self.resize_range.1
            && self.resize_range.0 > 0.0
            && self.resize_range.1 <= 1.0)
        {
            return bad(format!("bad resize range {:?}", self.resize_range));
        }
        Ok(())
    }
}

/// Adversarial examples produced by one attack run.
#[derive(Debug, Clone)]
pub struct AdversarialBatch {
    originals: Vec<Tensor>,
    adversarials: Vec<Tensor>,
    perturbations: Vec<Tensor>,
    labels: Vec<usize>,
    source_model: String,
    /// Source model classified the clean sample correctly.
    originally_correct: Vec<bool>,
    /// Source model misclassifies the adversarial (white-box success).
    source_success: Vec<bool>,
    config: AttackConfig,
}

impl AdversarialBatch {
    pub fn len(&self) -> usize {
        self.adversarials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adversarials.is_empty()
    }

    pub fn originals(&self) -> &[Tensor] {
        &self.originals
    }

    pub fn adversarials(&self) -> &[Tensor] {
        &self.adversarials
    }

    pub fn perturbations(&self) -> &[Tensor] {
        &self.perturbations
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn source_model(&self) -> &str {
        &self.source_model
    }

    pub fn originally_correct(&self) -> &[bool] {
        &self.originally_correct
    }

    pub fn source_success(&self) -> &[bool] {
        &self.source_success
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clip to the epsilon ball around the original, then to [0,1]. Both are
/// axis-aligned boxes, so the order does not change the result; it is fixed
/// here for determinism.
fn project(original: &Tensor, candidate: &Tensor, epsilon: f64) -> Tensor {
    let mut out = candidate.clone();
    for (o, v) in original.data().iter().zip(out.data_mut()) {
        *v = v.clamp(o - epsilon, o + epsilon).clamp(0.0, 1.0);
    }
    out
}

/// Single-step FGSM: x' = clamp(x + epsilon * sign(grad), 0, 1).
pub fn fgsm(
    model: &Model,
    dataset: &LabeledDataset,
    config: &AttackConfig,
) -> Result<AdversarialBatch, AttackError> {
    expect_method(config, AttackMethod::Fgsm)?;
    config.validate()?;
    run(model, dataset, config, |ctx| {
        let (_, grad) = ctx.model.input_loss_gradient(ctx.original, ctx.label)?;
        let stepped = ctx
            .original
            .zip(&grad, |x, g| x + ctx.config.epsilon * sign(g))
            .expect("shapes match");
        Ok(stepped.clamp(0.0, 1.0))
    })
}

/// The iterative FGSM family: I-, MI-, DI-, TI-, SINI-FGSM.
pub fn iterative_attack(
    model: &Model,
    dataset: &LabeledDataset,
    config: &AttackConfig,
) -> Result<AdversarialBatch, AttackError> {
    match config.method {
        AttackMethod::IFgsm
        | AttackMethod::MiFgsm
        | AttackMethod::DiFgsm
        | AttackMethod::TiFgsm
        | AttackMethod::SiniFgsm => {}
        got => {
            return Err(AttackError::WrongMethod {
                expected: AttackMethod::IFgsm,
                got,
            })
        }
    }
    config.validate()?;
    run(model, dataset, config, iterate_sample)
}

/// Projected gradient descent with optional random start.
pub fn pgd(
    model: &Model,
    dataset: &LabeledDataset,
    config: &AttackConfig,
) -> Result<AdversarialBatch, AttackError> {
    expect_method(config, AttackMethod::Pgd)?;
    config.validate()?;
    run(model, dataset, config, |ctx| {
        let mut adv = if ctx.config.random_start {
            let rng = CounterRng::new(ctx.config.seed).child(0x7064); // pgd-start keyspace
            let mut start = ctx.original.clone();
            for (i, v) in start.data_mut().iter_mut().enumerate() {
                let u = rng.uniform_at(ctx.id, i as u64);
                *v += ctx.config.epsilon * (2.0 * u - 1.0);
            }
            project(ctx.original, &start, ctx.config.epsilon)
        } else {
            ctx.original.clone()
        };
        for _ in 0..ctx.config.steps {
            let (_, grad) = ctx.model.input_loss_gradient(&adv, ctx.label)?;
            let stepped = adv
                .zip(&grad, |x, g| x + ctx.config.alpha * sign(g))
                .expect("shapes match");
            adv = project(ctx.original, &stepped, ctx.config.epsilon);
        }
        Ok(adv)
    })
}

/// Dispatch on the configured method.
pub fn run_attack(
    model: &Model,
    dataset: &LabeledDataset,
    config: &AttackConfig,
) -> Result<AdversarialBatch, AttackError> {
    match config.method {
        AttackMethod::Fgsm => fgsm(model, dataset, config),
        AttackMethod::Pgd => pgd(model, dataset, config),
        _ => iterative_attack(model, dataset, config),
    }
}

struct SampleCtx<'a> {
    model: &'a Model,
    original: &'a Tensor,
    label: usize,
    id: u64,
    config: &'a AttackConfig,
}

fn run(
    model: &Model,
    dataset: &LabeledDataset,
    config: &AttackConfig,
    per_sample: impl Fn(&SampleCtx) -> Result<Tensor, AttackError>,
) -> Result<AdversarialBatch, AttackError> {
    let mut originals = Vec::with_capacity(dataset.len());
    let mut adversarials = Vec::with_capacity(dataset.len());
    let mut perturbations = Vec::with_capacity(dataset.len());
    let mut originally_correct = Vec::with_capacity(dataset.len());
    let mut source_success = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let (original, label, id) = dataset.sample(i);
        let clean_pred = model.predict_class(original)?;
        let adv = per_sample(&SampleCtx {
            model,
            original,
            label,
            id,
            config,
        })?;
        let adv_pred = model.predict_class(&adv)?;
        perturbations.push(adv.sub(original).expect("shapes match"));
        originally_correct.push(clean_pred == label);
        source_success.push(adv_pred != label);
        originals.push(original.clone());
        adversarials.push(adv);
    }
    Ok(AdversarialBatch {
        originals,
        adversarials,
        perturbations,
        labels: dataset.labels().to_vec(),
        source_model: model.name().to_string(),
        originally_correct,
        source_success,
        config: *config,
    })
}

fn iterate_sample(ctx: &SampleCtx) -> Result<Tensor, AttackError> {
    let config = ctx.config;
    let mut adv = ctx.original.clone();
    let mut momentum_grad = Tensor::zeros(ctx.original.shape().to_vec());
    let di_rng = CounterRng::new(config.seed).child(0x6469); // diversity keyspace
    for step in 0..config.steps {
        let raw = match config.method {
            AttackMethod::IFgsm | AttackMethod::MiFgsm => {
                ctx.model.input_loss_gradient(&adv, ctx.label)?.1
            }
            AttackMethod::DiFgsm => {
                let point = diversity_transform(&adv, config, &di_rng, ctx.id, step);
                ctx.model.input_loss_gradient(&point, ctx.label)?.1
            }
            AttackMethod::TiFgsm => {
                let grad = ctx.model.input_loss_gradient(&adv, ctx.label)?.1;
                gaussian_smooth(&grad, config.kernel_size)
            }
            AttackMethod::SiniFgsm => {
                // Nesterov lookahead, then average gradients over scale copies
                let lookahead = adv
                    .zip(&momentum_grad, |x, g| {
                        x + config.alpha * config.momentum * g
                    })
                    .expect("shapes match");
                let mut acc = Tensor::zeros(adv.shape().to_vec());
                for i in 0..config.scale_copies {
                    let scaled = lookahead.scale(1.0 / (1u64 << i) as f64);
                    let g = ctx.model.input_loss_gradient(&scaled, ctx.label)?.1;
                    acc = acc.add(&g).expect("shapes match");
                }
                acc.scale(1.0 / config.scale_copies as f64)
            }
            _ => unreachable!("dispatched above"),
        };
        let direction = if config.momentum > 0.0 {
            let l1 = raw.l1_norm();
            let normalized = if l1 > 0.0 { raw.scale(1.0 / l1) } else { raw };
            momentum_grad = momentum_grad
                .scale(config.momentum)
                .add(&normalized)
                .expect("shapes match");
            momentum_grad.clone()
        } else {
            raw
        };
        let stepped = adv
            .zip(&direction, |x, g| x + config.alpha * sign(g))
            .expect("shapes match");
        adv = project(ctx.original, &stepped, config.epsilon);
    }
    Ok(adv)
}

/// DI transform: with probability p, nearest-neighbor resize to a random
/// side within the configured range and zero-pad back at a random offset.
fn diversity_transform(
    input: &Tensor,
    config: &AttackConfig,
    rng: &CounterRng,
    id: u64,
    step: usize,
) -> Tensor {
    let base = step as u64 * 8;
    if rng.uniform_at(id, base) > config.diversity_prob {
        return input.clone();
    }
    let [c, h, w] = *input.shape() else {
        return input.clone();
    };
    let lo_h = ((config.resize_range.0 * h as f64).floor() as usize).max(1);
    let lo_w = ((config.resize_range.0 * w as f64).floor() as usize).max(1);
    let hi_h = ((config.resize_range.1 * h as f64).round() as usize).clamp(lo_h, h);
    let hi_w = ((config.resize_range.1 * w as f64).round() as usize).clamp(lo_w, w);
    let nh = lo_h + rng.index_at(id, base + 1, hi_h - lo_h + 1);
    let nw = lo_w + rng.index_at(id, base + 2, hi_w - lo_w + 1);
    let oy = rng.index_at(id, base + 3, h - nh + 1);
    let ox = rng.index_at(id, base + 4, w - nw + 1);
    let mut out = Tensor::zeros(input.shape().to_vec());
    for ch in 0..c {
        for y in 0..nh {
            for x in 0..nw {
                // nearest-neighbor source pixel
                let sy = (y * h) / nh;
                let sx = (x * w) / nw;
                out.data_mut()[(ch * h + oy + y) * w + ox + x] =
                    input.data()[(ch * h + sy) * w + sx];
            }
        }
    }
    out
}

/// Convolve each channel with a normalized k x k Gaussian (sigma = k/3),
/// reflected boundary.
pub(crate) fn gaussian_smooth(grad: &Tensor, k: usize) -> Tensor {
    if k == 1 {
        return grad.clone();
    }
    let [c, h, w] = *grad.shape() else {
        return grad.clone();
    };
    let sigma = k as f64 / 3.0;
    let half = (k / 2) as isize;
    let mut kernel = Vec::with_capacity(k * k);
    for dy in -half..=half {
        for dx in -half..=half {
            kernel.push((-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - 1 - i;
        }
        i as usize
    };
    let mut out = Tensor::zeros(grad.shape().to_vec());
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, (dy, dx)) in (-half..=half)
                    .flat_map(|dy| (-half..=half).map(move |dx| (dy, dx)))
                    .enumerate()
                {
                    let sy = reflect(y as isize + dy, h);
                    let sx = reflect(x as isize + dx, w);
                    acc += kernel[ki] * grad.data()[(ch * h + sy) * w + sx];
                }
                out.data_mut()[(ch * h + y) * w + x] = acc;
            }
        }
    }
    out
}

fn expect_method(config: &AttackConfig, expected: AttackMethod) -> Result<(), AttackError> {
    if config.method != expected {
        return Err(AttackError::WrongMethod {
            expected,
            got: config.method,
        });
    }
    Ok(())
}

/// One transfer table: rows are attack methods plus an average row, columns
/// are the source (white-box) followed by each target model.
#[derive(Debug, Clone, Serialize)]
pub struct TransferResult {
    pub source: String,
    pub targets: Vec<String>,
    pub methods: Vec<String>,
    /// rows[i][j]: ASR of method i on column j (0 = source itself).
    pub rows: Vec<Vec<f64>>,
    /// Column-wise mean over the in-scope methods above.
    pub average: Vec<f64>,
}

impl TransferResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Source,Method");
        out.push_str(&format!(",{} (white-box)", self.source));
        for t in &self.targets {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        for (method, row) in self.methods.iter().zip(&self.rows) {
            out.push_str(&format!("{},{}", self.source, method));
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("{},Average (in-scope)", self.source));
        for v in &self.average {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
        out
    }
}

/// Generate adversarials on the source for each config and score them on the
/// source (white-box) and every target (black-box transfer).
pub fn evaluate_transfer(
    source: &Model,
    targets: &[&Model],
    dataset: &LabeledDataset,
    configs: &[AttackConfig],
) -> Result<TransferResult, AttackError> {
    for target in targets {
        if target.input_shape() != source.input_shape()
            || target.class_count() != source.class_count()
        {
            return Err(AttackError::IncompatibleModels {
                left: source.input_shape().to_vec(),
                right: target.input_shape().to_vec(),
            });
        }
    }
    let mut rows = Vec::with_capacity(configs.len());
    let mut methods = Vec::with_capacity(configs.len());
    for config in configs {
        let batch = run_attack(source, dataset, config)?;
        let mut row = Vec::with_capacity(1 + targets.len());
        row.push(asr(&batch, source)?);
        for target in targets {
            row.push(asr(&batch, target)?);
        }
        rows.push(row);
        methods.push(config.method.name().to_string());
    }
    let columns = 1 + targets.len();
    let average = (0..columns)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect();
    Ok(TransferResult {
        source: source.name().to_string(),
        targets: targets.iter().map(|t| t.name().to_string()).collect(),
        methods,
        rows,
        average,
    })
}

fn asr(batch: &AdversarialBatch, target: &Model) -> Result<f64, AttackError> {
    crate::metrics::attack_success_rate(batch, target)
        .map_err(|e| AttackError::BadConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerParams, LayerSpec};

    /// Binary logistic-style model: logits = [0, w.x + b], so class 1 wins
    /// iff w.x + b > 0 and the loss gradient has the closed form
    /// (sigma(w.x+b) - y1) * w.
    fn linear_model(w: Vec<f64>, b: f64) -> Model {
        let n = w.len();
        let mut weight = vec![0.0; 2 * n];
        weight[n..].copy_from_slice(&w);
        Model::new(
            "linear",
            vec![n],
            2,
            vec![LayerSpec::Dense { input: n, output: 2 }],
            vec![LayerParams::Dense {
                weight: Tensor::new(vec![2, n], weight).unwrap(),
                bias: Tensor::from_vec(vec![0.0, b]).unwrap(),
            }],
        )
        .unwrap()
    }

    fn single(x: Vec<f64>, label: usize, classes: usize) -> LabeledDataset {
        let n = x.len();
        LabeledDataset::new(
            vec![Tensor::from_vec(x).unwrap()],
            vec![label],
            vec![n],
            classes,
        )
        .unwrap()
    }

    #[test]
    fn fgsm_matches_logistic_worked_example() {
        // w = [2,-1], b = 0, x = [0.5, 0.5], y = 1, eps = 0.1:
        // grad = (sigma(0.5) - 1) * w, sign = [-1, +1], x' = [0.4, 0.6]
        let model = linear_model(vec![2.0, -1.0], 0.0);
        let ds = single(vec![0.5, 0.5], 1, 2);
        let mut config = AttackConfig::new(AttackMethod::Fgsm);
        config.epsilon = 0.1;
        let batch = fgsm(&model, &ds, &config).unwrap();
        let adv = &batch.adversarials()[0];
        assert!((adv.data()[0] - 0.4).abs() < 1e-9);
        assert!((adv.data()[1] - 0.6).abs() < 1e-9);
    }

    #[test]
    fn fgsm_epsilon_to_zero_limit() {
        let model = linear_model(vec![1.0, 1.0], -0.5);
        let ds = single(vec![0.3, 0.4], 1, 2);
        let mut config = AttackConfig::new(AttackMethod::Fgsm);
        config.epsilon = 1e-15;
        let batch = fgsm(&model, &ds, &config).unwrap();
        let delta = batch.perturbations()[0].linf_norm();
        assert!(delta <= 1e-15);
    }

    #[test]
    fn fgsm_clamps_at_range_boundary() {
        // pixel already at 1.0 with positive gradient sign stays at 1.0
        let model = linear_model(vec![-1.0], 0.0); // label 1, grad dir = -w > 0
        let ds = single(vec![1.0], 1, 2);
        let mut config = AttackConfig::new(AttackMethod::Fgsm);
        config.epsilon = 0.2;
        let batch = fgsm(&model, &ds, &config).unwrap();
        assert_eq!(batch.adversarials()[0].data()[0], 1.0);
    }

    #[test]
    fn reduction_mi_to_fgsm() {
        let model = linear_model(vec![1.5, -0.7], 0.1);
        let ds = single(vec![0.4, 0.6], 0, 2);
        let mut mi = AttackConfig::new(AttackMethod::MiFgsm);
        mi.momentum = 0.0;
        mi.steps = 1;
        mi.alpha = mi.epsilon;
        let mut f = AttackConfig::new(AttackMethod::Fgsm);
        f.epsilon = mi.epsilon;
        let a = iterative_attack(&model, &ds, &mi).unwrap();
        let b = fgsm(&model, &ds, &f).unwrap();
        assert_eq!(a.adversarials()[0].data(), b.adversarials()[0].data());
    }

    #[test]
    fn reduction_ti_k1_and_di_p0_and_sini_m1_to_ifgsm() {
        let model = linear_model(vec![0.8, -1.2], 0.05);
        let ds = single(vec![0.45, 0.55], 1, 2);
        let base = AttackConfig::new(AttackMethod::IFgsm);
        let reference = iterative_attack(&model, &ds, &base).unwrap();

        let mut ti = AttackConfig::new(AttackMethod::TiFgsm);
        ti.kernel_size = 1;
        let mut di = AttackConfig::new(AttackMethod::DiFgsm);
        di.diversity_prob = 0.0;
        let mut sini = AttackConfig::new(AttackMethod::SiniFgsm);
        sini.scale_copies = 1;
        sini.momentum = 0.0;
        for config in [ti, di, sini] {
            let out = iterative_attack(&model, &ds, &config).unwrap();
            assert_eq!(
                out.adversarials()[0].data(),
                reference.adversarials()[0].data(),
                "{:?}",
                config.method
            );
        }
    }

    #[test]
    fn ifgsm_loss_nondecreasing_on_linear_model() {
        let model = linear_model(vec![2.0, -1.0], 0.0);
        let x = vec![0.5, 0.5];
        let label = 1;
        let mut config = AttackConfig::new(AttackMethod::IFgsm);
        config.steps = 5;
        config.alpha = config.epsilon / 5.0;
        let ds = single(x.clone(), label, 2);
        // replay the trajectory manually and check per-step loss
        let mut adv = Tensor::from_vec(x).unwrap();
        let mut prev = model.input_loss_gradient(&adv, label).unwrap().0;
        let original = adv.clone();
        for _ in 0..config.steps {
            let (_, grad) = model.input_loss_gradient(&adv, label).unwrap();
            let stepped = adv.zip(&grad, |x, g| x + config.alpha * sign(g)).unwrap();
            adv = project(&original, &stepped, config.epsilon);
            let loss = model.input_loss_gradient(&adv, label).unwrap().0;
            assert!(loss >= prev - 1e-12);
            prev = loss;
        }
        // and the library path lands on the same endpoint
        let batch = iterative_attack(&model, &ds, &config).unwrap();
        assert_eq!(batch.adversarials()[0].data(), adv.data());
    }

    #[test]
    fn pgd_projection_clips_candidate() {
        let original = Tensor::from_vec(vec![0.5]).unwrap();
        let candidate = Tensor::from_vec(vec![0.75]).unwrap();
        let projected = project(&original, &candidate, 0.1);
        assert!((projected.data()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn pgd_without_random_start_equals_ifgsm() {
        let model = linear_model(vec![1.0, 2.0], -0.3);
        let ds = single(vec![0.2, 0.7], 0, 2);
        let mut p = AttackConfig::new(AttackMethod::Pgd);
        p.random_start = false;
        let i = AttackConfig::new(AttackMethod::IFgsm);
        let a = pgd(&model, &ds, &p).unwrap();
        let b = iterative_attack(&model, &ds, &i).unwrap();
        assert_eq!(a.adversarials()[0].data(), b.adversarials()[0].data());
    }

    #[test]
    fn pgd_above_margin_reaches_asr_one() {
        // x = [0.5], w = [4], b = -2.4: margin to flip = |w.x+b|/|w| = 0.1
        let model = linear_model(vec![4.0], -2.4);
        let ds = single(vec![0.7], 1, 2); // w.x+b = 0.4 > 0, correct
        let mut config = AttackConfig::new(AttackMethod::Pgd);
        config.epsilon = 0.15; // above the 0.1 margin
        config.alpha = 0.03;
        config.steps = 10;
        config.random_start = false;
        let batch = pgd(&model, &ds, &config).unwrap();
        assert!(batch.source_success()[0]);
        let asr = crate::metrics::attack_success_rate(&batch, &model).unwrap();
        assert_eq!(asr, 1.0);
    }

    #[test]
    fn asr_zero_below_margin() {
        let model = linear_model(vec![4.0], -2.4);
        let ds = single(vec![0.7], 1, 2);
        let mut config = AttackConfig::new(AttackMethod::Pgd);
        config.epsilon = 0.05; // below the 0.1 margin
        config.alpha = 0.02;
        config.steps = 10;
        config.random_start = false;
        let batch = pgd(&model, &ds, &config).unwrap();
        let asr = crate::metrics::attack_success_rate(&batch, &model).unwrap();
        assert_eq!(asr, 0.0);
    }

    #[test]
    fn batches_satisfy_ball_and_range_invariants() {
        let model = linear_model(vec![2.0, -3.0, 1.0], 0.2);
        let inputs = vec![
            Tensor::from_vec(vec![0.1, 0.9, 0.5]).unwrap(),
            Tensor::from_vec(vec![0.99, 0.01, 0.5]).unwrap(),
        ];
        let ds = LabeledDataset::new(inputs, vec![0, 1], vec![3], 2).unwrap();
        for method in [
            AttackMethod::Fgsm,
            AttackMethod::IFgsm,
            AttackMethod::MiFgsm,
            AttackMethod::TiFgsm,
            AttackMethod::SiniFgsm,
            AttackMethod::Pgd,
        ] {
            let config = AttackConfig::new(method).with_seed(9);
            let batch = run_attack(&model, &ds, &config).unwrap();
            for (delta, adv) in batch.perturbations().iter().zip(batch.adversarials()) {
                assert!(delta.linf_norm() <= config.epsilon + 1e-9, "{method:?}");
                assert!(adv.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn attacks_are_deterministic() {
        let model = linear_model(vec![1.0, -1.0], 0.0);
        let ds = single(vec![0.6, 0.4], 0, 2);
        for method in [AttackMethod::Pgd, AttackMethod::DiFgsm, AttackMethod::SiniFgsm] {
            let config = AttackConfig::new(method).with_seed(123);
            let a = run_attack(&model, &ds, &config).unwrap();
            let b = run_attack(&model, &ds, &config).unwrap();
            assert_eq!(a.adversarials()[0].data(), b.adversarials()[0].data());
        }
    }

    #[test]
    fn self_transfer_equals_white_box() {
        let model = linear_model(vec![3.0, -1.0], -0.4);
        let ds = LabeledDataset::new(
            vec![
                Tensor::from_vec(vec![0.6, 0.2]).unwrap(),
                Tensor::from_vec(vec![0.1, 0.8]).unwrap(),
            ],
            vec![1, 0],
            vec![2],
            2,
        )
        .unwrap();
        let configs = [AttackConfig::new(AttackMethod::Fgsm)];
        let result = evaluate_transfer(&model, &[&model], &ds, &configs).unwrap();
        assert_eq!(result.rows[0][0], result.rows[0][1]);
    }

    #[test]
    fn tiny_epsilon_transfer_is_zero() {
        let model = linear_model(vec![3.0, -1.0], -0.4);
        let ds = single(vec![0.6, 0.2], 1, 2);
        let mut config = AttackConfig::new(AttackMethod::Fgsm);
        config.epsilon = 1e-12;
        let result = evaluate_transfer(&model, &[], &ds, &[config]).unwrap();
        assert_eq!(result.rows[0][0], 0.0);
    }
}
