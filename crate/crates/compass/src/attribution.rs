//! Gradient attribution methods (saliency, SmoothGrad, integrated
//! gradients, boundary-based IG, adversarial gradient integration) and the
//! insertion/deletion faithfulness curves.
//!
//! Attribution targets the pre-softmax logit of the requested class; the
//! insertion/deletion curves record post-softmax probability.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::attacks::{self, AttackConfig, AttackError, AttackMethod};
use crate::data::LabeledDataset;
use crate::model::{softmax, Model, ModelError};
use crate::rng::CounterRng;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("target class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("baseline shape {got:?} does not match input shape {expected:?}")]
    BaselineShape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("path steps must be >= 1")]
    ZeroSteps,
    #[error("no adversarial found within the attack budget; boundary baseline unavailable")]
    NoAdversarialFound,
    #[error("invalid AGI config: {0}")]
    BadAgiConfig(String),
    #[error("io error at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("heatmap requires a 2-D or channels x 2-D map, got {0:?}")]
    BadMapShape(Vec<usize>),
}

/// Signed per-feature relevance scores for one (sample, class) pair.
#[derive(Debug, Clone)]
pub struct AttributionMap {
    pub values: Tensor,
    pub target_class: usize,
    pub method: String,
    pub sample_id: u64,
}

/// Straight-line integration path: baseline and Riemann step count.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub baseline: Tensor,
    pub steps: usize,
}

impl PathSpec {
    /// All-zeros baseline, the default.
    pub fn zeros(input_shape: &[usize], steps: usize) -> Self {
        PathSpec {
            baseline: Tensor::zeros(input_shape.to_vec()),
            steps,
        }
    }

    fn validate(&self, input: &Tensor) -> Result<(), AttributionError> {
        if self.steps == 0 {
            return Err(AttributionError::ZeroSteps);
        }
        if self.baseline.shape() != input.shape() {
            return Err(AttributionError::BaselineShape {
                expected: input.shape().to_vec(),
                got: self.baseline.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// Adversarial-gradient-integration parameters.
#[derive(Debug, Clone)]
pub struct AgiConfig {
    /// Per-step size along the false-class ascent path.
    pub step_size: f64,
    pub max_iterations: usize,
    /// How many false classes to sample (1..=C-1).
    pub false_classes: usize,
    pub seed: u64,
}

impl Default for AgiConfig {
    fn default() -> Self {
        AgiConfig {
            step_size: 0.05,
            max_iterations: 20,
            false_classes: 20,
            seed: 0,
        }
    }
}

/// Saliency map: gradient of the class logit w.r.t. the input, signed.
pub fn saliency_map(
    model: &Model,
    input: &Tensor,
    class: usize,
    sample_id: u64,
) -> Result<AttributionMap, AttributionError> {
    check_class(model, class)?;
    let (_, grad) = model.input_logit_gradient(input, class)?;
    Ok(AttributionMap {
        values: grad,
        target_class: class,
        method: "sm".into(),
        sample_id,
    })
}

/// SmoothGrad: mean saliency over Gaussian-perturbed copies of the input.
pub fn smoothgrad(
    model: &Model,
    input: &Tensor,
    class: usize,
    n_samples: usize,
    sigma: f64,
    seed: u64,
    sample_id: u64,
) -> Result<AttributionMap, AttributionError> {
    check_class(model, class)?;
    assert!(n_samples >= 1, "n_samples must be >= 1");
    assert!(sigma >= 0.0, "sigma must be >= 0");
    let rng = CounterRng::new(seed).child(0x7367); // smoothgrad keyspace
    let mut acc = Tensor::zeros(input.shape().to_vec());
    for draw in 0..n_samples {
        let mut noisy = input.clone();
        if sigma > 0.0 {
            for (i, v) in noisy.data_mut().iter_mut().enumerate() {
                *v += sigma * rng.normal_at(sample_id ^ (draw as u64) << 32, i as u64);
            }
        }
        let (_, grad) = model.input_logit_gradient(&noisy, class)?;
        acc = acc.add(&grad).expect("shapes match");
    }
    Ok(AttributionMap {
        values: acc.scale(1.0 / n_samples as f64),
        target_class: class,
        method: "sg".into(),
        sample_id,
    })
}

/// Integrated gradients along the straight path from baseline to input,
/// midpoint Riemann rule.
pub fn integrated_gradients(
    model: &Model,
    input: &Tensor,
    class: usize,
    path: &PathSpec,
    sample_id: u64,
) -> Result<AttributionMap, AttributionError> {
    check_class(model, class)?;
    path.validate(input)?;
    let diff = input.sub(&path.baseline).expect("validated shapes");
    let mut acc = Tensor::zeros(input.shape().to_vec());
    for step in 0..path.steps {
        let alpha = (step as f64 + 0.5) / path.steps as f64;
        let point = path
            .baseline
            .zip(&diff, |b, d| b + alpha * d)
            .expect("shapes match");
        let (_, grad) = model.input_logit_gradient(&point, class)?;
        acc = acc.add(&grad).expect("shapes match");
    }
    let values = acc
        .scale(1.0 / path.steps as f64)
        .zip(&diff, |g, d| g * d)
        .expect("shapes match");
    Ok(AttributionMap {
        values,
        target_class: class,
        method: "ig".into(),
        sample_id,
    })
}

/// Boundary-based IG: find the nearest reachable decision flip along the
/// PGD direction, binary-search the crossing, and integrate from there.
pub fn big(
    model: &Model,
    input: &Tensor,
    class: usize,
    attack_config: &AttackConfig,
    path_steps: usize,
    tolerance: f64,
    sample_id: u64,
) -> Result<AttributionMap, AttributionError> {
    check_class(model, class)?;
    if path_steps == 0 {
        return Err(AttributionError::ZeroSteps);
    }
    let clean_pred = model.predict_class(input)?;
    if clean_pred != class {
        // already on the wrong side: the boundary point is the input itself
        return Ok(AttributionMap {
            values: Tensor::zeros(input.shape().to_vec()),
            target_class: class,
            method: "big".into(),
            sample_id,
        });
    }

    let ds = LabeledDataset::with_ids(
        vec![input.clone()],
        vec![class],
        vec![sample_id],
        input.shape().to_vec(),
        model.class_count(),
    )
    .expect("single valid sample");
    let mut config = *attack_config;
    config.method = AttackMethod::Pgd;
    let batch = attacks::pgd(model, &ds, &config)?;
    let adversarial = &batch.adversarials()[0];
    if model.predict_class(adversarial)? == class {
        return Err(AttributionError::NoAdversarialFound);
    }

    // binary search the segment for the flip, capped at 40 halvings
    let mut lo = input.clone(); // predicted == class
    let mut hi = adversarial.clone(); // predicted != class
    for _ in 0..40 {
        if hi.sub(&lo).expect("shapes match").linf_norm() <= tolerance {
            break;
        }
        let mid = lo.zip(&hi, |a, b| 0.5 * (a + b)).expect("shapes match");
        if model.predict_class(&mid)? == class {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let path = PathSpec {
        baseline: hi,
        steps: path_steps,
    };
    let mut map = integrated_gradients(model, input, class, &path, sample_id)?;
    map.method = "big".into();
    Ok(map)
}

/// Adversarial gradient integration: walk targeted ascent paths toward
/// sampled false classes, accumulating the true-class gradient against each
/// step. Returns the mean map and the number of paths that hit the
/// iteration cap without flipping.
pub fn agi(
    model: &Model,
    input: &Tensor,
    class: usize,
    config: &AgiConfig,
    sample_id: u64,
) -> Result<(AttributionMap, usize), AttributionError> {
    check_class(model, class)?;
    if config.step_size <= 0.0 {
        return Err(AttributionError::BadAgiConfig(format!(
            "step size must be > 0, got {}",
            config.step_size
        )));
    }
    let classes = model.class_count();
    if config.false_classes == 0 {
        return Err(AttributionError::BadAgiConfig(
            "false-class count must be >= 1".into(),
        ));
    }
    let k = config.false_classes.min(classes - 1);
    let others: Vec<usize> = (0..classes).filter(|&c| c != class).collect();
    let chosen: Vec<usize> = if k == others.len() {
        others
    } else {
        let rng = CounterRng::new(config.seed).child(0x6167); // agi keyspace
        let perm = crate::rng::permutation(&rng, sample_id, others.len());
        perm.into_iter().take(k).map(|i| others[i]).collect()
    };

    let mut acc = Tensor::zeros(input.shape().to_vec());
    let mut truncated = 0usize;
    for &false_class in &chosen {
        let mut point = input.clone();
        let mut path_acc = Tensor::zeros(input.shape().to_vec());
        let mut flipped = false;
        for _ in 0..config.max_iterations {
            if model.predict_class(&point)? == false_class {
                flipped = true;
                break;
            }
            let (_, false_grad) = model.input_logit_gradient(&point, false_class)?;
            let (_, true_grad) = model.input_logit_gradient(&point, class)?;
            let step = false_grad.map(|g| config.step_size * sign(g));
            path_acc = path_acc
                .zip(&true_grad.zip(&step, |t, s| -t * s).expect("shapes match"), |a, d| a + d)
                .expect("shapes match");
            point = point.add(&step).expect("shapes match").clamp(0.0, 1.0);
        }
        if !flipped && config.max_iterations > 0 && model.predict_class(&point)? != false_class {
            truncated += 1;
        }
        acc = acc.add(&path_acc).expect("shapes match");
    }
    Ok((
        AttributionMap {
            values: acc.scale(1.0 / chosen.len() as f64),
            target_class: class,
            method: "agi".into(),
            sample_id,
        },
        truncated,
    ))
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

fn check_class(model: &Model, class: usize) -> Result<(), AttributionError> {
    if class >= model.class_count() {
        return Err(AttributionError::ClassOutOfRange {
            class,
            classes: model.class_count(),
        });
    }
    Ok(())
}

/// Which pixel values fill masked-out positions in the curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    Zeros,
    Constant(f64),
}

impl BaselineKind {
    fn value(&self) -> f64 {
        match self {
            BaselineKind::Zeros => 0.0,
            BaselineKind::Constant(v) => *v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveDirection {
    Insertion,
    Deletion,
}

/// One insertion or deletion curve with its trapezoid AUC.
#[derive(Debug, Clone)]
pub struct CurveResult {
    pub fractions: Vec<f64>,
    pub values: Vec<f64>,
    pub auc: f64,
    pub direction: CurveDirection,
}

impl CurveResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,probability\n");
        for (f, v) in self.fractions.iter().zip(&self.values) {
            out.push_str(&format!("{f:.6},{v:.6}\n"));
        }
        out
    }
}

/// Rank pixels by attribution value descending, ties toward the lowest
/// index.
fn ranking(map: &Tensor) -> Vec<usize> {
    let mut order: Vec<usize> = (0..map.numel()).collect();
    order.sort_by(|&a, &b| {
        map.data()[b]
            .partial_cmp(&map.data()[a])
            .expect("finite attributions")
            .then(a.cmp(&b))
    });
    order
}

/// Insertion and deletion curves for one attribution map. Pixels are
/// revealed (insertion, from the baseline image) or removed (deletion, from
/// the input) in `steps` near-equal batches following the attribution
/// ranking; the last batch absorbs the remainder.
pub fn insertion_deletion(
    model: &Model,
    input: &Tensor,
    class: usize,
    map: &AttributionMap,
    steps: usize,
    baseline: BaselineKind,
) -> Result<(CurveResult, CurveResult), AttributionError> {
    check_class(model, class)?;
    assert!(steps >= 1, "steps must be >= 1");
    let order = ranking(&map.values);
    let total = input.numel();
    let base_value = baseline.value();

    let prob = |x: &Tensor| -> Result<f64, AttributionError> {
        Ok(softmax(&model.logits(x)?).data()[class])
    };

    let mut insertion_img = input.map(|_| base_value);
    let mut deletion_img = input.clone();
    let mut insertion_values = vec![prob(&insertion_img)?];
    let mut deletion_values = vec![prob(&deletion_img)?];
    let mut fractions = vec![0.0];
    let mut cursor = 0usize;
    for batch in 1..=steps {
        let upto = total * batch / steps;
        for &pixel in &order[cursor..upto] {
            insertion_img.data_mut()[pixel] = input.data()[pixel];
            deletion_img.data_mut()[pixel] = base_value;
        }
        cursor = upto;
        fractions.push(batch as f64 / steps as f64);
        insertion_values.push(prob(&insertion_img)?);
        deletion_values.push(prob(&deletion_img)?);
    }

    let auc = |values: &[f64]| -> f64 {
        let mut area = 0.0;
        for i in 1..values.len() {
            area += 0.5 * (values[i] + values[i - 1]) * (fractions[i] - fractions[i - 1]);
        }
        area
    };
    Ok((
        CurveResult {
            auc: auc(&insertion_values),
            fractions: fractions.clone(),
            values: insertion_values,
            direction: CurveDirection::Insertion,
        },
        CurveResult {
            auc: auc(&deletion_values),
            fractions,
            values: deletion_values,
            direction: CurveDirection::Deletion,
        },
    ))
}

/// Write the map as an 8-bit binary grayscale raster (P5): channel-summed
/// absolute values, normalized by the maximum. Deterministic bytes.
pub fn render_heatmap(map: &AttributionMap, path: &Path) -> Result<(), AttributionError> {
    let (h, w, plane) = match *map.values.shape() {
        [h, w] => (h, w, map.values.data().to_vec()),
        [c, h, w] => {
            let mut plane = vec![0.0; h * w];
            for ch in 0..c {
                for (i, v) in plane.iter_mut().enumerate() {
                    *v += map.values.data()[ch * h * w + i].abs();
                }
            }
            (h, w, plane)
        }
        ref shape => return Err(AttributionError::BadMapShape(shape.to_vec())),
    };
    let max = plane.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for v in &plane {
        let scaled = if max > 0.0 { v.abs() / max } else { 0.0 };
        bytes.push((scaled * 255.0).round() as u8);
    }
    fs::write(path, bytes).map_err(|e| AttributionError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerParams, LayerSpec};

    fn linear_model(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Model {
        let classes = rows.len();
        let n = rows[0].len();
        let weight: Vec<f64> = rows.into_iter().flatten().collect();
        Model::new(
            "linear",
            vec![n],
            classes,
            vec![LayerSpec::Dense { input: n, output: classes }],
            vec![LayerParams::Dense {
                weight: Tensor::new(vec![classes, n], weight).unwrap(),
                bias: Tensor::from_vec(bias).unwrap(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn saliency_of_linear_model_is_weight_row() {
        let model = linear_model(vec![vec![1.0, -2.0], vec![0.5, 3.0]], vec![0.0, 0.0]);
        let x = Tensor::from_vec(vec![0.2, 0.8]).unwrap();
        let map = saliency_map(&model, &x, 1, 0).unwrap();
        assert_eq!(map.values.data(), &[0.5, 3.0]);
    }

    #[test]
    fn saliency_of_constant_model_is_zero() {
        let model = linear_model(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, -1.0]);
        let x = Tensor::from_vec(vec![0.3, 0.6]).unwrap();
        let map = saliency_map(&model, &x, 0, 0).unwrap();
        assert_eq!(map.values.data(), &[0.0, 0.0]);
    }

    #[test]
    fn smoothgrad_sigma_zero_equals_saliency() {
        let model = linear_model(vec![vec![1.0, 2.0], vec![-1.0, 0.5]], vec![0.1, 0.2]);
        let x = Tensor::from_vec(vec![0.4, 0.5]).unwrap();
        let sg = smoothgrad(&model, &x, 0, 7, 0.0, 5, 0).unwrap();
        let sm = saliency_map(&model, &x, 0, 0).unwrap();
        assert_eq!(sg.values.data(), sm.values.data());
    }

    #[test]
    fn smoothgrad_on_linear_model_equals_weights_for_any_sigma() {
        let model = linear_model(vec![vec![1.0, 2.0], vec![-1.0, 0.5]], vec![0.0, 0.0]);
        let x = Tensor::from_vec(vec![0.4, 0.5]).unwrap();
        let sg = smoothgrad(&model, &x, 1, 16, 0.3, 11, 3).unwrap();
        assert!((sg.values.data()[0] - -1.0).abs() < 1e-12);
        assert!((sg.values.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ig_linear_closed_form() {
        // w = [1,2], x = [0.5,0.5], baseline 0 -> IG = [0.5, 1.0] for any m
        let model = linear_model(vec![vec![1.0, 2.0], vec![0.0, 0.0]], vec![0.0, 0.0]);
        let x = Tensor::from_vec(vec![0.5, 0.5]).unwrap();
        for m in [1, 7, 50] {
            let path = PathSpec::zeros(x.shape(), m);
            let map = integrated_gradients(&model, &x, 0, &path, 0).unwrap();
            assert!((map.values.data()[0] - 0.5).abs() < 1e-9, "m={m}");
            assert!((map.values.data()[1] - 1.0).abs() < 1e-9, "m={m}");
            let sum: f64 = map.values.data().iter().sum();
            assert!((sum - 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn ig_zero_path_gives_zero_map() {
        let model = linear_model(vec![vec![1.0, 2.0], vec![0.3, 0.1]], vec![0.0, 0.0]);
        let x = Tensor::from_vec(vec![0.4, 0.2]).unwrap();
        let path = PathSpec {
            baseline: x.clone(),
            steps: 10,
        };
        let map = integrated_gradients(&model, &x, 0, &path, 0).unwrap();
        assert_eq!(map.values.data(), &[0.0, 0.0]);
    }

    #[test]
    fn big_boundary_lies_on_hyperplane() {
        // logits [0, w.x + b]: boundary at w.x + b = 0
        let model = linear_model(vec![vec![0.0, 0.0], vec![2.0, -1.0]], vec![0.0, 0.25]);
        let x = Tensor::from_vec(vec![0.6, 0.9]).unwrap(); // w.x+b = 0.55 > 0 -> class 1
        assert_eq!(model.predict_class(&x).unwrap(), 1);
        let mut config = AttackConfig::new(AttackMethod::Pgd);
        config.epsilon = 0.5;
        config.alpha = 0.1;
        config.random_start = false;
        let map = big(&model, &x, 1, &config, 50, 1e-4, 0).unwrap();
        // recover the baseline: completeness means sum = F(x) - F(boundary),
        // and on a linear model the boundary satisfies w.b + 0.25 ~ 0
        let fx = 2.0 * 0.6 - 0.9 + 0.25;
        let sum: f64 = map.values.data().iter().sum();
        let f_boundary = fx - sum;
        assert!(f_boundary.abs() < 1e-3, "boundary logit {f_boundary}");
    }

    #[test]
    fn big_on_misclassified_input_is_zero_map() {
        let model = linear_model(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0.0, -3.0]);
        let x = Tensor::from_vec(vec![0.5, 0.5]).unwrap(); // class 0 wins
        let config = AttackConfig::new(AttackMethod::Pgd);
        let map = big(&model, &x, 1, &config, 10, 1e-4, 0).unwrap();
        assert!(map.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn big_errors_when_budget_too_small() {
        let model = linear_model(vec![vec![0.0, 0.0], vec![4.0, 0.0]], vec![0.0, -1.0]);
        let x = Tensor::from_vec(vec![0.9, 0.5]).unwrap(); // margin 2.6/4 = 0.65
        let mut config = AttackConfig::new(AttackMethod::Pgd);
        config.epsilon = 0.01;
        config.random_start = false;
        assert!(matches!(
            big(&model, &x, 1, &config, 10, 1e-4, 0),
            Err(AttributionError::NoAdversarialFound)
        ));
    }

    #[test]
    fn agi_two_class_linear_matches_hand_simulation() {
        let w_true = vec![1.0, -0.5];
        let w_false = vec![-2.0, 0.5];
        let model = linear_model(vec![w_true.clone(), w_false.clone()], vec![1.0, 0.0]);
        let x = Tensor::from_vec(vec![0.5, 0.5]).unwrap();
        assert_eq!(model.predict_class(&x).unwrap(), 0);
        let config = AgiConfig {
            step_size: 0.05,
            max_iterations: 8,
            false_classes: 1,
            seed: 0,
        };
        let (map, _) = agi(&model, &x, 0, &config, 0).unwrap();

        // independent step-by-step oracle
        let mut point = [0.5, 0.5];
        let mut expected = [0.0, 0.0];
        for _ in 0..config.max_iterations {
            let logit_t = 1.0 + w_true[0] * point[0] + w_true[1] * point[1];
            let logit_f = w_false[0] * point[0] + w_false[1] * point[1];
            if logit_f > logit_t {
                break;
            }
            for j in 0..2 {
                let step = config.step_size * w_false[j].signum();
                expected[j] += -w_true[j] * step;
                point[j] = (point[j] + step).clamp(0.0, 1.0);
            }
        }
        assert!((map.values.data()[0] - expected[0]).abs() < 1e-12);
        assert!((map.values.data()[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn agi_zero_iterations_gives_zero_map() {
        let model = linear_model(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        let x = Tensor::from_vec(vec![0.6, 0.4]).unwrap();
        let config = AgiConfig {
            max_iterations: 0,
            false_classes: 1,
            ..AgiConfig::default()
        };
        let (map, _) = agi(&model, &x, 0, &config, 0).unwrap();
        assert!(map.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn agi_k_equals_single_false_class_on_binary() {
        let model = linear_model(vec![vec![1.0, 0.2], vec![-0.4, 1.0]], vec![0.3, 0.0]);
        let x = Tensor::from_vec(vec![0.7, 0.3]).unwrap();
        let one = AgiConfig {
            false_classes: 1,
            ..AgiConfig::default()
        };
        let all = AgiConfig {
            false_classes: 20,
            ..AgiConfig::default()
        };
        let (a, _) = agi(&model, &x, 0, &one, 0).unwrap();
        let (b, _) = agi(&model, &x, 0, &all, 0).unwrap();
        assert_eq!(a.values.data(), b.values.data());
    }

    #[test]
    fn curves_match_brute_force_on_decisive_pixel_model() {
        // logit 0 = 8 * x[0], logit 1 = 0; 4-pixel input, map ranks pixel 0
        let model = linear_model(
            vec![vec![8.0, 0.0, 0.0, 0.0], vec![0.0; 4]],
            vec![0.0, 0.0],
        );
        let x = Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let map = AttributionMap {
            values: Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
            target_class: 0,
            method: "manual".into(),
            sample_id: 0,
        };
        let (ins, del) =
            insertion_deletion(&model, &x, 0, &map, 4, BaselineKind::Zeros).unwrap();

        // brute-force oracle: direct forward passes over all 5 curve points
        let p_hi = softmax(&model.logits(&x).unwrap()).data()[0];
        let p_lo = softmax(&model.logits(&Tensor::from_vec(vec![0.0; 4]).unwrap()).unwrap()).data()[0];
        assert_eq!(ins.values, vec![p_lo, p_hi, p_hi, p_hi, p_hi]);
        assert_eq!(del.values, vec![p_hi, p_lo, p_lo, p_lo, p_lo]);
        // trapezoid areas: insertion jumps at the first batch
        let expected_ins = 0.25 * (p_lo + p_hi) / 2.0 + 0.75 * p_hi;
        let expected_del = 0.25 * (p_lo + p_hi) / 2.0 + 0.75 * p_lo;
        assert!((ins.auc - expected_ins).abs() < 1e-12);
        assert!((del.auc - expected_del).abs() < 1e-12);
    }

    #[test]
    fn constant_model_curves_are_flat() {
        let model = linear_model(vec![vec![0.0; 3], vec![0.0; 3]], vec![0.4, -0.1]);
        let x = Tensor::from_vec(vec![0.1, 0.5, 0.9]).unwrap();
        let map = saliency_map(&model, &x, 0, 0).unwrap();
        let (ins, del) = insertion_deletion(&model, &x, 0, &map, 3, BaselineKind::Zeros).unwrap();
        let p = softmax(&model.logits(&x).unwrap()).data()[0];
        assert!(ins.values.iter().all(|&v| (v - p).abs() < 1e-12));
        assert!((ins.auc - p).abs() < 1e-12);
        assert!((del.auc - p).abs() < 1e-12);
    }

    #[test]
    fn curves_start_at_baseline_and_end_at_opposite() {
        let model = linear_model(
            vec![vec![1.0, -2.0, 0.5, 0.3], vec![0.2, 0.1, -0.4, 1.0]],
            vec![0.0, 0.0],
        );
        let x = Tensor::from_vec(vec![0.9, 0.1, 0.6, 0.4]).unwrap();
        let map = saliency_map(&model, &x, 0, 0).unwrap();
        let (ins, del) = insertion_deletion(&model, &x, 0, &map, 4, BaselineKind::Zeros).unwrap();
        let p_x = softmax(&model.logits(&x).unwrap()).data()[0];
        let p_0 = softmax(&model.logits(&Tensor::from_vec(vec![0.0; 4]).unwrap()).unwrap()).data()[0];
        assert!((ins.values[0] - p_0).abs() < 1e-12);
        assert!((ins.values[4] - p_x).abs() < 1e-12);
        assert!((del.values[0] - p_x).abs() < 1e-12);
        assert!((del.values[4] - p_0).abs() < 1e-12);
        assert_eq!(ins.fractions, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        // with a zeros baseline, the revealed and deleted images at equal
        // step counts partition the input's pixels
        let total = ins.values.len();
        assert_eq!(total, del.values.len());
    }

    #[test]
    fn heatmap_bytes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let map = AttributionMap {
            values: Tensor::new(vec![2, 2], vec![0.0, 1.0, -0.5, 0.25]).unwrap(),
            target_class: 0,
            method: "sm".into(),
            sample_id: 0,
        };
        let p1 = dir.path().join("a.pgm");
        let p2 = dir.path().join("b.pgm");
        render_heatmap(&map, &p1).unwrap();
        render_heatmap(&map, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let bytes = fs::read(&p1).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[11..], &[0u8, 255, 128, 64]);
    }

    #[test]
    fn zero_map_renders_black() {
        let dir = tempfile::tempdir().unwrap();
        let map = AttributionMap {
            values: Tensor::zeros(vec![1, 2, 2]),
            target_class: 0,
            method: "sm".into(),
            sample_id: 0,
        };
        let p = dir.path().join("z.pgm");
        render_heatmap(&map, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[11..], &[0u8, 0, 0, 0]);
    }

    #[test]
    fn single_hot_pixel_renders_single_white() {
        let dir = tempfile::tempdir().unwrap();
        let mut values = Tensor::zeros(vec![2, 2]);
        values.data_mut()[3] = 0.7;
        let map = AttributionMap {
            values,
            target_class: 0,
            method: "sm".into(),
            sample_id: 0,
        };
        let p = dir.path().join("h.pgm");
        render_heatmap(&map, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[11..], &[0u8, 0, 0, 255]);
    }
}
