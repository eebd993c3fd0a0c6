//! Property-based checks complementing the unit suites: randomized inputs
//! exploring corners the hand-written cases don't reach.

use std::collections::HashMap;

use compass::attacks::{self, AttackConfig, AttackMethod};
use compass::data::{mutate, LabeledDataset, MutationKind, MutationSpec};
use compass::model::{LayerParams, LayerSpec, Model};
use compass::report::{radar_scores, AxisDirection};
use compass::tape::Tape;
use compass::tensor::Tensor;
use proptest::prelude::*;

fn small_dataset(values: Vec<f64>, labels: Vec<usize>) -> LabeledDataset {
    let inputs = values
        .chunks(4)
        .map(|c| Tensor::new(vec![4], c.to_vec()).unwrap())
        .collect();
    LabeledDataset::new(inputs, labels, vec![4], 3).unwrap()
}

fn small_model(weights: Vec<f64>) -> Model {
    Model::new(
        "prop",
        vec![4],
        3,
        vec![LayerSpec::Dense { input: 4, output: 3 }],
        vec![LayerParams::Dense {
            weight: Tensor::new(vec![3, 4], weights).unwrap(),
            bias: Tensor::from_vec(vec![0.0, 0.0, 0.0]).unwrap(),
        }],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// softmax is a distribution; logit gaps are kept below the point where
    /// the largest probability rounds to exactly 1.0 in f64.
    #[test]
    fn softmax_is_distribution(logits in prop::collection::vec(-15.0f64..15.0, 2..8)) {
        let mut tape = Tape::new();
        let n = logits.len();
        let input = tape.input(vec![n]);
        let out = tape.softmax(input);
        let mut bindings = HashMap::new();
        bindings.insert(input, Tensor::new(vec![n], logits).unwrap());
        let result = tape.evaluate(out, &bindings).unwrap();
        let sum: f64 = result.data().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(result.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    /// dataset save/load roundtrips exactly after f32 quantization.
    #[test]
    fn dataset_roundtrip(
        values in prop::collection::vec(0.0f64..1.0, 16),
        labels in prop::collection::vec(0usize..3, 4),
    ) {
        let ds = small_dataset(values, labels);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prop.ds");
        ds.save(&path).unwrap();
        let back = LabeledDataset::load(&path).unwrap();
        prop_assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.inputs().iter().zip(ds.inputs()) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                prop_assert_eq!(x, y as f32 as f64);
            }
        }
    }

    /// every mutation kind is deterministic under its seed.
    #[test]
    fn mutation_is_deterministic(
        kind_idx in 0usize..8,
        intensity in 0.05f64..0.6,
        seed in any::<u64>(),
        values in prop::collection::vec(0.0f64..1.0, 32),
        labels in prop::collection::vec(0usize..3, 8),
    ) {
        let kinds = [
            MutationKind::LabelError,
            MutationKind::DataMissing,
            MutationKind::DataShuffle,
            MutationKind::DataRepetition,
            MutationKind::NoisePerturb,
            MutationKind::ContrastRatio,
            MutationKind::Brightness,
            MutationKind::RandomCropping,
        ];
        let kind = kinds[kind_idx];
        let intensity = match kind {
            MutationKind::ContrastRatio => intensity + 0.5,
            MutationKind::DataShuffle => 0.0,
            _ => intensity,
        };
        let ds = small_dataset(values, labels);
        let spec = MutationSpec::new(kind, intensity, seed);
        let a = mutate(&ds, &spec).unwrap();
        let b = mutate(&ds, &spec).unwrap();
        prop_assert_eq!(a.labels(), b.labels());
        for (x, y) in a.inputs().iter().zip(b.inputs()) {
            prop_assert_eq!(x.data(), y.data());
        }
    }

    /// adversarial outputs always respect the threat model.
    #[test]
    fn attacks_respect_threat_model(
        weights in prop::collection::vec(-2.0f64..2.0, 12),
        values in prop::collection::vec(0.0f64..1.0, 8),
        labels in prop::collection::vec(0usize..3, 2),
        epsilon in 0.005f64..0.2,
        method_idx in 0usize..7,
        seed in any::<u64>(),
    ) {
        let methods = [
            AttackMethod::Fgsm,
            AttackMethod::IFgsm,
            AttackMethod::MiFgsm,
            AttackMethod::DiFgsm,
            AttackMethod::TiFgsm,
            AttackMethod::SiniFgsm,
            AttackMethod::Pgd,
        ];
        let model = small_model(weights);
        let ds = small_dataset(values, labels);
        let mut config = AttackConfig::new(methods[method_idx]).with_seed(seed);
        config.epsilon = epsilon;
        config.alpha = epsilon / 4.0;
        let batch = attacks::run_attack(&model, &ds, &config).unwrap();
        for i in 0..ds.len() {
            prop_assert!(batch.perturbations()[i].linf_norm() <= epsilon + 1e-9);
            prop_assert!(batch.adversarials()[i]
                .data()
                .iter()
                .all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    /// the per-axis radar winner always scores exactly 5.0.
    #[test]
    fn radar_best_is_five(values in prop::collection::vec(0.01f64..100.0, 2..6)) {
        let models: Vec<String> = (0..values.len()).map(|i| format!("m{i}")).collect();
        for direction in [AxisDirection::HigherBetter, AxisDirection::LowerBetter] {
            let scores =
                radar_scores(&models, &[("axis".into(), direction, values.clone())]).unwrap();
            let top = scores.axes[0]
                .scores
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(top, 5.0);
        }
    }
}
