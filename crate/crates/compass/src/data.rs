//! Labeled dataset container, the on-disk dataset format, and the seeded
//! corruption operators.
//!
//! Every mutation is a pure function of (dataset, spec): per-sample
//! randomness is addressed by the sample's stable id through the
//! counter-based generator, so outcomes do not depend on dataset order or
//! evaluation schedule.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{permutation, CounterRng};
use crate::tensor::{Tensor, TensorError};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("{file} holds {got} bytes, manifest declares {expected}")]
    BlobLength {
        file: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("label {label} out of range for {classes} classes (sample {index})")]
    LabelOutOfRange {
        label: u32,
        classes: usize,
        index: usize,
    },
    #[error("input value {value} outside [0,1] (sample {index})")]
    ValueOutOfRange { value: f64, index: usize },
    #[error("mutation intensity {value} outside legal range {range} for {kind}")]
    BadIntensity {
        kind: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("mutation `{0}` requires a non-empty dataset")]
    EmptyDataset(&'static str),
}

/// Ordered collection of (input, label) pairs with stable per-sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
    ids: Vec<u64>,
    input_shape: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        inputs: Vec<Tensor>,
        labels: Vec<usize>,
        input_shape: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, DataError> {
        let ids = (0..inputs.len() as u64).collect();
        Self::with_ids(inputs, labels, ids, input_shape, class_count)
    }

    pub fn with_ids(
        inputs: Vec<Tensor>,
        labels: Vec<usize>,
        ids: Vec<u64>,
        input_shape: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, DataError> {
        assert_eq!(inputs.len(), labels.len());
        assert_eq!(inputs.len(), ids.len());
        for (index, label) in labels.iter().enumerate() {
            if *label >= class_count {
                return Err(DataError::LabelOutOfRange {
                    label: *label as u32,
                    classes: class_count,
                    index,
                });
            }
        }
        for (index, input) in inputs.iter().enumerate() {
            debug_assert_eq!(input.shape(), input_shape.as_slice());
            if let Some(&v) = input.data().iter().find(|v| **v < 0.0 || **v > 1.0) {
                return Err(DataError::ValueOutOfRange { value: v, index });
            }
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            ids,
            input_shape,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn sample(&self, i: usize) -> (&Tensor, usize, u64) {
        (&self.inputs[i], self.labels[i], self.ids[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tensor, usize)> {
        self.inputs.iter().zip(self.labels.iter().copied())
    }

    /// (input, label) pairs cloned out, the shape gradient helpers want.
    pub fn pairs(&self) -> Vec<(Tensor, usize)> {
        self.inputs
            .iter()
            .cloned()
            .zip(self.labels.iter().copied())
            .collect()
    }

    // ---- serialization ----

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::create_dir_all(path).map_err(|e| io_err(path, e))?;
        let manifest = DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            n: self.len(),
            input_shape: self.input_shape.clone(),
            class_count: self.class_count,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| DataError::CorruptManifest(e.to_string()))?;
        fs::write(path.join("manifest"), text).map_err(|e| io_err(path, e))?;

        let mut data = Vec::with_capacity(4 * self.len() * self.sample_numel());
        for input in &self.inputs {
            for &v in input.data() {
                data.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(path.join("data.bin"), data).map_err(|e| io_err(path, e))?;

        let mut labels = Vec::with_capacity(4 * self.len());
        for &label in &self.labels {
            labels.extend_from_slice(&(label as u32).to_le_bytes());
        }
        fs::write(path.join("labels.bin"), labels).map_err(|e| io_err(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LabeledDataset, DataError> {
        let manifest_path = path.join("manifest");
        let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| DataError::CorruptManifest(e.to_string()))?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(DataError::UnsupportedVersion(manifest.format_version));
        }
        let numel: usize = manifest.input_shape.iter().product();
        let data_path = path.join("data.bin");
        let data = fs::read(&data_path).map_err(|e| io_err(&data_path, e))?;
        if data.len() != 4 * manifest.n * numel {
            return Err(DataError::BlobLength {
                file: "data.bin",
                expected: 4 * manifest.n * numel,
                got: data.len(),
            });
        }
        let labels_path = path.join("labels.bin");
        let label_bytes = fs::read(&labels_path).map_err(|e| io_err(&labels_path, e))?;
        if label_bytes.len() != 4 * manifest.n {
            return Err(DataError::BlobLength {
                file: "labels.bin",
                expected: 4 * manifest.n,
                got: label_bytes.len(),
            });
        }

        let mut inputs = Vec::with_capacity(manifest.n);
        for i in 0..manifest.n {
            let sample: Vec<f64> = data[4 * i * numel..4 * (i + 1) * numel]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            inputs.push(Tensor::new(manifest.input_shape.clone(), sample)?);
        }
        let labels: Vec<usize> = label_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        LabeledDataset::new(inputs, labels, manifest.input_shape, manifest.class_count)
    }

    fn sample_numel(&self) -> usize {
        self.input_shape.iter().product()
    }
}

fn io_err(path: &Path, source: io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    format_version: u32,
    n: usize,
    input_shape: Vec<usize>,
    class_count: usize,
}

/// Corruption operator kinds; intensity semantics are kind-specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationKind {
    LabelError,
    DataMissing,
    DataShuffle,
    DataRepetition,
    NoisePerturb,
    ContrastRatio,
    Brightness,
    RandomCropping,
}

impl MutationKind {
    pub fn name(&self) -> &'static str {
        match self {
            MutationKind::LabelError => "label-error",
            MutationKind::DataMissing => "data-missing",
            MutationKind::DataShuffle => "data-shuffle",
            MutationKind::DataRepetition => "data-repetition",
            MutationKind::NoisePerturb => "noise-perturb",
            MutationKind::ContrastRatio => "contrast-ratio",
            MutationKind::Brightness => "brightness",
            MutationKind::RandomCropping => "random-cropping",
        }
    }

    /// Conventional default intensity for each kind.
    pub fn default_intensity(&self) -> f64 {
        match self {
            MutationKind::LabelError => 0.1,
            MutationKind::DataMissing => 0.1,
            MutationKind::DataShuffle => 0.0,
            MutationKind::DataRepetition => 0.1,
            MutationKind::NoisePerturb => 0.1,
            MutationKind::ContrastRatio => 1.5,
            MutationKind::Brightness => 0.1,
            MutationKind::RandomCropping => 0.2,
        }
    }
}

/// A corruption to apply: kind, kind-specific intensity, and mandatory seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub kind: MutationKind,
    pub intensity: f64,
    pub seed: u64,
}

impl MutationSpec {
    pub fn new(kind: MutationKind, intensity: f64, seed: u64) -> Self {
        MutationSpec {
            kind,
            intensity,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let p = self.intensity;
        let bad = |range: &'static str| DataError::BadIntensity {
            kind: self.kind.name(),
            value: p,
            range,
        };
        match self.kind {
            MutationKind::LabelError | MutationKind::DataMissing => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad("[0,1]"));
                }
            }
            MutationKind::RandomCropping => {
                if !(0.0..1.0).contains(&p) {
                    return Err(bad("[0,1)"));
                }
            }
            MutationKind::DataRepetition => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad("[0,1]"));
                }
            }
            MutationKind::NoisePerturb => {
                if p < 0.0 {
                    return Err(bad("[0,inf)"));
                }
            }
            MutationKind::ContrastRatio => {
                if p < 0.0 {
                    return Err(bad("[0,inf)"));
                }
            }
            MutationKind::Brightness => {
                if !(-1.0..=1.0).contains(&p) {
                    return Err(bad("[-1,1]"));
                }
            }
            MutationKind::DataShuffle => {}
        }
        Ok(())
    }
}

// stream tags inside the mutation keyspace
const STREAM_DATASET: u64 = u64::MAX;

/// Apply a corruption operator. Deterministic in (dataset, spec); all pixel
/// operators clamp into [0,1].
pub fn mutate(dataset: &LabeledDataset, spec: &MutationSpec) -> Result<LabeledDataset, DataError> {
    spec.validate()?;
    let samples_needed = matches!(
        spec.kind,
        MutationKind::DataShuffle | MutationKind::DataRepetition
    );
    if dataset.is_empty() && samples_needed {
        return Err(DataError::EmptyDataset(spec.kind.name()));
    }
    let rng = CounterRng::new(spec.seed);
    match spec.kind {
        MutationKind::LabelError => label_error(dataset, spec.intensity, &rng),
        MutationKind::DataMissing => per_sample_pixels(dataset, |id, input| {
            Ok(data_missing(input, spec.intensity, &rng, id))
        }),
        MutationKind::DataShuffle => shuffle(dataset, &rng),
        MutationKind::DataRepetition => repetition(dataset, spec.intensity, &rng),
        MutationKind::NoisePerturb => per_sample_pixels(dataset, |id, input| {
            let sigma = spec.intensity;
            let mut out = input.clone();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                *v = (*v + sigma * rng.normal_at(id, 1 + i as u64)).clamp(0.0, 1.0);
            }
            Ok(out)
        }),
        MutationKind::ContrastRatio => per_sample_pixels(dataset, |_, input| {
            let c = spec.intensity;
            let mean = input.data().iter().sum::<f64>() / input.numel() as f64;
            Ok(input.map(|v| (mean + c * (v - mean)).clamp(0.0, 1.0)))
        }),
        MutationKind::Brightness => per_sample_pixels(dataset, |_, input| {
            Ok(input.map(|v| (v + spec.intensity).clamp(0.0, 1.0)))
        }),
        MutationKind::RandomCropping => per_sample_pixels(dataset, |id, input| {
            Ok(random_crop(input, spec.intensity, &rng, id))
        }),
    }
}

fn per_sample_pixels(
    dataset: &LabeledDataset,
    f: impl Fn(u64, &Tensor) -> Result<Tensor, DataError>,
) -> Result<LabeledDataset, DataError> {
    let mut inputs = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let (input, _, id) = dataset.sample(i);
        inputs.push(f(id, input)?);
    }
    LabeledDataset::with_ids(
        inputs,
        dataset.labels.clone(),
        dataset.ids.clone(),
        dataset.input_shape.clone(),
        dataset.class_count,
    )
}

fn label_error(
    dataset: &LabeledDataset,
    p: f64,
    rng: &CounterRng,
) -> Result<LabeledDataset, DataError> {
    let classes = dataset.class_count;
    let mut labels = dataset.labels.clone();
    for (i, label) in labels.iter_mut().enumerate() {
        let id = dataset.ids[i];
        if rng.uniform_at(id, 0) <= p {
            // pick uniformly among the other C-1 classes, never the original
            let offset = 1 + rng.index_at(id, 1, classes - 1);
            *label = (*label + offset) % classes;
        }
    }
    LabeledDataset::with_ids(
        dataset.inputs.clone(),
        labels,
        dataset.ids.clone(),
        dataset.input_shape.clone(),
        dataset.class_count,
    )
}

/// Zero out a uniformly placed axis-aligned rectangle covering fraction `p`
/// of the pixels.
fn data_missing(input: &Tensor, p: f64, rng: &CounterRng, id: u64) -> Tensor {
    let [c, h, w] = *input.shape() else {
        // non-spatial inputs: zero a contiguous run of the flat vector
        let n = input.numel();
        let len = ((p * n as f64).ceil() as usize).min(n);
        if len == 0 {
            return input.clone();
        }
        let start = rng.index_at(id, 0, n - len + 1);
        let mut out = input.clone();
        for v in &mut out.data_mut()[start..start + len] {
            *v = 0.0;
        }
        return out;
    };
    let rh = ((p.sqrt() * h as f64).ceil() as usize).clamp(0, h);
    if rh == 0 {
        return input.clone();
    }
    let rw = (((p * (h * w) as f64) / rh as f64).ceil() as usize).clamp(1, w);
    let y0 = rng.index_at(id, 0, h - rh + 1);
    let x0 = rng.index_at(id, 1, w - rw + 1);
    let mut out = input.clone();
    for ch in 0..c {
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                out.data_mut()[(ch * h + y) * w + x] = 0.0;
            }
        }
    }
    out
}

/// Keep a uniformly placed square window of side ceil(sqrt(1-p) * side) per
/// spatial dim at its original offset; zero everything outside it.
fn random_crop(input: &Tensor, p: f64, rng: &CounterRng, id: u64) -> Tensor {
    let [c, h, w] = *input.shape() else {
        return input.clone();
    };
    let keep = (1.0 - p).sqrt();
    let kh = ((keep * h as f64).ceil() as usize).clamp(1, h);
    let kw = ((keep * w as f64).ceil() as usize).clamp(1, w);
    let y0 = rng.index_at(id, 0, h - kh + 1);
    let x0 = rng.index_at(id, 1, w - kw + 1);
    let mut out = Tensor::zeros(input.shape().to_vec());
    for ch in 0..c {
        for y in y0..y0 + kh {
            for x in x0..x0 + kw {
                let i = (ch * h + y) * w + x;
                out.data_mut()[i] = input.data()[i];
            }
        }
    }
    out
}

fn shuffle(dataset: &LabeledDataset, rng: &CounterRng) -> Result<LabeledDataset, DataError> {
    let perm = permutation(rng, STREAM_DATASET, dataset.len());
    let inputs = perm.iter().map(|&i| dataset.inputs[i].clone()).collect();
    let labels = perm.iter().map(|&i| dataset.labels[i]).collect();
    let ids = perm.iter().map(|&i| dataset.ids[i]).collect();
    LabeledDataset::with_ids(
        inputs,
        labels,
        ids,
        dataset.input_shape.clone(),
        dataset.class_count,
    )
}

/// Duplicate ceil(p*n) uniformly chosen samples and append them with fresh
/// ids.
fn repetition(
    dataset: &LabeledDataset,
    p: f64,
    rng: &CounterRng,
) -> Result<LabeledDataset, DataError> {
    let n = dataset.len();
    let extra = (p * n as f64).ceil() as usize;
    let mut inputs = dataset.inputs.clone();
    let mut labels = dataset.labels.clone();
    let mut ids = dataset.ids.clone();
    let mut next_id = ids.iter().copied().max().map_or(0, |m| m + 1);
    for k in 0..extra {
        let pick = rng.index_at(STREAM_DATASET, k as u64, n);
        inputs.push(dataset.inputs[pick].clone());
        labels.push(dataset.labels[pick]);
        ids.push(next_id);
        next_id += 1;
    }
    LabeledDataset::with_ids(
        inputs,
        labels,
        ids,
        dataset.input_shape.clone(),
        dataset.class_count,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> LabeledDataset {
        let inputs = (0..n)
            .map(|i| {
                Tensor::new(
                    vec![1, 4, 4],
                    (0..16).map(|j| ((i * 7 + j) % 10) as f64 / 16.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let labels = (0..n).map(|i| i % 3).collect();
        LabeledDataset::new(inputs, labels, vec![1, 4, 4], 3).unwrap()
    }

    #[test]
    fn roundtrip_is_identity_after_f32() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(5);
        let path = dir.path().join("toy.ds");
        ds.save(&path).unwrap();
        let loaded = LabeledDataset::load(&path).unwrap();
        assert_eq!(loaded.labels(), ds.labels());
        // toy values are exact in f32
        assert_eq!(loaded.inputs(), ds.inputs());
    }

    #[test]
    fn out_of_range_label_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(3);
        let path = dir.path().join("toy.ds");
        ds.save(&path).unwrap();
        let mut labels = fs::read(path.join("labels.bin")).unwrap();
        labels[0..4].copy_from_slice(&3u32.to_le_bytes());
        fs::write(path.join("labels.bin"), labels).unwrap();
        assert!(matches!(
            LabeledDataset::load(&path),
            Err(DataError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn empty_dataset_loads() {
        let dir = tempfile::tempdir().unwrap();
        let ds = LabeledDataset::new(vec![], vec![], vec![1, 4, 4], 3).unwrap();
        let path = dir.path().join("empty.ds");
        ds.save(&path).unwrap();
        assert_eq!(LabeledDataset::load(&path).unwrap().len(), 0);
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = toy(4);
        let spec = MutationSpec::new(MutationKind::NoisePerturb, 0.0, 9);
        assert_eq!(mutate(&ds, &spec).unwrap().inputs(), ds.inputs());
    }

    #[test]
    fn brightness_clamps() {
        let ds = LabeledDataset::new(
            vec![Tensor::new(vec![1, 1, 1], vec![0.9]).unwrap()],
            vec![0],
            vec![1, 1, 1],
            2,
        )
        .unwrap();
        let spec = MutationSpec::new(MutationKind::Brightness, 0.2, 1);
        let out = mutate(&ds, &spec).unwrap();
        assert_eq!(out.inputs()[0].data(), &[1.0]);
    }

    #[test]
    fn binary_label_error_forces_flip() {
        let inputs: Vec<Tensor> = (0..3)
            .map(|_| Tensor::new(vec![1, 1, 1], vec![0.5]).unwrap())
            .collect();
        let ds = LabeledDataset::new(inputs, vec![0, 1, 0], vec![1, 1, 1], 2).unwrap();
        let spec = MutationSpec::new(MutationKind::LabelError, 1.0, 7);
        let out = mutate(&ds, &spec).unwrap();
        assert_eq!(out.labels(), &[1, 0, 1]);
    }

    #[test]
    fn label_error_never_maps_to_itself() {
        let ds = toy(30);
        for seed in 0..20 {
            let spec = MutationSpec::new(MutationKind::LabelError, 1.0, seed);
            let out = mutate(&ds, &spec).unwrap();
            for (a, b) in ds.labels().iter().zip(out.labels()) {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn shuffle_preserves_multiset_and_sorting_by_id_restores() {
        let ds = toy(12);
        let spec = MutationSpec::new(MutationKind::DataShuffle, 0.0, 3);
        let out = mutate(&ds, &spec).unwrap();
        assert_ne!(out.ids(), ds.ids()); // permutation actually moved something
        let mut order: Vec<usize> = (0..out.len()).collect();
        order.sort_by_key(|&i| out.ids()[i]);
        for (rank, &i) in order.iter().enumerate() {
            assert_eq!(out.inputs()[i], ds.inputs()[rank]);
            assert_eq!(out.labels()[i], ds.labels()[rank]);
        }
    }

    #[test]
    fn mutate_is_deterministic() {
        let ds = toy(10);
        for kind in [
            MutationKind::LabelError,
            MutationKind::DataMissing,
            MutationKind::DataShuffle,
            MutationKind::DataRepetition,
            MutationKind::NoisePerturb,
            MutationKind::ContrastRatio,
            MutationKind::Brightness,
            MutationKind::RandomCropping,
        ] {
            let spec = MutationSpec::new(kind, kind.default_intensity(), 11);
            let a = mutate(&ds, &spec).unwrap();
            let b = mutate(&ds, &spec).unwrap();
            assert_eq!(a, b, "{kind:?}");
        }
    }

    #[test]
    fn per_sample_corruption_follows_ids_not_order() {
        let ds = toy(8);
        let noise = MutationSpec::new(MutationKind::NoisePerturb, 0.2, 5);
        let direct = mutate(&ds, &noise).unwrap();
        // shuffle first, then corrupt: each id must receive the same pixels
        let shuffled = mutate(&ds, &MutationSpec::new(MutationKind::DataShuffle, 0.0, 1)).unwrap();
        let corrupted = mutate(&shuffled, &noise).unwrap();
        for i in 0..corrupted.len() {
            let id = corrupted.ids()[i];
            let j = direct.ids().iter().position(|&d| d == id).unwrap();
            assert_eq!(corrupted.inputs()[i], direct.inputs()[j]);
        }
    }

    #[test]
    fn mutated_pixels_stay_in_unit_range() {
        let ds = toy(6);
        for kind in [
            MutationKind::DataMissing,
            MutationKind::NoisePerturb,
            MutationKind::ContrastRatio,
            MutationKind::Brightness,
            MutationKind::RandomCropping,
        ] {
            for seed in 0..5 {
                let spec = MutationSpec::new(kind, kind.default_intensity(), seed);
                let out = mutate(&ds, &spec).unwrap();
                for input in out.inputs() {
                    assert!(input.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }
        }
    }

    #[test]
    fn repetition_appends_ceil_p_n() {
        let ds = toy(10);
        let spec = MutationSpec::new(MutationKind::DataRepetition, 0.25, 2);
        let out = mutate(&ds, &spec).unwrap();
        assert_eq!(out.len(), 13);
        // appended ids are fresh
        assert_eq!(&out.ids()[10..], &[10, 11, 12]);
    }

    #[test]
    fn invalid_intensity_rejected() {
        let ds = toy(3);
        let spec = MutationSpec::new(MutationKind::LabelError, 1.5, 0);
        assert!(matches!(
            mutate(&ds, &spec),
            Err(DataError::BadIntensity { .. })
        ));
        let spec = MutationSpec::new(MutationKind::Brightness, -2.0, 0);
        assert!(matches!(
            mutate(&ds, &spec),
            Err(DataError::BadIntensity { .. })
        ));
    }
}
