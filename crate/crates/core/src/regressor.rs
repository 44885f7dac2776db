//! Class-mean regression.
//!
//! A neural regressor is trained on many-shot classes to map a single sample
//! to its class mean; few-shot class means are then estimated by averaging
//! the regressor's outputs over the available shots. Few-shot samples never
//! influence the regressor parameters.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::data::{ClassId, LabeledSample, UnbalancedDataset};
use crate::numerics::{
    load_model, mlp_backward, mlp_forward, save_model, sgd_step, Activation, MlpModel, ModelGrads,
    ModelRole, SgdConfig, SgdState,
};
use crate::{Error, Result};

/// Where a class-mean estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanSource {
    Empirical,
    Regressed,
}

/// Per-class mean estimates covering every dataset class exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeanTable {
    pub entries: BTreeMap<ClassId, (Vec<f64>, MeanSource)>,
}

impl ClassMeanTable {
    pub fn mean(&self, class: ClassId) -> Result<&[f64]> {
        self.entries
            .get(&class)
            .map(|(m, _)| m.as_slice())
            .ok_or_else(|| Error::Lookup(format!("class {class} not in mean table")))
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.entries.keys().copied().collect()
    }
}

/// The trained mean regressor; input and output dimension both equal the
/// feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    net: MlpModel,
}

impl RegressorModel {
    pub fn new(net: MlpModel) -> Result<Self> {
        if net.input_dim() != net.output_dim() {
            return Err(Error::InvalidInput(
                "regressor input and output dimensions must match".into(),
            ));
        }
        Ok(RegressorModel { net })
    }

    /// Regressor that returns its input unchanged; handy as a stub.
    pub fn identity(dim: usize) -> Self {
        let mut net = MlpModel::zeros(&[(dim, dim, Activation::Identity)]).unwrap();
        for i in 0..dim {
            net.layers_mut()[0].weight.set(i, i, 1.0);
        }
        RegressorModel { net }
    }

    pub fn net(&self) -> &MlpModel {
        &self.net
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(path, &self.net, ModelRole::Regressor)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, role) = load_model(path)?;
        if role != ModelRole::Regressor {
            return Err(Error::Format("model file is not a regressor".into()));
        }
        RegressorModel::new(net)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorConfig {
    /// Hidden width; the architecture is `d -> hidden -> d`.
    pub hidden: usize,
    pub leaky_slope: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
}

impl RegressorConfig {
    pub fn for_dim(dim: usize) -> Self {
        RegressorConfig {
            hidden: 2 * dim,
            leaky_slope: 0.1,
            iterations: 3000,
            batch_size: 32,
            optimizer: SgdConfig {
                learning_rate: 0.01,
                momentum: 0.9,
                weight_decay: 0.0,
                milestones: vec![1500, 2400],
                factor: 0.2,
            },
        }
    }
}

/// Coordinate-wise arithmetic mean of a non-empty single-class sample list.
pub fn empirical_class_mean(samples: &[LabeledSample]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "cannot average an empty sample list".into(),
        ));
    }
    let label = samples[0].label;
    if samples.iter().any(|s| s.label != label) {
        return Err(Error::InvalidInput(
            "samples from multiple classes passed to class-mean".into(),
        ));
    }
    let dim = samples[0].features.len();
    if samples.iter().any(|s| s.features.len() != dim) {
        return Err(Error::InvalidInput("mixed sample dimensions".into()));
    }
    Ok(mean_of_features(samples.iter().map(|s| &s.features), dim))
}

pub(crate) fn mean_of_features<'a, I>(features: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a Vec<f64>>,
{
    let mut mean = vec![0.0; dim];
    let mut count = 0usize;
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
        count += 1;
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    mean
}

/// Trains the regressor with minibatch SGD on (sample -> class mean) pairs
/// drawn exclusively from many-shot classes. Returns the model and the
/// per-iteration loss trace.
pub fn train_regressor<R: Rng>(
    dataset: &UnbalancedDataset,
    config: &RegressorConfig,
    rng: &mut R,
) -> Result<(RegressorModel, Vec<f64>)> {
    let many = dataset.many_shot_ids();
    if many.len() < 2 {
        return Err(Error::TrainingSetup(format!(
            "regressor needs at least 2 many-shot classes, found {}",
            many.len()
        )));
    }
    let dim = dataset.dim();
    // Targets: the mean over ALL samples of the class.
    let mut pool: Vec<(&Vec<f64>, usize)> = Vec::new();
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(many.len());
    for (ti, &class) in many.iter().enumerate() {
        let samples = dataset.samples_of(class)?;
        targets.push(mean_of_features(samples.iter(), dim));
        for s in samples {
            pool.push((s, ti));
        }
    }

    let mut net = MlpModel::init(
        &[
            (dim, config.hidden, Activation::LeakyReLU(config.leaky_slope)),
            (config.hidden, dim, Activation::Identity),
        ],
        rng,
    )?;
    let mut state = SgdState::new(config.optimizer.clone(), &net)?;
    let mut losses = Vec::with_capacity(config.iterations);
    let batch = config.batch_size.max(1);

    // Loss is mean squared error per coordinate, averaged over the batch.
    let norm = (batch * dim) as f64;
    for it in 0..config.iterations {
        let mut grads = ModelGrads::zeros_like(&net);
        let mut loss = 0.0;
        for _ in 0..batch {
            let (x, ti) = pool[rng.gen_range(0..pool.len())];
            let target = &targets[ti];
            let (out, tape) = mlp_forward(&net, x)?;
            let mut gout = vec![0.0; dim];
            for ((g, o), t) in gout.iter_mut().zip(&out).zip(target) {
                let err = o - t;
                loss += err * err;
                *g = 2.0 * err / norm;
            }
            let (g, _) = mlp_backward(&net, &tape, &gout)?;
            grads.accumulate(&g);
        }
        sgd_step(&mut state, &mut net, &grads, it)?;
        losses.push(loss / norm);
    }
    Ok((RegressorModel::new(net)?, losses))
}

/// Mean over per-sample regressor outputs: `(1/k) * sum f(x_j)`.
pub fn predict_class_mean(model: &RegressorModel, samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "predict_class_mean needs at least one sample".into(),
        ));
    }
    let dim = model.dim();
    let mut mean = vec![0.0; dim];
    for s in samples {
        let out = model.net.infer(s)?;
        for (m, v) in mean.iter_mut().zip(&out) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= samples.len() as f64;
    }
    Ok(mean)
}

/// Builds the per-class mean table: many-shot entries are direct averages
/// over all class samples; few-shot entries come from the regressor when one
/// is supplied and fall back to the empirical few-shot mean otherwise.
pub fn build_mean_table(
    dataset: &UnbalancedDataset,
    model: Option<&RegressorModel>,
) -> Result<ClassMeanTable> {
    let dim = dataset.dim();
    let mut entries = BTreeMap::new();
    for class in dataset.many_shot_ids() {
        let samples = dataset.samples_of(class)?;
        entries.insert(
            class,
            (mean_of_features(samples.iter(), dim), MeanSource::Empirical),
        );
    }
    for class in dataset.few_shot_ids() {
        let samples = dataset.samples_of(class)?;
        let entry = match model {
            Some(m) => (predict_class_mean(m, samples)?, MeanSource::Regressed),
            None => (mean_of_features(samples.iter(), dim), MeanSource::Empirical),
        };
        entries.insert(class, entry);
    }
    Ok(ClassMeanTable { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, DeviationSpec, FewShotSizing, SyntheticSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labeled(label: ClassId, features: &[f64]) -> LabeledSample {
        LabeledSample {
            features: features.to_vec(),
            label,
        }
    }

    #[test]
    fn two_point_midpoint() {
        let mean =
            empirical_class_mean(&[labeled(0, &[1.0, 3.0]), labeled(0, &[3.0, 1.0])]).unwrap();
        assert_eq!(mean, vec![2.0, 2.0]);
    }

    #[test]
    fn single_sample_is_its_own_mean() {
        let mean = empirical_class_mean(&[labeled(4, &[0.5, -0.5])]).unwrap();
        assert_eq!(mean, vec![0.5, -0.5]);
    }

    #[test]
    fn empty_or_mixed_labels_rejected() {
        assert!(empirical_class_mean(&[]).is_err());
        assert!(
            empirical_class_mean(&[labeled(0, &[1.0]), labeled(1, &[2.0])]).is_err()
        );
    }

    /// Compensated (Kahan) summation as an independent averaging oracle.
    #[test]
    fn mean_matches_compensated_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<LabeledSample> = (0..100)
            .map(|_| labeled(0, &[rng.gen_range(-1e6..1e6), rng.gen_range(-1.0..1.0)]))
            .collect();
        let mean = empirical_class_mean(&samples).unwrap();
        for d in 0..2 {
            let mut sum = 0.0f64;
            let mut c = 0.0f64;
            for s in &samples {
                let y = s.features[d] - c;
                let t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            let expected = sum / samples.len() as f64;
            assert!((mean[d] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    fn degenerate_spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            dim: 8,
            superclasses: 3,
            classes_per_superclass: 3,
            s_sup: 5.0,
            s_class: 1.0,
            deviation: DeviationSpec::Shared(0.0),
            many_shot_classes: 9,
            many_shots: 30,
            few_shots: FewShotSizing::Fixed(1),
            seed,
        }
    }

    fn quick_config(dim: usize) -> RegressorConfig {
        let mut cfg = RegressorConfig::for_dim(dim);
        cfg.iterations = 1200;
        cfg.optimizer.milestones = vec![600, 960];
        cfg
    }

    #[test]
    fn training_shrinks_error_on_degenerate_data() {
        let (ds, _) = make_synthetic(&degenerate_spec(1)).unwrap();
        let cfg = quick_config(ds.dim());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, losses) = train_regressor(&ds, &cfg, &mut rng).unwrap();
        let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = losses[losses.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(
            tail * 10.0 <= head,
            "loss did not drop 10x: start {head}, end {tail}"
        );
    }

    #[test]
    fn loss_moving_average_is_nonincreasing() {
        let (ds, _) = make_synthetic(&degenerate_spec(2)).unwrap();
        let cfg = quick_config(ds.dim());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, losses) = train_regressor(&ds, &cfg, &mut rng).unwrap();
        let window = losses.len() / 6;
        let means: Vec<f64> = losses
            .chunks(window)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        for pair in means.windows(2) {
            assert!(
                pair[1] <= pair[0] * 1.10,
                "moving average increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    /// Perturbing few-shot features must leave the trained parameters
    /// bit-identical: only many-shot classes feed the regressor.
    #[test]
    fn few_shot_samples_never_touch_training() {
        let spec = SyntheticSpec {
            deviation: DeviationSpec::Shared(0.3),
            ..degenerate_spec(7)
        };
        let spec = SyntheticSpec {
            many_shot_classes: 7,
            ..spec
        };
        let (ds, _) = make_synthetic(&spec).unwrap();
        let cfg = quick_config(ds.dim());

        let mut rng_a = ChaCha8Rng::seed_from_u64(11);
        let (model_a, _) = train_regressor(&ds, &cfg, &mut rng_a).unwrap();

        // Rebuild the dataset with few-shot features shifted.
        let mut roles = BTreeMap::new();
        let mut samples = BTreeMap::new();
        for class in ds.class_ids() {
            roles.insert(class, ds.role(class).unwrap());
            let mut group: Vec<Vec<f64>> = ds.samples_of(class).unwrap().to_vec();
            if ds.few_shot_ids().contains(&class) {
                for s in &mut group {
                    for v in s.iter_mut() {
                        *v += 1000.0;
                    }
                }
            }
            samples.insert(class, group);
        }
        let perturbed = UnbalancedDataset::new(ds.dim(), roles, samples).unwrap();
        let mut rng_b = ChaCha8Rng::seed_from_u64(11);
        let (model_b, _) = train_regressor(&perturbed, &cfg, &mut rng_b).unwrap();
        assert_eq!(model_a, model_b);
    }

    #[test]
    fn too_few_many_shot_classes_rejected() {
        let spec = SyntheticSpec {
            many_shot_classes: 1,
            ..degenerate_spec(3)
        };
        let (ds, _) = make_synthetic(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            train_regressor(&ds, &RegressorConfig::for_dim(ds.dim()), &mut rng),
            Err(Error::TrainingSetup(_))
        ));
    }

    #[test]
    fn single_sample_prediction_is_f_of_x() {
        let model = RegressorModel::identity(3);
        let out = predict_class_mean(&model, &[vec![1.0, -2.0, 0.5]]).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn identity_stub_averages_to_empirical_mean() {
        let model = RegressorModel::identity(2);
        let out = predict_class_mean(&model, &[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(out, vec![2.0, 2.0]);
    }

    #[test]
    fn five_shot_prediction_is_average_of_single_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net = MlpModel::init(
            &[
                (4, 8, Activation::LeakyReLU(0.1)),
                (8, 4, Activation::Identity),
            ],
            &mut rng,
        )
        .unwrap();
        let model = RegressorModel::new(net).unwrap();
        let shots: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let joint = predict_class_mean(&model, &shots).unwrap();
        let mut expect = vec![0.0; 4];
        for s in &shots {
            let one = predict_class_mean(&model, std::slice::from_ref(s)).unwrap();
            for (e, v) in expect.iter_mut().zip(&one) {
                *e += v / 5.0;
            }
        }
        for (a, b) in joint.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_table_covers_every_class_once() {
        let (ds, _) = make_synthetic(&degenerate_spec(9)).unwrap();
        let table = build_mean_table(&ds, None).unwrap();
        let mut ids = table.class_ids();
        ids.sort_unstable();
        let expected: Vec<ClassId> = ds.class_ids().collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn all_many_shot_table_is_fully_empirical() {
        let spec = SyntheticSpec {
            many_shot_classes: 9,
            ..degenerate_spec(13)
        };
        let (ds, _) = make_synthetic(&spec).unwrap();
        let model = RegressorModel::identity(ds.dim());
        let table = build_mean_table(&ds, Some(&model)).unwrap();
        assert!(table
            .entries
            .values()
            .all(|(_, src)| *src == MeanSource::Empirical));
    }

    #[test]
    fn zero_deviation_identity_stub_recovers_true_means() {
        let (ds, truth) = make_synthetic(&degenerate_spec(4)).unwrap();
        let model = RegressorModel::identity(ds.dim());
        let table = build_mean_table(&ds, Some(&model)).unwrap();
        for class in ds.few_shot_ids() {
            let (mean, src) = &table.entries[&class];
            assert_eq!(*src, MeanSource::Regressed);
            for (a, b) in mean.iter().zip(&truth.class_means[&class]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regressor_round_trips_through_disk() {
        let model = RegressorModel::identity(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.bin");
        model.save(&path).unwrap();
        let loaded = RegressorModel::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    /// Regressor advantage on the benchmark's noise regime: where classes
    /// inside a superclass overlap, the regressed mean of a held-out class
    /// beats the raw 1-shot sample as a mean estimate for most classes.
    #[test]
    fn regressed_means_beat_raw_few_shot_samples() {
        let mut wins = 0usize;
        let mut total = 0usize;
        for seed in 0..2u64 {
            let spec = SyntheticSpec {
                dim: 16,
                superclasses: 8,
                classes_per_superclass: 5,
                s_sup: 2.0,
                s_class: 1.0,
                deviation: DeviationSpec::Shared(3.0),
                many_shot_classes: 30,
                many_shots: 200,
                few_shots: FewShotSizing::Fixed(1),
                seed: 500 + seed,
            };
            let (ds, truth) = make_synthetic(&spec).unwrap();
            let mut cfg = RegressorConfig::for_dim(ds.dim());
            cfg.iterations = 2000;
            cfg.optimizer.milestones = vec![1000, 1600];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (model, _) = train_regressor(&ds, &cfg, &mut rng).unwrap();
            for class in ds.few_shot_ids() {
                let shot = &ds.samples_of(class).unwrap()[0];
                let truth_mean = &truth.class_means[&class];
                let predicted = predict_class_mean(&model, std::slice::from_ref(shot)).unwrap();
                let d_pred: f64 = predicted
                    .iter()
                    .zip(truth_mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let d_raw: f64 = shot
                    .iter()
                    .zip(truth_mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                total += 1;
                if d_pred < d_raw {
                    wins += 1;
                }
            }
        }
        assert!(
            wins as f64 >= 0.6 * total as f64,
            "regressor beat raw shots on only {wins}/{total} classes"
        );
    }
}
