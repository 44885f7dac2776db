//! End-to-end experiment harness: dataset -> regressor -> mean table ->
//! superclass tree -> per-method meta-training -> fixed-episode battery ->
//! metrics files. Every stage draws from a seed-derived RNG stream, so a
//! `(config, seed)` pair determines every output byte.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{KnnTransferStats, MaskedStats, NeighborTransfer, PrototypeClassifier};
use crate::config::{DataSource, ExperimentConfig, FewShotsSetting, Method};
use crate::data::{
    load_embeddings, make_synthetic_with_eval, sample_episode, sample_eval_episode, ClassId,
    DeviationSpec, Episode, FewShotSizing, GroundTruth, SyntheticSpec, UnbalancedDataset,
};
use crate::hierarchy::{
    balance_assign, cluster_superclasses, nearest_assign, superclass_stats, SuperclassTree,
};
use crate::metagen::{
    augment, fit_classifier_samples, meta_test, meta_train, score, ClassifierModel, GeneratorArch,
    GeneratorModel, InnerFitConfig, MetaTestConfig, MetaTrainConfig, StatsProvider,
    TreeAssignmentStats, TreeLookupStats,
};
use crate::numerics::SgdConfig;
use crate::projection::project_2d;
use crate::regressor::{
    build_mean_table, train_regressor, ClassMeanTable, RegressorConfig, RegressorModel,
};
use crate::report::{emit_report, MetricsReport, MetricsRow};
use crate::{Error, Result};

// RNG stream domains.
const DOM_DATASET: u64 = 1;
const DOM_DEVIATIONS: u64 = 2;
const DOM_REGRESSOR: u64 = 3;
const DOM_TREE: u64 = 4;
const DOM_META_TRAIN: u64 = 5;
const DOM_BATTERY: u64 = 6;
const DOM_EVAL: u64 = 7;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Independent deterministic stream for a (seed, purpose, ...) tuple.
fn rng_for(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    for &t in tags {
        state = splitmix64(state ^ t.wrapping_mul(0x9e3779b97f4a7c15));
    }
    ChaCha8Rng::seed_from_u64(state)
}

/// Everything the per-method arms share for one seed.
pub struct SeedArtifacts {
    pub dataset: UnbalancedDataset,
    /// Fresh per-class samples reserved for battery queries (synthetic only).
    pub eval_pool: Option<BTreeMap<ClassId, Vec<Vec<f64>>>>,
    pub truth: Option<GroundTruth>,
    pub regressor: Option<RegressorModel>,
    pub table: ClassMeanTable,
    pub tree: SuperclassTree,
}

type EvalPool = BTreeMap<ClassId, Vec<Vec<f64>>>;

/// Builds the dataset for one seed (synthetic geometry or embedding files).
pub fn build_dataset(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(UnbalancedDataset, Option<EvalPool>, Option<GroundTruth>)> {
    match &config.data {
        DataSource::Synthetic(s) => {
            // Per-superclass deviation jitter, resolved deterministically.
            let mut dev_rng = rng_for(seed, &[DOM_DEVIATIONS]);
            let deviations: Vec<f64> = (0..s.superclasses)
                .map(|_| s.deviation * (1.0 + s.deviation_spread * dev_rng.gen_range(-1.0..1.0)))
                .collect();
            let spec = SyntheticSpec {
                dim: s.dim,
                superclasses: s.superclasses,
                classes_per_superclass: s.classes_per_superclass,
                s_sup: s.s_sup,
                s_class: s.s_class,
                deviation: DeviationSpec::PerSuperclass(deviations),
                many_shot_classes: s.many_shot_classes,
                many_shots: s.many_shots,
                few_shots: match s.few_shots {
                    FewShotsSetting::Fixed(k) => FewShotSizing::Fixed(k),
                    FewShotsSetting::Pareto { alpha, min, max } => {
                        FewShotSizing::Pareto { alpha, min, max }
                    }
                },
                seed: splitmix64(seed ^ DOM_DATASET),
            };
            let (ds, pool, truth) = make_synthetic_with_eval(&spec, config.meta_test.eval_shots)?;
            let pool = if config.meta_test.eval_shots > 0 {
                Some(pool)
            } else {
                None
            };
            Ok((ds, pool, Some(truth)))
        }
        DataSource::Csv { embeddings, splits } => {
            let ds = load_embeddings(Path::new(embeddings), Path::new(splits))?;
            Ok((ds, None, None))
        }
    }
}

/// Clusters the mean table into a superclass tree, honoring the balanced
/// and base-classes-only flags. With `base_only`, few-shot classes are
/// attached to the nearest superclass after base-only statistics are fixed.
pub fn build_tree<R: Rng>(
    table: &ClassMeanTable,
    dataset: &UnbalancedDataset,
    n_sup: usize,
    balanced: bool,
    base_only: bool,
    rng: &mut R,
) -> Result<SuperclassTree> {
    let cluster_table = if base_only {
        ClassMeanTable {
            entries: table
                .entries
                .iter()
                .filter(|(c, _)| dataset.role(**c) == Some(crate::data::ClassRole::ManyShot))
                .map(|(c, e)| (*c, e.clone()))
                .collect(),
        }
    } else {
        table.clone()
    };
    if cluster_table.entries.len() < n_sup {
        return Err(Error::InvalidInput(format!(
            "cannot form {n_sup} superclasses from {} classes",
            cluster_table.entries.len()
        )));
    }
    let centers = cluster_superclasses(&cluster_table, n_sup, rng)?;
    let assignment = if balanced {
        balance_assign(&cluster_table, &centers)?
    } else {
        nearest_assign(&cluster_table, &centers)?
    };
    let mut tree = superclass_stats(&assignment, n_sup, dataset)?;
    if base_only {
        for class in dataset.few_shot_ids() {
            let mean = table.mean(class)?;
            let sup = tree.nearest_superclass(mean);
            tree.assignment.insert(class, sup);
            tree.superclasses[sup].members.push(class);
        }
    }
    Ok(tree)
}

/// Stages 1 and 2 of the pipeline, shared by every method and shot count.
pub fn prepare_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedArtifacts> {
    let (dataset, eval_pool, truth) = build_dataset(config, seed)?;
    let regressor = if config.regressor.enabled {
        let mut cfg = RegressorConfig::for_dim(dataset.dim());
        if config.regressor.hidden > 0 {
            cfg.hidden = config.regressor.hidden;
        }
        cfg.iterations = config.regressor.iterations;
        cfg.batch_size = config.regressor.batch_size;
        cfg.optimizer.learning_rate = config.regressor.learning_rate;
        cfg.optimizer.momentum = config.optimizer.momentum;
        cfg.optimizer.factor = config.optimizer.factor;
        cfg.optimizer.milestones = vec![
            config.regressor.iterations / 2,
            config.regressor.iterations * 4 / 5,
        ];
        let mut rng = rng_for(seed, &[DOM_REGRESSOR]);
        let (model, _) = train_regressor(&dataset, &cfg, &mut rng)?;
        Some(model)
    } else {
        None
    };
    let table = build_mean_table(&dataset, regressor.as_ref())?;
    let mut tree_rng = rng_for(seed, &[DOM_TREE]);
    let tree = build_tree(
        &table,
        &dataset,
        config.n_sup(),
        config.tree.balanced,
        config.tree.base_only,
        &mut tree_rng,
    )?;
    Ok(SeedArtifacts {
        dataset,
        eval_pool,
        truth,
        regressor,
        table,
        tree,
    })
}

fn meta_train_config(config: &ExperimentConfig, n: usize) -> MetaTrainConfig {
    MetaTrainConfig {
        n,
        n_aug: config.meta_train.n_aug,
        m_way: config.meta_train.m_way,
        query_per_class: config.meta_train.query_per_class,
        inner_steps: config.meta_train.inner_steps,
        inner_lr: config.meta_train.inner_lr,
        outer: SgdConfig {
            learning_rate: config.optimizer.learning_rate,
            momentum: config.optimizer.momentum,
            weight_decay: config.optimizer.weight_decay,
            milestones: config.resolved_milestones(),
            factor: config.optimizer.factor,
        },
        meta_iterations: config.meta_train.meta_iterations,
        first_order: config.meta_train.first_order,
    }
}

fn generator_arch(config: &ExperimentConfig, dim: usize) -> GeneratorArch {
    let mut arch = GeneratorArch::for_dim(dim);
    arch.noise_dim = config.generator.noise_dim;
    if config.generator.hidden > 0 {
        arch.hidden = config.generator.hidden;
    }
    arch
}

/// Trains the generator a method needs (if any) for one (method, n, seed).
pub fn train_method_generator(
    config: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    method: Method,
    n: usize,
    seed: u64,
) -> Result<Option<GeneratorModel>> {
    if !method.uses_generator() {
        return Ok(None);
    }
    let dim = artifacts.dataset.dim();
    let mt = meta_train_config(config, n);
    let mut rng = rng_for(seed, &[DOM_META_TRAIN, n as u64, method.index()]);
    let init = GeneratorModel::init(dim, &generator_arch(config, dim), &mut rng)?;
    let transfer;
    let provider: Box<dyn StatsProvider> = match method {
        Method::Ours => Box::new(TreeAssignmentStats {
            tree: &artifacts.tree,
        }),
        Method::Hallucination => Box::new(MaskedStats { dim }),
        Method::KnnTransfer => {
            transfer = NeighborTransfer::new(
                &artifacts.table,
                &artifacts.dataset,
                config.generator.knn_k,
            )?;
            Box::new(KnnTransferStats {
                transfer: &transfer,
            })
        }
        _ => unreachable!(),
    };
    let (gen, _) = meta_train(&artifacts.dataset, provider.as_ref(), init, &mt, &mut rng)?;
    Ok(Some(gen))
}

/// Scores one method over the fixed battery. Episodes are shared across
/// methods (same stream) so comparisons use common tasks.
pub fn evaluate_method(
    config: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    method: Method,
    generator: Option<&GeneratorModel>,
    n: usize,
    seed: u64,
) -> Result<(f64, usize)> {
    let test_cfg = MetaTestConfig {
        n_aug: config.meta_train.n_aug,
        fit: InnerFitConfig {
            steps: config.meta_test.inner_steps,
            optimizer: SgdConfig {
                learning_rate: config.meta_test.inner_lr,
                momentum: config.meta_test.momentum,
                weight_decay: 0.0,
                milestones: Vec::new(),
                factor: config.optimizer.factor,
            },
        },
    };
    let transfer = if method == Method::KnnTransfer {
        Some(NeighborTransfer::new(
            &artifacts.table,
            &artifacts.dataset,
            config.generator.knn_k,
        )?)
    } else {
        None
    };

    // With an evaluation pool, the battery runs over novel (few-shot)
    // classes the generator never meta-trained on; queries come from the
    // pool. Otherwise it falls back to held-out queries from many-shot
    // classes, which measures recall rather than transfer.
    let novel_classes = artifacts.dataset.few_shot_ids();
    let mut correct_weighted = 0.0;
    let mut total_queries = 0usize;
    for ep in 0..config.meta_test.episodes {
        let mut ep_rng = rng_for(seed, &[DOM_BATTERY, n as u64, ep as u64]);
        let episode = match &artifacts.eval_pool {
            Some(pool) => sample_eval_episode(
                &artifacts.dataset,
                pool,
                &novel_classes,
                n,
                config.meta_train.m_way,
                config.meta_train.query_per_class,
                &mut ep_rng,
            )?,
            None => sample_episode(
                &artifacts.dataset,
                n,
                config.meta_train.m_way,
                config.meta_train.query_per_class,
                &mut ep_rng,
            )?,
        };
        let mut eval_rng = rng_for(seed, &[DOM_EVAL, n as u64, ep as u64, method.index()]);
        let report = evaluate_episode(
            artifacts,
            method,
            generator,
            transfer.as_ref(),
            &episode,
            &test_cfg,
            &mut eval_rng,
        )?;
        correct_weighted += report.0 * report.1 as f64;
        total_queries += report.1;
    }
    Ok((correct_weighted / total_queries as f64, total_queries))
}

#[allow(clippy::too_many_arguments)]
fn evaluate_episode(
    artifacts: &SeedArtifacts,
    method: Method,
    generator: Option<&GeneratorModel>,
    transfer: Option<&NeighborTransfer>,
    episode: &Episode,
    test_cfg: &MetaTestConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    match method {
        Method::Ours => {
            let provider = TreeLookupStats {
                tree: &artifacts.tree,
                regressor: artifacts.regressor.as_ref(),
            };
            let gen = generator.ok_or_else(|| {
                Error::TrainingSetup("ours requires a trained generator".into())
            })?;
            let report = meta_test(gen, &episode.support, &episode.query, &provider, test_cfg, rng)?;
            Ok((report.accuracy, report.queries))
        }
        Method::Hallucination => {
            let provider = MaskedStats {
                dim: artifacts.dataset.dim(),
            };
            let gen = generator.ok_or_else(|| {
                Error::TrainingSetup("hallucination requires a trained generator".into())
            })?;
            let report = meta_test(gen, &episode.support, &episode.query, &provider, test_cfg, rng)?;
            Ok((report.accuracy, report.queries))
        }
        Method::KnnTransfer => {
            let provider = KnnTransferStats {
                transfer: transfer.expect("transfer built for knn method"),
            };
            let gen = generator.ok_or_else(|| {
                Error::TrainingSetup("knn_transfer requires a trained generator".into())
            })?;
            let report = meta_test(gen, &episode.support, &episode.query, &provider, test_cfg, rng)?;
            Ok((report.accuracy, report.queries))
        }
        Method::Prototypical => {
            let clf = PrototypeClassifier::from_support(&episode.support)?;
            let mut correct = 0usize;
            for q in &episode.query {
                if crate::baselines::proto_predict(&clf, &q.features)? == q.label {
                    correct += 1;
                }
            }
            Ok((
                correct as f64 / episode.query.len() as f64,
                episode.query.len(),
            ))
        }
        Method::NoAugmentation => {
            let classes: Vec<ClassId> = episode.support.keys().copied().collect();
            let mut clf = ClassifierModel::new_linear(artifacts.dataset.dim(), classes)?;
            let samples: Vec<(&Vec<f64>, ClassId)> = episode
                .support
                .iter()
                .flat_map(|(&c, group)| group.iter().map(move |f| (f, c)))
                .collect();
            fit_classifier_samples(&mut clf, &samples, &test_cfg.fit)?;
            let report = score(&clf, &episode.query)?;
            Ok((report.accuracy, report.queries))
        }
    }
}

fn write_projection_files(
    config: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    method: Method,
    generator: &GeneratorModel,
    n: usize,
    seed: u64,
    dir: &Path,
) -> Result<()> {
    let mut ep_rng = rng_for(seed, &[DOM_BATTERY, n as u64, 0]);
    let episode = match &artifacts.eval_pool {
        Some(pool) => sample_eval_episode(
            &artifacts.dataset,
            pool,
            &artifacts.dataset.few_shot_ids(),
            n,
            config.meta_train.m_way,
            config.meta_train.query_per_class,
            &mut ep_rng,
        )?,
        None => sample_episode(
            &artifacts.dataset,
            n,
            config.meta_train.m_way,
            config.meta_train.query_per_class,
            &mut ep_rng,
        )?,
    };
    let mut rng = rng_for(seed, &[DOM_EVAL, n as u64, 0, 100 + method.index()]);
    let dim = artifacts.dataset.dim();
    let transfer;
    let provider: Box<dyn StatsProvider> = match method {
        Method::Ours => Box::new(TreeLookupStats {
            tree: &artifacts.tree,
            regressor: artifacts.regressor.as_ref(),
        }),
        Method::Hallucination => Box::new(MaskedStats { dim }),
        Method::KnnTransfer => {
            transfer = NeighborTransfer::new(
                &artifacts.table,
                &artifacts.dataset,
                config.generator.knn_k,
            )?;
            Box::new(KnnTransferStats {
                transfer: &transfer,
            })
        }
        _ => return Ok(()),
    };
    let augmented = augment(
        generator,
        &episode.support,
        provider.as_ref(),
        config.meta_train.n_aug,
        &mut rng,
    )?;
    let tag = format!("{}_n{}_seed{}", method.name(), n, seed);
    std::fs::write(dir.join(format!("augmented_{tag}.csv")), augmented.to_csv())?;

    let samples: Vec<(u32, Vec<f64>, String)> = augmented
        .iter_samples()
        .map(|(f, c, p)| {
            (
                c,
                f.clone(),
                match p {
                    crate::metagen::Provenance::Seed => "seed".to_string(),
                    crate::metagen::Provenance::Generated => "gen".to_string(),
                },
            )
        })
        .collect();
    let projection = project_2d(&samples)?;
    let mut csv = String::from("label,x,y,provenance\n");
    for p in &projection.points {
        use std::fmt::Write as _;
        writeln!(csv, "{},{},{},{}", p.label, p.coords[0], p.coords[1], p.provenance).unwrap();
    }
    std::fs::write(dir.join(format!("projection_{tag}.csv")), csv)?;
    Ok(())
}

/// Runs the whole experiment described by the config and writes metrics,
/// models and tree exports into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate()?;
    let out_dir = Path::new(&config.output_dir).to_path_buf();
    std::fs::create_dir_all(&out_dir)?;

    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let artifacts = prepare_seed(config, seed)?;
        artifacts
            .tree
            .save_json(&out_dir.join(format!("tree_seed{seed}.json")))?;
        if let Some(reg) = &artifacts.regressor {
            reg.save(&out_dir.join(format!("regressor_seed{seed}.bin")))?;
        }
        for &n in &config.n_shots {
            for &method in &config.methods {
                let start = Instant::now();
                let generator =
                    train_method_generator(config, &artifacts, method, n, seed)?;
                if let Some(gen) = &generator {
                    gen.save(&out_dir.join(format!(
                        "generator_{}_n{}_seed{}.bin",
                        method.name(),
                        n,
                        seed
                    )))?;
                }
                let (accuracy, queries) =
                    evaluate_method(config, &artifacts, method, generator.as_ref(), n, seed)?;
                let seconds = if config.record_timing {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                };
                rows.push(MetricsRow {
                    method: method.name().to_string(),
                    n,
                    seed,
                    accuracy,
                    queries,
                    seconds,
                });

                if config.emit_projections {
                    if let Some(gen) = &generator {
                        if seed == config.seeds[0] && n == config.n_shots[0] {
                            write_projection_files(
                                config, &artifacts, method, gen, n, seed, &out_dir,
                            )?;
                        }
                    }
                }
            }
        }
    }
    let report = MetricsReport::from_rows(config.clone(), rows);
    emit_report(&report, &out_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SyntheticSection;
    use crate::regressor::MeanSource;

    /// A configuration small enough for unit tests.
    pub(crate) fn tiny_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.methods = vec![Method::NoAugmentation, Method::Prototypical];
        cfg.n_shots = vec![1];
        cfg.seeds = vec![0];
        cfg.output_dir = dir.display().to_string();
        cfg.data = DataSource::Synthetic(SyntheticSection {
            dim: 6,
            superclasses: 3,
            classes_per_superclass: 3,
            many_shot_classes: 6,
            many_shots: 25,
            ..SyntheticSection::default()
        });
        cfg.regressor.iterations = 100;
        cfg.meta_train.meta_iterations = 5;
        cfg.meta_train.m_way = 3;
        cfg.meta_train.query_per_class = 4;
        cfg.meta_train.n_aug = 6;
        cfg.meta_test.episodes = 6;
        cfg.meta_test.inner_steps = 40;
        cfg
    }

    #[test]
    fn no_augmentation_runs_without_generator() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.methods = vec![Method::NoAugmentation];
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].accuracy >= 0.0 && report.rows[0].accuracy <= 1.0);
        // No generator file should exist.
        assert!(!dir.path().join("generator_no_augmentation_n1_seed0.bin").exists());
    }

    #[test]
    fn identical_configs_produce_byte_identical_metrics() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg_a = tiny_config(dir_a.path());
        cfg_a.methods = vec![Method::Ours, Method::Prototypical];
        cfg_a.meta_train.meta_iterations = 3;
        let mut cfg_b = cfg_a.clone();
        cfg_b.output_dir = dir_b.path().display().to_string();

        run_experiment(&cfg_a).unwrap();
        run_experiment(&cfg_b).unwrap();

        let json_a = std::fs::read_to_string(dir_a.path().join("metrics.json")).unwrap();
        let json_b = std::fs::read_to_string(dir_b.path().join("metrics.json")).unwrap();
        // Output dirs differ inside the config echo; compare everything after it.
        let rows_a = json_a.split("\"rows\"").nth(1).unwrap();
        let rows_b = json_b.split("\"rows\"").nth(1).unwrap();
        assert_eq!(rows_a, rows_b);

        // Same dir re-run: fully byte-identical.
        run_experiment(&cfg_a).unwrap();
        let json_a2 = std::fs::read_to_string(dir_a.path().join("metrics.json")).unwrap();
        assert_eq!(json_a, json_a2);
    }

    /// Toggling the regressor off changes only few-shot mean-table entries.
    #[test]
    fn regressor_toggle_preserves_many_shot_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_on = tiny_config(dir.path());
        let mut cfg_off = cfg_on.clone();
        cfg_off.regressor.enabled = false;

        let art_on = prepare_seed(&cfg_on, 0).unwrap();
        let art_off = prepare_seed(&cfg_off, 0).unwrap();
        for class in art_on.dataset.many_shot_ids() {
            let (mean_on, src_on) = &art_on.table.entries[&class];
            let (mean_off, src_off) = &art_off.table.entries[&class];
            assert_eq!(mean_on, mean_off, "many-shot mean changed for {class}");
            assert_eq!(src_on, src_off);
            assert_eq!(*src_on, MeanSource::Empirical);
        }
        for class in art_on.dataset.few_shot_ids() {
            let (_, src_on) = &art_on.table.entries[&class];
            let (_, src_off) = &art_off.table.entries[&class];
            assert_eq!(*src_on, MeanSource::Regressed);
            assert_eq!(*src_off, MeanSource::Empirical);
        }
    }

    #[test]
    fn balanced_tree_has_even_membership() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let art = prepare_seed(&cfg, 1).unwrap();
        let counts: Vec<usize> = art
            .tree
            .superclasses
            .iter()
            .map(|s| s.members.len())
            .collect();
        let max = counts.iter().max().unwrap();
        let min = counts.iter().min().unwrap();
        assert!(max - min <= 1, "unbalanced tree: {counts:?}");
    }

    #[test]
    fn base_only_tree_attaches_few_shot_classes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.tree.base_only = true;
        let art = prepare_seed(&cfg, 0).unwrap();
        // Assignment still total over all classes.
        for class in art.dataset.class_ids() {
            assert!(art.tree.assignment.contains_key(&class));
        }
    }

    #[test]
    fn generator_methods_produce_model_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.methods = vec![Method::Hallucination];
        cfg.meta_train.meta_iterations = 2;
        run_experiment(&cfg).unwrap();
        assert!(dir
            .path()
            .join("generator_hallucination_n1_seed0.bin")
            .exists());
        assert!(dir.path().join("tree_seed0.json").exists());
        assert!(dir.path().join("regressor_seed0.bin").exists());
    }

    #[test]
    fn projection_files_written_when_enabled() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.methods = vec![Method::Ours];
        cfg.meta_train.meta_iterations = 2;
        cfg.emit_projections = true;
        run_experiment(&cfg).unwrap();
        assert!(dir.path().join("augmented_ours_n1_seed0.csv").exists());
        assert!(dir.path().join("projection_ours_n1_seed0.csv").exists());
    }
}
