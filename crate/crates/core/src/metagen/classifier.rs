//! Episode classifier and its full-batch fit.

use rand::Rng;

use super::augment::AugmentedSet;
use crate::data::ClassId;
use crate::numerics::{
    cross_entropy, mlp_backward, mlp_forward, sgd_step, Activation, MlpModel, ModelGrads,
    SgdConfig, SgdState,
};
use crate::{Error, Result};

/// Classifier over an episode's classes. The logit at position `i`
/// corresponds to `classes[i]` (sorted ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    net: MlpModel,
    classes: Vec<ClassId>,
}

impl ClassifierModel {
    /// Linear probe `d -> M` with zero-initialized parameters. A symmetric
    /// start keeps the first inner gradients well scaled and reproducible.
    pub fn new_linear(dim: usize, mut classes: Vec<ClassId>) -> Result<Self> {
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::InvalidInput(
                "classifier needs at least two classes".into(),
            ));
        }
        let net = MlpModel::zeros(&[(dim, classes.len(), Activation::Identity)])?;
        Ok(ClassifierModel { net, classes })
    }

    /// Random-parameter variant, for chance-level controls.
    pub fn new_linear_random<R: Rng>(
        dim: usize,
        mut classes: Vec<ClassId>,
        rng: &mut R,
    ) -> Result<Self> {
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::InvalidInput(
                "classifier needs at least two classes".into(),
            ));
        }
        let net = MlpModel::init(&[(dim, classes.len(), Activation::Identity)], rng)?;
        Ok(ClassifierModel { net, classes })
    }

    pub fn net(&self) -> &MlpModel {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut MlpModel {
        &mut self.net
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn logit_index(&self, class: ClassId) -> Result<usize> {
        self.classes
            .binary_search(&class)
            .map_err(|_| Error::Lookup(format!("class {class} not in classifier label map")))
    }

    /// Top-1 prediction; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        let logits = self.net.infer(x)?;
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(self.classes[best])
    }
}

/// Full-batch fit schedule for the episode classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerFitConfig {
    pub steps: usize,
    pub optimizer: SgdConfig,
}

impl InnerFitConfig {
    /// Plain gradient descent, the form the unrolled outer step mirrors.
    pub fn plain(steps: usize, learning_rate: f64) -> Self {
        InnerFitConfig {
            steps,
            optimizer: SgdConfig {
                learning_rate,
                momentum: 0.0,
                weight_decay: 0.0,
                milestones: Vec::new(),
                factor: 1.0,
            },
        }
    }
}

/// Mean cross-entropy and its parameter gradients over a labeled batch.
pub(crate) fn batch_loss_and_grads(
    net: &MlpModel,
    batch: &[(&Vec<f64>, usize)],
) -> Result<(f64, ModelGrads)> {
    let mut grads = ModelGrads::zeros_like(net);
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (x, label) in batch {
        let (logits, tape) = mlp_forward(net, x)?;
        let (l, mut grad_logits) = cross_entropy(&logits, *label)?;
        loss += l * scale;
        for g in &mut grad_logits {
            *g *= scale;
        }
        let (g, _) = mlp_backward(net, &tape, &grad_logits)?;
        grads.accumulate(&g);
    }
    Ok((loss, grads))
}

/// Trains the classifier with `steps` full-batch updates of the mean
/// cross-entropy over the augmented set. Returns the per-step loss trace.
pub fn fit_classifier(
    clf: &mut ClassifierModel,
    data: &AugmentedSet,
    config: &InnerFitConfig,
) -> Result<Vec<f64>> {
    let samples: Vec<(&Vec<f64>, ClassId)> =
        data.iter_samples().map(|(f, c, _)| (f, c)).collect();
    fit_classifier_samples(clf, &samples, config)
}

/// Same fit on a plain labeled batch; the no-augmentation control trains
/// directly on the raw support through this.
pub fn fit_classifier_samples(
    clf: &mut ClassifierModel,
    samples: &[(&Vec<f64>, ClassId)],
    config: &InnerFitConfig,
) -> Result<Vec<f64>> {
    if config.steps == 0 {
        return Err(Error::InvalidInput(
            "classifier fit needs at least one step".into(),
        ));
    }
    let mut batch = Vec::with_capacity(samples.len());
    for (features, class) in samples {
        batch.push((*features, clf.logit_index(*class)?));
    }
    if batch.is_empty() {
        return Err(Error::InvalidInput("training batch is empty".into()));
    }
    let mut state = SgdState::new(config.optimizer.clone(), &clf.net)?;
    let mut losses = Vec::with_capacity(config.steps);
    for it in 0..config.steps {
        let (loss, grads) = batch_loss_and_grads(&clf.net, &batch)?;
        sgd_step(&mut state, &mut clf.net, &grads, it)?;
        losses.push(loss);
    }
    Ok(losses)
}
