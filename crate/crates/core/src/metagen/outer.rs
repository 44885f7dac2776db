//! The meta-training loop: augment an episode's support through the
//! generator, fit a fresh classifier with unrolled full-batch gradient
//! steps, measure the query loss, and backpropagate it through the whole
//! unroll into the generator parameters.

use rand::Rng;

use super::augment::{AugmentationPlan, StatsProvider};
use super::classifier::{batch_loss_and_grads, ClassifierModel, InnerFitConfig};
use super::generator::GeneratorModel;
use crate::data::{sample_episode, ClassId, Episode, UnbalancedDataset};
use crate::numerics::{
    sgd_step, Activation, Graph, Matrix, MlpModel, ModelGrads, NodeId, SgdConfig, SgdState,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTrainConfig {
    /// Support budget per class.
    pub n: usize,
    /// Balanced per-class size after augmentation.
    pub n_aug: usize,
    /// Classes per episode.
    pub m_way: usize,
    pub query_per_class: usize,
    /// Unrolled classifier steps T.
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub outer: SgdConfig,
    pub meta_iterations: usize,
    /// Truncate gradients to the last inner step only.
    pub first_order: bool,
}

impl MetaTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if self.n_aug < self.n {
            return Err(Error::InvalidInput("n_aug must be >= n".into()));
        }
        if self.m_way < 2 {
            return Err(Error::InvalidInput("episodes need at least 2 classes".into()));
        }
        if self.query_per_class == 0 {
            return Err(Error::InvalidInput(
                "meta-training episodes need queries".into(),
            ));
        }
        if self.inner_steps == 0 {
            return Err(Error::InvalidInput("inner_steps must be >= 1".into()));
        }
        if !(self.inner_lr > 0.0) {
            return Err(Error::InvalidInput("inner_lr must be positive".into()));
        }
        self.outer.validate()
    }
}

/// Per-layer (weight, bias) node handles.
type LayerNodes = Vec<(NodeId, NodeId)>;

fn model_leaves(g: &mut Graph, model: &MlpModel) -> LayerNodes {
    model
        .layers()
        .iter()
        .map(|l| (g.leaf(l.weight.data()), g.leaf(&l.bias)))
        .collect()
}

fn model_activations(model: &MlpModel) -> Vec<Activation> {
    model.layers().iter().map(|l| l.activation).collect()
}

/// Forward pass on the tape; returns the output node.
fn forward_graph(g: &mut Graph, params: &[(NodeId, NodeId)], acts: &[Activation], x: NodeId) -> NodeId {
    let mut a = x;
    for ((w, b), act) in params.iter().zip(acts) {
        let z = g.matvec(*w, a);
        let z = g.add(z, *b);
        a = match act {
            Activation::Identity => z,
            other => g.act(z, *other),
        };
    }
    a
}

struct LayerTrace {
    /// Input fed to the layer (the previous post-activation or the sample).
    input: NodeId,
    /// Pre-activation.
    z: NodeId,
}

fn forward_graph_traced(
    g: &mut Graph,
    params: &[(NodeId, NodeId)],
    acts: &[Activation],
    x: NodeId,
) -> (NodeId, Vec<LayerTrace>) {
    let mut a = x;
    let mut trace = Vec::with_capacity(params.len());
    for ((w, b), act) in params.iter().zip(acts) {
        let z = g.matvec(*w, a);
        let z = g.add(z, *b);
        trace.push(LayerTrace { input: a, z });
        a = match act {
            Activation::Identity => z,
            other => g.act(z, *other),
        };
    }
    (a, trace)
}

/// One full-batch gradient step expressed as tape operations: the mean
/// cross-entropy gradient of every classifier parameter is built out of
/// forward primitives so the later query loss can differentiate through it.
fn traced_inner_step(
    g: &mut Graph,
    params: &mut LayerNodes,
    acts: &[Activation],
    samples: &[(NodeId, usize)],
    lr: f64,
) {
    let layer_count = params.len();
    let mut gw_parts: Vec<Vec<NodeId>> = vec![Vec::with_capacity(samples.len()); layer_count];
    let mut gb_parts: Vec<Vec<NodeId>> = vec![Vec::with_capacity(samples.len()); layer_count];
    for &(x, label) in samples {
        let (logits, trace) = forward_graph_traced(g, params, acts, x);
        let probs = g.softmax(logits);
        let mut delta = g.onehot_sub(probs, label);
        for l in (0..layer_count).rev() {
            let gw = g.outer(delta, trace[l].input);
            gw_parts[l].push(gw);
            gb_parts[l].push(delta);
            if l > 0 {
                let back = g.matvec_t(params[l].0, delta);
                let prime = g.act_prime(trace[l - 1].z, acts[l - 1]);
                delta = g.hadamard(back, prime);
            }
        }
    }
    let scale = 1.0 / samples.len() as f64;
    for l in 0..layer_count {
        let gw = g.sum_n(&gw_parts[l]);
        let gw = g.scale(gw, scale);
        let gb = g.sum_n(&gb_parts[l]);
        let gb = g.scale(gb, scale);
        params[l].0 = g.add_scaled(params[l].0, gw, -lr);
        params[l].1 = g.add_scaled(params[l].1, gb, -lr);
    }
}

struct MetaLossGraph {
    loss: NodeId,
    gen_leaves: LayerNodes,
}

/// Builds the full episode loss on the tape:
/// generate -> T inner steps -> mean query cross-entropy.
fn build_meta_loss(
    g: &mut Graph,
    gen: &GeneratorModel,
    episode: &Episode,
    plan: &AugmentationPlan,
    clf_init: &ClassifierModel,
    inner_steps: usize,
    inner_lr: f64,
    first_order: bool,
) -> Result<MetaLossGraph> {
    let gen_leaves = model_leaves(g, gen.net());
    let gen_acts = model_activations(gen.net());

    // Assemble the augmented set as tape nodes: seeds are constants,
    // generated samples are functions of the generator leaves.
    let mut train_samples: Vec<(NodeId, usize)> = Vec::new();
    for (&class, seeds) in &episode.support {
        let label = clf_init.logit_index(class)?;
        let cp = plan
            .per_class
            .get(&class)
            .ok_or_else(|| Error::Lookup(format!("class {class} missing from plan")))?;
        for s in seeds {
            let node = g.leaf(s);
            train_samples.push((node, label));
        }
        for spec in &cp.generated {
            let input = gen.build_input(&seeds[spec.seed_index], &cp.stats, &spec.noise)?;
            let input_node = g.leaf(&input);
            let out = forward_graph(g, &gen_leaves, &gen_acts, input_node);
            train_samples.push((out, label));
        }
    }

    let acts = model_activations(clf_init.net());
    let (start_model, traced_steps);
    if first_order && inner_steps > 1 {
        // Off-tape warmup: plain value-level steps so gradients only flow
        // through the final recorded step.
        let mut warm = clf_init.clone();
        let values: Vec<(Vec<f64>, usize)> = train_samples
            .iter()
            .map(|&(node, label)| (g.value(node).to_vec(), label))
            .collect();
        let batch: Vec<(&Vec<f64>, usize)> = values.iter().map(|(v, l)| (v, *l)).collect();
        let cfg = InnerFitConfig::plain(inner_steps - 1, inner_lr);
        let mut state = SgdState::new(cfg.optimizer.clone(), warm.net())?;
        for it in 0..inner_steps - 1 {
            let (_, grads) = batch_loss_and_grads(warm.net(), &batch)?;
            sgd_step(&mut state, warm.net_mut(), &grads, it)?;
        }
        start_model = warm;
        traced_steps = 1;
    } else {
        start_model = clf_init.clone();
        traced_steps = inner_steps;
    }

    let mut clf_params = model_leaves(g, start_model.net());
    for _ in 0..traced_steps {
        traced_inner_step(g, &mut clf_params, &acts, &train_samples, inner_lr);
    }

    let mut ce_parts = Vec::with_capacity(episode.query.len());
    for q in &episode.query {
        let label = clf_init.logit_index(q.label)?;
        let x = g.leaf(&q.features);
        let logits = forward_graph(g, &clf_params, &acts, x);
        ce_parts.push(g.cross_entropy(logits, label));
    }
    if ce_parts.is_empty() {
        return Err(Error::InvalidInput("episode has no query samples".into()));
    }
    let total = g.sum_n(&ce_parts);
    let loss = g.scale(total, 1.0 / ce_parts.len() as f64);
    Ok(MetaLossGraph { loss, gen_leaves })
}

fn extract_gen_grads(g: &Graph, leaves: &LayerNodes, gen: &GeneratorModel) -> ModelGrads {
    ModelGrads {
        layers: leaves
            .iter()
            .zip(gen.net().layers())
            .map(|(&(w, b), layer)| {
                (
                    Matrix::from_vec(
                        layer.out_dim(),
                        layer.in_dim(),
                        g.grad(w).to_vec(),
                    )
                    .expect("gradient shape mirrors parameter shape"),
                    g.grad(b).to_vec(),
                )
            })
            .collect(),
    }
}

/// The episode meta-loss as a plain function of the generator parameters,
/// for a fixed plan and a zero-initialized linear classifier. Finite
/// differencing this function is the oracle for the meta-gradient.
pub fn episode_meta_loss_value(
    gen: &GeneratorModel,
    episode: &Episode,
    plan: &AugmentationPlan,
    inner_steps: usize,
    inner_lr: f64,
    first_order: bool,
) -> Result<f64> {
    let classes: Vec<ClassId> = episode.support.keys().copied().collect();
    let clf = ClassifierModel::new_linear(gen.feature_dim(), classes)?;
    let mut g = Graph::new();
    let ml = build_meta_loss(
        &mut g,
        gen,
        episode,
        plan,
        &clf,
        inner_steps,
        inner_lr,
        first_order,
    )?;
    Ok(g.value(ml.loss)[0])
}

/// One outer update: plan the augmentation, build the unrolled loss, pull
/// the exact gradient back to the generator and take an optimizer step.
/// Returns the episode meta-loss (measured before the update).
pub fn outer_step<R: Rng>(
    gen: &mut GeneratorModel,
    state: &mut SgdState,
    graph: &mut Graph,
    episode: &Episode,
    provider: &dyn StatsProvider,
    config: &MetaTrainConfig,
    iteration: usize,
    rng: &mut R,
) -> Result<f64> {
    let plan = AugmentationPlan::sample(
        &episode.support,
        provider,
        config.n_aug,
        gen.noise_dim(),
        rng,
    )?;
    let classes: Vec<ClassId> = episode.support.keys().copied().collect();
    let clf = ClassifierModel::new_linear(gen.feature_dim(), classes)?;
    graph.reset();
    let ml = build_meta_loss(
        graph,
        gen,
        episode,
        &plan,
        &clf,
        config.inner_steps,
        config.inner_lr,
        config.first_order,
    )?;
    let loss = graph.value(ml.loss)[0];
    graph.backward(ml.loss);
    let grads = extract_gen_grads(graph, &ml.gen_leaves, gen);
    sgd_step(state, gen.net_mut(), &grads, iteration)?;
    Ok(loss)
}

/// Runs `meta_iterations` episodes of sample -> outer_step. The classifier
/// is re-initialized inside every episode; only the generator persists.
/// Returns the final generator and the meta-loss trace.
pub fn meta_train<R: Rng>(
    dataset: &UnbalancedDataset,
    provider: &dyn StatsProvider,
    gen_init: GeneratorModel,
    config: &MetaTrainConfig,
    rng: &mut R,
) -> Result<(GeneratorModel, Vec<f64>)> {
    config.validate()?;
    let mut gen = gen_init;
    let mut state = SgdState::new(config.outer.clone(), gen.net())?;
    let mut graph = Graph::new();
    let mut trace = Vec::with_capacity(config.meta_iterations);
    for it in 0..config.meta_iterations {
        let episode = sample_episode(
            dataset,
            config.n,
            config.m_way,
            config.query_per_class,
            rng,
        )?;
        let loss = outer_step(
            &mut gen, &mut state, &mut graph, &episode, provider, config, it, rng,
        )?;
        trace.push(loss);
    }
    Ok((gen, trace))
}
