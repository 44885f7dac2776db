//! Sequential multilayer perceptron with explicit forward tape and exact
//! reverse-mode gradients.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::matrix::Matrix;
use crate::{Error, Result};

/// Per-layer activation. The final layer of a model is expected to be
/// `Identity` so the network emits raw outputs / logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    ReLU,
    LeakyReLU(f64),
}

impl Activation {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity => z,
            Activation::ReLU => z.max(0.0),
            Activation::LeakyReLU(slope) => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    /// Derivative as a function of the pre-activation `z`.
    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyReLU(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

/// One dense layer: `a = activation(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Sequential MLP. Shared parameter container for the regressor, the
/// generator and the episode classifier.
#[derive(Debug, Clone)]
pub struct MlpModel {
    layers: Vec<Layer>,
    /// Bumped whenever parameters change so stale tapes can be rejected.
    version: u64,
}

impl PartialEq for MlpModel {
    /// Parameter equality; the tape-invalidation counter is bookkeeping.
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Gradients mirroring an [`MlpModel`]'s parameter shapes.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

impl ModelGrads {
    pub fn zeros_like(model: &MlpModel) -> Self {
        ModelGrads {
            layers: model
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.out_dim(), l.in_dim()), vec![0.0; l.out_dim()]))
                .collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        for (w, b) in &mut self.layers {
            for v in w.data_mut() {
                *v *= c;
            }
            for v in b {
                *v *= c;
            }
        }
    }

    pub fn accumulate(&mut self, other: &ModelGrads) {
        assert_eq!(self.layers.len(), other.layers.len());
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (v, o) in w.data_mut().iter_mut().zip(ow.data()) {
                *v += o;
            }
            for (v, o) in b.iter_mut().zip(ob) {
                *v += o;
            }
        }
    }
}

/// Forward activations retained from one [`mlp_forward`] pass; replaying it
/// backwards yields exact parameter and input gradients.
#[derive(Debug, Clone)]
pub struct GradientTape {
    input: Vec<f64>,
    /// Pre-activations per layer.
    pre_acts: Vec<Vec<f64>>,
    /// Post-activations per layer.
    post_acts: Vec<Vec<f64>>,
    model_version: u64,
}

impl MlpModel {
    /// Builds a model with layers described by `(in, out, activation)`
    /// triples, weights uniform in `±sqrt(6 / (fan_in + fan_out))` and zero
    /// biases.
    pub fn init<R: Rng + ?Sized>(dims: &[(usize, usize, Activation)], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(dims.len());
        for (i, &(in_dim, out_dim, activation)) in dims.iter().enumerate() {
            if in_dim == 0 || out_dim == 0 {
                return Err(Error::InvalidInput("layer dims must be > 0".into()));
            }
            if i > 0 && dims[i - 1].1 != in_dim {
                return Err(Error::InvalidInput(format!(
                    "layer {} input dim {} does not chain with previous output {}",
                    i,
                    in_dim,
                    dims[i - 1].1
                )));
            }
            let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let data: Vec<f64> = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
            layers.push(Layer {
                weight: Matrix::from_vec(out_dim, in_dim, data)?,
                bias: vec![0.0; out_dim],
                activation,
            });
        }
        Ok(MlpModel { layers, version: 0 })
    }

    /// All-zero parameters; used for episode classifiers where a symmetric
    /// start keeps the first inner gradients well scaled.
    pub fn zeros(dims: &[(usize, usize, Activation)]) -> Result<Self> {
        let layers = dims
            .iter()
            .map(|&(in_dim, out_dim, activation)| {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Error::InvalidInput("layer dims must be > 0".into()));
                }
                Ok(Layer {
                    weight: Matrix::zeros(out_dim, in_dim),
                    bias: vec![0.0; out_dim],
                    activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::InvalidInput(
                    "adjacent layer dimensions must chain".into(),
                ));
            }
        }
        if layers.is_empty() {
            return Err(Error::InvalidInput("model needs at least one layer".into()));
        }
        Ok(MlpModel { layers, version: 0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim() * l.out_dim() + l.out_dim())
            .sum()
    }

    /// Inference without a tape.
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        let (out, _) = mlp_forward(self, input)?;
        Ok(out)
    }

}

/// Runs `input` through the model; returns the output and a tape that
/// replays exactly this pass.
pub fn mlp_forward(model: &MlpModel, input: &[f64]) -> Result<(Vec<f64>, GradientTape)> {
    if input.len() != model.input_dim() {
        return Err(Error::InvalidInput(format!(
            "input length {} does not match model input dim {}",
            input.len(),
            model.input_dim()
        )));
    }
    let mut pre_acts = Vec::with_capacity(model.layers.len());
    let mut post_acts = Vec::with_capacity(model.layers.len());
    let mut current = input.to_vec();
    for layer in &model.layers {
        let mut z = vec![0.0; layer.out_dim()];
        layer.weight.matvec_into(&current, &mut z);
        for (zv, b) in z.iter_mut().zip(&layer.bias) {
            *zv += b;
        }
        let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
        pre_acts.push(z);
        current = a.clone();
        post_acts.push(a);
    }
    let tape = GradientTape {
        input: input.to_vec(),
        pre_acts,
        post_acts,
        model_version: model.version,
    };
    Ok((current, tape))
}

/// Exact reverse-mode gradients of all parameters and the input for the
/// pass recorded on `tape`.
pub fn mlp_backward(
    model: &MlpModel,
    tape: &GradientTape,
    grad_output: &[f64],
) -> Result<(ModelGrads, Vec<f64>)> {
    if tape.model_version != model.version {
        return Err(Error::ContractViolation(
            "gradient tape is stale: model parameters changed since forward".into(),
        ));
    }
    if grad_output.len() != model.output_dim() {
        return Err(Error::InvalidInput(format!(
            "grad_output length {} does not match model output dim {}",
            grad_output.len(),
            model.output_dim()
        )));
    }
    let mut grads = ModelGrads::zeros_like(model);
    let mut delta = grad_output.to_vec();
    for (idx, layer) in model.layers.iter().enumerate().rev() {
        let z = &tape.pre_acts[idx];
        // d loss / d z
        for (d, zv) in delta.iter_mut().zip(z) {
            *d *= layer.activation.derivative(*zv);
        }
        let below: &[f64] = if idx == 0 {
            &tape.input
        } else {
            &tape.post_acts[idx - 1]
        };
        let (gw, gb) = &mut grads.layers[idx];
        for (r, &d) in delta.iter().enumerate() {
            gb[r] += d;
            let row = &mut gw.data_mut()[r * below.len()..(r + 1) * below.len()];
            for (g, &x) in row.iter_mut().zip(below) {
                *g += d * x;
            }
        }
        let mut next = vec![0.0; layer.in_dim()];
        layer.weight.matvec_transpose_into(&delta, &mut next);
        delta = next;
    }
    Ok((grads, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_model(n: usize, activation: Activation) -> MlpModel {
        MlpModel::from_layers(vec![Layer {
            weight: Matrix::identity(n),
            bias: vec![0.0; n],
            activation,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let model = identity_model(2, Activation::Identity);
        let (out, _) = mlp_forward(&model, &[3.0, -1.0]).unwrap();
        assert_eq!(out, vec![3.0, -1.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let model = identity_model(2, Activation::ReLU);
        let (out, _) = mlp_forward(&model, &[3.0, -1.0]).unwrap();
        assert_eq!(out, vec![3.0, 0.0]);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let model = identity_model(2, Activation::Identity);
        assert!(matches!(
            mlp_forward(&model, &[1.0, 2.0, 3.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    /// Independent straight-line re-evaluation of the affine+activation
    /// chain, coded without the Matrix helpers.
    fn naive_forward(model: &MlpModel, input: &[f64]) -> Vec<f64> {
        let mut a = input.to_vec();
        for layer in model.layers() {
            let mut next = vec![0.0; layer.out_dim()];
            for r in 0..layer.out_dim() {
                let mut s = layer.bias[r];
                for c in 0..layer.in_dim() {
                    s += layer.weight.get(r, c) * a[c];
                }
                next[r] = layer.activation.apply(s);
            }
            a = next;
        }
        a
    }

    #[test]
    fn forward_matches_independent_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = MlpModel::init(
            &[
                (5, 8, Activation::LeakyReLU(0.1)),
                (8, 3, Activation::Identity),
            ],
            &mut rng,
        )
        .unwrap();
        let input: Vec<f64> = (0..5).map(|i| (i as f64) * 0.3 - 0.7).collect();
        let (out, _) = mlp_forward(&model, &input).unwrap();
        let expected = naive_forward(&model, &input);
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_grad_output_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = MlpModel::init(
            &[(3, 4, Activation::ReLU), (4, 2, Activation::Identity)],
            &mut rng,
        )
        .unwrap();
        let (_, tape) = mlp_forward(&model, &[0.5, -0.5, 1.0]).unwrap();
        let (grads, gin) = mlp_backward(&model, &tape, &[0.0, 0.0]).unwrap();
        assert!(gin.iter().all(|&g| g == 0.0));
        for (gw, gb) in &grads.layers {
            assert!(gw.data().iter().all(|&g| g == 0.0));
            assert!(gb.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn identity_layer_backward_passes_grad_through() {
        let model = identity_model(3, Activation::Identity);
        let (_, tape) = mlp_forward(&model, &[1.0, 2.0, 3.0]).unwrap();
        let g = [0.3, -0.2, 0.9];
        let (_, gin) = mlp_backward(&model, &tape, &g).unwrap();
        assert_eq!(gin, g.to_vec());
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = MlpModel::init(&[(2, 2, Activation::Identity)], &mut rng).unwrap();
        let (_, tape) = mlp_forward(&model, &[1.0, -1.0]).unwrap();
        model.layers_mut()[0].bias[0] = 0.5;
        assert!(matches!(
            mlp_backward(&model, &tape, &[1.0, 0.0]),
            Err(Error::ContractViolation(_))
        ));
    }

    /// Central finite differences of a scalar loss `sum(out^2)/2` with
    /// respect to every parameter and input coordinate.
    #[test]
    fn backward_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..8 {
            let hidden = 3 + (trial % 3);
            let mut model = MlpModel::init(
                &[
                    (4, hidden, Activation::LeakyReLU(0.1)),
                    (hidden, hidden, Activation::ReLU),
                    (hidden, 3, Activation::Identity),
                ],
                &mut rng,
            )
            .unwrap();
            let input: Vec<f64> = (0..4).map(|i| ((trial + i) as f64 * 0.37).sin()).collect();

            let loss_of = |m: &MlpModel, x: &[f64]| -> f64 {
                let (out, _) = mlp_forward(m, x).unwrap();
                0.5 * out.iter().map(|v| v * v).sum::<f64>()
            };

            let (out, tape) = mlp_forward(&model, &input).unwrap();
            let (grads, gin) = mlp_backward(&model, &tape, &out).unwrap();

            let h = 1e-5;
            let mut checked = 0usize;
            let mut ok = 0usize;
            let mut check = |analytic: f64, numeric: f64| {
                checked += 1;
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                if ((analytic - numeric) / denom).abs() <= 1e-4 {
                    ok += 1;
                }
            };

            for li in 0..model.layers().len() {
                let wlen = model.layers()[li].weight.data().len();
                for p in 0..wlen {
                    let orig = model.layers()[li].weight.data()[p];
                    model.layers_mut()[li].weight.data_mut()[p] = orig + h;
                    let lp = loss_of(&model, &input);
                    model.layers_mut()[li].weight.data_mut()[p] = orig - h;
                    let lm = loss_of(&model, &input);
                    model.layers_mut()[li].weight.data_mut()[p] = orig;
                    check(grads.layers[li].0.data()[p], (lp - lm) / (2.0 * h));
                }
                let blen = model.layers()[li].bias.len();
                for p in 0..blen {
                    let orig = model.layers()[li].bias[p];
                    model.layers_mut()[li].bias[p] = orig + h;
                    let lp = loss_of(&model, &input);
                    model.layers_mut()[li].bias[p] = orig - h;
                    let lm = loss_of(&model, &input);
                    model.layers_mut()[li].bias[p] = orig;
                    check(grads.layers[li].1[p], (lp - lm) / (2.0 * h));
                }
            }
            let mut x = input.clone();
            for p in 0..x.len() {
                let orig = x[p];
                x[p] = orig + h;
                let lp = loss_of(&model, &x);
                x[p] = orig - h;
                let lm = loss_of(&model, &x);
                x[p] = orig;
                check(gin[p], (lp - lm) / (2.0 * h));
            }
            assert!(
                ok as f64 >= 0.99 * checked as f64,
                "trial {trial}: only {ok}/{checked} coordinates matched"
            );
        }
    }
}
