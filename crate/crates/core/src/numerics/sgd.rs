//! Stochastic gradient descent with momentum, weight decay and a milestone
//! learning-rate schedule.
//!
//! Update rule per parameter tensor:
//!
//! - `v <- momentum * v + grad + weight_decay * param` (decay on weights only)
//! - `param <- param - lr(iteration) * v`
//!
//! where `lr(iteration)` multiplies the base rate by `factor` once per
//! milestone already passed.

use serde::{Deserialize, Serialize};

use super::mlp::{MlpModel, ModelGrads};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Iterations at which the rate is multiplied by `factor`.
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            milestones: Vec::new(),
            factor: 0.2,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        // Zero is allowed so callers can freeze a parameter set while still
        // reporting losses.
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidInput(
                "learning_rate must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidInput(
                "weight_decay must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Optimizer state: configuration plus velocity buffers mirroring the
/// parameter shapes of the model being trained.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub config: SgdConfig,
    velocity: ModelGrads,
}

impl SgdState {
    pub fn new(config: SgdConfig, model: &MlpModel) -> Result<Self> {
        config.validate()?;
        Ok(SgdState {
            config,
            velocity: ModelGrads::zeros_like(model),
        })
    }

    /// Effective learning rate after the milestone schedule.
    pub fn learning_rate(&self, iteration: usize) -> f64 {
        let passed = self
            .config
            .milestones
            .iter()
            .filter(|&&m| iteration >= m)
            .count();
        self.config.learning_rate * self.config.factor.powi(passed as i32)
    }
}

/// One optimizer step in place. `iteration` is the zero-based step index
/// used by the milestone schedule.
pub fn sgd_step(
    state: &mut SgdState,
    model: &mut MlpModel,
    grads: &ModelGrads,
    iteration: usize,
) -> Result<()> {
    if grads.layers.len() != state.velocity.layers.len()
        || model.layers().len() != grads.layers.len()
    {
        return Err(Error::InvalidInput(
            "gradient shapes do not match optimizer state".into(),
        ));
    }
    for ((layer, (gw, gb)), (vw, vb)) in model
        .layers()
        .iter()
        .zip(&grads.layers)
        .zip(state.velocity.layers.iter().map(|(w, b)| (w, b)))
    {
        if gw.rows() != layer.out_dim()
            || gw.cols() != layer.in_dim()
            || gb.len() != layer.out_dim()
            || vw.rows() != layer.out_dim()
            || vb.len() != layer.out_dim()
        {
            return Err(Error::InvalidInput(
                "gradient shapes do not match model parameters".into(),
            ));
        }
    }
    let lr = state.learning_rate(iteration);
    let momentum = state.config.momentum;
    let decay = state.config.weight_decay;
    for (li, (gw, gb)) in grads.layers.iter().enumerate() {
        let (vw, vb) = &mut state.velocity.layers[li];
        // Borrow the layer mutably only for the actual update.
        {
            let layer = &model.layers()[li];
            for ((v, g), w) in vw
                .data_mut()
                .iter_mut()
                .zip(gw.data())
                .zip(layer.weight.data())
            {
                *v = momentum * *v + g + decay * w;
            }
            for (v, g) in vb.iter_mut().zip(gb) {
                *v = momentum * *v + g; // biases are not decayed
            }
        }
        let layer = &mut model.layers_mut()[li];
        for (w, v) in layer.weight.data_mut().iter_mut().zip(vw.data()) {
            *w -= lr * v;
        }
        for (b, v) in layer.bias.iter_mut().zip(vb.iter()) {
            *b -= lr * v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Layer, Matrix};

    fn scalar_model(value: f64) -> MlpModel {
        MlpModel::from_layers(vec![Layer {
            weight: Matrix::from_vec(1, 1, vec![value]).unwrap(),
            bias: vec![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn scalar_grads(g: f64) -> ModelGrads {
        ModelGrads {
            layers: vec![(Matrix::from_vec(1, 1, vec![g]).unwrap(), vec![0.0])],
        }
    }

    #[test]
    fn plain_gradient_step() {
        let mut model = scalar_model(1.0);
        let mut state = SgdState::new(
            SgdConfig {
                learning_rate: 0.1,
                momentum: 0.0,
                weight_decay: 0.0,
                milestones: vec![],
                factor: 0.2,
            },
            &model,
        )
        .unwrap();
        sgd_step(&mut state, &mut model, &scalar_grads(2.0), 0).unwrap();
        assert!((model.layers()[0].weight.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_leaves_param_unchanged() {
        let mut model = scalar_model(0.37);
        let mut state = SgdState::new(
            SgdConfig {
                learning_rate: 0.1,
                momentum: 0.0,
                weight_decay: 0.0,
                milestones: vec![],
                factor: 0.2,
            },
            &model,
        )
        .unwrap();
        sgd_step(&mut state, &mut model, &scalar_grads(0.0), 0).unwrap();
        assert_eq!(model.layers()[0].weight.data()[0], 0.37);
    }

    /// Independent scalar recurrence: v_t = m v_{t-1} + g, p_t = p_{t-1} - lr v_t.
    #[test]
    fn momentum_matches_hand_unrolled_recurrence() {
        let g = 0.5;
        let lr = 0.1;
        let m = 0.9;
        let mut p_expected = 1.0_f64;
        let mut v = 0.0_f64;
        for _ in 0..3 {
            v = m * v + g;
            p_expected -= lr * v;
        }

        let mut model = scalar_model(1.0);
        let mut state = SgdState::new(
            SgdConfig {
                learning_rate: lr,
                momentum: m,
                weight_decay: 0.0,
                milestones: vec![],
                factor: 0.2,
            },
            &model,
        )
        .unwrap();
        for it in 0..3 {
            sgd_step(&mut state, &mut model, &scalar_grads(g), it).unwrap();
        }
        assert!((model.layers()[0].weight.data()[0] - p_expected).abs() < 1e-14);
    }

    #[test]
    fn milestones_decay_the_rate() {
        let model = scalar_model(1.0);
        let state = SgdState::new(
            SgdConfig {
                learning_rate: 0.01,
                momentum: 0.9,
                weight_decay: 0.0,
                milestones: vec![10, 20],
                factor: 0.2,
            },
            &model,
        )
        .unwrap();
        assert!((state.learning_rate(0) - 0.01).abs() < 1e-15);
        assert!((state.learning_rate(9) - 0.01).abs() < 1e-15);
        assert!((state.learning_rate(10) - 0.002).abs() < 1e-15);
        assert!((state.learning_rate(25) - 0.0004).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_applies_to_weights_not_biases() {
        let mut model = scalar_model(1.0);
        model.layers_mut()[0].bias[0] = 1.0;
        let mut state = SgdState::new(
            SgdConfig {
                learning_rate: 0.1,
                momentum: 0.0,
                weight_decay: 0.5,
                milestones: vec![],
                factor: 0.2,
            },
            &model,
        )
        .unwrap();
        sgd_step(&mut state, &mut model, &scalar_grads(0.0), 0).unwrap();
        // weight: 1.0 - 0.1 * (0 + 0.5 * 1.0) = 0.95; bias untouched.
        assert!((model.layers()[0].weight.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(model.layers()[0].bias[0], 1.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut model = scalar_model(1.0);
        let mut state = SgdState::new(SgdConfig::default(), &model).unwrap();
        let bad = ModelGrads {
            layers: vec![(Matrix::zeros(2, 1), vec![0.0, 0.0])],
        };
        assert!(sgd_step(&mut state, &mut model, &bad, 0).is_err());
    }
}
