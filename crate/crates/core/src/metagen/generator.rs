//! The conditional generator G(x, mu, sigma, z).

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::hierarchy::InheritedStats;
use crate::numerics::{load_model, save_model, Activation, MlpModel, ModelRole};
use crate::{Error, Result};

/// Architecture knobs for a fresh generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorArch {
    pub noise_dim: usize,
    pub hidden: usize,
    pub leaky_slope: f64,
}

impl GeneratorArch {
    pub fn for_dim(dim: usize) -> Self {
        GeneratorArch {
            noise_dim: 8,
            hidden: 4 * dim,
            leaky_slope: 0.1,
        }
    }
}

/// Conditional generator. The net consumes the concatenation
/// `[x | mu | sigma | z]` in that fixed order and emits a vector with the
/// feature dimension of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    net: MlpModel,
    feature_dim: usize,
    noise_dim: usize,
}

impl GeneratorModel {
    /// Builds a generator that initially reproduces its seed: the first
    /// `2 * dim` hidden units form `+x`/`-x` pairs whose difference cancels
    /// the leaky-ReLU kink exactly, and the output layer reads them back at
    /// weight `1 / (1 + slope)`. The remaining hidden units and output
    /// columns start as small random weights, so the statistics and noise
    /// inputs influence the output from the first update without the initial
    /// clouds collapsing away from the data.
    pub fn init<R: Rng>(dim: usize, arch: &GeneratorArch, rng: &mut R) -> Result<Self> {
        if arch.hidden < 2 * dim + 1 {
            return Err(Error::InvalidInput(format!(
                "generator hidden width {} must exceed 2 * dim = {}",
                arch.hidden,
                2 * dim
            )));
        }
        let input_dim = 3 * dim + arch.noise_dim;
        let mut net = MlpModel::init(
            &[
                (
                    input_dim,
                    arch.hidden,
                    Activation::LeakyReLU(arch.leaky_slope),
                ),
                (arch.hidden, dim, Activation::Identity),
            ],
            rng,
        )?;
        {
            let layers = net.layers_mut();
            // Identity pathway: h_i = act(x_i), h_{dim+i} = act(-x_i).
            for i in 0..2 * dim {
                let row = i;
                for c in 0..input_dim {
                    layers[0].weight.set(row, c, 0.0);
                }
            }
            for i in 0..dim {
                layers[0].weight.set(i, i, 1.0);
                layers[0].weight.set(dim + i, i, -1.0);
            }
            // Read-back: x_i = (h_i - h_{dim+i}) / (1 + slope); the other
            // output weights shrink toward zero so the initial map is the
            // seed plus a small perturbation.
            let gain = 1.0 / (1.0 + arch.leaky_slope);
            for i in 0..dim {
                for c in 0..arch.hidden {
                    let w = layers[1].weight.get(i, c);
                    layers[1].weight.set(i, c, 0.1 * w);
                }
                layers[1].weight.set(i, i, gain);
                layers[1].weight.set(i, dim + i, -gain);
            }
        }
        Ok(GeneratorModel {
            net,
            feature_dim: dim,
            noise_dim: arch.noise_dim,
        })
    }

    /// Wraps an arbitrary net; input must be `3 * dim + noise_dim` wide and
    /// output `dim` wide.
    pub fn from_net(net: MlpModel, feature_dim: usize, noise_dim: usize) -> Result<Self> {
        if net.input_dim() != 3 * feature_dim + noise_dim || net.output_dim() != feature_dim {
            return Err(Error::InvalidInput(format!(
                "generator net has shape {} -> {}, expected {} -> {feature_dim}",
                net.input_dim(),
                net.output_dim(),
                3 * feature_dim + noise_dim
            )));
        }
        Ok(GeneratorModel {
            net,
            feature_dim,
            noise_dim,
        })
    }

    pub fn net(&self) -> &MlpModel {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut MlpModel {
        &mut self.net
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Concatenates the generator input in the fixed `[x|mu|sigma|z]` layout.
    pub fn build_input(&self, x: &[f64], stats: &InheritedStats, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.feature_dim;
        if x.len() != d || stats.mean.len() != d || stats.deviation.len() != d {
            return Err(Error::InvalidInput(format!(
                "generator inputs must have dimension {d}"
            )));
        }
        if z.len() != self.noise_dim {
            return Err(Error::InvalidInput(format!(
                "noise must have dimension {}",
                self.noise_dim
            )));
        }
        let mut input = Vec::with_capacity(3 * d + self.noise_dim);
        input.extend_from_slice(x);
        input.extend_from_slice(&stats.mean);
        input.extend_from_slice(&stats.deviation);
        input.extend_from_slice(z);
        Ok(input)
    }

    /// One synthetic sample from an explicit noise vector. The caller labels
    /// the output with the seed's class.
    pub fn generate(&self, x: &[f64], stats: &InheritedStats, z: &[f64]) -> Result<Vec<f64>> {
        let input = self.build_input(x, stats, z)?;
        self.net.infer(&input)
    }

    /// One synthetic sample with standard-normal noise drawn from `rng`.
    pub fn generate_sampled<R: Rng>(
        &self,
        x: &[f64],
        stats: &InheritedStats,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let z = sample_noise(self.noise_dim, rng);
        self.generate(x, stats, &z)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(
            path,
            &self.net,
            ModelRole::Generator {
                noise_dim: self.noise_dim as u32,
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, role) = load_model(path)?;
        let noise_dim = match role {
            ModelRole::Generator { noise_dim } => noise_dim as usize,
            _ => return Err(Error::Format("model file is not a generator".into())),
        };
        let feature_dim = net.output_dim();
        GeneratorModel::from_net(net, feature_dim, noise_dim)
    }

    /// Serialized parameter bytes; used to assert the frozen-generator
    /// contract.
    pub fn checksum_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        for layer in self.net.layers() {
            for v in layer.weight.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            for v in &layer.bias {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }
}

pub(crate) fn sample_noise<R: Rng>(noise_dim: usize, rng: &mut R) -> Vec<f64> {
    (0..noise_dim)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stats(dim: usize, mean: f64, dev: f64) -> InheritedStats {
        InheritedStats {
            mean: vec![mean; dim],
            deviation: vec![dev; dim],
        }
    }

    /// Linear net selecting the x block: identity on the first d inputs.
    fn projection_stub(d: usize, d_z: usize) -> GeneratorModel {
        let mut net = MlpModel::zeros(&[(3 * d + d_z, d, Activation::Identity)]).unwrap();
        for i in 0..d {
            net.layers_mut()[0].weight.set(i, i, 1.0);
        }
        GeneratorModel::from_net(net, d, d_z).unwrap()
    }

    #[test]
    fn output_has_feature_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GeneratorModel::init(5, &GeneratorArch::for_dim(5), &mut rng).unwrap();
        let out = g
            .generate_sampled(&[0.0; 5], &stats(5, 1.0, 0.5), &mut rng)
            .unwrap();
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn projection_stub_returns_seed_unchanged() {
        let g = projection_stub(3, 2);
        let x = [1.5, -2.0, 0.25];
        for (mean, dev) in [(0.0, 0.0), (7.0, 3.0), (-4.0, 1.0)] {
            let out = g.generate(&x, &stats(3, mean, dev), &[0.9, -0.7]).unwrap();
            assert_eq!(out, x.to_vec());
        }
    }

    #[test]
    fn independent_noise_draws_give_distinct_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = GeneratorModel::init(4, &GeneratorArch::for_dim(4), &mut rng).unwrap();
        let x = [0.3, -0.1, 0.8, 0.0];
        let st = stats(4, 2.0, 1.0);
        let mut distinct = 0;
        for _ in 0..100 {
            let a = g.generate_sampled(&x, &st, &mut rng).unwrap();
            let b = g.generate_sampled(&x, &st, &mut rng).unwrap();
            let dist: f64 = a
                .iter()
                .zip(&b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            if dist > 0.0 {
                distinct += 1;
            }
        }
        assert!(distinct >= 99, "only {distinct}/100 pairs were distinct");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = GeneratorModel::init(4, &GeneratorArch::for_dim(4), &mut rng).unwrap();
        assert!(g.generate(&[0.0; 3], &stats(4, 0.0, 0.0), &[0.0; 8]).is_err());
        assert!(g.generate(&[0.0; 4], &stats(4, 0.0, 0.0), &[0.0; 7]).is_err());
    }

    #[test]
    fn generator_round_trips_with_noise_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GeneratorModel::init(3, &GeneratorArch::for_dim(3), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.bin");
        g.save(&path).unwrap();
        let loaded = GeneratorModel::load(&path).unwrap();
        assert_eq!(loaded, g);
        assert_eq!(loaded.noise_dim(), 8);
    }

    #[test]
    fn build_input_layout_is_x_mu_sigma_z() {
        let g = projection_stub(2, 2);
        let input = g
            .build_input(
                &[1.0, 2.0],
                &InheritedStats {
                    mean: vec![3.0, 4.0],
                    deviation: vec![5.0, 6.0],
                },
                &[7.0, 8.0],
            )
            .unwrap();
        assert_eq!(input, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }
}
