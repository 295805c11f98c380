//! One-hidden-layer ReLU network over observation features.
//!
//! Parameters live in one flat vector so gradient training and evolutionary
//! mutation share a representation. Layout: hidden weights (row-major,
//! `hidden × input`), hidden biases, output weights (`output × hidden`),
//! output biases.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Action;

pub const DEFAULT_HIDDEN: usize = 64;
pub const WEIGHTS_FORMAT: &str = "epiopt-mlp";
pub const WEIGHTS_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 8] = b"EPIOMLP\0";

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("input has {got} features, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, spec requires {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("unsupported weight format {format:?} version {version}")]
    Version { format: String, version: u32 },
    #[error("malformed weight file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_dim: DEFAULT_HIDDEN,
            output_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        (self.input_dim + 1) * self.hidden_dim + (self.hidden_dim + 1) * self.output_dim
    }

    fn w1(&self) -> std::ops::Range<usize> {
        0..self.hidden_dim * self.input_dim
    }

    fn b1(&self) -> std::ops::Range<usize> {
        let start = self.hidden_dim * self.input_dim;
        start..start + self.hidden_dim
    }

    fn w2(&self) -> std::ops::Range<usize> {
        let start = (self.input_dim + 1) * self.hidden_dim;
        start..start + self.output_dim * self.hidden_dim
    }

    fn b2(&self) -> std::ops::Range<usize> {
        let start = (self.input_dim + 1) * self.hidden_dim + self.output_dim * self.hidden_dim;
        start..start + self.output_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    spec: MlpSpec,
    flat: Vec<f64>,
}

impl PolicyParams {
    pub fn from_flat(spec: MlpSpec, flat: Vec<f64>) -> Result<Self, PolicyError> {
        if flat.len() != spec.param_count() {
            return Err(PolicyError::ParamCount {
                expected: spec.param_count(),
                got: flat.len(),
            });
        }
        Ok(PolicyParams { spec, flat })
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        PolicyParams {
            spec,
            flat: vec![0.0; spec.param_count()],
        }
    }

    /// Weights and biases uniform in `±1/√fan_in` of their layer.
    pub fn init_uniform<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut p = PolicyParams::zeros(spec);
        let bound_in = 1.0 / (spec.input_dim.max(1) as f64).sqrt();
        let bound_hidden = 1.0 / (spec.hidden_dim.max(1) as f64).sqrt();
        for i in spec.w1().chain(spec.b1()) {
            p.flat[i] = rng.random_range(-bound_in..=bound_in);
        }
        for i in spec.w2().chain(spec.b2()) {
            p.flat[i] = rng.random_range(-bound_hidden..=bound_hidden);
        }
        p
    }

    pub fn spec(&self) -> MlpSpec {
        self.spec
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, PolicyError> {
        self.check_input(input)?;
        let mut hidden = vec![0.0; self.spec.hidden_dim];
        let mut out = vec![0.0; self.spec.output_dim];
        self.forward_into(input, &mut hidden, &mut out);
        Ok(out)
    }

    fn check_input(&self, input: &[f64]) -> Result<(), PolicyError> {
        if input.len() != self.spec.input_dim {
            return Err(PolicyError::InputDim {
                expected: self.spec.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Unchecked forward pass keeping post-ReLU hidden activations for backprop.
    pub(crate) fn forward_into(&self, input: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let s = &self.spec;
        let w1 = &self.flat[s.w1()];
        let b1 = &self.flat[s.b1()];
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &w1[j * s.input_dim..(j + 1) * s.input_dim];
            let z = b1[j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            *h = z.max(0.0);
        }
        let w2 = &self.flat[s.w2()];
        let b2 = &self.flat[s.b2()];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &w2[k * s.hidden_dim..(k + 1) * s.hidden_dim];
            *o = b2[k] + row.iter().zip(hidden.iter()).map(|(w, h)| w * h).sum::<f64>();
        }
    }

    /// Adds `∂(grad_out · output)/∂θ` to `grad`, given the activations of a prior forward pass.
    pub(crate) fn accumulate_gradient(
        &self,
        input: &[f64],
        hidden: &[f64],
        grad_out: &[f64],
        grad: &mut [f64],
    ) {
        let s = &self.spec;
        let w2 = &self.flat[s.w2()];
        let (w1_off, b1_off, w2_off, b2_off) = (s.w1().start, s.b1().start, s.w2().start, s.b2().start);
        for (k, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[b2_off + k] += g;
            let gw2 = &mut grad[w2_off + k * s.hidden_dim..w2_off + (k + 1) * s.hidden_dim];
            for (gw, h) in gw2.iter_mut().zip(hidden) {
                *gw += g * h;
            }
        }
        for j in 0..s.hidden_dim {
            if hidden[j] <= 0.0 {
                continue;
            }
            let dh: f64 = grad_out
                .iter()
                .enumerate()
                .map(|(k, g)| g * w2[k * s.hidden_dim + j])
                .sum();
            if dh == 0.0 {
                continue;
            }
            grad[b1_off + j] += dh;
            let gw1 = &mut grad[w1_off + j * s.input_dim..w1_off + (j + 1) * s.input_dim];
            for (gw, x) in gw1.iter_mut().zip(input) {
                *gw += dh * x;
            }
        }
    }

    /// Gradient of `Σ grad_out · forward(input)` with respect to every parameter.
    pub fn gradient(&self, input: &[f64], grad_out: &[f64]) -> Result<Vec<f64>, PolicyError> {
        self.check_input(input)?;
        let mut hidden = vec![0.0; self.spec.hidden_dim];
        let mut out = vec![0.0; self.spec.output_dim];
        self.forward_into(input, &mut hidden, &mut out);
        let mut grad = vec![0.0; self.flat.len()];
        self.accumulate_gradient(input, &hidden, grad_out, &mut grad);
        Ok(grad)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&WeightFile::from(self)).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        serde_json::from_str::<WeightFile>(text)?.into_params()
    }

    /// Versioned little-endian binary encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.flat.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        for d in [self.spec.input_dim, self.spec.hidden_dim, self.spec.output_dim] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.flat.len() as u64).to_le_bytes());
        for v in &self.flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Accepts either encoding: binary (by magic) or JSON.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        if !bytes.starts_with(BINARY_MAGIC) {
            let text = std::str::from_utf8(bytes)
                .map_err(|_| PolicyError::Malformed("neither binary nor UTF-8 JSON".into()))?;
            return Self::from_json(text);
        }
        let mut rest = &bytes[BINARY_MAGIC.len()..];
        let mut take = |n: usize| -> Result<&[u8], PolicyError> {
            if rest.len() < n {
                return Err(PolicyError::Malformed("truncated header".into()));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != WEIGHTS_VERSION {
            return Err(PolicyError::Version {
                format: WEIGHTS_FORMAT.into(),
                version,
            });
        }
        let input_dim = u32_at(take(4)?) as usize;
        let hidden_dim = u32_at(take(4)?) as usize;
        let output_dim = u32_at(take(4)?) as usize;
        let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let spec = MlpSpec {
            input_dim,
            hidden_dim,
            output_dim,
        };
        if len != spec.param_count() {
            return Err(PolicyError::ParamCount {
                expected: spec.param_count(),
                got: len,
            });
        }
        if rest.len() != 8 * len {
            return Err(PolicyError::Malformed(format!(
                "expected {} payload bytes, found {}",
                8 * len,
                rest.len()
            )));
        }
        let flat = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        PolicyParams::from_flat(spec, flat)
    }
}

/// Canonical JSON interchange form of a network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightFile {
    pub format: String,
    pub version: u32,
    pub spec: MlpSpec,
    pub flat: Vec<f64>,
}

impl From<&PolicyParams> for WeightFile {
    fn from(p: &PolicyParams) -> Self {
        WeightFile {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            spec: p.spec,
            flat: p.flat.clone(),
        }
    }
}

impl WeightFile {
    pub fn into_params(self) -> Result<PolicyParams, PolicyError> {
        if self.format != WEIGHTS_FORMAT || self.version != WEIGHTS_VERSION {
            return Err(PolicyError::Version {
                format: self.format,
                version: self.version,
            });
        }
        PolicyParams::from_flat(self.spec, self.flat)
    }
}

impl Serialize for PolicyParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WeightFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolicyParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        WeightFile::deserialize(deserializer)?
            .into_params()
            .map_err(serde::de::Error::custom)
    }
}

/// Argmax over two action values; ties go to no-lockdown.
pub fn act_greedy(q_values: &[f64]) -> Action {
    if q_values[1] > q_values[0] {
        Action::Lockdown
    } else {
        Action::NoLockdown
    }
}

/// Uniformly random action with probability `epsilon`, greedy otherwise.
pub fn act_epsilon<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < epsilon {
        Action::from_index(rng.random_range(0..2))
    } else {
        act_greedy(q_values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(spec: MlpSpec, seed: u64) -> PolicyParams {
        PolicyParams::init_uniform(spec, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn param_count_formula() {
        let spec = MlpSpec::new(11, 2);
        assert_eq!(spec.param_count(), 12 * 64 + 65 * 2);
        assert_eq!(spec.b2().end, spec.param_count());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = PolicyParams::zeros(MlpSpec::new(5, 2));
        assert_eq!(p.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn passthrough_construction() {
        let spec = MlpSpec {
            input_dim: 1,
            hidden_dim: 2,
            output_dim: 1,
        };
        // relu(x) − relu(−x) = x.
        let flat = vec![1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 0.0];
        let p = PolicyParams::from_flat(spec, flat).unwrap();
        for x in [-3.5, -0.1, 0.0, 0.7, 12.0] {
            assert!((p.forward(&[x]).unwrap()[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = PolicyParams::zeros(MlpSpec::new(3, 2));
        assert!(matches!(p.forward(&[1.0]), Err(PolicyError::InputDim { .. })));
        assert!(PolicyParams::from_flat(MlpSpec::new(3, 2), vec![0.0; 4]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = MlpSpec {
            input_dim: 4,
            hidden_dim: 8,
            output_dim: 2,
        };
        let p = random_params(spec, 21);
        let x = [0.3, -0.8, 1.2, 0.05];
        let weights = [0.7, -1.3];
        let objective = |q: &PolicyParams| {
            let y = q.forward(&x).unwrap();
            weights[0] * y[0] + weights[1] * y[1]
        };
        let analytic = p.gradient(&x, &weights).unwrap();
        let h = 1e-6;
        for i in 0..spec.param_count() {
            let mut plus = p.clone();
            plus.flat_mut()[i] += h;
            let mut minus = p.clone();
            minus.flat_mut()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let tol = 1e-4 * fd.abs().max(analytic[i].abs()).max(1e-3);
            assert!((fd - analytic[i]).abs() <= tol, "param {i}: fd {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn greedy_and_tie_break() {
        assert_eq!(act_greedy(&[1.0, 0.0]), Action::NoLockdown);
        assert_eq!(act_greedy(&[0.0, 0.0]), Action::NoLockdown);
        assert_eq!(act_greedy(&[-1.0, -0.5]), Action::Lockdown);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let locks = (0..n)
            .filter(|_| act_epsilon(&[5.0, 0.0], 1.0, &mut rng).is_lockdown())
            .count();
        let freq = locks as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "{freq}");
        assert!((0..100).all(|_| act_epsilon(&[5.0, 0.0], 0.0, &mut rng) == Action::NoLockdown));
    }

    #[test]
    fn serialization_round_trips() {
        let p = random_params(MlpSpec::new(12, 2), 4);
        let json = PolicyParams::from_json(&p.to_json()).unwrap();
        let bin = PolicyParams::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(json.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   p.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(bin, p);
        assert_eq!(PolicyParams::from_bytes(p.to_json().as_bytes()).unwrap(), p);
    }

    #[test]
    fn tampered_files_are_rejected() {
        let p = random_params(MlpSpec::new(3, 2), 4);
        let mut bytes = p.to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(PolicyParams::from_bytes(&bytes).is_err());
        let mut wrong_len = p.to_bytes();
        wrong_len[24] ^= 1;
        assert!(matches!(PolicyParams::from_bytes(&wrong_len), Err(PolicyError::ParamCount { .. })));
        let mut wrong_version = p.to_bytes();
        wrong_version[8] = 9;
        assert!(matches!(PolicyParams::from_bytes(&wrong_version), Err(PolicyError::Version { .. })));
        let mut file: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        file["flat"].as_array_mut().unwrap().pop();
        assert!(PolicyParams::from_json(&file.to_string()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn forward_is_lipschitz_bounded(seed in 0u64..1000, x in prop::collection::vec(-2.0..2.0f64, 6), y in prop::collection::vec(-2.0..2.0f64, 6)) {
                let p = random_params(MlpSpec { input_dim: 6, hidden_dim: 16, output_dim: 2 }, seed);
                let s = p.spec();
                let frob = |r: std::ops::Range<usize>| p.flat()[r].iter().map(|w| w * w).sum::<f64>().sqrt();
                let bound = frob(s.w1()) * frob(s.w2());
                let fx = p.forward(&x).unwrap();
                let fy = p.forward(&y).unwrap();
                let dout = fx.iter().zip(&fy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let din = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(dout <= bound * din + 1e-9);
            }

            #[test]
            fn argmax_invariant_under_positive_affine(q0 in -10.0..10.0f64, q1 in -10.0..10.0f64, a in 0.01..100.0f64, c in -50.0..50.0f64) {
                prop_assume!((q0 - q1).abs() > 1e-6);
                prop_assert_eq!(act_greedy(&[q0, q1]), act_greedy(&[a * q0 + c, a * q1 + c]));
            }
        }
    }
}
