use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseNet, DenseTape, OutputConstraint};
use crate::error::{Error, Result};

/// A trainable scalar function of scaled time.
///
/// `Constant` is the degenerate zero-layer case used for time-invariant
/// coefficients: one parameter `p` with output `p²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Network {
    Dense { net: DenseNet, seed: u64 },
    Constant { param: f64 },
}

/// Forward values for a batch, plus whatever the reverse pass needs.
#[derive(Debug, Clone)]
pub enum Tape {
    Dense(DenseTape),
    Constant { values: Vec<f64>, derivs: Vec<f64> },
}

impl Tape {
    pub fn values(&self) -> &[f64] {
        match self {
            Tape::Dense(t) => t.values(),
            Tape::Constant { values, .. } => values,
        }
    }

    pub fn derivs(&self) -> &[f64] {
        match self {
            Tape::Dense(t) => t.derivs(),
            Tape::Constant { derivs, .. } => derivs,
        }
    }
}

impl Network {
    /// Glorot-initialized tanh network with a squared (nonnegative) output.
    pub fn dense(depth: usize, width: usize, seed: u64) -> Result<Self> {
        Self::dense_with(depth, width, OutputConstraint::Square, seed)
    }

    pub fn dense_with(
        depth: usize,
        width: usize,
        constraint: OutputConstraint,
        seed: u64,
    ) -> Result<Self> {
        let sizes = DenseNet::sizes_for(depth, width);
        Ok(Network::Dense {
            net: DenseNet::glorot(&sizes, Activation::Tanh, constraint, seed)?,
            seed,
        })
    }

    /// Constant function initialized to `value ≥ 0`.
    pub fn constant(value: f64) -> Self {
        Network::Constant {
            param: value.max(0.0).sqrt(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Network::Dense { net, .. } => net.params(),
            Network::Constant { param } => std::slice::from_ref(param),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Network::Dense { net, .. } => net.params_mut(),
            Network::Constant { param } => std::slice::from_mut(param),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Multiplies the output by `k > 0`.
    pub fn scale_output(&mut self, k: f64) {
        match self {
            Network::Dense { net, .. } => net.scale_output(k),
            Network::Constant { param } => *param *= k.sqrt(),
        }
    }

    pub fn forward_batch(&self, ts: &[f64]) -> Tape {
        match self {
            Network::Dense { net, .. } => Tape::Dense(net.forward_batch(ts)),
            Network::Constant { param } => Tape::Constant {
                values: vec![param * param; ts.len()],
                derivs: vec![0.0; ts.len()],
            },
        }
    }

    /// Output at one scaled time.
    pub fn forward(&self, t: f64) -> f64 {
        self.forward_batch(&[t]).values()[0]
    }

    /// d(output)/d(t_s) at one scaled time.
    pub fn dinput(&self, t: f64) -> f64 {
        self.forward_batch(&[t]).derivs()[0]
    }

    /// Accumulates the parameter gradient of
    /// `Σ_k g_value[k]·u(t_k) + g_deriv[k]·u'(t_k)` into `grad`.
    pub fn backward(&self, tape: &Tape, g_value: &[f64], g_deriv: &[f64], grad: &mut [f64]) {
        match (self, tape) {
            (Network::Dense { net, .. }, Tape::Dense(t)) => net.backward(t, g_value, g_deriv, grad),
            (Network::Constant { param }, Tape::Constant { .. }) => {
                // u = p², u' = 0
                grad[0] += 2.0 * param * g_value.iter().sum::<f64>();
            }
            _ => panic!("tape does not belong to this network"),
        }
    }

    /// Parameter gradient of `upstream · u(t)`.
    pub fn grad_params(&self, t: f64, upstream: f64) -> Vec<f64> {
        let tape = self.forward_batch(&[t]);
        let mut g = vec![0.0; self.num_params()];
        self.backward(&tape, &[upstream], &[0.0], &mut g);
        g
    }

    /// `(u, u', ∂u/∂θ, ∂u'/∂θ)` at one scaled time.
    pub fn value_and_grads(&self, t: f64) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let tape = self.forward_batch(&[t]);
        let mut gv = vec![0.0; self.num_params()];
        let mut gd = vec![0.0; self.num_params()];
        self.backward(&tape, &[1.0], &[0.0], &mut gv);
        self.backward(&tape, &[0.0], &[1.0], &mut gd);
        (tape.values()[0], tape.derivs()[0], gv, gd)
    }

    pub fn describe(&self) -> String {
        match self {
            Network::Dense { net, .. } => {
                let sizes = net.layer_sizes();
                format!("{}x{}", sizes.len() - 2, sizes[1])
            }
            Network::Constant { .. } => "constant".into(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let net: Network = serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
        if let Network::Dense { net, .. } = &net {
            net.check()?;
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_squares_its_parameter() {
        let mut c = Network::constant(0.36);
        assert!((c.forward(0.3) - 0.36).abs() < 1e-15);
        assert_eq!(c.dinput(0.3), 0.0);
        c.params_mut()[0] = -0.5;
        assert_eq!(c.forward(5.0), 0.25);
        let g = c.grad_params(0.1, 2.0);
        assert_eq!(g, vec![2.0 * 2.0 * -0.5]);
    }

    #[test]
    fn snapshot_roundtrips_bit_exactly() {
        let net = Network::dense(3, 7, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        let back = Network::load(&path).unwrap();
        assert_eq!(net, back);
        let bits: Vec<u64> = net.params().iter().map(|p| p.to_bits()).collect();
        let back_bits: Vec<u64> = back.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(bits, back_bits);
    }

    #[test]
    fn load_rejects_truncated_params() {
        let mut net =
            DenseNet::zeros(&[1, 3, 1], Activation::Tanh, OutputConstraint::Square).unwrap();
        let json = serde_json::to_string(&Network::Dense {
            net: net.clone(),
            seed: 0,
        })
        .unwrap();
        let truncated = json.replace("0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0]", "0.0]");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        std::fs::write(&path, truncated).unwrap();
        assert!(Network::load(&path).is_err());
        net.params_mut()[0] = 1.0;
        assert!(net.check().is_ok());
    }
}
