use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// Linear hidden units; only useful for analytic checks.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputConstraint {
    /// Output is the square of the final affine layer, hence nonnegative.
    Square,
    None,
}

/// Fully connected `1 → n_1 → … → n_L → 1` network.
///
/// Parameters live in one flat vector, layer by layer: the `n_l × n_{l−1}`
/// weight matrix in row-major order followed by the `n_l` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_constraint: OutputConstraint,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass for the reverse sweep.
#[derive(Debug, Clone)]
pub struct DenseTape {
    inputs: Array2<f64>,
    /// Per hidden layer: post-activation values and their input tangents.
    hidden: Vec<(Array2<f64>, Array2<f64>, Array2<f64>)>,
    pre_out: Array1<f64>,
    pre_out_tangent: Array1<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl DenseTape {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }
}

impl DenseNet {
    /// Zero-initialized network; use [`DenseNet::glorot`] for training.
    pub fn zeros(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_constraint: OutputConstraint,
    ) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let n = param_count(layer_sizes);
        Ok(DenseNet {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation,
            output_constraint,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights on `±sqrt(6 / (n_in + n_out))`, zero biases.
    pub fn glorot(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_constraint: OutputConstraint,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden_activation, output_constraint)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for p in &mut net.params[off..off + n_in * n_out] {
                *p = rng.random_range(-limit..=limit);
            }
            off += n_in * n_out + n_out;
        }
        Ok(net)
    }

    /// `[1, width × depth, 1]`.
    pub fn sizes_for(depth: usize, width: usize) -> Vec<usize> {
        let mut s = vec![1];
        s.extend(std::iter::repeat_n(width, depth));
        s.push(1);
        s
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_constraint(&self) -> OutputConstraint {
        self.output_constraint
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Multiplies the output by `k > 0` exactly by rescaling the final
    /// affine layer.
    pub fn scale_output(&mut self, k: f64) {
        let last = self.layer_sizes[self.layer_sizes.len() - 2] + 1;
        let f = match self.output_constraint {
            OutputConstraint::Square => k.sqrt(),
            OutputConstraint::None => k,
        };
        let n = self.params.len();
        for p in &mut self.params[n - last..] {
            *p *= f;
        }
    }

    /// Verifies the flat parameter vector matches the layer layout.
    pub fn check(&self) -> Result<()> {
        validate_sizes(&self.layer_sizes)?;
        let expected = param_count(&self.layer_sizes);
        if self.params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: self.params.len(),
            });
        }
        Ok(())
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, &[f64]) {
        let (off, n_in, n_out) = self.layer_offset(l);
        let w = ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_in * n_out])
            .expect("layer shape");
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (w, b)
    }

    fn layer_offset(&self, l: usize) -> (usize, usize, usize) {
        let mut off = 0;
        for w in self.layer_sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, self.layer_sizes[l], self.layer_sizes[l + 1])
    }

    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Output and d(output)/d(t_s) at every input, keeping the tape for
    /// [`DenseNet::backward`].
    pub fn forward_batch(&self, ts: &[f64]) -> DenseTape {
        let b = ts.len();
        let inputs = Array2::from_shape_vec((1, b), ts.to_vec()).expect("input row");
        let mut x = inputs.clone();
        let mut d = Array2::<f64>::ones((1, b));
        let mut hidden = Vec::with_capacity(self.n_layers() - 1);
        for l in 0..self.n_layers() - 1 {
            let (w, bias) = self.layer(l);
            let mut z = w.dot(&x);
            for (mut row, &bb) in z.axis_iter_mut(Axis(0)).zip(bias) {
                row += bb;
            }
            let dz = w.dot(&d);
            let (a, da) = match self.hidden_activation {
                Activation::Tanh => {
                    let a = z.mapv(f64::tanh);
                    let da = &dz * &a.mapv(|v| 1.0 - v * v);
                    (a, da)
                }
                Activation::Identity => (z, dz.clone()),
            };
            x = a.clone();
            d = da.clone();
            hidden.push((a, da, dz));
        }
        let (w, bias) = self.layer(self.n_layers() - 1);
        let pre_out = w.dot(&x).row(0).mapv(|v| v + bias[0]);
        let pre_out_tangent = w.dot(&d).row(0).to_owned();
        let (values, derivs) = match self.output_constraint {
            OutputConstraint::Square => (
                pre_out.iter().map(|z| z * z).collect(),
                pre_out
                    .iter()
                    .zip(&pre_out_tangent)
                    .map(|(z, dz)| 2.0 * z * dz)
                    .collect(),
            ),
            OutputConstraint::None => (pre_out.to_vec(), pre_out_tangent.to_vec()),
        };
        DenseTape {
            inputs,
            hidden,
            pre_out,
            pre_out_tangent,
            values,
            derivs,
        }
    }

    /// Accumulates into `grad` the parameter gradient of
    /// `Σ_k g_value[k]·u(t_k) + g_deriv[k]·u'(t_k)`.
    pub fn backward(&self, tape: &DenseTape, g_value: &[f64], g_deriv: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let b = tape.values.len();
        let (zb, dzb): (Vec<f64>, Vec<f64>) = match self.output_constraint {
            OutputConstraint::Square => (0..b)
                .map(|k| {
                    let z = tape.pre_out[k];
                    let dz = tape.pre_out_tangent[k];
                    (
                        2.0 * (g_value[k] * z + g_deriv[k] * dz),
                        2.0 * g_deriv[k] * z,
                    )
                })
                .unzip(),
            OutputConstraint::None => (g_value.to_vec(), g_deriv.to_vec()),
        };
        let mut zb = Array2::from_shape_vec((1, b), zb).expect("row");
        let mut dzb = Array2::from_shape_vec((1, b), dzb).expect("row");
        let ones = Array2::<f64>::ones((1, b));

        for l in (0..self.n_layers()).rev() {
            let (x_prev, d_prev) = if l == 0 {
                (tape.inputs.view(), ones.view())
            } else {
                let (a, da, _) = &tape.hidden[l - 1];
                (a.view(), da.view())
            };
            let (off, n_in, n_out) = self.layer_offset(l);
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                let mut gw = ArrayViewMut2::from_shape((n_out, n_in), gw).expect("grad shape");
                general_mat_mul(1.0, &zb, &x_prev.t(), 1.0, &mut gw);
                general_mat_mul(1.0, &dzb, &d_prev.t(), 1.0, &mut gw);
                for (g, row) in gb.iter_mut().zip(zb.axis_iter(Axis(0))) {
                    *g += row.sum();
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut xb = w.t().dot(&zb);
            let db = w.t().dot(&dzb);
            let (a, _, dz) = &tape.hidden[l - 1];
            match self.hidden_activation {
                Activation::Tanh => {
                    // d = (1 − a²)·dz, a = tanh(z)
                    ndarray::Zip::from(&mut xb)
                        .and(&db)
                        .and(a)
                        .and(dz)
                        .for_each(|xb, &db, &a, &dz| *xb += db * (-2.0 * a * dz));
                    let slope = a.mapv(|v| 1.0 - v * v);
                    zb = &xb * &slope;
                    dzb = &db * &slope;
                }
                Activation::Identity => {
                    zb = xb;
                    dzb = db;
                }
            }
        }
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least input and output layers, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArchitecture(format!(
            "zero-width layer in {sizes:?}"
        )));
    }
    if sizes[0] != 1 || sizes[sizes.len() - 1] != 1 {
        return Err(Error::InvalidArchitecture(format!(
            "input and output width must be 1, got {sizes:?}"
        )));
    }
    Ok(())
}

/// Number of weights and biases for the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(a: f64, c: f64, constraint: OutputConstraint) -> DenseNet {
        let mut net = DenseNet::zeros(&[1, 1, 1], Activation::Tanh, constraint).unwrap();
        net.params_mut().copy_from_slice(&[a, 0.0, c, 0.0]);
        net
    }

    #[test]
    fn scale_output_multiplies_every_output() {
        for constraint in [OutputConstraint::Square, OutputConstraint::None] {
            let net = DenseNet::glorot(&DenseNet::sizes_for(2, 6), Activation::Tanh, constraint, 5)
                .unwrap();
            let mut scaled = net.clone();
            scaled.scale_output(3.5);
            let ts = [0.0, 0.3, 1.4];
            let (a, b) = (net.forward_batch(&ts), scaled.forward_batch(&ts));
            for k in 0..ts.len() {
                assert!(
                    (b.values()[k] - 3.5 * a.values()[k]).abs()
                        <= 1e-12 * (1.0 + a.values()[k].abs())
                );
                assert!(
                    (b.derivs()[k] - 3.5 * a.derivs()[k]).abs()
                        <= 1e-12 * (1.0 + a.derivs()[k].abs())
                );
            }
        }
    }

    #[test]
    fn parameter_count_of_default_state_net() {
        assert_eq!(param_count(&DenseNet::sizes_for(4, 50)), 7801);
    }

    #[test]
    fn glorot_is_deterministic_and_bounded() {
        let sizes = DenseNet::sizes_for(4, 50);
        let a = DenseNet::glorot(&sizes, Activation::Tanh, OutputConstraint::Square, 7).unwrap();
        let b = DenseNet::glorot(&sizes, Activation::Tanh, OutputConstraint::Square, 7).unwrap();
        assert_eq!(a.params(), b.params());
        let c = DenseNet::glorot(&sizes, Activation::Tanh, OutputConstraint::Square, 8).unwrap();
        assert_ne!(a.params(), c.params());

        let limit = (6.0f64 / 100.0).sqrt();
        assert!((limit - 0.2449).abs() < 1e-4);
        let (off, n_in, n_out) = a.layer_offset(1);
        let w = &a.params()[off..off + n_in * n_out];
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert!(w.iter().any(|v| v.abs() > 0.9 * limit));
        for l in 0..a.n_layers() {
            let (_, bias) = a.layer(l);
            assert!(bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_bad_architectures() {
        for sizes in [vec![1], vec![1, 0, 1], vec![2, 5, 1], vec![1, 5, 3]] {
            assert!(matches!(
                DenseNet::zeros(&sizes, Activation::Tanh, OutputConstraint::Square),
                Err(Error::InvalidArchitecture(_))
            ));
        }
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(
            &DenseNet::sizes_for(3, 8),
            Activation::Tanh,
            OutputConstraint::Square,
        )
        .unwrap();
        let tape = net.forward_batch(&[-1.0, 0.0, 0.3, 2.0]);
        assert!(tape.values().iter().all(|&v| v == 0.0));
        assert!(tape.derivs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_neuron_hand_values() {
        let net = tiny(1.0, 1.0, OutputConstraint::None);
        assert_eq!(net.forward_batch(&[0.0]).values()[0], 0.0);

        // tanh(a t) · c = −0.5 with a = 1, c = −1 at t = atanh(0.5)
        let t = 0.5f64.atanh();
        let sq = tiny(1.0, -1.0, OutputConstraint::Square);
        let v = sq.forward_batch(&[t]).values()[0];
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn derivative_closed_form() {
        let (a, c) = (1.7, -0.8);
        let net = tiny(a, c, OutputConstraint::None);
        for t in [-1.0, 0.0, 0.4, 1.3] {
            let d = net.forward_batch(&[t]).derivs()[0];
            let th = (a * t).tanh();
            assert!((d - c * a * (1.0 - th * th)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_net_weight_gradient_is_input() {
        let mut net =
            DenseNet::zeros(&[1, 1, 1], Activation::Identity, OutputConstraint::None).unwrap();
        net.params_mut().copy_from_slice(&[1.0, 0.0, 1.0, 0.0]);
        let t = 0.37;
        let tape = net.forward_batch(&[t]);
        let mut g = vec![0.0; 4];
        net.backward(&tape, &[1.0], &[0.0], &mut g);
        assert_eq!(g[0], t);
        assert_eq!(g[2], t);
        assert_eq!(g[1], 1.0);
        assert_eq!(g[3], 1.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = DenseNet::glorot(
            &DenseNet::sizes_for(2, 6),
            Activation::Tanh,
            OutputConstraint::Square,
            1,
        )
        .unwrap();
        let tape = net.forward_batch(&[0.2, 0.9]);
        let mut g = vec![0.0; net.num_params()];
        net.backward(&tape, &[0.0, 0.0], &[0.0, 0.0], &mut g);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
