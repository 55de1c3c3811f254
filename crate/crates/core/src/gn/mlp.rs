//! Dense multi-layer perceptrons used by every GN block.
//!
//! Block MLPs are stacks of equal-width layers with the activation applied
//! after every layer *including the last*, so their output width equals their
//! hidden width. Decoders are a single linear layer (no activation).

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
}

/// Architecture of one MLP: layer output widths in order, and whether the
/// final layer is activated (true for block MLPs, false for decoders).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub in_dim: usize,
    pub widths: Vec<usize>,
    pub activate_last: bool,
}

impl MlpSpec {
    /// `n_layers` activated layers of `width` units each.
    pub fn block(in_dim: usize, width: usize, n_layers: usize) -> Self {
        MlpSpec { in_dim, widths: vec![width; n_layers], activate_last: true }
    }

    /// Single linear read-out layer.
    pub fn linear(in_dim: usize, out_dim: usize) -> Self {
        MlpSpec { in_dim, widths: vec![out_dim], activate_last: false }
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().expect("MLP with no layers")
    }
}

/// Weights `w: [in x out]` and bias `b: [1 x out]` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<(Array2<f64>, Array2<f64>)>,
}

impl MlpParams {
    /// Fan-in-scaled uniform initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    /// for weights and biases. Draw order (weights row-major, then bias, layer
    /// by layer) is part of the reproducibility contract.
    pub fn init(spec: MlpSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(spec.widths.len());
        let mut fan_in = spec.in_dim;
        for &out in &spec.widths {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, out), |_| rng.gen_range(-bound..bound));
            let b = Array2::from_shape_fn((1, out), |_| rng.gen_range(-bound..bound));
            layers.push((w, b));
            fan_in = out;
        }
        MlpParams { spec, layers }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let mut layers = Vec::with_capacity(spec.widths.len());
        let mut fan_in = spec.in_dim;
        for &out in &spec.widths {
            layers.push((Array2::zeros((fan_in, out)), Array2::zeros((1, out))));
            fan_in = out;
        }
        MlpParams { spec, layers }
    }

    pub fn zero_out(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    /// Registers all layer tensors as tape leaves. The activation is chosen
    /// by the model variant, not stored with the weights.
    pub fn leaf_on(&self, tape: &mut Tape, activation: Activation) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|(w, b)| (tape.leaf(w.clone()), tape.leaf(b.clone())))
                .collect(),
            activation,
            activate_last: self.spec.activate_last,
        }
    }

    /// Plain (non-tape) forward pass for inference.
    pub fn forward_plain(&self, x: &Array2<f64>, activation: Activation) -> Array2<f64> {
        assert_eq!(x.ncols(), self.spec.in_dim, "MLP input width");
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.dot(w) + b;
            if i < last || self.spec.activate_last {
                apply_activation_inplace(&mut h, activation);
            }
        }
        h
    }
}

pub fn apply_activation_inplace(h: &mut Array2<f64>, activation: Activation) {
    match activation {
        Activation::Relu => h.mapv_inplace(|v| v.max(0.0)),
        Activation::Softplus => h.mapv_inplace(|v| v.max(0.0) + (-v.abs()).exp().ln_1p()),
    }
}

/// Tape-resident MLP parameters.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
    pub activation: Activation,
    pub activate_last: bool,
}

impl MlpVars {
    /// Forward pass `[R x in] -> [R x out]` on the tape.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.matmul(h, w);
            h = tape.add_row_vec(h, b);
            if i < last || self.activate_last {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Softplus => tape.softplus(h),
                };
            }
        }
        h
    }

    /// All parameter vars, weights-then-bias per layer.
    pub fn all_vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream_rng};

    /// Independent straightforward evaluator: explicit loops, no ndarray dot.
    fn naive_forward(params: &MlpParams, x: &[f64], activation: Activation) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = params.layers.len() - 1;
        for (i, (w, b)) in params.layers.iter().enumerate() {
            let (in_dim, out_dim) = w.dim();
            assert_eq!(h.len(), in_dim);
            let mut next = vec![0.0; out_dim];
            for o in 0..out_dim {
                let mut acc = b[(0, o)];
                for (k, hv) in h.iter().enumerate() {
                    acc += hv * w[(k, o)];
                }
                next[o] = if i < last || params.spec.activate_last {
                    match activation {
                        Activation::Relu => acc.max(0.0),
                        Activation::Softplus => acc.max(0.0) + (-acc.abs()).exp().ln_1p(),
                    }
                } else {
                    acc
                };
            }
            h = next;
        }
        h
    }

    #[test]
    fn matches_independent_evaluator() {
        let mut rng = stream_rng(5, domain::TEST, 0);
        for &(activation, activate_last) in &[
            (Activation::Relu, true),
            (Activation::Softplus, true),
            (Activation::Relu, false),
        ] {
            let spec = MlpSpec { in_dim: 7, widths: vec![11, 5, 3], activate_last };
            let params = MlpParams::init(spec, &mut rng);
            let x = Array2::from_shape_fn((4, 7), |_| rng.gen_range(-2.0..2.0));

            let plain = params.forward_plain(&x, activation);

            let mut tape = Tape::new();
            let vars = params.leaf_on(&mut tape, activation);
            let xv = tape.leaf(x.clone());
            let out = vars.forward(&mut tape, xv);
            let taped = tape.value(out);

            for r in 0..4 {
                let row: Vec<f64> = x.row(r).to_vec();
                let want = naive_forward(&params, &row, activation);
                for (c, &w) in want.iter().enumerate() {
                    assert!((plain[(r, c)] - w).abs() < 1e-12, "plain vs naive");
                    assert!((taped[(r, c)] - w).abs() < 1e-12, "tape vs naive");
                }
            }
            // The two implementations share the same matrix kernel and must
            // agree bit for bit.
            assert_eq!(plain, *taped);
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let params = MlpParams::zeros(MlpSpec::block(4, 6, 2));
        let x = Array2::from_elem((3, 4), 1.7);
        let y = params.forward_plain(&x, Activation::Relu);
        assert_eq!(y, Array2::<f64>::zeros((3, 6)));
    }

    #[test]
    fn identity_single_layer_passes_nonnegative_input() {
        let spec = MlpSpec { in_dim: 3, widths: vec![3], activate_last: true };
        let mut params = MlpParams::zeros(spec);
        for i in 0..3 {
            params.layers[0].0[(i, i)] = 1.0;
        }
        let x = ndarray::array![[0.5, 0.0, 2.0]];
        assert_eq!(params.forward_plain(&x, Activation::Relu), x);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = MlpSpec::block(10, 20, 2);
        let a = MlpParams::init(spec.clone(), &mut stream_rng(9, domain::PARAMS, 0));
        let b = MlpParams::init(spec.clone(), &mut stream_rng(9, domain::PARAMS, 0));
        let c = MlpParams::init(spec, &mut stream_rng(10, domain::PARAMS, 0));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = 1.0 / (10f64).sqrt();
        assert!(a.layers[0].0.iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream_rng(6, domain::TEST, 0);
        let spec = MlpSpec { in_dim: 4, widths: vec![8, 8], activate_last: true };
        let params = MlpParams::init(spec, &mut rng);
        let x0 = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));

        let loss_of = |p: &MlpParams, x: &Array2<f64>| -> f64 {
            let mut tape = Tape::new();
            let vars = p.leaf_on(&mut tape, Activation::Softplus);
            let xv = tape.leaf(x.clone());
            let h = vars.forward(&mut tape, xv);
            let sq = tape.mul(h, h);
            let l = tape.sum_all(sq);
            tape.value(l)[(0, 0)]
        };

        let mut tape = Tape::new();
        let vars = params.leaf_on(&mut tape, Activation::Softplus);
        let xv = tape.leaf(x0.clone());
        let h = vars.forward(&mut tape, xv);
        let sq = tape.mul(h, h);
        let l = tape.sum_all(sq);
        let mut wrt = vars.all_vars();
        wrt.push(xv);
        let grads = tape.backward(l, &wrt).unwrap();

        let fd = 1e-5;
        // parameter gradients
        for (layer, slot) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
            let gv = grads[layer * 2 + slot].unwrap();
            let got = tape.value(gv).clone();
            let dims = got.dim();
            for r in 0..dims.0 {
                for c in 0..dims.1 {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    let (wp, bp) = &mut plus.layers[layer];
                    let (wm, bm) = &mut minus.layers[layer];
                    if slot == 0 {
                        wp[(r, c)] += fd;
                        wm[(r, c)] -= fd;
                    } else {
                        bp[(r, c)] += fd;
                        bm[(r, c)] -= fd;
                    }
                    let want = (loss_of(&plus, &x0) - loss_of(&minus, &x0)) / (2.0 * fd);
                    let g = got[(r, c)];
                    assert!(
                        (g - want).abs() < 1e-5 * (1.0 + want.abs()),
                        "layer {layer} slot {slot} ({r},{c}): {g} vs {want}"
                    );
                }
            }
        }
        // input gradient
        let gx = tape.value(grads[4].unwrap()).clone();
        for r in 0..3 {
            for c in 0..4 {
                let mut plus = x0.clone();
                plus[(r, c)] += fd;
                let mut minus = x0.clone();
                minus[(r, c)] -= fd;
                let want = (loss_of(&params, &plus) - loss_of(&params, &minus)) / (2.0 * fd);
                assert!((gx[(r, c)] - want).abs() < 1e-5 * (1.0 + want.abs()));
            }
        }
    }
}
