//! Single-layer LSTM encoder whose output is the mean of its hidden states.

use rand::Rng;

use super::params::ParamSet;
use super::{sigmoid, Matrix};
use crate::error::{Error, Result};

/// Default weight-init range for all matrices.
pub const INIT_SCALE: f64 = 0.08;
/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

const GATE_NAMES: [&str; 4] = ["i", "f", "o", "g"];
const I: usize = 0;
const F: usize = 1;
const O: usize = 2;
const G: usize = 3;

/// Gate parameters in order input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `hidden x input`
    pub w: [Matrix; 4],
    /// `hidden x hidden`
    pub u: [Matrix; 4],
    /// `hidden x 1`
    pub b: [Matrix; 4],
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            input_dim,
            hidden_dim,
            w: std::array::from_fn(|_| Matrix::zeros(hidden_dim, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden_dim, hidden_dim)),
            b: std::array::from_fn(|_| Matrix::zeros(hidden_dim, 1)),
        }
    }

    /// Uniform weights, zero biases except the forget gate.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        Self::init_scaled(input_dim, hidden_dim, INIT_SCALE, rng)
    }

    /// Like [`LstmParams::init`] with weights uniform in `(-scale, scale)`.
    pub fn init_scaled<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for k in 0..4 {
            p.w[k] = Matrix::uniform(hidden_dim, input_dim, scale, rng);
            p.u[k] = Matrix::uniform(hidden_dim, hidden_dim, scale, rng);
        }
        p.b[F].fill(FORGET_BIAS);
        p
    }

    /// Runs the recurrence from zero state and returns the mean hidden state.
    /// An empty sequence encodes to the zero vector.
    pub fn encode(&self, seq: &[&[f64]]) -> Result<Vec<f64>> {
        self.forward(seq).map(|(out, _)| out)
    }

    pub fn forward(&self, seq: &[&[f64]]) -> Result<(Vec<f64>, LstmCache)> {
        let h_dim = self.hidden_dim;
        let mut cache = LstmCache {
            steps: Vec::with_capacity(seq.len()),
        };
        let mut mean = vec![0.0; h_dim];
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        for (t, x) in seq.iter().enumerate() {
            if x.len() != self.input_dim {
                return Err(Error::Shape(format!(
                    "token {t} has length {}, encoder expects {}",
                    x.len(),
                    self.input_dim
                )));
            }
            let mut gates: [Vec<f64>; 4] = std::array::from_fn(|k| self.b[k].as_slice().to_vec());
            for k in 0..4 {
                self.w[k].add_mul_vec(x, &mut gates[k]);
                self.u[k].add_mul_vec(&h, &mut gates[k]);
            }
            for k in [I, F, O] {
                gates[k].iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            gates[G].iter_mut().for_each(|v| *v = v.tanh());
            let mut c_new = vec![0.0; h_dim];
            let mut tanh_c = vec![0.0; h_dim];
            let mut h_new = vec![0.0; h_dim];
            for j in 0..h_dim {
                c_new[j] = gates[F][j] * c[j] + gates[I][j] * gates[G][j];
                tanh_c[j] = c_new[j].tanh();
                h_new[j] = gates[O][j] * tanh_c[j];
                mean[j] += h_new[j];
            }
            let h_prev = std::mem::replace(&mut h, h_new);
            let c_prev = std::mem::replace(&mut c, c_new);
            cache.steps.push(Step {
                h_prev,
                c_prev,
                gates,
                tanh_c,
            });
        }
        if !seq.is_empty() {
            let n = seq.len() as f64;
            mean.iter_mut().for_each(|v| *v /= n);
        }
        Ok((mean, cache))
    }

    /// Back-propagation through time. Adds parameter gradients into `grads`
    /// given the gradient of the loss with respect to the mean hidden state.
    pub fn backward(&self, seq: &[&[f64]], cache: &LstmCache, d_out: &[f64], grads: &mut LstmParams) {
        let h_dim = self.hidden_dim;
        let steps = cache.steps.len();
        if steps == 0 {
            return;
        }
        let share: Vec<f64> = d_out.iter().map(|v| v / steps as f64).collect();
        let mut dh_next = vec![0.0; h_dim];
        let mut dc_next = vec![0.0; h_dim];
        let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h_dim]);
        for t in (0..steps).rev() {
            let s = &cache.steps[t];
            let (gi, gf, go, gg) = (&s.gates[I], &s.gates[F], &s.gates[O], &s.gates[G]);
            for j in 0..h_dim {
                let dh = share[j] + dh_next[j];
                let d_o = dh * s.tanh_c[j];
                let dc = dh * go[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                let d_i = dc * gg[j];
                let d_g = dc * gi[j];
                let d_f = dc * s.c_prev[j];
                dc_next[j] = dc * gf[j];
                da[I][j] = d_i * gi[j] * (1.0 - gi[j]);
                da[F][j] = d_f * gf[j] * (1.0 - gf[j]);
                da[O][j] = d_o * go[j] * (1.0 - go[j]);
                da[G][j] = d_g * (1.0 - gg[j] * gg[j]);
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..4 {
                grads.w[k].add_outer(&da[k], seq[t]);
                grads.u[k].add_outer(&da[k], &s.h_prev);
                for (g, d) in grads.b[k].as_mut_slice().iter_mut().zip(&da[k]) {
                    *g += d;
                }
                self.u[k].add_mul_vec_t(&da[k], &mut dh_next);
            }
        }
    }
}

/// Per-step activations saved by [`LstmParams::forward`].
#[derive(Clone, Debug, Default)]
pub struct LstmCache {
    steps: Vec<Step>,
}

#[derive(Clone, Debug)]
struct Step {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; 4],
    tanh_c: Vec<f64>,
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<&Matrix> {
        self.w.iter().chain(&self.u).chain(&self.b).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.w
            .iter_mut()
            .chain(self.u.iter_mut())
            .chain(self.b.iter_mut())
            .collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        ["w", "u", "b"]
            .iter()
            .flat_map(|kind| GATE_NAMES.iter().map(move |g| format!("{kind}_{g}")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use crate::rng::SeedTree;
    use rand::Rng;

    fn one_dim(bias: f64) -> LstmParams {
        let mut p = LstmParams::zeros(1, 1);
        p.b[I].fill(bias);
        p.b[O].fill(bias);
        p.w[G].fill(1.0);
        p
    }

    #[test]
    fn zero_params_encode_to_zero() {
        let p = LstmParams::zeros(3, 4);
        let x = [0.3, -1.0, 2.0];
        assert_eq!(p.encode(&[&x, &x]).unwrap(), vec![0.0; 4]);
        assert_eq!(p.encode(&[]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn saturated_single_step() {
        // i ≈ o ≈ 1, g = tanh(0.5), c = g, h = tanh(c)
        let h = one_dim(30.0).encode(&[&[0.5]]).unwrap()[0];
        let expected = 0.5f64.tanh().tanh();
        assert!((h - expected).abs() < 1e-3);
        assert!((h - 0.43181).abs() < 1e-3);
    }

    #[test]
    fn recurrence_accumulates_cell_state() {
        let p = one_dim(2.0);
        let once = p.encode(&[&[0.5]]).unwrap()[0];
        let twice = p.encode(&[&[0.5], &[0.5]]).unwrap()[0];
        // hand recurrence: forget gate σ(0) = 0.5
        let s = 1.0 / (1.0 + (-2.0f64).exp());
        let g = 0.5f64.tanh();
        let c1 = s * g;
        let h1 = s * c1.tanh();
        let c2 = 0.5 * c1 + s * g;
        let h2 = s * c2.tanh();
        assert!((once - h1).abs() < 1e-12);
        assert!((twice - (h1 + h2) / 2.0).abs() < 1e-12);
        assert_ne!(once, twice);
    }

    #[test]
    fn rejects_wrong_width() {
        let p = LstmParams::zeros(2, 2);
        assert!(p.encode(&[&[1.0]]).is_err());
    }

    #[test]
    fn outputs_strictly_inside_unit_interval() {
        let mut rng = SeedTree::new(3).stream("lstm");
        let mut p = LstmParams::init(4, 6, &mut rng);
        for t in p.tensors_mut() {
            for v in t.as_mut_slice() {
                *v *= 40.0;
            }
        }
        let xs: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, -2.0, 1.5, 0.1]).collect();
        let seq: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        for v in p.encode(&seq).unwrap() {
            assert!(v > -1.0 && v < 1.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let tree = SeedTree::new(11);
        for draw in 0..10 {
            let mut rng = tree.stream(&format!("lstm-grad-{draw}"));
            let mut p = LstmParams::init(3, 4, &mut rng);
            for t in p.tensors_mut() {
                for v in t.as_mut_slice() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
            let xs: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let weights: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let seq: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let loss =
                |q: &LstmParams| -> Result<f64> { Ok(q.encode(&seq)?.iter().zip(&weights).map(|(a, b)| a * b).sum()) };
            let (_, cache) = p.forward(&seq).unwrap();
            let mut g = p.zeros_like();
            p.backward(&seq, &cache, &weights, &mut g);
            let err = grad_check(&p, &g, loss, 40, &mut rng).unwrap();
            assert!(err < 1e-4, "draw {draw}: {err}");
        }
    }
}
