//! Fully connected nets: tanh on hidden layers, linear output layer.

use rand::Rng;

use super::params::ParamSet;
use super::Matrix;
use crate::error::{Error, Result};

/// Hidden-layer count of the answer and utility nets.
pub const EVPI_HIDDEN_LAYERS: usize = 5;
/// Hidden-layer count of the neural baselines.
pub const BASELINE_HIDDEN_LAYERS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub w: Matrix,
    /// `out x 1`
    pub b: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardParams {
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug, Default)]
pub struct FeedForwardCache {
    /// Input to each layer; `inputs[l + 1]` is the tanh output of hidden layer `l`.
    inputs: Vec<Vec<f64>>,
}

impl FeedForwardParams {
    /// Zero net with the given widths `[input, hidden.., output]`.
    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        FeedForwardParams {
            layers: widths
                .windows(2)
                .map(|w| Layer {
                    w: Matrix::zeros(w[1], w[0]),
                    b: Matrix::zeros(w[1], 1),
                })
                .collect(),
        }
    }

    /// `hidden_layers` tanh layers of width `hidden`, then a linear layer.
    pub fn widths(input: usize, hidden: usize, hidden_layers: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(std::iter::repeat_n(hidden, hidden_layers));
        w.push(output);
        w
    }

    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        Self::init_scaled(widths, super::lstm::INIT_SCALE, rng)
    }

    /// Weights uniform in `(-scale, scale)`, zero biases.
    pub fn init_scaled<R: Rng + ?Sized>(widths: &[usize], scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(widths);
        for layer in &mut p.layers {
            layer.w = Matrix::uniform(layer.w.rows(), layer.w.cols(), scale, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.w.rows()).unwrap_or(0)
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, FeedForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "feedforward input has length {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cache = FeedForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.as_slice().to_vec();
            layer.w.add_mul_vec(&a, &mut z);
            if l < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            cache.inputs.push(a);
            a = z;
        }
        Ok((a, cache))
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the input.
    pub fn backward(&self, cache: &FeedForwardCache, d_out: &[f64], grads: &mut FeedForwardParams) -> Vec<f64> {
        let mut delta = d_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            grads.layers[l].w.add_outer(&delta, input);
            for (g, d) in grads.layers[l].b.as_mut_slice().iter_mut().zip(&delta) {
                *g += d;
            }
            let mut d_in = vec![0.0; input.len()];
            self.layers[l].w.add_mul_vec_t(&delta, &mut d_in);
            if l > 0 {
                // input to layer l is tanh output of layer l-1
                for (d, a) in d_in.iter_mut().zip(input) {
                    *d *= 1.0 - a * a;
                }
            }
            delta = d_in;
        }
        delta
    }
}

impl ParamSet for FeedForwardParams {
    fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.w"), format!("layer{i}.b")])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use crate::rng::SeedTree;
    use rand::Rng;

    #[test]
    fn zero_weights_give_final_bias() {
        let mut p = FeedForwardParams::zeros(&[3, 4, 4, 2]);
        p.layers[2].b = Matrix::column(vec![0.25, -1.0]);
        p.layers[0].b.fill(3.0);
        assert_eq!(p.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![0.25, -1.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut p = FeedForwardParams::zeros(&[3, 3]);
        for i in 0..3 {
            p.layers[0].w.set(i, i, 1.0);
        }
        assert_eq!(p.apply(&[0.5, -7.0, 2.0]).unwrap(), vec![0.5, -7.0, 2.0]);
    }

    #[test]
    fn two_layer_hand_example() {
        let mut p = FeedForwardParams::zeros(&[1, 1, 1]);
        p.layers[0].w.fill(1.0);
        p.layers[1].w.fill(2.0);
        p.layers[1].b.fill(1.0);
        let y = p.apply(&[0.5]).unwrap()[0];
        assert!((y - (2.0 * 0.5f64.tanh() + 1.0)).abs() < 1e-15);
        assert!((y - 1.92423).abs() < 1e-5);
    }

    #[test]
    fn shape_mismatch() {
        let p = FeedForwardParams::zeros(&[2, 1]);
        assert!(p.apply(&[1.0]).is_err());
    }

    #[test]
    fn layer_counts() {
        let w = FeedForwardParams::widths(10, 8, EVPI_HIDDEN_LAYERS, 3);
        let p = FeedForwardParams::zeros(&w);
        assert_eq!(p.hidden_layers(), 5);
        assert_eq!((p.input_dim(), p.output_dim()), (10, 3));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let tree = SeedTree::new(5);
        for (hidden_layers, out) in [
            (EVPI_HIDDEN_LAYERS, 3),
            (EVPI_HIDDEN_LAYERS, 1),
            (BASELINE_HIDDEN_LAYERS, 1),
        ] {
            for draw in 0..10 {
                let mut rng = tree.stream(&format!("ff-{hidden_layers}-{out}-{draw}"));
                let widths = FeedForwardParams::widths(4, 5, hidden_layers, out);
                let mut p = FeedForwardParams::init(&widths, &mut rng);
                for t in p.tensors_mut() {
                    for v in t.as_mut_slice() {
                        *v = rng.random_range(-0.7..0.7);
                    }
                }
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let c: Vec<f64> = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
                let loss = |q: &FeedForwardParams| -> Result<f64> {
                    Ok(q.apply(&x)?.iter().zip(&c).map(|(a, b)| a * b).sum())
                };
                let (_, cache) = p.forward(&x).unwrap();
                let mut g = p.zeros_like();
                p.backward(&cache, &c, &mut g);
                let err = grad_check(&p, &g, loss, 40, &mut rng).unwrap();
                assert!(err < 1e-4, "layers {hidden_layers} draw {draw}: {err}");
            }
        }
    }
}
