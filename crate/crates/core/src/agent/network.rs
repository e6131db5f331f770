//! Fully connected Q-network: rectified-linear hidden layers, linear output.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// Parameters are stored flat, layer by layer: the weight matrix
/// (`out × in`, row-major) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl QNetwork {
    /// He-uniform initialisation, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        QNetwork {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Checkpoint(format!("bad layer sizes {sizes:?}")));
        }
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(QNetwork { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).pop().unwrap()
    }

    /// Activations of every layer, input included.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let input = &acts[l];
            let mut out: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + b)
                .collect();
            if l + 1 < layers {
                out.iter_mut().for_each(|z| *z = z.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Mean squared error between `Q(s, a)` and the targets, and its gradient
    /// with respect to every parameter. Only the chosen action's output
    /// contributes.
    pub fn loss_and_gradient(
        &self,
        states: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
    ) -> (f64, Vec<f64>) {
        let batch = states.len();
        assert!(batch > 0 && actions.len() == batch && targets.len() == batch);
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let layers = self.sizes.len() - 1;
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(o)
            })
            .collect();

        for ((s, &a), &y) in states.iter().zip(actions).zip(targets) {
            let acts = self.trace(s);
            let q = acts[layers][a];
            let err = q - y;
            loss += err * err;

            let mut delta = vec![0.0; self.sizes[layers]];
            delta[a] = 2.0 * err / batch as f64;
            for l in (0..layers).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let off = offsets[l];
                let input = &acts[l];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                    grad[off + n_in * n_out + o] += d;
                }
                if l == 0 {
                    break;
                }
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (o, row) in weights.chunks_exact(n_in).enumerate() {
                    let d = delta[o];
                    if d != 0.0 {
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                }
                // relu'(z) is 1 where the stored activation is positive
                prev.iter_mut()
                    .zip(input)
                    .for_each(|(p, &act)| {
                        if act <= 0.0 {
                            *p = 0.0
                        }
                    });
                delta = prev;
            }
        }
        (loss / batch as f64, grad)
    }
}
