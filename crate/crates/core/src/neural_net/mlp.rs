use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected network; hidden layers use the activation, the output layer is affine.
///
/// Parameters are stored flat, layer by layer: the row-major weight matrix A_n
/// (N_n × N_{n−1}) followed by the bias b_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Activations z_0..z_L of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }
}

pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

fn check_sizes(sizes: &[usize]) -> Result<(), NetError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(NetError::Shape(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

/// Glorot-normal weights, zero biases; deterministic per seed.
pub fn init_glorot(sizes: &[usize], seed: u64) -> Result<Mlp, NetError> {
    check_sizes(sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(parameter_count(sizes));
    for w in sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive standard deviation");
        params.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(Mlp {
        sizes: sizes.to_vec(),
        activation: Activation::Tanh,
        params,
    })
}

impl Mlp {
    pub fn from_parts(sizes: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self, NetError> {
        check_sizes(&sizes)?;
        let expected = parameter_count(&sizes);
        if params.len() != expected {
            return Err(NetError::Shape(format!("expected {expected} parameters, got {}", params.len())));
        }
        Ok(Self { sizes, activation, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Flattened parameters.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.params.len() {
            return Err(NetError::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer_offset(&self, layer: usize) -> usize {
        parameter_count(&self.sizes[..=layer])
    }

    /// (A_n row-major, b_n) of layer `n` (1-based).
    pub fn layer(&self, n: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(n - 1);
        let (rows, cols) = (self.sizes[n], self.sizes[n - 1]);
        let w = &self.params[off..off + rows * cols];
        let b = &self.params[off + rows * cols..off + rows * cols + rows];
        (w, b)
    }

    pub fn forward(&self, z: &[f64]) -> Result<ForwardCache, NetError> {
        if z.len() != self.input_size() {
            return Err(NetError::Shape(format!(
                "input has length {}, network expects {}",
                z.len(),
                self.input_size()
            )));
        }
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(z.to_vec());
        let last = self.num_layers();
        for n in 1..=last {
            let (w, b) = self.layer(n);
            let prev = &activations[n - 1];
            let cols = prev.len();
            let out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(i, &bi)| {
                    let row = &w[i * cols..(i + 1) * cols];
                    let s = bi + row.iter().zip(prev).map(|(a, x)| a * x).sum::<f64>();
                    if n == last {
                        s
                    } else {
                        self.activation.apply(s)
                    }
                })
                .collect();
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>, NetError> {
        Ok(self.forward(z)?.activations.pop().unwrap())
    }

    /// Accumulates ∂ℒ/∂θ into `param_grad` given ∂ℒ/∂(output) and returns ∂ℒ/∂(input).
    pub fn backprop(&self, cache: &ForwardCache, upstream: &[f64], param_grad: &mut [f64]) -> Result<Vec<f64>, NetError> {
        if cache.activations.len() != self.sizes.len()
            || cache.activations.iter().zip(&self.sizes).any(|(a, &s)| a.len() != s)
        {
            return Err(NetError::Cache);
        }
        if upstream.len() != self.output_size() {
            return Err(NetError::Shape(format!(
                "upstream gradient has length {}, expected {}",
                upstream.len(),
                self.output_size()
            )));
        }
        if param_grad.len() != self.params.len() {
            return Err(NetError::Shape("parameter gradient buffer has wrong length".into()));
        }
        let mut delta = upstream.to_vec();
        for n in (1..=self.num_layers()).rev() {
            let off = self.layer_offset(n - 1);
            let (rows, cols) = (self.sizes[n], self.sizes[n - 1]);
            let prev = &cache.activations[n - 1];
            for i in 0..rows {
                let di = delta[i];
                let g = &mut param_grad[off + i * cols..off + (i + 1) * cols];
                for (gj, xj) in g.iter_mut().zip(prev) {
                    *gj += di * xj;
                }
                param_grad[off + rows * cols + i] += di;
            }
            let (w, _) = self.layer(n);
            let mut next = vec![0.0; cols];
            for i in 0..rows {
                let di = delta[i];
                for (nj, a) in next.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
                    *nj += a * di;
                }
            }
            if n > 1 {
                for (nj, &y) in next.iter_mut().zip(prev) {
                    *nj *= self.activation.derivative_from_output(y);
                }
            }
            delta = next;
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_parameter_count() {
        let net = init_glorot(&[6, 30, 30, 30, 11], 0).unwrap();
        assert_eq!(net.num_params(), 2411);
        assert_eq!(init_glorot(&[6, 30, 30, 30, 11], 0).unwrap(), net);
        assert_ne!(init_glorot(&[6, 30, 30, 30, 11], 1).unwrap(), net);
    }

    #[test]
    fn glorot_variance() {
        // Pool the first-layer entries over many seeds.
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut count = 0.0;
        for seed in 0..200 {
            let net = init_glorot(&[6, 30, 5], seed).unwrap();
            let (w, b) = net.layer(1);
            assert!(b.iter().all(|&v| v == 0.0));
            for &v in w {
                sum += v;
                sq += v * v;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let var = sq / count - mean * mean;
        let expected = 2.0 / 36.0;
        assert!((var / expected - 1.0).abs() < 0.2, "variance {var}");
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = init_glorot(&[3, 4, 2], 7).unwrap();
        net.set_params(&vec![0.0; net.num_params()]).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let net = Mlp::from_parts(vec![2, 2], Activation::Tanh, vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        assert_eq!(net.predict(&[1.0, 1.0]).unwrap(), vec![3.5, 6.5]);
    }

    #[test]
    fn dimension_and_cache_errors() {
        let net = init_glorot(&[3, 4, 2], 7).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(NetError::Shape(_))));
        let other = init_glorot(&[2, 4, 2], 7).unwrap();
        let cache = other.forward(&[0.1, 0.2]).unwrap();
        let mut g = vec![0.0; net.num_params()];
        assert_eq!(net.backprop(&cache, &[1.0, 1.0], &mut g), Err(NetError::Cache));
        assert!(Mlp::from_parts(vec![2, 2], Activation::Tanh, vec![0.0; 5]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = init_glorot(&[4, 7, 5], 3).unwrap();
        let cache = net.forward(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        let mut g = vec![0.0; net.num_params()];
        let dz = net.backprop(&cache, &[0.0; 5], &mut g).unwrap();
        assert!(g.iter().all(|&v| v == 0.0) && dz.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_net_quadratic_loss_gradient() {
        // ℒ = ½‖Az + b − y‖²: ∂ℒ/∂A = r zᵀ, ∂ℒ/∂b = r.
        let net = Mlp::from_parts(vec![2, 1], Activation::Tanh, vec![0.3, -0.7, 0.2]).unwrap();
        let (z, y) = ([1.5, -2.0], 0.25);
        let cache = net.forward(&z).unwrap();
        let r = cache.output()[0] - y;
        let mut g = vec![0.0; 3];
        net.backprop(&cache, &[r], &mut g).unwrap();
        let expected = [r * z[0], r * z[1], r];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
