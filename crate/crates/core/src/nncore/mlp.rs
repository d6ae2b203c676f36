use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{softmax_in_place, Loss};
use super::matrix::{Matrix, Scalar};
use crate::error::{dim_err, Error, Result};

/// Standard deviation of the normal weight initializer.
pub const INIT_STD: f64 = 0.01;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
            Activation::Softmax => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Sigmoid,
            4 => Activation::Softmax,
            _ => return None,
        })
    }

    fn apply<T: Scalar>(self, m: &mut Matrix<T>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => m.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero())),
            Activation::Tanh => m.data_mut().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => m
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = T::one() / (T::one() + (-*v).exp())),
            Activation::Softmax => {
                let c = m.cols();
                if c > 0 {
                    m.data_mut().chunks_exact_mut(c).for_each(softmax_in_place);
                }
            }
        }
    }

    /// Maps a gradient w.r.t. the activation output to one w.r.t. its input.
    fn backward<T: Scalar>(self, out: &Matrix<T>, grad: &mut Matrix<T>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, &o) in grad.data_mut().iter_mut().zip(out.data()) {
                    if o <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            Activation::Tanh => {
                for (g, &o) in grad.data_mut().iter_mut().zip(out.data()) {
                    *g *= T::one() - o * o;
                }
            }
            Activation::Sigmoid => {
                for (g, &o) in grad.data_mut().iter_mut().zip(out.data()) {
                    *g *= o * (T::one() - o);
                }
            }
            Activation::Softmax => {
                let c = out.cols();
                for (g_row, p_row) in grad
                    .data_mut()
                    .chunks_exact_mut(c)
                    .zip(out.data().chunks_exact(c))
                {
                    let dot: T = g_row.iter().zip(p_row).map(|(&g, &p)| g * p).sum();
                    for (g, &p) in g_row.iter_mut().zip(p_row) {
                        *g = p * (*g - dot);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    #[serde(default)]
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
            batch_norm: false,
        }
    }

    pub fn with_batch_norm(mut self, on: bool) -> Self {
        self.batch_norm = on;
        self
    }
}

/// Builds a dense stack: `sizes = [in, h1, ..., out]`, `hidden` on every layer but the last.
pub fn stack(
    sizes: &[usize],
    hidden: Activation,
    head: Activation,
    batch_norm: bool,
) -> Vec<LayerSpec> {
    let n = sizes.len().saturating_sub(1);
    (0..n)
        .map(|i| {
            let last = i + 1 == n;
            LayerSpec::new(sizes[i], sizes[i + 1], if last { head } else { hidden })
                .with_batch_norm(batch_norm && !last)
        })
        .collect()
}

/// Affine normalization of pre-activations with running statistics for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    fn new(width: usize) -> Self {
        Self {
            gamma: vec![T::one(); width],
            beta: vec![T::zero(); width],
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    /// `input_dim x output_dim`, row-major.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub norm: Option<BatchNorm<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for normalization layers.
    Train,
    /// Running statistics for normalization layers.
    Eval,
}

#[derive(Debug, Clone)]
struct NormCache<T> {
    x_hat: Matrix<T>,
    inv_std: Vec<T>,
    mean: Vec<T>,
    var: Vec<T>,
}

/// Saved activations of one forward pass, consumed by [`Mlp::backprop`].
#[derive(Debug, Clone)]
pub struct Trace<T> {
    inputs: Vec<Matrix<T>>,
    outputs: Vec<Matrix<T>>,
    norm: Vec<Option<NormCache<T>>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.outputs.last().expect("network has at least one layer")
    }

    pub fn activations(&self) -> &[Matrix<T>] {
        &self.outputs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub gamma: Option<Vec<T>>,
    pub beta: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flat views in the same order as [`Mlp::params_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weights.data());
            out.push(&l.bias[..]);
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(&g[..]);
                out.push(&b[..]);
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Dense feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    seed: u64,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        Self::with_init_std(specs, seed, INIT_STD)
    }

    /// Weights drawn from `N(0, std)`, biases zero.
    pub fn with_init_std(specs: Vec<LayerSpec>, seed: u64, std: f64) -> Result<Self> {
        validate_specs(&specs)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .into_iter()
            .map(|spec| {
                let data = (0..spec.input_dim * spec.output_dim)
                    .map(|_| T::of(normal.sample(&mut rng)))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(spec.input_dim, spec.output_dim, data)
                        .expect("shape matches spec"),
                    bias: vec![T::zero(); spec.output_dim],
                    norm: spec.batch_norm.then(|| BatchNorm::new(spec.output_dim)),
                    spec,
                }
            })
            .collect();
        Ok(Self { layers, seed })
    }

    /// Reassembles a network from stored layers, checking every shape.
    pub fn from_layers(layers: Vec<Layer<T>>, seed: u64) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_specs(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            let s = l.spec;
            let norm_ok = match &l.norm {
                Some(n) => {
                    s.batch_norm
                        && [&n.gamma, &n.beta, &n.running_mean, &n.running_var]
                            .iter()
                            .all(|v| v.len() == s.output_dim)
                }
                None => !s.batch_norm,
            };
            if l.weights.shape() != (s.input_dim, s.output_dim)
                || l.bias.len() != s.output_dim
                || !norm_ok
            {
                return Err(dim_err(format!(
                    "layer {i} parameters do not match its spec"
                )));
            }
        }
        Ok(Self { layers, seed })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").spec.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weights.data().len()
                    + l.bias.len()
                    + l.norm.as_ref().map_or(0, |n| 2 * n.gamma.len())
            })
            .sum()
    }

    /// Post-activation output of every layer, inference mode.
    pub fn forward(&self, batch: &Matrix<T>) -> Result<Vec<Matrix<T>>> {
        Ok(self.forward_trace(batch, Mode::Eval)?.outputs)
    }

    /// Final-layer output, inference mode.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        let mut x = self.check_input(batch)?.clone();
        for layer in &self.layers {
            x = layer_forward(layer, &x, Mode::Eval).0;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, batch: &Matrix<T>, mode: Mode) -> Result<Trace<T>> {
        let mut x = self.check_input(batch)?.clone();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut norm = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer_forward(layer, &x, mode);
            inputs.push(x);
            norm.push(cache);
            x = out.clone();
            outputs.push(out);
        }
        Ok(Trace {
            inputs,
            outputs,
            norm,
        })
    }

    fn check_input<'a>(&self, batch: &'a Matrix<T>) -> Result<&'a Matrix<T>> {
        if batch.cols() != self.input_dim() {
            return Err(dim_err(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(batch)
    }

    /// Backpropagates `d_out` (gradient w.r.t. the final output) through a trace.
    /// Returns parameter gradients and the gradient w.r.t. the network input.
    pub fn backprop(
        &self,
        trace: &Trace<T>,
        d_out: &Matrix<T>,
    ) -> Result<(Gradients<T>, Matrix<T>)> {
        if d_out.shape() != trace.output().shape() {
            return Err(dim_err(format!(
                "output gradient {:?} vs output {:?}",
                d_out.shape(),
                trace.output().shape()
            )));
        }
        let mut grad = d_out.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            layer.spec.activation.backward(&trace.outputs[i], &mut grad);
            let (gamma, beta) = match (&layer.norm, &trace.norm[i]) {
                (Some(bn), Some(cache)) => {
                    let (dz, dg, db) = norm_backward(bn, cache, &grad);
                    grad = dz;
                    (Some(dg), Some(db))
                }
                _ => (None, None),
            };
            let weights = trace.inputs[i].t_matmul(&grad)?;
            let bias = grad.column_sums();
            let d_in = grad.matmul_t(&layer.weights)?;
            layers.push(LayerGrads {
                weights,
                bias,
                gamma,
                beta,
            });
            grad = d_in;
        }
        layers.reverse();
        Ok((Gradients { layers }, grad))
    }

    /// Loss and parameter gradients for one batch (training-mode forward pass).
    pub fn backward(&self, batch: &Matrix<T>, loss: &Loss<'_, T>) -> Result<(T, Gradients<T>)> {
        let trace = self.forward_trace(batch, Mode::Train)?;
        let (value, d_out) = loss.evaluate(trace.output())?;
        let (grads, _) = self.backprop(&trace, &d_out)?;
        Ok((value, grads))
    }

    /// Folds the batch statistics of a training trace into the running statistics.
    pub fn update_running_stats(&mut self, trace: &Trace<T>) {
        let m = T::of(BN_MOMENTUM);
        for (layer, cache) in self.layers.iter_mut().zip(&trace.norm) {
            if let (Some(bn), Some(c)) = (&mut layer.norm, cache) {
                for j in 0..bn.running_mean.len() {
                    bn.running_mean[j] = (T::one() - m) * bn.running_mean[j] + m * c.mean[j];
                    bn.running_var[j] = (T::one() - m) * bn.running_var[j] + m * c.var[j];
                }
            }
        }
    }

    /// Mutable flat views of every trainable parameter.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weights.data_mut());
            out.push(&mut l.bias[..]);
            if let Some(bn) = &mut l.norm {
                out.push(&mut bn.gamma[..]);
                out.push(&mut bn.beta[..]);
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for l in &self.layers {
            out.push(l.weights.data());
            out.push(&l.bias[..]);
            if let Some(bn) = &l.norm {
                out.push(&bn.gamma[..]);
                out.push(&bn.beta[..]);
            }
        }
        out
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    weights: l.weights.cast(),
                    bias: conv(&l.bias),
                    norm: l.norm.as_ref().map(|n| BatchNorm {
                        gamma: conv(&n.gamma),
                        beta: conv(&n.beta),
                        running_mean: conv(&n.running_mean),
                        running_var: conv(&n.running_var),
                    }),
                })
                .collect(),
            seed: self.seed,
        }
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::Config(format!("layer {i} has a zero dimension")));
        }
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].output_dim != w[1].input_dim {
            return Err(dim_err(format!(
                "layer {i} outputs {} but layer {} takes {}",
                w[0].output_dim,
                i + 1,
                w[1].input_dim
            )));
        }
    }
    Ok(())
}

fn layer_forward<T: Scalar>(
    layer: &Layer<T>,
    x: &Matrix<T>,
    mode: Mode,
) -> (Matrix<T>, Option<NormCache<T>>) {
    let mut z = x.matmul(&layer.weights).expect("input width checked");
    z.add_row_vector(&layer.bias);
    let cache = layer.norm.as_ref().map(|bn| norm_forward(bn, &mut z, mode));
    layer.spec.activation.apply(&mut z);
    (z, cache)
}

fn norm_forward<T: Scalar>(bn: &BatchNorm<T>, z: &mut Matrix<T>, mode: Mode) -> NormCache<T> {
    let (n, c) = z.shape();
    let (mean, var) = match mode {
        Mode::Train if n > 0 => {
            let nt = T::of(n as f64);
            let mean: Vec<T> = z.column_sums().into_iter().map(|s| s / nt).collect();
            let mut var = vec![T::zero(); c];
            for r in z.row_iter() {
                for j in 0..c {
                    let d = r[j] - mean[j];
                    var[j] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / nt);
            (mean, var)
        }
        _ => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std: Vec<T> = var
        .iter()
        .map(|&v| T::one() / (v + T::of(BN_EPS)).sqrt())
        .collect();
    let mut x_hat = Matrix::zeros(n, c);
    for i in 0..n {
        for j in 0..c {
            let h = (z.get(i, j) - mean[j]) * inv_std[j];
            x_hat.set(i, j, h);
            z.set(i, j, bn.gamma[j] * h + bn.beta[j]);
        }
    }
    NormCache {
        x_hat,
        inv_std,
        mean,
        var,
    }
}

fn norm_backward<T: Scalar>(
    bn: &BatchNorm<T>,
    cache: &NormCache<T>,
    dy: &Matrix<T>,
) -> (Matrix<T>, Vec<T>, Vec<T>) {
    let (n, c) = dy.shape();
    let nt = T::of(n as f64);
    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    for i in 0..n {
        for j in 0..c {
            d_gamma[j] += dy.get(i, j) * cache.x_hat.get(i, j);
            d_beta[j] += dy.get(i, j);
        }
    }
    // dz = inv_std / n * (n * dx_hat - sum(dx_hat) - x_hat * sum(dx_hat * x_hat))
    let mut dz = Matrix::zeros(n, c);
    for j in 0..c {
        let g = bn.gamma[j];
        let sum_dxh = d_beta[j] * g;
        let sum_dxh_xh = d_gamma[j] * g;
        for i in 0..n {
            let dxh = dy.get(i, j) * g;
            let v =
                cache.inv_std[j] / nt * (nt * dxh - sum_dxh - cache.x_hat.get(i, j) * sum_dxh_xh);
            dz.set(i, j, v);
        }
    }
    (dz, d_gamma, d_beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_net() -> Mlp<f64> {
        let mut net = Mlp::new(vec![LayerSpec::new(2, 2, Activation::Identity)], 0).unwrap();
        let w = net.layers[0].weights.data_mut();
        w.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        net
    }

    #[test]
    fn identity_forward() {
        let out = identity_net()
            .predict(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap())
            .unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn activations_by_definition() {
        let mut relu = Matrix::<f64>::from_rows(&[[-1.0, 2.0]]).unwrap();
        Activation::Relu.apply(&mut relu);
        assert_eq!(relu.data(), &[0.0, 2.0]);

        let mut sm = Matrix::<f64>::zeros(1, 3);
        Activation::Softmax.apply(&mut sm);
        for &v in sm.data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_unchained_specs_and_bad_input() {
        let specs = vec![
            LayerSpec::new(3, 4, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Softmax),
        ];
        assert!(matches!(
            Mlp::<f32>::new(specs, 0),
            Err(Error::Dimension(_))
        ));
        let net = Mlp::<f32>::new(
            stack(&[3, 4, 2], Activation::Relu, Activation::Softmax, false),
            0,
        )
        .unwrap();
        assert!(net.predict(&Matrix::zeros(1, 2)).is_err());
        assert!(Mlp::<f32>::new(vec![LayerSpec::new(0, 1, Activation::Relu)], 0).is_err());
    }

    #[test]
    fn single_linear_unit_mse_gradient() {
        // L = (w*x - t)^2 with w = 0, x = 1, t = 1 gives dL/dw = -2
        let net =
            Mlp::<f64>::with_init_std(vec![LayerSpec::new(1, 1, Activation::Identity)], 0, 0.0)
                .unwrap();
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        let t = Matrix::from_rows(&[[1.0]]).unwrap();
        let (loss, g) = net.backward(&x, &Loss::Mse { target: &t }).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(g.layers[0].weights.data(), &[-2.0]);
        assert_eq!(g.layers[0].bias, vec![-2.0]);
    }

    #[test]
    fn zero_input_batch_gradients() {
        let net = Mlp::<f64>::with_init_std(
            stack(&[3, 5, 4, 2], Activation::Tanh, Activation::Softmax, false),
            3,
            0.5,
        )
        .unwrap();
        let x = Matrix::zeros(4, 3);
        let labels = [0, 1, 1, 0];
        let loss = Loss::CrossEntropy { labels: &labels };
        let trace = net.forward_trace(&x, Mode::Train).unwrap();
        let (_, d_out) = loss.evaluate(trace.output()).unwrap();
        let (g, _) = net.backprop(&trace, &d_out).unwrap();
        assert!(g.layers[0].weights.data().iter().all(|&v| v == 0.0));

        // output-layer bias gradient is the column sum of dL/dlogits
        let mut d_logits = d_out.clone();
        Activation::Softmax.backward(trace.output(), &mut d_logits);
        let expected = d_logits.column_sums();
        for (a, b) in g.layers[2].bias.iter().zip(&expected) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn batch_norm_eval_uses_running_stats() {
        let mut net = Mlp::<f64>::with_init_std(
            stack(&[2, 3, 2], Activation::Relu, Activation::Softmax, true),
            1,
            0.5,
        )
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let before = net.predict(&x).unwrap();
        let trace = net.forward_trace(&x, Mode::Train).unwrap();
        net.update_running_stats(&trace);
        let after = net.predict(&x).unwrap();
        assert_ne!(before, after);
        // inference is row-independent
        let single = net.predict(&x.select_rows(&[1])).unwrap();
        for (a, b) in single.row(0).iter().zip(after.row(1)) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-14);
        }
    }
}
