use super::layers::SampleShape;
use super::{Layer, LayerSpec, Mode, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::{seeded, SeededRng};

/// A sequential stack of layers.
#[derive(Debug, Clone)]
pub struct Network<T: Real = f32> {
    layers: Vec<Layer<T>>,
    forward_calls: u64,
}

impl<T: Real> Network<T> {
    /// Builds and initializes the layers in order.
    pub fn new(specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Self> {
        let layers = specs.iter().map(|&s| Layer::new(s, rng)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_layers(layers))
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Self {
        Self {
            layers,
            forward_calls: 0,
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| *l.spec()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec().param_count()).sum()
    }

    /// Output shape for a single sample of shape `input`.
    pub fn output_shape(&self, input: SampleShape) -> Result<SampleShape> {
        self.layers.iter().try_fold(input, |s, l| l.spec().output_shape(s))
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward(&mut self, x: Tensor<T>, mode: Mode, rng: &mut SeededRng) -> Result<Tensor<T>> {
        self.forward_calls += 1;
        self.layers.iter_mut().try_fold(x, |x, l| l.forward(x, mode, rng, true))
    }

    /// Evaluation-mode forward pass without caching.
    pub fn infer(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.forward_calls += 1;
        let mut rng = seeded(0);
        self.layers
            .iter_mut()
            .try_fold(x, |x, l| l.forward(x, Mode::Eval, &mut rng, false))
    }

    /// Number of forward passes run so far.
    pub fn forward_calls(&self) -> u64 {
        self.forward_calls
    }

    pub fn reset_forward_calls(&mut self) {
        self.forward_calls = 0;
    }

    /// Back-propagates the gradient of the loss w.r.t. the network output and
    /// returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        self.layers.iter_mut().rev().try_fold(grad, |g, l| l.backward(&g))
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.params_mut().iter_mut().for_each(Tensor::zero_grad);
        }
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// All parameters followed by all batch-norm buffers, layer by layer.
    pub fn state_arrays(&self) -> Vec<Vec<T>> {
        let mut out: Vec<Vec<T>> = self.params().iter().map(|p| p.data().to_vec()).collect();
        for l in &self.layers {
            out.extend(l.buffers().iter().cloned());
        }
        out
    }

    pub fn load_state_arrays(&mut self, arrays: &[Vec<T>]) -> Result<()> {
        let expected = self.state_arrays();
        if arrays.len() != expected.len() {
            return Err(Error::Format(format!(
                "expected {} state arrays, found {}",
                expected.len(),
                arrays.len()
            )));
        }
        for (i, (a, e)) in arrays.iter().zip(&expected).enumerate() {
            if a.len() != e.len() {
                return Err(Error::Format(format!(
                    "state array {i} has {} values, expected {}",
                    a.len(),
                    e.len()
                )));
            }
        }
        let mut it = arrays.iter();
        for p in self.params_mut() {
            p.data_mut().copy_from_slice(it.next().expect("counted"));
        }
        for l in &mut self.layers {
            for b in l.buffers_mut() {
                b.copy_from_slice(it.next().expect("counted"));
            }
        }
        Ok(())
    }

    /// Splits into the first `at` layers and the rest.
    pub fn split_at(&self, at: usize) -> (Network<T>, Network<T>) {
        let (a, b) = self.layers.split_at(at.min(self.layers.len()));
        (Self::from_layers(a.to_vec()), Self::from_layers(b.to_vec()))
    }

    /// Concatenates two networks.
    pub fn join(mut self, tail: Network<T>) -> Network<T> {
        self.layers.extend(tail.layers);
        self
    }

    /// Index of the first global-average-pooling layer, if any.
    pub fn pooling_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| matches!(l.spec(), LayerSpec::GlobalAvgPool1d))
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network::from_layers(self.layers.iter().map(Layer::cast).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ActivationKind;

    fn small() -> Network<f64> {
        let specs = [
            LayerSpec::Conv1d {
                in_ch: 2,
                out_ch: 3,
                kernel: 3,
            },
            LayerSpec::BatchNorm1d {
                channels: 3,
                momentum: 0.9,
                epsilon: 1e-3,
            },
            LayerSpec::Activation {
                kind: ActivationKind::Elu,
            },
            LayerSpec::GlobalAvgPool1d,
            LayerSpec::Dense { input: 3, output: 1 },
        ];
        Network::new(&specs, &mut seeded(1)).unwrap()
    }

    #[test]
    fn state_round_trip() {
        let a = small();
        let mut b = Network::<f64>::new(&a.specs(), &mut seeded(2)).unwrap();
        assert_ne!(a.state_arrays(), b.state_arrays());
        b.load_state_arrays(&a.state_arrays()).unwrap();
        assert_eq!(a.state_arrays(), b.state_arrays());
        assert!(b.load_state_arrays(&a.state_arrays()[1..]).is_err());
    }

    #[test]
    fn split_and_join_preserve_output() {
        let mut net = small();
        let x = Tensor::new(vec![1, 2, 6], (0..12).map(|v| v as f64 * 0.1).collect()).unwrap();
        let full = net.infer(x.clone()).unwrap();
        let at = net.pooling_index().unwrap() + 1;
        let (mut head, mut tail) = net.split_at(at);
        let feats = head.infer(x).unwrap();
        assert_eq!(feats.shape(), &[1, 3]);
        assert_eq!(tail.infer(feats).unwrap().data(), full.data());
        assert_eq!(head.join(tail).param_count(), net.param_count());
    }

    #[test]
    fn counts_forward_calls() {
        let mut net = small();
        let x = Tensor::new(vec![2, 2, 5], vec![0.5; 20]).unwrap();
        net.infer(x.clone()).unwrap();
        net.forward(x, Mode::Train, &mut seeded(0)).unwrap();
        assert_eq!(net.forward_calls(), 2);
    }
}
