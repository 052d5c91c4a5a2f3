use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Mode, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Elu,
    Relu,
    Sigmoid,
}

/// Declarative description of one layer. Sequence layers work on
/// `batch x channels x length` tensors, `Dense` on `batch x features`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerSpec {
    DepthwiseConv1d { channels: usize, kernel: usize },
    PointwiseConv1d { in_ch: usize, out_ch: usize },
    Conv1d { in_ch: usize, out_ch: usize, kernel: usize },
    BatchNorm1d { channels: usize, momentum: f64, epsilon: f64 },
    Activation { kind: ActivationKind },
    MaxPool1d { width: usize },
    GlobalAvgPool1d,
    Dense { input: usize, output: usize },
    Dropout { rate: f64 },
    SpatialDropout { rate: f64 },
}

/// Shape of one sample flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleShape {
    Seq { channels: usize, len: usize },
    Flat { features: usize },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::DepthwiseConv1d { channels, kernel } => channels * kernel + channels,
            LayerSpec::PointwiseConv1d { in_ch, out_ch } => in_ch * out_ch + out_ch,
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
            } => in_ch * out_ch * kernel + out_ch,
            LayerSpec::BatchNorm1d { channels, .. } => 2 * channels,
            LayerSpec::Dense { input, output } => input * output + output,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |vals: &[usize]| vals.iter().all(|&v| v > 0);
        let ok = match *self {
            LayerSpec::DepthwiseConv1d { channels, kernel } => positive(&[channels, kernel]),
            LayerSpec::PointwiseConv1d { in_ch, out_ch } => positive(&[in_ch, out_ch]),
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
            } => positive(&[in_ch, out_ch, kernel]),
            LayerSpec::BatchNorm1d {
                channels,
                momentum,
                epsilon,
            } => channels > 0 && (0.0..1.0).contains(&momentum) && epsilon > 0.0,
            LayerSpec::MaxPool1d { width } => width > 0,
            LayerSpec::Dense { input, output } => positive(&[input, output]),
            LayerSpec::Dropout { rate } | LayerSpec::SpatialDropout { rate } => (0.0..1.0).contains(&rate),
            LayerSpec::Activation { .. } | LayerSpec::GlobalAvgPool1d => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid layer {self:?}")))
        }
    }

    /// Propagates a sample shape through the layer.
    pub fn output_shape(&self, input: SampleShape) -> Result<SampleShape> {
        let mismatch = || Error::ShapeMismatch(format!("{self:?} cannot take input {input:?}"));
        use SampleShape::*;
        match (*self, input) {
            (LayerSpec::DepthwiseConv1d { channels, kernel }, Seq { channels: c, len })
                if c == channels && len >= kernel =>
            {
                Ok(Seq {
                    channels,
                    len: len - kernel + 1,
                })
            }
            (LayerSpec::PointwiseConv1d { in_ch, out_ch }, Seq { channels, len }) if channels == in_ch => {
                Ok(Seq { channels: out_ch, len })
            }
            (
                LayerSpec::Conv1d {
                    in_ch,
                    out_ch,
                    kernel,
                },
                Seq { channels, len },
            ) if channels == in_ch && len >= kernel => Ok(Seq {
                channels: out_ch,
                len: len - kernel + 1,
            }),
            (LayerSpec::BatchNorm1d { channels, .. }, Seq { channels: c, .. }) if c == channels => Ok(input),
            (LayerSpec::MaxPool1d { width }, Seq { channels, len }) if len >= width => Ok(Seq {
                channels,
                len: len / width,
            }),
            (LayerSpec::GlobalAvgPool1d, Seq { channels, .. }) => Ok(Flat { features: channels }),
            (LayerSpec::Dense { input: i, output }, Flat { features }) if features == i => {
                Ok(Flat { features: output })
            }
            (LayerSpec::SpatialDropout { .. }, Seq { .. }) => Ok(input),
            (LayerSpec::Activation { .. } | LayerSpec::Dropout { .. }, _) => Ok(input),
            _ => Err(mismatch()),
        }
    }

    /// Smallest input length that yields an output of length `out_len`
    /// (sequence layers only; others pass the length through).
    pub fn required_input_len(&self, out_len: usize) -> usize {
        match *self {
            LayerSpec::DepthwiseConv1d { kernel, .. } | LayerSpec::Conv1d { kernel, .. } => {
                out_len + kernel - 1
            }
            LayerSpec::MaxPool1d { width } => out_len * width,
            _ => out_len,
        }
    }
}

/// Intermediates recorded by a training forward pass.
#[derive(Debug, Clone, Default)]
struct Cache<T> {
    input_shape: Vec<usize>,
    input: Vec<T>,
    aux: Vec<T>,
    stats: Vec<f64>,
    index: Vec<usize>,
    train: bool,
}

/// A layer instance: spec, trainable parameters, non-trainable buffers (batch
/// norm running statistics) and the forward cache.
#[derive(Debug, Clone)]
pub struct Layer<T: Real> {
    spec: LayerSpec,
    params: Vec<Tensor<T>>,
    buffers: Vec<Vec<T>>,
    cache: Option<Cache<T>>,
}

fn glorot<T: Real>(rng: &mut SeededRng, fan_in: usize, fan_out: usize, n: usize) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| T::of(rng.random_range(-limit..limit))).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Valid 1D cross-correlation. `w` is `cout x cin x k`.
#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Real>(
    x: &[T],
    batch: usize,
    cin: usize,
    len: usize,
    w: &[T],
    bias: &[T],
    cout: usize,
    k: usize,
) -> Vec<T> {
    let lo = len - k + 1;
    let mut out = vec![T::zero(); batch * cout * lo];
    for b in 0..batch {
        for co in 0..cout {
            let o = &mut out[(b * cout + co) * lo..][..lo];
            o.fill(bias[co]);
            for ci in 0..cin {
                let xs = &x[(b * cin + ci) * len..][..len];
                for kk in 0..k {
                    let wv = w[(co * cin + ci) * k + kk];
                    for (ov, &xv) in o.iter_mut().zip(&xs[kk..kk + lo]) {
                        *ov += wv * xv;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    g: &[T],
    x: &[T],
    batch: usize,
    cin: usize,
    len: usize,
    w: &[T],
    gw: &mut [T],
    gb: &mut [T],
    cout: usize,
    k: usize,
) -> Vec<T> {
    let lo = len - k + 1;
    let mut gx = vec![T::zero(); batch * cin * len];
    for b in 0..batch {
        for co in 0..cout {
            let go = &g[(b * cout + co) * lo..][..lo];
            gb[co] += go.iter().copied().sum::<T>();
            for ci in 0..cin {
                let xs = &x[(b * cin + ci) * len..][..len];
                let gxs = &mut gx[(b * cin + ci) * len..][..len];
                for kk in 0..k {
                    let widx = (co * cin + ci) * k + kk;
                    let mut acc = T::zero();
                    for (&gv, &xv) in go.iter().zip(&xs[kk..kk + lo]) {
                        acc += gv * xv;
                    }
                    gw[widx] += acc;
                    let wv = w[widx];
                    for (gxv, &gv) in gxs[kk..kk + lo].iter_mut().zip(go) {
                        *gxv += wv * gv;
                    }
                }
            }
        }
    }
    gx
}

impl<T: Real> Layer<T> {
    pub fn new(spec: LayerSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let (params, buffers) = match spec {
            LayerSpec::DepthwiseConv1d { channels, kernel } => (
                vec![
                    Tensor::param(&[channels, kernel], glorot(rng, kernel, kernel, channels * kernel)),
                    Tensor::param(&[channels], vec![T::zero(); channels]),
                ],
                vec![],
            ),
            LayerSpec::PointwiseConv1d { in_ch, out_ch } => (
                vec![
                    Tensor::param(&[out_ch, in_ch], glorot(rng, in_ch, out_ch, in_ch * out_ch)),
                    Tensor::param(&[out_ch], vec![T::zero(); out_ch]),
                ],
                vec![],
            ),
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
            } => (
                vec![
                    Tensor::param(
                        &[out_ch, in_ch, kernel],
                        glorot(rng, in_ch * kernel, out_ch * kernel, out_ch * in_ch * kernel),
                    ),
                    Tensor::param(&[out_ch], vec![T::zero(); out_ch]),
                ],
                vec![],
            ),
            LayerSpec::BatchNorm1d { channels, .. } => (
                vec![
                    Tensor::param(&[channels], vec![T::one(); channels]),
                    Tensor::param(&[channels], vec![T::zero(); channels]),
                ],
                vec![vec![T::zero(); channels], vec![T::one(); channels]],
            ),
            LayerSpec::Dense { input, output } => (
                vec![
                    Tensor::param(&[output, input], glorot(rng, input, output, input * output)),
                    Tensor::param(&[output], vec![T::zero(); output]),
                ],
                vec![],
            ),
            _ => (vec![], vec![]),
        };
        Ok(Self {
            spec,
            params,
            buffers,
            cache: None,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Batch norm running mean and variance; empty for other layers.
    pub fn buffers(&self) -> &[Vec<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.buffers
    }

    /// Copy of the layer in another precision, with fresh gradients.
    pub fn cast<U: Real>(&self) -> Layer<U> {
        Layer {
            spec: self.spec,
            params: self
                .params
                .iter()
                .map(|p| Tensor::param(p.shape(), p.cast::<U>().into_data()))
                .collect(),
            buffers: self
                .buffers
                .iter()
                .map(|b| b.iter().map(|v| U::of(v.f64())).collect())
                .collect(),
            cache: None,
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Runs the layer. With `record` the intermediates needed by
    /// [`Layer::backward`] are kept.
    pub fn forward(&mut self, x: Tensor<T>, mode: Mode, rng: &mut SeededRng, record: bool) -> Result<Tensor<T>> {
        let name = format!("{:?}", self.spec);
        let seq = |x: &Tensor<T>| -> Result<(usize, usize, usize)> {
            x.expect_rank(3, &name)?;
            Ok((x.dim(0), x.dim(1), x.dim(2)))
        };
        let mut cache = Cache {
            input_shape: x.shape().to_vec(),
            train: mode == Mode::Train,
            ..Default::default()
        };
        let out = match self.spec {
            LayerSpec::Conv1d { in_ch, out_ch, .. } | LayerSpec::PointwiseConv1d { in_ch, out_ch } => {
                let k = kernel_of(&self.spec);
                let (b, c, l) = seq(&x)?;
                if c != in_ch || l < k {
                    return Err(Error::ShapeMismatch(format!("{name}: input {:?}", x.shape())));
                }
                let data = conv_forward(
                    x.data(),
                    b,
                    c,
                    l,
                    self.params[0].data(),
                    self.params[1].data(),
                    out_ch,
                    k,
                );
                Tensor::new(vec![b, out_ch, l - k + 1], data)?
            }
            LayerSpec::DepthwiseConv1d { channels, kernel } => {
                let (b, c, l) = seq(&x)?;
                if c != channels || l < kernel {
                    return Err(Error::ShapeMismatch(format!("{name}: input {:?}", x.shape())));
                }
                let lo = l - kernel + 1;
                let w = self.params[0].data();
                let bias = self.params[1].data();
                let xd = x.data();
                let mut out = vec![T::zero(); b * c * lo];
                for bc in 0..b * c {
                    let ch = bc % c;
                    let o = &mut out[bc * lo..][..lo];
                    o.fill(bias[ch]);
                    let xs = &xd[bc * l..][..l];
                    for kk in 0..kernel {
                        let wv = w[ch * kernel + kk];
                        for (ov, &xv) in o.iter_mut().zip(&xs[kk..kk + lo]) {
                            *ov += wv * xv;
                        }
                    }
                }
                Tensor::new(vec![b, c, lo], out)?
            }
            LayerSpec::BatchNorm1d {
                channels,
                momentum,
                epsilon,
            } => {
                let (b, c, l) = seq(&x)?;
                if c != channels {
                    return Err(Error::ShapeMismatch(format!("{name}: input {:?}", x.shape())));
                }
                let n = b * l;
                let xd = x.data();
                let (mean, var): (Vec<f64>, Vec<f64>) = if mode == Mode::Train {
                    if n < 2 {
                        return Err(Error::DegenerateBatch { channel: 0, count: n });
                    }
                    (0..c)
                        .map(|ch| {
                            let vals = || (0..b).flat_map(move |bi| xd[(bi * c + ch) * l..][..l].iter().map(|v| v.f64()));
                            let mean = vals().sum::<f64>() / n as f64;
                            let var = vals().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                            (mean, var)
                        })
                        .unzip()
                } else {
                    (
                        self.buffers[0].iter().map(|v| v.f64()).collect(),
                        self.buffers[1].iter().map(|v| v.f64()).collect(),
                    )
                };
                if mode == Mode::Train {
                    for ch in 0..c {
                        let rm = &mut self.buffers[0][ch];
                        *rm = T::of(momentum * rm.f64() + (1.0 - momentum) * mean[ch]);
                        let rv = &mut self.buffers[1][ch];
                        *rv = T::of(momentum * rv.f64() + (1.0 - momentum) * var[ch]);
                    }
                }
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
                let gamma = self.params[0].data();
                let beta = self.params[1].data();
                let mut xhat = vec![T::zero(); xd.len()];
                let mut out = vec![T::zero(); xd.len()];
                for bi in 0..b {
                    for ch in 0..c {
                        let base = (bi * c + ch) * l;
                        for t in 0..l {
                            let h = (xd[base + t].f64() - mean[ch]) * inv_std[ch];
                            xhat[base + t] = T::of(h);
                            out[base + t] = gamma[ch] * T::of(h) + beta[ch];
                        }
                    }
                }
                cache.aux = xhat;
                cache.stats = inv_std;
                Tensor::new(vec![b, c, l], out)?
            }
            LayerSpec::Activation { kind } => {
                let out: Vec<T> = x
                    .data()
                    .iter()
                    .map(|&v| match kind {
                        ActivationKind::Relu => v.max(T::zero()),
                        ActivationKind::Elu => {
                            if v > T::zero() {
                                v
                            } else {
                                v.exp() - T::one()
                            }
                        }
                        ActivationKind::Sigmoid => T::of(sigmoid(v.f64())),
                    })
                    .collect();
                if record {
                    cache.aux = out.clone();
                }
                Tensor::new(x.shape().to_vec(), out)?
            }
            LayerSpec::MaxPool1d { width } => {
                let (b, c, l) = seq(&x)?;
                if l < width {
                    return Err(Error::ShapeMismatch(format!("{name}: length {l} < pool width")));
                }
                let lo = l / width;
                let xd = x.data();
                let mut out = Vec::with_capacity(b * c * lo);
                let mut index = Vec::with_capacity(b * c * lo);
                for bc in 0..b * c {
                    for t in 0..lo {
                        let start = bc * l + t * width;
                        let mut best = start;
                        for i in start + 1..start + width {
                            if xd[i] > xd[best] {
                                best = i;
                            }
                        }
                        out.push(xd[best]);
                        index.push(best);
                    }
                }
                cache.index = index;
                Tensor::new(vec![b, c, lo], out)?
            }
            LayerSpec::GlobalAvgPool1d => {
                let (b, c, l) = seq(&x)?;
                let out = x
                    .data()
                    .chunks(l)
                    .map(|row| T::of(row.iter().map(|v| v.f64()).sum::<f64>() / l as f64))
                    .collect();
                Tensor::new(vec![b, c], out)?
            }
            LayerSpec::Dense { input, output } => {
                x.expect_rank(2, &name)?;
                if x.dim(1) != input {
                    return Err(Error::ShapeMismatch(format!("{name}: input {:?}", x.shape())));
                }
                let b = x.dim(0);
                let w = self.params[0].data();
                let bias = self.params[1].data();
                let mut out = Vec::with_capacity(b * output);
                for row in x.data().chunks(input) {
                    for o in 0..output {
                        let wr = &w[o * input..][..input];
                        let mut acc = bias[o];
                        for (&wv, &xv) in wr.iter().zip(row) {
                            acc += wv * xv;
                        }
                        out.push(acc);
                    }
                }
                Tensor::new(vec![b, output], out)?
            }
            LayerSpec::Dropout { rate } | LayerSpec::SpatialDropout { rate } => {
                let spatial = matches!(self.spec, LayerSpec::SpatialDropout { .. });
                if spatial {
                    seq(&x)?;
                }
                if mode == Mode::Eval || rate == 0.0 {
                    x.clone()
                } else {
                    let keep = T::of(1.0 / (1.0 - rate));
                    let (units, span) = if spatial {
                        (x.dim(0) * x.dim(1), x.dim(2))
                    } else {
                        (x.numel(), 1)
                    };
                    let mask: Vec<T> = (0..units)
                        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
                        .collect();
                    let out = x
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| v * mask[i / span])
                        .collect();
                    cache.aux = mask;
                    cache.index = vec![span];
                    Tensor::new(x.shape().to_vec(), out)?
                }
            }
        };
        if record {
            cache.input = x.into_data();
            self.cache = Some(cache);
        }
        Ok(out)
    }

    /// Propagates `grad` (gradient w.r.t. this layer's output) back to the
    /// input, adding parameter gradients into the parameter tensors.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or(Error::MissingForwardContext(layer_name(&self.spec)))?;
        let shape = cache.input_shape.clone();
        let g = grad.data();
        let gx: Vec<T> = match self.spec {
            LayerSpec::Conv1d { in_ch, out_ch, .. } | LayerSpec::PointwiseConv1d { in_ch, out_ch } => {
                let k = kernel_of(&self.spec);
                let (b, l) = (shape[0], shape[2]);
                let (w_t, rest) = self.params.split_at_mut(1);
                let w = w_t[0].data().to_vec();
                let gw = w_t[0].grad_mut();
                let gb = rest[0].grad_mut();
                conv_backward(g, &cache.input, b, in_ch, l, &w, gw, gb, out_ch, k)
            }
            LayerSpec::DepthwiseConv1d { channels: c, kernel } => {
                let (b, l) = (shape[0], shape[2]);
                let lo = l - kernel + 1;
                let w = self.params[0].data().to_vec();
                let mut gw = vec![T::zero(); w.len()];
                let mut gb = vec![T::zero(); c];
                let mut gx = vec![T::zero(); b * c * l];
                for bc in 0..b * c {
                    let ch = bc % c;
                    let go = &g[bc * lo..][..lo];
                    let xs = &cache.input[bc * l..][..l];
                    gb[ch] += go.iter().copied().sum::<T>();
                    let gxs = &mut gx[bc * l..][..l];
                    for kk in 0..kernel {
                        let mut acc = T::zero();
                        for (&gv, &xv) in go.iter().zip(&xs[kk..kk + lo]) {
                            acc += gv * xv;
                        }
                        gw[ch * kernel + kk] += acc;
                        let wv = w[ch * kernel + kk];
                        for (gxv, &gv) in gxs[kk..kk + lo].iter_mut().zip(go) {
                            *gxv += wv * gv;
                        }
                    }
                }
                add_into(self.params[0].grad_mut(), &gw);
                add_into(self.params[1].grad_mut(), &gb);
                gx
            }
            LayerSpec::BatchNorm1d { .. } => {
                let (b, c, l) = (shape[0], shape[1], shape[2]);
                let n = (b * l) as f64;
                let gamma: Vec<f64> = self.params[0].data().iter().map(|v| v.f64()).collect();
                let xhat = &cache.aux;
                let mut gx = vec![T::zero(); g.len()];
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for ch in 0..c {
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for bi in 0..b {
                        let base = (bi * c + ch) * l;
                        for t in 0..l {
                            let gv = g[base + t].f64();
                            sum_g += gv;
                            sum_gx += gv * xhat[base + t].f64();
                        }
                    }
                    dgamma[ch] = T::of(sum_gx);
                    dbeta[ch] = T::of(sum_g);
                    let inv = cache.stats[ch];
                    for bi in 0..b {
                        let base = (bi * c + ch) * l;
                        for t in 0..l {
                            let gv = g[base + t].f64();
                            let v = if cache.train {
                                gamma[ch] * inv / n * (n * gv - sum_g - xhat[base + t].f64() * sum_gx)
                            } else {
                                gamma[ch] * inv * gv
                            };
                            gx[base + t] = T::of(v);
                        }
                    }
                }
                add_into(self.params[0].grad_mut(), &dgamma);
                add_into(self.params[1].grad_mut(), &dbeta);
                gx
            }
            LayerSpec::Activation { kind } => g
                .iter()
                .zip(&cache.input)
                .zip(&cache.aux)
                .map(|((&gv, &xv), &yv)| match kind {
                    ActivationKind::Relu => {
                        if xv > T::zero() {
                            gv
                        } else {
                            T::zero()
                        }
                    }
                    ActivationKind::Elu => {
                        if xv > T::zero() {
                            gv
                        } else {
                            gv * (yv + T::one())
                        }
                    }
                    ActivationKind::Sigmoid => gv * yv * (T::one() - yv),
                })
                .collect(),
            LayerSpec::MaxPool1d { .. } => {
                let mut gx = vec![T::zero(); cache.input.len()];
                for (&i, &gv) in cache.index.iter().zip(g) {
                    gx[i] += gv;
                }
                gx
            }
            LayerSpec::GlobalAvgPool1d => {
                let l = shape[2];
                let scale = T::of(1.0 / l as f64);
                g.iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv * scale, l))
                    .collect()
            }
            LayerSpec::Dense { input, output } => {
                let w = self.params[0].data().to_vec();
                let mut gw = vec![T::zero(); w.len()];
                let mut gb = vec![T::zero(); output];
                let mut gx = vec![T::zero(); cache.input.len()];
                for (bi, row) in cache.input.chunks(input).enumerate() {
                    let go = &g[bi * output..][..output];
                    let gxr = &mut gx[bi * input..][..input];
                    for o in 0..output {
                        gb[o] += go[o];
                        let wr = &w[o * input..][..input];
                        let gwr = &mut gw[o * input..][..input];
                        for i in 0..input {
                            gwr[i] += go[o] * row[i];
                            gxr[i] += go[o] * wr[i];
                        }
                    }
                }
                add_into(self.params[0].grad_mut(), &gw);
                add_into(self.params[1].grad_mut(), &gb);
                gx
            }
            LayerSpec::Dropout { .. } | LayerSpec::SpatialDropout { .. } => {
                if cache.aux.is_empty() {
                    g.to_vec()
                } else {
                    let span = cache.index[0];
                    g.iter()
                        .enumerate()
                        .map(|(i, &gv)| gv * cache.aux[i / span])
                        .collect()
                }
            }
        };
        Tensor::new(shape, gx)
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn kernel_of(spec: &LayerSpec) -> usize {
    match *spec {
        LayerSpec::Conv1d { kernel, .. } | LayerSpec::DepthwiseConv1d { kernel, .. } => kernel,
        _ => 1,
    }
}

fn layer_name(spec: &LayerSpec) -> &'static str {
    match spec {
        LayerSpec::DepthwiseConv1d { .. } => "DepthwiseConv1d",
        LayerSpec::PointwiseConv1d { .. } => "PointwiseConv1d",
        LayerSpec::Conv1d { .. } => "Conv1d",
        LayerSpec::BatchNorm1d { .. } => "BatchNorm1d",
        LayerSpec::Activation { .. } => "Activation",
        LayerSpec::MaxPool1d { .. } => "MaxPool1d",
        LayerSpec::GlobalAvgPool1d => "GlobalAvgPool1d",
        LayerSpec::Dense { .. } => "Dense",
        LayerSpec::Dropout { .. } => "Dropout",
        LayerSpec::SpatialDropout { .. } => "SpatialDropout",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn layer(spec: LayerSpec) -> Layer<f64> {
        Layer::new(spec, &mut seeded(0)).unwrap()
    }

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn depthwise_identity_tap_trims_edges() {
        let mut l = layer(LayerSpec::DepthwiseConv1d { channels: 2, kernel: 3 });
        l.params_mut()[0].data_mut().copy_from_slice(&[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let x = t(&[1, 2, 5], (0..10).map(|v| v as f64).collect());
        let y = l.forward(x, Mode::Eval, &mut seeded(0), false).unwrap();
        assert_eq!(y.shape(), &[1, 2, 3]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn pointwise_sums_channels() {
        let mut l = layer(LayerSpec::PointwiseConv1d { in_ch: 2, out_ch: 1 });
        l.params_mut()[0].data_mut().copy_from_slice(&[1.0, 1.0]);
        let x = t(&[1, 2, 3], vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0]);
        let y = l.forward(x, Mode::Eval, &mut seeded(0), false).unwrap();
        assert_eq!(y.data(), &[11.0, 22.0, 33.0]);
    }

    #[test]
    fn conv_output_length() {
        let spec = LayerSpec::Conv1d { in_ch: 18, out_ch: 4, kernel: 8 };
        let out = spec
            .output_shape(SampleShape::Seq { channels: 18, len: 100 })
            .unwrap();
        assert_eq!(out, SampleShape::Seq { channels: 4, len: 93 });
        let mut l = layer(spec);
        let y = l
            .forward(Tensor::zeros(&[2, 18, 100]), Mode::Eval, &mut seeded(0), false)
            .unwrap();
        assert_eq!(y.shape(), &[2, 4, 93]);
        assert!(l.forward(Tensor::zeros(&[2, 18, 7]), Mode::Eval, &mut seeded(0), false).is_err());
    }

    #[test]
    fn maxpool_drops_tail() {
        let mut l = layer(LayerSpec::MaxPool1d { width: 2 });
        let y = l
            .forward(t(&[1, 1, 5], vec![1.0, 3.0, 2.0, 0.0, 5.0]), Mode::Eval, &mut seeded(0), false)
            .unwrap();
        assert_eq!(y.data(), &[3.0, 2.0]);
    }

    #[test]
    fn elu_endpoints() {
        let mut l = layer(LayerSpec::Activation { kind: ActivationKind::Elu });
        let y = l
            .forward(t(&[3], vec![0.0, -1e3, 1.0]), Mode::Eval, &mut seeded(0), false)
            .unwrap();
        assert_eq!(y.data(), &[0.0, -1.0, 1.0]);
    }

    #[test]
    fn gap_of_constant_is_constant() {
        let mut l = layer(LayerSpec::GlobalAvgPool1d);
        for len in [1, 7, 6000] {
            let y = l
                .forward(Tensor::filled(&[1, 2, len], 0.3), Mode::Eval, &mut seeded(0), false)
                .unwrap();
            assert!(y.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn gap_backward_spreads_evenly() {
        let mut l = layer(LayerSpec::GlobalAvgPool1d);
        l.forward(Tensor::zeros(&[1, 2, 4]), Mode::Train, &mut seeded(0), true).unwrap();
        let gx = l.backward(&t(&[1, 2], vec![4.0, 8.0])).unwrap();
        assert_eq!(gx.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn dense_identity_passes_gradient() {
        let mut l = layer(LayerSpec::Dense { input: 3, output: 3 });
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        l.params_mut()[0].data_mut().copy_from_slice(&eye);
        l.forward(t(&[1, 3], vec![1.0, 2.0, 3.0]), Mode::Train, &mut seeded(0), true).unwrap();
        let g = t(&[1, 3], vec![0.5, -1.0, 2.0]);
        assert_eq!(l.backward(&g).unwrap().data(), g.data());
    }

    #[test]
    fn backward_without_forward() {
        let mut l = layer(LayerSpec::Dense { input: 3, output: 1 });
        assert!(matches!(
            l.backward(&Tensor::zeros(&[1, 1])),
            Err(Error::MissingForwardContext("Dense"))
        ));
    }

    #[test]
    fn batchnorm_statistics() {
        let spec = LayerSpec::BatchNorm1d { channels: 2, momentum: 0.9, epsilon: 1e-9 };
        let mut l = layer(spec);
        let mut rng = seeded(3);
        let x = t(&[4, 2, 8], (0..64).map(|_| rng.random_range(-5.0..9.0)).collect());
        let y = l.forward(x.clone(), Mode::Train, &mut rng, false).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..4).flat_map(|b| y.data()[(b * 2 + ch) * 8..][..8].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 32.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
            let xs: Vec<f64> = (0..4).flat_map(|b| x.data()[(b * 2 + ch) * 8..][..8].to_vec()).collect();
            let batch_mean = xs.iter().sum::<f64>() / 32.0;
            assert!((l.buffers()[0][ch] - 0.1 * batch_mean).abs() < 1e-12);
        }
        // eval with fresh running stats is the identity up to epsilon
        let mut fresh = layer(spec);
        let y = fresh.forward(x.clone(), Mode::Eval, &mut rng, false).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let mut one = layer(spec);
        assert!(matches!(
            one.forward(Tensor::zeros(&[1, 2, 1]), Mode::Train, &mut rng, false),
            Err(Error::DegenerateBatch { .. })
        ));
    }

    #[test]
    fn dropout_modes() {
        let x = t(&[2, 3, 50], (0..300).map(|v| v as f64 + 1.0).collect());
        let mut rng = seeded(1);
        for spec in [LayerSpec::Dropout { rate: 0.0 }, LayerSpec::SpatialDropout { rate: 0.0 }] {
            let mut l = layer(spec);
            assert_eq!(l.forward(x.clone(), Mode::Train, &mut rng, false).unwrap(), x);
        }
        let mut l = layer(LayerSpec::SpatialDropout { rate: 0.5 });
        assert_eq!(l.forward(x.clone(), Mode::Eval, &mut rng, false).unwrap(), x);
        let y = l.forward(x.clone(), Mode::Train, &mut rng, false).unwrap();
        for row in y.data().chunks(50) {
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            assert!(zeros == 0 || zeros == 50);
        }
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut l = layer(LayerSpec::Dropout { rate: 0.3 });
        let mut rng = seeded(5);
        let x = t(&[1, 4], vec![1.0, -2.0, 0.5, 3.0]);
        let mut sum = [0.0; 4];
        let trials = 100_000;
        for _ in 0..trials {
            let y = l.forward(x.clone(), Mode::Train, &mut rng, false).unwrap();
            for (s, v) in sum.iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        for (s, v) in sum.iter().zip(x.data()) {
            assert!((s / trials as f64 - v).abs() < 0.01 * v.abs(), "{s} {v}");
        }
    }
}
