//! Network definitions, inference and model bundles.

mod bundle;
mod infer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::PreprocessConfig;
use crate::error::{Error, Result};
use crate::nn::{ActivationKind, LayerSpec, Network, SampleShape};
use crate::rng::SeededRng;
use crate::NUM_CHANNELS;

pub use bundle::{
    load_predictor, predictor_from_bytes, predictor_to_bytes, save_predictor, ModelBundle, BUNDLE_FORMAT_VERSION,
};
pub use infer::{predict_recording, predict_window, RecordingPrediction, StageTimings};

/// A classifier: ordered layers over `input_channels` sequences, ending in a
/// single sigmoid probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input_channels: usize,
    /// Exact input length for fixed-window models. `None` accepts any length
    /// from [`ModelSpec::min_input_len`] up.
    pub input_len: Option<usize>,
    pub layers: Vec<LayerSpec>,
}

/// Dimensions of the three separable blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpgnetDims {
    pub widths: [usize; 3],
    pub kernel: usize,
    pub pool: usize,
    pub spatial_dropout: f64,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for LpgnetDims {
    fn default() -> Self {
        Self {
            widths: [16, 48, 56],
            kernel: 6,
            pool: 2,
            spatial_dropout: 0.1,
            dropout: 0.3,
            bn_momentum: 0.9,
            bn_epsilon: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineDims {
    pub widths: [usize; 3],
    pub kernels: [usize; 3],
    pub pool: usize,
    pub input_len: usize,
}

impl Default for BaselineDims {
    fn default() -> Self {
        Self {
            widths: [32, 32, 32],
            kernels: [8, 6, 5],
            pool: 2,
            input_len: 100,
        }
    }
}

fn head(features: usize) -> [LayerSpec; 2] {
    [
        LayerSpec::Dense {
            input: features,
            output: 1,
        },
        LayerSpec::Activation {
            kind: ActivationKind::Sigmoid,
        },
    ]
}

/// Three Conv1d + ReLU + MaxPool blocks, global average pooling and a
/// logistic output, over fixed-length windows.
pub fn build_baseline(dims: &BaselineDims) -> ModelSpec {
    let mut layers = Vec::new();
    let mut cin = NUM_CHANNELS;
    for (&w, &k) in dims.widths.iter().zip(&dims.kernels) {
        layers.push(LayerSpec::Conv1d {
            in_ch: cin,
            out_ch: w,
            kernel: k,
        });
        layers.push(LayerSpec::Activation {
            kind: ActivationKind::Relu,
        });
        layers.push(LayerSpec::MaxPool1d { width: dims.pool });
        cin = w;
    }
    layers.push(LayerSpec::GlobalAvgPool1d);
    layers.extend(head(cin));
    ModelSpec {
        name: "baseline-cnn".into(),
        input_channels: NUM_CHANNELS,
        input_len: Some(dims.input_len),
        layers,
    }
}

/// Three depthwise-separable blocks with batch norm, ELU and max pooling,
/// then global average pooling, dropout and a logistic output. Spatial
/// dropout is applied to the input.
pub fn build_lpgnet(dims: &LpgnetDims) -> ModelSpec {
    let mut layers = vec![LayerSpec::SpatialDropout {
        rate: dims.spatial_dropout,
    }];
    let mut cin = NUM_CHANNELS;
    for &w in &dims.widths {
        layers.extend([
            LayerSpec::DepthwiseConv1d {
                channels: cin,
                kernel: dims.kernel,
            },
            LayerSpec::PointwiseConv1d { in_ch: cin, out_ch: w },
            LayerSpec::BatchNorm1d {
                channels: w,
                momentum: dims.bn_momentum,
                epsilon: dims.bn_epsilon,
            },
            LayerSpec::Activation {
                kind: ActivationKind::Elu,
            },
            LayerSpec::MaxPool1d { width: dims.pool },
        ]);
        cin = w;
    }
    layers.push(LayerSpec::GlobalAvgPool1d);
    layers.push(LayerSpec::Dropout { rate: dims.dropout });
    layers.extend(head(cin));
    ModelSpec {
        name: "lpgnet".into(),
        input_channels: NUM_CHANNELS,
        input_len: None,
        layers,
    }
}

/// Trainable parameters of a spec.
pub fn count_params(spec: &ModelSpec) -> usize {
    spec.layers.iter().map(LayerSpec::param_count).sum()
}

impl ModelSpec {
    /// Shortest input that survives every convolution and pooling layer.
    pub fn min_input_len(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .fold(1, |len, layer| layer.required_input_len(len))
    }

    /// Checks layer compatibility and the logistic head.
    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            l.validate()?;
        }
        let len = self.input_len.unwrap_or_else(|| self.min_input_len());
        if len < self.min_input_len() {
            return Err(Error::Config(format!(
                "{}: input length {len} is below the minimum {}",
                self.name,
                self.min_input_len()
            )));
        }
        let out = self.layers.iter().try_fold(
            SampleShape::Seq {
                channels: self.input_channels,
                len,
            },
            |s, l| l.output_shape(s),
        )?;
        let n = self.layers.len();
        let logistic = n >= 2
            && matches!(self.layers[n - 2], LayerSpec::Dense { output: 1, .. })
            && matches!(
                self.layers[n - 1],
                LayerSpec::Activation {
                    kind: ActivationKind::Sigmoid
                }
            );
        if out != (SampleShape::Flat { features: 1 }) || !logistic {
            return Err(Error::Config(format!(
                "{} must end in Dense(out=1) followed by a sigmoid",
                self.name
            )));
        }
        Ok(())
    }

    /// Rejects inputs the network cannot take.
    pub fn check_input(&self, channels: usize, len: usize) -> Result<()> {
        if channels != self.input_channels {
            return Err(Error::ShapeMismatch(format!(
                "{} expects {} channels, got {channels}",
                self.name, self.input_channels
            )));
        }
        match self.input_len {
            Some(n) if n != len => Err(Error::ShapeMismatch(format!(
                "{} takes windows of exactly {n} samples, got {len}",
                self.name
            ))),
            _ if len < self.min_input_len() => Err(Error::ShapeMismatch(format!(
                "{} needs at least {} samples, got {len}",
                self.name,
                self.min_input_len()
            ))),
            _ => Ok(()),
        }
    }

    /// Fresh network with initialized weights.
    pub fn build_network(&self, rng: &mut SeededRng) -> Result<Network<f32>> {
        self.validate()?;
        Network::new(&self.layers, rng)
    }

    /// Index of the first layer of the classification head, i.e. the layer
    /// after global average pooling.
    pub fn head_start(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| matches!(l, LayerSpec::GlobalAvgPool1d))
            .map(|i| i + 1)
    }
}

/// Which model and input representation a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Separable CNN on linear prediction residuals at 50 Hz.
    Lpgnet,
    /// The same CNN on normalized VGRF at 100 Hz, without prediction.
    Ablation,
    /// Plain CNN on normalized 100-sample windows; recording probability is
    /// the mean window probability.
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lpgnet, Variant::Ablation, Variant::Baseline];

    pub fn preprocessing(self) -> PreprocessConfig {
        match self {
            Variant::Lpgnet => PreprocessConfig::FILTERED_DECIMATED,
            Variant::Ablation | Variant::Baseline => PreprocessConfig::NORMALIZED,
        }
    }

    pub fn uses_predictor(self) -> bool {
        self == Variant::Lpgnet
    }

    /// Whether the whole recording goes through the network in one pass.
    pub fn full_recording(self) -> bool {
        self != Variant::Baseline
    }

    /// Training window length in samples after preprocessing (two seconds
    /// for the separable CNN, 100 samples for the baseline).
    pub fn window_len(self) -> usize {
        match self {
            Variant::Lpgnet => 100,
            Variant::Ablation => 200,
            Variant::Baseline => 100,
        }
    }

    pub fn spec(self, lpgnet: &LpgnetDims, baseline: &BaselineDims) -> ModelSpec {
        match self {
            Variant::Lpgnet => build_lpgnet(lpgnet),
            Variant::Ablation => ModelSpec {
                name: "lpgnet-ablation".into(),
                ..build_lpgnet(lpgnet)
            },
            Variant::Baseline => build_baseline(baseline),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Variant::Lpgnet => "lpgnet",
            Variant::Ablation => "ablation",
            Variant::Baseline => "baseline",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lpgnet" => Ok(Variant::Lpgnet),
            "ablation" => Ok(Variant::Ablation),
            "baseline" => Ok(Variant::Baseline),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn parameter_counts() {
        assert_eq!(count_params(&build_lpgnet(&LpgnetDims::default())), 4735);
        assert_eq!(count_params(&build_baseline(&BaselineDims::default())), 16001);
        assert_eq!(LayerSpec::Dense { input: 32, output: 1 }.param_count(), 33);
    }

    #[test]
    fn hand_count_of_lpgnet() {
        // (depthwise + pointwise + batch norm) per block, then the head
        let block = |cin: usize, cout: usize| (cin * 6 + cin) + (cin * cout + cout) + 2 * cout;
        let total = block(18, 16) + block(16, 48) + block(48, 56) + 57;
        assert_eq!(total, 4735);
    }

    #[test]
    fn minimum_lengths() {
        let lp = build_lpgnet(&LpgnetDims::default());
        assert_eq!(lp.min_input_len(), 43);
        lp.validate().unwrap();
        assert!(lp.check_input(18, 42).is_err());
        lp.check_input(18, 43).unwrap();
        let base = build_baseline(&BaselineDims::default());
        assert_eq!(base.min_input_len(), 41);
        base.validate().unwrap();
        assert!(matches!(base.check_input(18, 99), Err(Error::ShapeMismatch(_))));
        base.check_input(18, 100).unwrap();
        assert!(base.check_input(17, 100).is_err());
    }

    #[test]
    fn validation_catches_bad_heads() {
        let mut spec = build_lpgnet(&LpgnetDims::default());
        spec.layers.pop();
        assert!(spec.validate().is_err());
        let mut spec = build_baseline(&BaselineDims {
            input_len: 30,
            ..Default::default()
        });
        assert!(spec.validate().is_err());
        spec.input_len = Some(100);
        spec.layers[0] = LayerSpec::Conv1d {
            in_ch: 17,
            out_ch: 32,
            kernel: 8,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = build_lpgnet(&LpgnetDims::default());
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn head_split_point() {
        let spec = build_lpgnet(&LpgnetDims::default());
        let net = spec.build_network(&mut seeded(0)).unwrap();
        let at = spec.head_start().unwrap();
        let (backbone, head) = net.split_at(at);
        assert_eq!(head.param_count(), 57);
        assert_eq!(backbone.param_count(), 4735 - 57);
    }

    #[test]
    fn variant_tags() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("cnn".parse::<Variant>().is_err());
    }
}
