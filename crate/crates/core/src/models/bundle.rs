//! On-disk container for trained models and fitted predictors.
//!
//! A bundle is a UTF-8 header of `key: value` lines closed by `end_header`,
//! followed by a binary section: for each array, a little-endian `u64`
//! element count and that many little-endian `f32` values. Predictor
//! coefficients come first (one array per channel), then the network
//! parameters and batch-norm buffers in layer order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{count_params, ModelSpec, Variant};
use crate::dsp::PreprocessConfig;
use crate::error::{Error, Result};
use crate::linpred::LinearPredictor;
use crate::nn::Network;
use crate::NUM_CHANNELS;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "LPGNET-BUNDLE";
const END: &str = "end_header";

/// A classifier with everything needed to go from a raw recording to a
/// probability.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub variant: Variant,
    pub spec: ModelSpec,
    pub network: Network<f32>,
    pub predictor: Option<LinearPredictor>,
    pub preprocessing: PreprocessConfig,
    pub config_hash: String,
    pub format_version: u32,
}

fn write_arrays(out: &mut Vec<u8>, arrays: &[Vec<f32>]) {
    for a in arrays {
        out.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_arrays(mut bytes: &[u8], count: usize) -> Result<Vec<Vec<f32>>> {
    let short = || Error::Format("bundle weight section is truncated".into());
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (len, rest) = bytes.split_first_chunk::<8>().ok_or_else(short)?;
        let len = usize::try_from(u64::from_le_bytes(*len)).map_err(|_| short())?;
        let nbytes = len.checked_mul(4).ok_or_else(short)?;
        if rest.len() < nbytes {
            return Err(short());
        }
        let (data, rest) = rest.split_at(nbytes);
        out.push(
            data.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect(),
        );
        bytes = rest;
    }
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after weights", bytes.len())));
    }
    Ok(out)
}

struct Container {
    header: BTreeMap<String, String>,
    arrays: Vec<Vec<f32>>,
}

impl Container {
    fn encode(header: &[(&str, String)], arrays: &[Vec<f32>]) -> Vec<u8> {
        let mut text = format!("{MAGIC}\n");
        for (k, v) in header {
            text.push_str(&format!("{k}: {v}\n"));
        }
        text.push_str(&format!("arrays: {}\n{END}\n", arrays.len()));
        let mut out = text.into_bytes();
        write_arrays(&mut out, arrays);
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("bundle header: {m}"));
        let marker = format!("\n{END}\n");
        let pos = bytes
            .windows(marker.len())
            .position(|w| w == marker.as_bytes())
            .ok_or_else(|| bad("missing end marker"))?;
        let text = std::str::from_utf8(&bytes[..pos]).map_err(|_| bad("not UTF-8"))?;
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("not a model bundle"));
        }
        let mut header = BTreeMap::new();
        for line in lines {
            let (k, v) = line.split_once(": ").ok_or_else(|| bad(&format!("malformed line `{line}`")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let count: usize = header
            .get("arrays")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing array count"))?;
        let arrays = read_arrays(&bytes[pos + marker.len()..], count)?;
        Ok(Self { header, arrays })
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("bundle header lacks `{key}`")))
    }

    fn check_version(&self) -> Result<u32> {
        let v: u32 = self
            .get("format_version")?
            .parse()
            .map_err(|_| Error::Format("bad format_version".into()))?;
        if v != BUNDLE_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported bundle format version {v}")));
        }
        Ok(v)
    }

    fn take_predictor(&mut self, order: usize) -> Result<LinearPredictor> {
        if self.arrays.len() < NUM_CHANNELS {
            return Err(Error::Format("bundle lacks predictor coefficients".into()));
        }
        let rest = self.arrays.split_off(NUM_CHANNELS);
        let coeffs = std::mem::replace(&mut self.arrays, rest);
        LinearPredictor::new(order, coeffs)
    }
}

fn parse_order(v: &str) -> Result<Option<usize>> {
    match v {
        "none" => Ok(None),
        _ => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Format(format!("bad lp_order `{v}`"))),
    }
}

impl ModelBundle {
    pub fn new(
        variant: Variant,
        spec: ModelSpec,
        network: Network<f32>,
        predictor: Option<LinearPredictor>,
        config_hash: impl Into<String>,
    ) -> Result<Self> {
        if predictor.is_some() != variant.uses_predictor() {
            return Err(Error::ContractViolation(format!(
                "variant {variant} {} a linear predictor",
                if variant.uses_predictor() { "requires" } else { "must not carry" }
            )));
        }
        spec.validate()?;
        if network.specs() != spec.layers {
            return Err(Error::ShapeMismatch("network layers differ from the model spec".into()));
        }
        Ok(Self {
            variant,
            spec,
            network,
            predictor,
            preprocessing: variant.preprocessing(),
            config_hash: config_hash.into(),
            format_version: BUNDLE_FORMAT_VERSION,
        })
    }

    /// CNN parameters plus predictor coefficients.
    pub fn param_count(&self) -> usize {
        count_params(&self.spec) + self.predictor.as_ref().map_or(0, LinearPredictor::total_coefficients)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut arrays: Vec<Vec<f32>> = self
            .predictor
            .iter()
            .flat_map(|lp| lp.coefficients().iter().cloned())
            .collect();
        arrays.extend(self.network.state_arrays());
        let header = [
            ("format_version", self.format_version.to_string()),
            ("kind", "model".to_string()),
            ("variant", self.variant.to_string()),
            ("preprocessing", self.preprocessing.to_string()),
            ("config_hash", self.config_hash.clone()),
            (
                "lp_order",
                self.predictor
                    .as_ref()
                    .map_or("none".to_string(), |lp| lp.order().to_string()),
            ),
            ("spec", serde_json::to_string(&self.spec).expect("spec serializes")),
        ];
        Container::encode(&header, &arrays)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Container::decode(bytes)?;
        let format_version = c.check_version()?;
        if c.get("kind")? != "model" {
            return Err(Error::Format(format!("expected a model bundle, found `{}`", c.get("kind")?)));
        }
        let variant: Variant = c.get("variant")?.parse().map_err(|_| Error::Format("bad variant".into()))?;
        let preprocessing: PreprocessConfig = c.get("preprocessing")?.parse()?;
        let config_hash = c.get("config_hash")?.to_string();
        let spec: ModelSpec =
            serde_json::from_str(c.get("spec")?).map_err(|e| Error::Format(format!("bundle spec: {e}")))?;
        let predictor = match parse_order(c.get("lp_order")?)? {
            Some(order) => Some(c.take_predictor(order)?),
            None => None,
        };
        spec.validate()?;
        let mut network = Network::new(&spec.layers, &mut crate::rng::seeded(0))?;
        network.load_state_arrays(&c.arrays)?;
        let mut bundle = Self::new(variant, spec, network, predictor, config_hash)?;
        bundle.preprocessing = preprocessing;
        bundle.format_version = format_version;
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Serializes a standalone predictor with the preprocessing it was fit on.
pub fn predictor_to_bytes(lp: &LinearPredictor, preprocessing: PreprocessConfig, config_hash: &str) -> Vec<u8> {
    let header = [
        ("format_version", BUNDLE_FORMAT_VERSION.to_string()),
        ("kind", "linear-predictor".to_string()),
        ("preprocessing", preprocessing.to_string()),
        ("config_hash", config_hash.to_string()),
        ("lp_order", lp.order().to_string()),
    ];
    Container::encode(&header, lp.coefficients())
}

pub fn predictor_from_bytes(bytes: &[u8]) -> Result<(LinearPredictor, PreprocessConfig)> {
    let mut c = Container::decode(bytes)?;
    c.check_version()?;
    let preprocessing: PreprocessConfig = c.get("preprocessing")?.parse()?;
    let order = parse_order(c.get("lp_order")?)?
        .ok_or_else(|| Error::Format("file carries no linear predictor".into()))?;
    let lp = c.take_predictor(order)?;
    if c.get("kind")? == "linear-predictor" && !c.arrays.is_empty() {
        return Err(Error::Format("unexpected arrays after predictor coefficients".into()));
    }
    Ok((lp, preprocessing))
}

pub fn save_predictor(path: &Path, lp: &LinearPredictor, preprocessing: PreprocessConfig, config_hash: &str) -> Result<()> {
    fs::write(path, predictor_to_bytes(lp, preprocessing, config_hash)).map_err(|e| Error::io(path, e))
}

/// Reads the predictor from a predictor file or from a model bundle.
pub fn load_predictor(path: &Path) -> Result<(LinearPredictor, PreprocessConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    predictor_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_baseline, build_lpgnet, BaselineDims, LpgnetDims};
    use crate::rng::seeded;

    fn lp() -> LinearPredictor {
        let coeffs = (0..NUM_CHANNELS)
            .map(|c| (0..11).map(|i| (c * 11 + i) as f32 * 1e-3 - 0.1).collect())
            .collect();
        LinearPredictor::new(11, coeffs).unwrap()
    }

    fn lpgnet_bundle() -> ModelBundle {
        let spec = build_lpgnet(&LpgnetDims::default());
        let net = spec.build_network(&mut seeded(5)).unwrap();
        ModelBundle::new(Variant::Lpgnet, spec, net, Some(lp()), "abc123").unwrap()
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let b = lpgnet_bundle();
        assert_eq!(b.param_count(), 4735 + 198);
        let back = ModelBundle::from_bytes(&b.to_bytes()).unwrap();
        assert_eq!(back.spec, b.spec);
        assert_eq!(back.predictor, b.predictor);
        assert_eq!(back.config_hash, "abc123");
        let bits = |n: &Network<f32>| -> Vec<u32> { n.state_arrays().iter().flatten().map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&back.network), bits(&b.network));
        assert_eq!(back.to_bytes(), b.to_bytes());
    }

    #[test]
    fn predictor_presence_follows_variant() {
        let spec = build_baseline(&BaselineDims::default());
        let net = spec.build_network(&mut seeded(1)).unwrap();
        assert!(ModelBundle::new(Variant::Baseline, spec.clone(), net.clone(), Some(lp()), "h").is_err());
        let b = ModelBundle::new(Variant::Baseline, spec, net, None, "h").unwrap();
        let back = ModelBundle::from_bytes(&b.to_bytes()).unwrap();
        assert!(back.predictor.is_none());
        assert_eq!(back.param_count(), 16001);
    }

    #[test]
    fn predictor_file_round_trip() {
        let bytes = predictor_to_bytes(&lp(), PreprocessConfig::FILTERED_DECIMATED, "h");
        let (back, pre) = predictor_from_bytes(&bytes).unwrap();
        assert_eq!(back, lp());
        assert_eq!(back.total_coefficients(), 198);
        assert_eq!(pre, PreprocessConfig::FILTERED_DECIMATED);
        assert!(ModelBundle::from_bytes(&bytes).is_err());
        let (from_model, _) = predictor_from_bytes(&lpgnet_bundle().to_bytes()).unwrap();
        assert_eq!(from_model, lp());
    }

    #[test]
    fn corrupt_bundles_are_rejected() {
        let bytes = lpgnet_bundle().to_bytes();
        assert!(ModelBundle::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(ModelBundle::from_bytes(b"not a bundle").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelBundle::from_bytes(&extra).is_err());
        let text = String::from_utf8_lossy(&bytes[..60]).replace("format_version: 1", "format_version: 9");
        let mut bumped = text.into_bytes();
        bumped.extend_from_slice(&bytes[60..]);
        assert!(ModelBundle::from_bytes(&bumped).is_err());
    }
}
