//! Versioned JSON checkpoints.
//!
//! ```text
//! {"version":1,"spec":{...},"layers":[{"weights":[[...]],"bias":[...]|null}],"head":{"kind":"is","a":1.0}}
//! ```
//!
//! `weights` is stored input-major (`in_dim` rows of `out_dim` values). Every
//! float is written with 17 significant digits, which round-trips any `f64`.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::error::{Error, Result};
use crate::heads::Head;
use crate::layers::DenseLayer;
use crate::matrix::Matrix;
use crate::network::{Network, NetworkSpec};

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    weights: Vec<Vec<f64>>,
    bias: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointRecord {
    version: u64,
    spec: NetworkSpec,
    layers: Vec<LayerRecord>,
    head: Head,
}

struct SignificantDigits;

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serialises `net` to the checkpoint JSON text.
pub fn to_json(net: &Network) -> Result<String> {
    let record = CheckpointRecord {
        version: CHECKPOINT_VERSION,
        spec: net.spec().clone(),
        layers: net
            .layers()
            .iter()
            .map(|l| {
                if !l.weights().is_finite() || l.bias().is_some_and(|b| b.iter().any(|v| !v.is_finite())) {
                    return Err(Error::NonFinite("save_checkpoint"));
                }
                Ok(LayerRecord {
                    weights: l.weights().to_rows(),
                    bias: l.bias().map(<[f64]>::to_vec),
                })
            })
            .collect::<Result<_>>()?,
        head: net.head(),
    };
    if !spec_floats_finite(&record.spec) {
        return Err(Error::NonFinite("save_checkpoint"));
    }
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SignificantDigits);
    record
        .serialize(&mut ser)
        .map_err(|e| Error::CheckpointSchema(e.to_string()))?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

fn spec_floats_finite(spec: &NetworkSpec) -> bool {
    let head_ok = match spec.head {
        Head::Inhibited { a } => a.is_finite(),
        Head::Softmax => true,
    };
    head_ok
        && spec.dropout_rate.is_finite()
        && spec.loss.evidence_lambda.is_finite()
        && spec.loss.weight_decay.is_finite()
}

/// Parses checkpoint JSON text back into a network.
pub fn from_json(text: &str) -> Result<Network> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::CheckpointSchema(e.to_string()))?;
    let version = value
        .get("version")
        .ok_or_else(|| Error::CheckpointSchema("missing version field".into()))?
        .as_u64()
        .ok_or_else(|| Error::CheckpointSchema("version is not a non-negative integer".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let record: CheckpointRecord =
        serde_json::from_value(value).map_err(|e| Error::CheckpointSchema(e.to_string()))?;
    if record.head != record.spec.head {
        return Err(Error::CheckpointSchema(format!(
            "head {:?} disagrees with spec head {:?}",
            record.head, record.spec.head
        )));
    }
    let layers = record
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let weights = Matrix::from_rows(&l.weights).map_err(|e| match e {
                Error::NonFinite(_) => e,
                other => Error::CheckpointSchema(format!("layer {i} weights: {other}")),
            })?;
            DenseLayer::new(weights, l.bias).map_err(|e| match e {
                Error::NonFinite(_) => e,
                other => Error::CheckpointSchema(format!("layer {i}: {other}")),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_layers(record.spec, layers).map_err(|e| Error::CheckpointSchema(e.to_string()))
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_json(net)?;
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::LossConfig;
    use crate::layers::Activation;
    use crate::network::ForwardKind;
    use crate::rng::RngStream;

    fn sample_net() -> Network {
        let spec = NetworkSpec::inhibited(
            vec![3, 5, 4, 2],
            Activation::Cauchy,
            1.0,
            LossConfig::default(),
        );
        Network::build(&spec, &mut RngStream::new(11, 0)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = sample_net();
        // Awkward values that shortest-repr printers and naive parsers get wrong.
        net.set_param(0, 0.1 + 0.2);
        net.set_param(1, f64::MIN_POSITIVE);
        net.set_param(2, -1.0e-310);
        net.set_param(3, 1e300 / 3.0);
        let back = from_json(&to_json(&net).unwrap()).unwrap();
        assert_eq!(back, net);
        for i in 0..net.param_count() {
            assert_eq!(back.param(i).to_bits(), net.param(i).to_bits());
        }
        let x = Matrix::from_rows(&[[0.3, -2.0, 7.5], [0.0, 0.0, 0.0]]).unwrap();
        let a = net.forward(&x, ForwardKind::Eval, None).unwrap().0;
        let b = back.forward(&x, ForwardKind::Eval, None).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn document_shape() {
        let text = to_json(&sample_net()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["head"]["kind"], "is");
        assert_eq!(v["layers"].as_array().unwrap().len(), 3);
        assert!(v["layers"][2]["bias"].is_null());
        assert_eq!(v["layers"][0]["weights"].as_array().unwrap().len(), 3);
        assert!(text.contains("e0") || text.contains("e-"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = Network::build(&NetworkSpec::softmax(vec![2, 3, 2]), &mut RngStream::new(1, 0)).unwrap();
        save_checkpoint(&net, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), net);
        assert!(matches!(load_checkpoint(dir.path().join("missing.json")), Err(Error::Io { .. })));
    }

    #[test]
    fn version_mismatch() {
        let text = to_json(&sample_net()).unwrap().replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            from_json(&text),
            Err(Error::CheckpointVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn corrupted_documents_are_schema_errors() {
        let good = to_json(&sample_net()).unwrap();
        for bad in [
            &good[..good.len() / 2],
            "",
            "[]",
            "{\"version\":1}",
            &good.replacen("\"layers\":[", "\"layers\":[{\"weights\":[[1.0]],\"bias\":null},", 1),
            &good.replacen("\"kind\":\"is\"", "\"kind\":\"softmax\"", 1),
            &good.replacen("\"version\":1", "\"version\":1,\"extra\":0", 1),
        ] {
            assert!(
                matches!(from_json(bad), Err(Error::CheckpointSchema(_))),
                "{bad:.60}"
            );
        }
    }

    #[test]
    fn non_finite_parameters_are_rejected() {
        let good = to_json(&sample_net()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&good).unwrap();
        let first = v["layers"][0]["weights"][0][0].as_f64().unwrap();
        let text = good.replacen(&format!("{first:.16e}"), "1e999", 1);
        assert!(from_json(&text).is_err());
    }
}
