//! Model file format.
//!
//! ```text
//! <N>\n                 decimal count of manifest lines
//! <N lines of JSON>     ModelManifest, pretty-printed
//! <payload>             every parameter as little-endian f64, in manifest order
//! ```
//!
//! Parameter `offset` and `length` are byte positions within the payload. The
//! entries must tile it exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, Network};
use crate::datapipe::{MinMaxScaler, WindowConfig};
use crate::layers::{Layer, LayerParams, LayerSpec};
use crate::tensor::{RngState, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dims: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub dataset_fingerprint: String,
    pub window: WindowConfig,
    pub split_ratio: f64,
    pub shuffled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub architecture: Architecture,
    pub parameters: Vec<ParamEntry>,
    pub training: ModelMeta,
    pub scaler: MinMaxScaler,
}

const F64_BYTES: usize = std::mem::size_of::<f64>();

fn manifest_for(net: &Network, scaler: MinMaxScaler, meta: &ModelMeta) -> ModelManifest {
    let mut offset = 0;
    let parameters = net
        .named_params()
        .into_iter()
        .map(|(name, t)| {
            let length = t.numel() * F64_BYTES;
            let e = ParamEntry {
                name,
                shape: t.dims().to_vec(),
                offset,
                length,
            };
            offset += length;
            e
        })
        .collect();
    ModelManifest {
        format_version: FORMAT_VERSION,
        architecture: Architecture {
            input_dims: net.input_dims().to_vec(),
            layers: net.specs(),
        },
        parameters,
        training: meta.clone(),
        scaler,
    }
}

/// Writes the model atomically: a temporary file in the target directory is
/// renamed over `path` only once fully written.
pub fn save(net: &Network, scaler: MinMaxScaler, meta: &ModelMeta, path: &Path) -> Result<(), ModelError> {
    let manifest = manifest_for(net, scaler, meta);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| ModelError::Format(e.to_string()))?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        write!(w, "{}\n{}\n", json.lines().count(), json)?;
        for (_, t) in net.named_params() {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| ModelError::Io(e.error))?;
    Ok(())
}

fn read_header(reader: &mut impl BufRead) -> Result<ModelManifest, ModelError> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let count: usize = line
        .trim_end()
        .parse()
        .map_err(|_| ModelError::Format(format!("bad manifest line count {:?}", line.trim_end())))?;
    let mut json = String::new();
    for i in 0..count {
        if reader.read_line(&mut json)? == 0 {
            return Err(ModelError::Format(format!("manifest ends after {i} of {count} lines")));
        }
    }
    // Peek at the version first so a future layout reports as such.
    let value: serde_json::Value = serde_json::from_str(&json).map_err(|e| ModelError::Format(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ModelError::Format("missing format_version".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(ModelError::Version {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| ModelError::Format(e.to_string()))
}

/// Reads and validates only the manifest.
pub fn read_manifest(path: &Path) -> Result<ModelManifest, ModelError> {
    read_header(&mut BufReader::new(File::open(path)?))
}

fn check_tiling(entries: &[ParamEntry]) -> Result<usize, ModelError> {
    let mut expected = 0;
    for e in entries {
        let numel: usize = e.shape.iter().product();
        if e.offset != expected || e.length != numel * F64_BYTES {
            return Err(ModelError::Format(format!(
                "parameter `{}` at offset {} length {} does not tile the payload (expected offset {}, length {})",
                e.name,
                e.offset,
                e.length,
                expected,
                numel * F64_BYTES
            )));
        }
        expected += e.length;
    }
    Ok(expected)
}

/// Loads a model saved by [`save`].
pub fn load(path: &Path) -> Result<(Network, MinMaxScaler, ModelMeta), ModelError> {
    let mut reader = BufReader::new(File::open(path)?);
    let manifest = read_header(&mut reader)?;
    let total = check_tiling(&manifest.parameters)?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != total {
        return Err(ModelError::CorruptPayload(format!(
            "expected {total} bytes, found {}",
            payload.len()
        )));
    }

    let mut entries = manifest.parameters.iter();
    let mut layers = Vec::with_capacity(manifest.architecture.layers.len());
    for (i, spec) in manifest.architecture.layers.iter().enumerate() {
        let template = Layer::init(spec, &mut RngState::new(0)).map_err(|source| ModelError::Compose { index: i, source })?;
        let mut params = LayerParams::new();
        for (name, _) in template.params().iter() {
            let qualified = format!("{i}.{name}");
            let e = entries
                .next()
                .ok_or_else(|| ModelError::Format(format!("missing parameter `{qualified}`")))?;
            if e.name != qualified {
                return Err(ModelError::Format(format!("expected parameter `{qualified}`, found `{}`", e.name)));
            }
            let data = payload[e.offset..e.offset + e.length]
                .chunks_exact(F64_BYTES)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::from_vec(e.shape.clone(), data).map_err(|err| ModelError::Format(err.to_string()))?;
            params
                .insert(name, t)
                .map_err(|source| ModelError::Compose { index: i, source })?;
        }
        layers.push(Layer::with_params(spec, params).map_err(|source| ModelError::Compose { index: i, source })?);
    }
    if let Some(e) = entries.next() {
        return Err(ModelError::Format(format!("unexpected parameter `{}`", e.name)));
    }
    let net = Network::new(manifest.architecture.input_dims, layers)?;
    Ok((net, manifest.scaler, manifest.training))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::zoo::{build_cnn_lstm, build_lstm_baseline, CnnLstmConfig, LstmBaselineConfig};

    fn meta() -> ModelMeta {
        ModelMeta {
            model: "cnn-lstm".into(),
            seed: 3,
            epochs_run: 2,
            dataset_fingerprint: "abc".into(),
            window: WindowConfig {
                window: 36,
                outer_steps: 2,
                horizon: 1,
            },
            split_ratio: 0.8,
            shuffled: false,
        }
    }

    fn small_net() -> Network {
        let cfg = CnnLstmConfig {
            window: 36,
            outer_steps: 2,
            conv_channels: [2, 3, 2],
            lstm_units: 3,
            ..Default::default()
        };
        build_cnn_lstm(&cfg, &mut RngState::new(5)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let net = small_net();
        let scaler = MinMaxScaler::new(1.5, 9.25).unwrap();
        save(&net, scaler, &meta(), &path).unwrap();
        let (back, s2, m2) = load(&path).unwrap();
        assert_eq!(s2, scaler);
        assert_eq!(m2, meta());
        assert_eq!(back.specs(), net.specs());
        let x = Tensor::random_uniform(&Shape::new(vec![100, 2, 18, 1]).unwrap(), 0.0, 1.0, &mut RngState::new(8)).unwrap();
        let a = net.predict(&x).unwrap();
        let b = back.predict(&x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        assert_eq!(read_manifest(&path).unwrap().parameters.len(), net.named_params().len());
    }

    #[test]
    fn baseline_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lstm.bin");
        let net = build_lstm_baseline(&LstmBaselineConfig { window: 6, units: 4, dropout: 0.5 }, &mut RngState::new(1)).unwrap();
        save(&net, MinMaxScaler::new(0.0, 1.0).unwrap(), &meta(), &path).unwrap();
        let (back, _, _) = load(&path).unwrap();
        for ((n1, t1), (n2, t2)) in net.named_params().iter().zip(back.named_params().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2);
        }
    }

    fn rewrite_manifest(path: &Path, edit: impl Fn(&mut serde_json::Value)) {
        let bytes = std::fs::read(path).unwrap();
        let mut reader = BufReader::new(&bytes[..]);
        let manifest = read_header(&mut reader).unwrap();
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload).unwrap();
        let mut value = serde_json::to_value(&manifest).unwrap();
        edit(&mut value);
        let json = serde_json::to_string_pretty(&value).unwrap();
        let mut out = format!("{}\n{}\n", json.lines().count(), json).into_bytes();
        out.extend_from_slice(&payload);
        std::fs::write(path, out).unwrap();
    }

    #[test]
    fn unknown_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save(&small_net(), MinMaxScaler::new(0.0, 1.0).unwrap(), &meta(), &path).unwrap();
        rewrite_manifest(&path, |v| v["format_version"] = 2.into());
        assert!(matches!(load(&path), Err(ModelError::Version { found: 2, supported: 1 })));
    }

    #[test]
    fn tampered_length_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save(&small_net(), MinMaxScaler::new(0.0, 1.0).unwrap(), &meta(), &path).unwrap();
        rewrite_manifest(&path, |v| {
            let l = v["parameters"][0]["length"].as_u64().unwrap();
            v["parameters"][0]["length"] = (l - 8).into();
        });
        assert!(matches!(load(&path), Err(ModelError::Format(_))));
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save(&small_net(), MinMaxScaler::new(0.0, 1.0).unwrap(), &meta(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load(&path), Err(ModelError::CorruptPayload(_))));
        assert!(read_manifest(&path).is_ok());
    }

    #[test]
    fn garbage_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        std::fs::write(&path, b"not a model").unwrap();
        assert!(matches!(load(&path), Err(ModelError::Format(_))));
    }
}
