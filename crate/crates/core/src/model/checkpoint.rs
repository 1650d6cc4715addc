//! Binary checkpoints: magic `MTEC`, JSON header (architecture, training
//! metadata, tensor shapes), raw `f64` payload, CRC-32 trailer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{CheckpointError, Error, Result};

use super::build::build;
use super::network::Network;
use super::spec::ArchitectureSpec;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MTEC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training provenance stored alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointMeta {
    /// Epochs completed.
    pub epoch: usize,
    pub seed: u64,
    /// Dropout rate in effect for the last completed epoch.
    pub dropout_rate: f64,
    /// Architecture kind of the encoder this model was fine-tuned from.
    pub finetuned_from: Option<String>,
    pub config_hash: Option<String>,
    /// Class names in output order (classifiers only).
    pub classes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerShapes {
    name: String,
    params: Vec<Vec<usize>>,
    buffers: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: ArchitectureSpec,
    meta: CheckpointMeta,
    layers: Vec<LayerShapes>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(network: Network, meta: CheckpointMeta) -> Self {
        Self { network, meta }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let net = &self.network;
        let mut payload = Vec::new();
        let mut layers = Vec::new();
        for l in net.layers() {
            let params = l.layer.params();
            let buffers = l.layer.buffers();
            for t in params.iter().chain(&buffers) {
                payload.extend_from_slice(t.data());
            }
            layers.push(LayerShapes {
                name: l.name.clone(),
                params: params.iter().map(|t| t.shape().to_vec()).collect(),
                buffers: buffers.iter().map(|t| t.shape().to_vec()).collect(),
            });
        }
        let header = Header {
            spec: net.spec().clone(),
            meta: self.meta.clone(),
            layers,
        };
        let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        Ok(container::encode(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &json, &payload))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (json, payload) = container::decode(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let header: Header = serde_json::from_slice(json).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let mut network = build(&header.spec, None).map_err(|e| CheckpointError::Header(e.to_string()))?;
        if network.layers().len() != header.layers.len() {
            return Err(CheckpointError::Payload(format!(
                "header lists {} layers, architecture has {}",
                header.layers.len(),
                network.layers().len()
            ))
            .into());
        }
        let mut at = 0;
        for (l, shapes) in network.layers_mut().iter_mut().zip(&header.layers) {
            if l.name != shapes.name {
                return Err(CheckpointError::Payload(format!("layer {} stored as {}", l.name, shapes.name)).into());
            }
            let name = l.name.clone();
            let n_params = l.layer.params().len();
            let targets = l.layer.state_mut();
            let stored = shapes.params.iter().chain(&shapes.buffers);
            if targets.len() != shapes.params.len() + shapes.buffers.len() || n_params != shapes.params.len() {
                return Err(CheckpointError::Payload(format!("layer {name}: tensor count differs")).into());
            }
            for (t, shape) in targets.into_iter().zip(stored) {
                if t.shape() != shape.as_slice() {
                    return Err(CheckpointError::Payload(format!(
                        "layer {name}: stored shape {shape:?}, expected {:?}",
                        t.shape()
                    ))
                    .into());
                }
                let n = t.len();
                let src = payload
                    .get(at..at + n)
                    .ok_or_else(|| CheckpointError::Payload("payload shorter than declared shapes".into()))?;
                t.data_mut().copy_from_slice(src);
                at += n;
            }
            l.layer.enforce_constraints();
        }
        if at != payload.len() {
            return Err(CheckpointError::Payload(format!("{} unused payload values", payload.len() - at)).into());
        }
        Ok(Self {
            network,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Saves `net` with default metadata.
pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(net.clone(), CheckpointMeta::default()).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    Ok(Checkpoint::load(path)?.network)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::{ArchKind, ConvBranchSpec};
    use crate::nn::{Layer, Standardize};
    use crate::tensor::{SeededRng, Tensor};

    fn small(kind: ArchKind) -> ArchitectureSpec {
        let mut s = ArchitectureSpec::new(kind);
        s.delta_t = 5;
        s.outer_width = 10;
        s.bottleneck = 4;
        s.conv = vec![ConvBranchSpec { filters: 2, width: 3 }];
        s.hierarchy.joint_width = 2;
        s.hierarchy.limb_width = 3;
        s.hierarchy.group_width = 4;
        s.hierarchy.body_width = 10;
        s
    }

    fn bits(net: &Network) -> Vec<u64> {
        net.layers()
            .iter()
            .flat_map(|l| {
                let mut v: Vec<u64> = Vec::new();
                for t in l.layer.params().into_iter().chain(l.layer.buffers()) {
                    v.extend(t.data().iter().map(|x| x.to_bits()));
                }
                v
            })
            .collect()
    }

    #[test]
    fn round_trip_all_kinds_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (i, kind) in [ArchKind::Ste, ArchKind::Cte, ArchKind::Hte].into_iter().enumerate() {
            let net = build(&small(kind), Some(&mut SeededRng::new(i as u64))).unwrap();
            let meta = CheckpointMeta {
                epoch: 7,
                seed: 99,
                dropout_rate: 0.1 + 0.2 / 3.0,
                finetuned_from: Some("H-TE".into()),
                config_hash: Some("abc".into()),
                classes: vec!["walk".into(), "wave".into()],
            };
            let path = dir.path().join(format!("{kind}.mtec"));
            Checkpoint::new(net.clone(), meta.clone()).save(&path).unwrap();
            let loaded = Checkpoint::load(&path).unwrap();
            assert_eq!(bits(&loaded.network), bits(&net));
            assert_eq!(loaded.meta, meta);
            assert_eq!(loaded.meta.dropout_rate.to_bits(), meta.dropout_rate.to_bits());
            let x = Tensor::full(&[2, net.input_width()], 0.3);
            let a = net.forward(&x).unwrap();
            let b = loaded.network.forward(&x).unwrap();
            assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
            // save → load → save reproduces the file byte for byte
            assert_eq!(loaded.to_bytes().unwrap(), fs::read(&path).unwrap());
        }
    }

    #[test]
    fn classifier_standardize_survives() {
        let mut net = build(&ArchitectureSpec::classifier(4, 3), Some(&mut SeededRng::new(1))).unwrap();
        let x = Tensor::new(&[3, 4], (0..12).map(|v| v as f64 * 0.7).collect()).unwrap();
        net.layers_mut()[0].layer = Layer::Standardize(Standardize::fit(&x));
        let bytes = Checkpoint::new(net.clone(), CheckpointMeta::default())
            .to_bytes()
            .unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.network, net);
    }

    #[test]
    fn hte_masked_weights_stay_zero() {
        let net = build(&small(ArchKind::Hte), Some(&mut SeededRng::new(5))).unwrap();
        let back = Checkpoint::from_bytes(&Checkpoint::new(net, CheckpointMeta::default()).to_bytes().unwrap())
            .unwrap()
            .network;
        let mut checked = 0;
        for l in back.layers() {
            if let Layer::Masked(m) = &l.layer {
                for (w, k) in m.weights().data().iter().zip(m.mask().data()) {
                    assert_eq!(w * (1.0 - k), 0.0);
                }
                assert!(m.mask().data().contains(&0.0));
                checked += 1;
            }
        }
        assert_eq!(checked, 3);
    }

    #[test]
    fn corrupted_byte_is_a_checksum_error() {
        let net = build(&small(ArchKind::Ste), Some(&mut SeededRng::new(2))).unwrap();
        let bytes = Checkpoint::new(net, CheckpointMeta::default()).to_bytes().unwrap();
        let mut bad = bytes.clone();
        let mid = bytes.len() - 100;
        bad[mid] ^= 0x10;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::Checkpoint(CheckpointError::Checksum { .. }))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() / 2]),
            Err(Error::Checkpoint(CheckpointError::Truncated { .. }))
        ));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&wrong_version),
            Err(Error::Checkpoint(CheckpointError::Version { found: 9, .. }))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_checkpoint("/nonexistent/x.mtec"), Err(Error::Io { .. })));
    }
}
