//! Network persistence: the parameter checkpoint plus a JSON sidecar
//! (`<checkpoint>.json`) describing how to rebuild the networks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::{NetworkConfig, NetworkSet};
use crate::autodiff::{read_checkpoint, write_checkpoint, AdamState, Checkpoint};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Activation choices stored alongside the configuration so a reader can
/// refuse models built with different conventions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activations {
    pub hidden: String,
    pub sigma: String,
    pub albedo: String,
    pub g: String,
    pub visibility: String,
}

impl Default for Activations {
    fn default() -> Self {
        Self {
            hidden: "relu".into(),
            sigma: "softplus".into(),
            albedo: "logistic".into(),
            g: "0.999*tanh".into(),
            visibility: "logistic".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkManifest {
    pub version: u32,
    pub network: NetworkConfig,
    pub activations: Activations,
    pub iteration: u64,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `<path>` (checkpoint) and `<path>.json` (manifest).
pub fn save_network(path: &Path, net: &NetworkSet<f32>, adam: Option<&AdamState<f32>>, iteration: u64) -> Result<()> {
    let manifest = NetworkManifest {
        version: MANIFEST_VERSION,
        network: net.cfg.clone(),
        activations: Activations::default(),
        iteration,
    };
    write_checkpoint(path, &net.params, adam, iteration)?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&side, e))
}

/// Loads a network saved by [`save_network`], returning the raw checkpoint
/// (for its optimizer state) alongside.
pub fn load_network(path: &Path) -> Result<(NetworkSet<f32>, Checkpoint)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let manifest: NetworkManifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Data(format!("{}: unsupported manifest version {}", side.display(), manifest.version)));
    }
    if manifest.activations != Activations::default() {
        return Err(Error::Data(format!("{}: unsupported activation set", side.display())));
    }
    let ckpt = read_checkpoint(path)?;
    let net = NetworkSet::from_params(manifest.network, ckpt.params.clone())
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok((net, ckpt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::network::tests::tiny;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.nmckpt");
        let net = NetworkSet::<f32>::init(tiny(), 9).unwrap();
        save_network(&p, &net, None, 17).unwrap();
        assert!(sidecar_path(&p).exists());
        let (back, ck) = load_network(&p).unwrap();
        assert_eq!(ck.iteration, 17);
        assert_eq!(back.params, net.params);
        assert_eq!(back.cfg, net.cfg);
        std::fs::remove_file(sidecar_path(&p)).unwrap();
        assert!(matches!(load_network(&p), Err(Error::Io { .. })));
    }
}
