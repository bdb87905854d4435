//! Versioned JSON checkpoints for [`DensityNet`].

use serde::{Deserialize, Serialize};

use super::{DensityNet, InputNorm, Layer};
use crate::error::{Error, Result};
use crate::systems::SystemId;

/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u64,
    state_dim: usize,
    hidden: Vec<usize>,
    layers: Vec<Layer>,
    norm: InputNorm,
    system: Option<SystemId>,
    dt: Option<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<u64>,
}

fn invalid(message: String) -> Error {
    Error::Parse {
        offset: 0,
        line: 0,
        column: 0,
        message,
    }
}

/// Serializes `net` to JSON; floats are written with round-trip-exact
/// formatting so that loading reproduces bit-identical weights.
pub fn save_checkpoint(net: &DensityNet) -> Vec<u8> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        state_dim: net.state_dim,
        hidden: net.hidden_sizes(),
        layers: net.layers.clone(),
        norm: net.norm.clone(),
        system: net.system,
        dt: net.dt,
    };
    serde_json::to_vec(&ck).expect("checkpoint serialization cannot fail")
}

/// Parses a checkpoint produced by [`save_checkpoint`], validating the
/// version and the layer shapes.
pub fn load_checkpoint(bytes: &[u8]) -> Result<DensityNet> {
    let probe: VersionProbe = serde_json::from_slice(bytes).map_err(|e| Error::from_json(&e, bytes))?;
    match probe.version {
        Some(CHECKPOINT_VERSION) => {}
        Some(found) => {
            return Err(Error::UnsupportedVersion {
                found,
                expected: CHECKPOINT_VERSION,
            })
        }
        None => return Err(invalid("checkpoint has no version field".into())),
    }
    let ck: Checkpoint = serde_json::from_slice(bytes).map_err(|e| Error::from_json(&e, bytes))?;

    let io = ck.state_dim + 1;
    if ck.layers.is_empty() || ck.state_dim == 0 {
        return Err(invalid("checkpoint has no layers".into()));
    }
    let mut expected_cols = io;
    for (l, layer) in ck.layers.iter().enumerate() {
        if layer.cols != expected_cols
            || layer.weights.len() != layer.rows * layer.cols
            || layer.bias.len() != layer.rows
            || layer.rows == 0
        {
            return Err(invalid(format!("layer {l} has inconsistent shape")));
        }
        expected_cols = layer.rows;
    }
    if expected_cols != io {
        return Err(invalid(format!("output width {expected_cols} != state_dim + 1")));
    }
    let hidden: Vec<usize> = ck.layers[..ck.layers.len() - 1].iter().map(|l| l.rows).collect();
    if hidden != ck.hidden {
        return Err(invalid("hidden sizes disagree with layer shapes".into()));
    }
    if ck.norm.shift.len() != io
        || ck.norm.scale.len() != io
        || ck.norm.scale.iter().any(|s| !(s.is_finite() && *s != 0.0))
    {
        return Err(invalid("input normalization is malformed".into()));
    }
    let finite = ck
        .layers
        .iter()
        .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()));
    if !finite {
        return Err(invalid("checkpoint contains non-finite parameters".into()));
    }
    Ok(DensityNet {
        state_dim: ck.state_dim,
        layers: ck.layers,
        norm: ck.norm,
        system: ck.system,
        dt: ck.dt,
    })
}
