//! The learned scene: a shared feature network with property, SH and
//! visibility heads.

mod io;
mod light_encoding;
mod network;

pub use io::{load_network, save_network, sidecar_path, NetworkManifest};
pub use light_encoding::{encode_light_condition, LightConditionEncoding, INTENSITY_REF};
pub use network::{NetworkConfig, NetworkSet, PointNodes, G_SCALE, MAX_L};
