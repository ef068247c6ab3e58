//! File formats, dataset bundles and configuration loading.

pub mod bundle;
pub mod config;
pub mod manifest;
pub mod raster;

pub use bundle::{read_state, DatasetBundle, Estimates, StateFile};
pub use config::{apply_override, config_to_toml, load_config, parse_config};
pub use manifest::{Manifest, ManifestWriter, Role};
