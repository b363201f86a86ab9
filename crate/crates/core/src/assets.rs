//! Shipped data files. They are compiled into the binary; setting
//! `PFIKIT_ASSETS` to a directory makes every lookup read from disk instead.

use std::path::{Path, PathBuf};

use crate::error::{PfiError, Result};

pub const ASSET_DIR_ENV: &str = "PFIKIT_ASSETS";

const EMBEDDED: &[(&str, &str)] = &[
    ("constants.json", include_str!("../assets/constants.json")),
    ("si_clusters.json", include_str!("../assets/si_clusters.json")),
    ("rh.json", include_str!("../assets/rh.json")),
    ("z_kingham.json", include_str!("../assets/z_kingham.json")),
    ("z_si3_fit.json", include_str!("../assets/z_si3_fit.json")),
    ("z_si4_fit.json", include_str!("../assets/z_si4_fit.json")),
    ("isotopes.json", include_str!("../assets/isotopes.json")),
];

/// Species files searched when a species is requested by name.
pub const SPECIES_FILES: &[&str] = &["si_clusters.json", "rh.json"];

pub fn asset_dir_override() -> Option<PathBuf> {
    std::env::var_os(ASSET_DIR_ENV).map(PathBuf::from)
}

pub fn embedded(name: &str) -> Option<&'static str> {
    EMBEDDED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Read a named asset, honouring the directory override.
pub fn read_asset(name: &str) -> Result<String> {
    if let Some(dir) = asset_dir_override() {
        let path = dir.join(name);
        return std::fs::read_to_string(&path)
            .map_err(|e| PfiError::Config(format!("asset {}: {e}", path.display())));
    }
    embedded(name)
        .map(str::to_owned)
        .ok_or_else(|| PfiError::Config(format!("unknown asset {name}")))
}

/// Resolve a user-supplied reference to a file: an existing path wins,
/// otherwise the name (with or without `.json`) is looked up as an asset.
pub fn read_path_or_asset(reference: &str) -> Result<String> {
    let path = Path::new(reference);
    if path.is_file() {
        return Ok(std::fs::read_to_string(path)?);
    }
    let file = if reference.ends_with(".json") {
        reference.to_owned()
    } else {
        format!("{reference}.json")
    };
    read_asset(&file)
}
