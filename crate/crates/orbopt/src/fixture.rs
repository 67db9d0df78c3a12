//! Committed molecular fixtures: an FCIDUMP plus a TOML file with reference
//! energies.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::fcidump::{self, Fcidump, FcidumpError};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FixtureMeta {
    pub name: String,
    pub basis: String,
    pub description: String,
    pub norb: usize,
    pub nelec: usize,
    pub e_hf: f64,
    pub e_fci: f64,
    pub generator: String,
    pub geometry_angstrom: Vec<(String, f64, f64, f64)>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Meta { path: String, source: toml::de::Error },
    #[error(transparent)]
    Fcidump(#[from] FcidumpError),
    #[error("{0}: metadata disagrees with the FCIDUMP header")]
    Mismatch(String),
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub meta: FixtureMeta,
    pub dump: Fcidump,
}

/// The repository's `fixtures/` directory.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_meta(path: &Path) -> Result<FixtureMeta, FixtureError> {
    let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| FixtureError::Meta {
        path: path.display().to_string(),
        source,
    })
}

/// Loads `<dir>/<name>.fcidump` and `<dir>/<name>.toml`.
pub fn load_from(dir: &Path, name: &str) -> Result<Fixture, FixtureError> {
    let meta = read_meta(&dir.join(format!("{name}.toml")))?;
    let dump = fcidump::read(&dir.join(format!("{name}.fcidump")))?;
    if meta.norb != dump.header.norb || meta.nelec != dump.header.nelec {
        return Err(FixtureError::Mismatch(name.to_string()));
    }
    Ok(Fixture { meta, dump })
}

pub fn load(name: &str) -> Result<Fixture, FixtureError> {
    load_from(&fixtures_dir(), name)
}
