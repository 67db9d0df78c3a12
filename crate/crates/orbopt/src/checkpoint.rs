//! Final optimizer state on disk: network parameters or circuit angles
//! together with the orbital-rotation parameters.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::report::{fmt_f64, write_atomic};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
#[serde(tag = "kind")]
pub enum Checkpoint {
    /// Network parameters of a VMC run.
    Vmc {
        family: String,
        alpha: usize,
        step: usize,
        params: Vec<f64>,
        kappa: Vec<f64>,
    },
    /// Circuit angles of a VQE run.
    Vqe {
        layout: String,
        layers: usize,
        step: usize,
        params: Vec<f64>,
        kappa: Vec<f64>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Parse(#[from] toml::de::Error),
}

fn write_array(out: &mut String, key: &str, values: &[f64]) {
    let _ = write!(out, "{key} = [");
    for (i, v) in values.iter().enumerate() {
        out.push_str(if i == 0 { "\n  " } else { ",\n  " });
        out.push_str(&fmt_toml(*v));
    }
    out.push_str(if values.is_empty() { "]\n" } else { ",\n]\n" });
}

fn fmt_toml(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        fmt_f64(v)
    }
}

impl Checkpoint {
    pub fn params(&self) -> &[f64] {
        match self {
            Checkpoint::Vmc { params, .. } | Checkpoint::Vqe { params, .. } => params,
        }
    }

    pub fn kappa(&self) -> &[f64] {
        match self {
            Checkpoint::Vmc { kappa, .. } | Checkpoint::Vqe { kappa, .. } => kappa,
        }
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let (params, kappa) = match self {
            Checkpoint::Vmc {
                family,
                alpha,
                step,
                params,
                kappa,
            } => {
                let _ = writeln!(out, "kind = \"vmc\"\nfamily = \"{family}\"\nalpha = {alpha}\nstep = {step}");
                (params, kappa)
            }
            Checkpoint::Vqe {
                layout,
                layers,
                step,
                params,
                kappa,
            } => {
                let _ = writeln!(out, "kind = \"vqe\"\nlayout = \"{layout}\"\nlayers = {layers}\nstep = {step}");
                (params, kappa)
            }
        };
        write_array(&mut out, "params", params);
        write_array(&mut out, "kappa", kappa);
        out
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        Ok(toml::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Replaces `path` in one rename, so readers never see a partial file.
    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        write_atomic(path, self.to_toml().as_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
