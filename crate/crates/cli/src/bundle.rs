//! Weights bundles: a directory holding one cfl pair per weight or statistics
//! array and a `manifest.toml` with the network configuration.

use std::fs;
use std::path::Path;

use nlop::nn::{ArgKind, Model, Params};
use serde::{Deserialize, Serialize};

use crate::cfl::{read_cfl, write_cfl};
use crate::error::{CliError, Result};
use crate::reconet::NetConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.toml";

/// Training settings kept for reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainEcho {
    pub optimizer: String,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub deterministic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    dims: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config: NetConfig,
    training: TrainEcho,
    arrays: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightsBundle {
    pub config: NetConfig,
    pub training: TrainEcho,
    pub arrays: Params<f32>,
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(CliError::Config(format!("array name `{name}` cannot be used as a file name")));
    }
    Ok(())
}

impl WeightsBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut arrays = Vec::new();
        for (name, a) in &self.arrays {
            check_name(name)?;
            write_cfl(&dir.join(name), a)?;
            arrays.push(Entry {
                name: name.clone(),
                dims: a.dims().to_vec(),
            });
        }
        let m = Manifest {
            version: FORMAT_VERSION,
            config: self.config.clone(),
            training: self.training.clone(),
            arrays,
        };
        let text = toml::to_string(&m).map_err(|e| CliError::Config(e.to_string()))?;
        let path = dir.join(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| CliError::Corrupt {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        if m.version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "bundle format version {} (supported: {FORMAT_VERSION})",
                m.version
            )));
        }
        let mut arrays = Params::new();
        for e in m.arrays {
            check_name(&e.name)?;
            let file = dir.join(&e.name);
            let a = read_cfl(&file)?;
            if a.len() != e.dims.iter().product::<usize>() {
                return Err(CliError::Corrupt {
                    path: file,
                    msg: format!("size does not match manifest dimensions {:?}", e.dims),
                });
            }
            arrays.insert(e.name, a.reshape(&e.dims)?);
        }
        Ok(Self {
            config: m.config,
            training: m.training,
            arrays,
        })
    }

    /// Checks that every weight and statistics input of `model` is present
    /// with matching dimensions.
    pub fn check(&self, model: &Model<f32>) -> Result<()> {
        for s in model.inputs().iter().filter(|s| s.kind != ArgKind::Data) {
            match self.arrays.get(&s.name) {
                None => return Err(CliError::Config(format!("bundle lacks `{}`", s.name))),
                Some(a) if a.dims() != s.dims.as_slice() => {
                    return Err(CliError::Config(format!(
                        "bundle array `{}` has dimensions {:?}, network expects {:?}",
                        s.name,
                        a.dims(),
                        s.dims
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
