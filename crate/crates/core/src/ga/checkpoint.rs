use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::query::Genome;

use super::{GaConfig, Individual, RunState, RunStatus};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned snapshot of a run. `run` carries whatever the caller keeps
/// alongside the population (loss parameters, budget, corpus size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format_version: u32,
    pub config: GaConfig,
    pub rng: ChaCha8Rng,
    pub generation: u64,
    pub status: RunStatus,
    pub population: Vec<Individual>,
    pub pending_injections: Vec<Genome>,
    pub run: M,
}

impl<M> Checkpoint<M> {
    pub fn capture(state: &RunState, config: &GaConfig, run: M) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: config.clone(),
            rng: state.rng.clone(),
            generation: state.generation,
            status: state.status,
            population: state.population.clone(),
            pending_injections: state.pending_injections.iter().cloned().collect(),
            run,
        }
    }

    pub fn restore(&self) -> RunState {
        RunState {
            generation: self.generation,
            population: self.population.clone(),
            status: self.status,
            pending_injections: self.pending_injections.iter().cloned().collect(),
            rng: self.rng.clone(),
        }
    }
}

/// Writes through a sibling temp file and a rename, so readers see either
/// the old file or the new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    let tmp = dir.join(name);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

pub fn write_checkpoint<M: Serialize>(path: &Path, checkpoint: &Checkpoint<M>) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(checkpoint).map_err(std::io::Error::from)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_checkpoint<M: DeserializeOwned>(path: &Path) -> std::io::Result<Checkpoint<M>> {
    let bytes = std::fs::read(path)?;
    let cp: Checkpoint<M> = serde_json::from_slice(&bytes).map_err(std::io::Error::from)?;
    if cp.format_version != CHECKPOINT_VERSION {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unsupported checkpoint version {}", cp.format_version),
        ));
    }
    Ok(cp)
}
