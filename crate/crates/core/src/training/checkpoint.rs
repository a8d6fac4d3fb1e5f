use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::eval::{BoundingRegion, Method};
use crate::flow::{FlowConfig, FlowModel};

pub const CHECKPOINT_VERSION: u64 = 1;

// Floats are written in shortest round-trip form, so reloading is bit-exact.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u64,
    variant: Method,
    dim: usize,
    n_blocks: usize,
    couplings_per_block: usize,
    hidden_dim: usize,
    #[serde(default)]
    seed: u64,
    standardizer: Standardizer,
    radius: f64,
    alpha: f64,
    parameters: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u64>,
}

pub fn write_checkpoint<W: Write>(region: &BoundingRegion, out: W) -> Result<()> {
    let cfg = region.model.config();
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        variant: region.method,
        dim: cfg.dim,
        n_blocks: cfg.n_blocks,
        couplings_per_block: cfg.couplings_per_block,
        hidden_dim: cfg.hidden_dim,
        seed: cfg.seed,
        standardizer: region.standardizer.clone(),
        radius: region.radius,
        alpha: region.alpha,
        parameters: region
            .model
            .parameters()
            .into_iter()
            .map(|(name, t)| (name, t.data().to_vec()))
            .collect(),
    };
    serde_json::to_writer_pretty(out, &file)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<BoundingRegion> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let bad = |e: serde_json::Error| Error::Checkpoint(format!("malformed checkpoint: {e}"));
    let probe: VersionProbe = serde_json::from_str(&text).map_err(bad)?;
    match probe.format_version {
        Some(CHECKPOINT_VERSION) => {}
        Some(found) => {
            return Err(Error::CheckpointVersion { found, supported: CHECKPOINT_VERSION });
        }
        None => return Err(Error::Checkpoint("missing format_version".into())),
    }
    let file: CheckpointFile = serde_json::from_str(&text).map_err(bad)?;
    let config = FlowConfig::new(file.dim, file.variant.flow_variant())
        .with_blocks(file.n_blocks, file.couplings_per_block)
        .with_hidden_dim(file.hidden_dim)
        .with_seed(file.seed);
    let mut model = FlowModel::init(config).map_err(|e| Error::Checkpoint(format!("architecture: {e}")))?;
    let names: Vec<(String, usize)> = model.parameters().into_iter().map(|(n, t)| (n, t.len())).collect();
    if names.len() != file.parameters.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter arrays, found {}",
            names.len(),
            file.parameters.len()
        )));
    }
    for ((name, len), slot) in names.iter().zip(model.parameters_mut()) {
        let values = file
            .parameters
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{name}'")))?;
        if values.len() != *len {
            return Err(Error::Checkpoint(format!(
                "parameter '{name}' has {} values, expected {len}",
                values.len()
            )));
        }
        slot.data_mut().copy_from_slice(values);
    }
    BoundingRegion::new(model, file.radius, file.alpha, file.standardizer, file.variant)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(region: &BoundingRegion, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(region, &mut w)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BoundingRegion> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
