//! Ensemble artifact files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "LLPE" | version u32 | meta_len u32 | meta JSON | n_blocks u64 | blocks…
//! ```
//!
//! The metadata embeds the full [`Provenance`] — sampler configuration,
//! parent hashes, diverged flag — so a loaded ensemble reconstructs exactly,
//! including the mask recipe of MC-dropout ensembles (one parameter block
//! plus the seed and drop rate from the configuration). Parameter blocks are
//! the same encoding the network parameter files use; writing the same
//! ensemble twice produces identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{read_params_block, write_params_block};
use crate::samplers::{DropoutEnsemble, Ensemble, Provenance, SamplerKind, Scope};

const MAGIC: &[u8; 4] = b"LLPE";
pub const ENSEMBLE_FILE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleMeta {
    /// Inputs hash of the run manifest that produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest: Option<String>,
    provenance: Provenance,
}

/// Write `ens` to `path`; `manifest` is the inputs hash of the producing run,
/// stored for downstream artifact checks.
pub fn save_ensemble(ens: &Ensemble, path: &Path, manifest: Option<&str>) -> Result<()> {
    let meta = EnsembleMeta {
        manifest: manifest.map(str::to_owned),
        provenance: ens.provenance().clone(),
    };
    let meta_json = serde_json::to_vec(&meta).expect("ensemble metadata serializes");
    if meta_json.len() > u32::MAX as usize {
        return Err(Error::Config("ensemble metadata too large".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(werr)?;
    w.write_all(&ENSEMBLE_FILE_VERSION.to_le_bytes()).map_err(werr)?;
    w.write_all(&(meta_json.len() as u32).to_le_bytes()).map_err(werr)?;
    w.write_all(&meta_json).map_err(werr)?;
    match ens.parameter_members() {
        Some(members) => {
            w.write_all(&(members.len() as u64).to_le_bytes()).map_err(werr)?;
            for m in members {
                write_params_block(&mut w, m).map_err(werr)?;
            }
        }
        None => {
            let d = ens.dropout().expect("ensembles are parameters or dropout");
            w.write_all(&1u64.to_le_bytes()).map_err(werr)?;
            write_params_block(&mut w, &d.params).map_err(werr)?;
        }
    }
    w.flush().map_err(werr)
}

/// Read an ensemble and the inputs hash of the run that wrote it.
pub fn load_ensemble(path: &Path) -> Result<(Ensemble, Option<String>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let fail = |message: String| Error::format(path.display(), message);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| fail("truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(fail(format!("bad magic {magic:02x?}, expected {MAGIC:02x?}")));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| fail("truncated version".into()))?;
    let version = u32::from_le_bytes(u32buf);
    if version != ENSEMBLE_FILE_VERSION {
        return Err(fail(format!(
            "unsupported version {version}, expected {ENSEMBLE_FILE_VERSION}"
        )));
    }
    r.read_exact(&mut u32buf).map_err(|_| fail("truncated metadata length".into()))?;
    let meta_len = u32::from_le_bytes(u32buf) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes).map_err(|_| fail("truncated metadata".into()))?;
    let meta: EnsembleMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| fail(format!("metadata is not valid JSON: {e}")))?;
    let provenance = meta.provenance;
    let cfg = &provenance.config;
    cfg.validate()
        .map_err(|e| fail(format!("embedded sampler config is invalid: {e}")))?;

    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|_| fail("truncated block count".into()))?;
    let n_blocks = u64::from_le_bytes(u64buf) as usize;
    if n_blocks == 0 {
        return Err(fail("ensemble file holds zero parameter blocks".into()));
    }
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        blocks.push(read_params_block(&mut r, path)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(fail("trailing bytes after final parameter block".into()));
    }

    let ensemble = if cfg.kind == SamplerKind::McDropout {
        if n_blocks != 1 {
            return Err(fail(format!(
                "mc-dropout ensembles hold one network, file has {n_blocks}"
            )));
        }
        let dropout = DropoutEnsemble {
            params: blocks.pop().expect("one block"),
            p_drop: cfg.p_drop.expect("validated above"),
            n_passes: cfg.n_samples,
            seed: cfg.seed,
            mask_input: cfg.scope == Scope::LastLayer,
        };
        Ensemble::from_dropout(dropout, provenance)?
    } else {
        check_member_count(n_blocks, &provenance).map_err(|m| fail(m))?;
        Ensemble::from_members(blocks, provenance)?
    };
    Ok((ensemble, meta.manifest))
}

fn check_member_count(
    n_blocks: usize,
    provenance: &Provenance,
) -> std::result::Result<(), String> {
    let requested = provenance.config.n_samples;
    if provenance.diverged {
        if n_blocks >= requested {
            return Err(format!(
                "diverged ensemble holds {n_blocks} members but only {requested} were requested"
            ));
        }
    } else if n_blocks != requested {
        return Err(format!(
            "file holds {n_blocks} members, config requested {requested}"
        ));
    }
    Ok(())
}
