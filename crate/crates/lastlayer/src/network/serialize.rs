//! Binary serialization of network parameters.
//!
//! File layout (integers little-endian):
//!
//! ```text
//! magic     4 bytes   b"LLNP"
//! version   u32       currently 1
//! meta_len  u32       length of the JSON metadata blob
//! meta      bytes     UTF-8 JSON, see [`ParamsMeta`]
//! block     see below
//! ```
//!
//! A parameter block (shared with the ensemble container) is:
//!
//! ```text
//! layers    u32       number of dense layers L
//! sizes     (L+1) u64 layer widths input → output
//! data      f64 LE    per layer: weights row-major (out×in), then bias
//! ```
//!
//! f64 payloads are raw IEEE-754 bits: save → load → save is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Architecture, DenseLayer, NetworkParams};

const MAGIC: &[u8; 4] = b"LLNP";
pub const PARAMS_FILE_VERSION: u32 = 1;

/// Provenance metadata stored next to the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamsMeta {
    /// Inputs hash of the run manifest that produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    /// Free-form note ("stage-one optimum", ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub(crate) fn write_params_block(w: &mut impl Write, params: &NetworkParams) -> std::io::Result<()> {
    let arch = params.architecture();
    w.write_all(&(arch.num_layers() as u32).to_le_bytes())?;
    for &s in arch.sizes() {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    for layer in params.layers() {
        for &v in layer.weights.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in layer.bias.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_params_block(r: &mut impl Read, path: &Path) -> Result<NetworkParams> {
    let trunc = |what: &str| Error::format(path.display(), format!("truncated {what}"));
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| trunc("layer count"))?;
    let num_layers = u32::from_le_bytes(u32buf) as usize;
    if num_layers == 0 {
        return Err(Error::format(path.display(), "zero layers in parameter block"));
    }
    let mut sizes = Vec::with_capacity(num_layers + 1);
    let mut u64buf = [0u8; 8];
    for _ in 0..=num_layers {
        r.read_exact(&mut u64buf).map_err(|_| trunc("layer sizes"))?;
        sizes.push(u64::from_le_bytes(u64buf) as usize);
    }
    // reuse the architecture validation (widths > 0, output ≥ 2, ...)
    Architecture::new(sizes.clone())
        .map_err(|e| Error::format(path.display(), format!("bad architecture: {e}")))?;
    let mut read_f64 = |what: &str| -> Result<f64> {
        r.read_exact(&mut u64buf).map_err(|_| trunc(what))?;
        Ok(f64::from_le_bytes(u64buf))
    };
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let mut weights = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out * fan_in {
            weights.push(read_f64("weights")?);
        }
        let mut bias = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            bias.push(read_f64("bias")?);
        }
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((fan_out, fan_in), weights)
                .expect("fan_out*fan_in elements by construction"),
            bias: Array1::from_vec(bias),
        });
    }
    Ok(NetworkParams::from_layers(layers))
}

/// Write parameters plus metadata to `path`.
pub fn save_params(params: &NetworkParams, path: &Path, meta: &ParamsMeta) -> Result<()> {
    let meta_json = serde_json::to_vec(meta).expect("params metadata serializes");
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(werr)?;
    w.write_all(&PARAMS_FILE_VERSION.to_le_bytes()).map_err(werr)?;
    w.write_all(&(meta_json.len() as u32).to_le_bytes()).map_err(werr)?;
    w.write_all(&meta_json).map_err(werr)?;
    write_params_block(&mut w, params).map_err(werr)?;
    w.flush().map_err(werr)?;
    Ok(())
}

/// Load parameters and their metadata from `path`.
pub fn load_params(path: &Path) -> Result<(NetworkParams, ParamsMeta)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(path.display(), "truncated magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(
            path.display(),
            format!("bad magic: expected {MAGIC:?}, found {magic:?}"),
        ));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| Error::format(path.display(), "truncated version"))?;
    let version = u32::from_le_bytes(u32buf);
    if version != PARAMS_FILE_VERSION {
        return Err(Error::format(
            path.display(),
            format!("unsupported version {version}, expected {PARAMS_FILE_VERSION}"),
        ));
    }
    r.read_exact(&mut u32buf)
        .map_err(|_| Error::format(path.display(), "truncated metadata length"))?;
    let mut meta_json = vec![0u8; u32::from_le_bytes(u32buf) as usize];
    r.read_exact(&mut meta_json)
        .map_err(|_| Error::format(path.display(), "truncated metadata"))?;
    let meta: ParamsMeta = serde_json::from_slice(&meta_json)
        .map_err(|e| Error::format(path.display(), format!("bad metadata JSON: {e}")))?;
    let params = read_params_block(&mut r, path)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    if !rest.is_empty() {
        return Err(Error::format(
            path.display(),
            format!("{} unexpected trailing bytes", rest.len()),
        ));
    }
    Ok((params, meta))
}
