//! Binary container for extracted feature datasets.
//!
//! Layout (integers little-endian unless noted):
//!
//! ```text
//! magic     4 bytes   b"LLRF"
//! version   u32       currently 1
//! n         u64       number of examples (must be ≥ 1)
//! d         u64       feature dimension
//! k         u64       number of classes
//! meta_len  u32       length of the JSON metadata blob
//! meta      bytes     UTF-8 JSON, see [`FeatureMeta`]
//! rows      n times   d f64 values, then one u32 label
//! ```
//!
//! The f64 payload is raw IEEE-754 bits, so save → load → save reproduces the
//! file byte for byte. The metadata carries lineage (run manifest hash, the
//! hash of the network that produced the features, the class split, the
//! dataset role) and is verified by downstream pipeline stages.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ClassSplit, Dataset};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LLRF";
pub const FEATURE_FILE_VERSION: u32 = 1;

/// Lineage metadata embedded in a feature file. All fields optional so
/// hand-built fixtures stay cheap; the CLI populates everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    /// Inputs hash of the run manifest that produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    /// Content hash of the network whose penultimate layer produced the rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<String>,
    /// Class split applied upstream, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<ClassSplit>,
    /// Which side of the pipeline the rows represent: "train", "test",
    /// "out-test", ...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

/// Write `ds` with its metadata to `path`.
pub fn save_feature_file(ds: &Dataset, path: &Path, meta: &FeatureMeta) -> Result<()> {
    let meta_json = serde_json::to_vec(meta).expect("feature metadata serializes");
    if meta_json.len() > u32::MAX as usize {
        return Err(Error::Config("feature metadata too large".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(werr)?;
    w.write_all(&FEATURE_FILE_VERSION.to_le_bytes()).map_err(werr)?;
    w.write_all(&(ds.len() as u64).to_le_bytes()).map_err(werr)?;
    w.write_all(&(ds.feature_dim() as u64).to_le_bytes()).map_err(werr)?;
    w.write_all(&(ds.num_classes() as u64).to_le_bytes()).map_err(werr)?;
    w.write_all(&(meta_json.len() as u32).to_le_bytes()).map_err(werr)?;
    w.write_all(&meta_json).map_err(werr)?;
    for i in 0..ds.len() {
        let (row, label) = ds.example(i);
        for &v in row {
            w.write_all(&v.to_le_bytes()).map_err(werr)?;
        }
        if label > u32::MAX as usize {
            return Err(Error::LabelOutOfRange { label, num_classes: ds.num_classes() });
        }
        w.write_all(&(label as u32).to_le_bytes()).map_err(werr)?;
    }
    w.flush().map_err(werr)?;
    Ok(())
}

struct Header {
    n: usize,
    d: usize,
    k: usize,
    meta: FeatureMeta,
}

fn read_header(reader: &mut impl Read, path: &Path) -> Result<Header> {
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::format(path.display(), "truncated magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(
            path.display(),
            format!("bad magic: expected {MAGIC:?}, found {magic:?}"),
        ));
    }
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    reader
        .read_exact(&mut u32buf)
        .map_err(|_| Error::format(path.display(), "truncated version"))?;
    let version = u32::from_le_bytes(u32buf);
    if version != FEATURE_FILE_VERSION {
        return Err(Error::format(
            path.display(),
            format!("unsupported version {version}, expected {FEATURE_FILE_VERSION}"),
        ));
    }
    let mut next_u64 = |what: &str| -> Result<u64> {
        reader
            .read_exact(&mut u64buf)
            .map_err(|_| Error::format(path.display(), format!("truncated {what}")))?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let n = next_u64("example count")? as usize;
    let d = next_u64("feature dimension")? as usize;
    let k = next_u64("class count")? as usize;
    reader
        .read_exact(&mut u32buf)
        .map_err(|_| Error::format(path.display(), "truncated metadata length"))?;
    let meta_len = u32::from_le_bytes(u32buf) as usize;
    let mut meta_json = vec![0u8; meta_len];
    reader
        .read_exact(&mut meta_json)
        .map_err(|_| Error::format(path.display(), "truncated metadata"))?;
    let meta: FeatureMeta = serde_json::from_slice(&meta_json)
        .map_err(|e| Error::format(path.display(), format!("bad metadata JSON: {e}")))?;
    if n == 0 {
        return Err(Error::format(path.display(), "empty dataset (header count 0)"));
    }
    Ok(Header { n, d, k, meta })
}

/// Load the dataset rows (metadata is dropped; see [`read_feature_meta`]).
pub fn load_feature_file(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader, path)?;
    let Header { n, d, k, .. } = header;
    let row_bytes = d * 8 + 4;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != n * row_bytes {
        return Err(Error::format(
            path.display(),
            format!(
                "payload size: header implies {n} rows of {row_bytes} bytes = {} bytes, found {}",
                n * row_bytes,
                payload.len()
            ),
        ));
    }
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for row in payload.chunks_exact(row_bytes) {
        for val in row[..d * 8].chunks_exact(8) {
            features.push(f64::from_le_bytes(val.try_into().expect("8-byte chunk")));
        }
        let label = u32::from_le_bytes(row[d * 8..].try_into().expect("4-byte label"));
        labels.push(label as usize);
    }
    let features =
        Array2::from_shape_vec((n, d), features).expect("n*d elements by construction");
    Dataset::new(features, labels, k)
}

/// Read just the metadata header of a feature file.
pub fn read_feature_meta(path: &Path) -> Result<FeatureMeta> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    Ok(read_header(&mut reader, path)?.meta)
}
