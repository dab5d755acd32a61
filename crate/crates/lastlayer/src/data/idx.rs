//! Reader and writer for the classic IDX image/label files (the MNIST format).
//!
//! Layout (all integers big-endian u32):
//!
//! ```text
//! images: magic 0x00000803, count, rows, cols, then count·rows·cols u8 pixels
//! labels: magic 0x00000801, count, then count u8 labels
//! ```
//!
//! Pixels are scaled to `[0,1]` by dividing by 255; labels are used as-is and
//! the class count is inferred as `max label + 1` (override with
//! [`Dataset::with_num_classes`] when the sample might not cover every class).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(reader: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| Error::format(path.display(), format!("truncated {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Load an images/labels IDX pair into a [`Dataset`].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    // images
    let file = File::open(images_path).map_err(|e| Error::io(images_path, e))?;
    let mut reader = BufReader::new(file);
    let magic = read_u32_be(&mut reader, images_path, "images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            images_path.display(),
            format!("bad images magic: expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = read_u32_be(&mut reader, images_path, "images count")? as usize;
    let rows = read_u32_be(&mut reader, images_path, "images rows")? as usize;
    let cols = read_u32_be(&mut reader, images_path, "images cols")? as usize;
    let expected = count * rows * cols;
    let mut pixels = Vec::with_capacity(expected);
    reader.read_to_end(&mut pixels).map_err(|e| Error::io(images_path, e))?;
    if pixels.len() != expected {
        return Err(Error::format(
            images_path.display(),
            format!(
                "images payload: expected {expected} pixel bytes ({count}x{rows}x{cols}), found {}",
                pixels.len()
            ),
        ));
    }

    // labels
    let file = File::open(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let mut reader = BufReader::new(file);
    let magic = read_u32_be(&mut reader, labels_path, "labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            labels_path.display(),
            format!("bad labels magic: expected {LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let label_count = read_u32_be(&mut reader, labels_path, "labels count")? as usize;
    if label_count != count {
        return Err(Error::format(
            labels_path.display(),
            format!("label count {label_count} does not match image count {count}"),
        ));
    }
    let mut raw_labels = Vec::with_capacity(label_count);
    reader.read_to_end(&mut raw_labels).map_err(|e| Error::io(labels_path, e))?;
    if raw_labels.len() != label_count {
        return Err(Error::format(
            labels_path.display(),
            format!(
                "labels payload: expected {label_count} bytes, found {}",
                raw_labels.len()
            ),
        ));
    }

    let features: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let features = Array2::from_shape_vec((count, rows * cols), features)
        .expect("count*rows*cols elements by construction");
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1).max(2);
    Dataset::new(features, labels, num_classes)
}

/// Write a dataset as an IDX pair. `rows * cols` must equal the feature
/// dimension and every feature must be an exact multiple of 1/255 in `[0,1]`
/// so that `load_idx` round-trips bit-identically. Intended for fixtures and
/// for materializing synthetic datasets the CLI can consume.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != ds.feature_dim() {
        return Err(Error::Dimension(format!(
            "{rows}x{cols} image shape does not match feature dimension {}",
            ds.feature_dim()
        )));
    }
    if ds.len() > u32::MAX as usize {
        return Err(Error::Dataset("too many examples for IDX".into()));
    }
    let file = File::create(images_path).map_err(|e| Error::io(images_path, e))?;
    let mut w = BufWriter::new(file);
    let put = |w: &mut BufWriter<File>, v: u32| -> Result<()> {
        w.write_all(&v.to_be_bytes()).map_err(|e| Error::io(images_path, e))
    };
    put(&mut w, IMAGES_MAGIC)?;
    put(&mut w, ds.len() as u32)?;
    put(&mut w, rows as u32)?;
    put(&mut w, cols as u32)?;
    for &v in ds.features().iter() {
        let scaled = v * 255.0;
        let byte = scaled.round();
        if !(0.0..=255.0).contains(&byte) || (scaled - byte).abs() > 1e-9 {
            return Err(Error::Dataset(format!(
                "feature value {v} is not an exact pixel intensity (k/255)"
            )));
        }
        w.write_all(&[byte as u8]).map_err(|e| Error::io(images_path, e))?;
    }
    w.flush().map_err(|e| Error::io(images_path, e))?;

    let file = File::create(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&LABELS_MAGIC.to_be_bytes()).map_err(|e| Error::io(labels_path, e))?;
    w.write_all(&(ds.len() as u32).to_be_bytes()).map_err(|e| Error::io(labels_path, e))?;
    for &label in ds.labels() {
        if label > u8::MAX as usize {
            return Err(Error::LabelOutOfRange { label, num_classes: 256 });
        }
        w.write_all(&[label as u8]).map_err(|e| Error::io(labels_path, e))?;
    }
    w.flush().map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}
