//! Shared plumbing for CLI integration tests: a tiny deterministic IDX
//! fixture, config scaffolding, and a runner for the compiled binary.
//!
//! Every integration target compiles its own copy of this module; not every
//! target uses every item.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lastlayer::data::{write_idx, Dataset};
use ndarray::Array2;

/// Side length of the fixture images.
pub const SIDE: usize = 6;
/// Classes in the fixture.
pub const CLASSES: usize = 4;

/// Write a small, learnable image dataset in IDX format under `data_dir`,
/// using the conventional MNIST file names. Each class lights up its own
/// block of pixels over a dim random background, so a small dense network
/// separates the classes after a few epochs. Fully deterministic.
pub fn write_fixture(data_dir: &Path) {
    fs::create_dir_all(data_dir).expect("create fixture dir");
    let train = fixture_dataset(40, 0x5EED_0001);
    let test = fixture_dataset(15, 0x5EED_0002);
    write_idx(
        &train,
        &data_dir.join("train-images-idx3-ubyte"),
        &data_dir.join("train-labels-idx1-ubyte"),
        SIDE,
        SIDE,
    )
    .expect("write train fixture");
    write_idx(
        &test,
        &data_dir.join("t10k-images-idx3-ubyte"),
        &data_dir.join("t10k-labels-idx1-ubyte"),
        SIDE,
        SIDE,
    )
    .expect("write test fixture");
}

fn fixture_dataset(per_class: usize, seed: u64) -> Dataset {
    let mut state = seed.max(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let dim = SIDE * SIDE;
    let block = dim / CLASSES;
    let n = per_class * CLASSES;
    let mut pixels = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % CLASSES;
        labels.push(class);
        for p in 0..dim {
            let in_block = p >= class * block && p < (class + 1) * block;
            let byte = if in_block {
                200 + (next() % 56) as u8
            } else {
                (next() % 40) as u8
            };
            pixels.push(byte as f64 / 255.0);
        }
    }
    let features = Array2::from_shape_vec((n, dim), pixels).expect("fixture shape");
    Dataset::new(features, labels, CLASSES).expect("fixture dataset")
}

/// Write `body` as a TOML config file and return its path.
pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).expect("write config");
    path
}

/// A config exercising the whole pipeline quickly on the fixture.
pub fn small_config(data_dir: &Path, out_dir: &Path, extra: &str) -> String {
    format!(
        r#"seed = 7
data_dir = "{}"
out_dir = "{}"

[train]
hidden = [16, 8]
learning_rate = 1e-3
batch_size = 16
epochs = 6
optimizer = "adam"

[sample]
kind = "sgld"
scope = "last-layer"
n_samples = 8
learning_rate = 0.05
batch_size = 16
prior_variance = 1.0

[evaluate]
calibration_bins = 5
histogram_bins = 8
{extra}"#,
        data_dir.display(),
        out_dir.display(),
    )
}

/// Run the binary with `args`, capturing output.
pub fn lastlayer(args: &[&str]) -> Output {
    lastlayer_with_env(args, &[])
}

/// Run the binary with `args` and extra environment variables.
pub fn lastlayer_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lastlayer"));
    cmd.args(args);
    cmd.env_remove("LASTLAYER_DATA_DIR");
    cmd.env_remove("LASTLAYER_OUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn lastlayer")
}

/// Exit code of an `Output`, panicking on signals.
pub fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

/// Panic with the captured output if the command did not succeed.
pub fn assert_ok(out: &Output, what: &str) {
    assert_eq!(
        code(out),
        0,
        "{what} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Recursively snapshot every file under `dir` as relative path -> bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    collect(dir, dir, &mut map);
    map
}

fn collect(root: &Path, dir: &Path, map: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).expect("read dir") {
        let path = entry.expect("dir entry").path();
        if path.is_dir() {
            collect(root, &path, map);
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("under root")
                .to_string_lossy()
                .into_owned();
            map.insert(rel, fs::read(&path).expect("read file"));
        }
    }
}
