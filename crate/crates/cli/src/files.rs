//! On-disk formats.
//!
//! Dataset (`EFBGDSET`) and checkpoint (`EFBGCKPT`) files share one frame,
//! all integers little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic |
//! | 4 | format version (u32) |
//! | 4 | JSON header length `h` (u32) |
//! | h | JSON header |
//! | … | binary body |
//! | 32 | SHA-256 of every preceding byte |
//!
//! A dataset body is a u64 record count followed by fixed-size records:
//! seed (u64), scenario tag (u8), group (u32), 570 scan values, 60 marker
//! coordinates (mm) and 10 plane values (`κ, θ` per plane), all f32.
//!
//! A checkpoint body holds the parameter buffers, the batch-norm buffers and,
//! when present, Adam's first and second moments, as f64 in layer order; the
//! header lists their lengths.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use edgefbg::nn::{AdamState, ModelConfig, NetworkState, TrainConfig, TrainHistory};
use edgefbg::optics::{
    Dataset, DatasetHeader, SampleRecord, ScenarioKind, PLANE_VALUES, SCAN_VALUES, SHAPE_VALUES,
};

use crate::CliError;

pub const DATASET_MAGIC: &[u8; 8] = b"EFBGDSET";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EFBGCKPT";
pub const FORMAT_VERSION: u32 = 1;

const RECORD_BYTES: usize = 8 + 1 + 4 + 4 * (SCAN_VALUES + SHAPE_VALUES + PLANE_VALUES);
const DIGEST_BYTES: usize = 32;

fn corrupt(what: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{what}: {msg}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn frame<H: Serialize>(magic: &[u8; 8], header: &H, body: &[u8]) -> Result<Vec<u8>, CliError> {
    let json = serde_json::to_vec(header).map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + body.len() + DIGEST_BYTES);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(body);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Checks magic, version and checksum; returns the parsed header and the body.
fn unframe<'a, H: DeserializeOwned>(magic: &[u8; 8], what: &str, bytes: &'a [u8]) -> Result<(H, &'a [u8]), CliError> {
    if bytes.len() < 16 + DIGEST_BYTES {
        return Err(corrupt(what, "file is truncated"));
    }
    if &bytes[..8] != magic {
        return Err(corrupt(what, "wrong magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(corrupt(what, format!("unsupported format version {version}")));
    }
    let (content, digest) = bytes.split_at(bytes.len() - DIGEST_BYTES);
    if Sha256::digest(content).as_slice() != digest {
        return Err(corrupt(what, "checksum mismatch (file corrupted or truncated)"));
    }
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if 16 + h > content.len() {
        return Err(corrupt(what, "header runs past the end of the file"));
    }
    let header = serde_json::from_slice(&content[16..16 + h]).map_err(|e| corrupt(what, format!("bad header: {e}")))?;
    Ok((header, &content[16 + h..]))
}

/// Stored checksum of a framed file, without validating it.
pub fn stored_digest(bytes: &[u8]) -> String {
    let n = bytes.len();
    if n < DIGEST_BYTES {
        return String::new();
    }
    bytes[n - DIGEST_BYTES..].iter().map(|b| format!("{b:02x}")).collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }

    fn f32s(&mut self, n: usize) -> Vec<f32> {
        self.take(4 * n).chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
    }

    fn f64s(&mut self, n: usize) -> Vec<f64> {
        self.take(8 * n).chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    }
}

pub fn dataset_to_bytes(d: &Dataset) -> Result<Vec<u8>, CliError> {
    if d.header.count != d.records.len() {
        return Err(CliError::Config("header count differs from the record count".into()));
    }
    let mut body = Vec::with_capacity(8 + d.records.len() * RECORD_BYTES);
    body.extend_from_slice(&(d.records.len() as u64).to_le_bytes());
    for r in &d.records {
        r.validate()?;
        body.extend_from_slice(&r.seed.to_le_bytes());
        body.push(r.tag.tag());
        body.extend_from_slice(&r.group.to_le_bytes());
        for v in r.scans.iter().chain(&r.shape).chain(&r.planes) {
            body.extend_from_slice(&v.to_le_bytes());
        }
    }
    frame(DATASET_MAGIC, &d.header, &body)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset, CliError> {
    let what = "dataset";
    let (header, body): (DatasetHeader, _) = unframe(DATASET_MAGIC, what, bytes)?;
    if body.len() < 8 {
        return Err(corrupt(what, "missing record count"));
    }
    let mut c = Cursor { bytes: body, pos: 0 };
    let count = c.u64() as usize;
    if count != header.count {
        return Err(corrupt(what, format!("header announces {} records, body {count}", header.count)));
    }
    if body.len() != 8 + count * RECORD_BYTES {
        return Err(corrupt(what, "record block has the wrong size"));
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let seed = c.u64();
        let tag = ScenarioKind::from_tag(c.take(1)[0]).map_err(|e| corrupt(what, e))?;
        let group = c.u32();
        let r = SampleRecord { seed, tag, group, scans: c.f32s(SCAN_VALUES), shape: c.f32s(SHAPE_VALUES), planes: c.f32s(PLANE_VALUES) };
        r.validate().map_err(|e| corrupt(what, e))?;
        records.push(r);
    }
    Ok(Dataset { header, records })
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn save_dataset(path: &Path, d: &Dataset) -> Result<(), CliError> {
    write_file(path, &dataset_to_bytes(d)?)
}

/// Loaded dataset and the checksum of its file.
pub fn load_dataset(path: &Path) -> Result<(Dataset, String), CliError> {
    let bytes = read(path)?;
    let d = dataset_from_bytes(&bytes).map_err(|e| match e {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((d, stored_digest(&bytes)))
}

/// A trained network with what is needed to resume or replay its training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: NetworkState,
    pub train: TrainConfig,
    pub init_seed: u64,
    pub history: TrainHistory,
    pub optimizer: Option<AdamState>,
    /// Per-sample shape after every layer.
    pub trace: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    model: ModelConfig,
    train: TrainConfig,
    init_seed: u64,
    history: TrainHistory,
    trace: Vec<Vec<usize>>,
    param_lens: Vec<usize>,
    buffer_lens: Vec<usize>,
    adam_step: Option<u64>,
}

pub fn checkpoint_to_bytes(c: &Checkpoint) -> Result<Vec<u8>, CliError> {
    let lens = |v: &[Vec<f64>]| v.iter().map(Vec::len).collect::<Vec<_>>();
    let header = CheckpointHeader {
        model: c.network.config.clone(),
        train: c.train.clone(),
        init_seed: c.init_seed,
        history: c.history.clone(),
        trace: c.trace.clone(),
        param_lens: lens(&c.network.params),
        buffer_lens: lens(&c.network.buffers),
        adam_step: c.optimizer.as_ref().map(|a| a.step),
    };
    let mut body = Vec::new();
    let mut put = |v: &[Vec<f64>]| v.iter().flatten().for_each(|x| body.extend_from_slice(&x.to_le_bytes()));
    put(&c.network.params);
    put(&c.network.buffers);
    if let Some(a) = &c.optimizer {
        if lens(&a.m) != header.param_lens || lens(&a.v) != header.param_lens {
            return Err(CliError::Config("optimizer state does not match the parameters".into()));
        }
        put(&a.m);
        put(&a.v);
    }
    frame(CHECKPOINT_MAGIC, &header, &body)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint, CliError> {
    let what = "checkpoint";
    let (h, body): (CheckpointHeader, _) = unframe(CHECKPOINT_MAGIC, what, bytes)?;
    let np: usize = h.param_lens.iter().sum();
    let nb: usize = h.buffer_lens.iter().sum();
    let expected = 8 * (np + nb + if h.adam_step.is_some() { 2 * np } else { 0 });
    if body.len() != expected {
        return Err(corrupt(what, "parameter block has the wrong size"));
    }
    let mut c = Cursor { bytes: body, pos: 0 };
    let mut split = |lens: &[usize]| lens.iter().map(|&n| c.f64s(n)).collect::<Vec<_>>();
    let params = split(&h.param_lens);
    let buffers = split(&h.buffer_lens);
    let optimizer = h.adam_step.map(|step| AdamState { step, m: split(&h.param_lens), v: split(&h.param_lens) });
    Ok(Checkpoint {
        network: NetworkState { config: h.model, params, buffers },
        train: h.train,
        init_seed: h.init_seed,
        history: h.history,
        optimizer,
        trace: h.trace,
    })
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<(), CliError> {
    write_file(path, &checkpoint_to_bytes(c)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String), CliError> {
    let bytes = read(path)?;
    let c = checkpoint_from_bytes(&bytes).map_err(|e| match e {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((c, stored_digest(&bytes)))
}

/// Pretty JSON file, for calibrations and dictionary indexes.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<(T, String), CliError> {
    let bytes = read(path)?;
    let v = serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((v, sha256_hex(&bytes)))
}
