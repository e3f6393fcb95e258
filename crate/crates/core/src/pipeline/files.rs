//! On-disk artifact formats.
//!
//! Dataset bodies are text, one record per line with site 1 leftmost, next to
//! a JSON header. Everything else is JSON or CSV. Every artifact carries the
//! config hash and master seed of the run that produced it.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bits::{BitString, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::quantum::{QuantumState, StateData};
use crate::rbm::RbmParams;

pub const DATASET_FORMAT: &str = "rydtomo-dataset/1";
pub const STATE_FORMAT: &str = "rydtomo-state/1";
pub const MODEL_FORMAT: &str = "rydtomo-rbm/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
}

impl Provenance {
    /// Refuses artifacts produced under a different configuration.
    pub fn check(&self, expected: &Provenance, what: &Path) -> Result<()> {
        if self != expected {
            return Err(Error::Provenance(format!(
                "{} was produced with config {} (seed {}), but the current run is config {} (seed {}); \
                 regenerate it or use the matching config",
                what.display(),
                self.config_hash,
                self.master_seed,
                expected.config_hash,
                expected.master_seed
            )));
        }
        Ok(())
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = if path.extension().is_some_and(|e| e == "gz") {
        let mut s = String::new();
        GzDecoder::new(&bytes[..])
            .read_to_string(&mut s)
            .map_err(|e| Error::io(path, e))?;
        s
    } else {
        String::from_utf8(bytes).map_err(|_| format_err(path, "not UTF-8 text"))?
    };
    Ok(text)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let data = if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: msg.into(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    /// Body file name, relative to the header.
    pub body: String,
    pub checkpoint: Option<usize>,
    pub meta: DatasetMeta,
}

/// Header path belonging to a dataset body (`x.txt` or `x.txt.gz` -> `x.json`).
pub fn header_path(body: &Path) -> PathBuf {
    let name = body.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let stem = name.strip_suffix(".gz").unwrap_or(name);
    let stem = stem.strip_suffix(".txt").unwrap_or(stem);
    body.with_file_name(format!("{stem}.json"))
}

pub fn dataset_body(d: &Dataset) -> String {
    let mut s = String::with_capacity(d.len() * (d.n_sites() + 1));
    for x in &d.samples {
        s.push_str(&x.to_string());
        s.push('\n');
    }
    s
}

/// Writes body and header; returns the header path.
pub fn write_dataset(body: &Path, d: &Dataset, provenance: &Provenance, checkpoint: Option<usize>) -> Result<PathBuf> {
    write_bytes(body, dataset_body(d).as_bytes())?;
    let mut meta = d.meta.clone();
    meta.config_hash = Some(provenance.config_hash.clone());
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        provenance: provenance.clone(),
        body: body.file_name().unwrap().to_string_lossy().into_owned(),
        checkpoint,
        meta,
    };
    let hp = header_path(body);
    write_json(&hp, &header)?;
    Ok(hp)
}

/// Reads a dataset given its header or body path.
pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetHeader)> {
    let hp = if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        header_path(path)
    };
    let header: DatasetHeader = read_json(&hp)?;
    if header.format != DATASET_FORMAT {
        return Err(format_err(&hp, format!("unknown format `{}`", header.format)));
    }
    let body = hp.with_file_name(&header.body);
    let text = read_text(&body)?;
    let n = header.meta.n_sites;
    let mut samples = Vec::with_capacity(header.meta.n_samples);
    for (k, line) in text.lines().enumerate() {
        if line.len() != n {
            return Err(format_err(&body, format!("line {} has length {}, expected {n}", k + 1, line.len())));
        }
        let s: BitString = line
            .parse()
            .map_err(|_| format_err(&body, format!("line {} is not a bit-string", k + 1)))?;
        samples.push(s);
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(format_err(&body, "last line is not newline-terminated"));
    }
    if samples.len() != header.meta.n_samples {
        return Err(format_err(
            &body,
            format!("{} records but the header says {}", samples.len(), header.meta.n_samples),
        ));
    }
    let d = Dataset::new(n, samples, header.meta.clone())?;
    Ok((d, header))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Pure,
    Mixed,
}

/// Exact state at one checkpoint. Amplitudes (pure) or the row-major density
/// matrix (mixed), as separate real and imaginary arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub format: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub checkpoint: usize,
    /// Sweep time; absent for ground states at explicitly listed detunings.
    pub t_us: Option<f64>,
    pub delta_mhz: f64,
    pub omega_mhz: f64,
    pub n_sites: usize,
    pub kind: StateKind,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl StateFile {
    pub fn from_state(
        state: &QuantumState,
        provenance: &Provenance,
        checkpoint: usize,
        t_us: Option<f64>,
        delta_mhz: f64,
        omega_mhz: f64,
    ) -> Self {
        let (kind, values): (StateKind, Vec<Complex64>) = match state.data() {
            StateData::Pure(v) => (StateKind::Pure, v.iter().copied().collect()),
            StateData::Mixed(m) => (StateKind::Mixed, m.transpose().iter().copied().collect()),
        };
        StateFile {
            format: STATE_FORMAT.into(),
            provenance: provenance.clone(),
            checkpoint,
            t_us,
            delta_mhz,
            omega_mhz,
            n_sites: state.n_sites(),
            kind,
            re: values.iter().map(|z| z.re).collect(),
            im: values.iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_state(&self) -> Result<QuantumState> {
        let dim = 1usize << self.n_sites;
        let v: Vec<Complex64> = self.re.iter().zip(&self.im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        match self.kind {
            StateKind::Pure if v.len() == dim => QuantumState::pure(self.n_sites, DVector::from_vec(v)),
            StateKind::Mixed if v.len() == dim * dim => {
                QuantumState::mixed(self.n_sites, DMatrix::from_row_slice(dim, dim, &v))
            }
            _ => Err(Error::argument("state file has the wrong number of entries")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub checkpoint: Option<usize>,
    pub variant: String,
    /// Dataset header the model was trained on.
    pub dataset: String,
    pub train_seed: u64,
    pub params: RbmParams,
}

impl ModelCheckpoint {
    pub fn read(path: &Path) -> Result<Self> {
        let m: ModelCheckpoint = read_json(path)?;
        if m.format != MODEL_FORMAT {
            return Err(format_err(path, format!("unknown format `{}`", m.format)));
        }
        m.params.validate().map_err(|e| format_err(path, e.to_string()))?;
        Ok(m)
    }
}

/// Quotes a CSV field when needed.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
