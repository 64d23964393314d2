//! Experiment harness: configs, artifacts, evaluation and the CLI stages.
//!
//! Every artifact carries the config hash and the seed of the run that produced it; dependent
//! stages refuse artifacts from a different (config, seed).

pub mod config;
pub mod experiments;
pub mod stages;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::ExperimentConfig;
pub use experiments::{evaluate, EvaluationReport};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Artifact<T> {
    pub version: u32,
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub payload: T,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(Provenance { config_hash: cfg.hash()?, seed })
    }

    fn check(&self, hash: &str, seed: u64) -> Result<()> {
        if hash != self.config_hash || seed != self.seed {
            return Err(Error::HashMismatch {
                expected: format!("{}/{}", self.config_hash, self.seed),
                found: format!("{hash}/{seed}"),
            });
        }
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, prov: &Provenance, payload: &T) -> Result<()> {
    let a = Artifact { version: ARTIFACT_VERSION, kind: kind.to_string(), config_hash: prov.config_hash.clone(), seed: prov.seed, payload };
    let mut s = serde_json::to_string_pretty(&a)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str, prov: &Provenance) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let a: Artifact<T> = serde_json::from_str(&text)?;
    if a.version != ARTIFACT_VERSION {
        return Err(Error::Version(a.version));
    }
    if a.kind != kind {
        return Err(Error::InvalidConfig(format!("{} holds a {} artifact, expected {kind}", path.display(), a.kind)));
    }
    prov.check(&a.config_hash, a.seed)?;
    Ok(a.payload)
}

const BIN_MAGIC: &[u8; 8] = b"ISLART01";

/// Binary artifact: magic, 64 hex bytes of config hash, u64 seed, body.
pub fn write_bin(path: &Path, prov: &Provenance, body: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(body.len() + 80);
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(prov.config_hash.as_bytes());
    out.extend_from_slice(&prov.seed.to_le_bytes());
    out.extend_from_slice(body);
    fs::write(path, out)?;
    Ok(())
}

pub fn read_bin(path: &Path, prov: &Provenance) -> Result<Vec<u8>> {
    let b = fs::read(path)?;
    if b.len() < 80 || &b[..8] != BIN_MAGIC {
        return Err(Error::InvalidConfig(format!("{} is not a binary artifact", path.display())));
    }
    let hash = std::str::from_utf8(&b[8..72]).map_err(|_| Error::InvalidConfig("corrupt artifact hash".into()))?;
    let seed = u64::from_le_bytes(b[72..80].try_into().unwrap());
    prov.check(hash, seed)?;
    Ok(b[80..].to_vec())
}

/// CSV with a leading `# config_hash=..., seed=...` comment line.
pub fn write_csv(path: &Path, prov: &Provenance, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "# config_hash={}, seed={}", prov.config_hash, prov.seed)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a CSV written by `write_csv`, after checking its provenance line.
pub fn read_csv(path: &Path, prov: &Provenance) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let (first, rest) = text.split_once('\n').ok_or_else(|| Error::InvalidConfig("empty CSV".into()))?;
    let meta = first.strip_prefix("# config_hash=").ok_or_else(|| Error::InvalidConfig("CSV without provenance".into()))?;
    let (hash, seed) = meta.split_once(", seed=").ok_or_else(|| Error::InvalidConfig("CSV without seed".into()))?;
    prov.check(hash, seed.trim().parse().map_err(|_| Error::InvalidConfig("bad seed".into()))?)?;
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("csv: {e}"))
}

/// Shortest round-trip float formatting used in every CSV.
pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}
