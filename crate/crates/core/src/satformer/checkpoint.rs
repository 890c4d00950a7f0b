//! Binary checkpoint: magic, format version, a JSON header describing the
//! config, vocabulary and tensor layout, then little-endian f64 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PredictorConfig;
use super::params::{PredictorParams, TableSizes};
use super::vocab::Vocab;
use super::Predictor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SATGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: PredictorConfig,
    vocab: Vocab,
    tensors: Vec<TensorSpec>,
}

pub fn to_bytes(predictor: &Predictor) -> Result<Vec<u8>> {
    let header = Header {
        config: predictor.config.clone(),
        vocab: predictor.vocab.clone(),
        tensors: predictor
            .params
            .tensors()
            .into_iter()
            .map(|(name, m)| TensorSpec { name, rows: m.rows, cols: m.cols })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + predictor.params.num_values() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, m) in predictor.params.tensors() {
        for v in &m.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Predictor> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
    let json = body.get(..hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    header.config.validate()?;
    let sizes = TableSizes {
        tokens: header.vocab.num_tokens(),
        intents: header.vocab.num_intents(),
        slot_keys: header.vocab.num_slot_keys(),
        items: header.vocab.num_items(),
    };
    let mut params = PredictorParams::zeros(&header.config, sizes);
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    if names.len() != header.tensors.len() {
        return Err(bad("tensor count does not match config"));
    }
    let mut data = &body[hlen..];
    for ((m, spec), name) in params.tensors_mut().into_iter().zip(&header.tensors).zip(&names) {
        if spec.name != *name || spec.rows != m.rows || spec.cols != m.cols {
            return Err(Error::Checkpoint(format!("tensor {} does not match layout ({name})", spec.name)));
        }
        let need = m.len() * 8;
        if data.len() < need {
            return Err(bad("truncated tensor data"));
        }
        for (v, chunk) in m.data.iter_mut().zip(data[..need].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        data = &data[need..];
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes"));
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok(Predictor { config: header.config, vocab: header.vocab, params })
}

pub fn save(predictor: &Predictor, path: &Path) -> Result<()> {
    let bytes = to_bytes(predictor)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Predictor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
