//! Binary checkpoint: magic, little-endian header length, JSON header
//! (config, vocabulary, tensor table), then raw little-endian `f64` tensors.
//! Reloading is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Network};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PLATTN01";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    vocab_hash: String,
    vocabulary: Vocabulary,
    /// Free-form experiment description (the trainer stores its config).
    experiment: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub vocabulary: Vocabulary,
    pub vocab_hash: String,
    pub experiment: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    network: &Network,
    vocabulary: &Vocabulary,
    experiment: serde_json::Value,
) -> Result<()> {
    let mut tensors = vec![TensorEntry {
        name: "embedding".into(),
        len: network.embedding.data.len(),
    }];
    for (name, t) in network
        .dense
        .tensor_names()
        .into_iter()
        .zip(network.dense.tensors())
    {
        tensors.push(TensorEntry { name, len: t.len() });
    }
    let header = Header {
        model: network.config.clone(),
        vocab_hash: vocabulary.hash(),
        vocabulary: vocabulary.clone(),
        experiment,
        tensors,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())
        .map_err(io)?;
    w.write_all(&header_bytes).map_err(io)?;
    let all = std::iter::once(network.embedding.data.as_slice()).chain(network.dense.tensors());
    for t in all {
        for v in t {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let mut header_bytes = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes).map_err(io)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.vocabulary.hash() != header.vocab_hash {
        return Err(Error::Checkpoint(
            "stored vocabulary does not match its hash".into(),
        ));
    }
    // rebuild a correctly shaped network, then overwrite every tensor
    let mut network = Network::new(header.model.clone(), &header.vocabulary, None, 0)?;
    let dim = network.config.embedding_dim;
    let mut read_tensor = |entry: &TensorEntry, expected: usize| -> Result<Vec<f64>> {
        if entry.len != expected {
            return Err(Error::Checkpoint(format!(
                "tensor {} has {} values, expected {expected}",
                entry.name, entry.len
            )));
        }
        let mut buf = vec![0u8; entry.len * 8];
        r.read_exact(&mut buf).map_err(io)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let mut entries = header.tensors.iter();
    let emb = entries
        .next()
        .ok_or_else(|| Error::Checkpoint("no tensors".into()))?;
    network.embedding = Matrix {
        rows: header.vocabulary.len(),
        cols: dim,
        data: read_tensor(emb, header.vocabulary.len() * dim)?,
    };
    let names = network.dense.tensor_names();
    let dense = network.dense.tensors_mut();
    if header.tensors.len() != dense.len() + 1 {
        return Err(Error::Checkpoint(
            "tensor count does not match config".into(),
        ));
    }
    for ((slot, entry), name) in dense.into_iter().zip(entries).zip(names) {
        if entry.name != name {
            return Err(Error::Checkpoint(format!(
                "expected tensor {name}, found {}",
                entry.name
            )));
        }
        let values = read_tensor(entry, slot.len())?;
        slot.copy_from_slice(&values);
    }
    Ok(Checkpoint {
        network,
        vocab_hash: header.vocab_hash,
        vocabulary: header.vocabulary,
        experiment: header.experiment,
    })
}
