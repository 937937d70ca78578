//! Versioned binary checkpoints.
//!
//! Layout: magic `ACKP`, little-endian u16 format version, a length-prefixed
//! UTF-8 JSON header carrying the decoder and adapter configuration, then
//! every parameter tensor in declaration order as a little-endian u64 value
//! count followed by that many little-endian 64-bit floats. The encoding is
//! byte-stable across platforms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::{AdapterConfig, DecoderConfig};
use crate::model::table::{WordEmbeddingTable, WordSource};
use crate::model::CaptionModel;
use crate::numerics::{Rng, Tensor};

pub const MAGIC: &[u8; 4] = b"ACKP";
pub const FORMAT_VERSION: u16 = 1;

/// JSON header stored after the magic and version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub decoder: DecoderConfig,
    pub adapter: AdapterConfig,
    pub feature_dim: usize,
    pub word_source: WordSource,
    pub word_trainable: bool,
    /// Free-form metadata slot; the experiment runner stores its resolved
    /// configuration here so a checkpoint can be evaluated on its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<serde_json::Value>,
}

pub fn save(model: &CaptionModel, experiment: Option<serde_json::Value>, w: &mut impl Write) -> Result<()> {
    let header = CheckpointHeader {
        decoder: *model.decoder_config(),
        adapter: *model.adapter_config(),
        feature_dim: model.feature_dim(),
        word_source: model.word_source(),
        word_trainable: model.word_trainable(),
        experiment,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    let params = model.params();
    for id in params.ids() {
        let t = params.get(id);
        w.write_all(&(t.numel() as u64).to_le_bytes())?;
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(r: &mut impl Read) -> Result<(CaptionModel, Option<serde_json::Value>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::format("checkpoint too short for magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(format!("bad checkpoint magic {magic:?}")));
    }
    let mut version = [0u8; 2];
    r.read_exact(&mut version)?;
    let version = u16::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;

    // Rebuild the skeleton; every weight is overwritten from the payload.
    let placeholder = WordEmbeddingTable::from_rows(
        Tensor::zeros(vec![header.decoder.vocab_size, header.decoder.word_dim])?,
        header.word_source,
        header.word_trainable,
    )?;
    let mut model = CaptionModel::new(
        header.decoder,
        header.adapter,
        header.feature_dim,
        placeholder,
        &mut Rng::new(0),
    )?;

    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let expected = model.params().get(id).numel();
        let mut count = [0u8; 8];
        r.read_exact(&mut count).map_err(|_| {
            Error::format(format!("checkpoint truncated before {}", model.params().name(id)))
        })?;
        let count = u64::from_le_bytes(count) as usize;
        if count != expected {
            return Err(Error::format(format!(
                "parameter {} expects {expected} values, checkpoint has {count}",
                model.params().name(id)
            )));
        }
        let mut raw = vec![0u8; count * 8];
        r.read_exact(&mut raw).map_err(|_| {
            Error::format(format!("checkpoint truncated inside {}", model.params().name(id)))
        })?;
        let data = model.params_mut().get_mut(id).data_mut();
        for (i, chunk) in raw.chunks_exact(8).enumerate() {
            data[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::format("trailing bytes after checkpoint payload"));
    }
    Ok((model, header.experiment))
}

pub fn save_file(
    model: &CaptionModel,
    experiment: Option<serde_json::Value>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save(model, experiment, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_file(path: impl AsRef<Path>) -> Result<(CaptionModel, Option<serde_json::Value>)> {
    let mut r = BufReader::new(File::open(path)?);
    load(&mut r)
}
