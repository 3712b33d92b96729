//! Checkpoint files.
//!
//! Layout (little-endian): `"ROMW"`, version `u32`, header length `u64`, JSON header
//! `{arch, stats, metadata}`, parameter count `u64`, then the `f32` parameters of
//! the encoder followed by those of the decoder, each in [`Mlp`] layer order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::autoencoder::{Autoencoder, AutoencoderArch};
use super::encoding::NormStats;
use super::mlp::{param_count, Mlp};
use super::RomError;

const MAGIC: &[u8; 4] = b"ROMW";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Autoencoder<f32>,
    pub stats: NormStats,
    /// Free-form training metadata.
    pub metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: AutoencoderArch,
    stats: NormStats,
    metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), RomError> {
        let header = serde_json::to_vec(&Header {
            arch: self.model.arch.clone(),
            stats: self.stats.clone(),
            metadata: self.metadata.clone(),
        })?;
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        out.write_all(&(self.model.param_count() as u64).to_le_bytes())?;
        let mut blob = Vec::with_capacity(4 * self.model.param_count());
        for v in self.model.encoder.params().iter().chain(self.model.decoder.params()) {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&blob)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RomError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut word = [0u8; 4];
        read(&mut r, &mut word)?;
        if &word != MAGIC {
            return Err(RomError::Format("bad magic".into()));
        }
        read(&mut r, &mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(RomError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let mut long = [0u8; 8];
        read(&mut r, &mut long)?;
        let header_len = u64::from_le_bytes(long) as usize;
        if header_len > 1 << 30 {
            return Err(RomError::Format("header too large".into()));
        }
        let mut header = vec![0u8; header_len];
        read(&mut r, &mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        header.arch.validate()?;
        header.stats.validate()?;
        read(&mut r, &mut long)?;
        let count = u64::from_le_bytes(long) as usize;
        let enc_sizes = header.arch.encoder_sizes();
        let dec_sizes = header.arch.decoder_sizes();
        let (ne, nd) = (param_count(&enc_sizes), param_count(&dec_sizes));
        if count != ne + nd {
            return Err(RomError::ShapeMismatch {
                what: "checkpoint parameters",
                expected: ne + nd,
                got: count,
            });
        }
        let mut blob = vec![0u8; 4 * count];
        read(&mut r, &mut blob)?;
        let mut values = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let enc: Array1<f32> = values.by_ref().take(ne).collect();
        let dec: Array1<f32> = values.collect();
        if enc.iter().chain(&dec).any(|v| !v.is_finite()) {
            return Err(RomError::CorruptParameters);
        }
        let mut tail = [0u8; 1];
        if r.read(&mut tail)? != 0 {
            return Err(RomError::Format("trailing bytes after parameters".into()));
        }
        let model = Autoencoder::from_parts(
            header.arch.clone(),
            Mlp::from_params(&enc_sizes, enc)?,
            Mlp::from_params(&dec_sizes, dec)?,
        )?;
        Ok(Checkpoint {
            model,
            stats: header.stats,
            metadata: header.metadata,
        })
    }
}

fn read(r: &mut impl Read, buf: &mut [u8]) -> Result<(), RomError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            RomError::Format("file truncated".into())
        } else {
            RomError::Io(e)
        }
    })
}
