//! On-disk checkpoint container.
//!
//! Layout: the magic line `RNNOPT1\n`, a textual array manifest (name,
//! shape, byte offset into the payload), the raw payload of little-endian
//! 64-bit floats, and a trailing UTF-8 `key = value` config block. The
//! round trip is bit-exact.

use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::metatrain::{Checkpoint, TrainConfig};
use crate::network::NetParams;

use super::config::{self, ConfigError};

pub const MAGIC: &[u8; 8] = b"RNNOPT1\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic); expected version RNNOPT1")]
    VersionMismatch,
    #[error("corrupt checkpoint at byte offset {offset}: {what}")]
    Corrupt { offset: usize, what: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let arrays = ckpt.params.arrays();
    let mut manifest = format!("arrays {}\n", arrays.len());
    let mut payload: Vec<u8> = Vec::new();
    for (name, tensor) in &arrays {
        let shape =
            tensor.shape.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("x");
        manifest.push_str(&format!("{name} {shape} {}\n", payload.len()));
        for v in &tensor.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut trailer = config::train_config_to_text(&ckpt.config);
    trailer.push_str(&format!("iteration = {}\n", ckpt.iteration));
    trailer.push_str(&format!("validation_regret = {}\n", ckpt.validation_regret));
    trailer.push_str(&format!("rng = {}\n", ckpt.rng_description));
    let trailer_lines = trailer.lines().count();

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(manifest.as_bytes());
    out.extend_from_slice(format!("payload {}\n", payload.len()).as_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(format!("config {trailer_lines}\n").as_bytes());
    out.extend_from_slice(trailer.as_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str, CheckpointError> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or(CheckpointError::Corrupt {
            offset: start,
            what: "unterminated header line".to_string(),
        })?;
        self.pos = start + end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| CheckpointError::Corrupt {
            offset: start,
            what: "header line is not UTF-8".to_string(),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt {
                offset: self.bytes.len(),
                what: format!("expected {n} more bytes at offset {}", self.pos),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::VersionMismatch);
    }
    let mut cur = Cursor { bytes, pos: MAGIC.len() };

    let corrupt = |cur: &Cursor, what: &str| CheckpointError::Corrupt {
        offset: cur.pos,
        what: what.to_string(),
    };

    let header = cur.line()?;
    let count: usize = header
        .strip_prefix("arrays ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| corrupt(&cur, "expected `arrays <count>`"))?;
    let mut entries: Vec<(String, Vec<usize>, usize)> = Vec::with_capacity(count);
    for _ in 0..count {
        let line = cur.line()?;
        let mut parts = line.split(' ');
        let (Some(name), Some(shape), Some(offset), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(corrupt(&cur, "expected `<name> <shape> <offset>`"));
        };
        let shape: Vec<usize> = shape
            .split('x')
            .map(|e| e.parse().map_err(|_| corrupt(&cur, "bad shape extent")))
            .collect::<Result<_, _>>()?;
        let offset: usize =
            offset.parse().map_err(|_| corrupt(&cur, "bad payload offset"))?;
        entries.push((name.to_string(), shape, offset));
    }

    let payload_line = cur.line()?;
    let payload_len: usize = payload_line
        .strip_prefix("payload ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| corrupt(&cur, "expected `payload <bytes>`"))?;
    let payload = cur.take(payload_len)?;

    let config_line = cur.line()?;
    let trailer_lines: usize = config_line
        .strip_prefix("config ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| corrupt(&cur, "expected `config <lines>`"))?;
    let trailer = std::str::from_utf8(&bytes[cur.pos..])
        .map_err(|_| corrupt(&cur, "config block is not UTF-8"))?;
    if trailer.lines().count() != trailer_lines {
        return Err(corrupt(&cur, "config block line count mismatch"));
    }

    // Split the trailer into run metadata and the training configuration.
    let mut config_text = String::new();
    let mut iteration = None;
    let mut validation_regret = None;
    let mut rng_description = None;
    for line in trailer.lines() {
        if let Some(v) = line.strip_prefix("iteration = ") {
            iteration = v.parse::<usize>().ok();
        } else if let Some(v) = line.strip_prefix("validation_regret = ") {
            validation_regret = v.parse::<f64>().ok();
        } else if let Some(v) = line.strip_prefix("rng = ") {
            rng_description = Some(v.to_string());
        } else {
            config_text.push_str(line);
            config_text.push('\n');
        }
    }
    let config: TrainConfig = config::train_config_from_text(&config_text)?;
    let (Some(iteration), Some(validation_regret), Some(rng_description)) =
        (iteration, validation_regret, rng_description)
    else {
        return Err(corrupt(&cur, "missing run metadata in config block"));
    };

    // Reassemble parameter tensors from the manifest.
    let mut tensors = Vec::with_capacity(entries.len());
    for (name, shape, offset) in &entries {
        let numel: usize = shape.iter().product();
        let end = offset + numel * 8;
        if end > payload.len() {
            return Err(CheckpointError::Corrupt {
                offset: MAGIC.len() + *offset,
                what: format!("array `{name}` extends past the payload"),
            });
        }
        let data: Vec<f64> = payload[*offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        tensors.push((name.clone(), Tensor { shape: shape.clone(), data }));
    }

    let mut params = {
        use crate::rng::{stream, tag};
        let mut rng = stream(0, &[tag::PARAM_INIT]);
        NetParams::init(config.d, config.units, config.penalty_channel(), &mut rng)
    };
    let expected: Vec<(String, Vec<usize>)> =
        params.arrays().iter().map(|(n, t)| (n.clone(), t.shape.clone())).collect();
    let got: Vec<(String, Vec<usize>)> =
        tensors.iter().map(|(n, t)| (n.clone(), t.shape.clone())).collect();
    if expected != got {
        return Err(CheckpointError::Corrupt {
            offset: MAGIC.len(),
            what: format!("array manifest {got:?} does not match configuration {expected:?}"),
        });
    }
    let flat: Vec<f64> = tensors.iter().flat_map(|(_, t)| t.data.iter().copied()).collect();
    params.assign_flat(&flat);

    Ok(Checkpoint { params, config, iteration, validation_regret, rng_description })
}
