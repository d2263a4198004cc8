//! Binary model checkpoints: magic, format version, a JSON header and the
//! flat parameter vector as little-endian `f64`.

use std::path::Path;

use prefalign_core::{Denoiser, DenoiserConfig, ScheduleKind};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

const MAGIC: &[u8; 4] = b"PFCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleKind,
    pub timesteps: usize,
    pub config_hash: String,
    /// Alignment variant, `None` for a pretrained model.
    pub variant: Option<String>,
}

pub fn encode(header: &CheckpointHeader, model: &Denoiser) -> Result<Vec<u8>> {
    if header.denoiser != *model.config() {
        return Err(Error::Invalid("checkpoint header does not describe the model".into()));
    }
    let json = serde_json::to_vec(header).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * model.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(bytes.get(at..at + 4)?.try_into().ok()?))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(CheckpointHeader, Denoiser)> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let version = u32_at(bytes, 4).ok_or_else(|| Error::format(path, "truncated header"))?;
    if version != FORMAT_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = u32_at(bytes, 8).ok_or_else(|| Error::format(path, "truncated header"))? as usize;
    let json = bytes.get(12..12 + len).ok_or_else(|| Error::format(path, "truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| Error::format(path, e))?;
    let body = &bytes[12 + len..];
    let n = header.denoiser.num_params();
    if body.len() != 8 * n {
        return Err(Error::format(
            path,
            format!("expected {n} parameters, found {} bytes", body.len()),
        ));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let model = Denoiser::from_params(header.denoiser, params)?;
    model.check_finite()?;
    Ok((header, model))
}

pub fn save(path: &Path, header: &CheckpointHeader, model: &Denoiser) -> Result<()> {
    io::write_file(path, &encode(header, model)?)
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, Denoiser)> {
    decode(&io::read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (CheckpointHeader, Denoiser) {
        let cfg = DenoiserConfig {
            image_dim: 12,
            time_dim: 4,
            cond_dim: 3,
            hidden: 5,
        };
        let header = CheckpointHeader {
            denoiser: cfg,
            schedule: ScheduleKind::CosineVp,
            timesteps: 10,
            config_hash: "abc".into(),
            variant: Some("cross_val".into()),
        };
        (header, Denoiser::init(cfg, 1).unwrap())
    }

    #[test]
    fn roundtrip_is_exact() {
        let (h, m) = small();
        let bytes = encode(&h, &m).unwrap();
        let (h2, m2) = decode(&bytes, Path::new("x")).unwrap();
        assert_eq!(h, h2);
        assert_eq!(m.params(), m2.params());
    }

    #[test]
    fn corrupt_files_rejected() {
        let (h, m) = small();
        let bytes = encode(&h, &m).unwrap();
        let p = Path::new("x");
        assert!(decode(&bytes[..bytes.len() - 1], p).is_err());
        assert!(decode(b"nope", p).is_err());
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(decode(&v, p), Err(Error::SchemaVersion { found: 9, .. })));
    }
}
