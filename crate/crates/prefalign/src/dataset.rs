//! Preference dataset and held-out prompt files.

use std::path::Path;

use prefalign_core::align::PreferenceSample;
use prefalign_core::ImageShape;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::{EvalPrompt, ForgeManifest};
use crate::io;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub image_shape: ImageShape,
    pub cond_dim: usize,
    pub samples: Vec<PreferenceSample>,
    pub eval_prompts: Vec<EvalPrompt>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.image_shape.len();
        for (i, s) in self.samples.iter().enumerate() {
            let ok = [&s.y1, &s.y2].iter().all(|y| y.shape == self.image_shape && y.pixels.len() == n)
                && s.x1.cond.len() == self.cond_dim
                && s.x2.cond.len() == self.cond_dim;
            if !ok {
                return Err(Error::Invalid(format!("sample {i} does not match the dataset shape")));
            }
        }
        if self.eval_prompts.iter().any(|p| p.cond.len() != self.cond_dim) {
            return Err(Error::Invalid("held-out prompt with wrong condition width".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        io::write_file(
            path,
            io::canonical_json_compact("dataset", SCHEMA_VERSION, config_hash, self)?.as_bytes(),
        )
    }

    pub fn load(path: &Path) -> Result<(Dataset, String)> {
        let (d, hash): (Dataset, String) = io::read_canonical_json(path, "dataset", SCHEMA_VERSION)?;
        d.validate().map_err(|e| Error::format(path, e))?;
        Ok((d, hash))
    }
}

impl ForgeManifest {
    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        io::write_file(
            path,
            io::canonical_json("pairs", SCHEMA_VERSION, config_hash, self)?.as_bytes(),
        )
    }

    pub fn load(path: &Path) -> Result<(ForgeManifest, String)> {
        io::read_canonical_json(path, "pairs", SCHEMA_VERSION)
    }
}
