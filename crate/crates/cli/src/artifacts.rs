//! Artifact emission: hashing, manifest records and grayscale exports.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use psr_core::field::Field2D;

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub path: String,
    pub sha256: String,
    /// Min/max scaling of 8-bit image exports, recorded so the images stay
    /// comparable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_max: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub name: String,
    /// "ok", "skipped" (precomputed artifact supplied), "disabled" or "failed".
    pub status: String,
    pub wall_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub serial: bool,
    pub config_echo: String,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<ArtifactRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Emission sink collecting manifest records while writing files.
pub struct Emitter {
    pub out_dir: PathBuf,
    pub artifacts: Vec<ArtifactRecord>,
}

impl Emitter {
    pub fn new(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Emitter { out_dir: out_dir.to_owned(), artifacts: Vec::new() })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    pub fn write_bytes(&mut self, name: &str, file: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(file);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(ArtifactRecord {
            name: name.to_owned(),
            path: file.to_owned(),
            sha256: sha256_hex(bytes),
            scale_min: None,
            scale_max: None,
        });
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, file: &str, text: &str) -> Result<PathBuf> {
        self.write_bytes(name, file, text.as_bytes())
    }

    pub fn write_stack(
        &mut self,
        name: &str,
        file: &str,
        stack: &psr_core::stack::ThermogramStack,
    ) -> Result<PathBuf> {
        let bytes = psr_core::tgs::stack_to_bytes(stack)?;
        self.write_bytes(name, file, &bytes)
    }

    pub fn write_field(&mut self, name: &str, file: &str, field: &Field2D) -> Result<PathBuf> {
        let grid = psr_core::grid::GridSpec { nt: 1, ..*field.grid() };
        let stack =
            psr_core::stack::ThermogramStack::new(grid, vec![field.values().clone()], 0, 0.0)?;
        self.write_stack(name, file, &stack)
    }

    /// 8-bit binary PGM with min/max scaling recorded in the manifest.
    pub fn write_image(&mut self, name: &str, file: &str, field: &Field2D) -> Result<PathBuf> {
        let (lo, hi) = (field.min(), field.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        let g = field.grid();
        let mut bytes = format!("P5\n{} {}\n255\n", g.nx, g.ny).into_bytes();
        for v in field.values().iter() {
            bytes.push(((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8);
        }
        let path = self.path(file);
        std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(ArtifactRecord {
            name: name.to_owned(),
            path: file.to_owned(),
            sha256: sha256_hex(&bytes),
            scale_min: Some(lo),
            scale_max: Some(hi),
        });
        Ok(path)
    }
}
