use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Written next to the output, or to
/// stderr when the output goes to stdout.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub seed: u64,
    pub params: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

/// Reads input files and remembers their digests.
#[derive(Default)]
pub struct Inputs {
    pub digests: Vec<InputDigest>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
        self.digests.push(InputDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        String::from_utf8(bytes).map_err(|_| Failure::usage(format!("{} is not UTF-8", path.display())))
    }
}
