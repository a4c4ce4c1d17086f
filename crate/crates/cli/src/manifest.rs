use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliResult, Invocation, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one command run. Input paths are absolute; output paths are
/// relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub master_seed: Option<u64>,
    pub invocation: Invocation,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<StageTiming>,
}

pub fn file_digest(path: &Path) -> CliResult<FileDigest> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(FileDigest { path: path.to_path_buf(), sha256: hex::encode(hasher.finalize()) })
}

impl RunManifest {
    pub fn new(
        invocation: &Invocation,
        timings: Vec<StageTiming>,
        out: &Path,
        outputs: &[PathBuf],
    ) -> CliResult<Self> {
        let inputs = invocation.inputs().iter().map(|p| file_digest(p)).collect::<CliResult<_>>()?;
        let outputs = outputs
            .iter()
            .map(|name| {
                let d = file_digest(&out.join(name))?;
                Ok(FileDigest { path: name.clone(), sha256: d.sha256 })
            })
            .collect::<CliResult<_>>()?;
        Ok(Self {
            tool_version: TOOL_VERSION.into(),
            command: invocation.name().into(),
            master_seed: invocation.seed(),
            invocation: invocation.clone(),
            inputs,
            outputs,
            timings,
        })
    }
}
