//! Run directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{self, IoError};

/// Overrides the output directory when `--out` is not given.
pub const RUN_DIR_ENV: &str = "SOLOPO_RUN_DIR";
pub const SUBDIRS: [&str; 4] = ["reports", "data", "checkpoints", "logs"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the run directory for outputs, as given for inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub args: Vec<String>,
    pub config_path: Option<String>,
    pub seed: u64,
    pub output_dir: String,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::Fs { path: path.into(), source })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// `explicit`, else `$SOLOPO_RUN_DIR`, else `runs/<subcommand>`.
pub fn resolve_dir(explicit: Option<&Path>, subcommand: &str) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| Path::new("runs").join(subcommand))
}

#[derive(Debug)]
pub struct RunDir {
    pub root: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    pub fn create(root: PathBuf, subcommand: &str, args: Vec<String>, config: Option<&Path>, seed: u64) -> Result<Self, IoError> {
        for sub in SUBDIRS {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|source| IoError::Fs { path: dir, source })?;
        }
        let mut run = Self {
            manifest: RunManifest {
                subcommand: subcommand.into(),
                args,
                config_path: config.map(|p| p.display().to_string()),
                seed,
                output_dir: root.display().to_string(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
            root,
        };
        if let Some(c) = config {
            run.add_input(c)?;
        }
        Ok(run)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), IoError> {
        let sha256 = sha256_file(path)?;
        self.manifest.inputs.push(FileDigest { path: path.display().to_string(), sha256 });
        Ok(())
    }

    /// Records an output written under the run directory.
    pub fn add_output(&mut self, rel: &str) -> Result<(), IoError> {
        let sha256 = sha256_file(&self.path(rel))?;
        self.manifest.outputs.push(FileDigest { path: rel.into(), sha256 });
        Ok(())
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(mut self) -> Result<PathBuf, IoError> {
        self.manifest.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let path = self.path("manifest.json");
        io::write_json(&path, &self.manifest)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_digests() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("r");
        let mut run = RunDir::create(root.clone(), "speedup", vec![], None, 3).unwrap();
        fs::write(run.path("reports/x.txt"), b"abc").unwrap();
        run.add_output("reports/x.txt").unwrap();
        let m: RunManifest = io::read_json(&run.finish().unwrap()).unwrap();
        for sub in SUBDIRS {
            assert!(root.join(sub).is_dir());
        }
        assert_eq!(m.outputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn explicit_dir_wins() {
        assert_eq!(resolve_dir(Some(Path::new("a")), "forge"), PathBuf::from("a"));
    }
}
