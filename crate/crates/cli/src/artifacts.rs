//! Output directory handling: the run lock, provenance headers, manifests.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const LOCK_NAME: &str = ".flowpath.lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a BTreeMap<String, String>,
    inputs: BTreeMap<String, InputRecord>,
    outputs: BTreeMap<String, String>,
}

/// An output directory held for the duration of one run.
///
/// The lock file is created exclusively, so a second run against the same
/// directory fails instead of interleaving writes. It is removed on drop.
pub struct RunDir {
    root: PathBuf,
    command: String,
    seed: u64,
    config: BTreeMap<String, String>,
    inputs: BTreeMap<String, InputRecord>,
    outputs: BTreeMap<String, String>,
    lock: PathBuf,
}

impl RunDir {
    pub fn open(root: &Path, command: &str, seed: u64) -> anyhow::Result<Self> {
        fs::create_dir_all(root)?;
        let lock = root.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => writeln!(f, "{command} pid {}", std::process::id())?,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => anyhow::bail!(
                "output directory {} is in use by another run (delete {} if that run is gone)",
                root.display(),
                lock.display()
            ),
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            root: root.to_path_buf(),
            command: command.to_string(),
            seed,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn config(&self) -> &BTreeMap<String, String> {
        &self.config
    }

    pub fn record_input(&mut self, role: &str, path: &Path) -> anyhow::Result<()> {
        let sha256 = hash_file(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        self.inputs.insert(role.to_string(), InputRecord { path: path.display().to_string(), sha256 });
        Ok(())
    }

    /// One-line `#` comment naming the command, seed and config, for CSV headers.
    pub fn provenance(&self) -> String {
        let cfg: Vec<String> = self.config.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("# flowpath {} {} seed={} {}\n", env!("CARGO_PKG_VERSION"), self.command, self.seed, cfg.join(" "))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.path(name);
        let mut f = File::create(&path)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes a CSV produced by `body`, prefixed with the provenance comment.
    pub fn write_csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> flowpath_core::Result<()>,
    ) -> anyhow::Result<()> {
        let mut buf = self.provenance().into_bytes();
        body(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `manifest-<command>.json` and releases the lock.
    pub fn finish(mut self) -> anyhow::Result<()> {
        let manifest = Manifest {
            tool: "flowpath",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            seed: self.seed,
            config: &self.config,
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.root.join(format!("manifest-{}.json", self.command)), bytes)?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
