//! Inputs and outputs of one invocation, their digests, and the JSON summary
//! line printed on success.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use defocus_core::blurmap::{self, BlurMap};
use defocus_core::imgcore::io;
use defocus_core::Image;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub struct Run {
    command: &'static str,
    params: Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    results: Map<String, Value>,
    debug_dir: Option<PathBuf>,
    start: Instant,
}

impl Run {
    pub fn new(command: &'static str, params: &impl Serialize) -> Result<Self> {
        Ok(Run {
            command,
            params: serde_json::to_value(params)?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            results: Map::new(),
            debug_dir: None,
            start: Instant::now(),
        })
    }

    pub fn with_debug_dir(mut self, dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        self.debug_dir = dir.map(Path::to_path_buf);
        Ok(self)
    }

    /// Reads and fingerprints an input file.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_image(&mut self, path: &Path) -> Result<Image> {
        let bytes = self.read(path)?;
        io::decode(&bytes).with_context(|| format!("decoding {}", path.display()))
    }

    pub fn read_map(&mut self, path: &Path) -> Result<BlurMap> {
        self.read(path)?;
        blurmap::read_map(path).with_context(|| format!("reading map {}", path.display()))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        io::write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_image(&mut self, path: &Path, img: &Image) -> Result<()> {
        let bytes = io::encode_for_path(img, path)?;
        self.write(path, &bytes)
    }

    pub fn write_json(&mut self, path: &Path, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(path, &bytes)
    }

    /// The 16-bit map and its JSON sidecar.
    pub fn write_map(&mut self, path: &Path, map: &BlurMap, guidance_sha256: Option<String>) -> Result<()> {
        self.write(path, &blurmap::encode_map(map)?)?;
        let sidecar = blurmap::sidecar_for(map, guidance_sha256);
        self.write_json(&blurmap::sidecar_path(path), &sidecar)
    }

    fn debug_path(&self, name: &str) -> Option<PathBuf> {
        self.debug_dir.as_ref().map(|d| d.join(name))
    }

    pub fn debug_image(&mut self, name: &str, img: &Image) -> Result<()> {
        match self.debug_path(name) {
            Some(p) => self.write_image(&p, img),
            None => Ok(()),
        }
    }

    pub fn debug_map(&mut self, name: &str, map: &BlurMap, guidance_sha256: Option<String>) -> Result<()> {
        match self.debug_path(name) {
            Some(p) => self.write_map(&p, map, guidance_sha256),
            None => Ok(()),
        }
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.results.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Prints the one-line summary to stdout.
    pub fn finish(self) -> Result<()> {
        let line = json!({
            "command": self.command,
            "params": self.params,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "results": self.results,
            "wall_time_s": self.start.elapsed().as_secs_f64(),
        });
        println!("{}", serde_json::to_string(&line)?);
        Ok(())
    }
}
