use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_VERSION: u32 = 1;

/// Run record: resolved configuration plus digests of every input and
/// output file. Contains no timestamps so repeated runs compare equal.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub arguments: BTreeMap<String, String>,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            arguments: BTreeMap::new(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn argument(&mut self, key: &str, value: impl ToString) {
        self.arguments.insert(key.into(), value.to_string());
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn output(&mut self, name: &str, contents: &[u8]) {
        self.outputs.insert(name.into(), sha256_hex(contents));
    }

    /// Writes `<command>.manifest.json` into the output directory.
    pub fn finish(self) -> anyhow::Result<()> {
        let path = self.config.output_dir.join(format!("{}.manifest.json", self.command));
        std::fs::create_dir_all(&self.config.output_dir)?;
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
