use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliResult;

#[derive(Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub bytes: u64,
}

/// Run record written next to every output.
#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<PathBuf>,
    pub created: String,
}

impl Manifest {
    pub fn new(command: &'static str, config: &impl Serialize, seed: Option<u64>) -> CliResult<Self> {
        Ok(Manifest {
            tool: "causenet",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: serde_json::to_value(config)?,
            seed,
            jobs: rayon::current_num_threads(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    pub fn input(&mut self, path: &Path) {
        let bytes = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        self.inputs.push(InputFile { path: path.to_path_buf(), bytes });
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// `DIR/manifest.json` for directory outputs, `FILE.manifest.json` otherwise.
    pub fn path_for(output: &Path) -> PathBuf {
        if output.is_dir() {
            output.join("manifest.json")
        } else {
            let mut name = output.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            output.with_file_name(name)
        }
    }

    pub fn write(&self, output: &Path) -> CliResult<PathBuf> {
        let path = Self::path_for(output);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
