//! Config-driven front end for the `prodnet` library.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use prodnet::ErrorKind;
use sha2::{Digest, Sha256};

pub mod commands;
pub mod config;

pub use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: prodnet::Error,
    },

    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for bad input or configuration, 3 for numerical failure, 4 for a partial result.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Stage { source, .. } => match source.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Partial => 4,
            },
            CliError::Config(_) | CliError::Output { .. } => 2,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for prodnet::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

/// Seed for one stage of a run: the first eight bytes (little-endian) of
/// `SHA-256("<stage>:<seed>")`.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(format!("{stage}:{seed}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Clean,
    Netcorr,
    Reconstruct,
    Synth,
    Eval,
}

pub fn run(command: Command, config_path: &Path) -> Result<(), CliError> {
    let cfg = Config::load(config_path)?;
    match command {
        Command::Clean => commands::clean::run(&cfg),
        Command::Netcorr => commands::netcorr::run(&cfg),
        Command::Reconstruct => commands::reconstruct::run(&cfg),
        Command::Synth => commands::synth::run(&cfg),
        Command::Eval => commands::eval::run(&cfg),
    }
}

/// Output directory writer; files are created on demand.
pub(crate) struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: PathBuf) -> Result<OutDir, CliError> {
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Output {
            path: dir.clone(),
            source,
        })?;
        Ok(OutDir { dir })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|source| CliError::Output { path, source })
    }

    /// Runs a library writer against a fresh file.
    pub fn write_with(
        &self,
        name: &str,
        stage: &'static str,
        f: impl FnOnce(&mut BufWriter<File>) -> prodnet::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        f(&mut w).stage(stage)?;
        w.flush().map_err(|source| CliError::Output {
            path: self.dir.join(name),
            source,
        })
    }

    pub fn json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("report types serialise");
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| CliError::Output { path, source })
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io = |e: csv::Error| CliError::Output {
            path: path.clone(),
            source: std::io::Error::other(e),
        };
        let mut w = csv::Writer::from_writer(self.file(name)?);
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn open(path: &Path) -> Result<std::io::BufReader<File>, CliError> {
    File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
