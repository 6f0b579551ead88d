//! Output directory bookkeeping: every file goes through [`Sink`], which
//! remembers it for the manifest.

use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.txt";

pub struct Sink {
    root: PathBuf,
    prefix: String,
    files: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Sink {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Sink {
            root,
            prefix: String::new(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Subsequent files go under `root/<prefix>`; `""` resets.
    pub fn set_prefix(&mut self, prefix: &str) {
        self.prefix = if prefix.is_empty() || prefix.ends_with('/') {
            prefix.to_string()
        } else {
            format!("{prefix}/")
        };
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let rel = format!("{}{name}", self.prefix);
        let path = self.root.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        if !self.files.contains(&rel) {
            self.files.push(rel);
        }
        Ok(path)
    }

    /// Write through a closure producing the content.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|source| CliError::Io {
            path: name.to_string(),
            source,
        })?;
        self.write(name, &buf)
    }

    /// Write `manifest.txt`: sorted `path<TAB>sha256` lines, preceded by a
    /// `#partial<TAB>reason` line when the run did not finish.
    pub fn finish(&self, partial: Option<&str>) -> Result<String, CliError> {
        let mut files = self.files.clone();
        files.sort();
        let mut text = String::new();
        if let Some(reason) = partial {
            text.push_str(&format!("#partial\t{}\n", reason.replace(['\n', '\t'], " ")));
        }
        for rel in files {
            let path = self.root.join(&rel);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            text.push_str(&format!("{rel}\t{}\n", sha256_hex(&bytes)));
        }
        let path = self.root.join(MANIFEST);
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(text.as_bytes()).map_err(io_err(&path))?;
        Ok(text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
