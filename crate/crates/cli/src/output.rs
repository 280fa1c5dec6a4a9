//! CSV artifacts and the reproducibility manifest.
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! an artifact is either absent or complete.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// An in-memory CSV table with a mandatory header row.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics on a width mismatch, which is a programming error.
    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width does not match the header"
        );
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Collects the artifacts of one run in an output directory.
#[derive(Debug)]
pub struct ArtifactDir {
    root: PathBuf,
    written: Vec<String>,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write_bytes(name, table.render().as_bytes())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// What is needed to rerun an experiment bit for bit.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub version: String,
    pub artifacts: Vec<String>,
}

impl Manifest {
    /// The config itself is stored next to the manifest as `config.toml`.
    pub fn render(&self) -> String {
        let files: Vec<String> = self.artifacts.iter().map(|a| format!("{a:?}")).collect();
        format!(
            "command = {:?}\nseed = {}\nconfig = \"config.toml\"\nconfig_sha256 = {:?}\nversion = {:?}\nartifacts = [{}]\n",
            self.command,
            self.seed,
            self.config_sha256,
            self.version,
            files.join(", ")
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s
                .split('e')
                .next()
                .unwrap()
                .trim_start_matches('-')
                .replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
    }

    #[test]
    fn table_renders_header_first() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), num(0.5)]);
        assert_eq!(t.render(), "a,b\n1,5.0000000000000000e-1\n");
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_is_valid_toml() {
        let m = Manifest {
            command: "rate".into(),
            seed: 7,
            config_sha256: "00".into(),
            version: "0.1.0".into(),
            artifacts: vec!["rate.csv".into()],
        };
        let v: toml::Table = toml::from_str(&m.render()).unwrap();
        assert_eq!(v["seed"].as_integer(), Some(7));
        assert_eq!(v["artifacts"].as_array().unwrap().len(), 1);
    }
}
