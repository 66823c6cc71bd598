//! Artifact directory: manifest, CSV tables, JSON reports and CHQF fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use choquard::io::{self, Field};

use crate::failure::Failure;

pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    /// Opens `dir` for writing. An existing nonempty directory is refused
    /// unless `force` is set.
    pub fn create(dir: &Path, force: bool) -> Result<Self, Failure> {
        if dir.exists() {
            let nonempty = fs::read_dir(dir).map_err(Failure::io)?.next().is_some();
            if nonempty && !force {
                return Err(Failure::Config(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    dir.display()
                )));
            }
        }
        fs::create_dir_all(dir).map_err(Failure::io)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Numerical(e.to_string()))?;
        fs::write(self.path(name), text + "\n").map_err(Failure::io)
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_path(self.path(name)).map_err(|e| Failure::Numerical(e.to_string()))?;
        for row in rows {
            w.serialize(row).map_err(|e| Failure::Numerical(e.to_string()))?;
        }
        w.flush().map_err(Failure::io)
    }

    pub fn field(&self, name: &str, field: &Field) -> Result<(), Failure> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(Failure::io)?;
        }
        io::save(&path, field).map_err(Failure::from)
    }
}
