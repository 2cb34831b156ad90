//! Artifact emission. Every CSV starts with one `#` provenance line and every JSON document
//! is `{meta, config, result}`.

use bqcsim::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const GIT_DESCRIBE: &str = env!("BQCSIM_GIT_DESCRIBE");

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub git: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
}

impl Meta {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self> {
        Ok(Meta {
            tool: "bqcsim",
            version: env!("CARGO_PKG_VERSION"),
            git: GIT_DESCRIBE,
            command: command.into(),
            seed,
            config_sha256: config_hash(config)?,
        })
    }

    pub fn csv_line(&self) -> String {
        format!("# bqcsim git={} seed={} config_sha256={}\n", self.git, self.seed, self.config_sha256)
    }
}

/// SHA-256 of the compact JSON encoding of the effective configuration.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

pub struct Sink {
    dir: PathBuf,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?;
        Ok(Sink { dir: dir.to_path_buf() })
    }

    pub fn csv(&self, name: &str, meta: &Meta, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, format!("{}{}", meta.csv_line(), body))?;
        Ok(path)
    }

    pub fn json<C: Serialize, R: Serialize>(&self, name: &str, meta: &Meta, config: &C, result: &R) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let doc = serde_json::json!({ "meta": meta, "config": config, "result": result });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Serialize rows with the csv writer into a string body.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&serde_json::json!({"x": 1, "y": [1, 2]})).unwrap();
        assert_eq!(a, config_hash(&serde_json::json!({"x": 1, "y": [1, 2]})).unwrap());
        assert_ne!(a, config_hash(&serde_json::json!({"x": 2, "y": [1, 2]})).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn csv_rows() {
        let s = rows_to_csv(&[Row { a: 1, b: 0.5 }, Row { a: 2, b: 1e-7 }]).unwrap();
        assert_eq!(s, "a,b\n1,0.5\n2,1e-7\n");
    }
}
