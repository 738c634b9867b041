use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::Value;

/// Output directory; every file written through it carries the config hash.
pub struct Output {
    dir: PathBuf,
    pub hash: String,
}

impl Output {
    pub fn new(dir: &Path, hash: &str) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), hash: hash.to_string() })
    }

    /// Writes text that already declares the hash.
    pub fn raw(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        debug_assert!(text.contains(&self.hash));
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// CSV with a leading `# config_hash=` comment line.
    pub fn csv(&self, name: &str, header: &str, rows: &[String]) -> anyhow::Result<PathBuf> {
        let mut text = format!("# config_hash={}\n{header}\n", self.hash);
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        self.raw(name, &text)
    }

    /// Pretty JSON object with a `config_hash` key; keys come out sorted.
    pub fn json(&self, name: &str, mut value: Value) -> anyhow::Result<PathBuf> {
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.raw(name, &text)
    }
}

/// Stable CSV float formatting.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
