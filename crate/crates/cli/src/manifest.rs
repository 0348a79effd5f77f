//! Run manifests: every command writes one before doing any work, so a
//! run can be reproduced from the manifest alone.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::files::write_file;
use crate::CliError;

pub struct ManifestBuilder {
    command: &'static str,
    argv: Vec<String>,
    options: serde_json::Map<String, Value>,
    inputs: serde_json::Map<String, Value>,
}

impl ManifestBuilder {
    pub fn new(command: &'static str, argv: &[String]) -> Self {
        ManifestBuilder {
            command,
            argv: argv.to_vec(),
            options: serde_json::Map::new(),
            inputs: serde_json::Map::new(),
        }
    }

    /// Resolved option value, after defaulting.
    pub fn option(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.options.insert(key.to_string(), value.into());
        self
    }

    /// Input file with the digest of its stored bytes.
    pub fn input(&mut self, label: &str, path: &Path, sha256: &str) -> &mut Self {
        self.inputs.insert(
            label.to_string(),
            json!({"path": path.display().to_string(), "sha256": sha256}),
        );
        self
    }

    pub fn render(&self) -> String {
        let v = json!({
            "tool": {"name": "ntm", "version": env!("CARGO_PKG_VERSION")},
            "command": self.command,
            "argv": self.argv,
            "options": Value::Object(self.options.clone()),
            "inputs": Value::Object(self.inputs.clone()),
        });
        let mut s = serde_json::to_string_pretty(&v).expect("manifest is valid JSON");
        s.push('\n');
        s
    }

    /// Writes `manifest-<command>.json` into `out_dir` and returns the path.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = out_dir.join(format!("manifest-{}.json", self.command));
        write_file(&path, self.render().as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_manifest_is_deterministic_and_complete() {
        let argv = vec!["train".to_string(), "--seed".to_string(), "7".to_string()];
        let mut m = ManifestBuilder::new("train", &argv);
        m.option("seed", 7).option("epochs", 50).option("model", "ntm");
        m.input("docword", Path::new("/data/docword.txt"), "abc123");

        let a = m.render();
        let b = m.render();
        assert_eq!(a, b);
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["command"], "train");
        assert_eq!(v["options"]["epochs"], 50);
        assert_eq!(v["inputs"]["docword"]["sha256"], "abc123");
        assert_eq!(v["argv"][2], "7");
        assert!(v["tool"]["version"].is_string());
    }

    #[test]
    fn test_manifest_file_name_follows_command() {
        let dir = tempfile::tempdir().unwrap();
        let m = ManifestBuilder::new("cooc", &[]);
        let path = m.write(dir.path()).unwrap();
        assert!(path.ends_with("manifest-cooc.json"));
        assert!(path.exists());
    }
}
