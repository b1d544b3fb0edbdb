use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Writer confined to the --out directory.
pub struct Out {
    root: PathBuf,
}

impl Out {
    pub fn new(root: &Path) -> Self {
        Out {
            root: root.to_path_buf(),
        }
    }

    /// Writes `rel` under the output root; absolute paths and `..` are
    /// rejected.
    pub fn write(&self, rel: &Path, contents: &str) -> anyhow::Result<PathBuf> {
        if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            anyhow::bail!("{} must be a relative path inside the output directory", rel.display());
        }
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// File-name-safe form of a test or scenario id.
pub fn sanitize(id: &str) -> String {
    let mut out = String::new();
    for c in id.chars() {
        if c.is_ascii_alphanumeric() || c == '_' {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    let trimmed = out.trim_end_matches('-');
    if trimmed.is_empty() {
        "unnamed".to_string()
    } else {
        trimmed.to_string()
    }
}

#[cfg(test)]
mod tests;
