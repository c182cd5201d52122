use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Git-style blob hash (`"blob <len>\0" ‖ content`) under SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// `run.meta`: command, seed, the effective config and a hash per input file
/// (directories are hashed file by file in sorted order).
pub fn write_run_meta(path: impl AsRef<Path>, command: &str, config: &[(String, String)], inputs: &[&Path]) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "command={command}").expect("string write");
    for (k, v) in config {
        writeln!(s, "config.{k}={v}").expect("string write");
    }
    for input in inputs {
        for (name, hash) in hash_tree(input)? {
            writeln!(s, "input.{name}={hash}").expect("string write");
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn hash_tree(path: &Path) -> Result<Vec<(String, String)>> {
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)?.collect::<std::io::Result<Vec<_>>>()?;
        entries.sort_by_key(|e| e.file_name());
        let mut out = Vec::new();
        for e in entries {
            if e.file_name() == "run.meta" {
                continue;
            }
            out.extend(hash_tree(&e.path())?);
        }
        Ok(out)
    } else {
        Ok(vec![(path.display().to_string(), content_hash(&std::fs::read(path)?))])
    }
}
