//! File ingestion: transparent gzip, content digests.

use std::fs;
use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::CliError;

/// Raw bytes as stored; digests are taken over these, not the decoded text.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Reads a text file, decompressing when the gzip magic is present.
pub fn read_text(path: &Path) -> Result<String, CliError> {
    let bytes = read_bytes(path)?;
    decode_text(&bytes).map_err(|msg| CliError::Io(format!("{}: {msg}", path.display())))
}

pub fn decode_text(bytes: &[u8]) -> Result<String, String> {
    let decoded = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| format!("gzip: {e}"))?;
        out
    } else {
        bytes.to_vec()
    };
    String::from_utf8(decoded).map_err(|e| format!("not UTF-8: {e}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// (decoded text, digest of the stored bytes) in one read.
pub fn read_text_digested(path: &Path) -> Result<(String, String), CliError> {
    let bytes = read_bytes(path)?;
    let digest = sha256_hex(&bytes);
    let text =
        decode_text(&bytes).map_err(|msg| CliError::Io(format!("{}: {msg}", path.display())))?;
    Ok((text, digest))
}

pub fn write_file(path: &Path, content: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
