//! Short content digests used to chain pipeline artifacts together.

use sha2::{Digest, Sha256};

/// First 16 hex characters of the SHA-256 of `text`.
pub fn digest_text(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
