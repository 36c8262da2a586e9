//! Domain-separated SHAKE helpers used for seed expansion, key derivation and
//! keystreams.

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::{Shake128, Shake256};

pub type XofStream = <Shake256 as ExtendableOutput>::Reader;

/// SHAKE256 over `tag ∥ parts...`, each part length-prefixed so that
/// concatenations cannot collide.
pub fn xof256(tag: &[u8], parts: &[&[u8]]) -> XofStream {
    let mut h = Shake256::default();
    h.update(&(tag.len() as u32).to_le_bytes());
    h.update(tag);
    for p in parts {
        h.update(&(p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize_xof()
}

pub fn xof128(parts: &[&[u8]]) -> <Shake128 as ExtendableOutput>::Reader {
    let mut h = Shake128::default();
    for p in parts {
        h.update(p);
    }
    h.finalize_xof()
}

pub fn hash32(tag: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut out = [0u8; 32];
    xof256(tag, parts).read(&mut out);
    out
}

/// Derives a 32-byte seed from a root value and a path of integers.
pub fn derive_seed(tag: &str, root: u64, path: &[u64]) -> [u8; 32] {
    let mut buf = Vec::with_capacity(8 * (path.len() + 1));
    buf.extend_from_slice(&root.to_le_bytes());
    for p in path {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    hash32(tag.as_bytes(), &[&buf])
}

pub fn derive_u64(tag: &str, root: u64, path: &[u64]) -> u64 {
    let s = derive_seed(tag, root, path);
    u64::from_le_bytes(s[..8].try_into().expect("8 bytes"))
}
