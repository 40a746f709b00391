//! Binary polar-dictionary interchange format.
//!
//! Layout, all little-endian: a 32-byte header `n: u64, m: u64, beta: f64,
//! r_min: f64`, then the `n x m` matrix column-major as `(re: f64, im: f64)`
//! pairs. Total size is `32 + 16 n m` bytes. Encoding preserves the exact
//! bit patterns, so an export/import round trip is bit-identical.

use anyhow::{bail, Context, Result};
use hybridfield::codebook::PolarDictionary;
use hybridfield::linalg::CMat;
use num_complex::Complex64;

/// Decoded dictionary file.
#[derive(Debug, Clone)]
pub struct DictionaryFile {
    pub n: u64,
    pub m: u64,
    pub beta: f64,
    pub r_min: f64,
    /// Columns in dictionary order.
    pub d: CMat,
}

pub fn encode(dict: &PolarDictionary) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 16 * dict.n * dict.m);
    out.extend_from_slice(&(dict.n as u64).to_le_bytes());
    out.extend_from_slice(&(dict.m as u64).to_le_bytes());
    out.extend_from_slice(&dict.beta.to_le_bytes());
    out.extend_from_slice(&dict.r_min.to_le_bytes());
    for z in dict.d.as_slice() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<DictionaryFile> {
    if bytes.len() < 32 {
        bail!(
            "dictionary file is {} bytes, shorter than the 32-byte header",
            bytes.len()
        );
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().unwrap() };
    let n = u64::from_le_bytes(word(0));
    let m = u64::from_le_bytes(word(1));
    let beta = f64::from_le_bytes(word(2));
    let r_min = f64::from_le_bytes(word(3));
    let entries = (n as usize)
        .checked_mul(m as usize)
        .context("dictionary header overflows entry count")?;
    let expect = 32 + 16 * entries;
    if bytes.len() != expect {
        bail!(
            "dictionary file is {} bytes; header {n} x {m} implies {expect}",
            bytes.len()
        );
    }
    let mut data = Vec::with_capacity(entries);
    for k in 0..entries {
        let at = 32 + 16 * k;
        let re = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[at + 8..at + 16].try_into().unwrap());
        data.push(Complex64::new(re, im));
    }
    let d = CMat::from_data(n as usize, m as usize, data)
        .map_err(|e| anyhow::anyhow!("dictionary payload rejected: {e}"))?;
    Ok(DictionaryFile {
        n,
        m,
        beta,
        r_min,
        d,
    })
}
