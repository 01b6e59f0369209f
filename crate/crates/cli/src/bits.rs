//! Bit-width list parsing: `5`, `4-8`, `4..8`, `4..=8` or `2,4,8`.

use dfq_core::quantizer::check_bits;

use crate::error::{CliError, Result};

pub fn parse_bits(text: &str) -> Result<Vec<u32>> {
    let num = |s: &str| -> Result<u32> {
        s.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad bit width {s:?} in {text:?}")))
    };
    let t = text.trim();
    let range = t
        .split_once("..=")
        .or_else(|| t.split_once(".."))
        .or_else(|| t.split_once('-'));
    let bits: Vec<u32> = if let Some((lo, hi)) = range {
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo > hi {
            return Err(CliError::Usage(format!("empty bit range {text:?}")));
        }
        (lo..=hi).collect()
    } else {
        t.split(',').map(num).collect::<Result<_>>()?
    };
    let mut seen = Vec::with_capacity(bits.len());
    for b in bits {
        check_bits(b)?;
        if !seen.contains(&b) {
            seen.push(b);
        }
    }
    Ok(seen)
}
