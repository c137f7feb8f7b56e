//! Byte-size parsing for flags and profile files: plain integers are
//! bytes; `KiB` / `MiB` / `GiB` suffixes (case-insensitive, optional
//! whitespace) are binary multiples.

use crate::error::{EmError, Result};

pub fn parse_size(text: &str) -> Result<u64> {
    let s = text.trim();
    let lower = s.to_ascii_lowercase();
    let (digits, factor) = if let Some(stripped) = lower.strip_suffix("gib") {
        (stripped, 1u64 << 30)
    } else if let Some(stripped) = lower.strip_suffix("mib") {
        (stripped, 1u64 << 20)
    } else if let Some(stripped) = lower.strip_suffix("kib") {
        (stripped, 1u64 << 10)
    } else if let Some(stripped) = lower.strip_suffix('b') {
        (stripped, 1u64)
    } else {
        (lower.as_str(), 1u64)
    };
    let value: u64 = digits
        .trim()
        .parse()
        .map_err(|_| EmError::Config(format!("cannot parse size '{text}'")))?;
    value
        .checked_mul(factor)
        .ok_or_else(|| EmError::Config(format!("size '{text}' overflows")))
}

pub fn format_size(bytes: u64) -> String {
    if bytes >= 1 << 20 && bytes.is_multiple_of(1 << 20) {
        format!("{}MiB", bytes >> 20)
    } else if bytes >= 1 << 10 && bytes.is_multiple_of(1 << 10) {
        format!("{}KiB", bytes >> 10)
    } else {
        format!("{bytes}B")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixes() {
        assert_eq!(parse_size("4096").unwrap(), 4096);
        assert_eq!(parse_size("4KiB").unwrap(), 4096);
        assert_eq!(parse_size("64 kib").unwrap(), 65536);
        assert_eq!(parse_size("1MiB").unwrap(), 1 << 20);
        assert_eq!(parse_size("8B").unwrap(), 8);
        assert!(parse_size("fast").is_err());
    }

    #[test]
    fn formats_round_sizes() {
        assert_eq!(format_size(65536), "64KiB");
        assert_eq!(format_size(1 << 20), "1MiB");
        assert_eq!(format_size(100), "100B");
    }
}
