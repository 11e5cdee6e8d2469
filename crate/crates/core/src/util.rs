use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Round half away from zero to an integer kilometre value.
pub fn round_km(km: f64) -> u32 {
    // f64::round already rounds half away from zero
    km.round() as u32
}
