//! Header checksum: two mod-255 Fletcher sums over the header.
//!
//! With the header octets `a[1..=L]` and the checksum octets `X`, `Y` at
//! positions `n`, `n+1`, a header is valid when
//!
//! ```text
//! sum(a[i])             == 0 (mod 255)
//! sum((L - i + 1) a[i]) == 0 (mod 255)
//! ```
//!
//! A checksum of `(0, 0)` means the checksum is not in use. Octet values are
//! only meaningful mod 255, so a computed zero is written as 255.

use thiserror::Error;

const MODULUS: i64 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ChecksumError {
    #[error("header of {len} octets cannot hold a checksum at {pos}")]
    HeaderTooShort { len: usize, pos: usize },
    #[error("octet index {0} outside the header or inside the checksum field")]
    IndexOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChecksumVerdict {
    Valid,
    Invalid,
    /// Both checksum octets are zero.
    NotUsed,
}

fn check_pos(header: &[u8], checksum_pos: usize) -> Result<(), ChecksumError> {
    if checksum_pos + 1 >= header.len() {
        return Err(ChecksumError::HeaderTooShort {
            len: header.len(),
            pos: checksum_pos,
        });
    }
    Ok(())
}

/// Returns `(c0, c1)` where `c1` is the sum of the running sums, which
/// weights octet `i` (1-based) by `L - i + 1`.
fn fletcher_sums(header: &[u8], skip: Option<usize>) -> (i64, i64) {
    let mut c0 = 0i64;
    let mut c1 = 0i64;
    for (i, &b) in header.iter().enumerate() {
        let b = match skip {
            Some(pos) if i == pos || i == pos + 1 => 0,
            _ => i64::from(b),
        };
        c0 = (c0 + b) % MODULUS;
        c1 = (c1 + c0) % MODULUS;
    }
    (c0, c1)
}

fn to_octet(v: i64) -> u8 {
    match v.rem_euclid(MODULUS) {
        0 => 255,
        r => r as u8,
    }
}

/// Computes the checksum octets for `header`, treating the two octets at
/// `checksum_pos` as zero. Never returns a zero octet.
pub fn compute_checksum(header: &[u8], checksum_pos: usize) -> Result<(u8, u8), ChecksumError> {
    check_pos(header, checksum_pos)?;
    let (c0, c1) = fletcher_sums(header, Some(checksum_pos));
    // Distance from the first checksum octet to the end of the header.
    let tail = (header.len() - checksum_pos - 1) as i64;
    let x = tail * c0 - c1;
    let y = c1 - (tail + 1) * c0;
    Ok((to_octet(x), to_octet(y)))
}

pub fn verify_checksum(
    header: &[u8],
    checksum_pos: usize,
) -> Result<ChecksumVerdict, ChecksumError> {
    check_pos(header, checksum_pos)?;
    if header[checksum_pos] == 0 && header[checksum_pos + 1] == 0 {
        return Ok(ChecksumVerdict::NotUsed);
    }
    Ok(match fletcher_sums(header, None) {
        (0, 0) => ChecksumVerdict::Valid,
        _ => ChecksumVerdict::Invalid,
    })
}

/// Updates the checksum after the octet at `changed_pos` went from `old` to
/// `new`. `header` must already hold `new`; the stored checksum is read from
/// it. A header whose checksum is not in use keeps `(0, 0)`.
///
/// Changing `a[k]` by `d` moves the two sums by `d` and `(L - k + 1) d`;
/// adding `(k - n - 1) d` to `X` and `(n - k) d` to `Y` cancels both.
pub fn adjust_checksum(
    header: &[u8],
    changed_pos: usize,
    old: u8,
    new: u8,
    checksum_pos: usize,
) -> Result<(u8, u8), ChecksumError> {
    check_pos(header, checksum_pos)?;
    if changed_pos >= header.len() || changed_pos == checksum_pos || changed_pos == checksum_pos + 1
    {
        return Err(ChecksumError::IndexOutOfRange(changed_pos));
    }
    let (x, y) = (header[checksum_pos], header[checksum_pos + 1]);
    if (x, y) == (0, 0) || old == new {
        return Ok((x, y));
    }
    let delta = i64::from(new) - i64::from(old);
    let k = changed_pos as i64;
    let n = checksum_pos as i64;
    let x = i64::from(x) + (k - n - 1) * delta;
    let y = i64::from(y) + (n - k) * delta;
    Ok((to_octet(x), to_octet(y)))
}
