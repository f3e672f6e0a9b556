//! Helpers for the stable structured-text documents emitted by transcripts
//! and audit reports: integers travel as decimal strings (no precision loss
//! at any modulus) and rationals as `num/den` strings.

use crate::Rat;
use num::ToPrimitive;

/// `"num/den"`, or just `"num"` when the value is integral.
pub fn rational_string(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Fixed-precision decimal rendering for human-facing lines. Exact values
/// stay authoritative; this is display only.
pub fn decimal_string(r: &Rat) -> String {
    match r.to_f64() {
        Some(v) => format!("{v:.6}"),
        None => "overflow".to_string(),
    }
}

pub fn int_strings<T: ToString>(values: &[T]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}
