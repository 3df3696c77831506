//! Round-trip decimal formatting for persisted datasets.

/// Formats an `f64` with 17 significant digits in scientific notation.
///
/// 17 significant decimal digits are always enough to round-trip an IEEE-754
/// double, so re-parsing a persisted value recovers the exact bit pattern.
pub(crate) fn f64_repr(x: f64) -> String {
    format!("{x:.16e}")
}
