//! Fixed numeric formatting shared by the CSV and JSON emitters.

/// Rounds to `digits` significant decimal digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .unwrap_or(x)
}

/// Decimal text of `x` rounded to ten significant digits.
pub fn sig10(x: f64) -> String {
    format!("{}", round_significant(x, 10))
}
