//! Fixed-format number rendering shared by every CSV writer.

/// Renders `v` in fixed decimal notation with 9 significant digits.
///
/// NaN is rendered as `nan`; infinities as `inf` / `-inf`.
pub fn fmt_sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0.00000000".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding can bump the magnitude (9.9999999996 -> 10.00000000); redo once.
    let digits = s.chars().filter(|c| c.is_ascii_digit()).count();
    let leading_zeros = leading_zero_digits(&s);
    if digits - leading_zeros > 9 && decimals > 0 {
        let decimals = decimals - 1;
        return format!("{v:.decimals$}");
    }
    s
}

fn leading_zero_digits(s: &str) -> usize {
    s.chars()
        .filter(|c| c.is_ascii_digit() || *c == '.')
        .take_while(|c| *c == '0' || *c == '.')
        .filter(|c| *c == '0')
        .count()
}

/// Optional value rendered with [`fmt_sig9`], or `nan` when absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_else(|| "nan".to_string())
}
