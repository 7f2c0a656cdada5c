//! Locale-independent numeric formatting for emitted files.

/// Rounds to 12 significant digits and prints the shortest decimal form.
pub fn num(x: f64) -> String {
    let r = round12(x);
    if r == 0.0 {
        return "0".to_string();
    }
    format!("{r}")
}

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("valid float literal")
}
