//! CSV number formatting.

/// `printf("%.6g")`: six significant digits, trailing zeros dropped,
/// scientific notation when the decimal exponent is below -4 or at least 6.
/// Non-finite values print as `nan`, `inf` and `-inf`.
pub fn g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // rounding to 6 digits first fixes the exponent (9.999996 -> 1.00000e1)
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{}e{sign}{:02}", trim_zeros(mant), exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Comma-joined row of `g6` values.
pub fn row(values: &[f64]) -> String {
    values.iter().map(|&v| g6(v)).collect::<Vec<_>>().join(",")
}
