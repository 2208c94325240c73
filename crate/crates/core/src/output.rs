//! Numeric formatting for reports: nine significant digits.

pub const SIG_DIGITS: usize = 9;

/// Formats `x` with nine significant digits, fixed notation for moderate
/// magnitudes and scientific otherwise.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..(SIG_DIGITS as i32)).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        sci
    }
}

/// Rounds to nine significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every float inside a JSON value to nine significant digits.
pub fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                        *n = r;
                    }
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(std::f64::consts::LN_2), "0.693147181");
        assert_eq!(fmt_sig(2.0), "2");
        assert_eq!(fmt_sig(-1234.5), "-1234.5");
        assert_eq!(fmt_sig(1.0e-7), "1.00000000e-7");
        assert_eq!(fmt_sig(123456789012.0), "1.23456789e11");
        assert_eq!(round_sig(std::f64::consts::PI), 3.14159265);
    }

    #[test]
    fn rounds_json() {
        let mut v = serde_json::json!({"a": [std::f64::consts::E, 3], "b": {"c": 0.1234567891234}});
        round_json(&mut v);
        assert_eq!(v, serde_json::json!({"a": [2.71828183, 3], "b": {"c": 0.123456789}}));
    }
}
