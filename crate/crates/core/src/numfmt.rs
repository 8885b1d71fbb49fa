//! Fixed-precision float formatting shared by every text output.

/// Formats `v` like C's `%.17g`: 17 significant digits, trailing zeros
/// trimmed, exponent notation outside `1e-4 ≤ |v| < 1e17`. Always round-trips
/// to the same `f64`.
pub fn g17(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };

    if (-4..17).contains(&exp) {
        let body = if exp >= 0 {
            let split = exp as usize + 1;
            let (int, frac) = digits.split_at(split);
            let frac = frac.trim_end_matches('0');
            if frac.is_empty() {
                int.to_owned()
            } else {
                format!("{int}.{frac}")
            }
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            format!("0.{zeros}{}", digits.trim_end_matches('0'))
        };
        format!("{sign}{body}")
    } else {
        let (first, rest) = digits.split_at(1);
        let rest = rest.trim_end_matches('0');
        let esign = if exp < 0 { '-' } else { '+' };
        if rest.is_empty() {
            format!("{sign}{first}e{esign}{:02}", exp.abs())
        } else {
            format!("{sign}{first}.{rest}e{esign}{:02}", exp.abs())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::g17;

    #[test]
    fn matches_printf() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.10000000000000001"),
            (0.5, "0.5"),
            (-2.25, "-2.25"),
            (1e-5, "1.0000000000000001e-05"),
            (1.5e-7, "1.4999999999999999e-07"),
            (123456.0, "123456"),
            (1e17, "1e+17"),
            (0.2125, "0.21249999999999999"),
            (0.0, "0"),
        ];
        for (v, want) in cases {
            assert_eq!(g17(v), want, "{v}");
        }
    }

    #[test]
    fn round_trips() {
        for v in [std::f64::consts::PI, 1.0 / 3.0, 6.02214076e23, -1e-300, 0.999999999999] {
            assert_eq!(g17(v).parse::<f64>().unwrap(), v);
        }
    }
}
