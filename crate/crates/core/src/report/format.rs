use crate::error::{Error, Result};

/// Fixed-point rendering of `x` with `decimals` digits, rounding half away
/// from zero.
///
/// Rounding works on the shortest decimal string that round-trips to `x`,
/// so a value written as `86.125` rounds up even though its binary
/// approximation may sit a hair below the midpoint.
pub fn round_fixed(x: f64, decimals: usize) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::Config(format!("cannot format non-finite value {x}")));
    }
    let text = format!("{}", x.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let int_len = digits.len();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    digits.extend((0..decimals).map(|i| frac.get(i).copied().unwrap_or(0)));
    if frac.get(decimals).is_some_and(|&d| d >= 5) {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - decimals;
    debug_assert!(split >= int_len);
    let mut out = String::new();
    let nonzero = digits.iter().any(|&d| d != 0);
    if x.is_sign_negative() && nonzero {
        out.push('-');
    }
    out.extend(digits[..split].iter().map(|&d| (b'0' + d) as char));
    if decimals > 0 {
        out.push('.');
        out.extend(digits[split..].iter().map(|&d| (b'0' + d) as char));
    }
    Ok(out)
}

/// `mean±std`, both rounded to `decimals` places.
pub fn format_cell(mean: f64, std: f64, decimals: usize) -> Result<String> {
    if std < 0.0 || std.is_nan() {
        return Err(Error::Config(format!(
            "standard deviation must be non-negative, got {std}"
        )));
    }
    Ok(format!(
        "{}±{}",
        round_fixed(mean, decimals)?,
        round_fixed(std, decimals)?
    ))
}

/// Parses a `mean±std` cell back into its two numbers.
pub fn parse_cell(cell: &str) -> Option<(f64, f64)> {
    let (m, s) = cell.split_once('±')?;
    Some((m.trim().parse().ok()?, s.trim().parse().ok()?))
}

/// Clustering summary row: `without / with / Δdelta (arrow)`. The delta is shown
/// as a magnitude; the arrow carries the sign.
pub fn format_cluster_row(nmi_without: f64, nmi_with: f64) -> Result<String> {
    let a = round_fixed(nmi_without, 2)?;
    let b = round_fixed(nmi_with, 2)?;
    let delta = nmi_with - nmi_without;
    let arrow = if delta > 0.0 {
        "↑"
    } else if delta < 0.0 {
        "↓"
    } else {
        "="
    };
    // Difference of the shown values, so the row reads consistently.
    let shown: f64 = b.parse::<f64>().unwrap_or(0.0) - a.parse::<f64>().unwrap_or(0.0);
    Ok(format!(
        "{a} / {b} / Δ{} ({arrow})",
        round_fixed(shown.abs(), 2)?
    ))
}
