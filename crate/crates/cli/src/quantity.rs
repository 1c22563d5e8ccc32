//! Numbers with optional SI prefix and unit, e.g. `2.67pF`, `4mm`, `2.4GHz`.

use serde::de::{self, Deserializer, Visitor};

const UNITS: [&str; 8] = ["Hz", "ohm", "Ω", "F", "H", "V", "s", "m"];

fn prefix(c: char) -> Option<i32> {
    Some(match c {
        'f' => -15,
        'p' => -12,
        'n' => -9,
        'u' | 'µ' => -6,
        'm' => -3,
        'k' => 3,
        'M' => 6,
        'G' => 9,
        'T' => 12,
        _ => return None,
    })
}

/// Applies a power of ten in decimal, so `2.67` with `-12` gives exactly `2.67e-12`.
fn scaled(number: &str, exp: i32) -> Result<f64, String> {
    let (mantissa, e) = match number.find(['e', 'E']) {
        Some(i) => (&number[..i], number[i + 1..].parse::<i32>().map_err(|_| format!("`{number}` is not a number"))?),
        None => (number, 0),
    };
    format!("{mantissa}e{}", e + exp).parse().map_err(|_| format!("`{number}` is not a number"))
}

/// Parses a quantity into SI base units.
///
/// A lone unit letter counts as a unit, so `1m` is one metre and `1mm` is a millimetre.
pub fn parse(text: &str) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            let rest = &text[i..];
            !(c.is_ascii_digit() || c == '.' || c == '+' || c == '-')
                && !((c == 'e' || c == 'E') && rest[1..].starts_with(|d: char| d.is_ascii_digit() || d == '-' || d == '+'))
        })
        .map_or(text.len(), |(i, _)| i);
    let (number, suffix) = text.split_at(split);
    let suffix = suffix.trim();
    if suffix.is_empty() || UNITS.contains(&suffix) {
        return scaled(number, 0);
    }
    let mut chars = suffix.chars();
    let exp = chars.next().and_then(prefix).ok_or_else(|| format!("unknown suffix `{suffix}` in `{text}`"))?;
    let unit = chars.as_str();
    if unit.is_empty() || UNITS.contains(&unit) {
        scaled(number, exp)
    } else {
        Err(format!("unknown unit `{unit}` in `{text}`"))
    }
}

struct QuantityVisitor;

impl Visitor<'_> for QuantityVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("a number or a string such as \"2.67pF\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        parse(v).map_err(E::custom)
    }
}

pub fn de<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    d.deserialize_any(QuantityVisitor)
}

pub fn de_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    de(d).map(Some)
}
