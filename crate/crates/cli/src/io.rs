use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

/// `name` in the directory of `path`.
pub fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.join(name),
        _ => PathBuf::from(name),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Pretty JSON with keys sorted (via `Value`'s ordered map).
pub fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let value = serde_json::to_value(v)?;
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    write_bytes(path, to_json(v)?.as_bytes())
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Nine significant digits, `%.9g` style.
pub fn g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mant))
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_bytes(path, &bytes)
}

/// Parses a numeric CSV, skipping a first row that does not parse.
pub fn parse_numeric_csv<T: std::str::FromStr>(text: &str, what: &str) -> anyhow::Result<Vec<Vec<T>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {what}"))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<T>, _> = rec.iter().map(str::parse).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if n == 0 => continue,
            Err(_) => anyhow::bail!("{what}: row {} is not numeric", n + 1),
        }
    }
    Ok(rows)
}

pub fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// `lo:hi`.
pub fn parse_domain(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad lower bound '{a}'"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad upper bound '{b}'"))?;
    if !(lo < hi) {
        return Err(format!("empty domain {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(g9(0.0), "0");
        assert_eq!(g9(-0.0), "0");
        assert_eq!(g9(1.0), "1");
        assert_eq!(g9(0.03125), "0.03125");
        assert_eq!(g9(1.0 / 3.0), "0.333333333");
        assert_eq!(g9(11.512915464920228), "11.5129155");
        assert_eq!(g9(9.9999999996), "10");
        assert_eq!(g9(123456789.4), "123456789");
        assert_eq!(g9(1.5e9), "1.5e9");
        assert_eq!(g9(-2.5e-7), "-2.5e-7");
        assert_eq!(g9(0.0001), "0.0001");
    }

    #[test]
    fn numeric_csv_skips_header() {
        let rows: Vec<Vec<i32>> = parse_numeric_csv("code_in\n1\n-2\n\n", "t").unwrap();
        assert_eq!(rows, vec![vec![1], vec![-2]]);
        assert!(parse_numeric_csv::<i32>("1\nx\n", "t").is_err());
        assert!(parse_numeric_csv::<i32>("", "t").unwrap().is_empty());
    }

    #[test]
    fn domains() {
        assert_eq!(parse_domain("-20:0"), Ok((-20.0, 0.0)));
        assert!(parse_domain("3:1").is_err());
        assert!(parse_domain("3").is_err());
    }
}
