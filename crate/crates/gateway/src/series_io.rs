//! Series input as a JSON array or a single-column CSV.

use anyhow::{bail, Context, Result};

/// Parses a JSON array of numbers or a single-column CSV with an optional
/// header row.
pub fn parse_series(text: &str) -> Result<Vec<f64>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).context("series must be a JSON array of numbers");
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 1 {
            bail!("line {}: expected one column, got {}", i + 1, record.len());
        }
        let cell = &record[0];
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => bail!("line {}: non-finite value {cell:?}", i + 1),
            Err(_) if i == 0 => continue,
            Err(_) => bail!("line {}: not a number: {cell:?}", i + 1),
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_csv() {
        assert_eq!(parse_series("[1, 2.5, -3]").unwrap(), [1.0, 2.5, -3.0]);
        assert_eq!(parse_series("value\n1\n2\n").unwrap(), [1.0, 2.0]);
        assert_eq!(parse_series("1\n2").unwrap(), [1.0, 2.0]);
        assert!(parse_series("a,b\n1,2\n").is_err());
        assert!(parse_series("v\n1\nx\n").is_err());
        assert!(parse_series("[1, \"x\"]").is_err());
    }
}
