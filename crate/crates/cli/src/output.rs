//! Error classification, CSV formatting and report writing.

use std::fmt;
use std::io::Write;
use std::path::Path;

/// Exit status 1 for invalid input, 2 for I/O failures.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<qng_core::Error> for CliError {
    fn from(e: qng_core::Error) -> Self {
        match e {
            qng_core::Error::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

/// `x` with 12 significant digits, positional where that stays short.
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

/// A numeric CSV table.
pub struct Csv {
    header: String,
    rows: Vec<String>,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Csv { header: columns.join(","), rows: Vec::new() }
    }

    pub fn row(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| fmt_sig12(*v)).collect::<Vec<_>>().join(","));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.header.len() + 32 * self.rows.len());
        s.push_str(&self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

pub fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::io(e.to_string()))
        }
    }
}

pub fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    text.push('\n');
    write_or_print(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig12(1.0), "1");
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(0.1 + 0.2), "0.3");
        assert_eq!(fmt_sig12(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_sig12(-0.000123456789012345), "-0.000123456789012");
        assert_eq!(fmt_sig12(1.5e-9), "1.50000000000e-9");
        for x in [0.37559065160520114, 123456.789, -2.5e-7, 9.99999999999999e11] {
            let back: f64 = fmt_sig12(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-11 * x.abs());
        }
    }

    #[test]
    fn io_errors_map_to_exit_two() {
        let e: CliError = qng_core::Error::Io(std::io::Error::other("x")).into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = qng_core::Error::EmptyDataset.into();
        assert_eq!(e.exit_code(), 1);
    }
}
