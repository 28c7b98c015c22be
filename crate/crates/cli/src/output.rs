//! Number formatting and file writers. All text is built in memory so a file
//! is either written whole or not at all.

use std::fs;
use std::path::{Path, PathBuf};

use otoc_core::spinchain::Temperature;

use crate::error::{CliError, CliResult};

const SIGNIFICANT: i32 = 12;

/// `%.12g`: twelve significant digits, trailing zeros dropped, exponent form
/// outside `1e-5 ..= 1e12`.
pub fn fmt_num(x: f64) -> CliResult<String> {
    if !x.is_finite() {
        return Err(CliError::Numerical(format!("refusing to write non-finite value {x}")));
    }
    if x == 0.0 {
        return Ok("0".into());
    }
    let sci = format!("{:.*e}", (SIGNIFICANT - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT).contains(&exp) {
        let decimals = (SIGNIFICANT - 1 - exp).max(0) as usize;
        Ok(trim_zeros(&format!("{x:.decimals$}")))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        Ok(format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs()))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Empty cell for a missing value.
pub fn fmt_opt(x: Option<f64>) -> CliResult<String> {
    x.map(fmt_num).transpose().map(Option::unwrap_or_default)
}

/// `T/(1+T)`, mapping `[0, ∞]` onto `[0, 1]` so infinite temperature fits on a plot axis.
pub fn compact_temperature(t: Temperature) -> f64 {
    match t {
        Temperature::Zero => 0.0,
        Temperature::Finite(t) => t / (1.0 + t),
        Temperature::Infinite => 1.0,
    }
}

/// Comma-separated table with a header row.
#[derive(Debug)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Two-column plot data with `#` comment lines.
pub fn render_dat(comments: &[String], points: &[(f64, f64)]) -> CliResult<String> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for &(x, y) in points {
        out.push_str(&format!("{} {}\n", fmt_num(x)?, fmt_num(y)?));
    }
    Ok(out)
}

/// Collects files under one output directory and remembers their names.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}
