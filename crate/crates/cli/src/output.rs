use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Everything a command produces, with the resolved config echoed for provenance.
#[derive(Debug, Serialize)]
pub struct ResultDocument<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub results: serde_json::Value,
    /// Seconds spent computing; `null` when `record_wall_clock` is off.
    pub wall_clock_seconds: Option<f64>,
}

impl ResultDocument<'_> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents serialize");
        s.push('\n');
        s
    }
}

/// Writes `text` to `<out>/<name>`, creating the directory.
pub fn write_file(out: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let mut f = std::fs::File::create(out.join(name))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
