//! CSV results output with a JSON config sidecar.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::run::ResultsTable;

/// Writes the aggregate table as CSV (UTF-8, LF line endings, header row) and
/// a `.json` sidecar with the resolved config next to it. Metric values carry
/// 17 significant digits so parsing the file recovers the in-memory doubles
/// exactly. Refuses to write an empty table.
pub fn write_results(table: &ResultsTable, path: &Path) -> Result<()> {
    let csv = render_csv(table)?;
    std::fs::write(path, csv)?;
    let sidecar = path.with_extension("json");
    let mut json = serde_json::to_string_pretty(&table.config)?;
    json.push('\n');
    std::fs::write(sidecar, json)?;
    Ok(())
}

/// Renders the CSV body; exposed for byte-level determinism checks.
pub fn render_csv(table: &ResultsTable) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "experiment,{},metric_name,mean,stderr,num_trials,seed",
        table.x_column
    );
    for row in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            table.experiment,
            row.x,
            row.metric,
            full_precision(row.mean),
            full_precision(row.stderr),
            table.num_trials,
            table.seed
        );
    }
    Ok(out)
}

/// 17-significant-digit scientific notation; round-trips f64 exactly.
fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}
