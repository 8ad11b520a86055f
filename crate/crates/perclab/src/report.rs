//! Report serialization helpers: CSV with RFC 4180 quoting and stable
//! headers.
//!
//! Output files begin with `#`-prefixed header lines (tool version, resolved
//! semantic configuration, seed) followed by one CSV header row and data
//! rows. Floats are serialized with 17 significant digits so files round-trip
//! bit-exactly; bodies are byte-identical for identical semantic inputs
//! regardless of worker count.

use std::io::Write;

use crate::error::Result;
use crate::stats::fmt_f64;

pub const TOOL_NAME: &str = "perclab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Quote a CSV field per RFC 4180 when it contains a comma, quote, or
/// newline. Measure specs like `poly:2,2` need this.
pub fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Join fields into one CSV record.
pub fn csv_row(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| csv_escape(f))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn csv_f64(x: f64) -> String {
    fmt_f64(x)
}

/// A report table: header comments (semantic config only — never thread
/// counts, paths, or timestamps), a column row, and records.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub config_lines: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            config_lines: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn set_config(&mut self, key: &str, value: impl ToString) {
        self.config_lines.push((key.to_string(), value.to_string()));
    }

    pub fn push_row(&mut self, fields: Vec<String>) {
        debug_assert_eq!(fields.len(), self.columns.len());
        self.rows.push(fields);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {TOOL_NAME} {TOOL_VERSION}\n"));
        for (k, v) in &self.config_lines {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str(&csv_row(&self.columns));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&csv_row(row));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.render().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_covers_commas_quotes_newlines() {
        assert_eq!(csv_escape("plain"), "plain");
        assert_eq!(csv_escape("poly:2,2"), "\"poly:2,2\"");
        assert_eq!(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
        assert_eq!(csv_escape("a\nb"), "\"a\nb\"");
    }

    #[test]
    fn table_render_shape() {
        let mut t = Table::new(&["group", "value"]);
        t.set_config("seed", 7);
        t.set_config("measure", "poly:2,2");
        t.push_row(vec!["zd:2".into(), csv_f64(0.5)]);
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# perclab "));
        assert_eq!(lines[1], "# seed = 7");
        assert_eq!(lines[2], "# measure = poly:2,2");
        assert_eq!(lines[3], "group,value");
        assert_eq!(lines[4], "zd:2,5.0000000000000000e-1");
    }
}
