//! Output formats: pretty JSON, CSV and a plain text table.

use clap::ValueEnum;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Text => "text",
        }
    }
}

/// A command result: the JSON document plus an optional natural table.
pub struct Payload {
    pub json: Value,
    pub table: Option<Table>,
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    fn aligned(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

/// Top-level fields as `key,value` rows; nested values as compact JSON.
fn key_value_table(json: &Value) -> Table {
    let mut t = Table::new(&["key", "value"]);
    if let Value::Object(map) = json {
        for (k, v) in map {
            t.push(vec![k.clone(), scalar(v)]);
        }
    }
    t
}

pub fn render(payload: &Payload, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&payload.json).expect("JSON values serialize");
            s.push('\n');
            s
        }
        Format::Csv => match &payload.table {
            Some(t) => t.csv(),
            None => key_value_table(&payload.json).csv(),
        },
        Format::Text => {
            let mut out = String::new();
            if let Value::Object(map) = &payload.json {
                let width = map.keys().map(|k| k.chars().count()).max().unwrap_or(0);
                for (k, v) in map {
                    if is_scalar(v) {
                        out.push_str(&format!("{k:<width$}  {}\n", scalar(v)));
                    } else if payload.table.is_none() {
                        out.push_str(&format!("{k:<width$}  {v}\n"));
                    }
                }
            }
            if let Some(t) = &payload.table {
                out.push('\n');
                out.push_str(&t.aligned());
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        let payload = Payload {
            json: serde_json::json!({"value": 2.0, "name": "a,b", "list": [1, 2]}),
            table: None,
        };
        assert_eq!(
            render(&payload, Format::Csv),
            "key,value\nlist,\"[1,2]\"\nname,\"a,b\"\nvalue,2.0\n"
        );
        let text = render(&payload, Format::Text);
        assert!(text.contains("value  2.0"));
        assert!(render(&payload, Format::Json).ends_with("}\n"));
    }

    #[test]
    fn tables_align_in_text() {
        let mut t = Table::new(&["k", "value"]);
        t.push(vec!["10".into(), "0.5".into()]);
        let payload = Payload {
            json: serde_json::json!({"p": 2.0}),
            table: Some(t),
        };
        assert_eq!(render(&payload, Format::Csv), "k,value\n10,0.5\n");
        assert!(render(&payload, Format::Text).ends_with("k   value\n10  0.5\n"));
    }
}
