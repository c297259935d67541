//! Deterministic CSV and JSON writers.

use crate::{CliError, OutputArgs};
use serde_json::Value;

/// 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

pub enum Cell {
    Int(usize),
    Num(f64),
    Text(String),
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header).expect("writes to memory");
        Table { writer }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        let record = cells.into_iter().map(|c| match c {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => num(x),
            Cell::Text(s) => s,
            Cell::Empty => String::new(),
        });
        self.writer.write_record(record).expect("writes to memory");
    }

    pub fn into_string(self) -> String {
        let bytes = self.writer.into_inner().expect("writes to memory");
        String::from_utf8(bytes).expect("cells are UTF-8")
    }
}

pub fn json_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("values built from plain data") + "\n"
}

pub fn write(out: &OutputArgs, text: &str) -> Result<(), CliError> {
    match &out.output {
        Some(path) => std::fs::write(path, text)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()) {
                // the reader went away, e.g. `| head`
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

/// CSV or JSON depending on `--emit`.
pub fn emit(out: &OutputArgs, table: Table, json: impl FnOnce() -> Value) -> Result<(), CliError> {
    match out.emit {
        crate::Emit::Csv => write(out, &table.into_string()),
        crate::Emit::Json => write(out, &json_text(&json())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [1.0 / 3.0, 702.5e9, -1e-300, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s
                .split('e')
                .next()
                .unwrap()
                .chars()
                .filter(char::is_ascii_digit)
                .count();
            assert_eq!(digits, 17, "{s}");
        }
    }

    #[test]
    fn rows_end_with_newline() {
        let mut t = Table::new(&["a", "b"]);
        t.row(vec![1usize.into(), 0.5.into()]);
        t.row(vec![2usize.into(), Cell::Empty]);
        assert_eq!(t.into_string(), "a,b\n1,5.0000000000000000e-1\n2,\n");
    }
}
