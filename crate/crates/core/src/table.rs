//! Small tabular output layer shared by every report writer.

use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{Map, Value};

/// Renders a real with 10 significant digits, shortest form. Magnitudes
/// outside `[1e-6, 1e15)` use exponent notation.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.9e}").parse().expect("formatted float parses");
    let m = rounded.abs();
    if (1e-6..1e15).contains(&m) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    /// Rounded to 10 significant digits.
    Num(f64),
    /// Shortest representation that parses back to the same value.
    Exact(f64),
    Int(i64),
    Flag(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) => fmt_sig(*x),
            Cell::Exact(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Flag(b) => u8::from(*b).to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Num(x) => {
                let rounded: f64 = fmt_sig(*x).parse().unwrap_or(f64::NAN);
                serde_json::Number::from_f64(rounded).map(Value::Number).unwrap_or(Value::Null)
            }
            Cell::Exact(x) => serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
            Cell::Int(i) => Value::from(*i),
            Cell::Flag(b) => Value::from(u8::from(*b)),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Flag(b)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map(Into::into).unwrap_or(Cell::Empty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(format!("unsupported table format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<I, S>(columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Csv => self.to_csv(),
            TableFormat::Json => self.to_json(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        wtr.write_record(&self.columns).expect("write to memory");
        for row in &self.rows {
            wtr.write_record(row.iter().map(Cell::render)).expect("write to memory");
        }
        String::from_utf8(wtr.into_inner().expect("flush to memory")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (c, cell) in self.columns.iter().zip(row) {
                    obj.insert(c.clone(), cell.to_json());
                }
                Value::Object(obj)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&Value::Array(rows)).expect("json");
        let _ = writeln!(s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(fmt_sig(162.5), "162.5");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_sig(11.0 / 3.0), "3.666666667");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(123456789012.0), "123456789000");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(1.778246453e-81), "1.778246453e-81");
        assert_eq!(fmt_sig(2.5e-7), "2.5e-7");
        assert_eq!(fmt_sig(0.00001679156808), "0.00001679156808");
        assert_eq!(fmt_sig(-3e20), "-3e20");
    }

    #[test]
    fn csv_and_json_rendering() {
        let mut t = Table::new(["a", "b", "c"]);
        t.push(vec!["x,y".into(), 0.5.into(), Cell::Empty]);
        t.push(vec!["z".into(), true.into(), 3u64.into()]);
        assert_eq!(t.to_csv(), "a,b,c\n\"x,y\",0.5,\nz,1,3\n");
        let v: Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v[0]["b"], Value::from(0.5));
        assert_eq!(v[0]["c"], Value::Null);
        assert_eq!(v[1]["c"], Value::from(3));
    }
}
