use std::fmt::Write as _;
use std::io::{self, Write};

use clap::ValueEnum;
use skyquery::{ResultTable, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Xml,
}

pub fn write_table(out: &mut impl Write, table: &ResultTable, format: Format) -> io::Result<()> {
    match format {
        Format::Table => out.write_all(render_text(table).as_bytes()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Value::to_string))?;
            }
            w.flush()
        }
        Format::Xml => out.write_all(render_xml(table).as_bytes()),
    }
}

fn render_text(table: &ResultTable) -> String {
    let cells: Vec<Vec<String>> = table.rows.iter().map(|r| r.iter().map(Value::to_string).collect()).collect();
    let mut widths: Vec<usize> = table.columns.iter().map(|c| c.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, items: &[String]| {
        let parts: Vec<String> = items.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut s, &table.columns);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut s, &rule);
    for row in &cells {
        line(&mut s, row);
    }
    let _ = writeln!(s, "({} row{})", cells.len(), if cells.len() == 1 { "" } else { "s" });
    s
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn render_xml(table: &ResultTable) -> String {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(s, "<RESULT rows=\"{}\">", table.rows.len());
    for (i, c) in table.columns.iter().enumerate() {
        match table.rows.first().and_then(|r| r.get(i)) {
            Some(v) => {
                let _ = writeln!(s, "  <FIELD name=\"{}\" datatype=\"{}\"/>", escape(c), v.column_type());
            }
            None => {
                let _ = writeln!(s, "  <FIELD name=\"{}\"/>", escape(c));
            }
        }
    }
    for row in &table.rows {
        s.push_str("  <TR>");
        for v in row {
            let _ = write!(s, "<TD>{}</TD>", escape(&v.to_string()));
        }
        s.push_str("</TR>\n");
    }
    s.push_str("</RESULT>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        ResultTable {
            columns: vec!["O.object_id".into(), "O.type".into()],
            rows: vec![vec![Value::Int(1), Value::Str("A<B".into())], vec![Value::Int(22), Value::Str("x,y".into())]],
        }
    }

    fn render(f: Format) -> String {
        let mut buf = Vec::new();
        write_table(&mut buf, &sample(), f).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn text() {
        assert_eq!(render(Format::Table), "O.object_id  O.type\n-----------  ------\n1            A<B\n22           x,y\n(2 rows)\n");
    }

    #[test]
    fn csv_quotes() {
        assert_eq!(render(Format::Csv), "O.object_id,O.type\n1,A<B\n22,\"x,y\"\n");
    }

    #[test]
    fn xml_escapes() {
        let x = render(Format::Xml);
        assert!(x.contains("<FIELD name=\"O.object_id\" datatype=\"int\"/>"));
        assert!(x.contains("<TR><TD>1</TD><TD>A&lt;B</TD></TR>"));
    }
}
