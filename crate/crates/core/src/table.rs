use serde::{Deserialize, Serialize};

/// A header row plus already formatted cells, ready for CSV output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Cells of one column, in row order.
    pub fn values(&self, name: &str) -> Vec<&str> {
        match self.column(name) {
            Some(c) => self.rows.iter().map(|r| r[c].as_str()).collect(),
            None => Vec::new(),
        }
    }

    /// Keep only the named columns, in the given order.
    pub fn select(&self, keep: &[&str]) -> CsvTable {
        let idx: Vec<usize> = keep.iter().filter_map(|k| self.column(k)).collect();
        CsvTable {
            headers: idx.iter().map(|&i| self.headers[i].clone()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
        }
    }

    /// Prefix every row with constant key columns.
    pub fn with_keys(&self, keys: &[(&str, &str)]) -> CsvTable {
        let mut headers: Vec<String> = keys.iter().map(|(k, _)| k.to_string()).collect();
        headers.extend(self.headers.iter().cloned());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut row: Vec<String> = keys.iter().map(|(_, v)| v.to_string()).collect();
                row.extend(r.iter().cloned());
                row
            })
            .collect();
        CsvTable { headers, rows }
    }

    /// Append rows of tables sharing this header.
    pub fn concat<'a>(headers: &[String], parts: impl IntoIterator<Item = &'a CsvTable>) -> CsvTable {
        let mut out = CsvTable { headers: headers.to_vec(), rows: Vec::new() };
        for p in parts {
            debug_assert_eq!(p.headers, out.headers);
            out.rows.extend(p.rows.iter().cloned());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.headers).expect("write to memory");
        for r in &self.rows {
            w.write_record(r).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("cells are UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<CsvTable, csv::Error> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?;
        Ok(CsvTable { headers, rows })
    }
}
