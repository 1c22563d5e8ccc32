use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Column-oriented CSV: one header row, one row per sample.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(f64::to_string).collect());
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Files produced by one subcommand, held in memory until the run finishes.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn csv(&mut self, name: &str, table: &Table) {
        self.files.push((format!("{name}.csv"), table.to_csv()));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_vec_pretty(value).expect("summary serializes");
        text.push(b'\n');
        self.files.push((format!("{name}.json"), text));
    }

    pub fn text(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body.into_bytes()));
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes every file under `dir`, each through a temporary file and a rename.
    pub fn write_all(&self, dir: &Path, manifest: &Value) -> Result<(), CliError> {
        let fail = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Write { path, source }
        };
        fs::create_dir_all(dir).map_err(fail(dir))?;
        let mut manifest_bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        manifest_bytes.push(b'\n');
        let all = self.files.iter().map(|(n, b)| (n.as_str(), b.as_slice())).chain([("manifest.json", &manifest_bytes[..])]);
        for (name, bytes) in all {
            let target = dir.join(name);
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, bytes).map_err(fail(&tmp))?;
            fs::rename(&tmp, &target).map_err(fail(&target))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["f", "v"]);
        t.push(&[1e9, 0.5]);
        t.push(&[2.5e9, -1.0]);
        assert_eq!(String::from_utf8(t.to_csv()).unwrap(), "f,v\n1000000000,0.5\n2500000000,-1\n");
    }
}
