//! CSV and SVG files in the output directory.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Bumped whenever a column is added, removed or renamed.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    /// Opens `file` with a `# lyakrylov <schema> v<N>` comment line followed by `header`.
    pub fn csv(&self, file: &str, schema: &str, header: &[&str]) -> Result<CsvFile> {
        let path = self.path(file);
        let mut f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        writeln!(f, "# lyakrylov {schema} v{CSV_SCHEMA_VERSION}").with_context(|| format!("cannot write {}", path.display()))?;
        let mut writer = csv::Writer::from_writer(f);
        writer.write_record(header).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(CsvFile { writer, path })
    }

    pub fn write_text(&self, file: &str, text: &str) -> Result<()> {
        let path = self.path(file);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

pub struct CsvFile {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl CsvFile {
    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).with_context(|| format!("cannot write {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().with_context(|| format!("cannot write {}", self.path.display()))
    }
}

/// Shortest round-trip scientific form; `inf`, `-inf` and `nan` spelled out.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:e}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -2.5e-300, 1.0 / 3.0, 6.02e23] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn csv_starts_with_versioned_comment() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(&dir.path().join("nested")).unwrap();
        let mut f = out.csv("t.csv", "test", &["a", "b"]).unwrap();
        f.row(["1", "x,y"]).unwrap();
        f.finish().unwrap();
        let text = fs::read_to_string(out.path("t.csv")).unwrap();
        assert_eq!(text, "# lyakrylov test v1\na,b\n1,\"x,y\"\n");
    }
}
