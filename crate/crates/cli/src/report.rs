//! Artifact writing. Every file goes to a temporary sibling first and is
//! renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::config::ResolvedOutput;

pub const VERSION: &str = concat!("pe-align ", env!("CARGO_PKG_VERSION"));

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// A table with a header row; cells are already formatted.
#[derive(Clone, Debug, PartialEq)]
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
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Plot-ready long format: one `x,y,series` record per point.
#[derive(Clone, Debug)]
pub struct PlotData {
    pub points: Vec<(String, String, String)>,
}

impl PlotData {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["x", "y", "series"]);
        for (x, y, s) in &self.points {
            t.push(vec![x.clone(), y.clone(), s.clone()]);
        }
        t
    }
}

/// Formats floats with round-trip precision so reruns compare byte for byte.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Output directory plus the selected formats.
pub struct Emitter {
    pub dir: PathBuf,
    pub formats: ResolvedOutput,
    pub written: Vec<PathBuf>,
}

impl Emitter {
    pub fn create(dir: &Path, formats: ResolvedOutput, resolved_toml: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut e = Self {
            dir: dir.to_path_buf(),
            formats,
            written: Vec::new(),
        };
        e.raw("config.toml", resolved_toml.as_bytes())?;
        e.raw("VERSION", format!("{VERSION}\n").as_bytes())?;
        Ok(e)
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(name);
        write_atomic(&p, bytes)?;
        self.written.push(p);
        Ok(())
    }

    /// Emits `<name>.csv` and, when requested, `<name>.plot.csv`.
    pub fn emit(&mut self, name: &str, table: &Table, plot: Option<PlotData>) -> Result<()> {
        if table.rows.is_empty() {
            bail!("refusing to write an empty report '{name}'");
        }
        if self.formats.csv {
            self.raw(&format!("{name}.csv"), &table.to_csv()?)?;
        }
        if self.formats.plotdata {
            if let Some(p) = plot {
                self.raw(&format!("{name}.plot.csv"), &p.to_table().to_csv()?)?;
            }
        }
        Ok(())
    }
}
