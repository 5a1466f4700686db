//! Output directory handling and the small tables only the CLI reads.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ces_audit::data::TractId;
use ces_audit::engine::ScoreResult;
use ces_audit::schema::Category;
use ces_audit::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

/// Output directory plus the formats the user asked for.
pub struct Output {
    pub dir: PathBuf,
    formats: BTreeSet<Format>,
    written: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path, formats: &[Format]) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            formats: formats.iter().copied().collect(),
            written: Vec::new(),
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.wants(Format::Json) {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            self.text(name, &text)?;
        }
        Ok(())
    }

    /// Runs `write` against `dir/name` when CSV output is on.
    pub fn csv(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        if self.wants(Format::Csv) {
            write(&self.dir.join(name))?;
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn svg(&mut self, name: &str, render: impl FnOnce() -> String) -> Result<()> {
        if self.wants(Format::Svg) {
            self.text(name, &render())?;
        }
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((headers, rows))
}

fn column(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
        path: path.to_path_buf(),
        column: name.into(),
    })
}

fn number(path: &Path, row: usize, column: &str, cell: &str) -> Result<Option<f64>> {
    if ces_audit::data::is_na(cell) {
        return Ok(None);
    }
    cell.trim().parse().map(Some).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.into(),
        value: cell.into(),
    })
}

/// Reads `tract_id, total` funding totals, e.g. from `attribute`.
pub fn read_funding(path: &Path) -> Result<BTreeMap<TractId, f64>> {
    let (headers, rows) = read_rows(path)?;
    let (id, total) = (column(&headers, path, "tract_id")?, column(&headers, path, "total")?);
    let mut out = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        if let Some(v) = number(path, i + 2, "total", &row[total])? {
            out.insert(TractId::new(row[id].trim()), v);
        }
    }
    Ok(out)
}

/// Reads scored tracts: `tract_id`, `percentile`, the two category
/// columns and optionally `designated` (else percentile ≥ 75).
pub fn read_scores(path: &Path) -> Result<Vec<ScoreResult>> {
    let (headers, rows) = read_rows(path)?;
    let id = column(&headers, path, "tract_id")?;
    let pct = column(&headers, path, "percentile")?;
    let cats: Vec<(Category, usize)> = Category::ALL
        .iter()
        .map(|&c| Ok((c, column(&headers, path, c.as_str())?)))
        .collect::<Result<_>>()?;
    let flag = headers.iter().position(|h| h == "designated");
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let line = i + 2;
            let percentile = number(path, line, "percentile", &row[pct])?;
            let category_scores = cats
                .iter()
                .map(|&(c, j)| Ok((c, number(path, line, c.as_str(), &row[j])?)))
                .collect::<Result<_>>()?;
            let designated = match flag.map(|j| row[j].trim().to_ascii_lowercase()) {
                Some(f) => matches!(f.as_str(), "true" | "1" | "yes"),
                None => percentile.is_some_and(|p| p >= 75.0),
            };
            Ok(ScoreResult {
                tract_id: TractId::new(row[id].trim()),
                subcategory_scores: BTreeMap::new(),
                category_scores,
                raw_score: percentile,
                percentile,
                designated,
            })
        })
        .collect()
}

pub fn write_funding(path: &Path, funding: &BTreeMap<TractId, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tract_id", "total"])?;
    for (t, v) in funding {
        w.serialize((t.as_str(), v))?;
    }
    w.flush()?;
    Ok(())
}
