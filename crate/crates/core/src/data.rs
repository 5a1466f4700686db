//! Domain records and CSV ingestion for tracts, demographics, district
//! overlaps and funding projects.
//!
//! Missing cells are kept as `None` all the way through; nothing downstream
//! ever sees a NaN standing in for "not observed".

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::IndicatorSchema;

/// Opaque tract key. FIPS codes carry leading zeros, so this is never
/// parsed as a number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TractId(pub String);

impl TractId {
    pub fn new(id: impl Into<String>) -> Self {
        TractId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TractId {
    fn from(s: &str) -> Self {
        TractId(s.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    /// Share of the tract population in each race group. Groups may
    /// overlap, so the shares need not sum to one.
    pub race_shares: BTreeMap<String, f64>,
    pub poverty_share: Option<f64>,
    pub foreign_born_share: Option<f64>,
    pub party: Option<String>,
}

/// How much of a tract falls inside one district.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistrictOverlap {
    pub population: Option<f64>,
    pub blocks: Option<u32>,
    /// Square meters.
    pub area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractRecord {
    pub tract_id: TractId,
    pub population: f64,
    pub values: BTreeMap<String, Option<f64>>,
    #[serde(default)]
    pub demographics: Demographics,
    #[serde(default)]
    pub district_id: Option<String>,
    #[serde(default)]
    pub district_overlaps: BTreeMap<String, DistrictOverlap>,
}

impl TractRecord {
    pub fn new(tract_id: impl Into<String>, population: f64) -> Self {
        TractRecord {
            tract_id: TractId::new(tract_id),
            population,
            values: BTreeMap::new(),
            demographics: Demographics::default(),
            district_id: None,
            district_overlaps: BTreeMap::new(),
        }
    }

    pub fn with_value(mut self, variable: &str, value: Option<f64>) -> Self {
        self.values.insert(variable.to_string(), value);
        self
    }

    pub fn value(&self, variable: &str) -> Option<f64> {
        self.values.get(variable).copied().flatten()
    }
}

/// One row of the funding ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundingProject {
    pub project_id: String,
    pub year: i32,
    /// Dollars. Raw input may be negative; repair removes such rows.
    pub total: f64,
    pub earmark_dac: f64,
    pub earmark_low_income: f64,
    pub earmark_buffer: f64,
    pub district_id: Option<String>,
    pub tract_id: Option<TractId>,
    pub category_label: Option<String>,
}

impl FundingProject {
    pub fn earmark_sum(&self) -> f64 {
        self.earmark_dac + self.earmark_low_income + self.earmark_buffer
    }
}

/// Summary produced alongside every ingestion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    /// Count of NA cells per column.
    pub missing: BTreeMap<String, usize>,
    /// Schema variables with no column in the file; read as all-missing.
    pub absent_columns: Vec<String>,
    /// Rows per funding year (projects only).
    pub per_year: BTreeMap<i32, usize>,
}

#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub report: IngestReport,
}

/// True for the accepted NA spellings: empty, `NA`, `NaN` (any case).
pub fn is_na(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

struct Cursor<'a> {
    path: &'a Path,
    row: usize,
}

impl Cursor<'_> {
    fn number(&self, column: &str, cell: &str) -> Result<Option<f64>> {
        if is_na(cell) {
            return Ok(None);
        }
        cell.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Some)
            .ok_or_else(|| Error::Parse {
                path: self.path.to_path_buf(),
                row: self.row,
                column: column.to_string(),
                value: cell.to_string(),
            })
    }

    fn required(&self, column: &str, cell: &str) -> Result<f64> {
        self.number(column, cell)?.ok_or_else(|| Error::Ingest {
            path: self.path.to_path_buf(),
            row: self.row,
            message: format!("column `{column}` is required but empty"),
        })
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Ingest {
            path: self.path.to_path_buf(),
            row: self.row,
            message: message.into(),
        }
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::Headers)
        .flexible(false)
        .from_path(path)?)
}

fn text(cell: &str) -> Option<String> {
    if is_na(cell) {
        None
    } else {
        Some(cell.trim().to_string())
    }
}

fn column_index(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
        path: path.to_path_buf(),
        column: name.to_string(),
    })
}

/// Reads a tract table: `tract_id`, `population`, optional `district_id`,
/// then one column per schema variable.
pub fn ingest_tracts(path: &Path, schema: &IndicatorSchema) -> Result<Ingested<TractRecord>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let id_col = column_index(&headers, path, "tract_id")?;
    let pop_col = column_index(&headers, path, "population")?;
    let district_col = headers.iter().position(|h| h == "district_id");

    let mut var_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i == id_col || i == pop_col || Some(i) == district_col {
            continue;
        }
        if schema.variable(h).is_none() {
            return Err(Error::UnknownColumn {
                path: path.to_path_buf(),
                column: h.to_string(),
            });
        }
        var_cols.push((i, h.to_string()));
    }
    let present: BTreeSet<&str> = var_cols.iter().map(|(_, h)| h.as_str()).collect();
    let absent: Vec<String> = schema
        .variable_ids()
        .filter(|v| !present.contains(v))
        .map(str::to_string)
        .collect();
    if !absent.is_empty() {
        log::warn!("{}: no column for {}", path.display(), absent.join(", "));
    }

    let mut report = IngestReport {
        absent_columns: absent.clone(),
        ..IngestReport::default()
    };
    for (_, h) in &var_cols {
        report.missing.insert(h.clone(), 0);
    }
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let cursor = Cursor {
            path,
            row: row.position().map_or(0, |p| p.line() as usize),
        };
        let id = row[id_col].trim().to_string();
        if id.is_empty() {
            return Err(cursor.fail("empty tract_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(cursor.fail(format!("duplicate tract_id `{id}`")));
        }
        let population = cursor.required("population", &row[pop_col])?;
        if population < 0.0 {
            return Err(cursor.fail(format!("negative population {population}")));
        }
        let mut rec = TractRecord::new(id, population);
        rec.district_id = district_col.and_then(|c| text(&row[c]));
        for (i, h) in &var_cols {
            let v = cursor.number(h, &row[*i])?;
            if v.is_none() {
                *report.missing.get_mut(h).expect("column registered") += 1;
            }
            rec.values.insert(h.clone(), v);
        }
        for a in &absent {
            rec.values.insert(a.clone(), None);
        }
        records.push(rec);
    }
    report.rows = records.len();
    Ok(Ingested { records, report })
}

/// Writes tracts in the format read by [`ingest_tracts`]. Missing values
/// are written as `NA`.
pub fn write_tracts(path: &Path, records: &[TractRecord], schema: &IndicatorSchema) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let vars: Vec<&str> = schema.variable_ids().collect();
    let with_district = records.iter().any(|r| r.district_id.is_some());
    let mut header = vec!["tract_id", "population"];
    if with_district {
        header.push("district_id");
    }
    header.extend(&vars);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.tract_id.0.clone(), r.population.to_string()];
        if with_district {
            row.push(r.district_id.clone().unwrap_or_else(|| "NA".into()));
        }
        for v in &vars {
            row.push(fmt_opt(r.value(v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Reads demographics keyed by tract: `tract_id`, `poverty_share`,
/// `foreign_born_share`, `party`, and any number of `race_<label>` columns.
pub fn ingest_demographics(path: &Path) -> Result<BTreeMap<TractId, Demographics>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let id_col = column_index(&headers, path, "tract_id")?;
    for h in headers.iter() {
        let known = matches!(h, "tract_id" | "poverty_share" | "foreign_born_share" | "party")
            || h.strip_prefix("race_").is_some_and(|l| !l.is_empty());
        if !known {
            return Err(Error::UnknownColumn {
                path: path.to_path_buf(),
                column: h.to_string(),
            });
        }
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let cursor = Cursor {
            path,
            row: row.position().map_or(0, |p| p.line() as usize),
        };
        let id = TractId::new(row[id_col].trim());
        let mut d = Demographics::default();
        for (i, h) in headers.iter().enumerate() {
            let cell = &row[i];
            match h {
                "tract_id" => {}
                "party" => d.party = text(cell),
                "poverty_share" => d.poverty_share = share(&cursor, h, cell)?,
                "foreign_born_share" => d.foreign_born_share = share(&cursor, h, cell)?,
                _ => {
                    if let Some(v) = share(&cursor, h, cell)? {
                        d.race_shares.insert(h["race_".len()..].to_string(), v);
                    }
                }
            }
        }
        if out.insert(id.clone(), d).is_some() {
            return Err(cursor.fail(format!("duplicate tract_id `{id}`")));
        }
    }
    Ok(out)
}

fn share(cursor: &Cursor<'_>, column: &str, cell: &str) -> Result<Option<f64>> {
    let v = cursor.number(column, cell)?;
    if let Some(x) = v {
        if !(0.0..=1.0).contains(&x) {
            return Err(cursor.fail(format!("`{column}` value {x} outside [0, 1]")));
        }
    }
    Ok(v)
}

pub fn write_demographics(path: &Path, records: &[TractRecord]) -> Result<()> {
    let races: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.demographics.race_shares.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "tract_id".to_string(),
        "poverty_share".into(),
        "foreign_born_share".into(),
        "party".into(),
    ];
    header.extend(races.iter().map(|r| format!("race_{r}")));
    w.write_record(&header)?;
    for r in records {
        let d = &r.demographics;
        let mut row = vec![
            r.tract_id.0.clone(),
            fmt_opt(d.poverty_share),
            fmt_opt(d.foreign_born_share),
            d.party.clone().unwrap_or_else(|| "NA".into()),
        ];
        row.extend(races.iter().map(|k| fmt_opt(d.race_shares.get(*k).copied())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Attaches demographics to tracts. Tracts without a demographic row keep
/// fully-missing demographics; the number of such tracts is returned.
pub fn join_demographics(records: &mut [TractRecord], demographics: &BTreeMap<TractId, Demographics>) -> usize {
    let mut unmatched = 0;
    for r in records.iter_mut() {
        match demographics.get(&r.tract_id) {
            Some(d) => r.demographics = d.clone(),
            None => {
                r.demographics = Demographics::default();
                unmatched += 1;
            }
        }
    }
    if unmatched > 0 {
        log::warn!("{unmatched} tracts have no demographic row");
    }
    unmatched
}

/// Reads `tract_id, district_id, population, blocks, area` rows, one per
/// tract-district overlap.
pub fn ingest_district_overlaps(path: &Path) -> Result<BTreeMap<TractId, BTreeMap<String, DistrictOverlap>>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let id_col = column_index(&headers, path, "tract_id")?;
    let d_col = column_index(&headers, path, "district_id")?;
    let pop_col = headers.iter().position(|h| h == "population");
    let blocks_col = headers.iter().position(|h| h == "blocks");
    let area_col = headers.iter().position(|h| h == "area");
    let mut out: BTreeMap<TractId, BTreeMap<String, DistrictOverlap>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let cursor = Cursor {
            path,
            row: row.position().map_or(0, |p| p.line() as usize),
        };
        let district = text(&row[d_col]).ok_or_else(|| cursor.fail("empty district_id"))?;
        let blocks = match blocks_col {
            Some(c) => cursor.number("blocks", &row[c])?.map(|b| b as u32),
            None => None,
        };
        let overlap = DistrictOverlap {
            population: pop_col.map(|c| cursor.number("population", &row[c])).transpose()?.flatten(),
            blocks,
            area: area_col.map(|c| cursor.number("area", &row[c])).transpose()?.flatten(),
        };
        out.entry(TractId::new(row[id_col].trim()))
            .or_default()
            .insert(district, overlap);
    }
    Ok(out)
}

const PROJECT_COLUMNS: [&str; 9] = [
    "project_id",
    "year",
    "total",
    "earmark_dac",
    "earmark_low_income",
    "earmark_buffer",
    "district_id",
    "tract_id",
    "category",
];

/// Reads funding projects verbatim; repair happens later in the ledger.
///
/// `project_id`, `year` and `total` are required columns; earmark columns
/// default to zero when absent. Other columns are ignored.
pub fn ingest_projects(path: &Path) -> Result<Ingested<FundingProject>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let id_col = column_index(&headers, path, "project_id")?;
    let year_col = column_index(&headers, path, "year")?;
    let total_col = column_index(&headers, path, "total")?;
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (dac, low, buf) = (col("earmark_dac"), col("earmark_low_income"), col("earmark_buffer"));
    let (district, tract, category) = (col("district_id"), col("tract_id"), col("category"));

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let cursor = Cursor {
            path,
            row: row.position().map_or(0, |p| p.line() as usize),
        };
        let year = cursor.required("year", &row[year_col])?;
        if year.fract() != 0.0 {
            return Err(cursor.fail(format!("year {year} is not an integer")));
        }
        let earmark = |c: Option<usize>, name: &str| -> Result<f64> {
            Ok(match c {
                Some(c) => cursor.number(name, &row[c])?.unwrap_or(0.0),
                None => 0.0,
            })
        };
        let p = FundingProject {
            project_id: row[id_col].trim().to_string(),
            year: year as i32,
            total: cursor.required("total", &row[total_col])?,
            earmark_dac: earmark(dac, "earmark_dac")?,
            earmark_low_income: earmark(low, "earmark_low_income")?,
            earmark_buffer: earmark(buf, "earmark_buffer")?,
            district_id: district.and_then(|c| text(&row[c])),
            tract_id: tract.and_then(|c| text(&row[c])).map(TractId),
            category_label: category.and_then(|c| text(&row[c])),
        };
        *report.per_year.entry(p.year).or_default() += 1;
        records.push(p);
    }
    report.rows = records.len();
    Ok(Ingested { records, report })
}

pub fn write_projects(path: &Path, projects: &[FundingProject]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PROJECT_COLUMNS)?;
    for p in projects {
        w.write_record([
            p.project_id.clone(),
            p.year.to_string(),
            p.total.to_string(),
            p.earmark_dac.to_string(),
            p.earmark_low_income.to_string(),
            p.earmark_buffer.to_string(),
            p.district_id.clone().unwrap_or_default(),
            p.tract_id.as_ref().map(|t| t.0.clone()).unwrap_or_default(),
            p.category_label.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn small_schema() -> IndicatorSchema {
        let mut s = IndicatorSchema::synthetic(0);
        for (id, sub) in [("ozone", "exposures"), ("asthma", "sensitive_populations")] {
            s.variables.push(crate::schema::VariableDef {
                id: id.into(),
                subcategory: sub.into(),
                weight: 1.0,
                extended_weight: None,
                membership: Default::default(),
            });
        }
        s
    }

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_full_rows() {
        let f = file("tract_id,population,ozone,asthma\n06001,10,1,2\n06002,20,3,4\n06003,30,5,6\n");
        let t = ingest_tracts(f.path(), &small_schema()).unwrap();
        assert_eq!(t.records.len(), 3);
        assert!(t.report.missing.values().all(|&m| m == 0));
        assert_eq!(t.records[0].tract_id.as_str(), "06001");
    }

    #[test]
    fn empty_cell_is_missing_not_zero() {
        let f = file("tract_id,population,ozone,asthma\n1,10,0,\n2,20,1,na\n3,5,NaN,3\n");
        let t = ingest_tracts(f.path(), &small_schema()).unwrap();
        assert_eq!(t.records[0].values["asthma"], None);
        assert_eq!(t.records[0].values["ozone"], Some(0.0));
        assert_eq!(t.report.missing["asthma"], 2);
        assert_eq!(t.report.missing["ozone"], 1);
    }

    #[test]
    fn unknown_column_named() {
        let f = file("tract_id,population,ozone,bogus\n1,10,1,2\n");
        let err = ingest_tracts(f.path(), &small_schema()).unwrap_err();
        assert!(matches!(err, Error::UnknownColumn { ref column, .. } if column == "bogus"));
    }

    #[test]
    fn duplicate_tract_rejected() {
        let f = file("tract_id,population,ozone\n1,10,1\n1,20,2\n");
        let err = ingest_tracts(f.path(), &small_schema()).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn bad_number_reports_coordinates() {
        let f = file("tract_id,population,ozone\n1,10,1\n2,20,abc\n");
        match ingest_tracts(f.path(), &small_schema()).unwrap_err() {
            Error::Parse { row, column, value, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "ozone");
                assert_eq!(value, "abc");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn absent_schema_column_reads_as_missing() {
        let f = file("tract_id,population,ozone\n1,10,1\n");
        let t = ingest_tracts(f.path(), &small_schema()).unwrap();
        assert_eq!(t.report.absent_columns, vec!["asthma".to_string()]);
        assert_eq!(t.records[0].values["asthma"], None);
    }

    #[test]
    fn projects_header_only() {
        let f = file("project_id,year,total,earmark_dac\n");
        let p = ingest_projects(f.path()).unwrap();
        assert!(p.records.is_empty());
    }

    #[test]
    fn projects_keep_negative_totals() {
        let f = file("project_id,year,total,earmark_dac,tract_id\na,2018,-5,0,06001\nb,2019,100,60,\n");
        let p = ingest_projects(f.path()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0].total, -5.0);
        assert_eq!(p.records[0].tract_id, Some(TractId::new("06001")));
        assert_eq!(p.records[1].tract_id, None);
        assert_eq!(p.report.per_year[&2018], 1);
    }

    #[test]
    fn projects_require_total() {
        let f = file("project_id,year\na,2018\n");
        assert!(matches!(ingest_projects(f.path()), Err(Error::MissingColumn { .. })));
    }

    #[test]
    fn demographics_join_leaves_unmatched_missing() {
        let f = file("tract_id,poverty_share,party,race_black\n1,0.2,D,0.5\n");
        let d = ingest_demographics(f.path()).unwrap();
        let mut recs = vec![TractRecord::new("1", 1.0), TractRecord::new("2", 1.0)];
        assert_eq!(join_demographics(&mut recs, &d), 1);
        assert_eq!(recs[0].demographics.race_shares["black"], 0.5);
        assert_eq!(recs[1].demographics, Demographics::default());
    }

    #[test]
    fn demographic_share_bounds() {
        let f = file("tract_id,poverty_share\n1,1.5\n");
        assert!(ingest_demographics(f.path()).is_err());
    }
}
