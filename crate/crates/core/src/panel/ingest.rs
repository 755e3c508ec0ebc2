//! CSV ingestion of daily county records under a declared schema.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{MtpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CasesKind {
    /// Running totals; differenced per county.
    Cumulative,
    /// New cases per record.
    #[default]
    Incident,
}

/// Column mapping and parsing rules for a panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    pub county_id: String,
    pub date: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    pub population: String,
    pub cases: String,
    #[serde(default)]
    pub cases_kind: CasesKind,
    /// Time-invariant county covariates.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Mobility index columns.
    pub indices: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Field values treated as missing (besides empty fields).
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
}

fn default_date_format() -> String {
    "%Y-%m-%d".into()
}

fn default_delimiter() -> char {
    ','
}

fn default_missing() -> Vec<String> {
    vec!["NA".into()]
}

impl PanelSchema {
    pub fn required_columns(&self) -> Vec<&str> {
        let mut cols = vec![
            self.county_id.as_str(),
            self.date.as_str(),
            self.population.as_str(),
            self.cases.as_str(),
        ];
        cols.extend(self.covariates.iter().map(String::as_str));
        cols.extend(self.indices.iter().map(String::as_str));
        cols
    }
}

/// One county-day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRecord {
    pub county: String,
    pub date: NaiveDate,
    pub population: f64,
    pub cases: f64,
    pub indices: Vec<Option<f64>>,
    pub covariates: Vec<Option<f64>>,
}

/// Validated long-format records sorted by `(county, date)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub index_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub cases_kind: CasesKind,
    pub records: Vec<DailyRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    /// `(line number, reason)`; line 1 is the header.
    pub rejected: Vec<(usize, String)>,
}

pub fn ingest(path: &Path, schema: &PanelSchema) -> Result<(PanelTable, IngestReport)> {
    let file = std::fs::File::open(path).map_err(|e| MtpError::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &PanelSchema) -> Result<(PanelTable, IngestReport)> {
    if !schema.delimiter.is_ascii() {
        return Err(MtpError::Schema(format!(
            "delimiter {:?} must be ASCII",
            schema.delimiter
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let missing_cols: Vec<&str> = schema
        .required_columns()
        .into_iter()
        .filter(|c| !position.contains_key(c))
        .collect();
    if !missing_cols.is_empty() {
        return Err(MtpError::Schema(format!(
            "missing required column(s): {}",
            missing_cols.join(", ")
        )));
    }
    let col = |name: &str| position[name];
    let (c_county, c_date, c_pop, c_cases) = (
        col(&schema.county_id),
        col(&schema.date),
        col(&schema.population),
        col(&schema.cases),
    );
    let c_idx: Vec<usize> = schema.indices.iter().map(|n| col(n)).collect();
    let c_cov: Vec<usize> = schema.covariates.iter().map(|n| col(n)).collect();

    let is_missing = |s: &str| s.is_empty() || schema.missing.iter().any(|m| m == s);
    let optional = |s: &str| -> std::result::Result<Option<f64>, String> {
        if is_missing(s) {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(format!("unparseable number {s:?}")),
        }
    };

    let mut report = IngestReport::default();
    let mut keys: BTreeMap<(String, NaiveDate), usize> = BTreeMap::new();
    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push((line, e.to_string()));
                continue;
            }
        };
        let field = |c: usize| row.get(c).unwrap_or("");
        let parsed = (|| -> std::result::Result<DailyRecord, String> {
            let county = field(c_county).to_string();
            if is_missing(&county) {
                return Err("missing county id".into());
            }
            let date = NaiveDate::parse_from_str(field(c_date), &schema.date_format)
                .map_err(|e| format!("bad date {:?}: {e}", field(c_date)))?;
            let population = optional(field(c_pop))?.ok_or("missing population")?;
            if population <= 0.0 {
                return Err(format!("population must be positive, got {population}"));
            }
            let cases = optional(field(c_cases))?.ok_or("missing case count")?;
            if cases < 0.0 {
                return Err(format!("negative case count {cases}"));
            }
            let indices = c_idx
                .iter()
                .map(|&c| optional(field(c)))
                .collect::<std::result::Result<_, _>>()?;
            let covariates = c_cov
                .iter()
                .map(|&c| optional(field(c)))
                .collect::<std::result::Result<_, _>>()?;
            Ok(DailyRecord {
                county,
                date,
                population,
                cases,
                indices,
                covariates,
            })
        })();
        match parsed {
            Ok(rec) => {
                let key = (rec.county.clone(), rec.date);
                if let Some(first) = keys.insert(key, line) {
                    return Err(MtpError::Data(format!(
                        "duplicate key (county {}, date {}) on lines {first} and {line}",
                        rec.county, rec.date
                    )));
                }
                records.push(rec);
            }
            Err(reason) => report.rejected.push((line, reason)),
        }
    }
    report.rows_accepted = records.len();
    records.sort_by(|a, b| (&a.county, a.date).cmp(&(&b.county, b.date)));
    Ok((
        PanelTable {
            index_names: schema.indices.clone(),
            covariate_names: schema.covariates.clone(),
            cases_kind: schema.cases_kind,
            records,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn schema() -> PanelSchema {
        PanelSchema {
            county_id: "fips".into(),
            date: "date".into(),
            date_format: default_date_format(),
            population: "pop".into(),
            cases: "cases".into(),
            cases_kind: CasesKind::Incident,
            covariates: vec!["income".into()],
            indices: vec!["m50".into()],
            delimiter: ',',
            missing: default_missing(),
        }
    }

    const TOY: &str = "fips,date,pop,cases,income,m50
01001,2020-06-01,50000,5,3.1,10
01001,2020-06-08,50000,6,3.1,11
01003,2020-06-01,60000,7,2.0,NA
01003,2020-06-08,60000,8,2.0,9
01005,2020-06-01,70000,1,1.5,12
01005,2020-06-08,70000,2,1.5,
";

    #[test]
    fn reads_toy_panel() {
        let (t, rep) = ingest_reader(TOY.as_bytes(), &schema()).unwrap();
        assert_eq!(t.records.len(), 6);
        assert_eq!(rep.rows_accepted, 6);
        assert!(rep.rejected.is_empty());
        assert_eq!(t.records[2].indices, vec![None]);
        assert_eq!(t.records[5].indices, vec![None]);
    }

    #[test]
    fn duplicate_key_names_the_key() {
        let csv = format!("{TOY}01001,2020-06-01,50000,5,3.1,10\n");
        let err = ingest_reader(csv.as_bytes(), &schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("01001") && msg.contains("2020-06-01"), "{msg}");
    }

    #[test]
    fn negative_cases_rejected_and_counted() {
        let csv = format!("{TOY}01007,2020-06-01,50000,-3,1.0,10\n01007,2020-06-08,abc,3,1.0,10\n");
        let (t, rep) = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(t.records.len(), 6);
        assert_eq!(rep.rejected.len(), 2);
        assert_eq!(rep.rejected[0].0, 8);
        assert!(rep.rejected[0].1.contains("negative"));
    }

    #[test]
    fn missing_column_is_named() {
        let csv = TOY.replace("income", "earnings");
        let err = ingest_reader(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, MtpError::Schema(ref m) if m.contains("income")));
    }

    #[test]
    fn row_order_does_not_matter() {
        let mut lines: Vec<&str> = TOY.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        let shuffled = format!("{header}\n{}\n", lines.join("\n"));
        let a = ingest_reader(TOY.as_bytes(), &schema()).unwrap().0;
        let b = ingest_reader(shuffled.as_bytes(), &schema()).unwrap().0;
        assert_eq!(a, b);
    }
}
