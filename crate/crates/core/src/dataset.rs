//! Daily profiles of a system output and its covariates.
//!
//! Data arrives as long-format CSV: one row per (day, time-of-day) with the
//! output and covariate readings, empty cells meaning missing. Days are
//! irregularly sampled and may differ in their measurement points. A loaded
//! [`FunctionalDataset`] is immutable and safe to share across threads.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header is missing required column '{0}'")]
    MissingColumn(String),
    #[error("line {line}: cannot parse {field} value '{value}'")]
    Parse { line: u64, field: &'static str, value: String },
    #[error("line {line}: time {t} outside (0, 24]")]
    TimeOutOfRange { line: u64, t: f64 },
    #[error("line {line}: row has neither output nor covariate values")]
    EmptyRow { line: u64 },
    #[error("duplicate time {t} on day {day}")]
    DuplicateTime { day: String, t: f64 },
    #[error("day ids mix calendar dates and integer indices")]
    MixedDayIdKinds,
    #[error("no days left after filtering")]
    EmptyAfterFilter,
    #[error("unknown covariate '{0}'")]
    UnknownCovariate(String),
}

/// Day identifier: a calendar date or a plain integer index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DayId {
    Date(NaiveDate),
    Index(i64),
}

impl DayId {
    /// Continuous day-of-year position: ordinal day minus one half, so the
    /// yearly axis runs over [0.5, 365.5] and leap day 366 maps onto
    /// [365, 366]. Integer indices are folded onto a 365-day year.
    pub fn day_of_year(&self) -> f64 {
        match self {
            DayId::Date(d) => d.ordinal() as f64 - 0.5,
            DayId::Index(i) => ((i - 1).rem_euclid(365)) as f64 + 0.5,
        }
    }

    fn parse(text: &str) -> Option<DayId> {
        if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
            return Some(DayId::Date(d));
        }
        text.parse::<i64>().ok().map(DayId::Index)
    }
}

impl fmt::Display for DayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DayId::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            DayId::Index(i) => write!(f, "{i}"),
        }
    }
}

/// One measurement instant within a day. Covariate values line up with the
/// dataset's `covariate_names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Time of day in hours, strictly within (0, 24]; midnight belongs to the
    /// previous day as 24.0.
    pub t: f64,
    pub output: Option<f64>,
    pub covariates: Vec<Option<f64>>,
}

impl Observation {
    pub fn covariate(&self, index: usize) -> Option<f64> {
        self.covariates.get(index).copied().flatten()
    }
}

/// All observations of a single day, time-sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayProfile {
    pub id: DayId,
    /// Continuous day-of-year position of this day.
    pub day_of_year: f64,
    pub observations: Vec<Observation>,
}

impl DayProfile {
    pub fn new(id: DayId, observations: Vec<Observation>) -> Self {
        Self { id, day_of_year: id.day_of_year(), observations }
    }

    fn missing_cells(&self, n_cov: usize) -> usize {
        self.observations
            .iter()
            .map(|o| {
                let mut m = usize::from(o.output.is_none());
                for c in 0..n_cov {
                    m += usize::from(o.covariate(c).is_none());
                }
                m
            })
            .sum()
    }

    fn cells(&self, n_cov: usize) -> usize {
        self.observations.len() * (1 + n_cov)
    }
}

/// A collection of daily profiles sharing one covariate layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDataset {
    pub profiles: Vec<DayProfile>,
    pub covariate_names: Vec<String>,
    /// Fraction of missing cells over the output x covariate grid.
    pub missing_fraction: f64,
}

/// Maps CSV header names onto the dataset roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub day: String,
    pub time: String,
    pub output: String,
    /// Covariate columns in order; empty means "every other column".
    pub covariates: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            day: "day".into(),
            time: "time".into(),
            output: "u".into(),
            covariates: Vec::new(),
        }
    }
}

fn parse_cell(text: &str) -> Result<Option<f64>, ()> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "NA" {
        return Ok(None);
    }
    trimmed.parse::<f64>().map(Some).map_err(|_| ())
}

impl FunctionalDataset {
    pub fn new(
        mut profiles: Vec<DayProfile>,
        covariate_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        profiles.sort_by(|a, b| a.id.cmp(&b.id));
        for p in &mut profiles {
            p.observations.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
            for w in p.observations.windows(2) {
                if w[0].t == w[1].t {
                    return Err(DatasetError::DuplicateTime { day: p.id.to_string(), t: w[0].t });
                }
            }
        }
        let n_cov = covariate_names.len();
        let cells: usize = profiles.iter().map(|p| p.cells(n_cov)).sum();
        let missing: usize = profiles.iter().map(|p| p.missing_cells(n_cov)).sum();
        let missing_fraction = if cells == 0 { 0.0 } else { missing as f64 / cells as f64 };
        Ok(Self { profiles, covariate_names, missing_fraction })
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize, DatasetError> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DatasetError::UnknownCovariate(name.into()))
    }

    pub fn n_days(&self) -> usize {
        self.profiles.len()
    }

    pub fn n_observations(&self) -> usize {
        self.profiles.iter().map(|p| p.observations.len()).sum()
    }

    /// Load a long-format CSV: header `day,time,<output>,<cov...>`, `day` as
    /// ISO-8601 date or integer, times in decimal hours, empty or `NA` cells
    /// meaning missing.
    pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)
            .map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
        Self::read_csv(file, schema)
    }

    pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let day_col = find(&schema.day).ok_or(DatasetError::MissingColumn(schema.day.clone()))?;
        let time_col = find(&schema.time).ok_or(DatasetError::MissingColumn(schema.time.clone()))?;
        let out_col =
            find(&schema.output).ok_or(DatasetError::MissingColumn(schema.output.clone()))?;
        let covariate_names: Vec<String> = if schema.covariates.is_empty() {
            headers
                .iter()
                .enumerate()
                .filter(|(i, _)| ![day_col, time_col, out_col].contains(i))
                .map(|(_, h)| h.to_string())
                .collect()
        } else {
            schema.covariates.clone()
        };
        let cov_cols: Vec<usize> = covariate_names
            .iter()
            .map(|n| find(n).ok_or(DatasetError::MissingColumn(n.clone())))
            .collect::<Result<_, _>>()?;

        let mut days: BTreeMap<DayId, Vec<Observation>> = BTreeMap::new();
        let mut saw_date = false;
        let mut saw_index = false;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let day_text = record.get(day_col).unwrap_or("");
            let id = DayId::parse(day_text).ok_or_else(|| DatasetError::Parse {
                line,
                field: "day",
                value: day_text.into(),
            })?;
            match id {
                DayId::Date(_) => saw_date = true,
                DayId::Index(_) => saw_index = true,
            }
            let t_text = record.get(time_col).unwrap_or("");
            let t: f64 = t_text.trim().parse().map_err(|_| DatasetError::Parse {
                line,
                field: "time",
                value: t_text.into(),
            })?;
            if !(t > 0.0 && t <= 24.0) {
                return Err(DatasetError::TimeOutOfRange { line, t });
            }
            let out_text = record.get(out_col).unwrap_or("");
            let output = parse_cell(out_text).map_err(|_| DatasetError::Parse {
                line,
                field: "output",
                value: out_text.into(),
            })?;
            let covariates = cov_cols
                .iter()
                .map(|&c| {
                    let text = record.get(c).unwrap_or("");
                    parse_cell(text).map_err(|_| DatasetError::Parse {
                        line,
                        field: "covariate",
                        value: text.into(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if output.is_none() && covariates.iter().all(|c| c.is_none()) {
                return Err(DatasetError::EmptyRow { line });
            }
            days.entry(id).or_default().push(Observation { t, output, covariates });
        }
        if saw_date && saw_index {
            return Err(DatasetError::MixedDayIdKinds);
        }
        let profiles = days.into_iter().map(|(id, obs)| DayProfile::new(id, obs)).collect();
        Self::new(profiles, covariate_names)
    }

    /// Serialize back to the long CSV format; `None` cells become empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["day".to_string(), "time".to_string(), "u".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        wtr.write_record(&header)?;
        let fmt_cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.17e}"));
        for p in &self.profiles {
            for o in &p.observations {
                let mut rec = vec![p.id.to_string(), format!("{:.17e}", o.t), fmt_cell(o.output)];
                for c in 0..self.covariate_names.len() {
                    rec.push(fmt_cell(o.covariate(c)));
                }
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush().map_err(|e| DatasetError::Io { path: "<writer>".into(), source: e })?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path)
            .map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
        self.write_csv(file)
    }

    /// Keep only days with at least `min_points` observations that carry the
    /// output and every covariate in `required` (given by name).
    pub fn filter_usable_days(
        &self,
        min_points: usize,
        required: &[String],
    ) -> Result<Self, DatasetError> {
        let req_idx: Vec<usize> =
            required.iter().map(|n| self.covariate_index(n)).collect::<Result<_, _>>()?;
        let keep: Vec<DayProfile> = self
            .profiles
            .iter()
            .filter(|p| {
                let complete = p
                    .observations
                    .iter()
                    .filter(|o| {
                        o.output.is_some() && req_idx.iter().all(|&c| o.covariate(c).is_some())
                    })
                    .count();
                complete >= min_points.max(1)
            })
            .cloned()
            .collect();
        if keep.is_empty() {
            return Err(DatasetError::EmptyAfterFilter);
        }
        Self::new(keep, self.covariate_names.clone())
    }

    pub fn missing_report(&self) -> MissingReport {
        let n_cov = self.covariate_names.len();
        let per_day: Vec<(DayId, f64)> = self
            .profiles
            .iter()
            .map(|p| {
                let cells = p.cells(n_cov);
                let frac =
                    if cells == 0 { 0.0 } else { p.missing_cells(n_cov) as f64 / cells as f64 };
                (p.id, frac)
            })
            .collect();
        let mut per_column: Vec<(String, f64)> = Vec::with_capacity(1 + n_cov);
        let total_rows = self.n_observations().max(1);
        let miss_out =
            self.profiles.iter().flat_map(|p| &p.observations).filter(|o| o.output.is_none()).count();
        per_column.push(("output".into(), miss_out as f64 / total_rows as f64));
        for (c, name) in self.covariate_names.iter().enumerate() {
            let miss = self
                .profiles
                .iter()
                .flat_map(|p| &p.observations)
                .filter(|o| o.covariate(c).is_none())
                .count();
            per_column.push((name.clone(), miss as f64 / total_rows as f64));
        }
        MissingReport { per_day, per_column, overall: self.missing_fraction }
    }
}

/// Per-day, per-column, and overall missingness fractions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissingReport {
    pub per_day: Vec<(DayId, f64)>,
    pub per_column: Vec<(String, f64)>,
    pub overall: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn load(text: &str) -> Result<FunctionalDataset, DatasetError> {
        FunctionalDataset::read_csv(text.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn groups_rows_and_flags_missing_cell() {
        let ds = load("day,time,u,temp\n3,1.0,2.5,10\n3,2.0,2.6,\n3,3.0,2.4,12\n").unwrap();
        assert_eq!(ds.n_days(), 1);
        assert_eq!(ds.profiles[0].observations.len(), 3);
        assert_eq!(ds.profiles[0].observations[1].covariate(0), None);
        assert_abs_diff_eq!(ds.missing_fraction, 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn all_output_missing_is_accepted() {
        let ds = load("day,time,u,temp\n1,1.0,,10\n1,2.0,,11\n2,5.5,NA,9\n").unwrap();
        assert_eq!(ds.n_days(), 2);
        let report = ds.missing_report();
        assert_abs_diff_eq!(report.per_column[0].1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_time_is_rejected() {
        let err = load("day,time,u\n1,1.0,2.0\n1,1.0,2.1\n").unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateTime { .. }));
    }

    #[test]
    fn time_out_of_range_is_rejected() {
        assert!(matches!(
            load("day,time,u\n1,0.0,2.0\n"),
            Err(DatasetError::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            load("day,time,u\n1,24.5,2.0\n"),
            Err(DatasetError::TimeOutOfRange { .. })
        ));
        assert!(load("day,time,u\n1,24.0,2.0\n").is_ok());
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let err = load("day,time,u\n1,1.0,2.0\n1,oops,2.0\n").unwrap_err();
        match err {
            DatasetError::Parse { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "time");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fully_empty_row_is_rejected() {
        let err = load("day,time,u,temp\n1,1.0,,\n").unwrap_err();
        assert!(matches!(err, DatasetError::EmptyRow { line: 2 }));
    }

    #[test]
    fn row_order_does_not_matter() {
        let a = load("day,time,u\n2,2.0,1.0\n1,3.0,2.0\n1,1.0,3.0\n2,1.5,4.0\n").unwrap();
        let b = load("day,time,u\n1,1.0,3.0\n1,3.0,2.0\n2,1.5,4.0\n2,2.0,1.0\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filter_excludes_sparse_days_and_is_idempotent() {
        let mut rows = String::from("day,time,u,temp\n");
        // Day 1: 4 complete rows; day 2: 14 complete rows.
        for i in 1..=4 {
            rows.push_str(&format!("1,{i}.0,1.0,5\n"));
        }
        for i in 1..=14 {
            rows.push_str(&format!("2,{i}.0,1.0,5\n"));
        }
        let ds = load(&rows).unwrap();
        let filtered = ds.filter_usable_days(13, &["temp".into()]).unwrap();
        assert_eq!(filtered.n_days(), 1);
        assert_eq!(filtered.profiles[0].id, DayId::Index(2));
        let again = filtered.filter_usable_days(13, &["temp".into()]).unwrap();
        assert_eq!(filtered, again);
    }

    #[test]
    fn min_points_one_keeps_everything() {
        let ds = load("day,time,u\n1,1.0,2.0\n2,2.0,3.0\n").unwrap();
        let filtered = ds.filter_usable_days(1, &[]).unwrap();
        assert_eq!(filtered, ds);
    }

    #[test]
    fn filter_to_nothing_is_error() {
        let ds = load("day,time,u\n1,1.0,2.0\n").unwrap();
        assert!(matches!(ds.filter_usable_days(5, &[]), Err(DatasetError::EmptyAfterFilter)));
    }

    #[test]
    fn missing_report_symmetry() {
        // One fully missing output day of the same size as a complete day.
        let ds = load("day,time,u\n1,1.0,\n1,2.0,\n2,1.0,1.0\n2,2.0,2.0\n").unwrap();
        let r = ds.missing_report();
        assert_abs_diff_eq!(r.overall, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_day[0].1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_day[1].1, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fully_observed_report_is_zero() {
        let ds = load("day,time,u,temp\n1,1.0,1.0,2.0\n1,2.0,1.5,2.5\n").unwrap();
        let r = ds.missing_report();
        assert_eq!(r.overall, 0.0);
        assert!(r.per_day.iter().all(|(_, f)| *f == 0.0));
        assert!(r.per_column.iter().all(|(_, f)| *f == 0.0));
    }

    #[test]
    fn csv_round_trip_preserves_everything() {
        let ds = load(
            "day,time,u,temp\n2019-01-02,1.25,2.5,10\n2019-01-02,2.0,,11\n2019-01-03,24.0,3.5,\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let schema = CsvSchema { covariates: vec!["temp".into()], ..CsvSchema::default() };
        let back = FunctionalDataset::read_csv(buf.as_slice(), &schema).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn day_of_year_convention() {
        let jan1 = DayId::Date(NaiveDate::from_ymd_opt(2019, 1, 1).unwrap());
        assert_abs_diff_eq!(jan1.day_of_year(), 0.5, epsilon = 1e-12);
        let dec31_leap = DayId::Date(NaiveDate::from_ymd_opt(2020, 12, 31).unwrap());
        assert_abs_diff_eq!(dec31_leap.day_of_year(), 365.5, epsilon = 1e-12);
        assert_abs_diff_eq!(DayId::Index(1).day_of_year(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(DayId::Index(366).day_of_year(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn uniformly_blanked_cells_match_expected_fraction() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut rows = String::from("day,time,u,temp,hum,wind,load\n");
        let mut blanked = 0usize;
        // 500 days x 4 points x 5 cells = 10 000 cells, each blanked w.p. 0.1.
        for day in 1..=500 {
            for i in 1..=4 {
                let mut cells = Vec::new();
                let mut all_blank = true;
                for _ in 0..5 {
                    if rng.gen_bool(0.1) {
                        blanked += 1;
                        cells.push(String::new());
                    } else {
                        all_blank = false;
                        cells.push("1.0".into());
                    }
                }
                if all_blank {
                    // Keep the row valid; un-blank the first cell.
                    blanked -= 1;
                    cells[0] = "1.0".into();
                }
                rows.push_str(&format!("{day},{i}.0,{}\n", cells.join(",")));
            }
        }
        let ds = load(&rows).unwrap();
        let expected = blanked as f64 / 10_000.0;
        assert_abs_diff_eq!(ds.missing_fraction, expected, epsilon = 1e-12);
        assert!((ds.missing_fraction - 0.10).abs() < 0.01);
    }
}
