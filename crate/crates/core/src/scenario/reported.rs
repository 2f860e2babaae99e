use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infection::CourseParams;
use crate::num::Scalar;
use crate::world::{PerAge, NUM_AGE_GROUPS};

/// Day of death estimated from the day a fatal case was reported: the
/// report day plus the floored sum of the mean times from symptoms to
/// severe, severe to critical and critical to death.
pub fn estimate_death_day<T: Scalar>(report_day: i64, course: &CourseParams<T>) -> i64 {
    let d = &course.durations;
    let lag = d.symptoms_to_severe.mean() + d.severe_to_critical.mean() + d.critical_to_dead.mean();
    report_day + lag.floor() as i64
}

/// Reported surveillance data, one row per day.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportedData {
    pub days: Vec<i64>,
    /// Cumulative reported cases per age group.
    pub cases: Vec<PerAge<f64>>,
    pub icu: Vec<f64>,
    /// Cumulative deaths.
    pub deaths: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    day: i64,
    cases_0: f64,
    cases_1: f64,
    cases_2: f64,
    cases_3: f64,
    cases_4: f64,
    cases_5: f64,
    icu: f64,
    #[serde(default)]
    deaths: Option<f64>,
    /// Fatal cases counted on their report day; converted to death days.
    #[serde(default)]
    fatal_by_report: Option<f64>,
}

fn schema(file: &Path, row: usize, detail: impl Into<String>) -> Error {
    Error::Schema {
        file: file.display().to_string(),
        row,
        detail: detail.into(),
    }
}

impl ReportedData {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn index_of(&self, day: i64) -> Option<usize> {
        self.days.iter().position(|d| *d == day)
    }

    /// Reads the CSV layout `day, cases_0..cases_5, icu, deaths` (deaths
    /// may instead be given as `fatal_by_report`, dated by report day).
    pub fn load<T: Scalar>(path: &Path, course: &CourseParams<T>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut data = ReportedData::default();
        let mut fatal: Vec<(i64, f64)> = Vec::new();
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| schema(path, i + 1, e.to_string()))?;
            if let Some(prev) = data.days.last() {
                if row.day != prev + 1 {
                    return Err(schema(path, i + 1, "days must be consecutive"));
                }
            }
            data.days.push(row.day);
            data.cases.push([row.cases_0, row.cases_1, row.cases_2, row.cases_3, row.cases_4, row.cases_5]);
            data.icu.push(row.icu);
            match (row.deaths, row.fatal_by_report) {
                (Some(d), _) => data.deaths.push(d),
                (None, Some(f)) => {
                    fatal.push((row.day, f));
                    data.deaths.push(0.0);
                }
                (None, None) => return Err(schema(path, i + 1, "needs `deaths` or `fatal_by_report`")),
            }
        }
        if !fatal.is_empty() {
            data.deaths = data.deaths_from_report_days(&fatal, course);
        }
        data.validate().map_err(|d| schema(path, 0, d))?;
        Ok(data)
    }

    /// Cumulative deaths on `self.days` from fatal cases dated by report day.
    pub fn deaths_from_report_days<T: Scalar>(&self, fatal: &[(i64, f64)], course: &CourseParams<T>) -> Vec<f64> {
        self.days
            .iter()
            .map(|&day| {
                fatal
                    .iter()
                    .filter(|(rep, _)| estimate_death_day(*rep, course) <= day)
                    .map(|(_, n)| n)
                    .sum()
            })
            .collect()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.days.len();
        if self.cases.len() != n || self.icu.len() != n || self.deaths.len() != n {
            return Err("columns have different lengths".into());
        }
        for i in 1..n {
            if (0..NUM_AGE_GROUPS).any(|g| self.cases[i][g] < self.cases[i - 1][g]) {
                return Err(format!("cumulative cases decrease on day {}", self.days[i]));
            }
            if self.deaths[i] < self.deaths[i - 1] {
                return Err(format!("cumulative deaths decrease on day {}", self.days[i]));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for i in 0..self.len() {
            let c = self.cases[i];
            w.serialize(Row {
                day: self.days[i],
                cases_0: c[0],
                cases_1: c[1],
                cases_2: c[2],
                cases_3: c[3],
                cases_4: c[4],
                cases_5: c[5],
                icu: self.icu[i],
                deaths: Some(self.deaths[i]),
                fatal_by_report: None,
            })
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn cases_at(&self, day: i64) -> PerAge<f64> {
        if let Some(i) = self.index_of(day) {
            return self.cases[i];
        }
        match self.days.first() {
            Some(first) if day < *first => [0.0; NUM_AGE_GROUPS],
            _ => *self.cases.last().unwrap_or(&[0.0; NUM_AGE_GROUPS]),
        }
    }

    /// Cases reported in the `window` days up to and including `day`.
    pub fn active_cases(&self, day: i64, window: i64) -> PerAge<f64> {
        let now = self.cases_at(day);
        let before = self.cases_at(day - window);
        let mut out = [0.0; NUM_AGE_GROUPS];
        for g in 0..NUM_AGE_GROUPS {
            out[g] = (now[g] - before[g]).max(0.0);
        }
        out
    }

    /// Total cumulative cases per day.
    pub fn total_cases(&self) -> Vec<f64> {
        self.cases.iter().map(|c| c.iter().sum()).collect()
    }

    /// Rows from `day` onward.
    pub fn from_day(&self, day: i64) -> ReportedData {
        let start = self.days.iter().position(|d| *d >= day).unwrap_or(self.len());
        ReportedData {
            days: self.days[start..].to_vec(),
            cases: self.cases[start..].to_vec(),
            icu: self.icu[start..].to_vec(),
            deaths: self.deaths[start..].to_vec(),
        }
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.record() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => schema(path, row, format!("{other:?}")),
    }
}
