use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{Activity, Trip};
use crate::num::Scalar;
use crate::schedule::Schedule;
use crate::transmission::{ContactMatrices, ContactMatrix};
use crate::world::{AgentId, LocationId, LocationType, NUM_AGE_GROUPS};

use super::reported::csv_error;
use super::{AgentRow, InitSpec, LocationRow, ParameterSet, ReportedData, Scenario, TimelineSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct Document<T: Scalar> {
    schema_version: u32,
    name: String,
    start_date: NaiveDate,
    days: i64,
    files: Files,
    #[serde(default)]
    init: InitSpec,
    #[serde(default)]
    timeline: Option<TimelineSpec>,
    #[serde(default)]
    params: ParameterSet<T>,
    #[serde(default)]
    schedule: Schedule<T>,
}

#[derive(Serialize, Deserialize)]
struct Files {
    agents: String,
    locations: String,
    #[serde(default)]
    trips: Option<String>,
    #[serde(default)]
    reported: Option<String>,
    /// Contact matrix per location type; unlisted types keep the defaults.
    #[serde(default)]
    contacts: BTreeMap<LocationType, String>,
}

#[derive(Serialize, Deserialize)]
struct TripRow {
    agent_id: AgentId,
    weekday: u8,
    start_minute: u16,
    target_location_id: LocationId,
    activity: Activity,
}

#[derive(Serialize, Deserialize)]
struct ContactRow {
    g0: f64,
    g1: f64,
    g2: f64,
    g3: f64,
    g4: f64,
    g5: f64,
}

fn read_rows<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<R>().enumerate() {
        out.push(rec.map_err(|e| Error::Schema {
            file: path.display().to_string(),
            row: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_matrix<T: Scalar>(path: &Path) -> Result<ContactMatrix<T>> {
    let rows: Vec<ContactRow> = read_rows(path)?;
    if rows.len() != NUM_AGE_GROUPS {
        return Err(Error::Schema {
            file: path.display().to_string(),
            row: rows.len(),
            detail: format!("expected {NUM_AGE_GROUPS} rows"),
        });
    }
    let mut m = [[0.0; NUM_AGE_GROUPS]; NUM_AGE_GROUPS];
    for (j, r) in rows.iter().enumerate() {
        m[j] = [r.g0, r.g1, r.g2, r.g3, r.g4, r.g5];
    }
    ContactMatrix::from_rows(m).map_err(|e| Error::Schema {
        file: path.display().to_string(),
        row: 0,
        detail: e.to_string(),
    })
}

impl<T: Scalar> Scenario<T> {
    /// Reads a scenario document; file references are relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Document<T> = toml::from_str(&text).map_err(|e| Error::Schema {
            file: path.display().to_string(),
            row: 0,
            detail: e.to_string(),
        })?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema {
                file: path.display().to_string(),
                row: 0,
                detail: format!("schema_version {} is not supported", doc.schema_version),
            });
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        let agents: Vec<AgentRow> = read_rows(&dir.join(&doc.files.agents))?;
        let locations: Vec<LocationRow> = read_rows(&dir.join(&doc.files.locations))?;
        let mut trips = Vec::new();
        if let Some(f) = &doc.files.trips {
            let p = dir.join(f);
            for (i, r) in read_rows::<TripRow>(&p)?.into_iter().enumerate() {
                let bad = |detail: String| Error::Schema {
                    file: p.display().to_string(),
                    row: i + 1,
                    detail,
                };
                if r.target_location_id.index() >= locations.len() {
                    return Err(bad(format!("unknown location {}", r.target_location_id)));
                }
                if r.agent_id.index() >= agents.len() {
                    return Err(bad(format!("unknown agent {}", r.agent_id)));
                }
                if r.weekday > 6 || r.start_minute >= 1440 {
                    return Err(bad("weekday must be 0-6 and start_minute 0-1439".into()));
                }
                trips.push(Trip {
                    agent: r.agent_id,
                    weekday: r.weekday,
                    minute: r.start_minute,
                    target: r.target_location_id,
                    activity: r.activity,
                });
            }
        }
        let mut contacts = ContactMatrices::default();
        for (kind, f) in &doc.files.contacts {
            contacts.set(*kind, read_matrix(&dir.join(f))?);
        }
        let reported = match &doc.files.reported {
            Some(f) => Some(ReportedData::load(&dir.join(f), &doc.params.infection.course)?),
            None => None,
        };
        doc.params.validate()?;
        doc.schedule.validate()?;
        Ok(Scenario {
            name: doc.name,
            start_date: doc.start_date,
            days: doc.days,
            params: doc.params,
            schedule: doc.schedule,
            timeline: doc.timeline,
            init: doc.init,
            agents,
            locations,
            trips,
            contacts,
            reported,
        })
    }

    /// Writes the document and its tables into `dir`; returns the document
    /// path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir.join("contacts")).map_err(|e| Error::io(dir, e))?;
        write_rows(&dir.join("agents.csv"), &self.agents)?;
        write_rows(&dir.join("locations.csv"), &self.locations)?;
        write_rows(
            &dir.join("trips.csv"),
            self.trips.iter().map(|t| TripRow {
                agent_id: t.agent,
                weekday: t.weekday,
                start_minute: t.minute,
                target_location_id: t.target,
                activity: t.activity,
            }),
        )?;
        let mut contacts = BTreeMap::new();
        for (kind, m) in &self.contacts.by_type {
            let rel = format!("contacts/{}.csv", kind.to_string().replace(':', "_"));
            write_rows(
                &dir.join(&rel),
                m.rows.iter().map(|r| {
                    let r = r.map(Scalar::as_f64);
                    ContactRow {
                        g0: r[0],
                        g1: r[1],
                        g2: r[2],
                        g3: r[3],
                        g4: r[4],
                        g5: r[5],
                    }
                }),
            )?;
            contacts.insert(*kind, rel);
        }
        let reported = match &self.reported {
            Some(r) => {
                r.write(&dir.join("reported.csv"))?;
                Some("reported.csv".to_string())
            }
            None => None,
        };
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            start_date: self.start_date,
            days: self.days,
            files: Files {
                agents: "agents.csv".into(),
                locations: "locations.csv".into(),
                trips: Some("trips.csv".into()),
                reported,
                contacts,
            },
            init: self.init.clone(),
            timeline: self.timeline.clone(),
            params: self.params.clone(),
            schedule: self.schedule.clone(),
        };
        let text = toml::to_string(&doc).map_err(|e| Error::param("scenario", e.to_string()))?;
        let path = dir.join("scenario.toml");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
