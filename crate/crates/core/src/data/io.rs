//! CSV ingestion and export of fleets.
//!
//! `meta.csv`:   `id,capacity_kw,age,utm_x,utm_y`
//! `series.csv`: `id,timestamp,power_kw,wind_speed,wind_dir_deg,temp_c`
//! with ISO-8601 hourly timestamps.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDateTime;

use super::{DataError, Fleet, Result, TurbineMeta, TurbineSeries, POWER_SLACK};

const META_HEADER: [&str; 5] = ["id", "capacity_kw", "age", "utm_x", "utm_y"];
const SERIES_HEADER: [&str; 6] = [
    "id",
    "timestamp",
    "power_kw",
    "wind_speed",
    "wind_dir_deg",
    "temp_c",
];
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.is_file() {
        return Err(DataError::MissingFile(path.display().to_string()));
    }
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

fn check_header(reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?.clone();
    if header.len() != expected.len() {
        return Err(DataError::SchemaViolation {
            row: 1,
            column: "<header>".into(),
            reason: format!("expected {} columns, found {}", expected.len(), header.len()),
        });
    }
    for (got, want) in header.iter().zip(expected) {
        if got != *want {
            return Err(DataError::SchemaViolation {
                row: 1,
                column: got.into(),
                reason: format!("expected column `{want}`"),
            });
        }
    }
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, row: usize, idx: usize, name: &str) -> Result<&'a str> {
    rec.get(idx).ok_or_else(|| DataError::SchemaViolation {
        row,
        column: name.into(),
        reason: "missing field".into(),
    })
}

fn number(rec: &csv::StringRecord, row: usize, idx: usize, name: &str) -> Result<f64> {
    let raw = field(rec, row, idx, name)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::SchemaViolation {
            row,
            column: name.into(),
            reason: format!("`{raw}` is not a finite number"),
        }),
    }
}

fn violation(row: usize, column: &str, reason: String) -> DataError {
    DataError::SchemaViolation {
        row,
        column: column.into(),
        reason,
    }
}

pub(crate) fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.strip_suffix('Z').unwrap_or(raw);
    NaiveDateTime::parse_from_str(raw, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M"))
        .ok()
}

/// Reads `meta.csv`. Row numbers in errors are 1-based file lines.
pub fn read_meta(path: &Path) -> Result<Vec<TurbineMeta>> {
    let mut reader = open(path)?;
    check_header(&mut reader, &META_HEADER)?;
    let mut metas = Vec::new();
    let mut seen = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let id = field(&rec, row, 0, "id")?.to_string();
        if id.is_empty() {
            return Err(violation(row, "id", "empty id".into()));
        }
        if seen.insert(id.clone(), row).is_some() {
            return Err(violation(row, "id", format!("duplicate id `{id}`")));
        }
        let capacity_kw = number(&rec, row, 1, "capacity_kw")?;
        if capacity_kw <= 0.0 {
            return Err(violation(row, "capacity_kw", "must be positive".into()));
        }
        let age = number(&rec, row, 2, "age")?;
        if age < 0.0 {
            return Err(violation(row, "age", "must be non-negative".into()));
        }
        metas.push(TurbineMeta {
            id,
            capacity_kw,
            age,
            utm_x: number(&rec, row, 3, "utm_x")?,
            utm_y: number(&rec, row, 4, "utm_y")?,
            archetype: None,
        });
    }
    Ok(metas)
}

struct Row {
    at: NaiveDateTime,
    power: f64,
    wind: f64,
    dir: f64,
    temp: f64,
}

/// Loads and validates a fleet from a series file and a metadata file.
pub fn load_fleet(series_path: &Path, meta_path: &Path) -> Result<Fleet> {
    let metas = read_meta(meta_path)?;
    let index: HashMap<&str, usize> = metas
        .iter()
        .enumerate()
        .map(|(i, m)| (m.id.as_str(), i))
        .collect();
    let mut rows: Vec<Vec<Row>> = metas.iter().map(|_| Vec::new()).collect();

    let mut reader = open(series_path)?;
    check_header(&mut reader, &SERIES_HEADER)?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let id = field(&rec, row, 0, "id")?;
        let &turbine = index
            .get(id)
            .ok_or_else(|| violation(row, "id", format!("unknown turbine id `{id}`")))?;
        let raw_ts = field(&rec, row, 1, "timestamp")?;
        let at = parse_timestamp(raw_ts)
            .ok_or_else(|| violation(row, "timestamp", format!("`{raw_ts}` is not ISO-8601")))?;
        let power = number(&rec, row, 2, "power_kw")?;
        let cap = metas[turbine].capacity_kw * POWER_SLACK;
        if !(0.0..=cap).contains(&power) {
            return Err(violation(row, "power_kw", format!("{power} outside [0, {cap}]")));
        }
        let wind = number(&rec, row, 3, "wind_speed")?;
        if wind < 0.0 {
            return Err(violation(row, "wind_speed", "must be non-negative".into()));
        }
        let dir = number(&rec, row, 4, "wind_dir_deg")?;
        if !(0.0..360.0).contains(&dir) {
            return Err(violation(row, "wind_dir_deg", format!("{dir} outside [0, 360)")));
        }
        let temp = number(&rec, row, 5, "temp_c")?;
        rows[turbine].push(Row {
            at,
            power,
            wind,
            dir,
            temp,
        });
    }

    let mut turbines = Vec::with_capacity(metas.len());
    for (meta, mut rs) in metas.into_iter().zip(rows) {
        if rs.is_empty() {
            return Err(DataError::InvalidSeries {
                id: meta.id,
                reason: "no series rows".into(),
            });
        }
        rs.sort_by_key(|r| r.at);
        if rs.windows(2).any(|w| (w[1].at - w[0].at).num_seconds() != 3600) {
            return Err(DataError::NonUniformTimestamps(meta.id));
        }
        turbines.push(TurbineSeries {
            start: rs[0].at,
            power: rs.iter().map(|r| r.power).collect(),
            wind_speed: rs.iter().map(|r| r.wind).collect(),
            wind_dir: rs.iter().map(|r| r.dir).collect(),
            temperature: rs.iter().map(|r| r.temp).collect(),
            meta,
        });
    }
    Fleet::new(turbines)
}

/// Writes `meta.csv`.
pub fn write_meta(metas: &[TurbineMeta], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(META_HEADER)?;
    for m in metas {
        w.write_record([
            m.id.clone(),
            m.capacity_kw.to_string(),
            m.age.to_string(),
            m.utm_x.to_string(),
            m.utm_y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `series.csv` and `meta.csv`. Values round-trip exactly.
pub fn write_fleet(fleet: &Fleet, series_path: &Path, meta_path: &Path) -> Result<()> {
    write_meta(&fleet.metas(), meta_path)?;
    let mut w = csv::Writer::from_path(series_path)?;
    w.write_record(SERIES_HEADER)?;
    for t in fleet.turbines() {
        for i in 0..t.len() {
            w.write_record([
                t.meta.id.clone(),
                t.timestamp(i).format(TIMESTAMP_FORMAT).to_string(),
                t.power[i].to_string(),
                t.wind_speed[i].to_string(),
                t.wind_dir[i].to_string(),
                t.temperature[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the ground-truth archetype of every turbine as `id,archetype`.
pub fn write_truth(fleet: &Fleet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "archetype"])?;
    for t in fleet.turbines() {
        w.write_record([t.meta.id.as_str(), t.meta.archetype.as_deref().unwrap_or("")])?;
    }
    w.flush()?;
    Ok(())
}
