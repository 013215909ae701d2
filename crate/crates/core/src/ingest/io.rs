//! CSV readers and writers for stations, transactions and pools.

use std::path::Path;

use chrono::{DateTime, Utc};

use super::{PoolRecord, Rollout, StationRecord, Transaction};
use crate::error::{Error, Result};
use crate::geo::Projection;

pub const STATION_COLUMNS: [&str; 6] = ["id", "lon", "lat", "n_connectors", "max_power_kw", "rollout"];
pub const TRANSACTION_COLUMNS: [&str; 6] = [
    "station_id",
    "rfid",
    "plug_in",
    "plug_out",
    "energy_kwh",
    "charging_time_h",
];

/// Column positions of `required` in the header, or a schema error naming
/// the first absent column.
pub(crate) fn column_index(file: &str, headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::schema(file, format!("missing column `{name}`")))
        })
        .collect()
}

pub(crate) fn parse_f64(file: &str, line: u64, column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::schema(file, format!("line {line}: column `{column}`: cannot parse `{raw}` as a number")))
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::schema(path.display().to_string(), format!("cannot open: {e}")))
}

pub fn read_stations(path: &Path, proj: &Projection) -> Result<Vec<StationRecord>> {
    let file = path.display().to_string();
    let mut rdr = open(path)?;
    let idx = column_index(&file, rdr.headers()?, &STATION_COLUMNS)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let get = |k: usize| rec.get(idx[k]).unwrap_or("");
        let lon = parse_f64(&file, line, "lon", get(1))?;
        let lat = parse_f64(&file, line, "lat", get(2))?;
        if !(lat.abs() < 90.0) || !lon.is_finite() {
            return Err(Error::schema(&file, format!("line {line}: coordinates out of range")));
        }
        let n_connectors: u32 = get(3)
            .parse()
            .map_err(|_| Error::schema(&file, format!("line {line}: column `n_connectors`: not a count")))?;
        let max_power_kw = parse_f64(&file, line, "max_power_kw", get(4))?;
        let rollout = Rollout::parse(get(5))
            .ok_or_else(|| Error::schema(&file, format!("line {line}: column `rollout`: unknown value `{}`", get(5))))?;
        if n_connectors < 1 || !(max_power_kw > 0.0) {
            return Err(Error::schema(
                &file,
                format!("line {line}: station needs ≥1 connector and positive power"),
            ));
        }
        out.push(StationRecord {
            id: get(0).to_string(),
            lon,
            lat,
            location: proj.forward(lon, lat),
            n_connectors,
            max_power_kw,
            rollout,
        });
    }
    Ok(out)
}

fn parse_time(file: &str, line: u64, column: &str, raw: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| Error::schema(file, format!("line {line}: column `{column}`: `{raw}` is not RFC 3339")))
}

pub fn read_transactions(path: &Path) -> Result<Vec<Transaction>> {
    let file = path.display().to_string();
    let mut rdr = open(path)?;
    let idx = column_index(&file, rdr.headers()?, &TRANSACTION_COLUMNS)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let get = |k: usize| rec.get(idx[k]).unwrap_or("");
        out.push(Transaction {
            station_id: get(0).to_string(),
            rfid: get(1).to_string(),
            plug_in: parse_time(&file, line, "plug_in", get(2))?,
            plug_out: parse_time(&file, line, "plug_out", get(3))?,
            energy_kwh: parse_f64(&file, line, "energy_kwh", get(4))?,
            charging_time_h: parse_f64(&file, line, "charging_time_h", get(5))?,
        });
    }
    Ok(out)
}

pub fn write_stations(path: &Path, stations: &[StationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(STATION_COLUMNS)?;
    for s in stations {
        w.write_record([
            s.id.clone(),
            s.lon.to_string(),
            s.lat.to_string(),
            s.n_connectors.to_string(),
            s.max_power_kw.to_string(),
            s.rollout.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_transactions(path: &Path, transactions: &[Transaction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRANSACTION_COLUMNS)?;
    for t in transactions {
        w.write_record([
            t.station_id.clone(),
            t.rfid.clone(),
            t.plug_in.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            t.plug_out.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            t.energy_kwh.to_string(),
            t.charging_time_h.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const POOL_COLUMNS: [&str; 18] = [
    "pool_id",
    "lon",
    "lat",
    "x",
    "y",
    "n_stations",
    "station_ids",
    "n_connectors",
    "max_power_kw",
    "rollout",
    "energy_kwh",
    "n_transactions",
    "popularity",
    "charging_time_h",
    "charging_ratio",
    "use_time_ratio",
    "energy_ratio",
    "label",
];

pub fn write_pools(path: &Path, pools: &[PoolRecord], labels: &[u8], proj: &Projection) -> Result<()> {
    if pools.len() != labels.len() {
        return Err(Error::InvalidInput("pools and labels differ in length".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(POOL_COLUMNS)?;
    for (p, y) in pools.iter().zip(labels) {
        let (lon, lat) = proj.inverse(p.location);
        let ind = &p.indicators;
        w.write_record([
            p.pool_id.clone(),
            lon.to_string(),
            lat.to_string(),
            p.location.x.to_string(),
            p.location.y.to_string(),
            p.station_ids.len().to_string(),
            p.station_ids.join(";"),
            p.n_connectors.to_string(),
            p.max_power_kw.to_string(),
            p.rollout.as_str().to_string(),
            ind.energy_kwh.to_string(),
            ind.n_transactions.to_string(),
            ind.popularity.to_string(),
            ind.charging_time_h.to_string(),
            ind.charging_ratio.to_string(),
            ind.use_time_ratio.to_string(),
            ind.energy_ratio.to_string(),
            y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `pool_id` plus the named numeric columns from a pools table.
pub fn read_pool_columns(path: &Path, columns: &[&str]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = path.display().to_string();
    let mut rdr = open(path)?;
    let mut wanted = vec!["pool_id"];
    wanted.extend_from_slice(columns);
    let idx = column_index(&file, rdr.headers()?, &wanted)?;
    let mut ids = Vec::new();
    let mut values = vec![Vec::new(); columns.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        ids.push(rec.get(idx[0]).unwrap_or("").to_string());
        for (k, col) in columns.iter().enumerate() {
            values[k].push(parse_f64(&file, line, col, rec.get(idx[k + 1]).unwrap_or(""))?);
        }
    }
    Ok((ids, values))
}
