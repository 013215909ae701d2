//! Charging stations and transactions: filtering, aggregation into pools,
//! performance indicators and top-tier labels.

pub mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::PointXY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rollout {
    Strategic,
    DemandDriven,
}

impl Rollout {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rollout::Strategic => "strategic",
            Rollout::DemandDriven => "demand_driven",
        }
    }

    pub fn parse(s: &str) -> Option<Rollout> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "strategic" => Some(Rollout::Strategic),
            "demand_driven" | "demand" => Some(Rollout::DemandDriven),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub location: PointXY,
    pub n_connectors: u32,
    pub max_power_kw: f64,
    pub rollout: Rollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub station_id: String,
    pub rfid: String,
    pub plug_in: DateTime<Utc>,
    pub plug_out: DateTime<Utc>,
    pub energy_kwh: f64,
    pub charging_time_h: f64,
}

impl Transaction {
    pub fn connection_hours(&self) -> f64 {
        (self.plug_out - self.plug_in).num_milliseconds() as f64 / 3_600_000.0
    }

    /// Checks the record-level invariants (positive connection, charging time
    /// within the connection, non-negative energy).
    pub fn is_consistent(&self) -> bool {
        let conn = self.connection_hours();
        self.plug_out > self.plug_in
            && self.energy_kwh.is_finite()
            && self.energy_kwh >= 0.0
            && self.charging_time_h.is_finite()
            && self.charging_time_h >= 0.0
            && self.charging_time_h <= conn + 1e-9
    }
}

/// Closed observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedPeriod {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl ObservedPeriod {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if end <= start {
            return Err(Error::InvalidInput("observed period must have positive length".into()));
        }
        Ok(Self { start, end })
    }

    /// Calendar year 2015: sessions starting after 31 Dec 2014 and ending
    /// before 1 Jan 2016.
    pub fn year_2015() -> Self {
        Self {
            start: Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap(),
            end: Utc.with_ymd_and_hms(2016, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    pub fn hours(&self) -> f64 {
        (self.end - self.start).num_milliseconds() as f64 / 3_600_000.0
    }

    pub fn contains(&self, t: &Transaction) -> bool {
        t.plug_in >= self.start && t.plug_out <= self.end
    }
}

impl Default for ObservedPeriod {
    fn default() -> Self {
        Self::year_2015()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub outside_period: usize,
    pub inconsistent: usize,
}

/// Keeps consistent transactions lying fully inside the period.
pub fn filter_transactions(raw: Vec<Transaction>, period: &ObservedPeriod) -> (Vec<Transaction>, FilterReport) {
    let mut report = FilterReport::default();
    let kept: Vec<Transaction> = raw
        .into_iter()
        .filter(|t| {
            if !t.is_consistent() {
                report.inconsistent += 1;
                false
            } else if !period.contains(t) {
                report.outside_period += 1;
                false
            } else {
                true
            }
        })
        .collect();
    report.kept = kept.len();
    (kept, report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub energy_kwh: f64,
    pub n_transactions: u64,
    /// Distinct RFID cards.
    pub popularity: u64,
    pub charging_time_h: f64,
    pub charging_ratio: f64,
    pub use_time_ratio: f64,
    pub energy_ratio: f64,
}

/// The seven performance indicators, in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    EnergyKwh,
    NTransactions,
    Popularity,
    ChargingTimeH,
    ChargingRatio,
    UseTimeRatio,
    EnergyRatio,
}

impl Indicator {
    pub const ALL: [Indicator; 7] = [
        Indicator::EnergyKwh,
        Indicator::NTransactions,
        Indicator::Popularity,
        Indicator::ChargingTimeH,
        Indicator::ChargingRatio,
        Indicator::UseTimeRatio,
        Indicator::EnergyRatio,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Indicator::EnergyKwh => "energy_kwh",
            Indicator::NTransactions => "n_transactions",
            Indicator::Popularity => "popularity",
            Indicator::ChargingTimeH => "charging_time_h",
            Indicator::ChargingRatio => "charging_ratio",
            Indicator::UseTimeRatio => "use_time_ratio",
            Indicator::EnergyRatio => "energy_ratio",
        }
    }
}

impl IndicatorSet {
    pub fn get(&self, which: Indicator) -> f64 {
        match which {
            Indicator::EnergyKwh => self.energy_kwh,
            Indicator::NTransactions => self.n_transactions as f64,
            Indicator::Popularity => self.popularity as f64,
            Indicator::ChargingTimeH => self.charging_time_h,
            Indicator::ChargingRatio => self.charging_ratio,
            Indicator::UseTimeRatio => self.use_time_ratio,
            Indicator::EnergyRatio => self.energy_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    /// Smallest member station id.
    pub pool_id: String,
    pub location: PointXY,
    pub station_ids: Vec<String>,
    pub n_connectors: u32,
    pub max_power_kw: f64,
    pub rollout: Rollout,
    pub indicators: IndicatorSet,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // lower index becomes the root so roots are canonical
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage clustering of stations closer than `threshold_m`.
///
/// Pools come out sorted by id; each pool's id is its smallest station id.
pub fn aggregate_pools(stations: &[StationRecord], threshold_m: f64) -> Result<Vec<PoolRecord>> {
    let mut order: Vec<&StationRecord> = stations.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for w in order.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::InvalidInput(format!("duplicate station id `{}`", w[0].id)));
        }
    }
    for s in &order {
        if s.n_connectors < 1 || !(s.max_power_kw > 0.0) || !s.location.is_finite() {
            return Err(Error::InvalidInput(format!("station `{}` violates record invariants", s.id)));
        }
    }
    let n = order.len();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if order[i].location.distance(&order[j].location) < threshold_m {
                ds.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(ds.find(i)).or_default().push(i);
    }
    let pools = groups
        .into_values()
        .map(|members| {
            let m = members.len() as f64;
            let cx = members.iter().map(|&i| order[i].location.x).sum::<f64>() / m;
            let cy = members.iter().map(|&i| order[i].location.y).sum::<f64>() / m;
            let strategic = members.iter().filter(|&&i| order[i].rollout == Rollout::Strategic).count();
            let rollout = if 2 * strategic >= members.len() {
                Rollout::Strategic
            } else {
                Rollout::DemandDriven
            };
            PoolRecord {
                pool_id: order[members[0]].id.clone(),
                location: PointXY::new(cx, cy),
                station_ids: members.iter().map(|&i| order[i].id.clone()).collect(),
                n_connectors: members.iter().map(|&i| order[i].n_connectors).sum(),
                max_power_kw: members.iter().map(|&i| order[i].max_power_kw).fold(0.0, f64::max),
                rollout,
                indicators: IndicatorSet::default(),
            }
        })
        .collect();
    Ok(pools)
}

/// What counts as "occupied" in the use-time ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UseTimeBasis {
    /// Plugged in, charging or idle.
    #[default]
    Connected,
    /// Charging only, with the charging interval assumed to start at plug-in.
    Charging,
}

fn union_length(mut intervals: Vec<(f64, f64)>) -> f64 {
    intervals.sort_by(|a, b| a.partial_cmp(b).expect("finite interval"));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (s, e) in intervals {
        match current {
            Some((cs, ce)) if s <= ce => current = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                current = Some((s, e));
            }
            None => current = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = current {
        total += ce - cs;
    }
    total
}

/// Indicators of one pool from its (already filtered) transactions.
pub fn compute_indicators(
    pool: &PoolRecord,
    transactions: &[&Transaction],
    period: &ObservedPeriod,
    basis: UseTimeBasis,
) -> Result<IndicatorSet> {
    let period_h = period.hours();
    if !(period_h > 0.0) {
        return Err(Error::InvalidInput("observed period has zero length".into()));
    }
    if transactions.is_empty() {
        return Ok(IndicatorSet::default());
    }
    let energy: f64 = transactions.iter().map(|t| t.energy_kwh).sum();
    let charging: f64 = transactions.iter().map(|t| t.charging_time_h).sum();
    let connected: f64 = transactions.iter().map(|t| t.connection_hours()).sum();
    let rfids: BTreeSet<&str> = transactions.iter().map(|t| t.rfid.as_str()).collect();
    let hours_since_start = |d: DateTime<Utc>| (d - period.start).num_milliseconds() as f64 / 3_600_000.0;
    let intervals = transactions
        .iter()
        .map(|t| {
            let s = hours_since_start(t.plug_in);
            let e = match basis {
                UseTimeBasis::Connected => hours_since_start(t.plug_out),
                UseTimeBasis::Charging => s + t.charging_time_h,
            };
            (s.max(0.0), e.min(period_h))
        })
        .collect();
    Ok(IndicatorSet {
        energy_kwh: energy,
        n_transactions: transactions.len() as u64,
        popularity: rfids.len() as u64,
        charging_time_h: charging,
        charging_ratio: if connected > 0.0 { charging / connected } else { 0.0 },
        use_time_ratio: union_length(intervals) / period_h,
        energy_ratio: energy / (pool.max_power_kw * period_h),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReport {
    pub assigned: usize,
    pub unknown_station: usize,
}

/// Fills in every pool's indicators. Transactions at unknown stations are
/// counted and skipped.
pub fn assign_indicators(
    pools: &mut [PoolRecord],
    transactions: &[Transaction],
    period: &ObservedPeriod,
    basis: UseTimeBasis,
) -> Result<AssignmentReport> {
    let mut station_to_pool: HashMap<&str, usize> = HashMap::new();
    for (i, p) in pools.iter().enumerate() {
        for s in &p.station_ids {
            station_to_pool.insert(s.as_str(), i);
        }
    }
    let mut per_pool: Vec<Vec<&Transaction>> = vec![Vec::new(); pools.len()];
    let mut report = AssignmentReport::default();
    for t in transactions {
        match station_to_pool.get(t.station_id.as_str()) {
            Some(&i) => {
                per_pool[i].push(t);
                report.assigned += 1;
            }
            None => report.unknown_station += 1,
        }
    }
    let indicators = pools
        .iter()
        .zip(&per_pool)
        .map(|(p, ts)| compute_indicators(p, ts, period, basis))
        .collect::<Result<Vec<_>>>()?;
    for (p, ind) in pools.iter_mut().zip(indicators) {
        p.indicators = ind;
    }
    Ok(report)
}

/// Top-fraction labelling configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingSpec {
    pub top_fraction: f64,
    pub period: ObservedPeriod,
}

impl Default for LabelingSpec {
    fn default() -> Self {
        Self {
            top_fraction: 0.25,
            period: ObservedPeriod::year_2015(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub y: Vec<u8>,
    /// The cutoff value was shared by labelled and unlabelled entries.
    pub tie_at_cutoff: bool,
    pub all_equal: bool,
}

/// Marks exactly `round(z·n)` highest values as 1; ties at the cutoff go to
/// the lexicographically smaller id.
pub fn label_top(values: &[f64], ids: &[String], z: f64) -> Result<Labels> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput("labelling needs at least 2 values".into()));
    }
    if ids.len() != n {
        return Err(Error::InvalidInput("ids and values differ in length".into()));
    }
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::InvalidInput(format!("top fraction must lie in (0,1), got {z}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("labelling values must be finite".into()));
    }
    let k = (z * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| ids[a].cmp(&ids[b])));
    let mut y = vec![0u8; n];
    for &i in &order[..k] {
        y[i] = 1;
    }
    let all_equal = values.iter().all(|v| *v == values[0]);
    let tie_at_cutoff = k > 0 && k < n && values[order[k - 1]] == values[order[k]];
    if all_equal {
        log::warn!("all {n} labelling values are equal; labels assigned by id order only");
    } else if tie_at_cutoff {
        log::warn!("tie at the labelling cutoff broken by pool id");
    }
    Ok(Labels {
        y,
        tie_at_cutoff,
        all_equal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn station(id: &str, x: f64, y: f64) -> StationRecord {
        StationRecord {
            id: id.into(),
            lon: 0.0,
            lat: 0.0,
            location: PointXY::new(x, y),
            n_connectors: 2,
            max_power_kw: 11.0,
            rollout: Rollout::Strategic,
        }
    }

    fn tx(station: &str, rfid: &str, start_h: f64, conn_h: f64, charge_h: f64, kwh: f64) -> Transaction {
        let p = ObservedPeriod::year_2015();
        let plug_in = p.start + Duration::milliseconds((start_h * 3_600_000.0) as i64);
        Transaction {
            station_id: station.into(),
            rfid: rfid.into(),
            plug_in,
            plug_out: plug_in + Duration::milliseconds((conn_h * 3_600_000.0) as i64),
            energy_kwh: kwh,
            charging_time_h: charge_h,
        }
    }

    #[test]
    fn filtering_rules() {
        let p = ObservedPeriod::year_2015();
        let inside = tx("a", "r", 10.0, 2.0, 1.0, 5.0);
        let mut spanning = tx("a", "r", -1.0, 3.0, 1.0, 5.0);
        spanning.plug_in = p.start - Duration::hours(1);
        let bad = tx("a", "r", 10.0, 2.0, 3.0, 5.0);
        let (kept, rep) = filter_transactions(vec![inside.clone(), spanning, bad], &p);
        assert_eq!(kept, vec![inside.clone()]);
        assert_eq!((rep.kept, rep.outside_period, rep.inconsistent), (1, 1, 1));
        let all = vec![inside.clone(), tx("b", "q", 100.0, 1.0, 0.5, 1.0)];
        assert_eq!(filter_transactions(all.clone(), &p).0, all);
    }

    #[test]
    fn pool_linkage() {
        assert_eq!(aggregate_pools(&[station("a", 0.0, 0.0), station("b", 30.0, 0.0)], 50.0).unwrap().len(), 1);
        assert_eq!(aggregate_pools(&[station("a", 0.0, 0.0), station("b", 60.0, 0.0)], 50.0).unwrap().len(), 2);
        let chain = [station("c", 60.0, 0.0), station("a", 0.0, 0.0), station("b", 30.0, 0.0)];
        let pools = aggregate_pools(&chain, 50.0).unwrap();
        assert_eq!(pools.len(), 1);
        assert_eq!(pools[0].pool_id, "a");
        assert_eq!(pools[0].station_ids, vec!["a", "b", "c"]);
        assert_eq!(pools[0].n_connectors, 6);
        assert_eq!(pools[0].location, PointXY::new(30.0, 0.0));
        assert!(aggregate_pools(&[station("a", 0.0, 0.0), station("a", 500.0, 0.0)], 50.0).is_err());
    }

    #[test]
    fn majority_rollout_with_strategic_tie() {
        let mut b = station("b", 10.0, 0.0);
        b.rollout = Rollout::DemandDriven;
        let pools = aggregate_pools(&[station("a", 0.0, 0.0), b.clone()], 50.0).unwrap();
        assert_eq!(pools[0].rollout, Rollout::Strategic);
        let mut c = b.clone();
        c.id = "c".into();
        let pools = aggregate_pools(&[station("a", 0.0, 0.0), b, c], 50.0).unwrap();
        assert_eq!(pools[0].rollout, Rollout::DemandDriven);
    }

    fn ten_hour_period() -> ObservedPeriod {
        let s = ObservedPeriod::year_2015().start;
        ObservedPeriod::new(s, s + Duration::hours(10)).unwrap()
    }

    #[test]
    fn single_transaction_indicators() {
        let pool = aggregate_pools(&[station("a", 0.0, 0.0)], 50.0).unwrap().remove(0);
        let t = tx("a", "r1", 1.0, 4.0, 2.0, 11.0);
        let ind = compute_indicators(&pool, &[&t], &ten_hour_period(), UseTimeBasis::Connected).unwrap();
        assert_eq!(ind.charging_ratio, 0.5);
        assert!((ind.use_time_ratio - 0.4).abs() < 1e-12);
        assert!((ind.energy_ratio - 0.1).abs() < 1e-12);
        assert_eq!(ind.popularity, 1);
        assert_eq!(ind.n_transactions, 1);
        let empty = compute_indicators(&pool, &[], &ten_hour_period(), UseTimeBasis::Connected).unwrap();
        assert_eq!(empty, IndicatorSet::default());
        let charging = compute_indicators(&pool, &[&t], &ten_hour_period(), UseTimeBasis::Charging).unwrap();
        assert!((charging.use_time_ratio - 0.2).abs() < 1e-12);
    }

    #[test]
    fn overlapping_sessions_use_interval_union() {
        let pool = aggregate_pools(&[station("a", 0.0, 0.0)], 50.0).unwrap().remove(0);
        let t1 = tx("a", "r1", 0.0, 2.0, 1.0, 1.0);
        let t2 = tx("a", "r1", 1.0, 2.0, 1.0, 1.0);
        let ind = compute_indicators(&pool, &[&t1, &t2], &ten_hour_period(), UseTimeBasis::Connected).unwrap();
        assert!((ind.use_time_ratio - 0.3).abs() < 1e-12);
        assert_eq!(ind.popularity, 1);
        assert_eq!(ind.n_transactions, 2);
        assert!(ObservedPeriod::new(ten_hour_period().start, ten_hour_period().start).is_err());
    }

    #[test]
    fn labels() {
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let l = label_top(&[10.0, 20.0, 30.0, 40.0], &ids, 0.25).unwrap();
        assert_eq!(l.y, vec![0, 0, 0, 1]);
        let l = label_top(&[5.0; 4], &ids, 0.25).unwrap();
        assert_eq!(l.y, vec![1, 0, 0, 0]);
        assert!(l.all_equal);
        let n = 1271;
        let ids: Vec<String> = (0..n).map(|i| format!("p{i:05}")).collect();
        let vals: Vec<f64> = (0..n).map(|i| ((i * 7919) % 113) as f64).collect();
        let l = label_top(&vals, &ids, 0.25).unwrap();
        assert_eq!(l.y.iter().filter(|&&v| v == 1).count(), 318);
        assert!(label_top(&[1.0], &ids[..1], 0.25).is_err());
        assert!(label_top(&[1.0, 2.0], &ids[..2], 1.0).is_err());
    }
}
