use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::{json, Value};

use super::EstimateError;
use crate::assign::{AssignmentResult, NetworkStats, OdMatrix};
use crate::netbuild::{RoadNetwork, ZoneId, ZoneSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatColumn {
    TripLength,
    TravelTime,
    TotalDemand,
}

impl StatColumn {
    pub const ALL: [StatColumn; 3] = [StatColumn::TripLength, StatColumn::TravelTime, StatColumn::TotalDemand];

    fn value(self, s: &NetworkStats) -> f64 {
        match self {
            StatColumn::TripLength => s.avg_trip_length_m,
            StatColumn::TravelTime => s.avg_travel_time_s,
            StatColumn::TotalDemand => s.total_demand,
        }
    }
}

impl fmt::Display for StatColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatColumn::TripLength => "average trip length",
            StatColumn::TravelTime => "average travel time",
            StatColumn::TotalDemand => "total demand",
        })
    }
}

/// Sign-explicit percentage with two decimals. Values that round to zero
/// print as `+0.00`.
pub fn format_delta(pct: f64) -> String {
    let s = format!("{pct:+.2}");
    if s == "-0.00" {
        "+0.00".to_owned()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub date: NaiveDate,
    /// Percent changes against the base in [`StatColumn::ALL`] order;
    /// `None` on the base row.
    pub deltas: Option<[f64; 3]>,
}

impl ComparisonRow {
    fn cells(&self) -> [String; 3] {
        match self.deltas {
            Some(d) => d.map(format_delta),
            None => ["-".to_owned(), "-".to_owned(), "-".to_owned()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub city: String,
    pub base_date: NaiveDate,
    pub rows: Vec<ComparisonRow>,
}

/// Percent change of each statistic against the base day:
/// `100 * (value - base) / base`. The base row comes first.
pub fn compare_days(
    city: &str,
    base_date: NaiveDate,
    base: &NetworkStats,
    others: &[(NaiveDate, NetworkStats)],
) -> Result<ComparisonReport, EstimateError> {
    for c in StatColumn::ALL {
        if c.value(base) == 0.0 {
            return Err(EstimateError::UndefinedDelta(c));
        }
    }
    let mut rows = vec![ComparisonRow { date: base_date, deltas: None }];
    for (date, s) in others {
        let d = StatColumn::ALL.map(|c| 100.0 * (c.value(s) - c.value(base)) / c.value(base));
        rows.push(ComparisonRow { date: *date, deltas: Some(d) });
    }
    Ok(ComparisonReport {
        city: city.to_owned(),
        base_date,
        rows,
    })
}

const TABLE_HEADER: [&str; 5] = [
    "City",
    "Date",
    "% change in average trip length",
    "% change in average travel time",
    "% change in total demand",
];

impl ComparisonReport {
    /// Writes `city,date,trip_length_pct,travel_time_pct,total_demand_pct`.
    pub fn write_csv<W: Write>(reports: &[ComparisonReport], out: W) -> Result<(), EstimateError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["city", "date", "trip_length_pct", "travel_time_pct", "total_demand_pct"])?;
        for r in reports {
            for row in &r.rows {
                let [a, b, c] = row.cells();
                w.write_record([r.city.clone(), row.date.format("%Y-%m-%d").to_string(), a, b, c])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text table, one block per city, the city named on its
    /// base row only.
    pub fn render_table(reports: &[ComparisonReport]) -> String {
        let mut lines: Vec<[String; 5]> = vec![TABLE_HEADER.map(str::to_owned)];
        for r in reports {
            for (i, row) in r.rows.iter().enumerate() {
                let [a, b, c] = row.cells();
                let city = if i == 0 { r.city.clone() } else { String::new() };
                lines.push([city, row.date.format("%B %-d %Y").to_string(), a, b, c]);
            }
        }
        let widths: Vec<usize> = (0..5).map(|k| lines.iter().map(|l| l[k].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (li, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    if k < 2 {
                        format!("{s:<w$}", w = widths[k])
                    } else {
                        format!("{s:>w$}", w = widths[k])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if li == 0 {
                out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
                out.push('\n');
            }
        }
        out.push_str("\nAverage travel time and trip length are demand-weighted over all assigned trips.\n");
        out
    }
}

/// Percent of total trips produced by each zone, in zone order.
pub fn zone_production_shares(od: &OdMatrix) -> Result<Vec<f64>, EstimateError> {
    let total = od.total();
    if total <= 0.0 {
        return Err(EstimateError::UndefinedShares);
    }
    Ok(od.productions().iter().map(|p| 100.0 * p / total).collect())
}

/// For each destination zone with positive attraction, the mean link
/// congestion index (congested over free-flow time) over the links its
/// trips use, weighted by the flow bound for that zone.
pub fn destination_congestion_index(
    result: &AssignmentResult,
    od: &OdMatrix,
    zones: &ZoneSet,
    network: &RoadNetwork,
) -> BTreeMap<ZoneId, f64> {
    let attractions = od.attractions();
    let mut out = BTreeMap::new();
    for (z, zone) in zones.zones().iter().enumerate() {
        if attractions[z] <= 0.0 {
            continue;
        }
        let Some(flows) = result.dest_flows.get(z) else { continue };
        let (mut num, mut den) = (0.0, 0.0);
        for ((f, t), l) in flows.iter().zip(&result.times).zip(network.links()) {
            if *f > 0.0 {
                num += f * t / l.free_flow_s;
                den += f;
            }
        }
        if den > 0.0 {
            out.insert(zone.id, num / den);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZonalRow {
    pub zone: ZoneId,
    pub production_share_pct: f64,
    /// Absent for zones that attract no trips.
    pub dest_ci: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZonalReport {
    pub rows: Vec<ZonalRow>,
}

impl ZonalReport {
    pub fn new(result: &AssignmentResult, od: &OdMatrix, zones: &ZoneSet, network: &RoadNetwork) -> Result<ZonalReport, EstimateError> {
        let shares = zone_production_shares(od)?;
        let ci = destination_congestion_index(result, od, zones, network);
        Ok(ZonalReport {
            rows: zones
                .zones()
                .iter()
                .zip(shares)
                .map(|(z, s)| ZonalRow {
                    zone: z.id,
                    production_share_pct: s,
                    dest_ci: ci.get(&z.id).copied(),
                })
                .collect(),
        })
    }
}

/// GeoJSON features per zone: the grid cell polygon when the zones come
/// from a grid, the centroid point otherwise.
pub fn zonal_geojson(report: &ZonalReport, zones: &ZoneSet, network: &RoadNetwork) -> Value {
    let features: Vec<Value> = report
        .rows
        .iter()
        .filter_map(|row| {
            let z = &zones.zones()[zones.index_of(row.zone)?];
            let geometry = match zones.cell_ring(z) {
                Some(ring) => json!({ "type": "Polygon", "coordinates": [ring] }),
                None => {
                    let n = network.node(z.centroid)?;
                    json!({ "type": "Point", "coordinates": [n.lon, n.lat] })
                }
            };
            Some(json!({
                "type": "Feature",
                "geometry": geometry,
                "properties": {
                    "zone_id": row.zone.0,
                    "production_share_pct": row.production_share_pct,
                    "dest_ci": row.dest_ci,
                },
            }))
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
