//! Static user-equilibrium traffic assignment.
//!
//! Demand is loaded at zone centroid nodes. Link times follow a BPR-form
//! volume-delay function and the equilibrium is found by Frank-Wolfe descent
//! with an exact line search.

mod equilibrium;
mod graph;

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netbuild::{Link, LinkId, RoadNetwork, ZoneId, ZoneSet};

pub use equilibrium::{user_equilibrium, AssignmentResult, GapCheckpoint};
pub use graph::{all_or_nothing, shortest_path_tree, AssignGraph, ShortestPathTree};

#[derive(Debug, Error)]
pub enum AssignError {
    #[error("zone {dest} unreachable from zone {origin}")]
    Unreachable { origin: ZoneId, dest: ZoneId },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid OD matrix: {0}")]
    InvalidOd(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("statistics undefined for zero total demand")]
    UndefinedStats,
    #[error("line {line}: {msg}")]
    Schema { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// BPR-form volume-delay parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdfParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for VdfParams {
    fn default() -> Self {
        VdfParams { alpha: 0.15, beta: 4.0 }
    }
}

impl VdfParams {
    pub fn validate(&self) -> Result<(), AssignError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(AssignError::InvalidParams(format!("alpha {} must be >= 0", self.alpha)));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(AssignError::InvalidParams(format!("beta {} must be >= 1", self.beta)));
        }
        Ok(())
    }

    #[inline]
    fn ratio_pow(&self, r: f64) -> f64 {
        // integer exponents are several times faster through powi
        if self.beta.fract() == 0.0 && self.beta <= 16.0 {
            r.powi(self.beta as i32)
        } else {
            r.powf(self.beta)
        }
    }

    #[inline]
    pub(crate) fn time(&self, free_flow_s: f64, capacity: f64, flow: f64) -> f64 {
        free_flow_s * (1.0 + self.alpha * self.ratio_pow(flow / capacity))
    }

    /// Time and its derivative with respect to flow.
    #[inline]
    pub(crate) fn time_and_slope(&self, free_flow_s: f64, capacity: f64, flow: f64) -> (f64, f64) {
        let r = flow / capacity;
        let p = self.ratio_pow(r);
        let slope = if flow > 0.0 {
            free_flow_s * self.alpha * self.beta * p / flow
        } else if self.beta == 1.0 {
            free_flow_s * self.alpha / capacity
        } else {
            0.0
        };
        (free_flow_s * (1.0 + self.alpha * p), slope)
    }
}

/// Congested link time in seconds: `fft * (1 + alpha * (flow / capacity)^beta)`.
pub fn vdf_time(link: &Link, flow: f64, params: &VdfParams) -> f64 {
    params.time(link.free_flow_s, link.capacity_vph, flow)
}

/// Equilibrium stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UeParams {
    /// Relative gap at which the solver stops.
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for UeParams {
    fn default() -> Self {
        UeParams { tol: 1e-4, max_iter: 200 }
    }
}

impl UeParams {
    pub fn validate(&self) -> Result<(), AssignError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(AssignError::InvalidParams(format!("tol {} must be > 0", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(AssignError::InvalidParams("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Zone-to-zone trips for one analysis period, indexed in zone-set order.
#[derive(Debug, Clone, PartialEq)]
pub struct OdMatrix {
    zone_ids: Vec<ZoneId>,
    demand: Vec<f64>,
}

impl OdMatrix {
    pub fn zeros(zones: &ZoneSet) -> OdMatrix {
        let n = zones.len();
        OdMatrix {
            zone_ids: zones.zones().iter().map(|z| z.id).collect(),
            demand: vec![0.0; n * n],
        }
    }

    /// Row-major `n x n` demand.
    pub fn from_dense(zones: &ZoneSet, demand: Vec<f64>) -> Result<OdMatrix, AssignError> {
        let n = zones.len();
        if demand.len() != n * n {
            return Err(AssignError::InvalidOd(format!("expected {} cells, got {}", n * n, demand.len())));
        }
        let mut od = OdMatrix::zeros(zones);
        for o in 0..n {
            for d in 0..n {
                od.set(o, d, demand[o * n + d])?;
            }
        }
        Ok(od)
    }

    pub fn zone_count(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn zone_ids(&self) -> &[ZoneId] {
        &self.zone_ids
    }

    #[inline]
    pub fn get(&self, origin: usize, dest: usize) -> f64 {
        self.demand[origin * self.zone_ids.len() + dest]
    }

    pub fn set(&mut self, origin: usize, dest: usize, trips: f64) -> Result<(), AssignError> {
        let n = self.zone_ids.len();
        if origin >= n || dest >= n {
            return Err(AssignError::InvalidOd(format!("cell ({origin}, {dest}) outside {n} zones")));
        }
        if !(trips >= 0.0 && trips.is_finite()) {
            return Err(AssignError::InvalidOd(format!("trips {trips} must be finite and >= 0")));
        }
        if origin == dest && trips != 0.0 {
            return Err(AssignError::InvalidOd(format!("intrazonal demand for zone {}", self.zone_ids[origin])));
        }
        self.demand[origin * n + dest] = trips;
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.demand.iter().sum()
    }

    /// Row sums.
    pub fn productions(&self) -> Vec<f64> {
        self.demand.chunks(self.zone_ids.len().max(1)).map(|r| r.iter().sum()).collect()
    }

    /// Column sums.
    pub fn attractions(&self) -> Vec<f64> {
        let n = self.zone_ids.len();
        (0..n).map(|d| (0..n).map(|o| self.get(o, d)).sum()).collect()
    }

    /// Every entry multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<OdMatrix, AssignError> {
        let mut out = self.clone();
        for v in &mut out.demand {
            *v *= k;
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(AssignError::InvalidOd(format!("scaled entry {v}")));
            }
        }
        Ok(out)
    }

    pub(crate) fn check_zones(&self, zones: &ZoneSet) -> Result<(), AssignError> {
        if self.zone_ids.len() != zones.len() || self.zone_ids.iter().zip(zones.zones()).any(|(a, z)| *a != z.id) {
            return Err(AssignError::InvalidOd("matrix zones do not match the zone set".into()));
        }
        Ok(())
    }

    /// Reads `origin_zone,dest_zone,trips`. Unlisted pairs are zero.
    pub fn read_csv<R: Read>(input: R, zones: &ZoneSet) -> Result<OdMatrix, AssignError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["origin_zone", "dest_zone", "trips"] {
            return Err(AssignError::Schema {
                line: 1,
                msg: format!("expected header origin_zone,dest_zone,trips, found {}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut od = OdMatrix::zeros(zones);
        let mut seen = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let err = |msg: String| AssignError::Schema { line, msg };
            let zone = |s: &str| -> Result<usize, AssignError> {
                let id: u32 = s.parse().map_err(|_| err(format!("bad zone id '{s}'")))?;
                zones.index_of(ZoneId(id)).ok_or_else(|| err(format!("unknown zone {id}")))
            };
            let (o, d) = (zone(&rec[0])?, zone(&rec[1])?);
            let trips: f64 = rec[2].parse().map_err(|_| err(format!("bad trips '{}'", &rec[2])))?;
            if seen.insert((o, d), line).is_some() {
                return Err(err(format!("pair {},{} listed twice", &rec[0], &rec[1])));
            }
            od.set(o, d, trips).map_err(|e| err(e.to_string()))?;
        }
        Ok(od)
    }

    /// Writes the positive cells in row-major zone order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AssignError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["origin_zone", "dest_zone", "trips"])?;
        let n = self.zone_ids.len();
        for o in 0..n {
            for d in 0..n {
                let v = self.get(o, d);
                if v > 0.0 {
                    w.write_record([self.zone_ids[o].to_string(), self.zone_ids[d].to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn centroid_indexes(network: &RoadNetwork, zones: &ZoneSet) -> Vec<usize> {
    zones
        .zones()
        .iter()
        .map(|z| network.node_index(z.centroid).expect("zone centroid must be a network node"))
        .collect()
}

/// Demand-weighted network aggregates of one assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub avg_trip_length_m: f64,
    pub avg_travel_time_s: f64,
    pub total_demand: f64,
    /// False when the assignment stopped at its iteration limit.
    pub converged: bool,
}

pub fn network_stats(result: &AssignmentResult, od: &OdMatrix, network: &RoadNetwork) -> Result<NetworkStats, AssignError> {
    let total = od.total();
    if total <= 0.0 {
        return Err(AssignError::UndefinedStats);
    }
    let (mut len, mut time) = (0.0, 0.0);
    for (i, l) in network.links().iter().enumerate() {
        len += result.flows[i] * l.length_m;
        time += result.flows[i] * result.times[i];
    }
    Ok(NetworkStats {
        avg_trip_length_m: len / total,
        avg_travel_time_s: time / total,
        total_demand: total,
        converged: result.converged,
    })
}

/// Writes `link_id,flow,time_s` in network link order.
pub fn write_assignment_csv<W: Write>(result: &AssignmentResult, network: &RoadNetwork, out: W) -> Result<(), AssignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["link_id", "flow", "time_s"])?;
    for (i, l) in network.links().iter().enumerate() {
        w.write_record([l.id.to_string(), result.flows[i].to_string(), result.times[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an assignment written by [`write_assignment_csv`] back into link
/// flow and time maps.
pub fn read_assignment_csv<R: Read>(input: R) -> Result<Vec<(LinkId, f64, f64)>, AssignError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |f: &str| AssignError::Schema { line, msg: format!("bad {f}") };
        rows.push((
            rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("link_id"))?,
            rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("flow"))?,
            rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("time_s"))?,
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{NetworkMode, Node, NodeId, RoadClass};

    fn link(fft: f64, cap: f64) -> Link {
        Link {
            id: LinkId(1),
            from: NodeId(1),
            to: NodeId(2),
            length_m: 1000.0,
            free_flow_s: fft,
            capacity_vph: cap,
            class: RoadClass::Primary,
        }
    }

    #[test]
    fn vdf_values() {
        let p = VdfParams::default();
        assert_eq!(vdf_time(&link(100.0, 500.0), 0.0, &p), 100.0);
        assert!((vdf_time(&link(100.0, 500.0), 500.0, &p) - 115.0).abs() < 1e-12);
        let flat = VdfParams { alpha: 0.0, beta: 4.0 };
        assert_eq!(vdf_time(&link(100.0, 500.0), 1e6, &flat), 100.0);
        assert!(VdfParams { alpha: -1.0, beta: 4.0 }.validate().is_err());
        assert!(VdfParams { alpha: 0.1, beta: 0.5 }.validate().is_err());
    }

    fn three_zones() -> (RoadNetwork, ZoneSet) {
        let nodes = (1..=3).map(|i| Node { id: NodeId(i), lat: 0.0, lon: i as f64 * 0.01 }).collect();
        let links = vec![
            Link { id: LinkId(1), from: NodeId(1), to: NodeId(2), ..link(100.0, 500.0) },
            Link { id: LinkId(2), from: NodeId(2), to: NodeId(3), ..link(100.0, 500.0) },
        ];
        let net = RoadNetwork::new(nodes, links, NetworkMode::City).unwrap();
        let zones = ZoneSet::from_centroids(&net, &[NodeId(1), NodeId(2), NodeId(3)]).unwrap();
        (net, zones)
    }

    #[test]
    fn od_invariants_and_sums() {
        let (_, zones) = three_zones();
        let mut od = OdMatrix::zeros(&zones);
        assert!(od.set(1, 1, 3.0).is_err());
        assert!(od.set(0, 1, -1.0).is_err());
        assert!(od.set(0, 1, f64::NAN).is_err());
        od.set(0, 1, 10.0).unwrap();
        od.set(0, 2, 20.0).unwrap();
        od.set(2, 1, 5.0).unwrap();
        assert_eq!(od.total(), 35.0);
        assert_eq!(od.productions(), vec![30.0, 0.0, 5.0]);
        assert_eq!(od.attractions(), vec![0.0, 15.0, 20.0]);
    }

    #[test]
    fn od_csv_round_trip() {
        let (_, zones) = three_zones();
        let od = OdMatrix::from_dense(&zones, vec![0.0, 1.5, 2.0, 0.0, 0.0, 0.0, 7.0, 0.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        od.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "origin_zone,dest_zone,trips\n1,2,1.5\n1,3,2\n3,1,7\n"
        );
        assert_eq!(OdMatrix::read_csv(buf.as_slice(), &zones).unwrap(), od);
        let dup = "origin_zone,dest_zone,trips\n1,2,1\n1,2,1\n";
        assert!(matches!(OdMatrix::read_csv(dup.as_bytes(), &zones), Err(AssignError::Schema { line: 3, .. })));
        let unknown = "origin_zone,dest_zone,trips\n1,9,1\n";
        assert!(OdMatrix::read_csv(unknown.as_bytes(), &zones).is_err());
    }

    #[test]
    fn stats_single_path() {
        let (net, zones) = three_zones();
        let mut od = OdMatrix::zeros(&zones);
        od.set(0, 2, 10.0).unwrap();
        let flat = VdfParams { alpha: 0.0, beta: 4.0 };
        let r = user_equilibrium(&net, &zones, &od, &flat, &UeParams::default()).unwrap();
        let s = network_stats(&r, &od, &net).unwrap();
        assert_eq!((s.avg_trip_length_m, s.avg_travel_time_s, s.total_demand), (2000.0, 200.0, 10.0));
        let r2 = user_equilibrium(&net, &zones, &od.scaled(2.0).unwrap(), &flat, &UeParams::default()).unwrap();
        let s2 = network_stats(&r2, &od.scaled(2.0).unwrap(), &net).unwrap();
        assert_eq!((s2.avg_trip_length_m, s2.avg_travel_time_s, s2.total_demand), (2000.0, 200.0, 20.0));
        assert!(matches!(
            network_stats(&r, &OdMatrix::zeros(&zones), &net),
            Err(AssignError::UndefinedStats)
        ));
    }
}
