//! Seeded synthetic inputs: grid road networks, demand matrices,
//! observation panels and OpenStreetMap extracts. Used by the bundled
//! fixtures, tests and benchmarks.

use std::fmt::Write as _;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assign::OdMatrix;
use crate::estimate::{gravity_shape, Chromosome};
use crate::ingest::{DepartureSlot, ObservationPanel, TravelTimeObservation};
use crate::netbuild::{haversine_m, Link, LinkId, NetworkMode, Node, NodeId, RoadClass, RoadNetwork, ZoneSet};

const METERS_PER_DEG_LAT: f64 = 111_195.0;

/// Regular street grid with two-way links between orthogonal neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub spacing_m: f64,
    /// South-west corner.
    pub origin: (f64, f64),
    /// Every this many grid lines is a primary arterial, the rest secondary.
    pub arterial_every: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 7,
            cols: 7,
            spacing_m: 400.0,
            origin: (50.40, 30.45),
            arterial_every: 3,
        }
    }
}

impl GridSpec {
    /// Square grid with at least `links` directed links.
    pub fn with_min_links(links: usize) -> GridSpec {
        let mut k = 2u32;
        while 4 * k as usize * (k as usize - 1) < links {
            k += 1;
        }
        GridSpec { rows: k, cols: k, ..GridSpec::default() }
    }

    pub fn link_count(&self) -> usize {
        let (r, c) = (self.rows as usize, self.cols as usize);
        2 * (r * (c - 1) + c * (r - 1))
    }

    fn node_id(&self, r: u32, c: u32) -> NodeId {
        NodeId((r * self.cols + c) as i64 + 1)
    }

    fn lat_lon(&self, r: u32, c: u32) -> (f64, f64) {
        let (lat0, lon0) = self.origin;
        let dlat = self.spacing_m / METERS_PER_DEG_LAT;
        let dlon = self.spacing_m / (METERS_PER_DEG_LAT * lat0.to_radians().cos());
        (lat0 + r as f64 * dlat, lon0 + c as f64 * dlon)
    }

    fn class(&self, r: u32, c: u32, horizontal: bool) -> RoadClass {
        let line = if horizontal { r } else { c };
        if self.arterial_every > 0 && line % self.arterial_every == 0 {
            RoadClass::Primary
        } else {
            RoadClass::Secondary
        }
    }

    /// Neighbour pairs as `(r1, c1, r2, c2, horizontal)`, each once.
    fn edges(&self) -> Vec<(u32, u32, u32, u32, bool)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c + 1 < self.cols {
                    out.push((r, c, r, c + 1, true));
                }
                if r + 1 < self.rows {
                    out.push((r, c, r + 1, c, false));
                }
            }
        }
        out
    }
}

fn class_speed_capacity(class: RoadClass) -> (f64, f64) {
    match class {
        RoadClass::Primary => (60.0, 2400.0),
        _ => (50.0, 900.0),
    }
}

pub fn grid_network(spec: &GridSpec) -> RoadNetwork {
    let mut nodes = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let (lat, lon) = spec.lat_lon(r, c);
            nodes.push(Node { id: spec.node_id(r, c), lat, lon });
        }
    }
    let mut links = Vec::new();
    for (r1, c1, r2, c2, horizontal) in spec.edges() {
        let class = spec.class(r1, c1, horizontal);
        let (speed, cap) = class_speed_capacity(class);
        let (a, b) = (spec.lat_lon(r1, c1), spec.lat_lon(r2, c2));
        let length_m = haversine_m(a.0, a.1, b.0, b.1);
        for (from, to) in [(spec.node_id(r1, c1), spec.node_id(r2, c2)), (spec.node_id(r2, c2), spec.node_id(r1, c1))] {
            links.push(Link {
                id: LinkId(links.len() as u64 + 1),
                from,
                to,
                length_m,
                free_flow_s: length_m / (speed / 3.6),
                capacity_vph: cap,
                class,
            });
        }
    }
    RoadNetwork::new(nodes, links, NetworkMode::City).expect("grid network is valid")
}

/// OpenStreetMap XML for the same grid: one way per grid line, tagged with
/// the line's class and speed.
pub fn grid_osm(spec: &GridSpec) -> String {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"netpulse-synthetic\">\n");
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let (lat, lon) = spec.lat_lon(r, c);
            let _ = writeln!(s, "  <node id=\"{}\" lat=\"{lat:.7}\" lon=\"{lon:.7}\"/>", spec.node_id(r, c));
        }
    }
    let mut way_id = 1;
    let mut way = |s: &mut String, refs: Vec<NodeId>, class: RoadClass| {
        let (speed, _) = class_speed_capacity(class);
        let _ = writeln!(s, "  <way id=\"{way_id}\">");
        for n in refs {
            let _ = writeln!(s, "    <nd ref=\"{n}\"/>");
        }
        let _ = writeln!(s, "    <tag k=\"highway\" v=\"{}\"/>", class.as_str());
        let _ = writeln!(s, "    <tag k=\"maxspeed\" v=\"{speed}\"/>");
        let _ = writeln!(s, "  </way>");
        way_id += 1;
    };
    for r in 0..spec.rows {
        way(&mut s, (0..spec.cols).map(|c| spec.node_id(r, c)).collect(), spec.class(r, 0, true));
    }
    for c in 0..spec.cols {
        way(&mut s, (0..spec.rows).map(|r| spec.node_id(r, c)).collect(), spec.class(0, c, false));
    }
    // a footway that the parser must ignore
    let _ = writeln!(
        s,
        "  <way id=\"{way_id}\">\n    <nd ref=\"{}\"/>\n    <nd ref=\"{}\"/>\n    <tag k=\"highway\" v=\"footway\"/>\n  </way>",
        spec.node_id(0, 0),
        spec.node_id(1, 1)
    );
    s.push_str("</osm>\n");
    s
}

/// Random demand with every off-diagonal cell uniform in `[lo, hi)`.
pub fn random_od(zones: &ZoneSet, lo: f64, hi: f64, seed: u64) -> OdMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut od = OdMatrix::zeros(zones);
    let n = zones.len();
    for o in 0..n {
        for d in 0..n {
            if o != d {
                od.set(o, d, rng.gen_range(lo..hi)).unwrap();
            }
        }
    }
    od
}

/// Gravity-pattern demand totalling about `total`, each cell perturbed by
/// a log-normal factor with log standard deviation `sigma`.
pub fn gravity_od(network: &RoadNetwork, zones: &ZoneSet, total: f64, sigma: f64, seed: u64) -> OdMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = gravity_shape(network, zones);
    let cells = shape
        .cells
        .iter()
        .map(|&s| {
            let z: f64 = rng.sample(StandardNormal);
            s * total * (sigma * z).exp()
        })
        .collect();
    Chromosome { cells }.decode(zones).expect("shape matches zone count")
}

/// Observation panel over `dates`: every link and slot gets
/// `free_flow * factor` where the factor is a slot-dependent base plus
/// uniform noise of relative amplitude `noise`, rounded to 0.1 s.
pub fn synthetic_panel(network: &RoadNetwork, dates: &[NaiveDate], noise: f64, seed: u64) -> ObservationPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = Vec::new();
    for &date in dates {
        for l in network.links() {
            for slot in DepartureSlot::ALL {
                let base = match slot {
                    DepartureSlot::Morning => 1.3,
                    DepartureSlot::Afternoon => 1.1,
                    DepartureSlot::Evening => 1.4,
                };
                let factor = base * (1.0 + noise * rng.gen_range(-1.0..1.0));
                let t = (l.free_flow_s * factor * 10.0).round() / 10.0;
                obs.push(TravelTimeObservation {
                    link: l.id,
                    date,
                    slot,
                    travel_time_s: t.max(0.1),
                    free_flow_s: None,
                });
            }
        }
    }
    ObservationPanel::from_observations(obs).expect("synthetic observations are unique")
}

/// Every date from `start` to `end` inclusive.
pub fn date_range(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start.iter_days().take_while(|d| *d <= end).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{build_zones, parse_network_str, Bbox, ClassTable};

    #[test]
    fn grid_sizes() {
        let spec = GridSpec::default();
        let net = grid_network(&spec);
        assert_eq!(net.links().len(), spec.link_count());
        assert_eq!(net.links().len(), 168);
        assert!(GridSpec::with_min_links(10_000).link_count() >= 10_000);
    }

    #[test]
    fn osm_parses_to_same_link_count() {
        let spec = GridSpec::default();
        let bbox = Bbox::new(30.0, 50.0, 31.0, 51.0).unwrap();
        let net = parse_network_str(&grid_osm(&spec), bbox, NetworkMode::City, &ClassTable::default()).unwrap();
        assert_eq!(net.links().len(), spec.link_count());
        let zones = build_zones(&net, 3, 3).unwrap();
        assert_eq!(zones.len(), 9);
    }

    #[test]
    fn seeded_outputs_repeat() {
        let net = grid_network(&GridSpec::default());
        let zones = build_zones(&net, 3, 3).unwrap();
        assert_eq!(random_od(&zones, 0.0, 5.0, 7), random_od(&zones, 0.0, 5.0, 7));
        let d = date_range(NaiveDate::from_ymd_opt(2022, 3, 1).unwrap(), NaiveDate::from_ymd_opt(2022, 3, 3).unwrap());
        assert_eq!(d.len(), 3);
        assert_eq!(synthetic_panel(&net, &d, 0.1, 3), synthetic_panel(&net, &d, 0.1, 3));
    }
}
