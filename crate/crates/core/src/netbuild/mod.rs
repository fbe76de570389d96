//! Directed road-network graph, zoning and external segment lookup.

mod lookup;
mod osm;
mod zones;

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lookup::{link_lookup, SegmentMap, UnmatchedReport};
pub use osm::{parse_network, parse_network_str, ClassDefault, ClassTable};
pub use zones::{build_zones, Zone, ZoneId, ZoneSet};

/// Mean Earth radius used for great-circle lengths, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("no drivable ways inside the bounding box")]
    EmptyNetwork,
    #[error("degenerate bounding box: {0}")]
    BadBbox(String),
    #[error("invalid node {id}: {reason}")]
    InvalidNode { id: NodeId, reason: String },
    #[error("invalid link {id}: {reason}")]
    InvalidLink { id: LinkId, reason: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("zoning failed: {0}")]
    Zoning(String),
    #[error("segment map: {0}")]
    SegmentMap(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Opaque node identifier (OpenStreetMap node ids fit here).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub i64);

/// Opaque link identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for LinkId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(LinkId)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(NodeId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

/// Functional road class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadClass {
    Motorway,
    Trunk,
    Primary,
    Secondary,
    Tertiary,
    Residential,
}

impl RoadClass {
    pub const ALL: [RoadClass; 6] = [
        RoadClass::Motorway,
        RoadClass::Trunk,
        RoadClass::Primary,
        RoadClass::Secondary,
        RoadClass::Tertiary,
        RoadClass::Residential,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoadClass::Motorway => "motorway",
            RoadClass::Trunk => "trunk",
            RoadClass::Primary => "primary",
            RoadClass::Secondary => "secondary",
            RoadClass::Tertiary => "tertiary",
            RoadClass::Residential => "residential",
        }
    }

    /// Maps an OSM `highway=*` value onto a drivable class.
    pub fn from_highway_tag(tag: &str) -> Option<RoadClass> {
        Some(match tag {
            "motorway" | "motorway_link" => RoadClass::Motorway,
            "trunk" | "trunk_link" => RoadClass::Trunk,
            "primary" | "primary_link" => RoadClass::Primary,
            "secondary" | "secondary_link" => RoadClass::Secondary,
            "tertiary" | "tertiary_link" => RoadClass::Tertiary,
            "residential" | "unclassified" | "living_street" => RoadClass::Residential,
            _ => return None,
        })
    }
}

impl fmt::Display for RoadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoadClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoadClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown road class '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub free_flow_s: f64,
    pub capacity_vph: f64,
    pub class: RoadClass,
}

/// Network flavour: urban street grid or intercity highway network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkMode {
    #[default]
    City,
    Highway,
}

impl NetworkMode {
    /// Shortest link length kept in reliability and network-average metrics.
    pub fn default_min_length_m(self) -> f64 {
        match self {
            NetworkMode::City => 100.0,
            NetworkMode::Highway => 500.0,
        }
    }

    pub(crate) fn admits(self, class: RoadClass) -> bool {
        match self {
            NetworkMode::City => true,
            NetworkMode::Highway => matches!(
                class,
                RoadClass::Motorway | RoadClass::Trunk | RoadClass::Primary | RoadClass::Secondary
            ),
        }
    }
}

impl FromStr for NetworkMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "city" => Ok(NetworkMode::City),
            "highway" => Ok(NetworkMode::Highway),
            other => Err(format!("unknown network mode '{other}'")),
        }
    }
}

/// Bounding rectangle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl Bbox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Bbox, NetError> {
        let b = Bbox {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Bbox, NetError> {
        Bbox::new(a[0], a[1], a[2], a[3])
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let finite = [self.min_lon, self.min_lat, self.max_lon, self.max_lat]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(NetError::BadBbox("non-finite coordinate".into()));
        }
        if !(self.min_lon < self.max_lon && self.min_lat < self.max_lat) {
            return Err(NetError::BadBbox(format!(
                "min must be below max: {:?}",
                self
            )));
        }
        if self.min_lat < -90.0 || self.max_lat > 90.0 || self.min_lon < -180.0 || self.max_lon > 180.0 {
            return Err(NetError::BadBbox("outside WGS84 range".into()));
        }
        Ok(())
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat <= self.max_lat && lon >= self.min_lon && lon <= self.max_lon
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Directed road network.
///
/// Nodes are kept sorted by id and links sorted by id, so positional indexes
/// are stable for a given network and every derived computation can work on
/// plain vectors aligned with [`RoadNetwork::links`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    mode: NetworkMode,
}

impl RoadNetwork {
    /// Validates and assembles a network. Endpoints must exist, ids must be
    /// unique, and every link needs positive length, free-flow time and
    /// capacity with distinct endpoints.
    pub fn new(mut nodes: Vec<Node>, mut links: Vec<Link>, mode: NetworkMode) -> Result<RoadNetwork, NetError> {
        nodes.sort_by_key(|n| n.id);
        links.sort_by_key(|l| l.id);
        for w in nodes.windows(2) {
            if w[0].id == w[1].id {
                return Err(NetError::DuplicateId {
                    kind: "node",
                    id: w[0].id.to_string(),
                });
            }
        }
        for w in links.windows(2) {
            if w[0].id == w[1].id {
                return Err(NetError::DuplicateId {
                    kind: "link",
                    id: w[0].id.to_string(),
                });
            }
        }
        for n in &nodes {
            if !(-90.0..=90.0).contains(&n.lat) || !(-180.0..=180.0).contains(&n.lon) {
                return Err(NetError::InvalidNode {
                    id: n.id,
                    reason: format!("coordinates out of range ({}, {})", n.lat, n.lon),
                });
            }
        }
        let net = RoadNetwork { nodes, links, mode };
        for l in &net.links {
            let bad = |reason: String| NetError::InvalidLink { id: l.id, reason };
            if !(l.length_m > 0.0 && l.length_m.is_finite()) {
                return Err(bad(format!("length {} must be positive", l.length_m)));
            }
            if !(l.free_flow_s > 0.0 && l.free_flow_s.is_finite()) {
                return Err(bad(format!("free-flow time {} must be positive", l.free_flow_s)));
            }
            if !(l.capacity_vph > 0.0 && l.capacity_vph.is_finite()) {
                return Err(bad(format!("capacity {} must be positive", l.capacity_vph)));
            }
            if l.from == l.to {
                return Err(bad("self-loop".into()));
            }
            if net.node_index(l.from).is_none() || net.node_index(l.to).is_none() {
                return Err(bad("endpoint not in node set".into()));
            }
        }
        Ok(net)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn mode(&self) -> NetworkMode {
        self.mode
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn link_index(&self, id: LinkId) -> Option<usize> {
        self.links.binary_search_by_key(&id, |l| l.id).ok()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_index(id).map(|i| &self.nodes[i])
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.link_index(id).map(|i| &self.links[i])
    }

    /// Bounding rectangle of the node set, or `None` for an empty network.
    pub fn extent(&self) -> Option<Bbox> {
        let first = self.nodes.first()?;
        let mut b = Bbox {
            min_lon: first.lon,
            min_lat: first.lat,
            max_lon: first.lon,
            max_lat: first.lat,
        };
        for n in &self.nodes {
            b.min_lon = b.min_lon.min(n.lon);
            b.max_lon = b.max_lon.max(n.lon);
            b.min_lat = b.min_lat.min(n.lat);
            b.max_lat = b.max_lat.max(n.lat);
        }
        Some(b)
    }

    /// Number of weakly connected components (isolated nodes count).
    pub fn weak_component_count(&self) -> usize {
        let labels = weak_components(self.nodes.len(), self.links.iter().map(|l| {
            (self.node_index(l.from).unwrap(), self.node_index(l.to).unwrap())
        }));
        labels.iter().collect::<HashSet<_>>().len()
    }

    /// Writes the `nodes` (id,lat,lon) and `links`
    /// (id,from,to,length_m,fft_s,capacity_vph,class) tables.
    pub fn write_csv<W1: Write, W2: Write>(&self, nodes: W1, links: W2) -> Result<(), NetError> {
        let mut w = csv::Writer::from_writer(nodes);
        w.write_record(["id", "lat", "lon"])?;
        for n in &self.nodes {
            w.write_record([n.id.to_string(), n.lat.to_string(), n.lon.to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(links);
        w.write_record(["id", "from", "to", "length_m", "fft_s", "capacity_vph", "class"])?;
        for l in &self.links {
            w.write_record([
                l.id.to_string(),
                l.from.to_string(),
                l.to.to_string(),
                l.length_m.to_string(),
                l.free_flow_s.to_string(),
                l.capacity_vph.to_string(),
                l.class.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R1: Read, R2: Read>(nodes: R1, links: R2, mode: NetworkMode) -> Result<RoadNetwork, NetError> {
        #[derive(Deserialize)]
        struct NodeRow {
            id: i64,
            lat: f64,
            lon: f64,
        }
        #[derive(Deserialize)]
        struct LinkRow {
            id: u64,
            from: i64,
            to: i64,
            length_m: f64,
            fft_s: f64,
            capacity_vph: f64,
            class: String,
        }
        let mut node_vec = Vec::new();
        for row in csv::Reader::from_reader(nodes).deserialize::<NodeRow>() {
            let row = row?;
            node_vec.push(Node {
                id: NodeId(row.id),
                lat: row.lat,
                lon: row.lon,
            });
        }
        let mut link_vec = Vec::new();
        for row in csv::Reader::from_reader(links).deserialize::<LinkRow>() {
            let row = row?;
            let class = row.class.parse().map_err(NetError::Parse)?;
            link_vec.push(Link {
                id: LinkId(row.id),
                from: NodeId(row.from),
                to: NodeId(row.to),
                length_m: row.length_m,
                free_flow_s: row.fft_s,
                capacity_vph: row.capacity_vph,
                class,
            });
        }
        RoadNetwork::new(node_vec, link_vec, mode)
    }
}

/// Union-find labelling of weakly connected components; labels are the
/// smallest member index of each component.
pub(crate) fn weak_components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}
