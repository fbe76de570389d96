//! OpenStreetMap XML extract to routing graph.

use std::collections::{BTreeMap, HashMap};

use log::info;
use serde::{Deserialize, Serialize};

use super::{haversine_m, weak_components, Bbox, Link, LinkId, NetError, NetworkMode, Node, NodeId, RoadClass, RoadNetwork};

/// Speed and per-lane capacity used when a way carries no explicit tags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDefault {
    pub speed_kmh: f64,
    pub capacity_per_lane: f64,
}

/// Per-class defaults. Every field can be overridden from the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassTable {
    pub motorway: ClassDefault,
    pub trunk: ClassDefault,
    pub primary: ClassDefault,
    pub secondary: ClassDefault,
    pub tertiary: ClassDefault,
    pub residential: ClassDefault,
}

impl Default for ClassTable {
    fn default() -> Self {
        let d = |speed_kmh, capacity_per_lane| ClassDefault {
            speed_kmh,
            capacity_per_lane,
        };
        ClassTable {
            motorway: d(110.0, 2000.0),
            trunk: d(90.0, 1800.0),
            primary: d(60.0, 1200.0),
            secondary: d(50.0, 900.0),
            tertiary: d(40.0, 600.0),
            residential: d(40.0, 600.0),
        }
    }
}

impl ClassTable {
    pub fn get(&self, class: RoadClass) -> ClassDefault {
        match class {
            RoadClass::Motorway => self.motorway,
            RoadClass::Trunk => self.trunk,
            RoadClass::Primary => self.primary,
            RoadClass::Secondary => self.secondary,
            RoadClass::Tertiary => self.tertiary,
            RoadClass::Residential => self.residential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Direction {
    Both,
    Forward,
    Backward,
}

struct Way<'a> {
    id: i64,
    refs: Vec<i64>,
    tags: HashMap<&'a str, &'a str>,
}

/// Parses maxspeed values like `50`, `50 km/h`, `30 mph`. Returns km/h.
fn parse_speed(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    let end = raw
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(raw.len());
    let value: f64 = raw[..end].parse().ok()?;
    let unit = raw[end..].trim();
    let kmh = match unit {
        "" | "km/h" | "kmh" | "kph" => value,
        "mph" => value * 1.609344,
        "knots" => value * 1.852,
        _ => return None,
    };
    (kmh > 0.0 && kmh.is_finite()).then_some(kmh)
}

fn parse_lanes(raw: Option<&&str>) -> Option<f64> {
    let v: f64 = raw?.trim().parse().ok()?;
    (v >= 1.0 && v.is_finite()).then_some(v)
}

fn direction(tags: &HashMap<&str, &str>, class: RoadClass) -> Direction {
    match tags.get("oneway").copied() {
        Some("yes") | Some("true") | Some("1") => Direction::Forward,
        Some("-1") | Some("reverse") => Direction::Backward,
        Some("no") | Some("false") | Some("0") => Direction::Both,
        _ => {
            if class == RoadClass::Motorway || tags.get("junction").copied() == Some("roundabout") {
                Direction::Forward
            } else {
                Direction::Both
            }
        }
    }
}

fn is_drivable(tags: &HashMap<&str, &str>) -> bool {
    let blocked = |k: &str| matches!(tags.get(k).copied(), Some("no") | Some("private"));
    tags.get("area").copied() != Some("yes") && !blocked("access") && !blocked("motor_vehicle")
}

/// Parses an OSM XML extract file into a routing network.
pub fn parse_network(
    path: &std::path::Path,
    bbox: Bbox,
    mode: NetworkMode,
    classes: &ClassTable,
) -> Result<RoadNetwork, NetError> {
    let text = std::fs::read_to_string(path)?;
    parse_network_str(&text, bbox, mode, classes)
}

/// Builds the largest weakly connected routing graph from an OSM XML
/// document.
///
/// Ways are clipped to the bounding box and split at intersections; each
/// segment becomes one directed link per permitted direction. Link ids are
/// assigned densely after component extraction, in way-id order, so the
/// same document always yields the same network.
pub fn parse_network_str(
    document: &str,
    bbox: Bbox,
    mode: NetworkMode,
    classes: &ClassTable,
) -> Result<RoadNetwork, NetError> {
    bbox.validate()?;
    let doc = roxmltree::Document::parse(document).map_err(|e| NetError::Parse(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "osm" {
        return Err(NetError::Parse(format!(
            "expected <osm> root, found <{}>",
            root.tag_name().name()
        )));
    }

    let attr = |n: roxmltree::Node, k: &str| -> Result<String, NetError> {
        n.attribute(k)
            .map(str::to_owned)
            .ok_or_else(|| NetError::Parse(format!("<{}> missing '{k}' attribute", n.tag_name().name())))
    };
    let num = |n: roxmltree::Node, k: &str| -> Result<f64, NetError> {
        attr(n, k)?
            .parse::<f64>()
            .map_err(|e| NetError::Parse(format!("bad '{k}': {e}")))
    };
    let int = |n: roxmltree::Node, k: &str| -> Result<i64, NetError> {
        attr(n, k)?
            .parse::<i64>()
            .map_err(|e| NetError::Parse(format!("bad '{k}': {e}")))
    };

    let mut coords: HashMap<i64, (f64, f64)> = HashMap::new();
    let mut ways: Vec<Way> = Vec::new();
    for el in root.children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let (id, lat, lon) = (int(el, "id")?, num(el, "lat")?, num(el, "lon")?);
                if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                    return Err(NetError::Parse(format!("node {id} has out-of-range coordinates")));
                }
                if bbox.contains(lat, lon) {
                    coords.insert(id, (lat, lon));
                }
            }
            "way" => {
                let id = int(el, "id")?;
                let mut refs = Vec::new();
                let mut tags = HashMap::new();
                for c in el.children().filter(|n| n.is_element()) {
                    match c.tag_name().name() {
                        "nd" => refs.push(int(c, "ref")?),
                        "tag" => {
                            let k = c.attribute("k").ok_or_else(|| NetError::Parse("tag without k".into()))?;
                            let v = c.attribute("v").ok_or_else(|| NetError::Parse("tag without v".into()))?;
                            tags.insert(k, v);
                        }
                        _ => {}
                    }
                }
                ways.push(Way { id, refs, tags });
            }
            _ => {}
        }
    }
    ways.sort_by_key(|w| w.id);

    // Clip each drivable way to runs of consecutive in-bbox nodes.
    struct Run<'w> {
        way: &'w Way<'w>,
        class: RoadClass,
        nodes: Vec<i64>,
    }
    let mut runs: Vec<Run> = Vec::new();
    for way in &ways {
        let Some(class) = way.tags.get("highway").and_then(|t| RoadClass::from_highway_tag(t)) else {
            continue;
        };
        if !mode.admits(class) || !is_drivable(&way.tags) {
            continue;
        }
        let mut current: Vec<i64> = Vec::new();
        for &r in &way.refs {
            if coords.contains_key(&r) {
                if current.last() != Some(&r) {
                    current.push(r);
                }
            } else if !current.is_empty() {
                runs.push(Run {
                    way,
                    class,
                    nodes: std::mem::take(&mut current),
                });
            }
        }
        if !current.is_empty() {
            runs.push(Run { way, class, nodes: current });
        }
    }
    runs.retain(|r| r.nodes.len() >= 2);

    // Split points: run endpoints and any node referenced more than once.
    let mut usage: HashMap<i64, u32> = HashMap::new();
    for run in &runs {
        for &n in &run.nodes {
            *usage.entry(n).or_default() += 1;
        }
        for end in [run.nodes[0], *run.nodes.last().unwrap()] {
            *usage.entry(end).or_default() += 1;
        }
    }

    struct RawLink {
        from: i64,
        to: i64,
        length_m: f64,
        free_flow_s: f64,
        capacity_vph: f64,
        class: RoadClass,
    }
    let mut raw: Vec<RawLink> = Vec::new();
    for run in &runs {
        let tags = &run.way.tags;
        let defaults = classes.get(run.class);
        let speed_kmh = tags
            .get("maxspeed")
            .and_then(|s| parse_speed(s))
            .unwrap_or(defaults.speed_kmh);
        let dir = direction(tags, run.class);
        let total_lanes = parse_lanes(tags.get("lanes"));
        let lanes_for = |key: &str| -> f64 {
            if let Some(l) = parse_lanes(tags.get(key)) {
                return l;
            }
            match (dir, total_lanes) {
                (Direction::Both, Some(l)) => (l / 2.0).max(1.0),
                (_, Some(l)) => l,
                (_, None) => 1.0,
            }
        };
        let fwd_lanes = lanes_for("lanes:forward");
        let bwd_lanes = lanes_for("lanes:backward");

        let mut start = 0;
        for i in 1..run.nodes.len() {
            let split = i == run.nodes.len() - 1 || usage[&run.nodes[i]] > 1;
            if !split {
                continue;
            }
            let seg = &run.nodes[start..=i];
            start = i;
            let (a, b) = (seg[0], *seg.last().unwrap());
            let length_m: f64 = seg
                .windows(2)
                .map(|w| {
                    let (p, q) = (coords[&w[0]], coords[&w[1]]);
                    haversine_m(p.0, p.1, q.0, q.1)
                })
                .sum();
            if a == b || !(length_m > 0.0) {
                continue;
            }
            let free_flow_s = length_m / (speed_kmh / 3.6);
            if dir != Direction::Backward {
                raw.push(RawLink {
                    from: a,
                    to: b,
                    length_m,
                    free_flow_s,
                    capacity_vph: defaults.capacity_per_lane * fwd_lanes,
                    class: run.class,
                });
            }
            if dir != Direction::Forward {
                raw.push(RawLink {
                    from: b,
                    to: a,
                    length_m,
                    free_flow_s,
                    capacity_vph: defaults.capacity_per_lane * bwd_lanes,
                    class: run.class,
                });
            }
        }
    }
    if raw.is_empty() {
        return Err(NetError::EmptyNetwork);
    }

    // Largest weakly connected component; ties go to the component holding
    // the smallest node id.
    let mut node_ids: Vec<i64> = raw.iter().flat_map(|l| [l.from, l.to]).collect();
    node_ids.sort_unstable();
    node_ids.dedup();
    let pos: HashMap<i64, usize> = node_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let labels = weak_components(node_ids.len(), raw.iter().map(|l| (pos[&l.from], pos[&l.to])));
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in &labels {
        *sizes.entry(l).or_default() += 1;
    }
    let keep = sizes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&label, _)| label)
        .unwrap();
    let discarded = sizes.len() - 1;
    if discarded > 0 {
        info!(
            "discarded {discarded} disconnected fragment(s) ({} of {} nodes)",
            node_ids.len() - sizes[&keep],
            node_ids.len()
        );
    }

    let nodes: Vec<Node> = node_ids
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == keep)
        .map(|(&id, _)| {
            let (lat, lon) = coords[&id];
            Node { id: NodeId(id), lat, lon }
        })
        .collect();
    let links: Vec<Link> = raw
        .into_iter()
        .filter(|l| labels[pos[&l.from]] == keep)
        .enumerate()
        .map(|(i, l)| Link {
            id: LinkId(i as u64 + 1),
            from: NodeId(l.from),
            to: NodeId(l.to),
            length_m: l.length_m,
            free_flow_s: l.free_flow_s,
            capacity_vph: l.capacity_vph,
            class: l.class,
        })
        .collect();
    RoadNetwork::new(nodes, links, mode)
}
