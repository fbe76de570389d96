//! Uniform-grid zoning with nearest-node centroids.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{haversine_m, Bbox, LinkId, NetError, NodeId, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub u32);

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub centroid: NodeId,
    /// Links incident to the centroid node.
    pub connectors: Vec<LinkId>,
    pub row: u32,
    pub col: u32,
}

/// Demand zones. Zone order is the canonical OD-matrix index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSet {
    zones: Vec<Zone>,
    bbox: Bbox,
    grid: Option<(u32, u32)>,
}

fn incident_links(network: &RoadNetwork, node: NodeId) -> Vec<LinkId> {
    network
        .links()
        .iter()
        .filter(|l| l.from == node || l.to == node)
        .map(|l| l.id)
        .collect()
}

impl ZoneSet {
    fn validate(zones: &[Zone], network: &RoadNetwork) -> Result<(), NetError> {
        let mut ids = HashSet::new();
        let mut centroids = HashSet::new();
        for z in zones {
            if !ids.insert(z.id) {
                return Err(NetError::DuplicateId {
                    kind: "zone",
                    id: z.id.to_string(),
                });
            }
            if !centroids.insert(z.centroid) {
                return Err(NetError::Zoning(format!("centroid {} used by two zones", z.centroid)));
            }
            if network.node_index(z.centroid).is_none() {
                return Err(NetError::Zoning(format!("centroid {} is not a network node", z.centroid)));
            }
            if z.connectors.is_empty() {
                return Err(NetError::Zoning(format!("zone {} has no connector links", z.id)));
            }
        }
        Ok(())
    }

    /// One zone per listed centroid node, ids 1..=n in the given order.
    /// Useful for hand-built networks where grid zoning is not wanted.
    pub fn from_centroids(network: &RoadNetwork, centroids: &[NodeId]) -> Result<ZoneSet, NetError> {
        let zones: Vec<Zone> = centroids
            .iter()
            .enumerate()
            .map(|(i, &c)| Zone {
                id: ZoneId(i as u32 + 1),
                centroid: c,
                connectors: incident_links(network, c),
                row: 0,
                col: i as u32,
            })
            .collect();
        ZoneSet::validate(&zones, network)?;
        let bbox = network
            .extent()
            .ok_or_else(|| NetError::Zoning("empty network".into()))?;
        Ok(ZoneSet { zones, bbox, grid: None })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn bbox(&self) -> Bbox {
        self.bbox
    }

    /// `(rows, cols)` when the zones came from grid partitioning.
    pub fn grid(&self) -> Option<(u32, u32)> {
        self.grid
    }

    pub fn index_of(&self, id: ZoneId) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }

    /// Cell rectangle of a grid zone as `[lon, lat]` ring, closed.
    pub fn cell_ring(&self, zone: &Zone) -> Option<Vec<[f64; 2]>> {
        let (rows, cols) = self.grid?;
        let b = self.bbox;
        let h = (b.max_lat - b.min_lat) / rows as f64;
        let w = (b.max_lon - b.min_lon) / cols as f64;
        let (s, west) = (b.min_lat + h * zone.row as f64, b.min_lon + w * zone.col as f64);
        let (n, east) = (s + h, west + w);
        Some(vec![[west, s], [east, s], [east, n], [west, n], [west, s]])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), NetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zone_id", "centroid_node", "row", "col"])?;
        for z in &self.zones {
            w.write_record([
                z.id.to_string(),
                z.centroid.to_string(),
                z.row.to_string(),
                z.col.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a zones table written by [`ZoneSet::write_csv`]. Grid geometry
    /// and connectors are recomputed from the network and grid dimensions.
    pub fn read_csv<R: Read>(input: R, network: &RoadNetwork, rows: u32, cols: u32) -> Result<ZoneSet, NetError> {
        #[derive(Deserialize)]
        struct Row {
            zone_id: u32,
            centroid_node: i64,
            row: u32,
            col: u32,
        }
        let mut zones = Vec::new();
        for r in csv::Reader::from_reader(input).deserialize::<Row>() {
            let r = r?;
            if r.row >= rows || r.col >= cols {
                return Err(NetError::Zoning(format!(
                    "zone {} cell ({}, {}) outside {rows}x{cols} grid",
                    r.zone_id, r.row, r.col
                )));
            }
            zones.push(Zone {
                id: ZoneId(r.zone_id),
                centroid: NodeId(r.centroid_node),
                connectors: incident_links(network, NodeId(r.centroid_node)),
                row: r.row,
                col: r.col,
            });
        }
        ZoneSet::validate(&zones, network)?;
        let bbox = network
            .extent()
            .ok_or_else(|| NetError::Zoning("empty network".into()))?;
        Ok(ZoneSet {
            zones,
            bbox,
            grid: Some((rows, cols)),
        })
    }
}

fn cell_of(v: f64, min: f64, max: f64, n: u32) -> u32 {
    if max <= min {
        return 0;
    }
    let i = ((v - min) / (max - min) * n as f64).floor();
    (i.max(0.0) as u32).min(n - 1)
}

/// Partitions the network extent into a `rows` x `cols` grid.
///
/// Row 0 is the southern edge, column 0 the western edge. Cells without a
/// node that has at least one incident link are dropped. Each surviving
/// cell's centroid is the node in that cell nearest its center (ties go to
/// the smaller node id). Zone ids run 1.. in row-major order.
pub fn build_zones(network: &RoadNetwork, rows: u32, cols: u32) -> Result<ZoneSet, NetError> {
    if rows == 0 || cols == 0 || (rows as u64) * (cols as u64) < 2 {
        return Err(NetError::Zoning(format!(
            "grid {rows}x{cols} has fewer than 2 cells"
        )));
    }
    let b = network
        .extent()
        .ok_or_else(|| NetError::Zoning("empty network".into()))?;
    let mut has_link = vec![false; network.nodes().len()];
    for l in network.links() {
        has_link[network.node_index(l.from).unwrap()] = true;
        has_link[network.node_index(l.to).unwrap()] = true;
    }

    let h = (b.max_lat - b.min_lat) / rows as f64;
    let w = (b.max_lon - b.min_lon) / cols as f64;
    // (distance, node id) of the best candidate per cell
    let mut best: Vec<Option<(f64, NodeId)>> = vec![None; (rows * cols) as usize];
    for (node, _) in network.nodes().iter().zip(&has_link).filter(|(_, &h)| h) {
        let r = cell_of(node.lat, b.min_lat, b.max_lat, rows);
        let c = cell_of(node.lon, b.min_lon, b.max_lon, cols);
        let center = (b.min_lat + h * (r as f64 + 0.5), b.min_lon + w * (c as f64 + 0.5));
        let d = haversine_m(node.lat, node.lon, center.0, center.1);
        let slot = &mut best[(r * cols + c) as usize];
        let better = match *slot {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && node.id < bid),
        };
        if better {
            *slot = Some((d, node.id));
        }
    }

    let zones: Vec<Zone> = best
        .iter()
        .enumerate()
        .filter_map(|(cell, b)| b.map(|(_, id)| (cell as u32, id)))
        .enumerate()
        .map(|(i, (cell, centroid))| Zone {
            id: ZoneId(i as u32 + 1),
            centroid,
            connectors: incident_links(network, centroid),
            row: cell / cols,
            col: cell % cols,
        })
        .collect();
    if zones.len() < 2 {
        return Err(NetError::Zoning(format!(
            "only {} non-empty cell(s); at least 2 zones are needed for OD demand",
            zones.len()
        )));
    }
    ZoneSet::validate(&zones, network)?;
    Ok(ZoneSet {
        zones,
        bbox: b,
        grid: Some((rows, cols)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{Link, NetworkMode, Node, RoadClass};

    fn net(points: &[(i64, f64, f64)], pairs: &[(i64, i64)]) -> RoadNetwork {
        let nodes = points.iter().map(|&(id, lat, lon)| Node { id: NodeId(id), lat, lon }).collect();
        let links = pairs
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| Link {
                id: LinkId(i as u64 + 1),
                from: NodeId(a),
                to: NodeId(b),
                length_m: 100.0,
                free_flow_s: 10.0,
                capacity_vph: 600.0,
                class: RoadClass::Residential,
            })
            .collect();
        RoadNetwork::new(nodes, links, NetworkMode::City).unwrap()
    }

    #[test]
    fn one_node_per_cell() {
        // Extent [0,1]x[0,1]; nodes near the four quadrant centers plus corners.
        let n = net(
            &[
                (1, 0.0, 0.0),
                (2, 1.0, 1.0),
                (3, 0.25, 0.25),
                (4, 0.25, 0.75),
                (5, 0.75, 0.25),
                (6, 0.75, 0.75),
            ],
            &[(1, 3), (3, 4), (4, 6), (6, 5), (5, 3), (6, 2)],
        );
        let zs = build_zones(&n, 2, 2).unwrap();
        let centroids: Vec<_> = zs.zones().iter().map(|z| z.centroid.0).collect();
        assert_eq!(centroids, vec![3, 4, 5, 6]);
        let z = &zs.zones()[0];
        assert_eq!((z.row, z.col), (0, 0));
        assert_eq!(z.connectors, vec![LinkId(1), LinkId(2), LinkId(5)]);
    }

    #[test]
    fn empty_quadrant_dropped() {
        let n = net(
            &[(1, 0.0, 0.0), (2, 1.0, 1.0), (3, 0.9, 0.1)],
            &[(1, 2), (2, 3)],
        );
        let zs = build_zones(&n, 2, 2).unwrap();
        assert_eq!(zs.len(), 3);
        // north-east corner node lies in cell (1,1); (0,1) is empty
        let cells: Vec<_> = zs.zones().iter().map(|z| (z.row, z.col)).collect();
        assert_eq!(cells, vec![(0, 0), (1, 0), (1, 1)]);
    }

    #[test]
    fn single_cell_grid_is_rejected() {
        let n = net(&[(1, 0.0, 0.0), (2, 1.0, 1.0)], &[(1, 2)]);
        assert!(matches!(build_zones(&n, 1, 1), Err(NetError::Zoning(_))));
    }

    #[test]
    fn csv_round_trip() {
        let n = net(&[(1, 0.0, 0.0), (2, 1.0, 1.0), (3, 0.9, 0.1)], &[(1, 2), (2, 3)]);
        let zs = build_zones(&n, 2, 2).unwrap();
        let mut buf = Vec::new();
        zs.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"zone_id,centroid_node,row,col\n1,1,0,0\n"));
        let back = ZoneSet::read_csv(&buf[..], &n, 2, 2).unwrap();
        assert_eq!(back, zs);
    }

    #[test]
    fn cell_ring_covers_cell() {
        let n = net(&[(1, 0.0, 0.0), (2, 1.0, 1.0)], &[(1, 2)]);
        let zs = build_zones(&n, 2, 2).unwrap();
        let ring = zs.cell_ring(&zs.zones()[1]).unwrap();
        assert_eq!(ring[0], [0.5, 0.5]);
        assert_eq!(ring[2], [1.0, 1.0]);
    }
}
