//! Forward-star graph, shortest-path trees and all-or-nothing loading.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{AssignError, OdMatrix};
use crate::netbuild::{RoadNetwork, Zone, ZoneSet};

const NONE: u32 = u32::MAX;

/// Compact adjacency over positional node and link indexes of a
/// [`RoadNetwork`]. Node indexes follow node-id order.
#[derive(Debug, Clone)]
pub struct AssignGraph {
    offsets: Vec<u32>,
    out: Vec<u32>,
    link_from: Vec<u32>,
    link_to: Vec<u32>,
}

impl AssignGraph {
    pub fn new(network: &RoadNetwork) -> AssignGraph {
        let n = network.nodes().len();
        let mut link_from = Vec::with_capacity(network.links().len());
        let mut link_to = Vec::with_capacity(network.links().len());
        let mut degree = vec![0u32; n + 1];
        for l in network.links() {
            let (a, b) = (network.node_index(l.from).unwrap(), network.node_index(l.to).unwrap());
            link_from.push(a as u32);
            link_to.push(b as u32);
            degree[a + 1] += 1;
        }
        for i in 0..n {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut out = vec![0u32; link_from.len()];
        for (li, &a) in link_from.iter().enumerate() {
            out[fill[a as usize] as usize] = li as u32;
            fill[a as usize] += 1;
        }
        AssignGraph {
            offsets,
            out,
            link_from,
            link_to,
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn link_count(&self) -> usize {
        self.link_from.len()
    }

    pub fn link_endpoints(&self, link: usize) -> (usize, usize) {
        (self.link_from[link] as usize, self.link_to[link] as usize)
    }

    /// Dijkstra from `origin` over strictly positive link `times`.
    ///
    /// Among equal-cost predecessors the one with the smaller node id wins;
    /// among parallel links from the same node, the smaller link index.
    pub fn shortest_path_tree(&self, times: &[f64], origin: usize) -> ShortestPathTree {
        let n = self.node_count();
        let mut cost = vec![f64::INFINITY; n];
        let mut pred = vec![NONE; n];
        let mut heap = BinaryHeap::new();
        cost[origin] = 0.0;
        heap.push(Entry { cost: 0.0, node: origin as u32 });
        while let Some(Entry { cost: d, node: u }) = heap.pop() {
            let u = u as usize;
            if d > cost[u] {
                continue;
            }
            for &l in &self.out[self.offsets[u] as usize..self.offsets[u + 1] as usize] {
                let v = self.link_to[l as usize] as usize;
                let nd = d + times[l as usize];
                let better = nd < cost[v]
                    || (nd == cost[v]
                        && pred[v] != NONE
                        && (u as u32, l) < (self.link_from[pred[v] as usize], pred[v]));
                if better {
                    let improved = nd < cost[v];
                    cost[v] = nd;
                    pred[v] = l;
                    if improved {
                        heap.push(Entry { cost: nd, node: v as u32 });
                    }
                }
            }
        }
        ShortestPathTree { origin, cost, pred }
    }

    /// Loads every OD pair's demand on its current shortest path.
    ///
    /// Trees are built in parallel per origin; flows are accumulated
    /// serially in origin, destination order so the result does not depend
    /// on thread scheduling.
    pub(crate) fn all_or_nothing(
        &self,
        centroids: &[usize],
        od: &OdMatrix,
        times: &[f64],
        zones: &ZoneSet,
        track_destinations: bool,
    ) -> Result<AonLoad, AssignError> {
        let z = centroids.len();
        let trees: Vec<Option<ShortestPathTree>> = (0..z)
            .into_par_iter()
            .map(|o| {
                let has_demand = (0..z).any(|d| od.get(o, d) > 0.0);
                has_demand.then(|| self.shortest_path_tree(times, centroids[o]))
            })
            .collect();
        let m = self.link_count();
        let mut flows = vec![0.0; m];
        let mut dest_flows = if track_destinations { vec![vec![0.0; m]; z] } else { Vec::new() };
        let mut sp_cost = 0.0;
        for (o, tree) in trees.iter().enumerate() {
            let Some(tree) = tree else { continue };
            for d in 0..z {
                let demand = od.get(o, d);
                if demand <= 0.0 {
                    continue;
                }
                let target = centroids[d];
                if !tree.reachable(target) {
                    return Err(AssignError::Unreachable {
                        origin: zones.zones()[o].id,
                        dest: zones.zones()[d].id,
                    });
                }
                sp_cost += demand * tree.cost[target];
                let mut v = target;
                while v != tree.origin {
                    let l = tree.pred[v] as usize;
                    flows[l] += demand;
                    if track_destinations {
                        dest_flows[d][l] += demand;
                    }
                    v = self.link_from[l] as usize;
                }
            }
        }
        Ok(AonLoad {
            flows,
            dest_flows,
            sp_cost,
        })
    }
}

pub(crate) struct AonLoad {
    pub flows: Vec<f64>,
    pub dest_flows: Vec<Vec<f64>>,
    /// Demand-weighted sum of shortest path costs.
    pub sp_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (cost, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Least-cost predecessor tree from one origin node.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    origin: usize,
    cost: Vec<f64>,
    pred: Vec<u32>,
}

impl ShortestPathTree {
    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn reachable(&self, node: usize) -> bool {
        self.cost[node].is_finite()
    }

    /// Path cost to a node index, `None` when unreachable.
    pub fn cost(&self, node: usize) -> Option<f64> {
        self.reachable(node).then_some(self.cost[node])
    }

    /// Link index that enters `node` on its least-cost path.
    pub fn pred_link(&self, node: usize) -> Option<usize> {
        (self.pred[node] != NONE).then_some(self.pred[node] as usize)
    }

    /// Link indexes from origin to `node`, or `None` when unreachable.
    pub fn path(&self, graph: &AssignGraph, node: usize) -> Option<Vec<usize>> {
        if !self.reachable(node) {
            return None;
        }
        let mut links = Vec::new();
        let mut v = node;
        while v != self.origin {
            let l = self.pred[v] as usize;
            links.push(l);
            v = graph.link_from[l] as usize;
        }
        links.reverse();
        Some(links)
    }
}

/// Least-cost tree from a zone's centroid. `times` is aligned with
/// `network.links()`.
pub fn shortest_path_tree(network: &RoadNetwork, times: &[f64], origin: &Zone) -> ShortestPathTree {
    let g = AssignGraph::new(network);
    let o = network
        .node_index(origin.centroid)
        .expect("zone centroid must be a network node");
    g.shortest_path_tree(times, o)
}

/// All-or-nothing link flows for an OD matrix at fixed link times.
pub fn all_or_nothing(network: &RoadNetwork, zones: &ZoneSet, od: &OdMatrix, times: &[f64]) -> Result<Vec<f64>, AssignError> {
    let g = AssignGraph::new(network);
    let centroids = super::centroid_indexes(network, zones);
    Ok(g.all_or_nothing(&centroids, od, times, zones, false)?.flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{Link, LinkId, NetworkMode, Node, NodeId, RoadClass};

    fn network(pairs: &[(i64, i64, f64)], nodes: i64) -> RoadNetwork {
        let nodes = (1..=nodes).map(|i| Node { id: NodeId(i), lat: 0.0, lon: i as f64 * 0.01 }).collect();
        let links = pairs
            .iter()
            .enumerate()
            .map(|(i, &(a, b, t))| Link {
                id: LinkId(i as u64 + 1),
                from: NodeId(a),
                to: NodeId(b),
                length_m: 1000.0,
                free_flow_s: t,
                capacity_vph: 1000.0,
                class: RoadClass::Primary,
            })
            .collect();
        RoadNetwork::new(nodes, links, NetworkMode::City).unwrap()
    }

    fn fft(net: &RoadNetwork) -> Vec<f64> {
        net.links().iter().map(|l| l.free_flow_s).collect()
    }

    #[test]
    fn single_link_cost() {
        let net = network(&[(1, 2, 42.0)], 2);
        let zones = ZoneSet::from_centroids(&net, &[NodeId(1), NodeId(2)]).unwrap();
        let t = shortest_path_tree(&net, &fft(&net), &zones.zones()[0]);
        assert_eq!(t.cost(1), Some(42.0));
        assert_eq!(t.pred_link(1), Some(0));
    }

    #[test]
    fn equal_cost_tie_goes_to_lower_node_id() {
        // 1 -> 3 -> 2 and 1 -> 4 -> 2 both cost 20; node 3 < node 4.
        // Links into 2 are listed with node 4's first so order alone would pick it.
        let net = network(&[(1, 4, 10.0), (4, 2, 10.0), (1, 3, 10.0), (3, 2, 10.0)], 4);
        let g = AssignGraph::new(&net);
        let t = g.shortest_path_tree(&fft(&net), 0);
        assert_eq!(t.cost(1), Some(20.0));
        let pred = t.pred_link(1).unwrap();
        assert_eq!(net.links()[pred].from, NodeId(3));
        assert_eq!(t.path(&g, 1).unwrap(), vec![2, 3]);
    }

    #[test]
    fn parallel_links_tie_goes_to_lower_link() {
        let net = network(&[(1, 2, 10.0), (1, 2, 10.0)], 2);
        let t = AssignGraph::new(&net).shortest_path_tree(&fft(&net), 0);
        assert_eq!(t.pred_link(1), Some(0));
    }

    #[test]
    fn disconnected_destination() {
        let net = network(&[(1, 2, 10.0)], 3);
        let t = AssignGraph::new(&net).shortest_path_tree(&fft(&net), 0);
        assert!(!t.reachable(2));
        assert_eq!(t.cost(2), None);
        assert!(t.path(&AssignGraph::new(&net), 2).is_none());
    }

    #[test]
    fn aon_superposition() {
        // 1 -> 2 -> 3, with 4 -> 2 feeding the shared link 2 -> 3
        let net = network(&[(1, 2, 10.0), (2, 3, 10.0), (4, 2, 10.0)], 4);
        let zones = ZoneSet::from_centroids(&net, &[NodeId(1), NodeId(3), NodeId(4)]).unwrap();
        let mut od = OdMatrix::zeros(&zones);
        od.set(0, 1, 100.0).unwrap();
        let f = all_or_nothing(&net, &zones, &od, &fft(&net)).unwrap();
        assert_eq!(f, vec![100.0, 100.0, 0.0]);
        od.set(2, 1, 30.0).unwrap();
        let f = all_or_nothing(&net, &zones, &od, &fft(&net)).unwrap();
        assert_eq!(f, vec![100.0, 130.0, 30.0]);
        let zero = OdMatrix::zeros(&zones);
        assert!(all_or_nothing(&net, &zones, &zero, &fft(&net)).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unreachable_pair_with_demand() {
        let net = network(&[(1, 2, 10.0)], 2);
        let zones = ZoneSet::from_centroids(&net, &[NodeId(1), NodeId(2)]).unwrap();
        let mut od = OdMatrix::zeros(&zones);
        od.set(1, 0, 5.0).unwrap();
        assert!(matches!(
            all_or_nothing(&net, &zones, &od, &fft(&net)),
            Err(AssignError::Unreachable { .. })
        ));
    }
}
