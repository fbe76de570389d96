use log::debug;
use serde::Serialize;

use super::graph::AssignGraph;
use super::{centroid_indexes, AssignError, OdMatrix, UeParams, VdfParams};
use crate::netbuild::{RoadNetwork, ZoneSet};

/// Line-search iteration cap; Newton steps usually finish in under ten.
const LINE_SEARCH_STEPS: u32 = 100;
/// Bracket width at which the line search stops.
const LINE_SEARCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCheckpoint {
    pub iteration: u32,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// Vehicles per hour, aligned with `network.links()`.
    pub flows: Vec<f64>,
    /// Congested seconds at `flows`.
    pub times: Vec<f64>,
    pub relative_gap: f64,
    /// All-or-nothing loads performed, counting the initial one.
    pub iterations: u32,
    pub converged: bool,
    /// Gap after each iteration that improved on every earlier one.
    pub checkpoints: Vec<GapCheckpoint>,
    /// Per destination zone (zone-set order), the share of `flows` bound
    /// for that zone.
    pub dest_flows: Vec<Vec<f64>>,
}

fn link_times(network: &RoadNetwork, vdf: &VdfParams, flows: &[f64], out: &mut [f64]) {
    for ((t, l), &x) in out.iter_mut().zip(network.links()).zip(flows) {
        *t = vdf.time(l.free_flow_s, l.capacity_vph, x);
    }
}

/// Step in [0, 1] minimising the Beckmann objective along `x + s (y - x)`.
///
/// The objective's derivative is nondecreasing in `s`, so its root is kept
/// bracketed while Newton steps refine it; a step leaving the bracket falls
/// back to bisection.
fn line_search(network: &RoadNetwork, vdf: &VdfParams, x: &[f64], y: &[f64]) -> f64 {
    let moving: Vec<(usize, f64)> = x
        .iter()
        .zip(y)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, (a, b))| (i, b - a))
        .collect();
    let links = network.links();
    let derivs = |s: f64| -> (f64, f64) {
        moving.iter().fold((0.0, 0.0), |(g, h), &(i, d)| {
            let l = &links[i];
            let (t, dt) = vdf.time_and_slope(l.free_flow_s, l.capacity_vph, x[i] + s * d);
            (g + d * t, h + d * d * dt)
        })
    };
    let (g0, _) = derivs(0.0);
    if g0 >= 0.0 {
        return 0.0;
    }
    let (g1, h1) = derivs(1.0);
    if g1 <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut s, mut g, mut h) = (1.0, g1, h1);
    for _ in 0..LINE_SEARCH_STEPS {
        let newton = if h > 0.0 { s - g / h } else { f64::NAN };
        s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        (g, h) = derivs(s);
        if g == 0.0 {
            return s;
        }
        if g < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if hi - lo < LINE_SEARCH_TOL || (h > 0.0 && (g / h).abs() < LINE_SEARCH_TOL) {
            break;
        }
    }
    s
}

/// Frank-Wolfe user equilibrium.
///
/// The initial all-or-nothing load at free-flow times counts as iteration
/// one. Each later iteration loads all-or-nothing at the current times,
/// measures the relative gap `(sum x t - sum demand * shortest cost) / sum x t`,
/// and moves toward that load by the exact line-search step.
pub fn user_equilibrium(
    network: &RoadNetwork,
    zones: &ZoneSet,
    od: &OdMatrix,
    vdf: &VdfParams,
    params: &UeParams,
) -> Result<AssignmentResult, AssignError> {
    vdf.validate()?;
    params.validate()?;
    od.check_zones(zones)?;
    let graph = AssignGraph::new(network);
    let centroids = centroid_indexes(network, zones);
    let m = network.links().len();

    let mut times: Vec<f64> = network.links().iter().map(|l| l.free_flow_s).collect();
    let first = graph.all_or_nothing(&centroids, od, &times, zones, true)?;
    let mut x = first.flows;
    let mut x_dest = first.dest_flows;
    let mut iterations = 1;
    let mut checkpoints: Vec<GapCheckpoint> = Vec::new();
    let relative_gap = loop {
        link_times(network, vdf, &x, &mut times);
        let tstt: f64 = x.iter().zip(&times).map(|(a, b)| a * b).sum();
        if !tstt.is_finite() {
            return Err(AssignError::Numeric(format!("total system travel time {tstt} at iteration {iterations}")));
        }
        let aon = graph.all_or_nothing(&centroids, od, &times, zones, true)?;
        let gap = if tstt > 0.0 { ((tstt - aon.sp_cost) / tstt).max(0.0) } else { 0.0 };
        if checkpoints.last().map_or(true, |c| gap < c.relative_gap) {
            checkpoints.push(GapCheckpoint { iteration: iterations, relative_gap: gap });
        }
        debug!("ue iteration {iterations}: relative gap {gap:.3e}");
        if gap <= params.tol || iterations >= params.max_iter {
            break gap;
        }
        let step = line_search(network, vdf, &x, &aon.flows);
        if step > 0.0 {
            for (a, b) in x.iter_mut().zip(&aon.flows) {
                *a += step * (b - *a);
            }
            for (xd, yd) in x_dest.iter_mut().zip(&aon.dest_flows) {
                for (a, b) in xd.iter_mut().zip(yd) {
                    *a += step * (b - *a);
                }
            }
        }
        iterations += 1;
    };
    debug_assert_eq!(times.len(), m);
    let converged = relative_gap <= params.tol;
    if !converged {
        debug!("assignment stopped at {iterations} iterations with relative gap {relative_gap:.3e}");
    }
    Ok(AssignmentResult {
        flows: x,
        times,
        relative_gap,
        iterations,
        converged,
        checkpoints,
        dest_flows: x_dest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{Link, LinkId, NetworkMode, Node, NodeId, RoadClass};

    fn parallel(links: &[(f64, f64)]) -> (RoadNetwork, ZoneSet) {
        let nodes = vec![
            Node { id: NodeId(1), lat: 0.0, lon: 0.0 },
            Node { id: NodeId(2), lat: 0.0, lon: 0.01 },
        ];
        let links = links
            .iter()
            .enumerate()
            .map(|(i, &(fft, cap))| Link {
                id: LinkId(i as u64 + 1),
                from: NodeId(1),
                to: NodeId(2),
                length_m: 1000.0,
                free_flow_s: fft,
                capacity_vph: cap,
                class: RoadClass::Primary,
            })
            .collect();
        let net = RoadNetwork::new(nodes, links, NetworkMode::City).unwrap();
        let zones = ZoneSet::from_centroids(&net, &[NodeId(1), NodeId(2)]).unwrap();
        (net, zones)
    }

    fn demand(zones: &ZoneSet, d: f64) -> OdMatrix {
        let mut od = OdMatrix::zeros(zones);
        od.set(0, 1, d).unwrap();
        od
    }

    #[test]
    fn symmetric_split() {
        let (net, zones) = parallel(&[(300.0, 400.0), (300.0, 400.0)]);
        let r = user_equilibrium(&net, &zones, &demand(&zones, 500.0), &VdfParams::default(), &UeParams::default()).unwrap();
        assert!((r.flows[0] - 250.0).abs() < 0.5);
        assert!((r.flows[1] - 250.0).abs() < 0.5);
        assert!(r.converged);
    }

    #[test]
    fn single_path_needs_one_iteration() {
        let (net, zones) = parallel(&[(120.0, 50.0)]);
        let r = user_equilibrium(&net, &zones, &demand(&zones, 80.0), &VdfParams::default(), &UeParams::default()).unwrap();
        assert_eq!(r.flows, vec![80.0]);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.relative_gap, 0.0);
        assert_eq!(r.dest_flows[1], vec![80.0]);
        assert_eq!(r.dest_flows[0], vec![0.0]);
    }

    #[test]
    fn checkpoints_never_increase() {
        let (net, zones) = parallel(&[(600.0, 100.0), (600.0, 200.0), (500.0, 50.0)]);
        let p = UeParams { tol: 1e-9, max_iter: 50 };
        let r = user_equilibrium(&net, &zones, &demand(&zones, 400.0), &VdfParams::default(), &p).unwrap();
        assert!(r.checkpoints.windows(2).all(|w| w[1].relative_gap < w[0].relative_gap));
        assert!(r.flows.iter().all(|&f| f >= 0.0));
        assert!(r.times.iter().zip(net.links()).all(|(t, l)| *t >= l.free_flow_s));
    }

    #[test]
    fn invalid_tolerance() {
        let (net, zones) = parallel(&[(600.0, 100.0)]);
        let p = UeParams { tol: 0.0, max_iter: 5 };
        assert!(matches!(
            user_equilibrium(&net, &zones, &demand(&zones, 1.0), &VdfParams::default(), &p),
            Err(AssignError::InvalidParams(_))
        ));
    }
}
