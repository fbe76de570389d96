use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{fitness_of, observation_targets, Chromosome, EstimateError, FitnessValue, GaConfig};
use crate::assign::{AssignGraph, OdMatrix, UeParams, VdfParams};
use crate::netbuild::{LinkId, RoadNetwork, ZoneSet};

/// Smallest improvement that resets the stall counter.
const MIN_IMPROVEMENT: f64 = 1e-6;
/// Initial total demand is drawn log-uniformly between these fractions of
/// the zones' combined outgoing connector capacity.
const SEED_SCALE_RANGE: (f64, f64) = (1.0 / 256.0, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub generation: usize,
    pub best_total: f64,
    /// Mean over feasible chromosomes only.
    pub mean_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub od: OdMatrix,
    pub fitness: FitnessValue,
    /// Generation 0 is the seeded population.
    pub trace: Vec<TraceRow>,
}

impl Estimate {
    /// Writes `generation,best_total,mean_total`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<(), EstimateError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["generation", "best_total", "mean_total"])?;
        for r in &self.trace {
            w.write_record([r.generation.to_string(), r.best_total.to_string(), r.mean_total.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Independent stream per (generation, slot) so the draws for a chromosome
/// never depend on evaluation order.
fn stream_rng(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index as u64);
    rng
}

fn outgoing_capacity(network: &RoadNetwork, zones: &ZoneSet) -> Vec<f64> {
    zones
        .zones()
        .iter()
        .map(|z| {
            z.connectors
                .iter()
                .filter_map(|&id| network.link(id))
                .filter(|l| l.from == z.centroid)
                .map(|l| l.capacity_vph)
                .sum()
        })
        .collect()
}

fn incoming_capacity(network: &RoadNetwork, zones: &ZoneSet) -> Vec<f64> {
    zones
        .zones()
        .iter()
        .map(|z| {
            z.connectors
                .iter()
                .filter_map(|&id| network.link(id))
                .filter(|l| l.to == z.centroid)
                .map(|l| l.capacity_vph)
                .sum()
        })
        .collect()
}

/// Gravity-model demand pattern summing to one: productions follow
/// outgoing connector capacity, attractions incoming connector capacity,
/// and the deterrence is the inverse free-flow shortest-path time.
/// Unreachable pairs get zero.
pub fn gravity_shape(network: &RoadNetwork, zones: &ZoneSet) -> Chromosome {
    let prod = outgoing_capacity(network, zones);
    let attr = incoming_capacity(network, zones);
    let graph = AssignGraph::new(network);
    let fft: Vec<f64> = network.links().iter().map(|l| l.free_flow_s).collect();
    let n = zones.len();
    let mut cells = Vec::with_capacity(Chromosome::len_for(n));
    for (o, zo) in zones.zones().iter().enumerate() {
        let tree = graph.shortest_path_tree(&fft, network.node_index(zo.centroid).unwrap());
        for (d, zd) in zones.zones().iter().enumerate() {
            if o == d {
                continue;
            }
            let v = match tree.cost(network.node_index(zd.centroid).unwrap()) {
                Some(c) if c > 0.0 => prod[o] * attr[d] / c,
                _ => 0.0,
            };
            cells.push(v);
        }
    }
    let sum: f64 = cells.iter().sum();
    if sum > 0.0 {
        cells.iter_mut().for_each(|v| *v /= sum);
    }
    Chromosome { cells }
}

fn rank(fit: &[FitnessValue]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fit.len()).collect();
    idx.sort_by(|&a, &b| fit[a].total.total_cmp(&fit[b].total).then(a.cmp(&b)));
    idx
}

fn better(fit: &[FitnessValue], a: usize, b: usize) -> bool {
    match fit[a].total.total_cmp(&fit[b].total) {
        Ordering::Less => true,
        Ordering::Equal => a < b,
        Ordering::Greater => false,
    }
}

fn tournament(rng: &mut ChaCha8Rng, fit: &[FitnessValue], size: usize) -> usize {
    let mut best = rng.gen_range(0..fit.len());
    for _ in 1..size {
        let c = rng.gen_range(0..fit.len());
        if better(fit, c, best) {
            best = c;
        }
    }
    best
}

fn lognormal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (sigma * z).exp()
}

fn offspring(rng: &mut ChaCha8Rng, pop: &[Chromosome], fit: &[FitnessValue], cfg: &GaConfig) -> Chromosome {
    let a = &pop[tournament(rng, fit, cfg.tournament)];
    let b = &pop[tournament(rng, fit, cfg.tournament)];
    let mut cells = if rng.gen_bool(cfg.crossover_rate) {
        a.cells
            .iter()
            .zip(&b.cells)
            .map(|(x, y)| {
                let w: f64 = rng.gen();
                w * x + (1.0 - w) * y
            })
            .collect()
    } else {
        a.cells.clone()
    };
    for v in cells.iter_mut() {
        if rng.gen_bool(cfg.mutation_rate) {
            *v *= lognormal(rng, cfg.mutation_scale);
        }
    }
    // whole-matrix rescaling moves total demand without reshaping it
    if rng.gen_bool(cfg.mutation_rate) {
        let k = lognormal(rng, cfg.mutation_scale);
        cells.iter_mut().for_each(|v| *v *= k);
    }
    Chromosome { cells }
}

fn evaluate(
    pop: &[Chromosome],
    network: &RoadNetwork,
    zones: &ZoneSet,
    targets: &[(usize, f64, f64)],
    vdf: &VdfParams,
    ue: &UeParams,
) -> Result<Vec<FitnessValue>, EstimateError> {
    pop.par_iter()
        .map(|c| fitness_of(&c.decode(zones)?, network, zones, targets, vdf, ue))
        .collect()
}

fn trace_row(generation: usize, fit: &[FitnessValue], best: usize) -> TraceRow {
    let feasible: Vec<f64> = fit.iter().map(|f| f.total).filter(|t| t.is_finite()).collect();
    TraceRow {
        generation,
        best_total: fit[best].total,
        mean_total: if feasible.is_empty() {
            f64::INFINITY
        } else {
            feasible.iter().sum::<f64>() / feasible.len() as f64
        },
    }
}

/// Searches for the demand matrix whose equilibrium link times best match
/// `observed`.
///
/// The initial population scales a gravity pattern to log-uniform random
/// totals with per-cell log-normal noise. Each later generation keeps the
/// elite, then fills the rest by tournament selection, per-cell blend
/// crossover and log-normal mutation. Fitness evaluations run in parallel;
/// every chromosome draws from its own random stream, so results do not
/// depend on the thread count.
pub fn estimate_od(
    network: &RoadNetwork,
    zones: &ZoneSet,
    observed: &BTreeMap<LinkId, f64>,
    config: &GaConfig,
    vdf: &VdfParams,
    ue: &UeParams,
) -> Result<Estimate, EstimateError> {
    config.validate()?;
    vdf.validate()?;
    ue.validate()?;
    let targets = observation_targets(network, observed)?;
    let shape = gravity_shape(network, zones);
    let ceiling: f64 = outgoing_capacity(network, zones).iter().sum();
    let (lo, hi) = (ceiling * SEED_SCALE_RANGE.0, ceiling * SEED_SCALE_RANGE.1);

    let mut pop: Vec<Chromosome> = (0..config.population)
        .map(|i| {
            let mut rng = stream_rng(config.seed, 0, i);
            let total = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();
            let cells = shape
                .cells
                .iter()
                .map(|&s| s * total * lognormal(&mut rng, config.mutation_scale))
                .collect();
            Chromosome { cells }
        })
        .collect();
    let mut fit = evaluate(&pop, network, zones, &targets, vdf, ue)?;
    if fit.iter().all(|f| !f.total.is_finite()) {
        return Err(EstimateError::AllInfeasible);
    }
    let mut order = rank(&fit);
    let mut trace = vec![trace_row(0, &fit, order[0])];
    let mut reference = fit[order[0]].total;
    let mut stall = 0;

    for generation in 1..=config.generations {
        let children: Vec<Chromosome> = (config.elite..config.population)
            .into_par_iter()
            .map(|i| offspring(&mut stream_rng(config.seed, generation, i), &pop, &fit, config))
            .collect();
        let child_fit = evaluate(&children, network, zones, &targets, vdf, ue)?;
        let mut next_pop: Vec<Chromosome> = order[..config.elite].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<FitnessValue> = order[..config.elite].iter().map(|&i| fit[i]).collect();
        next_pop.extend(children);
        next_fit.extend(child_fit);
        pop = next_pop;
        fit = next_fit;
        order = rank(&fit);
        let row = trace_row(generation, &fit, order[0]);
        trace.push(row);
        if reference - row.best_total >= MIN_IMPROVEMENT {
            reference = row.best_total;
            stall = 0;
        } else {
            stall += 1;
            if stall >= config.stall_patience {
                info!("estimation stalled after generation {generation}");
                break;
            }
        }
    }
    let best = order[0];
    Ok(Estimate {
        od: pop[best].decode(zones)?,
        fitness: fit[best],
        trace,
    })
}
