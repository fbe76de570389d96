//! Genetic-algorithm OD estimation from observed link travel times, plus
//! day-over-day comparison and zonal reports.

mod ga;
mod report;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{user_equilibrium, AssignError, OdMatrix, UeParams, VdfParams};
use crate::ingest::{DepartureSlot, ObservationPanel};
use crate::netbuild::{LinkId, RoadNetwork, ZoneSet};

pub use ga::{estimate_od, gravity_shape, Estimate, TraceRow};
pub use report::{
    compare_days, destination_congestion_index, format_delta, zonal_geojson, zone_production_shares, ComparisonReport,
    ComparisonRow, StatColumn, ZonalReport, ZonalRow,
};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("invalid GA config: {0}")]
    InvalidConfig(String),
    #[error("no observed link belongs to the network")]
    NoObservations,
    #[error("every chromosome in the initial population is infeasible")]
    AllInfeasible,
    #[error("chromosome has {got} cells, expected {expected}")]
    ChromosomeLength { got: usize, expected: usize },
    #[error("{0} change undefined: base value is zero")]
    UndefinedDelta(StatColumn),
    #[error("production shares undefined for zero total demand")]
    UndefinedShares,
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    /// Best chromosomes copied unchanged into the next generation.
    pub elite: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Per-gene probability of multiplicative log-normal noise.
    pub mutation_rate: f64,
    /// Standard deviation of the log of the mutation factor.
    pub mutation_scale: f64,
    pub seed: u64,
    /// Generations without a best-fitness improvement of at least 1e-6
    /// before the search stops.
    pub stall_patience: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 64,
            generations: 300,
            elite: 2,
            tournament: 4,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            mutation_scale: 0.3,
            seed: 42,
            stall_patience: 40,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: String| Err(EstimateError::InvalidConfig(m));
        if self.population < 4 {
            return bad(format!("population {} < 4", self.population));
        }
        if self.elite >= self.population {
            return bad(format!("elite {} must be below population {}", self.elite, self.population));
        }
        if self.tournament == 0 || self.tournament > self.population {
            return bad(format!("tournament {} must be in 1..=population", self.tournament));
        }
        for (name, v) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.mutation_scale > 0.0 && self.mutation_scale.is_finite()) {
            return bad(format!("mutation_scale {} must be > 0", self.mutation_scale));
        }
        Ok(())
    }
}

/// Off-diagonal OD cells in row-major order, diagonal skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub cells: Vec<f64>,
}

impl Chromosome {
    pub fn len_for(zones: usize) -> usize {
        zones * zones.saturating_sub(1)
    }

    pub fn from_od(od: &OdMatrix) -> Chromosome {
        let n = od.zone_count();
        let mut cells = Vec::with_capacity(Self::len_for(n));
        for o in 0..n {
            for d in 0..n {
                if o != d {
                    cells.push(od.get(o, d));
                }
            }
        }
        Chromosome { cells }
    }

    /// Always yields a valid matrix: entries are clamped at zero and the
    /// diagonal is never written.
    pub fn decode(&self, zones: &ZoneSet) -> Result<OdMatrix, EstimateError> {
        let n = zones.len();
        if self.cells.len() != Self::len_for(n) {
            return Err(EstimateError::ChromosomeLength {
                got: self.cells.len(),
                expected: Self::len_for(n),
            });
        }
        let mut od = OdMatrix::zeros(zones);
        let mut it = self.cells.iter();
        for o in 0..n {
            for d in 0..n {
                if o != d {
                    let v = *it.next().unwrap();
                    let v = if v.is_finite() && v > 0.0 { v } else { 0.0 };
                    od.set(o, d, v)?;
                }
            }
        }
        Ok(od)
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue {
    /// Root-mean-square of link time residuals divided by free-flow time.
    pub rmse: f64,
    /// Reserved for bound violations; decoding makes it always zero.
    pub penalty: f64,
    pub total: f64,
}

impl FitnessValue {
    pub const WORST: FitnessValue = FitnessValue {
        rmse: f64::INFINITY,
        penalty: 0.0,
        total: f64::INFINITY,
    };
}

/// Observed link times for one date and slot, restricted to network links.
pub fn observed_times(panel: &ObservationPanel, network: &RoadNetwork, date: NaiveDate, slot: DepartureSlot) -> BTreeMap<LinkId, f64> {
    panel
        .iter()
        .filter(|o| o.date == date && o.slot == slot && network.link(o.link).is_some())
        .map(|o| (o.link, o.travel_time_s))
        .collect()
}

/// Observed links as `(link index, observed seconds, free-flow seconds)`.
pub(crate) fn observation_targets(network: &RoadNetwork, observed: &BTreeMap<LinkId, f64>) -> Result<Vec<(usize, f64, f64)>, EstimateError> {
    let targets: Vec<_> = observed
        .iter()
        .filter_map(|(&id, &t)| network.link_index(id).map(|i| (i, t, network.links()[i].free_flow_s)))
        .collect();
    if targets.is_empty() {
        return Err(EstimateError::NoObservations);
    }
    Ok(targets)
}

pub(crate) fn fitness_of(
    od: &OdMatrix,
    network: &RoadNetwork,
    zones: &ZoneSet,
    targets: &[(usize, f64, f64)],
    vdf: &VdfParams,
    ue: &UeParams,
) -> Result<FitnessValue, EstimateError> {
    let result = match user_equilibrium(network, zones, od, vdf, ue) {
        Ok(r) => r,
        Err(AssignError::Unreachable { origin, dest }) => {
            warn!("chromosome infeasible: zone {dest} unreachable from zone {origin}");
            return Ok(FitnessValue::WORST);
        }
        Err(e) => return Err(e.into()),
    };
    let sq: f64 = targets
        .iter()
        .map(|&(i, obs, fft)| {
            let r = (result.times[i] - obs) / fft;
            r * r
        })
        .sum();
    let rmse = (sq / targets.len() as f64).sqrt();
    Ok(FitnessValue {
        rmse,
        penalty: 0.0,
        total: rmse,
    })
}

/// Decodes the chromosome, assigns it and scores the assigned link times
/// against `observed`. An unreachable OD pair scores [`FitnessValue::WORST`].
pub fn fitness(
    chromosome: &Chromosome,
    network: &RoadNetwork,
    zones: &ZoneSet,
    observed: &BTreeMap<LinkId, f64>,
    vdf: &VdfParams,
    ue: &UeParams,
) -> Result<FitnessValue, EstimateError> {
    let targets = observation_targets(network, observed)?;
    fitness_of(&chromosome.decode(zones)?, network, zones, &targets, vdf, ue)
}
