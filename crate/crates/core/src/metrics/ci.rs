use chrono::NaiveDate;
use log::debug;
use serde::Serialize;

use super::{MetricsError, SlotSelector};
use crate::ingest::{DepartureSlot, ObservationPanel, TravelTimeObservation};
use crate::netbuild::{LinkId, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkCongestion {
    pub link: LinkId,
    pub slot: DepartureSlot,
    pub date: NaiveDate,
    pub travel_time_s: f64,
    pub free_flow_s: f64,
    pub index: f64,
    /// Observed time below free flow. Kept in the averages, flagged here.
    pub sub_free_flow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkCongestion {
    pub slot: SlotSelector,
    pub date: NaiveDate,
    pub value: f64,
    pub n: usize,
    pub sub_free_flow: usize,
}

/// Congestion index `T / F` of one observation. The provider's free-flow
/// time wins over the network's class-derived one.
pub fn link_ci(obs: &TravelTimeObservation, network: &RoadNetwork) -> Result<LinkCongestion, MetricsError> {
    let free_flow_s = obs
        .free_flow_s
        .or_else(|| network.link(obs.link).map(|l| l.free_flow_s))
        .ok_or(MetricsError::MissingFreeFlow(obs.link))?;
    let index = obs.travel_time_s / free_flow_s;
    let sub_free_flow = index < 1.0;
    if sub_free_flow {
        debug!(
            "link {} {} {}: travel time {} below free flow {}",
            obs.link, obs.date, obs.slot, obs.travel_time_s, free_flow_s
        );
    }
    Ok(LinkCongestion {
        link: obs.link,
        slot: obs.slot,
        date: obs.date,
        travel_time_s: obs.travel_time_s,
        free_flow_s,
        index,
        sub_free_flow,
    })
}

/// Mean congestion index over the day's observations on links at least
/// `min_length_m` long. Whole-day pools every slot's observation.
pub fn network_ci(
    panel: &ObservationPanel,
    network: &RoadNetwork,
    slot: SlotSelector,
    date: NaiveDate,
    min_length_m: f64,
) -> Result<NetworkCongestion, MetricsError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut flagged = 0usize;
    for o in panel.iter().filter(|o| o.date == date && slot.matches(o.slot)) {
        match network.link(o.link) {
            Some(l) if l.length_m >= min_length_m => {}
            _ => continue,
        }
        let c = link_ci(o, network)?;
        sum += c.index;
        n += 1;
        flagged += c.sub_free_flow as usize;
    }
    if n == 0 {
        return Err(MetricsError::UndefinedDay(date, slot));
    }
    Ok(NetworkCongestion {
        slot,
        date,
        value: sum / n as f64,
        n,
        sub_free_flow: flagged,
    })
}
