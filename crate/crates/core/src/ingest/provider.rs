//! Provider segment-flow records to panel observations.

use chrono::NaiveDate;
use serde::Deserialize;

use super::{DepartureSlot, IngestError, TravelTimeObservation};
use crate::netbuild::{link_lookup, RoadNetwork, SegmentMap, UnmatchedReport};

/// One segment reading in the provider's flow-segment shape.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentFlowRecord {
    pub segment_key: String,
    pub current_travel_time: Option<f64>,
    pub free_flow_travel_time: Option<f64>,
}

/// A record together with the pull it belongs to; one JSON object per line
/// in provider dump files.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ProviderLine {
    pub date: NaiveDate,
    pub slot: DepartureSlot,
    #[serde(flatten)]
    pub record: SegmentFlowRecord,
}

/// Converts a provider record into an observation.
///
/// Returns `Ok(None)` when the segment key cannot be joined to the network;
/// the key is then recorded in `unmatched`.
pub fn adapt_provider_response(
    record: &SegmentFlowRecord,
    network: &RoadNetwork,
    mapping: &SegmentMap,
    date: NaiveDate,
    slot: DepartureSlot,
    unmatched: &mut UnmatchedReport,
) -> Result<Option<TravelTimeObservation>, IngestError> {
    let field = |v: Option<f64>, name: &str| -> Result<f64, IngestError> {
        match v {
            None => Err(IngestError::Adapter(format!(
                "segment '{}' is missing {name}",
                record.segment_key
            ))),
            Some(t) if !(t > 0.0 && t.is_finite()) => Err(IngestError::Adapter(format!(
                "segment '{}' has non-positive {name} {t}",
                record.segment_key
            ))),
            Some(t) => Ok(t),
        }
    };
    let travel_time_s = field(record.current_travel_time, "currentTravelTime")?;
    let free_flow_s = field(record.free_flow_travel_time, "freeFlowTravelTime")?;
    let Some(link) = link_lookup(network, mapping, &record.segment_key, unmatched) else {
        return Ok(None);
    };
    Ok(Some(TravelTimeObservation {
        link,
        date,
        slot,
        travel_time_s,
        free_flow_s: Some(free_flow_s),
    }))
}
