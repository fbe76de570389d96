//! Data reliability by unique-update counting.
//!
//! A provider that has no live signal for a segment tends to repeat a
//! historical value, so the number of distinct travel times a link reports
//! over the study period is a proxy for how often it was really refreshed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DepartureSlot, IngestError, ObservationPanel};
use crate::netbuild::{LinkId, RoadNetwork};

/// Travel time in tenths of a second, the resolution at which two values
/// count as the same update.
pub fn round_decisecond(t: f64) -> i64 {
    (t * 10.0).round() as i64
}

/// How distinct values are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniquenessScope {
    /// Distinct values across all dates and slots.
    #[default]
    Pooled,
    /// Distinct values within each slot, summed over slots.
    PerSlot,
}

/// Number of distinct (0.1 s rounded) travel times a link reported.
pub fn unique_update_count(panel: &ObservationPanel, link: LinkId) -> Result<usize, IngestError> {
    unique_update_count_scoped(panel, link, UniquenessScope::Pooled)
}

pub fn unique_update_count_scoped(
    panel: &ObservationPanel,
    link: LinkId,
    scope: UniquenessScope,
) -> Result<usize, IngestError> {
    let mut seen: BTreeSet<(Option<DepartureSlot>, i64)> = BTreeSet::new();
    for o in panel.link_observations(link) {
        let slot = match scope {
            UniquenessScope::Pooled => None,
            UniquenessScope::PerSlot => Some(o.slot),
        };
        seen.insert((slot, round_decisecond(o.travel_time_s)));
    }
    if seen.is_empty() {
        return Err(IngestError::MissingLink(link));
    }
    Ok(seen.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReliability {
    pub link: LinkId,
    pub length_m: f64,
    pub unique_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub count: usize,
    pub links: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub min_length_m: f64,
    pub links: Vec<LinkReliability>,
    /// Integer bins `1..=max count`; empty bins are kept so the density
    /// reads directly as a probability mass function of unit width.
    pub histogram: Vec<HistogramBin>,
}

impl ReliabilityReport {
    /// Writes `link_id,length_m,unique_count` and `count,links,probability`.
    pub fn write_csv<W1: Write, W2: Write>(&self, links: W1, histogram: W2) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(links);
        w.write_record(["link_id", "length_m", "unique_count"])?;
        for l in &self.links {
            w.write_record([l.link.to_string(), l.length_m.to_string(), l.unique_count.to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(histogram);
        w.write_record(["count", "links", "probability"])?;
        for b in &self.histogram {
            w.write_record([b.count.to_string(), b.links.to_string(), b.probability.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unique-update histogram over observed links at least `min_length_m`
/// long. Observed links that are not part of the network cannot be length
/// checked and are left out.
pub fn reliability_report(
    panel: &ObservationPanel,
    network: &RoadNetwork,
    min_length_m: f64,
    scope: UniquenessScope,
) -> Result<ReliabilityReport, IngestError> {
    if !(min_length_m > 0.0 && min_length_m.is_finite()) {
        return Err(IngestError::InvalidThreshold(min_length_m));
    }
    let mut links = Vec::new();
    for id in panel.links() {
        let Some(link) = network.link(id) else {
            continue;
        };
        if link.length_m < min_length_m {
            continue;
        }
        links.push(LinkReliability {
            link: id,
            length_m: link.length_m,
            unique_count: unique_update_count_scoped(panel, id, scope)?,
        });
    }
    if links.is_empty() {
        return Err(IngestError::EmptyReport(min_length_m));
    }
    let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
    for l in &links {
        *tally.entry(l.unique_count).or_default() += 1;
    }
    let max = *tally.keys().next_back().unwrap();
    let total = links.len() as f64;
    let histogram = (1..=max)
        .map(|count| {
            let n = tally.get(&count).copied().unwrap_or(0);
            HistogramBin {
                count,
                links: n,
                probability: n as f64 / total,
            }
        })
        .collect();
    Ok(ReliabilityReport {
        min_length_m,
        links,
        histogram,
    })
}
