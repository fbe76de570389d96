//! Travel-time observation panels.

mod provider;
mod reliability;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netbuild::{LinkId, NetError};

pub use provider::{adapt_provider_response, ProviderLine, SegmentFlowRecord};
pub use reliability::{
    reliability_report, round_decisecond, unique_update_count, unique_update_count_scoped, HistogramBin,
    LinkReliability, ReliabilityReport, UniquenessScope,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Schema { line: u64, msg: String },
    #[error("line {line}: travel time {value} must be positive")]
    NonPositive { line: u64, value: f64 },
    #[error("conflicting duplicate observation for link {link} on {date} {slot}")]
    ConflictingDuplicate {
        link: LinkId,
        date: NaiveDate,
        slot: DepartureSlot,
    },
    #[error("link {0} has no observations")]
    MissingLink(LinkId),
    #[error("no links pass the {0} m length filter")]
    EmptyReport(f64),
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("provider record: {0}")]
    Adapter(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Daily collection time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepartureSlot {
    Morning,
    Afternoon,
    Evening,
}

impl DepartureSlot {
    pub const ALL: [DepartureSlot; 3] = [DepartureSlot::Morning, DepartureSlot::Afternoon, DepartureSlot::Evening];

    /// Nominal local clock time of the pull.
    pub fn nominal_time(self) -> NaiveTime {
        let h = match self {
            DepartureSlot::Morning => 9,
            DepartureSlot::Afternoon => 13,
            DepartureSlot::Evening => 17,
        };
        NaiveTime::from_hms_opt(h, 0, 0).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DepartureSlot::Morning => "morning",
            DepartureSlot::Afternoon => "afternoon",
            DepartureSlot::Evening => "evening",
        }
    }
}

impl fmt::Display for DepartureSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DepartureSlot {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "morning" => Ok(DepartureSlot::Morning),
            "afternoon" => Ok(DepartureSlot::Afternoon),
            "evening" => Ok(DepartureSlot::Evening),
            other => Err(format!("unknown departure slot '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeObservation {
    pub link: LinkId,
    pub date: NaiveDate,
    pub slot: DepartureSlot,
    pub travel_time_s: f64,
    /// Provider-reported free-flow time, when the source carries one.
    pub free_flow_s: Option<f64>,
}

type ObsKey = (LinkId, NaiveDate, DepartureSlot);

/// Observations keyed by `(link, date, slot)`. Missing cells are simply
/// absent; nothing is imputed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationPanel {
    obs: BTreeMap<ObsKey, TravelTimeObservation>,
    calendar: BTreeSet<NaiveDate>,
}

impl ObservationPanel {
    pub fn new() -> ObservationPanel {
        ObservationPanel::default()
    }

    pub fn from_observations<I>(items: I) -> Result<ObservationPanel, IngestError>
    where
        I: IntoIterator<Item = TravelTimeObservation>,
    {
        let mut p = ObservationPanel::new();
        for (i, o) in items.into_iter().enumerate() {
            p.insert_checked(o, i as u64 + 1)?;
        }
        Ok(p)
    }

    /// Inserts one observation. An identical observation for the same key is
    /// a no-op; a different one is a conflict.
    pub fn insert(&mut self, o: TravelTimeObservation) -> Result<(), IngestError> {
        self.insert_checked(o, 0)
    }

    fn insert_checked(&mut self, o: TravelTimeObservation, line: u64) -> Result<(), IngestError> {
        if !(o.travel_time_s > 0.0 && o.travel_time_s.is_finite()) {
            return Err(IngestError::NonPositive {
                line,
                value: o.travel_time_s,
            });
        }
        if let Some(f) = o.free_flow_s {
            if !(f > 0.0 && f.is_finite()) {
                return Err(IngestError::Schema {
                    line,
                    msg: format!("free-flow time {f} must be positive"),
                });
            }
        }
        let key = (o.link, o.date, o.slot);
        if let Some(prev) = self.obs.get(&key) {
            if *prev != o {
                return Err(IngestError::ConflictingDuplicate {
                    link: o.link,
                    date: o.date,
                    slot: o.slot,
                });
            }
            return Ok(());
        }
        self.obs.insert(key, o);
        self.calendar.insert(o.date);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn get(&self, link: LinkId, date: NaiveDate, slot: DepartureSlot) -> Option<&TravelTimeObservation> {
        self.obs.get(&(link, date, slot))
    }

    /// All observations in `(link, date, slot)` order.
    pub fn iter(&self) -> impl Iterator<Item = &TravelTimeObservation> {
        self.obs.values()
    }

    /// Collection dates in ascending order.
    pub fn calendar(&self) -> Vec<NaiveDate> {
        self.calendar.iter().copied().collect()
    }

    /// Distinct observed links in ascending order.
    pub fn links(&self) -> Vec<LinkId> {
        let mut v: Vec<LinkId> = self.obs.keys().map(|k| k.0).collect();
        v.dedup();
        v
    }

    /// Observations of one link in `(date, slot)` order.
    pub fn link_observations(&self, link: LinkId) -> impl Iterator<Item = &TravelTimeObservation> {
        let lo = (link, NaiveDate::MIN, DepartureSlot::Morning);
        let hi = (link, NaiveDate::MAX, DepartureSlot::Evening);
        self.obs.range(lo..=hi).map(|(_, o)| o)
    }

    /// Reads an observation table with header
    /// `link_id,date,slot,travel_time_s[,free_flow_s]`.
    pub fn read_csv<R: Read>(input: R) -> Result<ObservationPanel, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let missing = |name: &str| IngestError::Schema {
            line: 1,
            msg: format!("missing column '{name}'"),
        };
        let c_link = col("link_id").ok_or_else(|| missing("link_id"))?;
        let c_date = col("date").ok_or_else(|| missing("date"))?;
        let c_slot = col("slot").ok_or_else(|| missing("slot"))?;
        let c_tt = col("travel_time_s").ok_or_else(|| missing("travel_time_s"))?;
        let c_ff = col("free_flow_s");

        let mut panel = ObservationPanel::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize| rec.get(i).unwrap_or("");
            let schema = |msg: String| IngestError::Schema { line, msg };
            let link = field(c_link)
                .parse::<LinkId>()
                .map_err(|e| schema(format!("link_id: {e}")))?;
            let date = NaiveDate::parse_from_str(field(c_date), "%Y-%m-%d")
                .map_err(|e| schema(format!("date '{}': {e}", field(c_date))))?;
            let slot = field(c_slot).parse::<DepartureSlot>().map_err(schema)?;
            let travel_time_s = field(c_tt)
                .parse::<f64>()
                .map_err(|e| schema(format!("travel_time_s: {e}")))?;
            let free_flow_s = match c_ff.map(field) {
                None | Some("") => None,
                Some(v) => Some(v.parse::<f64>().map_err(|e| schema(format!("free_flow_s: {e}")))?),
            };
            panel.insert_checked(
                TravelTimeObservation {
                    link,
                    date,
                    slot,
                    travel_time_s,
                    free_flow_s,
                },
                line,
            )?;
        }
        Ok(panel)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["link_id", "date", "slot", "travel_time_s", "free_flow_s"])?;
        for o in self.iter() {
            w.write_record([
                o.link.to_string(),
                o.date.format("%Y-%m-%d").to_string(),
                o.slot.to_string(),
                o.travel_time_s.to_string(),
                o.free_flow_s.map(|f| f.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "link_id,date,slot,travel_time_s,free_flow_s\n";

    #[test]
    fn distinct_rows() {
        let text = format!("{HEADER}1,2022-02-25,morning,100,\n1,2022-02-25,evening,110,90\n2,2022-02-26,afternoon,50,\n");
        let p = ObservationPanel::read_csv(text.as_bytes()).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.calendar().len(), 2);
        assert_eq!(
            p.get(LinkId(1), NaiveDate::from_ymd_opt(2022, 2, 25).unwrap(), DepartureSlot::Evening)
                .unwrap()
                .free_flow_s,
            Some(90.0)
        );
    }

    #[test]
    fn identical_rows_collapse() {
        let text = format!("{HEADER}1,2022-02-25,morning,100,\n1,2022-02-25,morning,100,\n");
        assert_eq!(ObservationPanel::read_csv(text.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn conflicting_rows_fail() {
        let text = format!("{HEADER}1,2022-02-25,morning,100,\n1,2022-02-25,morning,120,\n");
        assert!(matches!(
            ObservationPanel::read_csv(text.as_bytes()),
            Err(IngestError::ConflictingDuplicate { .. })
        ));
    }

    #[test]
    fn optional_free_flow_column() {
        let text = "link_id,date,slot,travel_time_s\n3,2022-03-01,morning,42.5\n";
        let p = ObservationPanel::read_csv(text.as_bytes()).unwrap();
        assert_eq!(p.iter().next().unwrap().free_flow_s, None);
    }

    #[test]
    fn schema_violations() {
        let bad = [
            "link_id,date,travel_time_s\n1,2022-02-25,100\n".to_string(),
            format!("{HEADER}x,2022-02-25,morning,100,\n"),
            format!("{HEADER}1,25.02.2022,morning,100,\n"),
            format!("{HEADER}1,2022-02-25,night,100,\n"),
            format!("{HEADER}1,2022-02-25,morning,abc,\n"),
            format!("{HEADER}1,2022-02-25,morning,100,-1\n"),
        ];
        for text in bad {
            assert!(
                matches!(ObservationPanel::read_csv(text.as_bytes()), Err(IngestError::Schema { .. })),
                "{text}"
            );
        }
        let zero = format!("{HEADER}1,2022-02-25,morning,0,\n");
        assert!(matches!(
            ObservationPanel::read_csv(zero.as_bytes()),
            Err(IngestError::NonPositive { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_read_is_identical() {
        let text = format!("{HEADER}2,2022-02-26,afternoon,50.25,\n1,2022-02-25,morning,100,80\n");
        let p = ObservationPanel::read_csv(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = ObservationPanel::read_csv(&buf[..]).unwrap();
        assert_eq!(p, q);
        let mut buf2 = Vec::new();
        q.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn slot_clock_times() {
        let hours: Vec<_> = DepartureSlot::ALL
            .iter()
            .map(|s| s.nominal_time().format("%H:%M").to_string())
            .collect();
        assert_eq!(hours, ["09:00", "13:00", "17:00"]);
    }
}
