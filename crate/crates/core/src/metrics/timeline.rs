use std::fmt;
use std::io::Read;

use chrono::NaiveDate;
use serde::Serialize;

use super::MetricsError;

/// Reference number of an event within its city; `-` for unnumbered
/// background events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EventRef(pub Option<u32>);

impl fmt::Display for EventRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(r) => write!(f, "{r}"),
            None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineEvent {
    pub city: String,
    pub event_ref: EventRef,
    pub description: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTimeline {
    pub entries: Vec<TimelineEvent>,
}

impl EventTimeline {
    pub fn new(entries: Vec<TimelineEvent>) -> Result<EventTimeline, MetricsError> {
        for (i, e) in entries.iter().enumerate() {
            if e.start > e.end {
                return Err(MetricsError::Timeline {
                    line: i as u64 + 1,
                    msg: format!("start {} after end {}", e.start, e.end),
                });
            }
        }
        Ok(EventTimeline { entries })
    }

    /// Reads `city,ref,description,start_date,end_date`.
    pub fn read_csv<R: Read>(input: R) -> Result<EventTimeline, MetricsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let err = |msg: String| MetricsError::Timeline { line, msg };
            if rec.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", rec.len())));
            }
            let event_ref = match &rec[1] {
                "-" | "" => EventRef(None),
                r => EventRef(Some(r.parse().map_err(|e| err(format!("ref '{r}': {e}")))?)),
            };
            let date = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| err(format!("date '{s}': {e}")));
            let (start, end) = (date(&rec[3])?, date(&rec[4])?);
            if start > end {
                return Err(err(format!("start {start} after end {end}")));
            }
            entries.push(TimelineEvent {
                city: rec[0].to_owned(),
                event_ref,
                description: rec[2].to_owned(),
                start,
                end,
            });
        }
        Ok(EventTimeline { entries })
    }

    pub fn has_city(&self, city: &str) -> bool {
        self.entries.iter().any(|e| e.city.eq_ignore_ascii_case(city))
    }

    pub fn city_events<'a>(&'a self, city: &'a str) -> impl Iterator<Item = &'a TimelineEvent> + 'a {
        self.entries.iter().filter(move |e| e.city.eq_ignore_ascii_case(city))
    }
}
