//! Provider segment keys to network link ids.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;

use super::{LinkId, NetError, RoadNetwork};

/// `segment_key -> link_id` mapping table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentMap {
    map: BTreeMap<String, LinkId>,
}

impl SegmentMap {
    /// Builds a map from pairs. Repeated identical rows collapse; a key
    /// mapped to two different links is an integrity error.
    pub fn from_pairs<I, K>(pairs: I) -> Result<SegmentMap, NetError>
    where
        I: IntoIterator<Item = (K, LinkId)>,
        K: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            let k = k.into();
            if let Some(prev) = map.insert(k.clone(), v) {
                if prev != v {
                    return Err(NetError::SegmentMap(format!(
                        "segment key '{k}' maps to both link {prev} and link {v}"
                    )));
                }
            }
        }
        Ok(SegmentMap { map })
    }

    /// Reads a `segment_key,link_id` table.
    pub fn read_csv<R: Read>(input: R) -> Result<SegmentMap, NetError> {
        #[derive(Deserialize)]
        struct Row {
            segment_key: String,
            link_id: u64,
        }
        let rows = csv::Reader::from_reader(input)
            .deserialize::<Row>()
            .map(|r| r.map(|r| (r.segment_key, LinkId(r.link_id))))
            .collect::<Result<Vec<_>, _>>()?;
        SegmentMap::from_pairs(rows)
    }

    pub fn get(&self, key: &str) -> Option<LinkId> {
        self.map.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Segment keys that could not be joined to a network link, with the number
/// of times each was seen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnmatchedReport {
    keys: BTreeMap<String, usize>,
}

impl UnmatchedReport {
    pub fn record(&mut self, key: &str) {
        *self.keys.entry(key.to_owned()).or_default() += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.keys.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.keys.iter().map(|(k, &n)| (k.as_str(), n))
    }

    /// Writes `segment_key,occurrences`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), NetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["segment_key", "occurrences"])?;
        for (k, n) in &self.keys {
            w.write_record([k.as_str(), &n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Resolves a provider segment key to a network link. Keys missing from the
/// table, or mapped to a link the network does not contain, are recorded in
/// `unmatched` and yield `None`.
pub fn link_lookup(
    network: &RoadNetwork,
    map: &SegmentMap,
    key: &str,
    unmatched: &mut UnmatchedReport,
) -> Option<LinkId> {
    match map.get(key) {
        Some(id) if network.link(id).is_some() => Some(id),
        _ => {
            unmatched.record(key);
            None
        }
    }
}
