use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::MetricsError;
use crate::netbuild::{LinkId, RoadNetwork};

/// Piecewise-linear RGB ramp from low to high values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorScale {
    pub stops: Vec<[u8; 3]>,
}

impl Default for ColorScale {
    /// Dark blue through pale yellow to dark red.
    fn default() -> Self {
        ColorScale {
            stops: vec![[0x00, 0x00, 0x8b], [0xff, 0xff, 0xbf], [0x8b, 0x00, 0x00]],
        }
    }
}

impl ColorScale {
    /// Hex colour at hue position `h` in [0, 1].
    pub fn color(&self, h: f64) -> String {
        let rgb = match self.stops.len() {
            0 => [0, 0, 0],
            1 => self.stops[0],
            n => {
                let x = h.clamp(0.0, 1.0) * (n - 1) as f64;
                let i = (x.floor() as usize).min(n - 2);
                let t = x - i as f64;
                let (a, b) = (self.stops[i], self.stops[i + 1]);
                [0, 1, 2].map(|k| (a[k] as f64 + t * (b[k] as f64 - a[k] as f64)).round() as u8)
            }
        };
        format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
    }
}

/// GeoJSON line features for every network link with a value, carrying the
/// raw value and its min-max normalised hue position. A map whose values
/// are all equal puts every link at 0.5.
pub fn hue_map(network: &RoadNetwork, values: &BTreeMap<LinkId, f64>, scale: &ColorScale) -> Result<Value, MetricsError> {
    let mut rows = Vec::new();
    for (&id, &v) in values {
        let Some(link) = network.link(id) else { continue };
        if !v.is_finite() {
            return Err(MetricsError::NonFiniteValue(id));
        }
        rows.push((link, v));
    }
    if rows.is_empty() {
        return Err(MetricsError::EmptyValues);
    }
    let lo = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let features: Vec<Value> = rows
        .iter()
        .map(|&(link, v)| {
            let hue = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let a = network.node(link.from).unwrap();
            let b = network.node(link.to).unwrap();
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[a.lon, a.lat], [b.lon, b.lat]],
                },
                "properties": {
                    "link_id": link.id.0,
                    "value": v,
                    "hue01": hue,
                    "color": scale.color(hue),
                },
            })
        })
        .collect();
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{Link, NetworkMode, Node, NodeId, RoadClass};

    fn net() -> RoadNetwork {
        let nodes = (0..4).map(|i| Node { id: NodeId(i), lat: 50.0, lon: 30.0 + i as f64 * 0.01 }).collect();
        let links = (0..3)
            .map(|i| Link {
                id: LinkId(i as u64 + 1),
                from: NodeId(i),
                to: NodeId(i + 1),
                length_m: 700.0,
                free_flow_s: 50.0,
                capacity_vph: 900.0,
                class: RoadClass::Secondary,
            })
            .collect();
        RoadNetwork::new(nodes, links, NetworkMode::City).unwrap()
    }

    fn hues(doc: &Value) -> Vec<(u64, f64)> {
        doc["features"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| (f["properties"]["link_id"].as_u64().unwrap(), f["properties"]["hue01"].as_f64().unwrap()))
            .collect()
    }

    #[test]
    fn min_max_endpoints() {
        let v = BTreeMap::from([(LinkId(1), 0.1), (LinkId(2), 0.5)]);
        let doc = hue_map(&net(), &v, &ColorScale::default()).unwrap();
        assert_eq!(hues(&doc), vec![(1, 0.0), (2, 1.0)]);
        assert_eq!(doc["features"][0]["properties"]["color"], "#00008b");
        assert_eq!(doc["features"][1]["properties"]["color"], "#8b0000");
        assert_eq!(doc["features"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn equal_values_sit_mid_scale() {
        let v = BTreeMap::from([(LinkId(1), 0.3), (LinkId(2), 0.3), (LinkId(3), 0.3)]);
        let doc = hue_map(&net(), &v, &ColorScale::default()).unwrap();
        assert!(hues(&doc).iter().all(|h| h.1 == 0.5));
    }

    #[test]
    fn empty_values_error() {
        assert!(matches!(
            hue_map(&net(), &BTreeMap::new(), &ColorScale::default()),
            Err(MetricsError::EmptyValues)
        ));
        let v = BTreeMap::from([(LinkId(1), f64::NAN)]);
        assert!(hue_map(&net(), &v, &ColorScale::default()).is_err());
    }
}
