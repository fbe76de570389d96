use serde::Serialize;

use super::{MetricsError, SlotSelector, WindowSpec};
use crate::ingest::ObservationPanel;
use crate::netbuild::{LinkId, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkCov {
    pub link: LinkId,
    pub slot: SlotSelector,
    pub window: WindowSpec,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub cov: f64,
    pub sample_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkCov {
    pub slot: SlotSelector,
    pub window: WindowSpec,
    pub value: f64,
    pub n: usize,
}

/// Coefficient of variation of one link's travel times in the window.
///
/// `None` when fewer than two observations fall in the window.
pub fn link_cov(panel: &ObservationPanel, link: LinkId, slot: SlotSelector, window: WindowSpec) -> Option<LinkCov> {
    let values: Vec<f64> = panel
        .link_observations(link)
        .filter(|o| window.contains(o.date) && slot.matches(o.slot))
        .map(|o| o.travel_time_s)
        .collect();
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return None;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    Some(LinkCov {
        link,
        slot,
        window,
        mean,
        std,
        cov: std / mean,
        sample_size: n,
    })
}

/// Mean link CoV over links at least `min_length_m` long that have a
/// defined value in the window.
pub fn network_cov(
    panel: &ObservationPanel,
    network: &RoadNetwork,
    slot: SlotSelector,
    window: WindowSpec,
    min_length_m: f64,
) -> Result<NetworkCov, MetricsError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for id in panel.links() {
        match network.link(id) {
            Some(l) if l.length_m >= min_length_m => {}
            _ => continue,
        }
        if let Some(c) = link_cov(panel, id, slot, window) {
            sum += c.cov;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::UndefinedWindow(window.anchor));
    }
    Ok(NetworkCov {
        slot,
        window,
        value: sum / n as f64,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DepartureSlot, TravelTimeObservation};
    use crate::netbuild::{Link, NetworkMode, Node, NodeId, RoadClass};
    use chrono::{Days, NaiveDate};

    fn d0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 3, 1).unwrap()
    }

    fn daily(link: u64, values: &[f64]) -> Vec<TravelTimeObservation> {
        values
            .iter()
            .enumerate()
            .map(|(i, &t)| TravelTimeObservation {
                link: LinkId(link),
                date: d0() + Days::new(i as u64),
                slot: DepartureSlot::Morning,
                travel_time_s: t,
                free_flow_s: None,
            })
            .collect()
    }

    fn net(n: usize) -> RoadNetwork {
        let nodes = (0..=n).map(|i| Node { id: NodeId(i as i64), lat: 0.0, lon: i as f64 * 0.01 }).collect();
        let links = (0..n)
            .map(|i| Link {
                id: LinkId(i as u64 + 1),
                from: NodeId(i as i64),
                to: NodeId(i as i64 + 1),
                length_m: 1000.0,
                free_flow_s: 60.0,
                capacity_vph: 900.0,
                class: RoadClass::Secondary,
            })
            .collect();
        RoadNetwork::new(nodes, links, NetworkMode::City).unwrap()
    }

    fn window_end(days: u64) -> WindowSpec {
        WindowSpec::new(7, d0() + Days::new(days)).unwrap()
    }

    #[test]
    fn constant_values_have_zero_cov() {
        let p = ObservationPanel::from_observations(daily(1, &[100.0; 7])).unwrap();
        let c = link_cov(&p, LinkId(1), DepartureSlot::Morning.into(), window_end(6)).unwrap();
        assert_eq!(c.cov, 0.0);
        assert_eq!(c.sample_size, 7);
    }

    #[test]
    fn two_point_population_std() {
        let p = ObservationPanel::from_observations(daily(1, &[90.0, 110.0])).unwrap();
        let c = link_cov(&p, LinkId(1), SlotSelector::WholeDay, window_end(1)).unwrap();
        assert_eq!((c.mean, c.std), (100.0, 10.0));
        assert_eq!(c.cov, 0.1);
    }

    #[test]
    fn single_observation_is_undefined() {
        let p = ObservationPanel::from_observations(daily(1, &[90.0])).unwrap();
        assert!(link_cov(&p, LinkId(1), SlotSelector::WholeDay, window_end(0)).is_none());
        // slot mismatch leaves nothing in the window
        let p = ObservationPanel::from_observations(daily(1, &[90.0, 100.0])).unwrap();
        assert!(link_cov(&p, LinkId(1), DepartureSlot::Evening.into(), window_end(1)).is_none());
    }

    #[test]
    fn window_excludes_old_days() {
        // day 0 value is an outlier that drops out of the window ending day 7
        let mut vals = vec![500.0];
        vals.extend([100.0; 7]);
        let p = ObservationPanel::from_observations(daily(1, &vals)).unwrap();
        let c = link_cov(&p, LinkId(1), SlotSelector::WholeDay, window_end(7)).unwrap();
        assert_eq!((c.cov, c.sample_size), (0.0, 7));
    }

    #[test]
    fn network_mean_and_exclusion() {
        // link 1: {80,120} -> cov 0.2 ; link 2: {60,140} -> cov 0.4
        let mut obs = daily(1, &[80.0, 120.0]);
        obs.extend(daily(2, &[60.0, 140.0]));
        obs.extend(daily(3, &[50.0]));
        let p = ObservationPanel::from_observations(obs).unwrap();
        let nc = network_cov(&p, &net(3), SlotSelector::WholeDay, window_end(1), 100.0).unwrap();
        assert_eq!(nc.n, 2);
        assert!((nc.value - 0.3).abs() < 1e-15);

        let mut obs = daily(1, &[80.0, 120.0]);
        obs.extend(daily(3, &[50.0]));
        let p = ObservationPanel::from_observations(obs).unwrap();
        let nc = network_cov(&p, &net(3), SlotSelector::WholeDay, window_end(1), 100.0).unwrap();
        assert_eq!((nc.n, nc.value), (1, 0.2));
    }

    #[test]
    fn all_constant_network_is_zero() {
        let mut obs = daily(1, &[50.0; 3]);
        obs.extend(daily(2, &[70.0; 3]));
        let p = ObservationPanel::from_observations(obs).unwrap();
        let nc = network_cov(&p, &net(2), SlotSelector::WholeDay, window_end(2), 100.0).unwrap();
        assert_eq!(nc.value, 0.0);
    }

    #[test]
    fn undefined_window_error() {
        let p = ObservationPanel::from_observations(daily(1, &[50.0])).unwrap();
        assert!(matches!(
            network_cov(&p, &net(1), SlotSelector::WholeDay, window_end(0), 100.0),
            Err(MetricsError::UndefinedWindow(_))
        ));
        // length filter removes the only link
        let p = ObservationPanel::from_observations(daily(1, &[50.0, 60.0])).unwrap();
        assert!(network_cov(&p, &net(1), SlotSelector::WholeDay, window_end(1), 2000.0).is_err());
    }
}
