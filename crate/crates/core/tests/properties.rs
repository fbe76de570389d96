mod common;

use common::*;
use netpulse::assign::{vdf_time, NetworkStats, OdMatrix, VdfParams};
use netpulse::estimate::{compare_days, format_delta, Chromosome};
use netpulse::metrics::{link_cov, SlotSelector, WindowSpec};
use netpulse::netbuild::{build_zones, LinkId};
use netpulse::synthetic::{grid_network, GridSpec};
use netpulse::{DepartureSlot, ObservationPanel};
use proptest::prelude::*;

fn stats(v: [f64; 3]) -> NetworkStats {
    NetworkStats {
        avg_trip_length_m: v[0],
        avg_travel_time_s: v[1],
        total_demand: v[2],
        converged: true,
    }
}

proptest! {
    #[test]
    fn vdf_starts_at_free_flow_and_never_decreases(
        fft in 1.0..1000.0f64,
        cap in 10.0..5000.0f64,
        a in 0.0..5000.0f64,
        b in 0.0..5000.0f64,
    ) {
        let vdf = VdfParams::default();
        let link = chain_network(&[100.0], &[fft], netpulse::NetworkMode::City).links()[0].clone();
        let link = netpulse::Link { capacity_vph: cap, ..link };
        prop_assert_eq!(vdf_time(&link, 0.0, &vdf), fft);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(vdf_time(&link, lo, &vdf) <= vdf_time(&link, hi, &vdf));
        let direct = bpr(fft, cap, hi, &vdf);
        prop_assert!((vdf_time(&link, hi, &vdf) - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn cov_is_scale_invariant_and_non_negative(
        values in prop::collection::vec(1.0..1000.0f64, 2..30),
        scale in 0.001..1000.0f64,
    ) {
        let raw: Vec<RawObs> = values.iter().enumerate().map(|(i, &t)| RawObs {
            link: 1, day: i as i64, slot: DepartureSlot::Afternoon, time: t, free_flow: None,
        }).collect();
        let scaled: Vec<RawObs> = raw.iter().map(|r| RawObs { time: r.time * scale, ..*r }).collect();
        let w = WindowSpec::new(values.len() as u32, raw.last().unwrap().date()).unwrap();
        let a = link_cov(&panel_of(&raw), LinkId(1), SlotSelector::WholeDay, w).unwrap();
        let b = link_cov(&panel_of(&scaled), LinkId(1), SlotSelector::WholeDay, w).unwrap();
        prop_assert!(a.cov >= 0.0);
        prop_assert!((a.cov - b.cov).abs() <= 1e-12 * a.cov.max(1e-300));
        prop_assert_eq!(a.sample_size, values.len());
    }

    #[test]
    fn deltas_are_sign_explicit_with_two_decimals(pct in -1000.0..1000.0f64) {
        let s = format_delta(pct);
        let (sign, body) = s.split_at(1);
        prop_assert!(sign == "+" || sign == "-");
        let (int, frac) = body.split_once('.').unwrap();
        prop_assert!(!int.is_empty() && int.bytes().all(|c| c.is_ascii_digit()));
        prop_assert_eq!(frac.len(), 2);
        prop_assert!((s.parse::<f64>().unwrap() - pct).abs() <= 0.005 + 1e-9);
    }

    #[test]
    fn comparing_in_both_directions_inverts_the_ratio(
        a in prop::array::uniform3(1.0..1e6f64),
        b in prop::array::uniform3(1.0..1e6f64),
    ) {
        let d0 = chrono::NaiveDate::from_ymd_opt(2022, 2, 28).unwrap();
        let d1 = chrono::NaiveDate::from_ymd_opt(2022, 3, 16).unwrap();
        let ab = compare_days("x", d0, &stats(a), &[(d1, stats(b))]).unwrap().rows[1].deltas.unwrap();
        let ba = compare_days("x", d1, &stats(b), &[(d0, stats(a))]).unwrap().rows[1].deltas.unwrap();
        for k in 0..3 {
            let product = (1.0 + ab[k] / 100.0) * (1.0 + ba[k] / 100.0);
            prop_assert!((product - 1.0).abs() <= 1e-9);
            prop_assert!(ab[k] * ba[k] <= 0.0);
        }
    }

    #[test]
    fn od_csv_and_chromosome_round_trip(cells in prop::collection::vec(prop_oneof![Just(0.0), 0.0..5000.0f64], 72)) {
        let net = grid_network(&GridSpec::default());
        let zones = build_zones(&net, 3, 3).unwrap();
        let mut dense = vec![0.0; 81];
        let mut it = cells.iter();
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    dense[i * 9 + j] = *it.next().unwrap();
                }
            }
        }
        let od = OdMatrix::from_dense(&zones, dense).unwrap();
        let mut buf = Vec::new();
        od.write_csv(&mut buf).unwrap();
        prop_assert_eq!(&OdMatrix::read_csv(buf.as_slice(), &zones).unwrap(), &od);
        prop_assert_eq!(&Chromosome::from_od(&od).decode(&zones).unwrap(), &od);
    }

    #[test]
    fn panel_csv_round_trip(seed in 0u64..1000) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw = random_raw_panel(&mut rng, 5, 10, 60);
        let panel = panel_of(&raw);
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = ObservationPanel::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), panel.len());
        for (a, b) in back.iter().zip(panel.iter()) {
            prop_assert_eq!(a, b);
        }
    }
}
