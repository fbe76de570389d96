//! Regenerates the bundled fixture files under `fixtures/`.
//!
//! The observation panel is built from equilibrium link times of a
//! gravity-shaped demand matrix whose level varies by day and slot, with
//! multiplicative noise and occasional stale repeats of the previous day's
//! value. The evening readings of the last day are written as a provider
//! dump instead of panel rows so the adapter path has data.
//!
//! Run with `cargo run --release --example make_fixtures`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use chrono::{Datelike, NaiveDate};
use netpulse::assign::{user_equilibrium, UeParams, VdfParams};
use netpulse::ingest::{DepartureSlot, ObservationPanel, TravelTimeObservation};
use netpulse::netbuild::{build_zones, parse_network_str, Bbox, ClassTable, LinkId, NetworkMode};
use netpulse::synthetic::{date_range, gravity_od, grid_osm, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const BBOX: [f64; 4] = [30.44, 50.39, 30.50, 50.43];
const TRUTH_TOTAL: f64 = 20_000.0;
const NOISE: f64 = 0.02;
const STALE_PROBABILITY: f64 = 0.3;

fn ymd(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, m, d).unwrap()
}

fn demand_factor(date: NaiveDate, slot: DepartureSlot) -> f64 {
    let slot_level = match slot {
        DepartureSlot::Morning => 1.0,
        DepartureSlot::Afternoon => 0.75,
        DepartureSlot::Evening => 1.1,
    };
    let day = date.ordinal() as f64;
    let weekend = if date.weekday().number_from_monday() >= 6 { 0.8 } else { 1.0 };
    let disruption = if date < ymd(3, 1) { 0.85 } else if date <= ymd(3, 16) { 1.1 } else { 0.95 };
    slot_level * weekend * disruption * (1.0 + 0.05 * (day / 3.0).sin())
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).unwrap();
    let osm = grid_osm(&GridSpec::default());
    std::fs::write(dir.join("network.osm"), &osm).unwrap();

    let bbox = Bbox::from_array(BBOX).unwrap();
    let net = parse_network_str(&osm, bbox, NetworkMode::City, &ClassTable::default()).unwrap();
    let zones = build_zones(&net, 3, 3).unwrap();
    let truth = gravity_od(&net, &zones, TRUTH_TOTAL, 0.5, 11);
    let mut buf = Vec::new();
    truth.write_csv(&mut buf).unwrap();
    std::fs::write(dir.join("truth_od.csv"), buf).unwrap();

    let mut dates = date_range(ymd(2, 25), ymd(3, 16));
    dates.extend(date_range(ymd(3, 25), ymd(4, 12)));
    let last = *dates.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2022);
    let mut previous: HashMap<(LinkId, DepartureSlot), f64> = HashMap::new();
    let mut panel = ObservationPanel::new();
    let mut provider = String::new();
    let ue = UeParams { tol: 1e-5, max_iter: 2000 };
    for &date in &dates {
        for slot in DepartureSlot::ALL {
            let od = truth.scaled(demand_factor(date, slot)).unwrap();
            let r = user_equilibrium(&net, &zones, &od, &VdfParams::default(), &ue).unwrap();
            for (l, &t) in net.links().iter().zip(&r.times) {
                let key = (l.id, slot);
                let value = match previous.get(&key) {
                    Some(&p) if rng.gen_bool(STALE_PROBABILITY) => p,
                    _ => {
                        let z: f64 = rng.sample(StandardNormal);
                        ((t * (1.0 + NOISE * z)) * 10.0).round() / 10.0
                    }
                };
                previous.insert(key, value);
                if date == last && slot == DepartureSlot::Evening {
                    let _ = writeln!(
                        provider,
                        "{{\"date\":\"{date}\",\"slot\":\"evening\",\"segmentKey\":\"seg-{}\",\"currentTravelTime\":{value},\"freeFlowTravelTime\":{}}}",
                        l.id,
                        (l.free_flow_s * 10.0).round() / 10.0
                    );
                } else {
                    panel
                        .insert(TravelTimeObservation {
                            link: l.id,
                            date,
                            slot,
                            travel_time_s: value,
                            free_flow_s: None,
                        })
                        .unwrap();
                }
            }
        }
    }
    for key in ["seg-unmapped-a", "seg-unmapped-b"] {
        let _ = writeln!(
            provider,
            "{{\"date\":\"{last}\",\"slot\":\"evening\",\"segmentKey\":\"{key}\",\"currentTravelTime\":42.0,\"freeFlowTravelTime\":30.0}}"
        );
    }
    let mut buf = Vec::new();
    panel.write_csv(&mut buf).unwrap();
    std::fs::write(dir.join("observations.csv"), buf).unwrap();
    std::fs::write(dir.join("provider.jsonl"), provider).unwrap();

    let mut map = String::from("segment_key,link_id\n");
    for l in net.links() {
        let _ = writeln!(map, "seg-{},{}", l.id, l.id);
    }
    std::fs::write(dir.join("segments.csv"), map).unwrap();
    println!("fixtures written to {}", dir.display());
}
