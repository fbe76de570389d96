//! Shared builders and brute-force reference implementations for the
//! integration tests. Nothing here calls into the library's metric or
//! assignment code; the references work on plain vectors.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use netpulse::assign::VdfParams;
use netpulse::netbuild::{Link, LinkId, NetworkMode, Node, NodeId, RoadClass, RoadNetwork, ZoneSet};
use netpulse::{DepartureSlot, ObservationPanel, TravelTimeObservation};
use rand::Rng;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 2, 25).unwrap()
}

pub fn ymd(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, m, d).unwrap()
}

/// `|a - b| / |b|`, zero when both are equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Chain network `0 -> 1 -> ... -> n` with the given link lengths; link ids
/// start at 1.
pub fn chain_network(lengths: &[f64], free_flow: &[f64], mode: NetworkMode) -> RoadNetwork {
    let nodes = (0..=lengths.len())
        .map(|i| Node {
            id: NodeId(i as i64),
            lat: 50.0,
            lon: 30.0 + i as f64 * 0.001,
        })
        .collect();
    let links = lengths
        .iter()
        .zip(free_flow)
        .enumerate()
        .map(|(i, (&len, &ff))| Link {
            id: LinkId(i as u64 + 1),
            from: NodeId(i as i64),
            to: NodeId(i as i64 + 1),
            length_m: len,
            free_flow_s: ff,
            capacity_vph: 900.0,
            class: RoadClass::Secondary,
        })
        .collect();
    RoadNetwork::new(nodes, links, mode).unwrap()
}

/// Parallel links between two nodes, one origin zone and one destination
/// zone.
pub fn parallel_network(fft: &[f64], capacity: &[f64]) -> (RoadNetwork, ZoneSet) {
    let nodes = vec![
        Node { id: NodeId(1), lat: 50.0, lon: 30.0 },
        Node { id: NodeId(2), lat: 50.0, lon: 30.1 },
    ];
    let links = fft
        .iter()
        .zip(capacity)
        .enumerate()
        .map(|(i, (&t, &c))| Link {
            id: LinkId(i as u64 + 1),
            from: NodeId(1),
            to: NodeId(2),
            length_m: 1000.0,
            free_flow_s: t,
            capacity_vph: c,
            class: RoadClass::Primary,
        })
        .collect();
    let net = RoadNetwork::new(nodes, links, NetworkMode::City).unwrap();
    let zones = ZoneSet::from_centroids(&net, &[NodeId(1), NodeId(2)]).unwrap();
    (net, zones)
}

/// Equilibrium on parallel links by bisection on the common travel time.
/// Each link carries the flow at which its cost reaches that time, zero if
/// its free-flow time is already higher.
pub fn parallel_ue_oracle(fft: &[f64], capacity: &[f64], demand: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let flow_at = |tau: f64| -> Vec<f64> {
        fft.iter()
            .zip(capacity)
            .map(|(&t0, &c)| {
                if tau <= t0 {
                    0.0
                } else {
                    c * ((tau / t0 - 1.0) / alpha).powf(1.0 / beta)
                }
            })
            .collect()
    };
    let mut lo = fft.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = lo;
    while flow_at(hi).iter().sum::<f64>() < demand {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if flow_at(mid).iter().sum::<f64>() < demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    flow_at(0.5 * (lo + hi))
}

/// BPR cost written out directly.
pub fn bpr(fft: f64, capacity: f64, flow: f64, vdf: &VdfParams) -> f64 {
    fft * (1.0 + vdf.alpha * (flow / capacity).powf(vdf.beta))
}

/// One raw observation, kept outside the panel for the reference
/// computations. `day` counts from [`day0`].
#[derive(Debug, Clone, Copy)]
pub struct RawObs {
    pub link: u64,
    pub day: i64,
    pub slot: DepartureSlot,
    pub time: f64,
    pub free_flow: Option<f64>,
}

impl RawObs {
    pub fn date(&self) -> NaiveDate {
        day0() + Days::new(self.day as u64)
    }

    pub fn to_observation(self) -> TravelTimeObservation {
        TravelTimeObservation {
            link: LinkId(self.link),
            date: self.date(),
            slot: self.slot,
            travel_time_s: self.time,
            free_flow_s: self.free_flow,
        }
    }
}

pub fn panel_of(raw: &[RawObs]) -> ObservationPanel {
    ObservationPanel::from_observations(raw.iter().map(|r| r.to_observation())).unwrap()
}

/// Random panel of at most `max_obs` observations over `links` links and
/// `days` days with distinct (link, day, slot) keys.
pub fn random_raw_panel<R: Rng>(rng: &mut R, links: u64, days: i64, max_obs: usize) -> Vec<RawObs> {
    let target = rng.gen_range(1..=max_obs);
    let mut keys = BTreeSet::new();
    let capacity = (links * days as u64 * 3) as usize;
    while keys.len() < target.min(capacity) {
        let slot = DepartureSlot::ALL[rng.gen_range(0..3)];
        keys.insert((rng.gen_range(1..=links), rng.gen_range(0..days), slot));
    }
    keys.into_iter()
        .map(|(link, day, slot)| RawObs {
            link,
            day,
            slot,
            time: rng.gen_range(10.0..500.0),
            free_flow: if rng.gen_bool(0.3) { Some(rng.gen_range(10.0..200.0)) } else { None },
        })
        .collect()
}

/// Slot filter for the references: `None` pools all slots.
pub type SlotFilter = Option<DepartureSlot>;

fn slot_ok(filter: SlotFilter, s: DepartureSlot) -> bool {
    filter.map_or(true, |f| f == s)
}

/// Population CoV via the pairwise-difference form of the variance,
/// `sum_ij (x_i - x_j)^2 / (2 n^2)`. `None` below two values.
pub fn naive_cov(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mut mean = 0.0;
    for v in values {
        mean += v / n as f64;
    }
    let mut acc = 0.0;
    for a in values {
        for b in values {
            acc += (a - b) * (a - b);
        }
    }
    Some((acc / (2.0 * (n * n) as f64)).sqrt() / mean)
}

pub fn window_values(raw: &[RawObs], link: u64, slot: SlotFilter, anchor: i64, width: i64) -> Vec<f64> {
    raw.iter()
        .filter(|r| r.link == link && slot_ok(slot, r.slot) && r.day <= anchor && r.day > anchor - width)
        .map(|r| r.time)
        .collect()
}

/// Network CoV reference: mean over eligible links with a defined value,
/// plus the count.
pub fn naive_network_cov(
    raw: &[RawObs],
    lengths: &BTreeMap<u64, f64>,
    min_len: f64,
    slot: SlotFilter,
    anchor: i64,
    width: i64,
) -> Option<(f64, usize)> {
    let links: BTreeSet<u64> = raw.iter().map(|r| r.link).collect();
    let covs: Vec<f64> = links
        .into_iter()
        .filter(|l| lengths.get(l).is_some_and(|&len| len >= min_len))
        .filter_map(|l| naive_cov(&window_values(raw, l, slot, anchor, width)))
        .collect();
    if covs.is_empty() {
        None
    } else {
        Some((covs.iter().sum::<f64>() / covs.len() as f64, covs.len()))
    }
}

/// Daily network congestion reference: mean of `time / free_flow` where the
/// observation's own free-flow time wins over the network's.
pub fn naive_network_ci(
    raw: &[RawObs],
    lengths: &BTreeMap<u64, f64>,
    free_flow: &BTreeMap<u64, f64>,
    min_len: f64,
    slot: SlotFilter,
    day: i64,
) -> Option<(f64, usize)> {
    let ratios: Vec<f64> = raw
        .iter()
        .filter(|r| r.day == day && slot_ok(slot, r.slot))
        .filter(|r| lengths.get(&r.link).is_some_and(|&len| len >= min_len))
        .map(|r| r.time / r.free_flow.unwrap_or(free_flow[&r.link]))
        .collect();
    if ratios.is_empty() {
        None
    } else {
        Some((ratios.iter().sum::<f64>() / ratios.len() as f64, ratios.len()))
    }
}

/// Trailing-window mean of the daily congestion references: (day, value,
/// days averaged).
pub fn naive_ci_series(
    raw: &[RawObs],
    lengths: &BTreeMap<u64, f64>,
    free_flow: &BTreeMap<u64, f64>,
    min_len: f64,
    slot: SlotFilter,
    width: i64,
) -> Vec<(i64, f64, usize)> {
    let days: BTreeSet<i64> = raw.iter().map(|r| r.day).collect();
    let daily: Vec<(i64, f64)> = days
        .into_iter()
        .filter_map(|d| naive_network_ci(raw, lengths, free_flow, min_len, slot, d).map(|(v, _)| (d, v)))
        .collect();
    daily
        .iter()
        .map(|&(d, _)| {
            let inside: Vec<f64> = daily.iter().filter(|(e, _)| *e <= d && *e > d - width).map(|(_, v)| *v).collect();
            (d, inside.iter().sum::<f64>() / inside.len() as f64, inside.len())
        })
        .collect()
}

/// Writes a config pointing at the bundled fixture inputs with a small GA,
/// returning its path. `extra` is appended verbatim.
pub fn write_fixture_config(dir: &Path, extra: &str) -> PathBuf {
    let f = fixtures_dir();
    let p = |name: &str| f.join(name).display().to_string().replace('\\', "/");
    let text = format!(
        r#"out_dir = "out"
workers = 0

[network]
osm = "{osm}"
bbox = [30.44, 50.39, 30.50, 50.43]
mode = "city"

[ingest]
observations = ["{obs}"]
provider = "{provider}"
segment_map = "{segments}"

[metrics]
timeline = "{timeline}"
city = "Kyiv"

[assign]
od = "{od}"

[ue]
max_iter = 600

[ga]
population = 8
generations = 4
seed = 7

[estimate]
dates = ["2022-02-28", "2022-03-16", "2022-04-12"]
slot = "morning"

[report]
city = "Kyiv"
base_date = "2022-02-28"
{extra}"#,
        osm = p("network.osm"),
        obs = p("observations.csv"),
        provider = p("provider.jsonl"),
        segments = p("segments.csv"),
        timeline = p("timeline.csv"),
        od = p("truth_od.csv"),
    );
    let path = dir.join("netpulse.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub struct CliRun {
    pub status: i32,
    pub stderr: String,
}

/// Runs the binary with `--config cfg --out out` after the command.
pub fn run_cli(command: &str, cfg: &Path, out: &Path, extra: &[&str]) -> CliRun {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_netpulse"))
        .arg(command)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("NETPULSE_OUT_DIR")
        .output()
        .expect("spawn netpulse");
    CliRun {
        status: output.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

pub const PIPELINE: [&str; 8] = [
    "build-network",
    "build-zones",
    "ingest",
    "reliability",
    "metrics",
    "assign",
    "estimate",
    "report",
];

/// Every file below `root` keyed by its `/`-separated relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
