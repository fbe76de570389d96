use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CliError, Command, RunConfig};
use crate::assign::{network_stats, AssignmentResult, user_equilibrium, write_assignment_csv, NetworkStats, OdMatrix};
use crate::estimate::{compare_days, estimate_od, observed_times, zonal_geojson, ComparisonReport, ZonalReport};
use crate::ingest::{adapt_provider_response, reliability_report, DepartureSlot, ObservationPanel, ProviderLine};
use crate::metrics::{
    annotate, hue_map, link_cov, moving_series, ColorScale, EventTimeline, MetricKind, SlotSelector, WindowSpec,
};
use crate::netbuild::{build_zones, parse_network, RoadNetwork, SegmentMap, UnmatchedReport, ZoneSet};

const NODES_CSV: &str = "network/nodes.csv";
const LINKS_CSV: &str = "network/links.csv";
const ZONES_CSV: &str = "zones.csv";
const OBSERVATIONS_CSV: &str = "observations.csv";

/// Files written by one command, relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(root: &Path) -> Artifacts {
        Artifacts {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    fn put(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<(), CliError> {
        let rel = rel.as_ref();
        let full = self.root.join(rel);
        if let Some(dir) = full.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(&full, bytes).map_err(|e| CliError::io(&full, e))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    fn put_json(&mut self, rel: impl AsRef<Path>, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        self.put(rel, (text + "\n").as_bytes())
    }
}

/// Collects bytes from a writer-style serializer.
fn buffer<E>(f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<Vec<u8>, CliError>
where
    CliError: From<E>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn upstream(out: &Path, rel: &str) -> Result<File, CliError> {
    let p = out.join(rel);
    File::open(&p).map_err(|_| CliError::MissingArtifact(p))
}

fn load_network(cfg: &RunConfig, out: &Path) -> Result<RoadNetwork, CliError> {
    Ok(RoadNetwork::read_csv(
        BufReader::new(upstream(out, NODES_CSV)?),
        BufReader::new(upstream(out, LINKS_CSV)?),
        cfg.network.mode,
    )?)
}

fn load_zones(cfg: &RunConfig, out: &Path, network: &RoadNetwork) -> Result<ZoneSet, CliError> {
    Ok(ZoneSet::read_csv(
        BufReader::new(upstream(out, ZONES_CSV)?),
        network,
        cfg.zoning.rows,
        cfg.zoning.cols,
    )?)
}

fn load_panel(out: &Path) -> Result<ObservationPanel, CliError> {
    Ok(ObservationPanel::read_csv(BufReader::new(upstream(out, OBSERVATIONS_CSV)?))?)
}

fn open_input(cfg: &RunConfig, p: &Path) -> Result<BufReader<File>, CliError> {
    let full = cfg.resolve(p);
    File::open(&full).map(BufReader::new).map_err(|e| CliError::io(&full, e))
}

/// Runs one pipeline stage, writing into `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Artifacts, CliError> {
    info!("running {command} into {}", out.display());
    let mut art = Artifacts::new(out);
    match command {
        Command::BuildNetwork => build_network(cfg, &mut art)?,
        Command::BuildZones => zones(cfg, out, &mut art)?,
        Command::Ingest => ingest(cfg, out, &mut art)?,
        Command::Reliability => reliability(cfg, out, &mut art)?,
        Command::Metrics => metrics(cfg, out, &mut art)?,
        Command::Assign => assign(cfg, out, &mut art)?,
        Command::Estimate => estimate(cfg, out, &mut art)?,
        Command::Report => report(cfg, out, &mut art)?,
    }
    Ok(art)
}

fn build_network(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let osm = cfg
        .network
        .osm
        .as_ref()
        .ok_or_else(|| CliError::Config("network.osm is required".into()))?;
    let bbox = cfg
        .bbox()?
        .ok_or_else(|| CliError::Config("network.bbox is required".into()))?;
    let net = parse_network(&cfg.resolve(osm), bbox, cfg.network.mode, &cfg.network.classes)?;
    let (mut nodes, mut links) = (Vec::new(), Vec::new());
    net.write_csv(&mut nodes, &mut links)?;
    art.put(NODES_CSV, &nodes)?;
    art.put(LINKS_CSV, &links)
}

fn zones(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<(), CliError> {
    let net = load_network(cfg, out)?;
    let zones = build_zones(&net, cfg.zoning.rows, cfg.zoning.cols)?;
    art.put(ZONES_CSV, &buffer(|b| zones.write_csv(b))?)
}

fn ingest(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<(), CliError> {
    let net = load_network(cfg, out)?;
    let mut panel = ObservationPanel::new();
    for p in &cfg.ingest.observations {
        for o in ObservationPanel::read_csv(open_input(cfg, p)?)?.iter() {
            panel.insert(*o)?;
        }
    }
    let mut unmatched = UnmatchedReport::default();
    if let (Some(provider), Some(map)) = (&cfg.ingest.provider, &cfg.ingest.segment_map) {
        let mapping = SegmentMap::read_csv(open_input(cfg, map)?)?;
        for (i, line) in open_input(cfg, provider)?.lines().enumerate() {
            let line = line.map_err(|e| CliError::io(provider, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ProviderLine = serde_json::from_str(&line)
                .map_err(|e| CliError::Ingest(crate::ingest::IngestError::Adapter(format!("provider line {}: {e}", i + 1))))?;
            if let Some(o) = adapt_provider_response(&rec.record, &net, &mapping, rec.date, rec.slot, &mut unmatched)? {
                panel.insert(o)?;
            }
        }
    }
    if panel.is_empty() {
        return Err(CliError::Config("ingest produced no observations; set ingest.observations or ingest.provider".into()));
    }
    art.put(OBSERVATIONS_CSV, &buffer(|b| panel.write_csv(b))?)?;
    art.put("unmatched_segments.csv", &buffer(|b| unmatched.write_csv(b))?)
}

fn reliability(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<(), CliError> {
    let net = load_network(cfg, out)?;
    let panel = load_panel(out)?;
    let report = reliability_report(&panel, &net, cfg.reliability_min_length(), cfg.reliability.uniqueness)?;
    let (mut links, mut hist) = (Vec::new(), Vec::new());
    report.write_csv(&mut links, &mut hist)?;
    art.put("reliability/links.csv", &links)?;
    art.put("reliability/histogram.csv", &hist)
}

fn slot_file_name(slot: SlotSelector) -> String {
    slot.to_string()
}

fn metrics(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<(), CliError> {
    let net = load_network(cfg, out)?;
    let panel = load_panel(out)?;
    let min_len = cfg.metrics_min_length();
    let timeline = match &cfg.metrics.timeline {
        Some(p) => Some(EventTimeline::read_csv(open_input(cfg, p)?)?),
        None => None,
    };
    for slot in cfg.metric_slots()? {
        for kind in [MetricKind::Cov, MetricKind::Ci] {
            let mut series = moving_series(&panel, &net, kind, slot, cfg.metrics.window_days, min_len)?;
            if let (Some(t), Some(city)) = (&timeline, &cfg.metrics.city) {
                series = annotate(&series, t, city)?;
            }
            let rel = format!("metrics/series_{kind}_{}.csv", slot_file_name(slot));
            art.put(rel, &buffer(|b| series.write_csv(b))?)?;
        }
    }
    let period = WindowSpec::study_period(&panel).ok_or(crate::metrics::MetricsError::EmptyValues)?;
    let mut values = BTreeMap::new();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["link_id", "mean_s", "std_s", "cov", "n"]).map_err(crate::metrics::MetricsError::from)?;
    for l in net.links().iter().filter(|l| l.length_m >= min_len) {
        if let Some(c) = link_cov(&panel, l.id, SlotSelector::WholeDay, period) {
            values.insert(l.id, c.cov);
            w.write_record([l.id.to_string(), c.mean.to_string(), c.std.to_string(), c.cov.to_string(), c.sample_size.to_string()])
                .map_err(crate::metrics::MetricsError::from)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    art.put("metrics/link_cov.csv", &bytes)?;
    let map = hue_map(&net, &values, &ColorScale::default())?;
    art.put_json("metrics/cov_huemap.geojson", &map)
}

fn assign(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<(), CliError> {
    let od_path = cfg
        .assign
        .od
        .as_ref()
        .ok_or_else(|| CliError::Config("assign.od is required".into()))?;
    let net = load_network(cfg, out)?;
    let zones = load_zones(cfg, out, &net)?;
    let od = OdMatrix::read_csv(open_input(cfg, od_path)?, &zones)?;
    let result = user_equilibrium(&net, &zones, &od, &cfg.vdf, &cfg.ue)?;
    warn_unconverged(&result, "assignment");
    art.put("assign/flows.csv", &buffer(|b| write_assignment_csv(&result, &net, b))?)?;
    let stats = network_stats(&result, &od, &net).ok();
    art.put_json(
        "assign/assignment.json",
        &json!({
            "relative_gap": result.relative_gap,
            "iterations": result.iterations,
            "converged": result.converged,
            "vdf": cfg.vdf,
            "ue": cfg.ue,
            "stats": stats,
        }),
    )
}

fn warn_unconverged(r: &AssignmentResult, what: &str) {
    if !r.converged {
        warn!("{what}: stopped at {} iterations with relative gap {:.3e}", r.iterations, r.relative_gap);
    }
}

/// Per-date estimation statistics handed from `estimate` to `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayStats {
    pub date: NaiveDate,
    pub slot: DepartureSlot,
    pub fitness_rmse: f64,
    pub relative_gap: f64,
    #[serde(flatten)]
    pub stats: NetworkStats,
}

fn estimate_dir(date: NaiveDate) -> String {
    format!("estimate/{}", date.format("%Y-%m-%d"))
}

fn estimate(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<(), CliError> {
    let net = load_network(cfg, out)?;
    let zones = load_zones(cfg, out, &net)?;
    let panel = load_panel(out)?;
    if cfg.estimate.dates.is_empty() {
        return Err(CliError::Config("estimate.dates is empty".into()));
    }
    let slot = cfg.estimate.slot;
    for &date in &cfg.estimate.dates {
        let observed = observed_times(&panel, &net, date, slot);
        if observed.is_empty() {
            return Err(CliError::Config(format!("no {slot} observations on {date}")));
        }
        info!("estimating {date} {slot} from {} links", observed.len());
        let est = estimate_od(&net, &zones, &observed, &cfg.ga, &cfg.vdf, &cfg.ue)?;
        let result = user_equilibrium(&net, &zones, &est.od, &cfg.vdf, &cfg.ue)?;
        warn_unconverged(&result, &date.to_string());
        let dir = estimate_dir(date);
        art.put(format!("{dir}/od.csv"), &buffer(|b| est.od.write_csv(b))?)?;
        art.put(format!("{dir}/trace.csv"), &buffer(|b| est.write_trace_csv(b))?)?;
        art.put(format!("{dir}/assignment.csv"), &buffer(|b| write_assignment_csv(&result, &net, b))?)?;
        if est.od.total() > 0.0 {
            let stats = network_stats(&result, &est.od, &net)?;
            art.put_json(
                format!("{dir}/stats.json"),
                &DayStats {
                    date,
                    slot,
                    fitness_rmse: est.fitness.rmse,
                    relative_gap: result.relative_gap,
                    stats,
                },
            )?;
            let zonal = ZonalReport::new(&result, &est.od, &zones, &net)?;
            art.put_json(format!("{dir}/zonal.geojson"), &zonal_geojson(&zonal, &zones, &net))?;
        } else {
            warn!("{date}: estimated demand is zero; no statistics written");
        }
    }
    Ok(())
}

fn read_stats(out: &Path, date: NaiveDate) -> Option<DayStats> {
    let p = out.join(estimate_dir(date)).join("stats.json");
    let text = std::fs::read_to_string(p).ok()?;
    serde_json::from_str(&text).ok()
}

fn report(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<(), CliError> {
    let base_date = cfg
        .report
        .base_date
        .or_else(|| cfg.estimate.dates.first().copied())
        .ok_or_else(|| CliError::Config("report.base_date or estimate.dates is required".into()))?;
    let base = read_stats(out, base_date)
        .ok_or_else(|| CliError::UndefinedDelta(format!("no estimation statistics for base date {base_date}")))?;
    let mut others = Vec::new();
    for &d in cfg.estimate.dates.iter().filter(|&&d| d != base_date) {
        let s = read_stats(out, d).ok_or_else(|| CliError::MissingArtifact(out.join(estimate_dir(d)).join("stats.json")))?;
        others.push((d, s.stats));
    }
    let city = cfg
        .report
        .city
        .clone()
        .or_else(|| cfg.metrics.city.clone())
        .unwrap_or_else(|| "network".to_owned());
    let report = compare_days(&city, base_date, &base.stats, &others)?;
    let reports = [report];
    art.put("report/comparison.csv", &buffer(|b| ComparisonReport::write_csv(&reports, b))?)?;
    art.put("report/comparison.txt", ComparisonReport::render_table(&reports).as_bytes())
}
