use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::assign::{UeParams, VdfParams};
use crate::estimate::GaConfig;
use crate::ingest::{DepartureSlot, UniquenessScope};
use crate::metrics::{SlotSelector, WindowSpec};
use crate::netbuild::{Bbox, ClassTable, NetworkMode};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "NETPULSE_OUT_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// OpenStreetMap XML extract.
    pub osm: Option<PathBuf>,
    /// `[min_lon, min_lat, max_lon, max_lat]`.
    pub bbox: Option<[f64; 4]>,
    pub mode: NetworkMode,
    pub classes: ClassTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoningSection {
    pub rows: u32,
    pub cols: u32,
}

impl Default for ZoningSection {
    fn default() -> Self {
        ZoningSection { rows: 3, cols: 3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Observation files in the canonical panel layout.
    pub observations: Vec<PathBuf>,
    /// Provider dump, one JSON record per line.
    pub provider: Option<PathBuf>,
    /// `segment_key,link_id` table joining provider records to links.
    pub segment_map: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilitySection {
    /// Defaults to the network mode's length filter.
    pub min_length_m: Option<f64>,
    pub uniqueness: UniquenessScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub window_days: u32,
    /// Defaults to the network mode's length filter.
    pub min_length_m: Option<f64>,
    /// Slot names: `morning`, `afternoon`, `evening` or `whole-day`.
    pub slots: Vec<String>,
    /// Event timeline used to annotate the series.
    pub timeline: Option<PathBuf>,
    pub city: Option<String>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            window_days: WindowSpec::DEFAULT_WIDTH,
            min_length_m: None,
            slots: ["morning", "afternoon", "evening", "whole-day"].map(String::from).to_vec(),
            timeline: None,
            city: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignSection {
    /// `origin_zone,dest_zone,trips` demand to assign.
    pub od: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// One estimation per date.
    pub dates: Vec<NaiveDate>,
    pub slot: DepartureSlot,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            dates: Vec::new(),
            slot: DepartureSlot::Morning,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub city: Option<String>,
    pub base_date: Option<NaiveDate>,
}

/// Everything a pipeline run needs, read from one TOML file. Relative
/// paths resolve against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub network: NetworkSection,
    pub zoning: ZoningSection,
    pub ingest: IngestSection,
    pub reliability: ReliabilitySection,
    pub metrics: MetricsSection,
    pub vdf: VdfParams,
    pub ue: UeParams,
    pub ga: GaConfig,
    pub assign: AssignSection,
    pub estimate: EstimateSection,
    pub report: ReportSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Output directory: `cli_out`, then the environment override, then the
    /// config value, then `out` beside the config file.
    pub fn out_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        if let Some(p) = cli_out {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.resolve(self.out_dir.as_deref().unwrap_or(Path::new("out")))
    }

    pub fn bbox(&self) -> Result<Option<Bbox>, CliError> {
        self.network
            .bbox
            .map(|a| Bbox::from_array(a).map_err(|e| CliError::Config(format!("network.bbox: {e}"))))
            .transpose()
    }

    pub fn reliability_min_length(&self) -> f64 {
        self.reliability.min_length_m.unwrap_or(self.network.mode.default_min_length_m())
    }

    pub fn metrics_min_length(&self) -> f64 {
        self.metrics.min_length_m.unwrap_or(self.network.mode.default_min_length_m())
    }

    pub fn metric_slots(&self) -> Result<Vec<SlotSelector>, CliError> {
        self.metrics
            .slots
            .iter()
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("metrics.slots: unknown slot '{s}'"))))
            .collect()
    }

    fn input_paths(&self) -> Vec<(&'static str, &PathBuf)> {
        let mut v = Vec::new();
        v.extend(self.network.osm.as_ref().map(|p| ("network.osm", p)));
        v.extend(self.ingest.observations.iter().map(|p| ("ingest.observations", p)));
        v.extend(self.ingest.provider.as_ref().map(|p| ("ingest.provider", p)));
        v.extend(self.ingest.segment_map.as_ref().map(|p| ("ingest.segment_map", p)));
        v.extend(self.metrics.timeline.as_ref().map(|p| ("metrics.timeline", p)));
        v.extend(self.assign.od.as_ref().map(|p| ("assign.od", p)));
        v
    }

    /// Checks value ranges and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        self.bbox()?;
        if self.zoning.rows == 0 || self.zoning.cols == 0 {
            return cfg("zoning.rows and zoning.cols must be positive".into());
        }
        for (name, v) in [
            ("reliability.min_length_m", self.reliability.min_length_m),
            ("metrics.min_length_m", self.metrics.min_length_m),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return cfg(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if self.metrics.window_days == 0 {
            return cfg("metrics.window_days must be positive".into());
        }
        self.metric_slots()?;
        self.vdf.validate().map_err(|e| CliError::Config(format!("vdf: {e}")))?;
        self.ue.validate().map_err(|e| CliError::Config(format!("ue: {e}")))?;
        self.ga.validate().map_err(|e| CliError::Config(format!("ga: {e}")))?;
        if self.ingest.provider.is_some() != self.ingest.segment_map.is_some() {
            return cfg("ingest.provider and ingest.segment_map must be given together".into());
        }
        for (name, p) in self.input_paths() {
            let full = self.resolve(p);
            if !full.is_file() {
                return cfg(format!("{name}: {} does not exist", full.display()));
            }
        }
        Ok(())
    }
}
