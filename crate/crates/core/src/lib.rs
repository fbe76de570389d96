//! Road-network disruption analytics.
//!
//! The crate turns per-link travel-time observations into reliability and
//! congestion metrics, and infers origin-destination demand by searching
//! trip tables whose user-equilibrium assignment reproduces the observed
//! link times.
//!
//! Pipeline stages, in order:
//!
//! * [`netbuild`] builds a directed [`RoadNetwork`](netbuild::RoadNetwork)
//!   from an OpenStreetMap XML extract and partitions it into grid zones.
//! * [`ingest`] loads observation panels, adapts provider segment records
//!   and measures data reliability by unique-update counting.
//! * [`metrics`] computes moving-window coefficients of variation and
//!   congestion indexes, annotated series and link hue maps.
//! * [`assign`] solves static user-equilibrium assignment.
//! * [`estimate`] runs the genetic OD estimator and builds day-over-day
//!   comparison and zonal reports.
//! * [`cli`] wires the stages behind a single config file.

pub mod assign;
pub mod cli;
pub mod estimate;
pub mod ingest;
pub mod metrics;
pub mod netbuild;
pub mod synthetic;

pub use assign::{AssignmentResult, OdMatrix, UeParams, VdfParams};
pub use estimate::GaConfig;
pub use ingest::{DepartureSlot, ObservationPanel, TravelTimeObservation};
pub use netbuild::{Link, LinkId, NetworkMode, Node, NodeId, RoadNetwork, Zone, ZoneId, ZoneSet};
