//! Configuration-driven experiments: one scenario file describes a source,
//! two arms, detectors and the analysis to run on the simulated tags.

mod bundled;
mod config;
mod output;
mod run;

use thiserror::Error;

pub use bundled::{scenario_names, source as bundled_source, BUNDLED};
pub use config::{fiber_to_toml, load_bundled, load_file, merge, parse_str, ConfigError};
pub use output::{write_bundle, Table, TABLE1_COLUMNS};
pub use run::{
    analyze_streams, calibrate_dark_rate, calibrate_drift_rate, drift_ensemble, expected_drift_series, fit_log_linear,
    outlook_projection, report_table1, run_drift, run_scenario, run_sweep, sweep_cutoff, Analysis, DriftSegment,
    EnsemblePoint, Projection, ScenarioResult, SweepPoint, Table1Row, TABLE1_SCENARIOS,
};

use crate::coincidence::CoincidenceError;
use crate::fiber::{calibrate_filter_offset, solve_modes, v_number, FiberError, FiberSpec, LP11_CUTOFF};
use crate::link::RngStream;
use crate::link::{ArmConfig, DetectorSpec, LinkConfig, LinkError, SourceSpec, SpatialFilter};
use crate::polarization::Rotation;
use crate::qkd::{QkdError, SecurityParams};
use crate::tagfile::TagFileError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Coincidence(#[from] CoincidenceError),
    #[error(transparent)]
    Qkd(#[from] QkdError),
    #[error(transparent)]
    TagFile(#[from] TagFileError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationSpec {
    Identity,
    /// Haar-random, drawn from the scenario seed.
    Random,
    Fixed(Rotation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSpec {
    /// km
    pub length: f64,
    pub fiber: FiberSpec,
    pub launch: [f64; 2],
    pub rotations: [RotationSpec; 2],
    /// rad/√s
    pub drift_rate: f64,
    /// dB
    pub extra_loss: f64,
}

impl ArmSpec {
    fn to_config(&self, r0: Rotation, r1: Rotation) -> ArmConfig {
        ArmConfig {
            length: self.length,
            fiber: self.fiber.clone(),
            launch_fractions: self.launch,
            mode_rotations: [r0, r1],
            drift_rate: self.drift_rate,
            spatial_filter: None,
            extra_loss: self.extra_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFilterSpec {
    pub fiber: FiberSpec,
    /// µm; `None` means solve for `leakage`.
    pub lateral_offset: Option<f64>,
    /// Target LP11 → LP01 power coupling when the offset is solved for.
    pub leakage: f64,
    /// dB
    pub insertion_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Filters {
    /// Coincidence window (ps); `None` uses the wide unfiltered window.
    pub temporal: Option<f64>,
    pub spatial: bool,
}

impl Filters {
    pub fn label(&self) -> &'static str {
        match (self.temporal.is_some(), self.spatial) {
            (false, false) => "none",
            (true, false) => "temporal",
            (false, true) => "spatial",
            (true, true) => "temporal+spatial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisParams {
    /// ps
    pub bin_width: i64,
    /// ps
    pub half_range: i64,
    /// ps
    pub offset_search: i64,
    /// Window (ps) used when no temporal filter is set.
    pub unfiltered_window: i64,
    pub peak_sigma: f64,
    /// bins
    pub merge_gap: usize,
    /// s
    pub segment: f64,
    /// Seeds in a drift ensemble.
    pub ensemble: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            bin_width: 100,
            half_range: 20_000,
            offset_search: 50_000_000,
            unfiltered_window: 40_000,
            peak_sigma: 5.0,
            merge_gap: 10,
            segment: 20.0,
            ensemble: 50,
        }
    }
}

/// Targets a scenario's free parameters were tuned against.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Calibration {
    /// km at which the secure rate of a length sweep should vanish.
    pub cutoff_length: Option<f64>,
    /// Mean QBER over the whole run.
    pub mean_qber: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    Histogram,
    Peaks,
    Coincidences,
    TableRow,
    Tags,
}

impl Artifact {
    pub fn name(self) -> &'static str {
        match self {
            Artifact::Histogram => "histogram",
            Artifact::Peaks => "peaks",
            Artifact::Coincidences => "coincidences",
            Artifact::TableRow => "table-row",
            Artifact::Tags => "tags",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Artifact::Histogram, Artifact::Peaks, Artifact::Coincidences, Artifact::TableRow, Artifact::Tags]
            .into_iter()
            .find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// s
    pub duration: f64,
    /// s
    pub drift_step: f64,
    pub source: SourceSpec,
    pub arm_a: ArmSpec,
    pub arm_b: ArmSpec,
    pub detectors: DetectorSpec,
    pub spatial_filter: Option<SpatialFilterSpec>,
    pub filters: Filters,
    pub analysis: AnalysisParams,
    pub security: SecurityParams,
    /// Source rate (/s) the simulated rates are scaled to when comparing
    /// with laboratory figures.
    pub reference_pair_rate: Option<f64>,
    /// Coincidences per second next to the source, for projections.
    pub reference_local_rate: Option<f64>,
    pub calibration: Calibration,
    pub outputs: Vec<Artifact>,
}

impl Scenario {
    /// Coincidence window (ps) after filtering.
    pub fn window(&self) -> i64 {
        match self.filters.temporal {
            Some(w) => w.round() as i64,
            None => self.analysis.unfiltered_window,
        }
    }

    /// Factor from simulated rates to the reference source rate.
    pub fn rate_scale(&self) -> f64 {
        self.reference_pair_rate.map_or(1.0, |r| r / self.source.pair_rate)
    }

    /// Resolves random rotations and the spatial filter into a link.
    pub fn link_config(&self) -> Result<LinkConfig, ScenarioError> {
        let mut rng = RngStream::Rotations.rng(self.seed);
        let mut draw = |spec: RotationSpec| {
            let random = Rotation::random(&mut rng);
            match spec {
                RotationSpec::Identity => Rotation::identity(),
                RotationSpec::Random => random,
                RotationSpec::Fixed(r) => r,
            }
        };
        let [a0, a1] = self.arm_a.rotations.map(&mut draw);
        let [b0, b1] = self.arm_b.rotations.map(&mut draw);
        let mut arm_a = self.arm_a.to_config(a0, a1);
        let mut arm_b = self.arm_b.to_config(b0, b1);
        let wavelength = self.source.emission_wavelength;
        if self.filters.spatial {
            let spec = self
                .spatial_filter
                .as_ref()
                .ok_or_else(|| ScenarioError::Invalid("spatial filtering requested without a filter".into()))?;
            for arm in [&mut arm_a, &mut arm_b] {
                if v_number(&arm.fiber, wavelength) <= LP11_CUTOFF {
                    continue;
                }
                let lateral_offset = match spec.lateral_offset {
                    Some(o) => o,
                    None => solve_filter_offset(&arm.fiber, &spec.fiber, spec.leakage, wavelength)?,
                };
                arm.spatial_filter = Some(SpatialFilter {
                    fiber: spec.fiber.clone(),
                    lateral_offset,
                    insertion_loss: spec.insertion_loss,
                });
            }
        }
        Ok(LinkConfig {
            source: self.source,
            arm_a,
            arm_b,
            detectors: self.detectors,
            duration: self.duration,
            seed: self.seed,
            drift_step: self.drift_step,
        })
    }
}

/// Lateral offset (µm) at which LP11 of `link` leaks `leakage` of its power
/// into LP01 of `filter`.
pub fn solve_filter_offset(
    link: &FiberSpec,
    filter: &FiberSpec,
    leakage: f64,
    wavelength: f64,
) -> Result<f64, FiberError> {
    let higher = solve_modes(link, wavelength)?;
    let receiver = solve_modes(filter, wavelength)?;
    let lp11 = higher.get(1).ok_or(FiberError::NotMultimode { wavelength })?;
    calibrate_filter_offset(lp11, &receiver[0], leakage)
}
