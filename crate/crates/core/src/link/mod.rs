//! Monte Carlo model of the entangled-pair link: emission, propagation
//! through each arm and four-detector polarization analysis.

mod budget;
mod engine;

use thiserror::Error;

use crate::fiber::{overlap_coupling, solve_modes, FiberError, FiberSpec, ModeSolution};
use crate::polarization::Rotation;
use crate::Party;

pub use budget::{link_budget, LinkBudget, ModePairTerm};
pub use engine::{
    apply_dead_time, detect, drift_path, generate_pairs, inject_dark_counts, propagate, simulate, Arrival, LinkConfig,
    RngStream, SimulatedRun,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error("invalid link configuration: {0}")]
    Invalid(String),
    #[error("arm {party}: LP{mode}1 has launch power but is not guided at {wavelength} nm")]
    UnguidedMode { party: Party, mode: u32, wavelength: f64 },
}

/// Entangled-pair source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    /// pairs/s
    pub pair_rate: f64,
    pub intrinsic_visibility: f64,
    /// nm
    pub emission_wavelength: f64,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.pair_rate >= 0.0 && self.pair_rate.is_finite()) {
            return Err(LinkError::Invalid(format!("pair rate {} must be ≥ 0", self.pair_rate)));
        }
        if !(0.0..=1.0).contains(&self.intrinsic_visibility) {
            return Err(LinkError::Invalid(format!("visibility {} outside [0, 1]", self.intrinsic_visibility)));
        }
        if !(self.emission_wavelength > 0.0) {
            return Err(LinkError::Invalid("emission wavelength must be positive".into()));
        }
        Ok(())
    }
}

/// Misaligned small-core fiber spliced before the analyzer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFilter {
    pub fiber: FiberSpec,
    /// µm
    pub lateral_offset: f64,
    /// Mode-independent loss of the filter assembly (dB).
    pub insertion_loss: f64,
}

/// One distribution arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmConfig {
    /// km
    pub length: f64,
    pub fiber: FiberSpec,
    /// Power launched into LP01 and LP11; the remainder is lost.
    pub launch_fractions: [f64; 2],
    /// Polarization rotation picked up in LP01 and LP11.
    pub mode_rotations: [Rotation; 2],
    /// rad/√s
    pub drift_rate: f64,
    pub spatial_filter: Option<SpatialFilter>,
    /// dB
    pub extra_loss: f64,
}

impl ArmConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        self.fiber.validate()?;
        if !(self.length >= 0.0 && self.length.is_finite()) {
            return Err(LinkError::Invalid(format!("arm length {} must be ≥ 0", self.length)));
        }
        let [f0, f1] = self.launch_fractions;
        if f0 < 0.0 || f1 < 0.0 || f0 + f1 > 1.0 + 1e-12 {
            return Err(LinkError::Invalid(format!("launch fractions {f0}, {f1} must be nonnegative with sum ≤ 1")));
        }
        for r in &self.mode_rotations {
            if (r.norm() - 1.0).abs() > 1e-8 {
                return Err(LinkError::Invalid(format!("mode rotation {r:?} is not unitary")));
            }
        }
        if !(self.drift_rate >= 0.0) || !(self.extra_loss >= 0.0) {
            return Err(LinkError::Invalid("drift rate and extra loss must be ≥ 0".into()));
        }
        if let Some(filter) = &self.spatial_filter {
            filter.fiber.validate()?;
            if !filter.lateral_offset.is_finite() || !(filter.insertion_loss >= 0.0) {
                return Err(LinkError::Invalid("spatial filter offset/insertion loss invalid".into()));
            }
        }
        Ok(())
    }
}

/// Single-photon detector, identical for all four channels of a party.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// counts/s per detector
    pub dark_rate: f64,
    /// ps
    pub jitter_sigma: f64,
    /// ns
    pub dead_time: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec { efficiency: 0.70, dark_rate: 0.0, jitter_sigma: 250.0, dead_time: 50.0 }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(LinkError::Invalid(format!("efficiency {} outside [0, 1]", self.efficiency)));
        }
        if !(self.dark_rate >= 0.0 && self.jitter_sigma >= 0.0 && self.dead_time >= 0.0) {
            return Err(LinkError::Invalid("dark rate, jitter and dead time must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeTag {
    /// ps since the start of the run
    pub time: u64,
    pub party: Party,
    /// 0 = 0°, 1 = 90°, 2 = 45°, 3 = −45°
    pub channel: u8,
}

/// An arm with its modes solved and per-mode constants precomputed.
#[derive(Debug, Clone)]
pub struct ArmModel {
    pub party: Party,
    pub config: ArmConfig,
    pub modes: Vec<ModeSolution>,
    /// ps, per mode
    pub delay: [f64; 2],
    /// Survival probability after launch, per mode.
    pub transmission: [f64; 2],
    /// Polarization rotation seen at the analyzer with LP01 compensated.
    pub analyzer_rotation: [Rotation; 2],
}

impl ArmModel {
    pub fn new(party: Party, config: &ArmConfig, wavelength: f64) -> Result<Self, LinkError> {
        config.validate()?;
        let modes = solve_modes(&config.fiber, wavelength)?;
        for (l, &fraction) in config.launch_fractions.iter().enumerate() {
            if fraction > 0.0 && modes.len() <= l {
                return Err(LinkError::UnguidedMode { party, mode: l as u32, wavelength });
            }
        }
        let fiber_loss =
            if config.length > 0.0 { config.fiber.attenuation_at(wavelength)? * config.length } else { 0.0 };
        let base = 10f64.powf(-(fiber_loss + config.extra_loss) / 10.0);
        let filter_lp01 = match &config.spatial_filter {
            Some(f) => Some(
                solve_modes(&f.fiber, wavelength)?
                    .into_iter()
                    .next()
                    .ok_or(FiberError::NoGuidedMode { wavelength, v_number: 0.0 })?,
            ),
            None => None,
        };
        let mut delay = [0.0; 2];
        let mut transmission = [0.0; 2];
        for (l, mode) in modes.iter().take(2).enumerate() {
            delay[l] = config.length * mode.group_delay * 1e3;
            let coupling = match (&config.spatial_filter, &filter_lp01) {
                (Some(f), Some(target)) => {
                    overlap_coupling(mode, target, f.lateral_offset)? * 10f64.powf(-f.insertion_loss / 10.0)
                }
                _ => 1.0,
            };
            transmission[l] = base * coupling;
        }
        let compensator = config.mode_rotations[0].inverse();
        let analyzer_rotation = config.mode_rotations.map(|r| compensator.then_after(&r));
        Ok(ArmModel { party, config: config.clone(), modes, delay, transmission, analyzer_rotation })
    }

    /// Attenuation of the fiber alone (dB).
    pub fn fiber_loss(&self, wavelength: f64) -> Result<f64, LinkError> {
        if self.config.length == 0.0 {
            return Ok(0.0);
        }
        Ok(self.config.fiber.attenuation_at(wavelength)? * self.config.length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::Attenuation;

    pub(crate) fn fiber() -> FiberSpec {
        FiberSpec::new(
            "telecom",
            3.48229,
            1.459_302_75,
            1.4533,
            vec![Attenuation { wavelength: 810.0, loss: 3.0 }, Attenuation { wavelength: 1550.0, loss: 0.22 }],
        )
        .unwrap()
    }

    pub(crate) fn arm(length: f64) -> ArmConfig {
        ArmConfig {
            length,
            fiber: fiber(),
            launch_fractions: [0.8, 0.18],
            mode_rotations: [Rotation::identity(); 2],
            drift_rate: 0.0,
            spatial_filter: None,
            extra_loss: 0.0,
        }
    }

    #[test]
    fn bad_launch_fractions_rejected() {
        let mut a = arm(1.0);
        a.launch_fractions = [0.9, 0.2];
        assert!(matches!(a.validate(), Err(LinkError::Invalid(_))));
        a.launch_fractions = [-0.1, 0.2];
        assert!(a.validate().is_err());
    }

    #[test]
    fn non_unitary_rotation_rejected() {
        let mut a = arm(1.0);
        a.mode_rotations[1] = Rotation { w: 1.0, x: 0.1, y: 0.0, z: 0.0 };
        assert!(a.validate().is_err());
    }

    #[test]
    fn lp11_launch_into_single_mode_fiber_is_an_error() {
        let mut a = arm(0.002);
        a.fiber.core_radius = 2.0;
        assert!(matches!(ArmModel::new(Party::A, &a, 810.0), Err(LinkError::UnguidedMode { mode: 1, .. })));
    }

    #[test]
    fn model_delays_follow_group_delay() {
        let m = ArmModel::new(Party::A, &arm(3.0), 810.0).unwrap();
        let split = m.delay[1] - m.delay[0];
        assert!((split - 3.0 * 2.19e3).abs() < 5.0, "{split}");
        assert!((m.transmission[0] - 10f64.powf(-0.9)).abs() < 1e-12);
    }
}
