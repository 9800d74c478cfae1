//! Guided LP modes of weakly-guiding step-index fibers.
//!
//! The solver works in the scalar (LP) approximation: every guided mode is
//! described by its azimuthal index `l`, a normalized propagation constant
//! `b ∈ (0, 1)` and a real radial field profile. The full transverse field of
//! a mode is `R(r)·cos(lφ)`; the `sin(lφ)` partner of `l > 0` modes is not
//! tracked separately.

mod calibrate;
mod overlap;
mod profile;
mod solver;

use thiserror::Error;

pub use calibrate::{calibrate_fiber, calibrate_filter_offset, calibrate_single_mode, CalibrationTargets};
pub use overlap::overlap_coupling;
pub use profile::RadialProfile;
pub use solver::{modal_dispersion, mode_field_diameter, solve_modes, v_number};

/// Cutoff of LP11 (first zero of `J_0`).
pub const LP11_CUTOFF: f64 = 2.404_825_557_695_773;
/// Cutoff of LP21 and LP02 (first zero of `J_1`).
pub const LP21_CUTOFF: f64 = 3.831_705_970_207_512;

/// Nanoseconds taken by light in vacuum to travel one kilometre.
pub const NS_PER_KM_VACUUM: f64 = 1e12 / 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiberError {
    #[error("invalid fiber spec: {0}")]
    InvalidSpec(String),
    #[error("wavelength must be positive and finite, got {0} nm")]
    InvalidWavelength(f64),
    #[error("no guided mode at {wavelength} nm (V = {v_number:.4})")]
    NoGuidedMode { wavelength: f64, v_number: f64 },
    #[error("root refinement for LP{l}1 did not converge")]
    ConvergenceFailure { l: u32 },
    #[error("fiber is single-mode at {wavelength} nm, modal dispersion undefined")]
    NotMultimode { wavelength: f64 },
    #[error("operation requires LP01, got LP{0}1")]
    WrongMode(u32),
    #[error("mode grids cannot be reconciled: {0}")]
    GridMismatch(String),
    #[error("no fiber in the search box meets the targets: {0}")]
    InfeasibleTargets(String),
    #[error("fiber {label:?} has no attenuation entry for {wavelength} nm")]
    MissingAttenuation { label: String, wavelength: f64 },
}

/// One row of a fiber's attenuation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attenuation {
    /// nm
    pub wavelength: f64,
    /// dB/km
    pub loss: f64,
}

/// Step-index fiber geometry and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpec {
    pub label: String,
    /// µm
    pub core_radius: f64,
    pub core_index: f64,
    pub cladding_index: f64,
    pub attenuation: Vec<Attenuation>,
}

impl FiberSpec {
    pub fn new(
        label: impl Into<String>,
        core_radius: f64,
        core_index: f64,
        cladding_index: f64,
        attenuation: Vec<Attenuation>,
    ) -> Result<Self, FiberError> {
        let spec = FiberSpec { label: label.into(), core_radius, core_index, cladding_index, attenuation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FiberError> {
        if !(self.core_radius.is_finite() && self.core_radius > 0.0) {
            return Err(FiberError::InvalidSpec(format!("core radius must be positive, got {}", self.core_radius)));
        }
        if !(self.cladding_index > 1.0 && self.core_index > self.cladding_index) {
            return Err(FiberError::InvalidSpec(format!(
                "need core index > cladding index > 1, got {} / {}",
                self.core_index, self.cladding_index
            )));
        }
        if let Some(bad) =
            self.attenuation.iter().find(|a| !(a.loss >= 0.0 && a.loss.is_finite() && a.wavelength > 0.0))
        {
            return Err(FiberError::InvalidSpec(format!("bad attenuation entry {bad:?}")));
        }
        Ok(())
    }

    pub fn numerical_aperture(&self) -> f64 {
        (self.core_index.powi(2) - self.cladding_index.powi(2)).sqrt()
    }

    /// Table lookup with a 0.5 nm match window; no interpolation.
    pub fn attenuation_at(&self, wavelength: f64) -> Result<f64, FiberError> {
        self.attenuation
            .iter()
            .find(|a| (a.wavelength - wavelength).abs() <= 0.5)
            .map(|a| a.loss)
            .ok_or_else(|| FiberError::MissingAttenuation { label: self.label.clone(), wavelength })
    }
}

/// Which arm a mode travels in, and its azimuthal order (`A01`, `B11`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeLabel {
    pub party: crate::Party,
    pub azimuthal_index: u32,
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}1", self.party, self.azimuthal_index)
    }
}

/// One guided LP_l1 mode at a fixed wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSolution {
    pub azimuthal_index: u32,
    /// nm
    pub wavelength: f64,
    pub v_number: f64,
    pub effective_index: f64,
    pub normalized_b: f64,
    /// ns/km
    pub group_delay: f64,
    /// Radial amplitude `R(r)`, normalized so that `∫∫ |R(r) cos(lφ)|² dA = 1`.
    pub radial_field: RadialProfile,
}

impl ModeSolution {
    pub fn name(&self) -> String {
        format!("LP{}1", self.azimuthal_index)
    }

    /// `∫∫ |field|² dA` over the sampled domain.
    pub fn power(&self) -> f64 {
        self.radial_field.power(self.azimuthal_index)
    }
}
