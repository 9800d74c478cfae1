use std::f64::consts::PI;

use super::profile::azimuthal_weight;
use super::{FiberError, FiberSpec, ModeSolution, RadialProfile, NS_PER_KM_VACUUM};
use crate::special::{bessel_j, bessel_k};

/// Points in the `b` scan used to bracket characteristic-equation roots.
const SCAN_POINTS: usize = 1000;
/// Relative bisection tolerance on `b`.
const ROOT_REL_TOL: f64 = 1e-13;
const MAX_BISECTIONS: usize = 200;
/// Half-width of the central difference used for group delays (nm).
pub(crate) const DELAY_STEP_NM: f64 = 0.1;
const FIELD_POINTS: usize = 4096;
/// The sampled domain always reaches at least this many core radii.
const MIN_EXTENT_RADII: f64 = 4.0;
/// Cladding decay lengths (in units of `a/w`) covered beyond the core.
const TAIL_DECAY_LENGTHS: f64 = 12.0;
const MAX_EXTENT_RADII: f64 = 30.0;

/// Normalized frequency `V = 2π a NA / λ` (radius in µm, wavelength in nm).
pub fn v_number(spec: &FiberSpec, wavelength: f64) -> f64 {
    2.0 * PI * spec.core_radius * 1e3 * spec.numerical_aperture() / wavelength
}

/// Pole-free form of the weakly-guiding eigenvalue equation
/// `u J_{l-1}(u)/J_l(u) = -w K_{l-1}(w)/K_l(w)`, multiplied through by
/// `J_l(u) K_l(w)`.
fn characteristic(l: i32, v: f64, b: f64) -> f64 {
    let u = v * (1.0 - b).sqrt();
    let w = v * b.sqrt();
    u * bessel_j(l - 1, u) * bessel_k(l, w) + w * bessel_k(l - 1, w) * bessel_j(l, u)
}

/// Normalized propagation constant of LP_l1, if guided at this `V`.
fn lp_root(l: u32, v: f64) -> Result<Option<f64>, FiberError> {
    let l_i = l as i32;
    let grid = |i: usize| i as f64 / SCAN_POINTS as f64;
    // Walk down from b = 1: the first sign change is the LP_l1 root.
    let mut hi = grid(SCAN_POINTS - 1);
    let mut f_hi = characteristic(l_i, v, hi);
    for i in (1..SCAN_POINTS - 1).rev() {
        let lo = grid(i);
        let f_lo = characteristic(l_i, v, lo);
        if f_lo == 0.0 {
            return Ok(Some(lo));
        }
        if f_lo.signum() != f_hi.signum() {
            return bisect(l_i, v, lo, hi, f_lo).map(Some).ok_or(FiberError::ConvergenceFailure { l });
        }
        hi = lo;
        f_hi = f_lo;
    }
    Ok(None)
}

fn bisect(l: i32, v: f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> Option<f64> {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_REL_TOL * mid {
            return Some(mid);
        }
        let f_mid = characteristic(l, v, mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    None
}

fn check_wavelength(wavelength: f64) -> Result<(), FiberError> {
    if wavelength.is_finite() && wavelength > 0.0 {
        Ok(())
    } else {
        Err(FiberError::InvalidWavelength(wavelength))
    }
}

/// `(l, b)` for every guided LP_l1 mode, in increasing `l`.
pub(crate) fn propagation_constants(spec: &FiberSpec, wavelength: f64) -> Result<Vec<(u32, f64)>, FiberError> {
    check_wavelength(wavelength)?;
    let v = v_number(spec, wavelength);
    let mut out = Vec::new();
    for l in 0.. {
        match lp_root(l, v)? {
            Some(b) => out.push((l, b)),
            None => break,
        }
    }
    if out.is_empty() {
        return Err(FiberError::NoGuidedMode { wavelength, v_number: v });
    }
    Ok(out)
}

pub(crate) fn effective_index(spec: &FiberSpec, b: f64) -> f64 {
    let (n1, n2) = (spec.core_index, spec.cladding_index);
    (n2 * n2 + b * (n1 * n1 - n2 * n2)).sqrt()
}

/// Re-solves LP_l1 at a nearby wavelength by bracketing outward from the
/// known root `guess` instead of rescanning the whole `b` range.
fn mode_b_near(spec: &FiberSpec, wavelength: f64, l: u32, guess: f64) -> Result<f64, FiberError> {
    let v = v_number(spec, wavelength);
    let l_i = l as i32;
    let f0 = characteristic(l_i, v, guess);
    if f0 == 0.0 {
        return Ok(guess);
    }
    let mut width = 1e-6;
    while width < 0.5 {
        let lo = (guess - width).max(f64::MIN_POSITIVE);
        let hi = (guess + width).min(1.0 - f64::EPSILON);
        let (f_lo, f_hi) = (characteristic(l_i, v, lo), characteristic(l_i, v, hi));
        if f_lo.signum() != f0.signum() {
            return bisect(l_i, v, lo, guess, f_lo).ok_or(FiberError::ConvergenceFailure { l });
        }
        if f_hi.signum() != f0.signum() {
            return bisect(l_i, v, guess, hi, f0).ok_or(FiberError::ConvergenceFailure { l });
        }
        width *= 4.0;
    }
    Err(FiberError::ConvergenceFailure { l })
}

/// Group delay (ns/km) from the central difference of `n_eff(λ)`:
/// `n_g = n_eff − λ dn_eff/dλ`.
fn group_delay(spec: &FiberSpec, wavelength: f64, l: u32, b: f64) -> Result<f64, FiberError> {
    let plus = effective_index(spec, mode_b_near(spec, wavelength + DELAY_STEP_NM, l, b)?);
    let minus = effective_index(spec, mode_b_near(spec, wavelength - DELAY_STEP_NM, l, b)?);
    let slope = (plus - minus) / (2.0 * DELAY_STEP_NM);
    let group_index = effective_index(spec, b) - wavelength * slope;
    Ok(group_index * NS_PER_KM_VACUUM)
}

fn radial_field(spec: &FiberSpec, l: u32, v: f64, b: f64) -> RadialProfile {
    let a = spec.core_radius;
    let u = v * (1.0 - b).sqrt();
    let w = v * b.sqrt();
    let l_i = l as i32;
    let extent = (a * (1.0 + TAIL_DECAY_LENGTHS / w)).max(MIN_EXTENT_RADII * a).min(MAX_EXTENT_RADII * a);
    let j_edge = bessel_j(l_i, u);
    let k_edge = bessel_k(l_i, w);
    let mut profile = RadialProfile::from_fn(extent, FIELD_POINTS, l % 2 == 1, |r| {
        if r <= a {
            bessel_j(l_i, u * r / a) / j_edge
        } else {
            bessel_k(l_i, w * r / a) / k_edge
        }
    });
    let norm = (azimuthal_weight(l) * profile.radial_integral(|_, f| f * f)).sqrt();
    for value in &mut profile.values {
        *value /= norm;
    }
    profile
}

/// All guided LP_l1 modes, sorted by descending effective index.
pub fn solve_modes(spec: &FiberSpec, wavelength: f64) -> Result<Vec<ModeSolution>, FiberError> {
    spec.validate()?;
    let v = v_number(spec, wavelength);
    let mut modes = propagation_constants(spec, wavelength)?
        .into_iter()
        .map(|(l, b)| {
            Ok(ModeSolution {
                azimuthal_index: l,
                wavelength,
                v_number: v,
                effective_index: effective_index(spec, b),
                normalized_b: b,
                group_delay: group_delay(spec, wavelength, l, b)?,
                radial_field: radial_field(spec, l, v, b),
            })
        })
        .collect::<Result<Vec<_>, FiberError>>()?;
    modes.sort_by(|x, y| y.effective_index.total_cmp(&x.effective_index));
    Ok(modes)
}

/// `τ(LP11) − τ(LP01)` in ns/km; positive when LP11 is the slower mode.
pub fn modal_dispersion(spec: &FiberSpec, wavelength: f64) -> Result<f64, FiberError> {
    spec.validate()?;
    let constants = propagation_constants(spec, wavelength)?;
    let b_of = |l: u32| constants.iter().find(|(ll, _)| *ll == l).map(|&(_, b)| b);
    match (b_of(0), b_of(1)) {
        (Some(b0), Some(b1)) => Ok(group_delay(spec, wavelength, 1, b1)? - group_delay(spec, wavelength, 0, b0)?),
        _ => Err(FiberError::NotMultimode { wavelength }),
    }
}

/// Petermann-II mode field diameter (µm) of an LP01 mode:
/// `2√2 · [∫R² r dr / ∫(dR/dr)² r dr]^{1/2}`.
pub fn mode_field_diameter(mode: &ModeSolution) -> Result<f64, FiberError> {
    if mode.azimuthal_index != 0 {
        return Err(FiberError::WrongMode(mode.azimuthal_index));
    }
    let profile = &mode.radial_field;
    let slope = profile.derivative();
    let num = profile.radial_integral(|_, f| f * f);
    let den = profile.radial_integral(|i, _| slope[i] * slope[i]);
    Ok(2.0 * std::f64::consts::SQRT_2 * (num / den).sqrt())
}
