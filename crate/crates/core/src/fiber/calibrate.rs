use super::solver::v_number;
use super::{
    modal_dispersion, mode_field_diameter, overlap_coupling, solve_modes, Attenuation, FiberError, FiberSpec,
    ModeSolution, LP11_CUTOFF, LP21_CUTOFF,
};

/// Observables a telecom fiber must reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTargets {
    pub label: String,
    /// Target LP01 mode field diameter (µm) at `mfd_wavelength`.
    pub mfd: f64,
    /// nm
    pub mfd_wavelength: f64,
    /// Wavelength (nm) at which exactly LP01 and LP11 must be guided.
    pub two_mode_at: f64,
    /// Target modal dispersion (ns/km) at `two_mode_at`.
    pub dispersion: f64,
    /// Held fixed during the fit.
    pub cladding_index: f64,
    pub attenuation: Vec<Attenuation>,
}

impl CalibrationTargets {
    /// MFD 9.2 µm at 1550 nm, two-mode with 2.19 ns/km at 810 nm,
    /// 3 dB/km at 810 nm and 0.22 dB/km at 1550 nm.
    pub fn telecom() -> Self {
        CalibrationTargets {
            label: "telecom".into(),
            mfd: 9.2,
            mfd_wavelength: 1550.0,
            two_mode_at: 810.0,
            dispersion: 2.19,
            cladding_index: 1.4533,
            attenuation: vec![
                Attenuation { wavelength: 810.0, loss: 3.0 },
                Attenuation { wavelength: 1550.0, loss: 0.22 },
            ],
        }
    }
}

const RADIUS_BOX: (f64, f64) = (1.0, 10.0);
const NA_BOX: (f64, f64) = (0.05, 0.30);

fn spec_from(targets: &CalibrationTargets, radius: f64, na: f64) -> Result<FiberSpec, FiberError> {
    let n2 = targets.cladding_index;
    FiberSpec::new(targets.label.clone(), radius, (n2 * n2 + na * na).sqrt(), n2, targets.attenuation.clone())
}

fn two_mode_ok(spec: &FiberSpec, wavelength: f64) -> bool {
    let v = v_number(spec, wavelength);
    v > LP11_CUTOFF && v <= LP21_CUTOFF
}

/// Squared relative residuals of MFD and modal dispersion.
fn residual(targets: &CalibrationTargets, spec: &FiberSpec) -> Result<f64, FiberError> {
    let lp01 = solve_modes(spec, targets.mfd_wavelength)?
        .into_iter()
        .next()
        .ok_or(FiberError::NoGuidedMode { wavelength: targets.mfd_wavelength, v_number: 0.0 })?;
    let mfd = mode_field_diameter(&lp01)?;
    let disp = modal_dispersion(spec, targets.two_mode_at)?;
    Ok(((mfd - targets.mfd) / targets.mfd).powi(2) + ((disp - targets.dispersion) / targets.dispersion).powi(2))
}

fn objective(targets: &CalibrationTargets, x: [f64; 2]) -> f64 {
    let [radius, na] = x;
    if !(RADIUS_BOX.0..=RADIUS_BOX.1).contains(&radius) || !(NA_BOX.0..=NA_BOX.1).contains(&na) {
        return f64::INFINITY;
    }
    match spec_from(targets, radius, na) {
        Ok(spec) if two_mode_ok(&spec, targets.two_mode_at) => residual(targets, &spec).unwrap_or(f64::INFINITY),
        _ => f64::INFINITY,
    }
}

/// Fits core radius and numerical aperture (cladding index held fixed) to
/// the targets, subject to `2.405 < V(two_mode_at) ≤ 3.832`.
pub fn calibrate_fiber(targets: &CalibrationTargets) -> Result<FiberSpec, FiberError> {
    let mut best: Option<([f64; 2], f64)> = None;
    let mut any_feasible = false;
    for i in 0..=9 {
        for j in 0..=25 {
            let x = [
                RADIUS_BOX.0 + i as f64 * (RADIUS_BOX.1 - RADIUS_BOX.0) / 9.0,
                NA_BOX.0 + j as f64 * (NA_BOX.1 - NA_BOX.0) / 25.0,
            ];
            let Ok(spec) = spec_from(targets, x[0], x[1]) else {
                continue;
            };
            if !two_mode_ok(&spec, targets.two_mode_at) {
                continue;
            }
            any_feasible = true;
            let f = objective(targets, x);
            if f.is_finite() && best.is_none_or(|(_, bf)| f < bf) {
                best = Some((x, f));
            }
        }
    }
    let (start, _) = best.ok_or_else(|| {
        FiberError::InfeasibleTargets(if any_feasible {
            "two-mode fibers exist but none could be solved".into()
        } else {
            format!("no radius/NA in the search box is two-mode at {} nm", targets.two_mode_at)
        })
    })?;
    let [radius, na] = nelder_mead(|x| objective(targets, x), start, [0.2, 0.01], 1e-9, 400);
    spec_from(targets, radius, na)
}

/// Core radius (µm) at fixed NA giving the requested LP01 MFD while
/// staying single-mode at `wavelength`. Of the two radii that can match a
/// given MFD, the larger one (closer to the LP11 cutoff, better confined)
/// is returned.
pub fn calibrate_single_mode(
    label: &str,
    mfd: f64,
    wavelength: f64,
    numerical_aperture: f64,
    cladding_index: f64,
    attenuation: Vec<Attenuation>,
) -> Result<FiberSpec, FiberError> {
    let n2 = cladding_index;
    let make = |radius: f64| {
        FiberSpec::new(
            label,
            radius,
            (n2 * n2 + numerical_aperture * numerical_aperture).sqrt(),
            n2,
            attenuation.clone(),
        )
    };
    let excess = |radius: f64| -> Result<f64, FiberError> {
        let spec = make(radius)?;
        let modes = solve_modes(&spec, wavelength)?;
        Ok(mode_field_diameter(&modes[0])? - mfd)
    };
    let r_cut = LP11_CUTOFF * wavelength / (2.0 * std::f64::consts::PI * numerical_aperture * 1e3);
    let step = 0.01 * r_cut;
    let mut hi = 0.999 * r_cut;
    let mut f_hi = excess(hi)?;
    let mut lo = hi - step;
    while lo > 0.2 * r_cut {
        let f_lo = match excess(lo) {
            Ok(f) => f,
            Err(FiberError::NoGuidedMode { .. }) => break,
            Err(e) => return Err(e),
        };
        if f_lo.signum() != f_hi.signum() {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let f_mid = excess(mid)?;
                if f_mid.signum() == f_hi.signum() {
                    hi = mid;
                    f_hi = f_mid;
                } else {
                    lo = mid;
                }
            }
            return make(0.5 * (lo + hi));
        }
        hi = lo;
        f_hi = f_lo;
        lo -= step;
    }
    Err(FiberError::InfeasibleTargets(format!("MFD {mfd} µm not reachable single-mode at NA {numerical_aperture}")))
}

/// Lateral misalignment (µm) at which LP11 → receiving LP01 coupling first
/// reaches `leakage`.
pub fn calibrate_filter_offset(
    higher: &ModeSolution,
    receiver: &ModeSolution,
    leakage: f64,
) -> Result<f64, FiberError> {
    const STEP: f64 = 0.05;
    let coupling = |d: f64| overlap_coupling(higher, receiver, d);
    let limit = 4.0 * receiver.radial_field.extent().max(1.0);
    let mut prev = 0.0;
    let mut d = STEP;
    while d < limit {
        if coupling(d)? >= leakage {
            let (mut lo, mut hi) = (prev, d);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if coupling(mid)? >= leakage {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev = d;
        d += STEP;
    }
    Err(FiberError::InfeasibleTargets(format!("leakage {leakage} never reached")))
}

fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], scale: [f64; 2], ftol: f64, max_iter: usize) -> [f64; 2] {
    let mut simplex = [start, [start[0] + scale[0], start[1]], [start[0], start[1] + scale[1]]];
    let mut values = simplex.map(&f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let spread = (1..3)
            .map(|k| (simplex[k][0] - simplex[0][0]).abs().max((simplex[k][1] - simplex[0][1]).abs()))
            .fold(0.0, f64::max);
        if values[2].is_finite()
            && ((values[2] - values[0]).abs() <= ftol * values[0].abs().max(1e-12) || spread < 1e-10)
        {
            break;
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = lerp(centroid, simplex[2], 0.5);
            let fc = f(contracted);
            if fc < values[2] {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = lerp(simplex[0], simplex[k], 0.5);
                    values[k] = f(simplex[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    simplex[best]
}
