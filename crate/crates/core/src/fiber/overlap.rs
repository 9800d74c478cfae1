use std::f64::consts::PI;

use super::{FiberError, ModeSolution, RadialProfile};

const RADIAL_NODES: usize = 2048;
const ANGULAR_NODES: usize = 256;

fn field_at(profile: &RadialProfile, l: u32, x: f64, y: f64) -> f64 {
    let r = x.hypot(y);
    let radial = profile.value_at(r);
    if l == 0 || radial == 0.0 {
        return radial;
    }
    radial * (l as f64 * y.atan2(x)).cos()
}

/// Power coupled from `from_mode` into `to_mode` when the receiving fiber
/// is displaced by `lateral_offset` (µm) along the x axis.
///
/// Both modes use the `cos(lφ)` orientation with φ measured from the offset
/// direction, so for `l = 1` the result is the worst-case (maximum) leakage.
/// The quadrature is a polar trapezoid rule centred midway between the two
/// fibre axes; the grid is mirror-symmetric, which makes the result
/// symmetric under exchanging the two modes.
pub fn overlap_coupling(
    from_mode: &ModeSolution,
    to_mode: &ModeSolution,
    lateral_offset: f64,
) -> Result<f64, FiberError> {
    if (from_mode.wavelength - to_mode.wavelength).abs() > 1e-6 {
        return Err(FiberError::GridMismatch(format!(
            "modes solved at different wavelengths ({} nm vs {} nm)",
            from_mode.wavelength, to_mode.wavelength
        )));
    }
    for mode in [from_mode, to_mode] {
        let p = &mode.radial_field;
        if p.values.len() < 4 || !(p.step > 0.0) || p.values.iter().any(|v| !v.is_finite()) {
            return Err(FiberError::GridMismatch(format!("{} has an unusable radial grid", mode.name())));
        }
    }
    if !lateral_offset.is_finite() {
        return Err(FiberError::GridMismatch(format!("offset {lateral_offset} is not finite")));
    }

    let half = 0.5 * lateral_offset.abs();
    let extent = from_mode.radial_field.extent().max(to_mode.radial_field.extent()) + half;
    let dr = extent / (RADIAL_NODES - 1) as f64;
    let dphi = 2.0 * PI / ANGULAR_NODES as f64;
    let angles: Vec<(f64, f64)> = (0..ANGULAR_NODES).map(|j| (j as f64 * dphi).sin_cos()).collect();
    let (l1, l2) = (from_mode.azimuthal_index, to_mode.azimuthal_index);

    let mut total = 0.0;
    for i in 1..RADIAL_NODES {
        let r = i as f64 * dr;
        let weight = if i == RADIAL_NODES - 1 { 0.5 } else { 1.0 };
        let mut ring = 0.0;
        for &(s, c) in &angles {
            let (x, y) = (r * c, r * s);
            let a = field_at(&from_mode.radial_field, l1, x + half, y);
            if a == 0.0 {
                continue;
            }
            ring += a * field_at(&to_mode.radial_field, l2, x - half, y);
        }
        total += weight * r * ring;
    }
    let amplitude = total * dr * dphi;
    Ok((amplitude * amplitude).min(1.0))
}
