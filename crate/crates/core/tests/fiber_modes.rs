use std::sync::OnceLock;
use std::time::Instant;

use fiberlink::fiber::{
    calibrate_fiber, modal_dispersion, mode_field_diameter, overlap_coupling, solve_modes, v_number,
    CalibrationTargets, FiberError, FiberSpec, ModeSolution, LP11_CUTOFF, LP21_CUTOFF, NS_PER_KM_VACUUM,
};
use fiberlink::scenario::load_bundled;
use proptest::prelude::*;

fn telecom() -> &'static FiberSpec {
    static SPEC: OnceLock<FiberSpec> = OnceLock::new();
    SPEC.get_or_init(|| calibrate_fiber(&CalibrationTargets::telecom()).unwrap())
}

fn sm800() -> FiberSpec {
    load_bundled("symmetric-2-2-spatial").unwrap().spatial_filter.unwrap().fiber
}

fn modes(spec: &FiberSpec, wavelength: f64) -> Vec<ModeSolution> {
    solve_modes(spec, wavelength).unwrap()
}

#[test]
fn calibrated_telecom_matches_observables() {
    let t = Instant::now();
    let spec = calibrate_fiber(&CalibrationTargets::telecom()).unwrap();
    assert!(t.elapsed().as_secs_f64() < 10.0, "calibration took {:?}", t.elapsed());

    let v810 = v_number(&spec, 810.0);
    assert!(v810 > LP11_CUTOFF && v810 <= LP21_CUTOFF, "V(810) = {v810}");
    assert!(v_number(&spec, 1550.0) < LP11_CUTOFF);

    let at810 = modes(&spec, 810.0);
    assert_eq!(at810.iter().map(|m| m.azimuthal_index).collect::<Vec<_>>(), [0, 1]);
    assert_eq!(modes(&spec, 1550.0).len(), 1);

    let mfd = mode_field_diameter(&modes(&spec, 1550.0)[0]).unwrap();
    assert!((mfd - 9.2).abs() <= 0.4, "MFD {mfd}");
    let disp = modal_dispersion(&spec, 810.0).unwrap();
    assert!((disp - 2.19).abs() <= 0.10, "dispersion {disp}");
    assert!(at810[1].group_delay > at810[0].group_delay);
}

#[test]
fn bundled_fibers_match_a_fresh_calibration() {
    let stored = load_bundled("asymmetric-2km").unwrap().arm_a.fiber;
    let fresh = telecom();
    assert!((stored.core_radius - fresh.core_radius).abs() / fresh.core_radius < 1e-5);
    assert!((stored.core_index - fresh.core_index).abs() < 1e-8);
    assert_eq!(stored.cladding_index, fresh.cladding_index);
}

#[test]
fn sm800_mode_field() {
    let spec = sm800();
    let m = modes(&spec, 810.0);
    assert_eq!(m.len(), 1);
    let mfd = mode_field_diameter(&m[0]).unwrap();
    assert!((mfd - 5.4).abs() <= 0.4, "MFD {mfd}");
}

/// Least-squares polynomial fit; returns coefficients in increasing order.
fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let n = degree + 1;
    let mut a = vec![vec![0.0; n + 1]; n];
    for (&xi, &yi) in x.iter().zip(y) {
        for r in 0..n {
            for c in 0..n {
                a[r][c] += xi.powi((r + c) as i32);
            }
            a[r][n] += yi * xi.powi(r as i32);
        }
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

#[test]
fn group_delays_match_dense_beta_derivative() {
    let spec = telecom();
    let centre = 810.0;
    let k0 = 2.0 * std::f64::consts::PI / centre;
    let (mut dk, mut beta0, mut beta1) = (Vec::new(), Vec::new(), Vec::new());
    for j in -10..=10 {
        let wl = centre + 0.2 * j as f64;
        let k = 2.0 * std::f64::consts::PI / wl;
        let m = modes(spec, wl);
        dk.push((k - k0) / k0);
        beta0.push(m[0].effective_index * k / k0);
        beta1.push(m[1].effective_index * k / k0);
    }
    // dβ/dk at k0 is the group index.
    let group_index = |beta: &[f64]| polyfit(&dk, beta, 4)[1];
    let oracle = NS_PER_KM_VACUUM * (group_index(&beta1) - group_index(&beta0));
    let production = modal_dispersion(spec, centre).unwrap();
    assert!((oracle - production).abs() / oracle < 0.01, "oracle {oracle}, production {production}");

    let m = modes(spec, centre);
    assert!((NS_PER_KM_VACUUM * group_index(&beta0) - m[0].group_delay).abs() / m[0].group_delay < 1e-6);
}

/// Coupling by brute-force quadrature on a Cartesian grid, target displaced
/// by `offset` along x.
fn cartesian_coupling(from: &ModeSolution, to: &ModeSolution, offset: f64) -> f64 {
    let field = |m: &ModeSolution, x: f64, y: f64| {
        let r = x.hypot(y);
        let radial = m.radial_field.value_at(r);
        match m.azimuthal_index {
            0 => radial,
            l => radial * (l as f64 * y.atan2(x)).cos(),
        }
    };
    let extent = from.radial_field.extent().max(to.radial_field.extent()).min(30.0) + offset.abs();
    let h = 0.05;
    let n = (extent / h).ceil() as i64;
    let (mut overlap, mut pa, mut pb) = (0.0, 0.0, 0.0);
    for i in -n..=n {
        for j in -n..=n {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let a = field(from, x, y);
            let b = field(to, x - offset, y);
            overlap += a * b;
            pa += a * a;
            pb += b * b;
        }
    }
    overlap * overlap / (pa * pb)
}

#[test]
fn overlap_matches_cartesian_quadrature() {
    let link = modes(telecom(), 810.0);
    let filter = modes(&sm800(), 810.0);
    for offset in [0.0, 0.4, 1.0, 2.0] {
        for from in &link {
            let production = overlap_coupling(from, &filter[0], offset).unwrap();
            let oracle = cartesian_coupling(from, &filter[0], offset);
            assert!(
                (production - oracle).abs() < 2e-3,
                "{} at {offset} µm: production {production}, oracle {oracle}",
                from.name()
            );
        }
    }
}

#[test]
fn trivial_overlaps() {
    let link = modes(telecom(), 810.0);
    let filter = modes(&sm800(), 810.0);
    assert!((overlap_coupling(&link[0], &link[0], 0.0).unwrap() - 1.0).abs() < 1e-4);
    assert!(overlap_coupling(&link[1], &filter[0], 0.0).unwrap() < 1e-4);
    assert!(overlap_coupling(&link[0], &link[1], 0.0).unwrap() < 1e-4);
}

#[test]
fn spatial_filter_at_calibrated_offset() {
    let s = load_bundled("symmetric-2-2-spatial").unwrap();
    let offset = s.spatial_filter.as_ref().unwrap().lateral_offset.unwrap();
    let link = modes(telecom(), 810.0);
    let filter = modes(&sm800(), 810.0);
    let keep = overlap_coupling(&link[0], &filter[0], offset).unwrap();
    let leak = overlap_coupling(&link[1], &filter[0], offset).unwrap();
    assert!(keep >= 0.75, "LP01 transmission {keep}");
    assert!(leak <= 0.02 + 1e-9, "LP11 leakage {leak}");
}

#[test]
fn single_mode_and_wrong_mode_errors() {
    let spec = telecom();
    assert!(matches!(modal_dispersion(spec, 1550.0), Err(FiberError::NotMultimode { .. })));
    let lp11 = &modes(spec, 810.0)[1];
    assert!(matches!(mode_field_diameter(lp11), Err(FiberError::WrongMode(1))));
}

#[test]
fn calibration_round_trip_and_sensitivity() {
    let spec = telecom().clone();
    let mfd = mode_field_diameter(&modes(&spec, 1550.0)[0]).unwrap();
    let disp = modal_dispersion(&spec, 810.0).unwrap();
    let targets = CalibrationTargets { mfd, dispersion: disp, ..CalibrationTargets::telecom() };
    let again = calibrate_fiber(&targets).unwrap();
    let mfd2 = mode_field_diameter(&modes(&again, 1550.0)[0]).unwrap();
    let disp2 = modal_dispersion(&again, 810.0).unwrap();
    assert!((mfd2 - mfd).abs() / mfd < 0.01);
    assert!((disp2 - disp).abs() / disp < 0.01);

    let mut wider = spec.clone();
    wider.core_radius *= 1.1;
    let mfd_w = mode_field_diameter(&modes(&wider, 1550.0)[0]).unwrap();
    let v = v_number(&wider, 810.0);
    let two_mode = v > LP11_CUTOFF && v <= LP21_CUTOFF;
    let disp_w = if two_mode { modal_dispersion(&wider, 810.0).unwrap() } else { f64::NAN };
    let violated = !two_mode || (mfd_w - 9.2).abs() > 0.4 || !((disp_w - 2.19).abs() <= 0.10);
    assert!(violated, "MFD {mfd_w}, dispersion {disp_w}, V {v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn overlap_is_symmetric(offset in 0.0f64..3.0) {
        let link = modes(telecom(), 810.0);
        let filter = modes(&sm800(), 810.0);
        for from in &link {
            let ab = overlap_coupling(from, &filter[0], offset).unwrap();
            let ba = overlap_coupling(&filter[0], from, offset).unwrap();
            prop_assert!((ab - ba).abs() < 1e-6);
        }
    }

    #[test]
    fn mode_invariants(radius in 1.5f64..6.0, na in 0.06f64..0.2, wavelength in 700.0f64..1700.0) {
        let n2 = 1.4533;
        let spec = FiberSpec::new("p", radius, (n2 * n2 + na * na).sqrt(), n2, vec![]).unwrap();
        let Ok(found) = solve_modes(&spec, wavelength) else { return Ok(()) };
        for (i, m) in found.iter().enumerate() {
            prop_assert!(m.normalized_b > 0.0 && m.normalized_b < 1.0);
            prop_assert!(m.effective_index > spec.cladding_index && m.effective_index < spec.core_index);
            prop_assert!(m.group_delay > 0.0);
            prop_assert!((m.power() - 1.0).abs() < 1e-6, "power {}", m.power());
            if i > 0 {
                prop_assert!(m.effective_index < found[i - 1].effective_index);
            }
        }
    }

    #[test]
    fn mode_count_never_grows_with_wavelength(radius in 1.5f64..8.0, na in 0.06f64..0.25, wl in 600.0f64..1500.0, dwl in 1.0f64..200.0) {
        let n2 = 1.4533;
        let spec = FiberSpec::new("p", radius, (n2 * n2 + na * na).sqrt(), n2, vec![]).unwrap();
        let count = |w: f64| solve_modes(&spec, w).map_or(0, |m| m.len());
        prop_assert!(count(wl + dwl) <= count(wl));
    }
}
