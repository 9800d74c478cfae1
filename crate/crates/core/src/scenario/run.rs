use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::{load_bundled, AnalysisParams, Scenario, ScenarioError};
use crate::coincidence::{
    build_histogram, classify_regime, detect_peaks_with_gap, find_offset, pair_coincidences, Coincidence,
    CoincidenceHistogram, ModePair, PeakSet, Regime,
};
use crate::link::{drift_path, link_budget, simulate, ArmModel, LinkBudget, LinkConfig, SimulatedRun, TimeTag};
use crate::polarization::expected_qber;
use crate::qkd::{qber_threshold, secure_key_rate, KeyRateResult, SecurityParams};
use crate::Party;

/// Offset search, histogram, peaks and key rates for one pair of streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// `t_B − t_A` (ps) of the dominant peak's centroid.
    pub offset: i64,
    /// ps
    pub window: i64,
    /// Delays relative to `offset`.
    pub histogram: CoincidenceHistogram,
    pub peaks: PeakSet,
    pub coincidences: Vec<Coincidence>,
    pub key: KeyRateResult,
}

pub fn analyze_streams(
    a: &[TimeTag],
    b: &[TimeTag],
    params: &AnalysisParams,
    window: i64,
    duration: f64,
    security: &SecurityParams,
) -> Result<Analysis, ScenarioError> {
    let coarse = find_offset(a, b, params.offset_search, params.bin_width)?;
    let first = build_histogram(a, b, coarse, params.half_range, params.bin_width)?;
    let peaks = detect_peaks_with_gap(&first, params.peak_sigma, params.merge_gap);
    let shift = peaks.dominant().map_or(0, |i| peaks.peaks[i].center.round() as i64);
    let offset = coarse + shift;
    let (histogram, peaks) = if shift == 0 {
        (first, peaks)
    } else {
        let h = build_histogram(a, b, offset, params.half_range, params.bin_width)?;
        let p = detect_peaks_with_gap(&h, params.peak_sigma, params.merge_gap);
        (h, p)
    };
    let coincidences = pair_coincidences(a, b, offset, window);
    let key = KeyRateResult::from_coincidences(&coincidences, duration, security)?;
    Ok(Analysis { offset, window, histogram, peaks, coincidences, key })
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub regime: Regime,
    pub run: SimulatedRun,
    pub budget: LinkBudget,
    pub analysis: Analysis,
    /// dB, fiber attenuation plus filtering losses of accepted coincidences.
    pub loss_db: f64,
}

impl ScenarioResult {
    /// Key rates rescaled to the reference source rate.
    pub fn scaled_key(&self) -> KeyRateResult {
        let s = self.scenario.rate_scale();
        let k = self.analysis.key;
        KeyRateResult {
            coincidence_rate: k.coincidence_rate * s,
            sifted_rate: k.sifted_rate * s,
            secure_rate: k.secure_rate * s,
            ..k
        }
    }
}

/// Simulates a scenario and analyzes its tags.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult, ScenarioError> {
    let config = scenario.link_config()?;
    let run = simulate(&config)?;
    let budget = link_budget(&config)?;
    let window = scenario.window();
    let mut analysis =
        analyze_streams(&run.tags_a, &run.tags_b, &scenario.analysis, window, scenario.duration, &scenario.security)?;
    let main = budget.main_delay();
    let expected: Vec<(ModePair, f64)> =
        budget.terms.iter().map(|t| (ModePair { mode_a: t.mode_a, mode_b: t.mode_b }, t.delay - main)).collect();
    analysis.peaks.label(&expected, 5.0 * scenario.analysis.bin_width as f64);
    Ok(ScenarioResult {
        scenario: scenario.clone(),
        regime: classify_regime(scenario.arm_a.length, scenario.arm_b.length),
        loss_db: budget.transmission_loss(window as f64),
        run,
        budget,
        analysis,
    })
}

/// Applies `f` to every item on all available cores, keeping order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every slot filled")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// km of fiber in arm A; arm B has none.
    pub length: f64,
    pub visibility: f64,
    pub qber: f64,
    pub coincidence_rate: f64,
    pub secure_rate: f64,
}

/// Runs the base scenario once per length with arm A stretched and arm B
/// at zero length.
pub fn run_sweep(base: &Scenario, lengths: &[f64]) -> Result<Vec<SweepPoint>, ScenarioError> {
    if lengths.len() < 2 {
        return Err(ScenarioError::Invalid("a sweep needs at least two lengths".into()));
    }
    if let Some(l) = lengths.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(ScenarioError::Invalid(format!("length {l} km is not a valid fiber length")));
    }
    par_map(lengths, |&length| {
        let mut s = base.clone();
        s.arm_a.length = length;
        s.arm_b.length = 0.0;
        let key = run_scenario(&s)?.scaled_key();
        Ok(SweepPoint {
            length,
            visibility: key.visibility,
            qber: key.qber,
            coincidence_rate: key.coincidence_rate,
            secure_rate: key.secure_rate,
        })
    })
    .into_iter()
    .collect()
}

/// Length (km) where the secure rate first vanishes, interpolating the QBER
/// linearly to the key-rate threshold between the last positive point and
/// the first zero one. `None` if the rate never reaches zero.
pub fn sweep_cutoff(points: &[SweepPoint], security: &SecurityParams) -> Option<f64> {
    let threshold = qber_threshold(security);
    let k = points.iter().position(|p| p.secure_rate == 0.0)?;
    if k == 0 {
        return Some(points[0].length);
    }
    let (p0, p1) = (points[k - 1], points[k]);
    let frac = if p1.qber > p0.qber { ((threshold - p0.qber) / (p1.qber - p0.qber)).clamp(0.0, 1.0) } else { 1.0 };
    Some(p0.length + frac * (p1.length - p0.length))
}

/// Least-squares line through `(length, ln secure_rate)` over the points
/// before the first zero rate: `(slope per km, intercept, R²)`.
pub fn fit_log_linear(points: &[SweepPoint]) -> Option<(f64, f64, f64)> {
    let xy: Vec<(f64, f64)> =
        points.iter().take_while(|p| p.secure_rate > 0.0).map(|p| (p.length, p.secure_rate.ln())).collect();
    if xy.len() < 3 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((slope, my - slope * mx, r2))
}

/// Dark rate per detector (/s) at which the budget QBER at
/// `calibration.cutoff_length` equals the key-rate threshold.
pub fn calibrate_dark_rate(scenario: &Scenario) -> Result<f64, ScenarioError> {
    let cutoff = scenario
        .calibration
        .cutoff_length
        .ok_or_else(|| ScenarioError::Invalid("scenario has no calibration.cutoff_length".into()))?;
    let mut s = scenario.clone();
    s.arm_a.length = cutoff;
    s.arm_b.length = 0.0;
    let target = qber_threshold(&s.security);
    let window = s.window() as f64;
    let mut qber_at = |dark: f64| -> Result<f64, ScenarioError> {
        s.detectors.dark_rate = dark;
        Ok(link_budget(&s.link_config()?)?.qber(window))
    };
    let (mut lo, mut hi) = (0.0f64, 8.0f64);
    if qber_at(1.0)? >= target || qber_at(1e8)? <= target {
        return Err(ScenarioError::Invalid(format!("no dark rate puts the QBER threshold at {cutoff} km")));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if qber_at(10f64.powf(mid))? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(10f64.powf(0.5 * (lo + hi)))
}

fn segment_count(scenario: &Scenario) -> Result<usize, ScenarioError> {
    let n = (scenario.duration / scenario.analysis.segment + 1e-9).floor() as usize;
    if n < 2 {
        return Err(ScenarioError::Invalid(format!(
            "duration {} s holds fewer than two {} s segments",
            scenario.duration, scenario.analysis.segment
        )));
    }
    Ok(n)
}

/// Mean QBER per segment expected along the scenario's own drift paths,
/// from the link budget without shot noise.
fn expected_series(config: &LinkConfig, window: f64, segment: f64, segments: usize) -> Result<Vec<f64>, ScenarioError> {
    let budget = link_budget(config)?;
    let wl = config.source.emission_wavelength;
    let arms = [ArmModel::new(Party::A, &config.arm_a, wl)?, ArmModel::new(Party::B, &config.arm_b, wl)?];
    let paths = [drift_path(config, Party::A), drift_path(config, Party::B)];
    let accepted: Vec<_> = budget.accepted(window).copied().collect();
    let accidental = budget.accidental_rate(window);
    let total = budget.coincidence_rate(window);
    let v = config.source.intrinsic_visibility;
    let rotation = |p: usize, mode: u32, t: f64| {
        let cfg = &arms[p].config;
        cfg.mode_rotations[0].inverse().then_after(&paths[p].at(t)).then_after(&cfg.mode_rotations[mode as usize])
    };
    let step = config.drift_step;
    let per = ((segment / step).round() as usize).max(1);
    Ok((0..segments)
        .map(|k| {
            let mut sum = 0.0;
            for j in 0..per {
                let t = k as f64 * segment + (j as f64 + 0.5) * segment / per as f64;
                let errors: f64 = accepted
                    .iter()
                    .map(|term| {
                        let ra = rotation(0, term.mode_a, t).jones();
                        let rb = rotation(1, term.mode_b, t).jones();
                        term.rate * expected_qber(v, &ra, &rb)
                    })
                    .sum();
                sum += (errors + 0.5 * accidental) / total;
            }
            sum / per as f64
        })
        .collect())
}

/// Budget QBER per analysis segment along the drift realized by the
/// scenario's seed.
pub fn expected_drift_series(scenario: &Scenario) -> Result<Vec<f64>, ScenarioError> {
    let segments = segment_count(scenario)?;
    expected_series(&scenario.link_config()?, scenario.window() as f64, scenario.analysis.segment, segments)
}

/// Drift rate (rad/√s, both arms) at which the run-averaged expected QBER
/// of the scenario's seed equals `calibration.mean_qber`.
pub fn calibrate_drift_rate(scenario: &Scenario) -> Result<f64, ScenarioError> {
    let target = scenario
        .calibration
        .mean_qber
        .ok_or_else(|| ScenarioError::Invalid("scenario has no calibration.mean_qber".into()))?;
    let mut s = scenario.clone();
    let mut mean_at = |rate: f64| -> Result<f64, ScenarioError> {
        s.arm_a.drift_rate = rate;
        s.arm_b.drift_rate = rate;
        let series = expected_drift_series(&s)?;
        Ok(series.iter().sum::<f64>() / series.len() as f64)
    };
    let (mut lo, mut hi) = (0.0, 0.1);
    if mean_at(lo)? >= target || mean_at(hi)? <= target {
        return Err(ScenarioError::Invalid(format!("no drift rate in [0, 0.1] rad/√s gives mean QBER {target}")));
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSegment {
    /// s
    pub start: f64,
    pub coincidences: usize,
    pub qber: f64,
    /// /s, scaled to the reference source rate
    pub secure_rate: f64,
    /// Budget QBER along the same drift path.
    pub expected_qber: f64,
}

/// Monte Carlo run analyzed in consecutive segments.
pub fn run_drift(scenario: &Scenario) -> Result<Vec<DriftSegment>, ScenarioError> {
    let segments = segment_count(scenario)?;
    let config = scenario.link_config()?;
    let run = simulate(&config)?;
    let window = scenario.window();
    let analysis =
        analyze_streams(&run.tags_a, &run.tags_b, &scenario.analysis, window, scenario.duration, &scenario.security)?;
    let expected = expected_series(&config, window as f64, scenario.analysis.segment, segments)?;
    let seg_ps = scenario.analysis.segment * 1e12;
    let mut buckets: Vec<Vec<Coincidence>> = vec![Vec::new(); segments];
    for c in analysis.coincidences {
        let k = (c.time_a as f64 / seg_ps) as usize;
        if k < segments {
            buckets[k].push(c);
        }
    }
    let scale = scenario.rate_scale();
    buckets
        .iter()
        .enumerate()
        .map(|(k, coinc)| {
            let key = KeyRateResult::from_coincidences(coinc, scenario.analysis.segment, &scenario.security)?;
            Ok(DriftSegment {
                start: k as f64 * scenario.analysis.segment,
                coincidences: coinc.len(),
                qber: key.qber,
                secure_rate: key.secure_rate * scale,
                expected_qber: expected[k],
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsemblePoint {
    /// s
    pub start: f64,
    pub mean_qber: f64,
    /// Standard error of the mean change from the previous segment.
    pub step_error: f64,
}

/// Expected QBER per segment averaged over `seeds` consecutive seeds
/// starting at the scenario's own.
pub fn drift_ensemble(scenario: &Scenario, seeds: usize) -> Result<Vec<EnsemblePoint>, ScenarioError> {
    if seeds < 2 {
        return Err(ScenarioError::Invalid("an ensemble needs at least two seeds".into()));
    }
    let segments = segment_count(scenario)?;
    let ids: Vec<u64> = (0..seeds as u64).map(|i| scenario.seed.wrapping_add(i)).collect();
    let series: Vec<Vec<f64>> = par_map(&ids, |&seed| {
        let mut s = scenario.clone();
        s.seed = seed;
        expected_drift_series(&s)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let n = seeds as f64;
    Ok((0..segments)
        .map(|k| {
            let mean_qber = series.iter().map(|s| s[k]).sum::<f64>() / n;
            let step_error = if k == 0 {
                0.0
            } else {
                let d: Vec<f64> = series.iter().map(|s| s[k] - s[k - 1]).collect();
                let md = d.iter().sum::<f64>() / n;
                (d.iter().map(|x| (x - md).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            };
            EnsemblePoint { start: k as f64 * scenario.analysis.segment, mean_qber, step_error }
        })
        .collect())
}

/// Bundled scenarios behind the rows of the summary table, in order.
pub const TABLE1_SCENARIOS: [&str; 6] = [
    "asymmetric-2km",
    "asymmetric-2km-temporal",
    "asymmetric-5km",
    "symmetric-2-2",
    "symmetric-2-2-temporal",
    "symmetric-2-2-spatial",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub scheme: &'static str,
    pub length_a: f64,
    pub length_b: f64,
    pub loss_db: f64,
    pub filtering: &'static str,
    pub visibility: f64,
    /// /s, scaled to the reference source rate
    pub coincidence_rate: f64,
    pub secure_rate: f64,
}

impl Table1Row {
    pub fn from_result(r: &ScenarioResult) -> Self {
        let key = r.scaled_key();
        Table1Row {
            scheme: match r.regime {
                Regime::Asymmetric => "asymmetric",
                Regime::Symmetric => "symmetric",
            },
            length_a: r.scenario.arm_a.length,
            length_b: r.scenario.arm_b.length,
            loss_db: r.loss_db,
            filtering: r.scenario.filters.label(),
            visibility: key.visibility,
            coincidence_rate: key.coincidence_rate,
            secure_rate: key.secure_rate,
        }
    }
}

/// Runs the six bundled summary scenarios.
pub fn report_table1() -> Result<Vec<(Table1Row, ScenarioResult)>, ScenarioError> {
    let scenarios: Vec<Scenario> = TABLE1_SCENARIOS.iter().map(|n| load_bundled(n)).collect::<Result<_, _>>()?;
    par_map(&scenarios, |s| run_scenario(s).map(|r| (Table1Row::from_result(&r), r))).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// /s measured next to the source
    pub local_coincidence_rate: f64,
    /// dB
    pub loss_db: f64,
    pub delivered_rate: f64,
    pub qber: f64,
    pub secure_rate: f64,
}

/// Secure rate expected when a source giving `reference.local_coincidences`
/// per second next to it feeds the scenario's link, from the link's loss and
/// QBER budget.
pub fn outlook_projection(scenario: &Scenario) -> Result<Projection, ScenarioError> {
    let local_rate = scenario
        .reference_local_rate
        .ok_or_else(|| ScenarioError::Invalid("scenario has no reference.local_coincidences".into()))?;
    let budget = link_budget(&scenario.link_config()?)?;
    let window = scenario.window() as f64;
    let loss_db = budget.transmission_loss(window);
    let delivered_rate = local_rate * 10f64.powf(-loss_db / 10.0);
    let qber = budget.qber(window);
    Ok(Projection {
        local_coincidence_rate: local_rate,
        loss_db,
        delivered_rate,
        qber,
        secure_rate: secure_key_rate(delivered_rate, qber, &scenario.security)?,
    })
}
