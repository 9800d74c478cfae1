//! Offline coincidence analysis of two time-tag streams.
//!
//! Histogram bins are centred: bin `k` of a histogram with origin `o`
//! covers `[o + k·w − w/2, o + k·w + w/2)`.

use std::fmt;

use thiserror::Error;

use crate::link::TimeTag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoincidenceError {
    #[error("no correlation peak: best bin {max} counts against background {background}")]
    NoPeak { max: u64, background: f64 },
    #[error("stream {0} is empty")]
    EmptyStream(char),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceHistogram {
    /// ps
    pub bin_width: i64,
    /// Centre of bin 0 (ps).
    pub origin: i64,
    pub counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn center(&self, bin: usize) -> i64 {
        self.origin + bin as i64 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Median bin count.
    pub fn background(&self) -> f64 {
        median(&self.counts)
    }
}

fn median(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
    }
}

/// Which launched modes produced a peak, e.g. `A11B01`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModePair {
    pub mode_a: u32,
    pub mode_b: u32,
}

impl fmt::Display for ModePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}1B{}1", self.mode_a, self.mode_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    /// ps
    pub center: f64,
    /// Counts above background.
    pub weight: f64,
    /// Mode pairs whose expected delay falls on this peak.
    pub labels: Vec<ModePair>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    /// Index of the heaviest peak.
    pub fn dominant(&self) -> Option<usize> {
        (0..self.peaks.len()).max_by(|&i, &j| self.peaks[i].weight.total_cmp(&self.peaks[j].weight))
    }

    /// Attaches each expected `(mode pair, delay)` to the nearest peak within
    /// `tolerance` ps.
    pub fn label(&mut self, expected: &[(ModePair, f64)], tolerance: f64) {
        for &(pair, delay) in expected {
            let nearest = self
                .peaks
                .iter_mut()
                .map(|p| ((p.center - delay).abs(), p))
                .filter(|(d, _)| *d <= tolerance)
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, peak)) = nearest {
                peak.labels.push(pair);
            }
        }
    }
}

/// One matched pair of tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coincidence {
    pub time_a: u64,
    pub time_b: u64,
    pub channel_a: u8,
    pub channel_b: u8,
}

impl Coincidence {
    pub fn delay(&self) -> i64 {
        self.time_b as i64 - self.time_a as i64
    }
}

fn check_bin(bin_width: i64) -> Result<(), CoincidenceError> {
    if bin_width <= 0 {
        return Err(CoincidenceError::InvalidParameter(format!("bin width {bin_width} must be positive")));
    }
    Ok(())
}

/// Calls `visit(tB − tA − offset)` for every pair with the difference in
/// `[lo, hi)`. Both streams must be sorted by time.
fn for_each_difference(a: &[TimeTag], b: &[TimeTag], offset: i64, lo: i64, hi: i64, mut visit: impl FnMut(i64)) {
    let mut start = 0;
    for ta in a {
        let t = ta.time as i64 + offset;
        while start < b.len() && (b[start].time as i64) - t < lo {
            start += 1;
        }
        for tb in &b[start..] {
            let d = tb.time as i64 - t;
            if d >= hi {
                break;
            }
            visit(d);
        }
    }
}

fn centred_histogram(
    a: &[TimeTag],
    b: &[TimeTag],
    offset: i64,
    half_bins: i64,
    bin_width: i64,
) -> CoincidenceHistogram {
    let n = (2 * half_bins + 1) as usize;
    let mut counts = vec![0u64; n];
    let lo = -half_bins * bin_width - bin_width / 2;
    let hi = lo + n as i64 * bin_width;
    for_each_difference(a, b, offset, lo, hi, |d| {
        counts[((d - lo) / bin_width) as usize] += 1;
    });
    CoincidenceHistogram { bin_width, origin: -half_bins * bin_width, counts }
}

/// Histogram of `tB − tA − offset` over `±half_range`.
pub fn build_histogram(
    a: &[TimeTag],
    b: &[TimeTag],
    offset: i64,
    half_range: i64,
    bin_width: i64,
) -> Result<CoincidenceHistogram, CoincidenceError> {
    check_bin(bin_width)?;
    if half_range < 0 || half_range % bin_width != 0 {
        return Err(CoincidenceError::InvalidParameter(format!(
            "bin width {bin_width} must divide half range {half_range}"
        )));
    }
    Ok(centred_histogram(a, b, offset, half_range / bin_width, bin_width))
}

/// Index of the largest count; ties go to the bin nearest `centre`, then to
/// the lower index.
pub(crate) fn argmax_toward(counts: &[u64], centre: usize) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        let better = c > counts[best] || (c == counts[best] && i.abs_diff(centre) < best.abs_diff(centre));
        if better {
            best = i;
        }
    }
    best
}

/// Significance test shared by the offline search and the sync protocol.
pub(crate) fn check_peak(counts: &[u64], best: usize) -> Result<(), CoincidenceError> {
    let background = median(counts);
    let threshold = background + 5.0 * background.max(1.0).sqrt();
    if (counts[best] as f64) < threshold {
        return Err(CoincidenceError::NoPeak { max: counts[best], background });
    }
    Ok(())
}

/// Offset (ps, resolved to one bin) maximizing the cross-correlation of the
/// two streams over `±search_range`.
pub fn find_offset(a: &[TimeTag], b: &[TimeTag], search_range: i64, bin_width: i64) -> Result<i64, CoincidenceError> {
    check_bin(bin_width)?;
    if a.is_empty() {
        return Err(CoincidenceError::EmptyStream('A'));
    }
    if b.is_empty() {
        return Err(CoincidenceError::EmptyStream('B'));
    }
    let half_bins = (search_range.max(0) + bin_width - 1) / bin_width;
    let hist = centred_histogram(a, b, 0, half_bins, bin_width);
    let best = argmax_toward(&hist.counts, half_bins as usize);
    check_peak(&hist.counts, best)?;
    Ok(hist.center(best))
}

/// Peaks standing more than `threshold_sigma` Poisson deviations above the
/// median background, with runs less than two bins apart merged.
pub fn detect_peaks(hist: &CoincidenceHistogram, threshold_sigma: f64) -> PeakSet {
    detect_peaks_with_gap(hist, threshold_sigma, 2)
}

/// As [`detect_peaks`] with a configurable merge distance in bins.
pub fn detect_peaks_with_gap(hist: &CoincidenceHistogram, threshold_sigma: f64, merge_gap: usize) -> PeakSet {
    let background = hist.background();
    let threshold = background + threshold_sigma * background.max(1.0).sqrt();
    let mut regions: Vec<(usize, usize)> = Vec::new();
    for (i, &c) in hist.counts.iter().enumerate() {
        if (c as f64) <= threshold {
            continue;
        }
        match regions.last_mut() {
            Some((_, end)) if i - *end <= merge_gap => *end = i,
            _ => regions.push((i, i)),
        }
    }
    let peaks = regions
        .into_iter()
        .map(|(start, end)| {
            let (mut weight, mut moment) = (0.0, 0.0);
            for i in start..=end {
                let excess = (hist.counts[i] as f64 - background).max(0.0);
                weight += excess;
                moment += excess * hist.center(i) as f64;
            }
            Peak { center: moment / weight, weight, labels: Vec::new() }
        })
        .collect();
    PeakSet { peaks }
}

/// Matches tags with `|tB − tA − offset| ≤ window/2`, closest pairs first,
/// each tag used at most once. The result is sorted by `time_a`.
pub fn pair_coincidences(a: &[TimeTag], b: &[TimeTag], offset: i64, window: i64) -> Vec<Coincidence> {
    if window <= 0 {
        return Vec::new();
    }
    let half = window / 2;
    let mut candidates: Vec<(i64, u32, u32)> = Vec::new();
    let mut start = 0;
    for (ia, ta) in a.iter().enumerate() {
        let t = ta.time as i64 + offset;
        while start < b.len() && (b[start].time as i64) < t - half {
            start += 1;
        }
        for (ib, tb) in b[start..].iter().enumerate() {
            let d = tb.time as i64 - t;
            if d > half {
                break;
            }
            candidates.push((d.abs(), ia as u32, (start + ib) as u32));
        }
    }
    candidates.sort_unstable();
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for (_, ia, ib) in candidates {
        let (ia, ib) = (ia as usize, ib as usize);
        if used_a[ia] || used_b[ib] {
            continue;
        }
        used_a[ia] = true;
        used_b[ib] = true;
        out.push(Coincidence {
            time_a: a[ia].time,
            time_b: b[ib].time,
            channel_a: a[ia].channel,
            channel_b: b[ib].channel,
        });
    }
    out.sort_unstable_by_key(|c| (c.time_a, c.time_b));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Peaks separable by a coincidence window alone.
    Asymmetric,
    /// Needs spatial filtering as well.
    Symmetric,
}

/// Length difference (km) at which the LP01–LP01 and LP11–LP11 peaks
/// separate.
pub const ASYMMETRY_THRESHOLD_KM: f64 = 2.0;

pub fn classify_regime(length_a: f64, length_b: f64) -> Regime {
    if (length_a - length_b).abs() >= ASYMMETRY_THRESHOLD_KM {
        Regime::Asymmetric
    } else {
        Regime::Symmetric
    }
}
