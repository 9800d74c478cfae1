//! BBM92 sifting and asymptotic key rates.

use thiserror::Error;

use crate::coincidence::Coincidence;
use crate::polarization::Basis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QkdError {
    #[error("{got} sifted pairs, need at least {needed}")]
    InsufficientData { got: usize, needed: usize },
    #[error("{name} = {value} outside its domain")]
    DomainError { name: &'static str, value: f64 },
    #[error("short-wavelength detectors are not more efficient ({eff_short} ≤ {eff_long})")]
    NoCrossover { eff_short: f64, eff_long: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityParams {
    /// Error-correction inefficiency `f ≥ 1`. The default 1.2375 is the
    /// minimax fit to the six reference (coincidence rate, visibility,
    /// secure rate) triples of the fiber-length summary; it puts all six
    /// within 4.6%.
    pub ec_inefficiency: f64,
    pub sifting_factor: f64,
    /// Minimum sifted sample for a visibility estimate.
    pub min_sifted: usize,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams { ec_inefficiency: 1.2375, sifting_factor: 0.5, min_sifted: 100 }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<(), QkdError> {
        if !(self.ec_inefficiency >= 1.0) {
            return Err(QkdError::DomainError { name: "ec_inefficiency", value: self.ec_inefficiency });
        }
        if !(self.sifting_factor > 0.0 && self.sifting_factor <= 1.0) {
            return Err(QkdError::DomainError { name: "sifting_factor", value: self.sifting_factor });
        }
        Ok(())
    }
}

/// One same-basis coincidence reduced to key bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiftedPair {
    pub basis: Basis,
    pub bit_a: u8,
    pub bit_b: u8,
}

impl SiftedPair {
    pub fn is_error(&self) -> bool {
        self.bit_a != self.bit_b
    }
}

/// Keeps coincidences measured in the same basis. For the Φ⁺ state both
/// parties read the same bit: 0° and 45° give 0, 90° and −45° give 1.
pub fn sift(coincidences: &[Coincidence]) -> Vec<SiftedPair> {
    coincidences
        .iter()
        .filter_map(|c| {
            let basis = Basis::of_channel(c.channel_a);
            (basis == Basis::of_channel(c.channel_b)).then_some(SiftedPair {
                basis,
                bit_a: c.channel_a & 1,
                bit_b: c.channel_b & 1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityEstimate {
    pub visibility: f64,
    pub qber: f64,
    pub sifted: usize,
    pub errors: usize,
}

pub fn estimate_visibility(sifted: &[SiftedPair], min_sample: usize) -> Result<VisibilityEstimate, QkdError> {
    let needed = min_sample.max(1);
    if sifted.len() < needed {
        return Err(QkdError::InsufficientData { got: sifted.len(), needed });
    }
    let errors = sifted.iter().filter(|p| p.is_error()).count();
    let qber = errors as f64 / sifted.len() as f64;
    Ok(VisibilityEstimate { visibility: 1.0 - 2.0 * qber, qber, sifted: sifted.len(), errors })
}

/// `H₂(e)` in bits.
pub fn binary_entropy(e: f64) -> Result<f64, QkdError> {
    if !(0.0..=1.0).contains(&e) {
        return Err(QkdError::DomainError { name: "error rate", value: e });
    }
    if e == 0.0 || e == 1.0 {
        return Ok(0.0);
    }
    Ok(-e * e.log2() - (1.0 - e) * (1.0 - e).log2())
}

/// `s · C · max(0, 1 − f·H₂(E) − H₂(E))`.
pub fn secure_key_rate(coincidence_rate: f64, qber: f64, params: &SecurityParams) -> Result<f64, QkdError> {
    params.validate()?;
    if !(0.0..=0.5).contains(&qber) {
        return Err(QkdError::DomainError { name: "qber", value: qber });
    }
    let h = binary_entropy(qber)?;
    let fraction = (1.0 - (params.ec_inefficiency + 1.0) * h).max(0.0);
    Ok(params.sifting_factor * coincidence_rate * fraction)
}

/// QBER at which the secure fraction reaches zero.
pub fn qber_threshold(params: &SecurityParams) -> f64 {
    let g = |e: f64| 1.0 - (params.ec_inefficiency + 1.0) * binary_entropy(e).unwrap_or(1.0);
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Rates for one analysis run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateResult {
    pub coincidence_rate: f64,
    pub sifted_rate: f64,
    pub visibility: f64,
    pub qber: f64,
    pub secure_rate: f64,
}

impl KeyRateResult {
    pub fn new(coincidence_rate: f64, sifted_rate: f64, qber: f64, params: &SecurityParams) -> Result<Self, QkdError> {
        // Noise-only data can measure slightly above 1/2; no key either way.
        let secure = if qber > 0.5 {
            params.validate()?;
            0.0
        } else {
            secure_key_rate(coincidence_rate, qber, params)?.min(sifted_rate)
        };
        Ok(KeyRateResult { coincidence_rate, sifted_rate, visibility: 1.0 - 2.0 * qber, qber, secure_rate: secure })
    }

    /// Rates over `duration` seconds from a list of coincidences.
    pub fn from_coincidences(
        coincidences: &[Coincidence],
        duration: f64,
        params: &SecurityParams,
    ) -> Result<Self, QkdError> {
        let sifted = sift(coincidences);
        let estimate = estimate_visibility(&sifted, params.min_sifted)?;
        KeyRateResult::new(coincidences.len() as f64 / duration, sifted.len() as f64 / duration, estimate.qber, params)
    }

    pub fn is_consistent(&self) -> bool {
        self.secure_rate >= 0.0
            && self.secure_rate <= self.sifted_rate
            && self.sifted_rate <= self.coincidence_rate
            && (self.qber - (1.0 - self.visibility) / 2.0).abs() <= 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossover {
    /// dB of short-wavelength fiber loss at break-even.
    pub breakeven_loss: f64,
    /// km
    pub breakeven_length: f64,
}

/// Fiber length up to which short-wavelength photons with better detectors
/// beat long-wavelength photons in overall attenuation.
pub fn crossover_analysis(
    loss_short: f64,
    loss_long: f64,
    eff_short: f64,
    eff_long: f64,
) -> Result<Crossover, QkdError> {
    if !(loss_long > 0.0) {
        return Err(QkdError::DomainError { name: "loss1550", value: loss_long });
    }
    if !(loss_short > loss_long) {
        return Err(QkdError::DomainError { name: "loss810", value: loss_short });
    }
    for (name, eff) in [("eff_short", eff_short), ("eff_long", eff_long)] {
        if !(eff > 0.0 && eff <= 1.0) {
            return Err(QkdError::DomainError { name, value: eff });
        }
    }
    if eff_short < eff_long {
        return Err(QkdError::NoCrossover { eff_short, eff_long });
    }
    let length = 10.0 * (eff_short / eff_long).log10() / (loss_short - loss_long);
    Ok(Crossover { breakeven_loss: loss_short * length, breakeven_length: length })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coinc(channel_a: u8, channel_b: u8) -> Coincidence {
        Coincidence { time_a: 0, time_b: 0, channel_a, channel_b }
    }

    #[test]
    fn entropy_endpoints_and_domain() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(binary_entropy(-0.1), Err(QkdError::DomainError { .. })));
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn same_basis_input_is_kept() {
        let c = [coinc(0, 0), coinc(1, 0), coinc(2, 3), coinc(3, 3)];
        let s = sift(&c);
        assert_eq!(s.len(), 4);
        assert_eq!(s.iter().filter(|p| p.is_error()).count(), 2);
        assert!(sift(&[coinc(0, 2), coinc(3, 1)]).is_empty());
    }

    #[test]
    fn visibility_from_errors() {
        let pairs = vec![SiftedPair { basis: Basis::Rectilinear, bit_a: 0, bit_b: 0 }; 200];
        let v = estimate_visibility(&pairs, 100).unwrap();
        assert_eq!((v.visibility, v.qber), (1.0, 0.0));
        assert!(matches!(
            estimate_visibility(&pairs[..99], 100),
            Err(QkdError::InsufficientData { got: 99, needed: 100 })
        ));
    }

    #[test]
    fn zero_rate_beyond_threshold() {
        let p = SecurityParams::default();
        let e = qber_threshold(&p);
        assert!((e - 0.093).abs() < 0.001, "{e}");
        assert_eq!(secure_key_rate(1000.0, e + 1e-9, &p).unwrap(), 0.0);
        assert_eq!(secure_key_rate(1000.0, 0.3, &p).unwrap(), 0.0);
        assert!(secure_key_rate(1000.0, 0.6, &p).is_err());
        let f1 = SecurityParams { ec_inefficiency: 1.0, ..p };
        assert!((qber_threshold(&f1) - 0.110).abs() < 0.001);
    }

    #[test]
    fn invalid_security_params() {
        let p = SecurityParams { ec_inefficiency: 0.9, ..Default::default() };
        assert!(secure_key_rate(1.0, 0.01, &p).is_err());
        let p = SecurityParams { sifting_factor: 0.0, ..Default::default() };
        assert!(secure_key_rate(1.0, 0.01, &p).is_err());
    }

    #[test]
    fn crossover_edges() {
        let c = crossover_analysis(3.0, 0.22, 0.5, 0.5).unwrap();
        assert_eq!(c.breakeven_length, 0.0);
        assert!(matches!(crossover_analysis(3.0, 0.22, 0.1, 0.5), Err(QkdError::NoCrossover { .. })));
        assert!(crossover_analysis(0.2, 0.22, 0.7, 0.15).is_err());
    }

    #[test]
    fn key_rate_result_is_consistent() {
        let r = KeyRateResult::new(3000.0, 1500.0, 0.06, &SecurityParams::default()).unwrap();
        assert!(r.is_consistent());
    }
}
