use super::{ArmModel, LinkConfig, LinkError};
use crate::polarization::expected_qber;
use crate::Party;

/// Expected contribution of one launched mode pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModePairTerm {
    pub mode_a: u32,
    pub mode_b: u32,
    /// Arrival-time difference `t_B − t_A` (ps).
    pub delay: f64,
    /// Detected coincidences per second.
    pub rate: f64,
    pub qber: f64,
}

/// Closed-form rates of a link without shot noise, drift or dead time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub pair_rate: f64,
    pub efficiency: f64,
    pub terms: Vec<ModePairTerm>,
    /// Singles per second at A and B, dark counts included.
    pub singles: [f64; 2],
}

impl LinkBudget {
    /// Delay of the LP01–LP01 peak.
    pub fn main_delay(&self) -> f64 {
        self.terms.iter().find(|t| t.mode_a == 0 && t.mode_b == 0).map_or(0.0, |t| t.delay)
    }

    /// Terms whose peak falls inside a window of total width `window` (ps)
    /// centred on the main peak.
    pub fn accepted(&self, window: f64) -> impl Iterator<Item = &ModePairTerm> {
        let main = self.main_delay();
        self.terms.iter().filter(move |t| (t.delay - main).abs() <= 0.5 * window)
    }

    pub fn true_rate(&self, window: f64) -> f64 {
        self.accepted(window).map(|t| t.rate).sum()
    }

    pub fn accidental_rate(&self, window: f64) -> f64 {
        self.singles[0] * self.singles[1] * window * 1e-12
    }

    pub fn coincidence_rate(&self, window: f64) -> f64 {
        self.true_rate(window) + self.accidental_rate(window)
    }

    pub fn qber(&self, window: f64) -> f64 {
        let errors: f64 =
            self.accepted(window).map(|t| t.rate * t.qber).sum::<f64>() + 0.5 * self.accidental_rate(window);
        let total = self.coincidence_rate(window);
        if total > 0.0 {
            errors / total
        } else {
            0.5
        }
    }

    /// Loss (dB) of accepted true coincidences relative to a lossless link
    /// with the same detectors.
    pub fn transmission_loss(&self, window: f64) -> f64 {
        let reference = self.pair_rate * self.efficiency * self.efficiency;
        -10.0 * (self.true_rate(window) / reference).log10()
    }
}

pub fn link_budget(config: &LinkConfig) -> Result<LinkBudget, LinkError> {
    let wavelength = config.source.emission_wavelength;
    let arm_a = ArmModel::new(Party::A, &config.arm_a, wavelength)?;
    let arm_b = ArmModel::new(Party::B, &config.arm_b, wavelength)?;
    let eta = config.detectors.efficiency;
    let pair_rate = config.source.pair_rate;
    let reach = |arm: &ArmModel, l: usize| arm.config.launch_fractions[l] * arm.transmission[l];
    let mut terms = Vec::new();
    for i in 0..arm_a.modes.len().min(2) {
        for j in 0..arm_b.modes.len().min(2) {
            let rate = pair_rate * eta * eta * reach(&arm_a, i) * reach(&arm_b, j);
            if rate == 0.0 {
                continue;
            }
            terms.push(ModePairTerm {
                mode_a: i as u32,
                mode_b: j as u32,
                delay: arm_b.delay[j] - arm_a.delay[i],
                rate,
                qber: expected_qber(
                    config.source.intrinsic_visibility,
                    &arm_a.analyzer_rotation[i].jones(),
                    &arm_b.analyzer_rotation[j].jones(),
                ),
            });
        }
    }
    let singles = [&arm_a, &arm_b]
        .map(|arm| pair_rate * eta * (reach(arm, 0) + reach(arm, 1)) + 4.0 * config.detectors.dark_rate);
    Ok(LinkBudget { pair_rate, efficiency: eta, terms, singles })
}
