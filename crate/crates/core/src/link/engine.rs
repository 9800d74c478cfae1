use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use super::{ArmConfig, ArmModel, DetectorSpec, LinkError, SourceSpec, TimeTag};
use crate::polarization::{joint_probabilities, Basis, DriftPath, Rotation};
use crate::Party;

const PS_PER_S: f64 = 1e12;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Emission = 1,
    ArmA = 2,
    ArmB = 3,
    Detection = 4,
    DarkA = 5,
    DarkB = 6,
    DriftA = 7,
    DriftB = 8,
    Rotations = 9,
}

impl RngStream {
    pub fn rng(self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self as u64);
        rng
    }

    pub fn dark(party: Party) -> Self {
        match party {
            Party::A => RngStream::DarkA,
            Party::B => RngStream::DarkB,
        }
    }
}

/// Everything needed to generate one pair of tag streams.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub source: SourceSpec,
    pub arm_a: ArmConfig,
    pub arm_b: ArmConfig,
    pub detectors: DetectorSpec,
    /// s
    pub duration: f64,
    pub seed: u64,
    /// Sampling step of the drift random walk (s).
    pub drift_step: f64,
}

/// A photon that survived its arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    /// ps
    pub time: u64,
    pub mode: u32,
    /// Net polarization rotation at the analyzer.
    pub rotation: Rotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub tags_a: Vec<TimeTag>,
    pub tags_b: Vec<TimeTag>,
    pub pairs_emitted: usize,
}

impl SimulatedRun {
    pub fn tags(&self, party: Party) -> &[TimeTag] {
        match party {
            Party::A => &self.tags_a,
            Party::B => &self.tags_b,
        }
    }
}

/// Poisson emission times (ps) over `duration` seconds.
pub fn generate_pairs(source: &SourceSpec, duration: f64, seed: u64) -> Vec<u64> {
    if source.pair_rate <= 0.0 || duration <= 0.0 {
        return Vec::new();
    }
    let mut rng = RngStream::Emission.rng(seed);
    let gap = Exp::new(source.pair_rate).expect("positive rate");
    let mut times = Vec::with_capacity((source.pair_rate * duration * 1.01) as usize + 16);
    let mut t = gap.sample(&mut rng);
    while t < duration {
        times.push((t * PS_PER_S).round() as u64);
        t += gap.sample(&mut rng);
    }
    times
}

/// Sends one photon through an arm. `None` means it was lost.
pub fn propagate(emission: u64, arm: &ArmModel, drift: &DriftPath, rng: &mut impl Rng) -> Option<Arrival> {
    let [f0, f1] = arm.config.launch_fractions;
    let u: f64 = rng.gen();
    let mode = if u < f0 {
        0
    } else if u < f0 + f1 {
        1
    } else {
        return None;
    };
    if rng.gen::<f64>() >= arm.transmission[mode] {
        return None;
    }
    let rotation = if arm.config.drift_rate == 0.0 {
        arm.analyzer_rotation[mode]
    } else {
        // compensator · drift · mode rotation
        arm.config.mode_rotations[0]
            .inverse()
            .then_after(&drift.at(emission as f64 / PS_PER_S))
            .then_after(&arm.config.mode_rotations[mode])
    };
    Some(Arrival { time: emission + arm.delay[mode].round() as u64, mode: mode as u32, rotation })
}

fn jittered(time: u64, sigma: f64, rng: &mut impl Rng) -> u64 {
    if sigma <= 0.0 {
        return time;
    }
    let noise: f64 = Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
    (time as f64 + noise).round().max(0.0) as u64
}

/// Polarization analysis of one pair. Each photon picks a basis at random;
/// outcomes follow the Werner-state Born rule when both photons arrive and
/// are uniformly random otherwise. Detection is thinned by efficiency and
/// smeared by timing jitter. Dead time is applied later on whole streams.
pub fn detect(
    a: Option<&Arrival>,
    b: Option<&Arrival>,
    visibility: f64,
    detectors: &DetectorSpec,
    rng: &mut impl Rng,
) -> [Option<TimeTag>; 2] {
    let basis_a = if rng.gen::<bool>() { Basis::Diagonal } else { Basis::Rectilinear };
    let basis_b = if rng.gen::<bool>() { Basis::Diagonal } else { Basis::Rectilinear };
    let (bit_a, bit_b) = match (a, b) {
        (Some(pa), Some(pb)) => {
            let p = joint_probabilities(visibility, &pa.rotation.jones(), &pb.rotation.jones(), basis_a, basis_b);
            let u: f64 = rng.gen();
            let (mut acc, mut outcome) = (0.0, (1u8, 1u8));
            'search: for (i, row) in p.iter().enumerate() {
                for (j, &pij) in row.iter().enumerate() {
                    acc += pij;
                    if u < acc {
                        outcome = (i as u8, j as u8);
                        break 'search;
                    }
                }
            }
            outcome
        }
        _ => (rng.gen_range(0..2u8), rng.gen_range(0..2u8)),
    };
    let mut out = [None, None];
    for (slot, arrival, basis, bit, party) in [(0, a, basis_a, bit_a, Party::A), (1, b, basis_b, bit_b, Party::B)] {
        if let Some(arr) = arrival {
            if rng.gen::<f64>() < detectors.efficiency {
                out[slot] = Some(TimeTag {
                    time: jittered(arr.time, detectors.jitter_sigma, rng),
                    party,
                    channel: basis.channel(bit),
                });
            }
        }
    }
    out
}

/// Adds a Poisson train of dark counts on each of the four channels and
/// returns the merged stream sorted by time.
pub fn inject_dark_counts(
    stream: Vec<TimeTag>,
    party: Party,
    detectors: &DetectorSpec,
    duration: f64,
    rng: &mut impl Rng,
) -> Vec<TimeTag> {
    let mean = detectors.dark_rate * duration;
    if mean <= 0.0 {
        return stream;
    }
    let count = Poisson::new(mean).expect("positive mean");
    let mut darks = Vec::new();
    for channel in 0..4u8 {
        let n = count.sample(rng) as usize;
        darks.extend((0..n).map(|_| TimeTag { time: (rng.gen::<f64>() * duration * PS_PER_S) as u64, party, channel }));
    }
    darks.sort_unstable();
    merge_sorted(stream, darks)
}

fn merge_sorted(a: Vec<TimeTag>, b: Vec<TimeTag>) -> Vec<TimeTag> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut ia, mut ib) = (a.into_iter().peekable(), b.into_iter().peekable());
    loop {
        let next = match (ia.peek(), ib.peek()) {
            (Some(x), Some(y)) => {
                if x <= y {
                    ia.next()
                } else {
                    ib.next()
                }
            }
            (Some(_), None) => ia.next(),
            (None, Some(_)) => ib.next(),
            (None, None) => break,
        };
        out.extend(next);
    }
    out
}

/// Non-paralyzable dead time (ns) per channel on a time-sorted stream.
pub fn apply_dead_time(stream: Vec<TimeTag>, dead_time: f64) -> Vec<TimeTag> {
    let dead = (dead_time * 1e3).round() as u64;
    if dead == 0 {
        return stream;
    }
    let mut last: [Option<u64>; 4] = [None; 4];
    stream
        .into_iter()
        .filter(|tag| {
            let slot = &mut last[tag.channel as usize & 3];
            match *slot {
                Some(t) if tag.time < t + dead => false,
                _ => {
                    *slot = Some(tag.time);
                    true
                }
            }
        })
        .collect()
}

/// Full Monte Carlo run of a link.
pub fn simulate(config: &LinkConfig) -> Result<SimulatedRun, LinkError> {
    config.source.validate()?;
    config.detectors.validate()?;
    if !(config.duration > 0.0 && config.duration.is_finite()) {
        return Err(LinkError::Invalid(format!("duration {} must be positive", config.duration)));
    }
    if !(config.drift_step > 0.0) {
        return Err(LinkError::Invalid("drift step must be positive".into()));
    }
    let wavelength = config.source.emission_wavelength;
    let arm_a = ArmModel::new(Party::A, &config.arm_a, wavelength)?;
    let arm_b = ArmModel::new(Party::B, &config.arm_b, wavelength)?;
    let drift_a = drift_path(config, Party::A);
    let drift_b = drift_path(config, Party::B);

    let emissions = generate_pairs(&config.source, config.duration, config.seed);
    let mut rng_a = RngStream::ArmA.rng(config.seed);
    let mut rng_b = RngStream::ArmB.rng(config.seed);
    let mut rng_det = RngStream::Detection.rng(config.seed);
    let mut tags_a = Vec::new();
    let mut tags_b = Vec::new();
    for &t in &emissions {
        let a = propagate(t, &arm_a, &drift_a, &mut rng_a);
        let b = propagate(t, &arm_b, &drift_b, &mut rng_b);
        if a.is_none() && b.is_none() {
            continue;
        }
        let [ta, tb] =
            detect(a.as_ref(), b.as_ref(), config.source.intrinsic_visibility, &config.detectors, &mut rng_det);
        tags_a.extend(ta);
        tags_b.extend(tb);
    }

    let finish = |mut tags: Vec<TimeTag>, party: Party| {
        tags.sort_unstable();
        let mut rng = RngStream::dark(party).rng(config.seed);
        let tags = inject_dark_counts(tags, party, &config.detectors, config.duration, &mut rng);
        apply_dead_time(tags, config.detectors.dead_time)
    };
    Ok(SimulatedRun {
        tags_a: finish(tags_a, Party::A),
        tags_b: finish(tags_b, Party::B),
        pairs_emitted: emissions.len(),
    })
}

/// The polarization drift an arm experiences during `simulate`.
pub fn drift_path(config: &LinkConfig, party: Party) -> DriftPath {
    let (arm, stream) = match party {
        Party::A => (&config.arm_a, RngStream::DriftA),
        Party::B => (&config.arm_b, RngStream::DriftB),
    };
    if arm.drift_rate == 0.0 {
        return DriftPath::identity();
    }
    DriftPath::new(arm.drift_rate, config.drift_step, config.duration, &mut stream.rng(config.seed))
}
