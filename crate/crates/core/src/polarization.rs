//! Polarization unitaries, the two-photon Werner state and fiber drift.
//!
//! Rotations are unit quaternions `(w, x, y, z)` acting on the Poincaré
//! sphere. `(x, y, z)` are components along the Stokes axes S1 (H/V), S2
//! (D/A) and S3 (R/L); the matching Jones matrix is
//! `w·I − i(x·σz + y·σx + z·σy)` in the {H, V} basis.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// 2×2 complex matrix in the {H, V} basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jones(pub [[Complex64; 2]; 2]);

impl Jones {
    pub fn identity() -> Self {
        let (one, zero) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        Jones([[one, zero], [zero, one]])
    }

    pub fn mul(&self, rhs: &Jones) -> Jones {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Jones(out)
    }

    pub fn adjoint(&self) -> Jones {
        let m = &self.0;
        Jones([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    /// Largest entry of `|U†U − I|`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.adjoint().mul(self).0;
        let id = Jones::identity().0;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((p[i][j] - id[i][j]).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }
}

/// Unit quaternion representing an SU(2) polarization rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    /// Rotation of the Poincaré sphere by `angle` (rad) about a Stokes axis.
    /// The axis need not be normalized; a zero axis gives the identity.
    pub fn about(axis: [f64; 3], angle: f64) -> Self {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if norm == 0.0 || angle == 0.0 {
            return Rotation::identity();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / norm;
        Rotation { w: c, x: k * axis[0], y: k * axis[1], z: k * axis[2] }
    }

    /// Haar-random element of SU(2).
    pub fn random(rng: &mut impl Rng) -> Self {
        loop {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-12 {
                return Rotation { w: q[0] / n, x: q[1] / n, y: q[2] / n, z: q[3] / n };
            }
        }
    }

    /// `self ∘ rhs`: apply `rhs` first.
    pub fn then_after(&self, rhs: &Rotation) -> Rotation {
        let (a, b) = (self, rhs);
        Rotation {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + b.w * a.x + a.y * b.z - a.z * b.y,
            y: a.w * b.y + b.w * a.y + a.z * b.x - a.x * b.z,
            z: a.w * b.z + b.w * a.z + a.x * b.y - a.y * b.x,
        }
    }

    pub fn inverse(&self) -> Rotation {
        Rotation { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Rotation {
        let n = self.norm();
        Rotation { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn jones(&self) -> Jones {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        // w·I − i(x σz + y σx + z σy)
        Jones([[Complex64::new(w, -x), Complex64::new(-z, -y)], [Complex64::new(z, -y), Complex64::new(w, x)]])
    }

    /// 3×3 rotation of Stokes vectors, row-major.
    pub fn stokes_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Small rotation whose axis-angle vector is `v` (rad).
    pub fn from_vector(v: [f64; 3]) -> Rotation {
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        Rotation::about(v, angle)
    }
}

/// Analyzer basis selected by the passive beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    /// 0° / 90°
    Rectilinear,
    /// 45° / −45°
    Diagonal,
}

impl Basis {
    pub fn index(self) -> u8 {
        match self {
            Basis::Rectilinear => 0,
            Basis::Diagonal => 1,
        }
    }

    pub fn of_channel(channel: u8) -> Basis {
        if channel < 2 {
            Basis::Rectilinear
        } else {
            Basis::Diagonal
        }
    }

    /// Detector channel (0 = 0°, 1 = 90°, 2 = 45°, 3 = −45°) for a bit.
    pub fn channel(self, bit: u8) -> u8 {
        2 * self.index() + bit
    }

    /// Jones vector of the analyzer state reporting `bit`.
    fn state(self, bit: u8) -> [Complex64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match (self, bit) {
            (Basis::Rectilinear, 0) => [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            (Basis::Rectilinear, _) => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            (Basis::Diagonal, 0) => [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
            (Basis::Diagonal, _) => [Complex64::new(h, 0.0), Complex64::new(-h, 0.0)],
        }
    }
}

/// Joint outcome probabilities `p[bit_a][bit_b]` for the Werner state
/// `V·|Φ⁺⟩⟨Φ⁺| + (1−V)/4·𝟙` after each photon passes its own unitary.
pub fn joint_probabilities(
    visibility: f64,
    unitary_a: &Jones,
    unitary_b: &Jones,
    basis_a: Basis,
    basis_b: Basis,
) -> [[f64; 2]; 2] {
    let project = |u: &Jones, basis: Basis, bit: u8| -> [Complex64; 2] {
        // row vector ⟨s|U
        let s = basis.state(bit);
        let m = &u.0;
        [s[0].conj() * m[0][0] + s[1].conj() * m[1][0], s[0].conj() * m[0][1] + s[1].conj() * m[1][1]]
    };
    let mut p = [[0.0; 2]; 2];
    for (a, row) in p.iter_mut().enumerate() {
        let ra = project(unitary_a, basis_a, a as u8);
        for (b, cell) in row.iter_mut().enumerate() {
            let rb = project(unitary_b, basis_b, b as u8);
            let amp = (ra[0] * rb[0] + ra[1] * rb[1]) * std::f64::consts::FRAC_1_SQRT_2;
            *cell = visibility * amp.norm_sqr() + 0.25 * (1.0 - visibility);
        }
    }
    p
}

/// Probability that a same-basis coincidence yields different bits,
/// averaged over both bases.
pub fn expected_qber(visibility: f64, unitary_a: &Jones, unitary_b: &Jones) -> f64 {
    [Basis::Rectilinear, Basis::Diagonal]
        .iter()
        .map(|&basis| {
            let p = joint_probabilities(visibility, unitary_a, unitary_b, basis, basis);
            (p[0][1] + p[1][0]) / (p[0][0] + p[0][1] + p[1][0] + p[1][1])
        })
        .sum::<f64>()
        / 2.0
}

/// Random walk on SU(2) sampled on a fixed step. Each step applies a
/// rotation whose axis-angle components are independent normals of
/// variance `rate²·step`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftPath {
    step: f64,
    states: Vec<Rotation>,
}

impl DriftPath {
    /// `rate` in rad/√s, `step` and `duration` in seconds.
    pub fn new(rate: f64, step: f64, duration: f64, rng: &mut impl Rng) -> Self {
        assert!(step > 0.0, "drift step must be positive");
        if rate == 0.0 || duration <= 0.0 {
            return DriftPath { step, states: vec![Rotation::identity()] };
        }
        let n = (duration / step).ceil() as usize + 1;
        let sigma = rate * step.sqrt();
        let mut states = Vec::with_capacity(n);
        let mut current = Rotation::identity();
        states.push(current);
        for _ in 1..n {
            let v: [f64; 3] = std::array::from_fn(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            });
            current = Rotation::from_vector(v).then_after(&current).normalized();
            states.push(current);
        }
        DriftPath { step, states }
    }

    pub fn identity() -> Self {
        DriftPath { step: 1.0, states: vec![Rotation::identity()] }
    }

    /// Rotation accumulated by time `t` (s); held at the last sample past
    /// the end of the path.
    pub fn at(&self, t: f64) -> Rotation {
        let i = if t <= 0.0 { 0 } else { (t / self.step).floor() as usize };
        self.states[i.min(self.states.len() - 1)]
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}
