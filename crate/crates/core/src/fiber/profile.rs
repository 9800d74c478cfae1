use std::f64::consts::PI;

/// A radial function sampled on the uniform grid `r_i = i·step`, `i = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    /// µm
    pub step: f64,
    pub values: Vec<f64>,
    /// Parity of the analytic continuation to `r < 0` (`(-1)^l`).
    pub odd: bool,
}

impl RadialProfile {
    pub fn from_fn(extent: f64, points: usize, odd: bool, f: impl Fn(f64) -> f64) -> Self {
        let step = extent / (points - 1) as f64;
        let values = (0..points).map(|i| f(i as f64 * step)).collect();
        RadialProfile { step, values, odd }
    }

    pub fn extent(&self) -> f64 {
        self.step * (self.values.len().saturating_sub(1)) as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    fn sample(&self, i: isize) -> f64 {
        if i < 0 {
            let v = self.values.get((-i) as usize).copied().unwrap_or(0.0);
            if self.odd {
                -v
            } else {
                v
            }
        } else {
            self.values.get(i as usize).copied().unwrap_or(0.0)
        }
    }

    /// Four-point cubic Lagrange interpolation; zero beyond the grid.
    pub fn value_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r > self.extent() {
            return 0.0;
        }
        let x = r / self.step;
        let i = x.floor() as isize;
        let t = x - i as f64;
        let p0 = self.sample(i - 1);
        let p1 = self.sample(i);
        let p2 = self.sample(i + 1);
        let p3 = self.sample(i + 2);
        let (a, b, c) = (t + 1.0, t - 1.0, t - 2.0);
        -t * b * c / 6.0 * p0 + a * b * c / 2.0 * p1 - a * t * c / 2.0 * p2 + a * t * b / 6.0 * p3
    }

    /// Trapezoid `∫ f(r) g(r) r dr` over the grid.
    pub fn radial_integral(&self, g: impl Fn(usize, f64) -> f64) -> f64 {
        let n = self.values.len();
        let mut sum = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            sum += w * g(i, v) * self.radius(i);
        }
        sum * self.step
    }

    /// `∫∫ |R(r) cos(lφ)|² dA`.
    pub fn power(&self, azimuthal_index: u32) -> f64 {
        azimuthal_weight(azimuthal_index) * self.radial_integral(|_, v| v * v)
    }

    /// Central-difference derivative `dR/dr` at every node.
    pub fn derivative(&self) -> Vec<f64> {
        let n = self.values.len();
        (0..n)
            .map(|i| {
                if i == 0 {
                    (self.sample(1) - self.sample(-1)) / (2.0 * self.step)
                } else if i == n - 1 {
                    (self.values[i] - self.values[i - 1]) / self.step
                } else {
                    (self.values[i + 1] - self.values[i - 1]) / (2.0 * self.step)
                }
            })
            .collect()
    }
}

/// `∫₀^{2π} cos²(lφ) dφ`.
pub(crate) fn azimuthal_weight(l: u32) -> f64 {
    if l == 0 {
        2.0 * PI
    } else {
        PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_interpolation_is_accurate_for_smooth_profiles() {
        let p = RadialProfile::from_fn(5.0, 2001, false, |r| (-r * r).exp());
        for r in [0.0, 0.0013, 0.7771, 2.3333, 4.99] {
            assert!((p.value_at(r) - (-r * r).exp()).abs() < 1e-9, "r = {r}");
        }
        assert_eq!(p.value_at(5.1), 0.0);
    }

    #[test]
    fn odd_parity_near_origin() {
        let p = RadialProfile::from_fn(3.0, 3001, true, |r| r * (-r * r).exp());
        let r = 0.0004;
        assert!((p.value_at(r) - r * (-r * r).exp()).abs() < 1e-10);
    }

    #[test]
    fn gaussian_power() {
        // ∫ exp(-2r²/w²) 2πr dr = πw²/2
        let w = 1.7;
        let p = RadialProfile::from_fn(6.0 * w, 4001, false, |r| (-(r * r) / (w * w)).exp());
        let want = PI * w * w / 2.0;
        assert!(((p.power(0) - want) / want).abs() < 1e-6);
    }
}
