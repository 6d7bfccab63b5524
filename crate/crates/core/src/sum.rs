//! Compensated (Kahan–Babuška–Neumaier) accumulation.
//!
//! Jump times grow geometrically along a path, so plain summation of
//! `T_n = Σ λ_j / Σ(K_j)` and of the position increments loses low-order bits.

use std::ops::AddAssign;

use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new(initial: f64) -> Self {
        NeumaierSum {
            sum: initial,
            comp: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, x: f64) {
        self.add(x);
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Componentwise compensated sum of vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierVec3 {
    parts: [NeumaierSum; 3],
}

impl NeumaierVec3 {
    pub fn new(initial: Vec3) -> Self {
        NeumaierVec3 {
            parts: [
                NeumaierSum::new(initial.x),
                NeumaierSum::new(initial.y),
                NeumaierSum::new(initial.z),
            ],
        }
    }

    pub fn add(&mut self, v: Vec3) {
        self.parts[0].add(v.x);
        self.parts[1].add(v.y);
        self.parts[2].add(v.z);
    }

    pub fn value(&self) -> Vec3 {
        Vec3::new(
            self.parts[0].value(),
            self.parts[1].value(),
            self.parts[2].value(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms_next_to_large_ones() {
        let mut s = NeumaierSum::default();
        for x in [1e100, 1.0, -1e100] {
            s += x;
        }
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn beats_naive_on_geometric_series() {
        // Σ_{j<200} 1.1^j has a closed form
        let terms: Vec<f64> = (0..200).map(|j| 1.1f64.powi(j)).collect();
        let exact = (1.1f64.powi(200) - 1.0) / 0.1;
        let comp: NeumaierSum = terms.iter().copied().collect();
        assert!((comp.value() - exact).abs() / exact < 1e-13);
    }

    #[test]
    fn vector_sum() {
        let mut s = NeumaierVec3::new(Vec3::new(1.0, 0.0, 0.0));
        s.add(Vec3::new(1e20, 1.0, 0.0));
        s.add(Vec3::new(-1e20, 1.0, 0.5));
        assert_eq!(s.value(), Vec3::new(1.0, 2.0, 0.5));
    }
}
