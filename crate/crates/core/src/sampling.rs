//! Axis-aligned boxes and deterministic low-discrepancy sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vector};

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Axis-aligned box `{x : lower ≤ x ≤ upper}`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "box bounds must be nonempty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::InvalidArgument("box requires lower ≤ upper in every coordinate".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; dim], upper: vec![f64::INFINITY; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|b| b.is_finite())
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(xi, (l, u))| *l <= *xi && *xi <= *u)
    }

    /// Maps a point of the unit cube onto the box. Requires finite bounds.
    pub fn from_unit(&self, unit: &[f64]) -> Vector {
        Vector::from_iterator(
            self.dim(),
            unit.iter().zip(self.lower.iter().zip(&self.upper)).map(|(s, (l, u))| l + s * (u - l)),
        )
    }

    /// Half of each side length.
    pub fn half_widths(&self) -> Vector {
        Vector::from_iterator(self.dim(), self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (u - l)))
    }

    /// `n` Halton points inside the box.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vector>> {
        if !self.is_finite() {
            return Err(Error::InvalidArgument("cannot sample a box with infinite bounds".into()));
        }
        let mut seq = Halton::new(self.dim(), seed)?;
        Ok((0..n).map(|_| self.from_unit(&seq.next_point())).collect())
    }
}

/// Halton sequence with a seeded Cranley–Patterson rotation.
///
/// Seed 0 gives the unrotated sequence (skipping the origin).
#[derive(Debug, Clone)]
pub struct Halton {
    index: u64,
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || dim > PRIMES.len() {
            return Err(Error::InvalidArgument(format!(
                "Halton dimension must be in 1..={}, got {dim}",
                PRIMES.len()
            )));
        }
        let shift = if seed == 0 {
            vec![0.0; dim]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..dim).map(|_| rng.gen::<f64>()).collect()
        };
        Ok(Self { index: 0, shift })
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, base)| (radical_inverse(self.index, base) + s).fract())
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Deterministic RNG for ray directions and random test instances.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        let got: Vec<f64> = (1..=4).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(got, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn samples_stay_inside_and_are_deterministic() {
        let b = DomainBox::new(vec![-1.0, 0.0, 2.0], vec![1.0, 5.0, 3.0]).unwrap();
        let a = b.sample(500, 7).unwrap();
        assert!(a.iter().all(|x| b.contains(x)));
        assert_eq!(a, b.sample(500, 7).unwrap());
        assert_ne!(a, b.sample(500, 8).unwrap());
    }

    #[test]
    fn halton_fills_unit_square_evenly() {
        let mut h = Halton::new(2, 0).unwrap();
        let pts: Vec<_> = (0..4096).map(|_| h.next_point()).collect();
        // every cell of a 16×16 grid is hit
        let mut hit = [[false; 16]; 16];
        for p in &pts {
            hit[(p[0] * 16.0) as usize][(p[1] * 16.0) as usize] = true;
        }
        assert!(hit.iter().flatten().all(|&c| c));
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(DomainBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(DomainBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(DomainBox::unbounded(3).sample(10, 0).is_err());
    }
}
