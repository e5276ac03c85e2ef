//! Seeded random boundary data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const DEFAULT_SEED: u64 = 42;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vector<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Boundary data for a scan: the `N` indicator vectors followed by `random`
/// standard-normal vectors.
#[derive(Debug, Clone)]
pub struct DataSweep {
    pub data: Vec<Vec<f64>>,
    /// Number of leading basis vectors.
    pub basis: usize,
}

impl DataSweep {
    pub fn new(n: usize, random: usize, seed: u64) -> Self {
        let mut data: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|t| if t == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut rng = seeded(seed);
        data.extend((0..random).map(|_| normal_vector(&mut rng, n)));
        DataSweep { data, basis: n }
    }

    /// `N` basis vectors and 50 normals with seed 42.
    pub fn standard(n: usize) -> Self {
        DataSweep::new(n, 50, DEFAULT_SEED)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// All non-constant 0/1 vectors of length `n`, in binary counting order.
pub fn binary_patterns(n: usize) -> Vec<Vec<f64>> {
    (1..(1usize << n) - 1)
        .map(|bits| (0..n).map(|j| ((bits >> j) & 1) as f64).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_reproducible() {
        let a = DataSweep::standard(3);
        let b = DataSweep::standard(3);
        assert_eq!(a.data, b.data);
        assert_eq!(a.len(), 53);
        assert_eq!(a.data[1], vec![0.0, 1.0, 0.0]);
        assert_ne!(DataSweep::new(3, 5, 7).data[4], a.data[4]);
    }

    #[test]
    fn patterns_exclude_constants() {
        let p = binary_patterns(4);
        assert_eq!(p.len(), 14);
        assert!(p.iter().all(|v| v.iter().any(|&x| x == 0.0) && v.iter().any(|&x| x == 1.0)));
    }
}
