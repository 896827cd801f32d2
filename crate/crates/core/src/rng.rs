//! Seeded randomness. ChaCha8 gives the same stream on every platform.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{DenseMatrix, DenseVector};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a numbered sub-stream, e.g. one per instance.
    pub fn fork(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Self {
            seed: self.seed,
            inner,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform on `{lo, ..., hi}`.
    pub fn int_range(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }

    pub fn normal_vector(&mut self, dim: usize) -> DenseVector {
        DenseVector::from_fn(dim, |_| self.normal())
    }

    pub fn uniform_vector(&mut self, dim: usize, lo: f64, hi: f64) -> DenseVector {
        DenseVector::from_fn(dim, |_| self.uniform(lo, hi))
    }

    /// Entries IID `N(0, std²)`, filled row by row.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| std * self.normal())
    }

    /// Random orthogonal matrix from QR of a Gaussian matrix.
    pub fn orthogonal_matrix(&mut self, n: usize) -> DenseMatrix {
        let g = self.normal_matrix(n, n, 1.0);
        let m = nalgebra::DMatrix::from_row_slice(n, n, g.as_slice());
        let q = m.qr().q();
        DenseMatrix::from_fn(n, n, |i, j| q[(i, j)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_give_equal_streams() {
        let mut a = Rng::new(1234);
        let mut b = Rng::new(1234);
        for _ in 0..10_000 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(2);
        let same = (0..100).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn forks_are_reproducible_and_distinct() {
        let root = Rng::new(9);
        let x: Vec<u64> = {
            let mut r = root.fork(3);
            (0..5).map(|_| r.next_u64()).collect()
        };
        let y: Vec<u64> = {
            let mut r = root.fork(3);
            (0..5).map(|_| r.next_u64()).collect()
        };
        let z: Vec<u64> = {
            let mut r = root.fork(4);
            (0..5).map(|_| r.next_u64()).collect()
        };
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn orthogonal_matrix_is_orthogonal() {
        let q = Rng::new(5).orthogonal_matrix(6);
        let qtq = q.gram();
        assert!(qtq.max_abs_diff(&DenseMatrix::identity(6)) < 1e-12);
    }
}
