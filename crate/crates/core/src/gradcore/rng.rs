use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;

/// Seeded counter-based generator (ChaCha8) with named stream splitting.
///
/// `stream("init")` and `stream("data")` drawn from the same parent never
/// share keystream, so adding draws to one consumer never shifts another.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `name`; does not advance `self`.
    pub fn stream(&self, name: &str) -> Rng {
        let mut key = self.stream.to_le_bytes().to_vec();
        key.extend_from_slice(name.as_bytes());
        Self::with_stream(self.seed, fnv1a(&key))
    }

    /// Child stream keyed by an index (per-sample, per-task, ...).
    pub fn substream(&self, name: &str, index: u64) -> Rng {
        self.stream(&format!("{name}#{index}"))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn rademacher(&mut self) -> f64 {
        if self.inner.next_u32() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    pub fn normal_tensor(&mut self, shape: &[usize], std: f64) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = std * self.normal();
        }
        t
    }

    pub fn rademacher_tensor(&mut self, shape: &[usize]) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = self.rademacher();
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(7).stream("data");
        let mut b = Rng::new(7).stream("data");
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_independent_of_sibling_consumption() {
        let root = Rng::new(3);
        let mut probes = root.stream("probes");
        let before: Vec<u64> = {
            let mut d = root.stream("data");
            (0..5).map(|_| d.next_u64()).collect()
        };
        for _ in 0..1000 {
            probes.next_u64();
        }
        let mut d = root.stream("data");
        let after: Vec<u64> = (0..5).map(|_| d.next_u64()).collect();
        assert_eq!(before, after);
        assert_ne!(
            root.stream("data").next_u64(),
            root.stream("init").next_u64()
        );
    }
}
