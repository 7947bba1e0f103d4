//! Monte Carlo plumbing: counter-based seeding and mean/stderr summaries.
//!
//! Every random draw is tied to `(master_seed, stream, index)`, so results do
//! not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

/// A fresh generator for trial `index` of a named `stream`.
pub fn stream_rng(master_seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    seed[24..].copy_from_slice(b"ptf-prg\0");
    ChaCha8Rng::from_seed(seed)
}

/// Stable 64-bit id for a stream name (FNV-1a).
pub fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed; used to give each sub-experiment its own master seed.
pub fn child_seed(master_seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    stream_rng(master_seed, stream_id(name), 0).next_u64()
}

pub fn gaussian_vec<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Evaluates `f(i)` for `i in 0..count` in parallel, preserving order.
pub fn par_map<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..count).into_par_iter().map(f).collect()
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(v: f64) -> Self {
        Estimate { mean: v, stderr: 0.0 }
    }

    /// Summation runs sequentially so the result is independent of scheduling.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Estimate { mean, stderr: 0.0 };
        }
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let var = ss / (n - 1) as f64;
        Estimate { mean, stderr: (var / n as f64).sqrt() }
    }

    /// Frequency of `true` with binomial stderr.
    pub fn from_flags(flags: &[bool]) -> Self {
        let xs: Vec<f64> = flags.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::from_samples(&xs)
    }
}

/// Combined standard error of a difference of independent estimates.
pub fn combined_stderr(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = stream_rng(7, 1, 3).next_u64();
        assert_eq!(a, stream_rng(7, 1, 3).next_u64());
        assert_ne!(a, stream_rng(7, 1, 4).next_u64());
        assert_ne!(a, stream_rng(7, 2, 3).next_u64());
        assert_ne!(a, stream_rng(8, 1, 3).next_u64());
    }

    #[test]
    fn estimate_of_constant_has_zero_stderr() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
    }
}
