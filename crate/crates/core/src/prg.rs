//! The generator `Z = sqrt(lambda_bar) (z_1 + ... + z_L)` with each `z_l` an
//! independent k-wise independent near-Gaussian block.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::kwise::{GaussianKWise, KWiseSeed, KWiseSpec, MAX_GAUSSIAN_WORD_BITS};
use crate::mc::{gaussian_vec, par_map, stream_id, stream_rng};

pub const DEFAULT_LAMBDA_EXP: f64 = 4.0;
pub const DEFAULT_K_MULT: u32 = 16;

/// Optional knobs for [`choose_params`]; `None` means the documented default.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PrgOverrides {
    pub lambda_exp: Option<f64>,
    pub c_lambda: Option<f64>,
    pub lambda_bar: Option<f64>,
    pub blocks: Option<u64>,
    pub k_mult: Option<u32>,
    pub word_bits: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrgParams {
    pub n: usize,
    pub d: u32,
    pub eps: f64,
    pub lambda_exp: f64,
    pub c_lambda: f64,
    pub lambda_bar: f64,
    #[serde(rename = "L")]
    pub blocks: u64,
    pub k_indep: u32,
    /// Word width suggested by the `O(d log(dLn/eps))` analysis.
    pub word_bits_theory: u64,
    /// Word width actually used.
    #[serde(rename = "M")]
    pub word_bits: u32,
    pub seed_bits_per_block: u64,
    pub seed_bits_total: u64,
    /// `k_indep * L * d * ceil(log2(d L n / eps))`.
    pub seed_length_report: f64,
}

fn log2_term(d: u32, blocks: u64, n: usize, eps: f64) -> f64 {
    (d as f64 * blocks as f64 * n as f64 / eps).log2().ceil().max(1.0)
}

pub fn choose_params(n: usize, d: u32, eps: f64, ov: &PrgOverrides) -> Result<PrgParams> {
    if n == 0 || d == 0 {
        return Err(invalid("n and d must be at least 1"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let lambda_exp = ov.lambda_exp.unwrap_or(DEFAULT_LAMBDA_EXP);
    let c_lambda = ov.c_lambda.unwrap_or(1.0);
    if !(lambda_exp > 0.0) || !(c_lambda > 0.0) {
        return Err(invalid("lambda exponent and constant must be positive"));
    }
    let (lambda_bar, blocks) = match (ov.lambda_bar, ov.blocks) {
        (Some(lb), Some(l)) => {
            if !(lb > 0.0 && lb <= 1.0) || l == 0 {
                return Err(invalid("pinned lambda_bar must be in (0, 1] and L >= 1"));
            }
            (lb, l)
        }
        (None, Some(l)) => {
            if l == 0 {
                return Err(invalid("L must be at least 1"));
            }
            (1.0 / l as f64, l)
        }
        (lb, None) => {
            let raw = lb.unwrap_or_else(|| c_lambda * (eps / d as f64).powf(lambda_exp));
            if !(raw > 0.0 && raw <= 1.0) {
                return Err(invalid(format!("lambda_bar must lie in (0, 1], got {raw}")));
            }
            let inv = 1.0 / raw;
            let nearest = inv.round();
            let l = if (inv - nearest).abs() <= 1e-9 * nearest { nearest } else { inv.ceil() };
            if !(l.is_finite() && l <= 2f64.powi(53)) {
                return Err(invalid(format!("block count 1/lambda_bar = {inv:e} overflows")));
            }
            let l = l as u64;
            (1.0 / l as f64, l)
        }
    };
    let k_indep = ov.k_mult.unwrap_or(DEFAULT_K_MULT).checked_mul(d).ok_or_else(|| invalid("k_indep overflows"))?;
    if k_indep == 0 {
        return Err(invalid("k multiplier must be positive"));
    }
    let lg = log2_term(d, blocks, n, eps);
    let word_bits_theory = 2 * (3.0 * d as f64 * (d as f64 * blocks as f64 * n as f64 / eps).log2()).ceil() as u64;
    let word_bits = match ov.word_bits {
        Some(m) => m,
        None => word_bits_theory.clamp(2, MAX_GAUSSIAN_WORD_BITS as u64) as u32,
    };
    let gspec = KWiseSpec::new(k_indep, n as u64, word_bits)?;
    let per_block = GaussianKWise::new(gspec)?.seed_length();
    let total = per_block.checked_mul(blocks).ok_or_else(|| invalid("total seed length overflows"))?;
    Ok(PrgParams {
        n,
        d,
        eps,
        lambda_exp,
        c_lambda,
        lambda_bar,
        blocks,
        k_indep,
        word_bits_theory,
        word_bits,
        seed_bits_per_block: per_block,
        seed_bits_total: total,
        seed_length_report: k_indep as f64 * blocks as f64 * d as f64 * lg,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrgSample {
    pub z: Vec<f64>,
    pub seed_bits_used: u64,
}

/// A generator with its k-wise expansion tables built once.
#[derive(Clone)]
pub struct Prg {
    params: PrgParams,
    gauss: GaussianKWise,
}

const STREAM_BLOCKS: &str = "prg/blocks";
const STREAM_HYBRID: &str = "prg/hybrid-gaussians";

impl Prg {
    pub fn new(params: PrgParams) -> Result<Self> {
        let spec = KWiseSpec::new(params.k_indep, params.n as u64, params.word_bits)?;
        Ok(Prg { params, gauss: GaussianKWise::new(spec)? })
    }

    pub fn params(&self) -> &PrgParams {
        &self.params
    }

    /// Block seeds for sample `index`; always all `L` of them, so hybrids share the tail.
    pub fn block_seeds(&self, master_seed: u64, index: u64) -> Vec<KWiseSeed> {
        let mut rng = stream_rng(master_seed, stream_id(STREAM_BLOCKS), index);
        (0..self.params.blocks).map(|_| self.gauss.random_seed(&mut rng)).collect()
    }

    pub fn sample(&self, master_seed: u64, index: u64) -> PrgSample {
        self.hybrid_unchecked(0, master_seed, index)
    }

    /// First `t` blocks replaced by fully independent Gaussians.
    pub fn replacement_hybrid(&self, t: u64, master_seed: u64, index: u64) -> Result<PrgSample> {
        if t > self.params.blocks {
            return Err(invalid(format!("hybrid index {t} exceeds L = {}", self.params.blocks)));
        }
        Ok(self.hybrid_unchecked(t, master_seed, index))
    }

    fn hybrid_unchecked(&self, t: u64, master_seed: u64, index: u64) -> PrgSample {
        let n = self.params.n;
        let scale = self.params.lambda_bar.sqrt();
        let mut z = vec![0.0; n];
        if t > 0 {
            let mut rng: ChaCha8Rng = stream_rng(master_seed, stream_id(STREAM_HYBRID), index);
            for _ in 0..t {
                for (a, g) in z.iter_mut().zip(gaussian_vec(&mut rng, n)) {
                    *a += scale * g;
                }
            }
        }
        let seeds = self.block_seeds(master_seed, index);
        for seed in &seeds[t as usize..] {
            self.gauss.accumulate(seed, scale, &mut z).expect("seed matches spec");
        }
        PrgSample { z, seed_bits_used: (self.params.blocks - t) * self.params.seed_bits_per_block }
    }

    /// Samples `0..count` in parallel, in index order.
    pub fn batch(&self, master_seed: u64, count: usize) -> Vec<Vec<f64>> {
        par_map(count, |i| self.sample(master_seed, i as u64).z)
    }
}

/// One sample, building the generator on the fly.
pub fn generate(params: &PrgParams, master_seed: u64) -> Result<PrgSample> {
    Ok(Prg::new(params.clone())?.sample(master_seed, 0))
}

/// Reference Gaussian vectors from an ordinary PRNG, for comparison.
pub fn reference_gaussians(n: usize, master_seed: u64, count: usize) -> Vec<Vec<f64>> {
    let id = stream_id("reference-gaussian");
    par_map(count, |i| {
        gaussian_vec(&mut stream_rng(master_seed, id, i as u64), n)
    })
}
