//! k-wise independent words from random polynomials over GF(2^m), and their
//! conversion to near-Gaussians by Box–Muller.
//!
//! A seed is `k` field elements `c_0..c_{k-1}`; output `i` is the top bits of
//! `c_0 + c_1 a_i + ... + c_{k-1} a_i^{k-1}` where `a_i` is the field element
//! whose bit pattern is the integer `i`. Distinct evaluation points make any
//! `k` outputs jointly uniform over a uniform seed.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};

/// Low-order coefficients of the lexicographically smallest irreducible
/// polynomial `x^m + ...` over GF(2), for `m = 1..=64`.
const IRREDUCIBLE_LOW: [u64; 64] = [
    0x1, 0x3, 0x3, 0x3, 0x5, 0x3, 0x3, 0x1b, 0x3, 0x9, 0x5, 0x9, 0x1b, 0x21, 0x3, 0x2b, 0x9, 0x9,
    0x27, 0x9, 0x5, 0x3, 0x21, 0x1b, 0x9, 0x1b, 0x27, 0x3, 0x5, 0x3, 0x9, 0x8d, 0x4b, 0x1b, 0x5,
    0x35, 0x3f, 0x63, 0x11, 0x39, 0x9, 0x27, 0x59, 0x21, 0x1b, 0x3, 0x21, 0x2d, 0x71, 0x1d, 0x4b,
    0x9, 0x47, 0x7d, 0x47, 0x95, 0x11, 0x63, 0x7b, 0x3, 0x27, 0x69, 0x3, 0x1b,
];

/// Largest word width accepted by the Gaussian layer (two words share one field element).
pub const MAX_GAUSSIAN_WORD_BITS: u32 = 32;

/// Arithmetic in GF(2^m), `1 <= m <= 64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gf2m {
    m: u32,
    low: u64,
}

impl Gf2m {
    pub fn new(m: u32) -> Result<Self> {
        if !(1..=64).contains(&m) {
            return Err(invalid(format!("field degree must be in 1..=64, got {m}")));
        }
        Ok(Gf2m { m, low: IRREDUCIBLE_LOW[(m - 1) as usize] })
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    /// Low-order part of the reduction polynomial.
    pub fn modulus_low(&self) -> u64 {
        self.low
    }

    fn mask(&self) -> u64 {
        if self.m == 64 {
            u64::MAX
        } else {
            (1u64 << self.m) - 1
        }
    }

    /// Shift-and-add multiplication with interleaved reduction.
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        let mask = self.mask();
        let top = 1u64 << (self.m - 1);
        let mut a = a & mask;
        let mut b = b & mask;
        let mut r = 0u64;
        while b != 0 {
            if b & 1 == 1 {
                r ^= a;
            }
            b >>= 1;
            let carry = a & top != 0;
            a = (a << 1) & mask;
            if carry {
                a ^= self.low;
            }
        }
        r
    }
}

/// Multiplication by a fixed field element through byte-indexed tables.
#[derive(Clone)]
struct ConstMul {
    tables: Vec<[u64; 256]>,
}

impl ConstMul {
    fn new(field: &Gf2m, a: u64) -> Self {
        let nbytes = field.m.div_ceil(8) as usize;
        let tables = (0..nbytes)
            .map(|t| {
                let mut tab = [0u64; 256];
                for (v, slot) in tab.iter_mut().enumerate() {
                    let x = ((v as u64) << (8 * t)) & field.mask();
                    *slot = field.mul(a, x);
                }
                tab
            })
            .collect();
        ConstMul { tables }
    }

    #[inline]
    fn mul(&self, x: u64) -> u64 {
        let mut r = 0;
        for (t, tab) in self.tables.iter().enumerate() {
            r ^= tab[((x >> (8 * t)) & 0xff) as usize];
        }
        r
    }
}

/// Shape of a k-wise independent word vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct KWiseSpec {
    pub k: u32,
    pub n: u64,
    /// Output bits per coordinate.
    #[serde(rename = "M")]
    pub word_bits: u32,
}

impl KWiseSpec {
    pub fn new(k: u32, n: u64, word_bits: u32) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(invalid("k and n must be at least 1"));
        }
        if !(1..=64).contains(&word_bits) {
            return Err(invalid(format!("word bits must be in 1..=64, got {word_bits}")));
        }
        let s = KWiseSpec { k, n, word_bits };
        if s.field_bits() > 64 {
            return Err(invalid("field size exceeds 64 bits"));
        }
        Ok(s)
    }

    /// `m = max(M, ceil(log2(max(n, 2))))`.
    pub fn field_bits(&self) -> u32 {
        let need = 64 - (self.n.max(2) - 1).leading_zeros();
        self.word_bits.max(need)
    }
}

/// `k * m`, the number of seed bits.
pub fn seed_length(spec: &KWiseSpec) -> u64 {
    spec.k as u64 * spec.field_bits() as u64
}

/// A seed: `k` field elements of `m` bits each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KWiseSeed {
    field_bits: u32,
    coeffs: Vec<u64>,
}

impl KWiseSeed {
    pub fn from_coeffs(spec: &KWiseSpec, coeffs: Vec<u64>) -> Result<Self> {
        let m = spec.field_bits();
        if coeffs.len() != spec.k as usize {
            return Err(invalid(format!("seed has {} field elements, expected {}", coeffs.len(), spec.k)));
        }
        if m < 64 && coeffs.iter().any(|&c| c >> m != 0) {
            return Err(invalid("seed element exceeds the field size"));
        }
        Ok(KWiseSeed { field_bits: m, coeffs })
    }

    /// Interprets the low `k*m` bits of `bits` (little-endian) as a seed.
    pub fn from_u128(spec: &KWiseSpec, bits: u128) -> Result<Self> {
        let m = spec.field_bits();
        if seed_length(spec) > 128 {
            return Err(invalid("seed longer than 128 bits"));
        }
        let mask = if m == 64 { u64::MAX as u128 } else { (1u128 << m) - 1 };
        let coeffs = (0..spec.k).map(|j| ((bits >> (j * m)) & mask) as u64).collect();
        Self::from_coeffs(spec, coeffs)
    }

    pub fn random<R: Rng + ?Sized>(spec: &KWiseSpec, rng: &mut R) -> Self {
        let m = spec.field_bits();
        let coeffs = (0..spec.k)
            .map(|_| {
                let v: u64 = rng.gen();
                if m == 64 { v } else { v & ((1u64 << m) - 1) }
            })
            .collect();
        KWiseSeed { field_bits: m, coeffs }
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn bit_len(&self) -> u64 {
        self.field_bits as u64 * self.coeffs.len() as u64
    }

    /// Big-endian hex, one fixed-width group per field element, highest-degree coefficient first.
    pub fn to_hex(&self) -> String {
        let width = self.field_bits.div_ceil(4) as usize;
        self.coeffs.iter().rev().map(|c| format!("{c:0width$x}")).collect()
    }

    pub fn from_hex(spec: &KWiseSpec, s: &str) -> Result<Self> {
        let width = spec.field_bits().div_ceil(4) as usize;
        let s = s.trim().trim_start_matches("0x");
        if s.len() != width * spec.k as usize {
            return Err(invalid(format!("hex seed must have {} digits", width * spec.k as usize)));
        }
        let mut coeffs = Vec::with_capacity(spec.k as usize);
        for chunk in s.as_bytes().chunks(width).rev() {
            let txt = std::str::from_utf8(chunk).map_err(|_| invalid("seed is not ASCII hex"))?;
            coeffs.push(u64::from_str_radix(txt, 16).map_err(|e| invalid(format!("bad hex seed: {e}")))?);
        }
        Self::from_coeffs(spec, coeffs)
    }
}

/// Precomputed expansion for a fixed spec.
#[derive(Clone)]
pub struct Expander {
    spec: KWiseSpec,
    points: Vec<ConstMul>,
}

impl Expander {
    pub fn new(spec: KWiseSpec) -> Result<Self> {
        let field = Gf2m::new(spec.field_bits())?;
        let points = (0..spec.n).map(|i| ConstMul::new(&field, i)).collect();
        Ok(Expander { spec, points })
    }

    pub fn spec(&self) -> &KWiseSpec {
        &self.spec
    }

    /// Full field elements `P(a_i)` for every coordinate.
    pub fn evaluate(&self, seed: &KWiseSeed) -> Result<Vec<u64>> {
        if seed.bit_len() != seed_length(&self.spec) {
            return Err(invalid(format!(
                "seed length {} does not match {}",
                seed.bit_len(),
                seed_length(&self.spec)
            )));
        }
        let c = &seed.coeffs;
        Ok(self
            .points
            .iter()
            .map(|pt| {
                let mut acc = c[c.len() - 1];
                for &cj in c[..c.len() - 1].iter().rev() {
                    acc = pt.mul(acc) ^ cj;
                }
                acc
            })
            .collect())
    }

    /// Top `M` bits of each evaluation.
    pub fn expand(&self, seed: &KWiseSeed) -> Result<Vec<u64>> {
        let shift = self.spec.field_bits() - self.spec.word_bits;
        Ok(self.evaluate(seed)?.into_iter().map(|v| v >> shift).collect())
    }
}

/// One-shot expansion; see [`Expander`] for repeated use.
pub fn expand(seed: &KWiseSeed, spec: &KWiseSpec) -> Result<Vec<u64>> {
    Expander::new(*spec)?.expand(seed)
}

/// `(u + 1) / 2^M`, in `(0, 1]`.
pub fn word_to_unit(u: u64, word_bits: u32) -> f64 {
    (u as f64 + 1.0) * 2f64.powi(-(word_bits as i32))
}

/// Box–Muller on one pair of unit values.
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    (r * c, r * s)
}

/// Maps consecutive word pairs to Gaussian pairs `(r cos, r sin)`.
pub fn to_near_gaussian(words: &[u64], word_bits: u32) -> Result<Vec<f64>> {
    if !words.len().is_multiple_of(2) {
        return Err(invalid("Box-Muller needs an even number of words"));
    }
    let mut out = Vec::with_capacity(words.len());
    for pair in words.chunks_exact(2) {
        let (a, b) = box_muller(word_to_unit(pair[0], word_bits), word_to_unit(pair[1], word_bits));
        out.push(a);
        out.push(b);
    }
    Ok(out)
}

/// k-wise independent near-Gaussian vectors.
///
/// Each coordinate needs two `M`-bit words. Both are cut from a single
/// `2M`-bit field element, so independence of any `k` field elements carries
/// over to any `k` Gaussian coordinates. The coordinate is the cosine branch.
#[derive(Clone)]
pub struct GaussianKWise {
    word_bits: u32,
    expander: Expander,
}

impl GaussianKWise {
    pub fn new(spec: KWiseSpec) -> Result<Self> {
        if !(1..=MAX_GAUSSIAN_WORD_BITS).contains(&spec.word_bits) {
            return Err(invalid(format!(
                "Gaussian word bits must be in 1..={MAX_GAUSSIAN_WORD_BITS}, got {}",
                spec.word_bits
            )));
        }
        let inner = KWiseSpec::new(spec.k, spec.n, 2 * spec.word_bits)?;
        Ok(GaussianKWise { word_bits: spec.word_bits, expander: Expander::new(inner)? })
    }

    /// Spec of the underlying word generator (`2M` bits per coordinate).
    pub fn word_spec(&self) -> &KWiseSpec {
        self.expander.spec()
    }

    pub fn seed_length(&self) -> u64 {
        seed_length(self.expander.spec())
    }

    pub fn random_seed<R: Rng + ?Sized>(&self, rng: &mut R) -> KWiseSeed {
        KWiseSeed::random(self.expander.spec(), rng)
    }

    pub fn vector(&self, seed: &KWiseSeed) -> Result<Vec<f64>> {
        let m = self.word_bits;
        let mask = (1u64 << m) - 1;
        Ok(self
            .expander
            .expand(seed)?
            .into_iter()
            .map(|w| {
                let u1 = word_to_unit(w >> m, m);
                let u2 = word_to_unit(w & mask, m);
                box_muller(u1, u2).0
            })
            .collect())
    }

    /// Adds `scale * vector(seed)` into `acc`.
    pub fn accumulate(&self, seed: &KWiseSeed, scale: f64, acc: &mut [f64]) -> Result<()> {
        for (a, z) in acc.iter_mut().zip(self.vector(seed)?) {
            *a += scale * z;
        }
        Ok(())
    }
}

/// Seed length of the Gaussian layer for `spec`.
pub fn gaussian_seed_length(spec: &KWiseSpec) -> Result<u64> {
    Ok(GaussianKWise::new(*spec)?.seed_length())
}

/// Composition `expand -> to_near_gaussian` for one coordinate vector.
pub fn kwise_gaussian_vector(seed: &KWiseSeed, spec: &KWiseSpec) -> Result<Vec<f64>> {
    GaussianKWise::new(*spec)?.vector(seed)
}

/// Joint-count uniformity of one k-wise configuration, by enumerating every seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UniformityReport {
    pub k: u32,
    pub n: u64,
    #[serde(rename = "M")]
    pub word_bits: u32,
    pub seeds: u64,
    pub subsets: usize,
    pub uniform: bool,
}

/// Enumerates all `2^{k m}` seeds and checks that every `min(k, n)`-subset of
/// output coordinates takes each joint value equally often.
pub fn exhaustive_uniformity(spec: &KWiseSpec) -> Result<UniformityReport> {
    let bits = seed_length(spec);
    if bits > 24 {
        return Err(invalid(format!("{bits}-bit seed space is too large to enumerate")));
    }
    let ex = Expander::new(*spec)?;
    let seeds = 1u64 << bits;
    let outputs: Vec<Vec<u64>> = (0..seeds)
        .map(|b| ex.expand(&KWiseSeed::from_u128(spec, b as u128)?))
        .collect::<Result<_>>()?;
    let n = spec.n as usize;
    let size = (spec.k as usize).min(n);
    let mut subsets = Vec::new();
    let mut cur: Vec<usize> = (0..size).collect();
    loop {
        subsets.push(cur.clone());
        let Some(pos) = (0..size).rev().find(|&i| cur[i] < n - size + i) else { break };
        cur[pos] += 1;
        for i in pos + 1..size {
            cur[i] = cur[i - 1] + 1;
        }
    }
    let m = spec.word_bits;
    let cells = 1usize << (m as usize * size);
    let uniform = subsets.iter().all(|sub| {
        let mut counts = vec![0u64; cells];
        for out in &outputs {
            let key = sub.iter().fold(0usize, |acc, &i| (acc << m) | out[i] as usize);
            counts[key] += 1;
        }
        counts.iter().all(|&c| c * cells as u64 == seeds)
    });
    Ok(UniformityReport { k: spec.k, n: spec.n, word_bits: m, seeds, subsets: subsets.len(), uniform })
}
