//! Sparse multivariate polynomials in the orthonormal Hermite basis.
//!
//! The univariate basis is `h_k = H_k / sqrt(k!)` where `H_k` are the
//! probabilists' Hermite polynomials, so `{h_k}` is orthonormal under N(0,1).
//! A multivariate basis element is `h_alpha(x) = prod_i h_{alpha_i}(x_i)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

/// Exponent vector `alpha` in N^n.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Box<[u16]>);

impl MultiIndex {
    pub fn new(exps: impl Into<Vec<u16>>) -> Self {
        MultiIndex(exps.into().into_boxed_slice())
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n].into_boxed_slice())
    }

    /// The unit vector `e_i` in `n` coordinates.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        MultiIndex(v.into_boxed_slice())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exps(&self) -> &[u16] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u16 {
        self.0[i]
    }

    /// Total degree `|alpha|`.
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Componentwise `self >= other`.
    pub fn dominates(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a >= b)
    }

    /// `self - other` if `self >= other` componentwise.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !self.dominates(other) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(
            self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect(),
        )
    }

    /// Calls `f` on every `beta` with `0 <= beta <= self`, in lexicographic order.
    pub fn for_each_below(&self, mut f: impl FnMut(&MultiIndex)) {
        let mut cur = vec![0u16; self.len()];
        loop {
            f(&MultiIndex(cur.clone().into_boxed_slice()));
            let mut i = self.len();
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                if cur[i] < self.0[i] {
                    cur[i] += 1;
                    break;
                }
                cur[i] = 0;
            }
        }
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

const MAX_FACT: usize = 170;

fn factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![1.0f64; MAX_FACT + 1];
        for k in 1..=MAX_FACT {
            t[k] = t[k - 1] * k as f64;
        }
        t
    })
}

pub(crate) fn factorial(k: usize) -> f64 {
    assert!(k <= MAX_FACT, "factorial argument {k} too large");
    factorials()[k]
}

/// Values `h_0(t), ..., h_kmax(t)`.
///
/// Uses the three-term recurrence `H_{k+1} = t H_k - k H_{k-1}` carried out
/// directly on the normalized polynomials, which avoids forming `k!`.
pub fn hermite_values(t: f64, kmax: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(kmax + 1);
    h.push(1.0);
    if kmax >= 1 {
        h.push(t);
    }
    for k in 1..kmax {
        let next = (t * h[k] - (k as f64).sqrt() * h[k - 1]) / ((k + 1) as f64).sqrt();
        h.push(next);
    }
    h
}

/// Coefficients of `h_m * h_n` as `(level, coeff)` pairs, level `m + n - 2k`.
pub fn product_linearization(m: usize, n: usize) -> Vec<(usize, f64)> {
    let fm = factorial(m).sqrt();
    let fn_ = factorial(n).sqrt();
    (0..=m.min(n))
        .map(|k| {
            let top = m + n - 2 * k;
            let c = fm * fn_ * factorial(top).sqrt()
                / (factorial(k) * factorial(m - k) * factorial(n - k));
            (top, c)
        })
        .collect()
}

/// `x^k = sum_j c_j h_{k-2j}`, returned as `(level, coeff)` pairs.
pub fn monomial_to_hermite_1d(k: usize) -> Vec<(usize, f64)> {
    (0..=k / 2)
        .map(|j| {
            let lvl = k - 2 * j;
            let c = factorial(k) / (2f64.powi(j as i32) * factorial(j) * factorial(lvl));
            (lvl, c * factorial(lvl).sqrt())
        })
        .collect()
}

/// `h_k(x) = sum_j c_j x^{k-2j}`, returned as `(power, coeff)` pairs.
pub fn hermite_to_monomial_1d(k: usize) -> Vec<(usize, f64)> {
    let norm = factorial(k).sqrt();
    (0..=k / 2)
        .map(|j| {
            let pow = k - 2 * j;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let c = factorial(k) / (2f64.powi(j as i32) * factorial(j) * factorial(pow));
            (pow, sign * c / norm)
        })
        .collect()
}

/// Projection selector for [`HermitePoly::part`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Eq(u32),
    Lt(u32),
    Ge(u32),
    Gt(u32),
}

impl Part {
    fn keeps(self, level: u32) -> bool {
        match self {
            Part::Eq(k) => level == k,
            Part::Lt(k) => level < k,
            Part::Ge(k) => level >= k,
            Part::Gt(k) => level > k,
        }
    }
}

/// Summary statistics of a polynomial under N(0,1)^n.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormsAndMoments {
    pub mean: f64,
    pub var: f64,
    pub sq2norm: f64,
    /// `levels[k] = W^{=k}[g]`.
    pub levels: Vec<f64>,
}

/// Polynomial in `n` variables stored as a sparse map `alpha -> g^(alpha)`.
///
/// Stored coefficients are never exactly zero.
#[derive(Clone, PartialEq)]
pub struct HermitePoly {
    n: usize,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl fmt::Debug for HermitePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HermitePoly")
            .field("n", &self.n)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl HermitePoly {
    pub fn zero(n: usize) -> Self {
        HermitePoly { n, coeffs: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut g = Self::zero(n);
        g.add_term(MultiIndex::zero(n), c);
        g
    }

    /// The single basis element `h_alpha`.
    pub fn basis(alpha: MultiIndex) -> Self {
        let mut g = Self::zero(alpha.len());
        g.add_term(alpha, 1.0);
        g
    }

    /// Builds a polynomial, summing repeated indices.
    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut g = Self::zero(n);
        for (alpha, c) in terms {
            check_dim(n, alpha.len())?;
            g.add_term(alpha, c);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Number of stored terms.
    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.coeffs.iter().map(|(a, &c)| (a, c))
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.coeffs.get(alpha).copied().unwrap_or(0.0)
    }

    /// Adds `c` to the coefficient of `h_alpha`, dropping the entry if it becomes exactly zero.
    pub fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        debug_assert_eq!(alpha.len(), self.n);
        if c == 0.0 {
            return;
        }
        let entry = self.coeffs.entry(alpha);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|a| a.degree()).max().unwrap_or(0)
    }

    /// Largest exponent appearing in each coordinate.
    pub fn max_exponents(&self) -> Vec<usize> {
        let mut m = vec![0usize; self.n];
        for a in self.coeffs.keys() {
            for (i, &e) in a.exps().iter().enumerate() {
                m[i] = m[i].max(e as usize);
            }
        }
        m
    }

    /// Per-coordinate tables of `h_k(x_i)` large enough to evaluate `self`.
    pub(crate) fn hermite_tables(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.max_exponents()
            .iter()
            .zip(x)
            .map(|(&k, &t)| hermite_values(t, k))
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n, x.len())?;
        let tables = self.hermite_tables(x);
        Ok(self.eval_with_tables(&tables))
    }

    pub(crate) fn eval_with_tables(&self, tables: &[Vec<f64>]) -> f64 {
        self.coeffs
            .iter()
            .map(|(a, &c)| c * basis_value(a, tables))
            .sum()
    }

    /// `sum_{|alpha| = k} g^(alpha) h_alpha(x)` for every level `k`.
    pub fn level_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, x.len())?;
        let tables = self.hermite_tables(x);
        let mut out = vec![0.0; self.degree() as usize + 1];
        for (a, &c) in &self.coeffs {
            out[a.degree() as usize] += c * basis_value(a, &tables);
        }
        Ok(out)
    }

    pub fn mean(&self) -> f64 {
        self.coeff(&MultiIndex::zero(self.n))
    }

    pub fn sq2norm(&self) -> f64 {
        self.coeffs.values().map(|c| c * c).sum()
    }

    pub fn var(&self) -> f64 {
        self.coeffs
            .iter()
            .filter(|(a, _)| !a.is_zero())
            .map(|(_, c)| c * c)
            .sum()
    }

    pub fn weight_at_level(&self, k: u32) -> f64 {
        self.coeffs
            .iter()
            .filter(|(a, _)| a.degree() == k)
            .map(|(_, c)| c * c)
            .sum()
    }

    pub fn norms_and_moments(&self) -> NormsAndMoments {
        let mut levels = vec![0.0; self.degree() as usize + 1];
        for (a, c) in &self.coeffs {
            levels[a.degree() as usize] += c * c;
        }
        NormsAndMoments {
            mean: self.mean(),
            var: self.var(),
            sq2norm: self.sq2norm(),
            levels,
        }
    }

    pub fn part(&self, which: Part) -> HermitePoly {
        HermitePoly {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(a, _)| which.keeps(a.degree()))
                .map(|(a, &c)| (a.clone(), c))
                .collect(),
        }
    }

    /// Applies `f(alpha, c)` to every coefficient; zero results are dropped.
    pub fn map_coeffs(&self, mut f: impl FnMut(&MultiIndex, f64) -> f64) -> HermitePoly {
        let mut out = HermitePoly::zero(self.n);
        for (a, &c) in &self.coeffs {
            out.add_term(a.clone(), f(a, c));
        }
        out
    }

    pub fn scale(&self, s: f64) -> HermitePoly {
        self.map_coeffs(|_, c| s * c)
    }

    pub fn add(&self, other: &HermitePoly) -> Result<HermitePoly> {
        check_dim(self.n, other.n)?;
        let mut out = self.clone();
        for (a, &c) in &other.coeffs {
            out.add_term(a.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &HermitePoly) -> Result<HermitePoly> {
        self.add(&other.scale(-1.0))
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &HermitePoly, s: f64) -> Result<()> {
        check_dim(self.n, other.n)?;
        for (a, &c) in &other.coeffs {
            self.add_term(a.clone(), s * c);
        }
        Ok(())
    }

    /// Product, expanded back into the Hermite basis by coordinatewise linearization.
    pub fn mul(&self, other: &HermitePoly) -> Result<HermitePoly> {
        check_dim(self.n, other.n)?;
        let mut out = HermitePoly::zero(self.n);
        for (a, &ca) in &self.coeffs {
            for (b, &cb) in &other.coeffs {
                add_basis_product(&mut out, a, b, ca * cb);
            }
        }
        Ok(out)
    }

    pub fn square(&self) -> HermitePoly {
        let terms: Vec<_> = self.coeffs.iter().collect();
        let mut out = HermitePoly::zero(self.n);
        for (i, (a, &ca)) in terms.iter().enumerate() {
            add_basis_product(&mut out, a, a, ca * ca);
            for (b, &cb) in &terms[i + 1..] {
                add_basis_product(&mut out, a, b, 2.0 * ca * cb);
            }
        }
        out
    }

    /// Drops coefficients with `|c| <= tol`.
    pub fn prune(&self, tol: f64) -> HermitePoly {
        HermitePoly {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(a, &c)| (a.clone(), c))
                .collect(),
        }
    }

    /// Largest absolute coefficient difference against `other`.
    pub fn max_coeff_diff(&self, other: &HermitePoly) -> f64 {
        let mut m = 0.0f64;
        for (a, &c) in &self.coeffs {
            m = m.max((c - other.coeff(a)).abs());
        }
        for (a, &c) in &other.coeffs {
            if !self.coeffs.contains_key(a) {
                m = m.max(c.abs());
            }
        }
        m
    }

    /// Exact change of basis from monomials `x^alpha`.
    pub fn from_monomial_basis(
        n: usize,
        terms: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Result<HermitePoly> {
        let mut out = HermitePoly::zero(n);
        for (alpha, c) in terms {
            check_dim(n, alpha.len())?;
            let per_coord: Vec<_> = alpha
                .exps()
                .iter()
                .map(|&k| monomial_to_hermite_1d(k as usize))
                .collect();
            tensor_expand(&per_coord, c, |idx, v| out.add_term(idx, v));
        }
        Ok(out)
    }

    /// Monomial coefficients, as a sorted map `alpha -> coeff` with exact zeros dropped.
    pub fn to_monomial_basis(&self) -> BTreeMap<MultiIndex, f64> {
        let mut acc = HermitePoly::zero(self.n);
        for (alpha, &c) in &self.coeffs {
            let per_coord: Vec<_> = alpha
                .exps()
                .iter()
                .map(|&k| hermite_to_monomial_1d(k as usize))
                .collect();
            tensor_expand(&per_coord, c, |idx, v| acc.add_term(idx, v));
        }
        acc.coeffs
    }

    pub fn from_json_str(s: &str) -> Result<HermitePoly> {
        let file: PolyFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_poly()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(PolyFile::from_poly(self)).expect("polynomial serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&PolyFile::from_poly(self)).expect("polynomial serializes")
    }
}

pub(crate) fn basis_value(alpha: &MultiIndex, tables: &[Vec<f64>]) -> f64 {
    let mut v = 1.0;
    for (i, &e) in alpha.exps().iter().enumerate() {
        if e != 0 {
            v *= tables[i][e as usize];
        }
    }
    v
}

/// Adds `c * h_a * h_b` to `out`.
pub(crate) fn add_basis_product(out: &mut HermitePoly, a: &MultiIndex, b: &MultiIndex, c: f64) {
    if c == 0.0 {
        return;
    }
    let per_coord: Vec<_> = a
        .exps()
        .iter()
        .zip(b.exps())
        .map(|(&m, &k)| product_linearization(m as usize, k as usize))
        .collect();
    tensor_expand(&per_coord, c, |idx, v| out.add_term(idx, v));
}

/// Expands `c * prod_i (sum_t coeff_{i,t} e_{level_{i,t}})` and feeds each term to `emit`.
fn tensor_expand(per_coord: &[Vec<(usize, f64)>], c: f64, mut emit: impl FnMut(MultiIndex, f64)) {
    let n = per_coord.len();
    let mut pos = vec![0usize; n];
    if per_coord.iter().any(|v| v.is_empty()) {
        return;
    }
    loop {
        let mut v = c;
        let mut idx = Vec::with_capacity(n);
        for i in 0..n {
            let (lvl, w) = per_coord[i][pos[i]];
            v *= w;
            idx.push(lvl as u16);
        }
        emit(MultiIndex::new(idx), v);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            pos[i] += 1;
            if pos[i] < per_coord[i].len() {
                break;
            }
            pos[i] = 0;
        }
    }
}

/// On-disk polynomial format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyFile {
    pub n: usize,
    pub basis: Basis,
    pub terms: Vec<PolyTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Hermite,
    Monomial,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyTerm {
    pub alpha: Vec<u32>,
    pub coeff: f64,
}

impl PolyFile {
    pub fn from_poly(g: &HermitePoly) -> PolyFile {
        PolyFile {
            n: g.n,
            basis: Basis::Hermite,
            terms: g
                .terms()
                .map(|(a, c)| PolyTerm {
                    alpha: a.exps().iter().map(|&e| e as u32).collect(),
                    coeff: c,
                })
                .collect(),
        }
    }

    /// Canonicalizes into the Hermite basis.
    pub fn into_poly(self) -> Result<HermitePoly> {
        let mut parsed = Vec::with_capacity(self.terms.len());
        for (t, term) in self.terms.iter().enumerate() {
            if term.alpha.len() != self.n {
                return Err(Error::Parse(format!(
                    "term {t} (alpha {:?}): expected {} exponents, found {}",
                    term.alpha,
                    self.n,
                    term.alpha.len()
                )));
            }
            if !term.coeff.is_finite() {
                return Err(Error::Parse(format!("term {t} (alpha {:?}): non-finite coefficient", term.alpha)));
            }
            let mut exps = Vec::with_capacity(self.n);
            for &e in &term.alpha {
                if e > 64 {
                    return Err(Error::Parse(format!(
                        "term {t} (alpha {:?}): exponent {e} exceeds the supported maximum of 64",
                        term.alpha
                    )));
                }
                exps.push(e as u16);
            }
            parsed.push((MultiIndex::new(exps), term.coeff));
        }
        match self.basis {
            Basis::Hermite => HermitePoly::from_terms(self.n, parsed),
            Basis::Monomial => HermitePoly::from_monomial_basis(self.n, parsed),
        }
        .map_err(|e| invalid(e.to_string()))
    }
}
