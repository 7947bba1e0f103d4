//! The grid of statistics `s_{i,j}` and the polynomial samplers `F_{i,j}`.
//!
//! `F_{0,0}` is the point mass on `p`. A draw from `F_{i+1,0}` applies an
//! amplified noisy derivative with fresh `y, y'` to a draw from `F_{i,0}`; a
//! draw from `F_{i,j+1}` zooms a draw from `F_{i,j}` at a fresh random center
//! with scale `1 - lambda_bar`. The statistic `s_{i,j}(x)` is `E[f(x)^2]`
//! for `f ~ F_{i,j}`.
//!
//! Exact statistics come from tracking the second-moment (Gram) matrix of the
//! coefficient vector of `f ~ F_{i,0}`. The factors `(h_beta(y) - h_beta(y'))/sqrt 2`
//! are orthonormal over `beta != 0`, so one derivative step maps the Gram
//! matrix `G` to `sum_{beta != 0} R^{2|beta|} A_beta G A_beta^T`, where `A_beta`
//! extracts the zoom coefficient on `h_beta`. Then `s_{i,0} = sum G_ab h_a h_b`
//! and `s_{i,j} = U_{(1-lambda_bar)^{j/2}} s_{i,0}`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gaussops::{amplified_derivative, hypervar, zoom, SqrtBinomial, ZoomSpec};
use crate::hermite::{add_basis_product, HermitePoly, MultiIndex};
use crate::mc::{combined_stderr, gaussian_vec, par_map, stream_id, stream_rng, Estimate};
use crate::prg::PrgParams;

pub const DEFAULT_R_BAR: f64 = 91.0;
pub const DEFAULT_T: u32 = 4;
pub const DEFAULT_K_CONST: f64 = 100.0;
/// Largest coefficient basis for which the exact Gram recursion is attempted.
pub const DEFAULT_MAX_EXACT_BASIS: usize = 2500;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GridOverrides {
    pub r_bar: Option<f64>,
    pub t: Option<u32>,
    pub k_const: Option<f64>,
}

/// Parameters of the statistics grid and of the checks built on it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridParams {
    pub d: u32,
    pub eps: f64,
    pub lambda_bar: f64,
    pub r_bar: f64,
    #[serde(rename = "T")]
    pub t: u32,
    /// Last column index, `(2d+1)^2`.
    #[serde(rename = "D")]
    pub big_d: usize,
    pub lambda_hat: f64,
    pub delta_horz: f64,
    pub delta_anal: f64,
    pub k_const: f64,
}

impl GridParams {
    /// `lambda_hat` solves `(T d)^{2T} lambda_hat^{T/2} = lambda_bar eps`.
    pub fn new(d: u32, eps: f64, lambda_bar: f64, ov: &GridOverrides) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
        }
        if !(lambda_bar > 0.0 && lambda_bar <= 1.0) {
            return Err(invalid(format!("lambda_bar must lie in (0, 1], got {lambda_bar}")));
        }
        let r_bar = ov.r_bar.unwrap_or(DEFAULT_R_BAR);
        let t = ov.t.unwrap_or(DEFAULT_T);
        let k_const = ov.k_const.unwrap_or(DEFAULT_K_CONST);
        if !(r_bar > 0.0) || t == 0 || !(k_const > 0.0) {
            return Err(invalid("R_bar, T and K must be positive"));
        }
        let big_d = ((2 * d + 1) * (2 * d + 1)) as usize;
        let dd = d.max(1) as f64;
        let td = t as f64 * dd;
        let lambda_hat = (lambda_bar * eps).powf(2.0 / t as f64) / td.powi(4);
        Ok(GridParams {
            d,
            eps,
            lambda_bar,
            r_bar,
            t,
            big_d,
            lambda_hat,
            delta_horz: 1.0 / (k_const * dd * big_d as f64),
            delta_anal: 1.0 / (100.0 * dd * big_d as f64),
            k_const,
        })
    }

    pub fn from_prg(p: &PrgParams, ov: &GridOverrides) -> Result<Self> {
        Self::new(p.d, p.eps, p.lambda_bar, ov)
    }

    /// Noise parameter relating column `j` to column 0.
    pub fn column_rho(&self, j: usize) -> f64 {
        (0.5 * j as f64 * (-self.lambda_bar).ln_1p()).exp()
    }
}

/// A procedural distribution over polynomials: `i` derivative steps then `j` zoom steps.
#[derive(Clone, Debug)]
pub struct PolySampler {
    pub base: HermitePoly,
    pub i: usize,
    pub j: usize,
    pub r: f64,
    pub lambda: f64,
}

impl PolySampler {
    pub fn dirac(base: HermitePoly) -> Self {
        PolySampler { base, i: 0, j: 0, r: 1.0, lambda: 0.0 }
    }

    pub fn is_dirac(&self) -> bool {
        self.i == 0 && self.j == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HermitePoly {
        let n = self.base.n();
        let mut f = self.base.clone();
        for _ in 0..self.i {
            if f.is_zero() {
                break;
            }
            let y = gaussian_vec(rng, n);
            let y2 = gaussian_vec(rng, n);
            f = amplified_derivative(&f, &y, &y2, self.r, self.lambda).expect("dimensions agree");
        }
        for _ in 0..self.j {
            let y = gaussian_vec(rng, n);
            f = zoom(&f, &ZoomSpec::new(1.0 - self.lambda, y)).expect("dimensions agree");
        }
        f
    }
}

/// Draws one polynomial from `F_{i,j}`.
pub fn sample_f<R: Rng + ?Sized>(sampler: &PolySampler, rng: &mut R) -> HermitePoly {
    sampler.sample(rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatEstimate {
    pub value: f64,
    pub stderr: f64,
    pub exact: bool,
}

impl StatEstimate {
    fn exact(v: f64) -> Self {
        StatEstimate { value: v, stderr: 0.0, exact: true }
    }

    fn mc(e: Estimate) -> Self {
        StatEstimate { value: e.mean, stderr: e.stderr, exact: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StatMode {
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
}

/// The `s_{i,0}` polynomials for `i = 0..=max_row` by the Gram recursion.
pub fn exact_rows(
    p: &HermitePoly,
    r: f64,
    lambda: f64,
    max_row: usize,
    max_basis: usize,
) -> Result<Vec<HermitePoly>> {
    let mut basis: Vec<MultiIndex> = p.terms().map(|(a, _)| a.clone()).collect();
    let coeffs: Vec<f64> = p.terms().map(|(_, c)| c).collect();
    if basis.len() > max_basis {
        return Err(Error::Unavailable(format!("{} coefficients exceed the exact limit {max_basis}", basis.len())));
    }
    let mut k = basis.len();
    let mut gram = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            gram[a * k + b] = coeffs[a] * coeffs[b];
        }
    }
    let max_exp = p.max_exponents().into_iter().max().unwrap_or(0);
    let sb = SqrtBinomial::new(max_exp, lambda);
    let mut rows = vec![gram_to_poly(p.n(), &basis, &gram)];
    for _ in 1..=max_row {
        let mut index: BTreeMap<MultiIndex, usize> = BTreeMap::new();
        let mut groups: BTreeMap<MultiIndex, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for (ai, a) in basis.iter().enumerate() {
            a.for_each_below(|beta| {
                if beta.is_zero() {
                    return;
                }
                let w = sb.weight(a, beta) * r.powi(beta.degree() as i32);
                if w == 0.0 {
                    return;
                }
                let rest = a.checked_sub(beta).expect("beta <= a");
                let next = index.len();
                let ni = *index.entry(rest).or_insert(next);
                groups.entry(beta.clone()).or_default().push((ai, ni, w));
            });
        }
        let k2 = index.len();
        if k2 > max_basis {
            return Err(Error::Unavailable(format!("{k2} coefficients exceed the exact limit {max_basis}")));
        }
        let mut next_gram = vec![0.0; k2 * k2];
        for members in groups.values() {
            for &(a, na, wa) in members {
                for &(b, nb, wb) in members {
                    next_gram[na * k2 + nb] += wa * wb * gram[a * k + b];
                }
            }
        }
        let mut next_basis = vec![MultiIndex::zero(p.n()); k2];
        for (m, i) in index {
            next_basis[i] = m;
        }
        rows.push(gram_to_poly(p.n(), &next_basis, &next_gram));
        basis = next_basis;
        gram = next_gram;
        k = k2;
        if basis.is_empty() {
            while rows.len() <= max_row {
                rows.push(HermitePoly::zero(p.n()));
            }
            break;
        }
    }
    Ok(rows)
}

fn gram_to_poly(n: usize, basis: &[MultiIndex], gram: &[f64]) -> HermitePoly {
    let k = basis.len();
    let mut out = HermitePoly::zero(n);
    for a in 0..k {
        add_basis_product(&mut out, &basis[a], &basis[a], gram[a * k + a]);
        for b in a + 1..k {
            let g = gram[a * k + b] + gram[b * k + a];
            add_basis_product(&mut out, &basis[a], &basis[b], g);
        }
    }
    out
}

/// Two-sided comparison of one statistics identity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityComparison {
    pub lhs: StatEstimate,
    pub rhs: StatEstimate,
    pub diff: f64,
    pub combined_stderr: f64,
    pub pass: bool,
}

impl IdentityComparison {
    fn new(lhs: StatEstimate, rhs: StatEstimate) -> Self {
        let diff = (lhs.value - rhs.value).abs();
        let se = combined_stderr(lhs.stderr, rhs.stderr);
        let scale = lhs.value.abs().max(rhs.value.abs());
        IdentityComparison { lhs, rhs, diff, combined_stderr: se, pass: diff <= 4.0 * se + 1e-9 * scale }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub i: usize,
    pub j: usize,
    /// `s_{i+1,0}(x)` against `E_{f~F_{i,0}} HyperVar_R[f_{lambda|x}]`.
    pub derivative: IdentityComparison,
    /// `s_{i,j+1}(x)` against `E_{f~F_{i,j}} ||f_{lambda|x}||^2`.
    pub noise: IdentityComparison,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Desideratum2Report {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Statistics for one base polynomial.
pub struct StatGrid {
    p: HermitePoly,
    params: GridParams,
    max_basis: usize,
    exact: OnceLock<Result<Vec<HermitePoly>>>,
}

const STREAM_CELL: &str = "statgrid/cell";
const STREAM_TABLE: &str = "statgrid/table";
const STREAM_ID_DERIV: &str = "statgrid/identity-derivative";
const STREAM_ID_NOISE: &str = "statgrid/identity-noise";
const STREAM_ID_LHS: &str = "statgrid/identity-lhs";

impl StatGrid {
    pub fn new(p: HermitePoly, params: GridParams) -> Self {
        StatGrid { p, params, max_basis: DEFAULT_MAX_EXACT_BASIS, exact: OnceLock::new() }
    }

    pub fn with_max_basis(mut self, max_basis: usize) -> Self {
        self.max_basis = max_basis;
        self
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn base(&self) -> &HermitePoly {
        &self.p
    }

    fn check_cell(&self, i: usize, j: usize) -> Result<()> {
        if i > self.params.d as usize + 1 || j > self.params.big_d {
            return Err(invalid(format!("cell ({i}, {j}) outside the grid")));
        }
        Ok(())
    }

    /// `s_{i,0}` for `i = 0..=d+1`.
    pub fn exact_rows(&self) -> Result<&[HermitePoly]> {
        self.exact
            .get_or_init(|| {
                exact_rows(
                    &self.p,
                    self.params.r_bar,
                    self.params.lambda_bar,
                    self.params.d as usize + 1,
                    self.max_basis,
                )
            })
            .as_ref()
            .map(|v| v.as_slice())
            .map_err(Clone::clone)
    }

    /// `s_{i,j}` as an explicit polynomial in `x`.
    pub fn stat_poly(&self, i: usize, j: usize) -> Result<HermitePoly> {
        self.check_cell(i, j)?;
        let row = &self.exact_rows()?[i];
        let rho = self.params.column_rho(j);
        Ok(row.map_coeffs(|a, c| c * rho.powi(a.degree() as i32)))
    }

    pub fn sampler(&self, i: usize, j: usize) -> PolySampler {
        PolySampler { base: self.p.clone(), i, j, r: self.params.r_bar, lambda: self.params.lambda_bar }
    }

    pub fn stat(&self, i: usize, j: usize, x: &[f64], mode: StatMode) -> Result<StatEstimate> {
        self.check_cell(i, j)?;
        crate::error::check_dim(self.p.n(), x.len())?;
        match mode {
            StatMode::Exact => {
                let levels = self.exact_rows()?[i].level_values(x)?;
                Ok(StatEstimate::exact(self.combine_levels(&levels, j)))
            }
            StatMode::MonteCarlo { trials, seed } => {
                let sampler = self.sampler(i, j);
                let id = stream_id(STREAM_CELL) ^ ((i as u64) << 32 | j as u64);
                let vals = par_map(trials, |t| {
                    let f = sampler.sample(&mut stream_rng(seed, id, t as u64));
                    let v = f.eval(x).expect("dimension checked");
                    v * v
                });
                Ok(StatEstimate::mc(Estimate::from_samples(&vals)))
            }
        }
    }

    fn combine_levels(&self, levels: &[f64], j: usize) -> f64 {
        let rho = self.params.column_rho(j);
        let mut acc = 0.0;
        let mut pw = 1.0;
        for &l in levels {
            acc += pw * l;
            pw *= rho;
        }
        acc
    }

    /// `table[i][j] = s_{i,j}(x)` for rows `0..=d` and columns `0..=D`.
    pub fn table(&self, x: &[f64], mode: StatMode) -> Result<Vec<Vec<StatEstimate>>> {
        crate::error::check_dim(self.p.n(), x.len())?;
        let d = self.params.d as usize;
        let cols = self.params.big_d + 1;
        match mode {
            StatMode::Exact => {
                let rows = self.exact_rows()?;
                let mut out = Vec::with_capacity(d + 1);
                for row in rows.iter().take(d + 1) {
                    let levels = row.level_values(x)?;
                    out.push((0..cols).map(|j| StatEstimate::exact(self.combine_levels(&levels, j))).collect());
                }
                Ok(out)
            }
            StatMode::MonteCarlo { trials, seed } => {
                // One derivative chain per trial feeds every row; each row then
                // runs its own zoom chain across the columns.
                let n = self.p.n();
                let (r, lam) = (self.params.r_bar, self.params.lambda_bar);
                let id = stream_id(STREAM_TABLE);
                let per_trial: Vec<Vec<f64>> = par_map(trials, |t| {
                    let mut rng = stream_rng(seed, id, t as u64);
                    let mut vals = Vec::with_capacity((d + 1) * cols);
                    let mut f = self.p.clone();
                    for i in 0..=d {
                        if i > 0 {
                            let y = gaussian_vec(&mut rng, n);
                            let y2 = gaussian_vec(&mut rng, n);
                            f = amplified_derivative(&f, &y, &y2, r, lam).expect("dims");
                        }
                        let mut g = f.clone();
                        for j in 0..cols {
                            if j > 0 {
                                let c = gaussian_vec(&mut rng, n);
                                g = zoom(&g, &ZoomSpec::new(1.0 - lam, c)).expect("dims");
                            }
                            let v = g.eval(x).expect("dims");
                            vals.push(v * v);
                        }
                    }
                    vals
                });
                let mut out = vec![Vec::with_capacity(cols); d + 1];
                for i in 0..=d {
                    for j in 0..cols {
                        let col: Vec<f64> = per_trial.iter().map(|v| v[i * cols + j]).collect();
                        out[i].push(StatEstimate::mc(Estimate::from_samples(&col)));
                    }
                }
                Ok(out)
            }
        }
    }

    /// Checks both expectation identities relating neighbouring cells at `x`.
    pub fn identities_check(&self, i: usize, j: usize, x: &[f64], trials: usize, seed: u64) -> Result<IdentityReport> {
        self.check_cell(i + 1, j + 1)?;
        crate::error::check_dim(self.p.n(), x.len())?;
        let lhs_mode = StatMode::MonteCarlo { trials, seed: seed ^ stream_id(STREAM_ID_LHS) };
        let lhs = |ii: usize, jj: usize| -> Result<StatEstimate> {
            match self.stat(ii, jj, x, StatMode::Exact) {
                Ok(v) => Ok(v),
                Err(Error::Unavailable(_)) => self.stat(ii, jj, x, lhs_mode),
                Err(e) => Err(e),
            }
        };
        let (r, lam) = (self.params.r_bar, self.params.lambda_bar);

        let s_deriv = self.sampler(i, 0);
        let id = stream_id(STREAM_ID_DERIV);
        let vals = par_map(trials, |t| {
            let f = s_deriv.sample(&mut stream_rng(seed, id, t as u64));
            hypervar(&zoom(&f, &ZoomSpec::new(lam, x.to_vec())).expect("dims"), r, 0)
        });
        let derivative = IdentityComparison::new(lhs(i + 1, 0)?, StatEstimate::mc(Estimate::from_samples(&vals)));

        let s_noise = self.sampler(i, j);
        let id = stream_id(STREAM_ID_NOISE);
        let vals = par_map(trials, |t| {
            let f = s_noise.sample(&mut stream_rng(seed, id, t as u64));
            zoom(&f, &ZoomSpec::new(lam, x.to_vec())).expect("dims").sq2norm()
        });
        let noise = IdentityComparison::new(lhs(i, j + 1)?, StatEstimate::mc(Estimate::from_samples(&vals)));
        let pass = derivative.pass && noise.pass;
        Ok(IdentityReport { i, j, derivative, noise, pass })
    }

    /// `HyperVar_{sqrt(R_bar)/13}[zoom of s_{i,j} at x] <= 8 (s_{i,j+1} + s_{i+1,j}) s_{i+1,j}`, exactly.
    pub fn desideratum2(&self, i: usize, j: usize, x: &[f64]) -> Result<Desideratum2Report> {
        self.check_cell(i + 1, j + 1)?;
        let s = self.stat_poly(i, j)?;
        let z = zoom(&s, &ZoomSpec::new(self.params.lambda_bar, x.to_vec()))?;
        let lhs = hypervar(&z, self.params.r_bar.sqrt() / 13.0, 0);
        let a = self.stat(i, j + 1, x, StatMode::Exact)?.value;
        let b = self.stat(i + 1, j, x, StatMode::Exact)?.value;
        let rhs = 8.0 * (a + b) * b;
        let slack = 1e-12 * (lhs.abs() + rhs.abs());
        Ok(Desideratum2Report { i, j, lhs, rhs, holds: lhs <= rhs + slack })
    }
}
