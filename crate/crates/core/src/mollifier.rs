//! The smooth step `sigma`, soft checks, the mollifier product and the hard
//! analysis checks on the statistics grid.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::hermite::HermitePoly;
use crate::mc::{gaussian_vec, par_map, stream_id, stream_rng, Estimate};
use crate::statgrid::{GridParams, StatEstimate, StatGrid, StatMode};

/// `sigma(t) = int_{-1}^t (1-u^2)^r du / int_{-1}^1 (1-u^2)^r du`, clamped outside `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothStep {
    order: u32,
    /// Coefficients of `t^{2k+1}` in the antiderivative.
    odd: Vec<f64>,
    half: f64,
    norm: f64,
}

impl SmoothStep {
    pub fn new(order: u32) -> Self {
        // (1-u^2)^r = sum_k C(r,k) (-1)^k u^{2k}
        let mut odd = Vec::with_capacity(order as usize + 1);
        let mut binom = 1.0f64;
        for k in 0..=order {
            if k > 0 {
                binom = binom * (order - k + 1) as f64 / k as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            odd.push(sign * binom / (2 * k + 1) as f64);
        }
        let half: f64 = odd.iter().sum();
        SmoothStep { order, odd, half, norm: 2.0 * half }
    }

    /// The step used for degree-`d` polynomials, `order = max(d, 4)`.
    pub fn for_degree(d: u32) -> Self {
        Self::new(d.max(4))
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if t <= -1.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let t2 = t * t;
        let mut acc = 0.0;
        for &c in self.odd.iter().rev() {
            acc = acc * t2 + c;
        }
        ((acc * t + self.half) / self.norm).clamp(0.0, 1.0)
    }
}

pub fn sigma(t: f64, order: u32) -> f64 {
    SmoothStep::new(order).eval(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Diagonal,
    Horizontal,
}

/// `sigma(delta^{-1} ln(s_u / (gamma s_v)))` for grid cells `u`, `v`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckSpec {
    pub kind: CheckKind,
    pub i: usize,
    pub j: usize,
    pub u: (usize, usize),
    pub v: (usize, usize),
    pub gamma: f64,
    pub delta: f64,
}

/// Soft check value; `0/0` and `positive/0` count as `+inf`, `0/positive` as `0`.
pub fn soft_check(check: &CheckSpec, step: &SmoothStep, su: f64, sv: f64) -> Result<f64> {
    if su < 0.0 || sv < 0.0 || su.is_nan() || sv.is_nan() {
        return Err(invalid(format!("statistics must be nonnegative, got {su} and {sv}")));
    }
    if sv == 0.0 {
        return Ok(1.0);
    }
    if su == 0.0 {
        return Ok(0.0);
    }
    let ratio = su / (check.gamma * sv);
    let log_ratio = if ratio.is_finite() && ratio > 0.0 {
        ratio.ln()
    } else {
        su.ln() - check.gamma.ln() - sv.ln()
    };
    let t = log_ratio / check.delta;
    Ok(step.eval(t))
}

/// Diagonal checks, then horizontal checks row by row.
pub fn mollifier_checks(params: &GridParams) -> Vec<CheckSpec> {
    let d = params.d as usize;
    let mut out = Vec::new();
    for i in 0..d {
        out.push(CheckSpec {
            kind: CheckKind::Diagonal,
            i,
            j: 0,
            u: (i, 1),
            v: (i + 1, 0),
            gamma: 1.0 / (std::f64::consts::E * params.lambda_hat),
            delta: 1.0,
        });
    }
    let dh = params.delta_horz;
    let gamma = (-2.0 * dh).exp();
    for i in 0..=d {
        for j in 0..params.big_d.saturating_sub(1) {
            for (u, v) in [((i, j), (i, j + 1)), ((i, j + 1), (i, j))] {
                out.push(CheckSpec { kind: CheckKind::Horizontal, i, j, u, v, gamma, delta: dh });
            }
        }
    }
    out
}

/// `a ~_nu b`: same sign and `e^{-nu} <= a/b <= e^nu`, or both zero.
pub fn approx_eq(a: f64, b: f64, nu: f64) -> bool {
    if a == 0.0 && b == 0.0 {
        return true;
    }
    if a * b <= 0.0 {
        return false;
    }
    (a / b).ln().abs() <= nu
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisCheck {
    pub id: String,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisCheckReport {
    pub checks: Vec<AnalysisCheck>,
    pub first_failure: Option<String>,
}

/// Per-point mollifier output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MollifierPoint {
    pub mollifier: f64,
    pub sign: i8,
    pub i_plus: f64,
    pub i_minus: f64,
    pub first_analysis_failure: Option<String>,
}

pub fn sign_of(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Mollifier and analysis checks for one polynomial.
pub struct Mollifier {
    grid: StatGrid,
    checks: Vec<CheckSpec>,
    step: SmoothStep,
}

impl Mollifier {
    pub fn new(p: HermitePoly, params: GridParams) -> Self {
        let checks = mollifier_checks(&params);
        let step = SmoothStep::for_degree(params.d);
        Mollifier { grid: StatGrid::new(p, params), checks, step }
    }

    pub fn grid(&self) -> &StatGrid {
        &self.grid
    }

    pub fn checks(&self) -> &[CheckSpec] {
        &self.checks
    }

    fn values(&self, x: &[f64], mode: StatMode) -> Result<Vec<Vec<f64>>> {
        let t: Vec<Vec<StatEstimate>> = self.grid.table(x, mode)?;
        Ok(t.into_iter().map(|row| row.into_iter().map(|s| s.value.max(0.0)).collect()).collect())
    }

    fn mollifier_from(&self, s: &[Vec<f64>]) -> Result<f64> {
        let mut prod = 1.0;
        for c in &self.checks {
            let v = soft_check(c, &self.step, s[c.u.0][c.u.1], s[c.v.0][c.v.1])?;
            prod *= v;
            if prod == 0.0 {
                break;
            }
        }
        Ok(prod)
    }

    pub fn eval(&self, x: &[f64], mode: StatMode) -> Result<f64> {
        let s = self.values(x, mode)?;
        self.mollifier_from(&s)
    }

    /// `(I+, I-)`: the mollifier times the indicator of each sign of `p(x)`.
    pub fn signed(&self, x: &[f64], mode: StatMode) -> Result<(f64, f64)> {
        let m = self.eval(x, mode)?;
        Ok(if sign_of(self.grid.base().eval(x)?) > 0 { (m, 0.0) } else { (0.0, m) })
    }

    fn analysis_from(&self, s: &[Vec<f64>]) -> AnalysisCheckReport {
        let p = self.grid.params();
        let d = p.d as usize;
        let mut checks = Vec::new();
        let horizontals = |i: usize, checks: &mut Vec<AnalysisCheck>| {
            for j in 1..p.big_d {
                checks.push(AnalysisCheck {
                    id: format!("horizontal({i},{j})"),
                    holds: approx_eq(s[i][j], s[i][j + 1], p.delta_anal),
                });
            }
        };
        horizontals(d, &mut checks);
        for i in (0..d).rev() {
            if i + 1 < d {
                horizontals(i + 1, &mut checks);
            }
            checks.push(AnalysisCheck {
                id: format!("diagonal({},{})", i + 1, i),
                holds: s[i + 1][1] <= 100.0 * p.lambda_hat * s[i][2],
            });
        }
        if d > 0 {
            horizontals(0, &mut checks);
        }
        let first_failure = checks.iter().find(|c| !c.holds).map(|c| c.id.clone());
        AnalysisCheckReport { checks, first_failure }
    }

    pub fn analysis_checks(&self, x: &[f64], mode: StatMode) -> Result<AnalysisCheckReport> {
        let s = self.values(x, mode)?;
        Ok(self.analysis_from(&s))
    }

    /// Mollifier, signs and analysis checks from a single grid evaluation.
    pub fn point(&self, x: &[f64], mode: StatMode) -> Result<MollifierPoint> {
        let s = self.values(x, mode)?;
        let m = self.mollifier_from(&s)?;
        let sign = sign_of(self.grid.base().eval(x)?);
        let report = self.analysis_from(&s);
        Ok(MollifierPoint {
            mollifier: m,
            sign,
            i_plus: if sign > 0 { m } else { 0.0 },
            i_minus: if sign < 0 { m } else { 0.0 },
            first_analysis_failure: report.first_failure,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MollificationReport {
    pub points: usize,
    /// Fraction of `x` with mollifier value different from 1.
    pub not_one: f64,
    pub stderr: f64,
    /// Fraction of `x` where some analysis check fails.
    pub analysis_failures: f64,
    /// Count of points per first failing analysis check.
    pub first_failures: BTreeMap<String, usize>,
}

/// Draws `points` standard Gaussian `x` and evaluates the mollifier at each.
pub fn mollification_error(m: &Mollifier, points: usize, seed: u64, mode: StatMode) -> Result<MollificationReport> {
    let n = m.grid().base().n();
    let id = stream_id("mollifier/points");
    let pts = par_map(points, |t| {
        let x = gaussian_vec(&mut stream_rng(seed, id, t as u64), n);
        m.point(&x, mode)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let not_one: Vec<bool> = pts.iter().map(|p| p.mollifier != 1.0).collect();
    let e = Estimate::from_flags(&not_one);
    let mut first_failures = BTreeMap::new();
    for p in &pts {
        if let Some(f) = &p.first_analysis_failure {
            *first_failures.entry(f.clone()).or_insert(0) += 1;
        }
    }
    let failed = pts.iter().filter(|p| p.first_analysis_failure.is_some()).count();
    Ok(MollificationReport {
        points,
        not_one: e.mean,
        stderr: e.stderr,
        analysis_failures: failed as f64 / points.max(1) as f64,
        first_failures,
    })
}
