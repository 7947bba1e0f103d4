//! Hyperconcentration predicates, the local hyperconcentration experiments,
//! random derivative sequences and the Monte Carlo oracle inequalities.
//!
//! Checks whose statements carry an unspecified absolute constant sweep that
//! constant over a small grid and report the smallest passing value.

use serde::Serialize;

use crate::error::{check_dim, invalid, Result};
use crate::gaussops::{directional_derivative, hypervar, is_attenuated, noise_op, zoom, ZoomSpec};
use crate::hermite::{HermitePoly, Part};
use crate::mc::{gaussian_vec, par_map, stream_id, stream_rng, Estimate};
use crate::mollifier::approx_eq;
use crate::statgrid::PolySampler;

/// Gate multiplier on standard errors for every statistical pass/fail decision.
pub const SIGMA_GATE: f64 = 4.0;

pub const SWEEP_C: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperconReport {
    pub q: f64,
    pub eta: f64,
    pub mu: f64,
    pub deviation_norm: f64,
    pub stderr: f64,
    pub holds: bool,
}

/// Monte Carlo estimate of `||g - mu||_q` against `eta |mu|`.
pub fn hypercon_check(g: &HermitePoly, q: f64, eta: f64, trials: usize, seed: u64) -> Result<HyperconReport> {
    if !(q > 2.0) {
        return Err(invalid(format!("q must exceed 2, got {q}")));
    }
    let mu = g.mean();
    let id = stream_id("hyperlab/hypercon");
    let vals = par_map(trials, |t| {
        let x = gaussian_vec(&mut stream_rng(seed, id, t as u64), g.n());
        (g.eval(&x).expect("dims") - mu).abs().powf(q)
    });
    let e = Estimate::from_samples(&vals);
    let norm = e.mean.max(0.0).powf(1.0 / q);
    let stderr = if e.mean > 0.0 { e.stderr * norm / (q * e.mean) } else { 0.0 };
    Ok(HyperconReport {
        q,
        eta,
        mu,
        deviation_norm: norm,
        stderr,
        holds: norm <= eta * mu.abs() + SIGMA_GATE * stderr,
    })
}

/// If `HyperVar_R[g] <= theta mu^2`, `g` is `(1 + R^2, sqrt(theta))`-hyperconcentrated.
pub fn hypercon_exact_route(g: &HermitePoly, r: f64, theta: f64) -> Option<(f64, f64)> {
    let mu = g.mean();
    if hypervar(g, r, 0) <= theta * mu * mu {
        Some((1.0 + r * r, theta.sqrt()))
    } else {
        None
    }
}

/// An empirical frequency compared with a theoretical upper bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(e: Estimate, bound: f64) -> Self {
        BoundCheck { empirical: e.mean, stderr: e.stderr, bound, pass: e.mean <= bound + SIGMA_GATE * e.stderr }
    }
}

fn frequency(g_n: usize, trials: usize, seed: u64, stream: &str, pred: impl Fn(&[f64]) -> bool + Sync) -> Estimate {
    let id = stream_id(stream);
    let flags = par_map(trials, |t| {
        let x = gaussian_vec(&mut stream_rng(seed, id, t as u64), g_n);
        pred(&x)
    });
    Estimate::from_flags(&flags)
}

/// `Pr[|g - mu| > t |mu|] <= (eta / t)^q`.
pub fn hypermarkov_check(g: &HermitePoly, q: f64, eta: f64, t: f64, trials: usize, seed: u64) -> BoundCheck {
    let mu = g.mean();
    let e = frequency(g.n(), trials, seed, "hyperlab/hypermarkov", |x| {
        (g.eval(x).expect("dims") - mu).abs() > t * mu.abs()
    });
    BoundCheck::new(e, (eta / t).powf(q))
}

/// `||U_{1/sqrt 3} g||_4 <= ||g||_2`.
pub fn hypercontractivity_check(g: &HermitePoly, trials: usize, seed: u64) -> Result<BoundCheck> {
    let u = noise_op(g, 1.0 / 3f64.sqrt())?;
    let id = stream_id("hyperlab/hypercontractivity");
    let vals = par_map(trials, |t| {
        let x = gaussian_vec(&mut stream_rng(seed, id, t as u64), g.n());
        u.eval(&x).expect("dims").powi(4)
    });
    let e = Estimate::from_samples(&vals);
    let norm4 = e.mean.powf(0.25);
    let se = if e.mean > 0.0 { e.stderr * norm4 / (4.0 * e.mean) } else { 0.0 };
    Ok(BoundCheck::new(Estimate { mean: norm4, stderr: se }, g.sq2norm().sqrt()))
}

/// `||g||_2 <= e^k ||g||_1`, tested as `||g||_2 / e^k <= ||g||_1 + 4 se`.
pub fn two_vs_one_norm_check(g: &HermitePoly, trials: usize, seed: u64) -> BoundCheck {
    let id = stream_id("hyperlab/two-vs-one");
    let vals = par_map(trials, |t| {
        let x = gaussian_vec(&mut stream_rng(seed, id, t as u64), g.n());
        g.eval(&x).expect("dims").abs()
    });
    let e = Estimate::from_samples(&vals);
    let k = g.degree() as i32;
    let lhs = g.sq2norm().sqrt() / std::f64::consts::E.powi(k);
    BoundCheck { empirical: lhs, stderr: e.stderr, bound: e.mean, pass: lhs <= e.mean + SIGMA_GATE * e.stderr }
}

/// `Pr[|g| >= t ||g||_2] <= exp(-(k / 2e) t^{2/k})` for `t >= sqrt(2e)^k`.
pub fn tail_bound_check(g: &HermitePoly, t: f64, trials: usize, seed: u64) -> Result<BoundCheck> {
    let k = g.degree().max(1) as f64;
    let tmin = (2.0 * std::f64::consts::E).sqrt().powf(k);
    if t < tmin {
        return Err(invalid(format!("tail bound needs t >= {tmin}, got {t}")));
    }
    let norm = g.sq2norm().sqrt();
    let e = frequency(g.n(), trials, seed, "hyperlab/tail", |x| g.eval(x).expect("dims").abs() >= t * norm);
    Ok(BoundCheck::new(e, (-(k / (2.0 * std::f64::consts::E)) * t.powf(2.0 / k)).exp()))
}

/// For `(R, theta)`-attenuated `g`: `Pr[g !~_gamma mu] <= (2 sqrt(theta) / gamma)^{R^2/2 + 1}`.
pub fn atten_hyperconcy_check(
    g: &HermitePoly,
    r: f64,
    theta: f64,
    gamma: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundCheck> {
    if !(r >= 2f64.sqrt() && theta <= 1.0 && gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("need R >= sqrt 2, theta <= 1, 0 < gamma <= 1"));
    }
    if !is_attenuated(g, 0, r, theta).attenuated {
        return Err(invalid("polynomial is not (R, theta)-attenuated"));
    }
    let mu = g.mean();
    let e = frequency(g.n(), trials, seed, "hyperlab/atten-hyperconcy", |x| {
        !approx_eq(g.eval(x).expect("dims"), mu, gamma)
    });
    Ok(BoundCheck::new(e, (2.0 * theta.sqrt() / gamma).powf(0.5 * r * r + 1.0)))
}

/// An `(R, theta)`-attenuated `g` (`R >= sqrt 2`, `theta <= 1`) passes the
/// Monte Carlo `(1 + R^2/2, sqrt theta)` hyperconcentration check.
pub fn attenuated_hypercon_consistency(
    g: &HermitePoly,
    r: f64,
    theta: f64,
    trials: usize,
    seed: u64,
) -> Result<Option<HyperconReport>> {
    if !(r >= 2f64.sqrt() && theta <= 1.0) || !is_attenuated(g, 0, r, theta).attenuated {
        return Ok(None);
    }
    hypercon_check(g, 1.0 + 0.5 * r * r, theta.sqrt(), trials, seed).map(Some)
}

/// Result of sweeping an unspecified constant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    /// `(C, failure fraction, stderr)` for every swept constant.
    pub rows: Vec<(f64, f64, f64)>,
    pub target: f64,
    pub smallest_passing: Option<f64>,
    pub pass: bool,
}

impl SweepReport {
    fn new(rows: Vec<(f64, f64, f64)>, target: f64) -> Self {
        let smallest_passing = rows
            .iter()
            .find(|(_, f, se)| *f <= target + SIGMA_GATE * se)
            .map(|r| r.0);
        SweepReport { rows, target, smallest_passing, pass: smallest_passing.is_some() }
    }
}

/// `Pr[|g| < (delta / (C d))^d ||g||_2] <= delta`, sweeping `C`.
pub fn carbery_wright_check(g: &HermitePoly, delta: f64, trials: usize, seed: u64) -> Result<SweepReport> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(invalid("delta must lie in [0, 1]"));
    }
    let d = g.degree().max(1) as f64;
    let norm = g.sq2norm().sqrt();
    let id = stream_id("hyperlab/carbery-wright");
    let vals: Vec<f64> = par_map(trials, |t| {
        let x = gaussian_vec(&mut stream_rng(seed, id, t as u64), g.n());
        g.eval(&x).expect("dims").abs()
    });
    let rows = SWEEP_C
        .iter()
        .map(|&c| {
            let thr = (delta / (c * d)).powf(d) * norm;
            let flags: Vec<bool> = vals.iter().map(|&v| v < thr).collect();
            let e = Estimate::from_flags(&flags);
            (c, e.mean, e.stderr)
        })
        .collect();
    Ok(SweepReport::new(rows, delta))
}

/// `Pr_{x,y}[g_{lambda|x}(y) !~_nu g(x)] <= beta` with `nu = C d^2 sqrt(lambda) / beta`.
pub fn kane_lemma9_check(g: &HermitePoly, lambda: f64, beta: f64, trials: usize, seed: u64) -> Result<SweepReport> {
    if !(0.0..=1.0).contains(&lambda) || !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("need lambda in [0, 1] and beta in (0, 1)"));
    }
    let d = g.degree().max(1) as f64;
    let (a, b) = ((1.0 - lambda).sqrt(), lambda.sqrt());
    let id = stream_id("hyperlab/kane-lemma9");
    let ratios: Vec<(f64, f64)> = par_map(trials, |t| {
        let mut rng = stream_rng(seed, id, t as u64);
        let x = gaussian_vec(&mut rng, g.n());
        let y = gaussian_vec(&mut rng, g.n());
        let z: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
        (g.eval(&z).expect("dims"), g.eval(&x).expect("dims"))
    });
    let rows = SWEEP_C
        .iter()
        .filter_map(|&c| {
            let nu = c * d * d * lambda.sqrt() / beta;
            if nu > 1.0 {
                return None;
            }
            let flags: Vec<bool> = ratios.iter().map(|&(u, v)| !approx_eq(u, v, nu)).collect();
            let e = Estimate::from_flags(&flags);
            Some((c, e.mean, e.stderr))
        })
        .collect();
    Ok(SweepReport::new(rows, beta))
}

/// `lambda = c eps beta / (R d^{9/2})`.
pub fn main_theorem_lambda(c: f64, eps: f64, beta: f64, r: f64, d: u32) -> f64 {
    c * eps * beta / (r * (d as f64).powf(4.5))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalHyperconcReport {
    pub failure_fraction: f64,
    pub stderr: f64,
    pub beta: f64,
    pub exact_inner: bool,
    pub pass: bool,
}

/// Fraction of `x` where `E HyperVar_R[zoom] > eps^2 E ||zoom||^2`.
///
/// Dirac samplers are evaluated exactly per `x`; otherwise the inner
/// expectation over the sampler uses `inner_trials` shared draws.
#[allow(clippy::too_many_arguments)]
pub fn local_hyperconc_experiment(
    sampler: &PolySampler,
    r: f64,
    eps: f64,
    beta: f64,
    lambda: f64,
    x_trials: usize,
    inner_trials: usize,
    seed: u64,
) -> Result<LocalHyperconcReport> {
    let n = sampler.base.n();
    let xid = stream_id("hyperlab/local-x");
    let inner: Vec<HermitePoly> = if sampler.is_dirac() {
        vec![sampler.base.clone()]
    } else {
        let id = stream_id("hyperlab/local-inner");
        par_map(inner_trials, |t| sampler.sample(&mut stream_rng(seed, id, t as u64)))
    };
    let flags = par_map(x_trials, |t| {
        let x = gaussian_vec(&mut stream_rng(seed, xid, t as u64), n);
        let spec = ZoomSpec::new(lambda, x);
        let (mut hv, mut sq) = (0.0, 0.0);
        for g in &inner {
            let z = zoom(g, &spec).expect("dims");
            hv += hypervar(&z, r, 0);
            sq += z.sq2norm();
        }
        hv > eps * eps * sq
    });
    let e = Estimate::from_flags(&flags);
    Ok(LocalHyperconcReport {
        failure_fraction: e.mean,
        stderr: e.stderr,
        beta,
        exact_inner: sampler.is_dirac(),
        pass: e.mean <= beta + SIGMA_GATE * e.stderr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivSequence {
    pub values: Vec<f64>,
}

/// `D^k = E[(D_{y_k} ... D_{y_1} g(x))^2]` for `k = 0..=d`.
pub fn derivative_sequence(
    sampler: &PolySampler,
    x: &[f64],
    ys: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> Result<DerivSequence> {
    let n = sampler.base.n();
    check_dim(n, x.len())?;
    for y in ys {
        check_dim(n, y.len())?;
    }
    let draws: Vec<HermitePoly> = if sampler.is_dirac() {
        vec![sampler.base.clone()]
    } else {
        let id = stream_id("hyperlab/deriv-seq");
        par_map(trials, |t| sampler.sample(&mut stream_rng(seed, id, t as u64)))
    };
    let mut sums = vec![0.0; ys.len() + 1];
    for g in &draws {
        let mut f = g.clone();
        for (k, slot) in sums.iter_mut().enumerate() {
            if k > 0 {
                f = directional_derivative(&f, &ys[k - 1])?;
            }
            let v = f.eval(x)?;
            *slot += v * v;
        }
    }
    Ok(DerivSequence { values: sums.into_iter().map(|s| s / draws.len() as f64).collect() })
}

/// Fraction of random `(x, ys)` with `D^{k+1} > C d^6 / eps^2 D^k` for some `k`, sweeping `C`.
pub fn derivative_ratio_experiment(g: &HermitePoly, eps: f64, trials: usize, seed: u64) -> Result<SweepReport> {
    let d = g.degree().max(1) as usize;
    let n = g.n();
    let sampler = PolySampler::dirac(g.clone());
    let id = stream_id("hyperlab/deriv-ratio");
    let seqs: Vec<Vec<f64>> = par_map(trials, |t| {
        let mut rng = stream_rng(seed, id, t as u64);
        let x = gaussian_vec(&mut rng, n);
        let ys: Vec<Vec<f64>> = (0..d).map(|_| gaussian_vec(&mut rng, n)).collect();
        derivative_sequence(&sampler, &x, &ys, 1, 0).expect("dims").values
    });
    let scale = (d as f64).powi(6) / (eps * eps);
    let sweep = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let rows = sweep
        .iter()
        .map(|&c| {
            let flags: Vec<bool> =
                seqs.iter().map(|s| s.windows(2).any(|w| w[1] > c * scale * w[0])).collect();
            let e = Estimate::from_flags(&flags);
            (c, e.mean, e.stderr)
        })
        .collect();
    Ok(SweepReport::new(rows, eps))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RetentionAttritionReport {
    pub precondition_hypervar: f64,
    pub precondition_norm: f64,
    pub precondition_holds: bool,
    pub retention: SweepReport,
    pub attrition: SweepReport,
    /// The constant `c` implied by `lambda = c^4 beta'^5 / (S^2 m^3 d)` with `m = k + 1`.
    pub implied_c: f64,
}

/// One-stage retention and attrition checks for a sampler that is
/// `(k, S, 1)`-attenuated on average.
#[allow(clippy::too_many_arguments)]
pub fn retention_attrition_experiment(
    sampler: &PolySampler,
    k: u32,
    s: f64,
    lambda: f64,
    beta_prime: f64,
    trials: usize,
    inner_trials: usize,
    seed: u64,
) -> Result<RetentionAttritionReport> {
    if k == 0 || !(beta_prime > 0.0 && beta_prime < 1.0) {
        return Err(invalid("need k >= 1 and beta' in (0, 1)"));
    }
    let n = sampler.base.n();
    let draws: Vec<HermitePoly> = if sampler.is_dirac() {
        vec![sampler.base.clone()]
    } else {
        let id = stream_id("hyperlab/retention-inner");
        par_map(inner_trials, |t| sampler.sample(&mut stream_rng(seed, id, t as u64)))
    };
    let cnt = draws.len() as f64;
    let pre_hv = draws.iter().map(|g| hypervar(&g.part(Part::Gt(k)), s, 0)).sum::<f64>() / cnt;
    let norm = draws.iter().map(|g| g.sq2norm()).sum::<f64>() / cnt;
    let precondition_holds = pre_hv <= norm;
    if !precondition_holds {
        return Err(invalid(format!("sampler is not (k, S, 1)-attenuated on average: {pre_hv} > {norm}")));
    }
    let d = draws.iter().map(|g| g.degree()).max().unwrap_or(0).max(1) as f64;
    let m = k + 1;
    let implied_c = (lambda * s * s * (m as f64).powi(3) * d / beta_prime.powi(5)).powf(0.25);
    let xid = stream_id("hyperlab/retention-x");
    let per_x: Vec<(f64, f64)> = par_map(trials, |t| {
        let x = gaussian_vec(&mut stream_rng(seed, xid, t as u64), n);
        let spec = ZoomSpec::new(lambda, x);
        let (mut sq, mut hv) = (0.0, 0.0);
        for g in &draws {
            let z = zoom(g, &spec).expect("dims");
            sq += z.sq2norm();
            hv += hypervar(&z.part(Part::Ge(m)), s, 0);
        }
        (sq / cnt, hv / cnt)
    });
    let kf = k as f64;
    let retention_rows = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&c| {
            let thr = (beta_prime / (c * kf)).powf(2.0 * kf) * norm;
            let flags: Vec<bool> = per_x.iter().map(|&(sq, _)| sq < thr).collect();
            let e = Estimate::from_flags(&flags);
            (c, e.mean, e.stderr)
        })
        .collect();
    let mf = m as f64;
    let attrition_rows = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&c| {
            let thr = (c * implied_c * beta_prime / mf).powf(4.0 * mf) * norm;
            let flags: Vec<bool> = per_x.iter().map(|&(_, hv)| hv > thr).collect();
            let e = Estimate::from_flags(&flags);
            (c, e.mean, e.stderr)
        })
        .collect();
    Ok(RetentionAttritionReport {
        precondition_hypervar: pre_hv,
        precondition_norm: norm,
        precondition_holds,
        retention: SweepReport::new(retention_rows, beta_prime),
        attrition: SweepReport::new(attrition_rows, beta_prime),
        implied_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::MultiIndex;

    fn mi(v: &[u16]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn constant_is_hyperconcentrated() {
        let g = HermitePoly::constant(2, 3.0);
        let rep = hypercon_check(&g, 3.0, 0.0, 100, 1).unwrap();
        assert_eq!(rep.deviation_norm, 0.0);
        assert!(rep.holds);
        assert!(hypercon_check(&g, 2.0, 0.1, 10, 1).is_err());
    }

    #[test]
    fn derivative_sequence_h2() {
        let g = HermitePoly::basis(mi(&[2]));
        let s = derivative_sequence(&PolySampler::dirac(g), &[1.5], &[vec![1.0], vec![1.0], vec![1.0]], 1, 0).unwrap();
        assert!((s.values[1] - 2.0 * 1.5 * 1.5).abs() < 1e-12);
        assert!((s.values[2] - 2.0).abs() < 1e-12);
        assert_eq!(s.values[3], 0.0);
    }

    #[test]
    fn local_hyperconc_lambda_zero() {
        let g = HermitePoly::from_terms(2, [(mi(&[1, 1]), 1.0), (mi(&[0, 2]), 0.5)]).unwrap();
        let rep = local_hyperconc_experiment(&PolySampler::dirac(g), 2.0, 0.3, 0.1, 0.0, 50, 1, 3).unwrap();
        assert_eq!(rep.failure_fraction, 0.0);
    }

    #[test]
    fn main_theorem_lambda_value() {
        let l = main_theorem_lambda(0.01, 0.3, 0.1, 2.0, 3);
        assert!((l - 0.01 * 0.3 * 0.1 / (2.0 * 3f64.powf(4.5))).abs() < 1e-20);
    }
}
