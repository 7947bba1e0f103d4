//! Deterministic checks of the interpolation fraction, Lagrange weights,
//! noise-insensitivity extension, stability closed forms and the jigsaw
//! inequality.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::Serialize;

use crate::error::{check_dim, invalid, Result};
use crate::gaussops::{noise_op, stability, zoom, ZoomSpec};
use crate::hermite::HermitePoly;
use crate::hyperlab::SIGMA_GATE;
use crate::mc::{gaussian_vec, par_map, stream_id, stream_rng, Estimate};
use crate::mollifier::approx_eq;

/// `prod_{i in 1..=2d+1, i != j} i^2 / (i^2 - j^2)` in lowest terms.
pub fn clean_fraction(j: u32, d: u32) -> Result<BigRational> {
    if j == 0 || j > 2 * d + 1 {
        return Err(invalid(format!("j must lie in 1..={}, got {j}", 2 * d + 1)));
    }
    let j2 = BigInt::from(j) * BigInt::from(j);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in (1..=2 * d + 1).filter(|&i| i != j) {
        let i2 = BigInt::from(i) * BigInt::from(i);
        den *= &i2 - &j2;
        num *= i2;
    }
    Ok(BigRational::new(num, den))
}

/// Largest `|clean_fraction(j, d)|` over `j`, exactly.
pub fn clean_fraction_max(d: u32) -> BigRational {
    (1..=2 * d + 1)
        .map(|j| clean_fraction(j, d).expect("j in range").abs())
        .max()
        .expect("at least one j")
}

/// Whether `|clean_fraction(j, d)| <= 2` for every `d <= max_d` and every `j`.
pub fn clean_fraction_bound_holds(max_d: u32) -> bool {
    let two = BigRational::from_integer(BigInt::from(2));
    (0..=max_d).all(|d| clean_fraction_max(d) <= two)
}

/// `(2/q)(1 - (1-q)^{t/2})`, the primed version of `t`.
pub fn primed(t: f64, q: f64) -> f64 {
    -(2.0 / q) * ((t / 2.0) * (-q).ln_1p()).exp_m1()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangeReport {
    pub d: u32,
    pub q: f64,
    pub q_in_range: bool,
    pub nodes: Vec<f64>,
    /// `l_j(0)` for `j = 1..=2d+1`.
    pub l0: Vec<f64>,
    pub max_abs: f64,
    pub sum: f64,
    pub bound_holds: bool,
}

/// Lagrange basis values at 0 for the nodes `(i^2)'`, `i = 1..=2d+1`.
pub fn lagrange_l0(d: u32, q: f64) -> Result<LagrangeReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("q must lie in (0, 1), got {q}")));
    }
    let q_in_range = d == 0 || q <= 1.0 / (d as f64).powi(10);
    let nodes: Vec<f64> = (1..=2 * d + 1).map(|i| primed((i * i) as f64, q)).collect();
    let l0: Vec<f64> = (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != j)
                .map(|(_, &xm)| -xm / (nodes[j] - xm))
                .product()
        })
        .collect();
    let max_abs = l0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let bound = 2.0 * (1.0 + 1.0 / d.max(1) as f64);
    Ok(LagrangeReport {
        d,
        q,
        q_in_range,
        sum: l0.iter().sum(),
        bound_holds: max_abs <= bound,
        max_abs,
        nodes,
        l0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MagicLemmaReport {
    pub d: u32,
    pub big_d: usize,
    pub q: f64,
    pub gamma: f64,
    pub gamma_in_range: bool,
    pub q_in_range: bool,
    /// `r_j(x)` for `j = 0..=D`.
    pub r: Vec<f64>,
    pub hypothesis_holds: bool,
    /// `r_0(x) / r_1(x)`, when defined.
    pub ratio: Option<f64>,
    /// `Some(r_0 ~_1 r_1)` when the hypothesis holds.
    pub conclusion: Option<bool>,
}

/// Checks `r_j(x) ~_gamma r_{j+1}(x)` for `1 <= j < D` with `r_j = U_{(1-q)^{j/2}} r_0`,
/// then, if it holds, the conclusion `r_0(x) ~_1 r_1(x)`.
pub fn magic_lemma_experiment(r0: &HermitePoly, q: f64, x: &[f64], gamma: f64) -> Result<MagicLemmaReport> {
    check_dim(r0.n(), x.len())?;
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("q must lie in (0, 1), got {q}")));
    }
    let d = r0.degree().div_ceil(2);
    let big_d = ((2 * d + 1) * (2 * d + 1)) as usize;
    let levels = r0.level_values(x)?;
    let a = 1.0 - q;
    let r: Vec<f64> = (0..=big_d)
        .map(|j| {
            let rho = a.powf(j as f64 / 2.0);
            levels.iter().rev().fold(0.0, |acc, &v| acc * rho + v)
        })
        .collect();
    let hypothesis_holds = (1..big_d).all(|j| approx_eq(r[j], r[j + 1], gamma));
    let ratio = if r[1] != 0.0 { Some(r[0] / r[1]) } else { None };
    let conclusion = hypothesis_holds.then(|| approx_eq(r[0], r[1], 1.0));
    Ok(MagicLemmaReport {
        d,
        big_d,
        q,
        gamma,
        gamma_in_range: gamma <= 1.0 / (12.0 * big_d as f64 * (2 * d + 1) as f64),
        q_in_range: d == 0 || q <= 1.0 / (d as f64).powi(10),
        r,
        hypothesis_holds,
        ratio,
        conclusion,
    })
}

/// Both sides of `(R^2 l r - r + 1)^a - (1-r)^a <= (R^2(1-l)(1-r) + R^2 l)^a - (R^2(1-l)(1-r))^a`.
pub fn jigsaw_sides(a: u32, r: f64, lambda: f64, rho: f64) -> (f64, f64) {
    let r2 = r * r;
    let e = a as i32;
    let lhs = (r2 * lambda * rho - rho + 1.0).powi(e) - (1.0 - rho).powi(e);
    let base = r2 * (1.0 - lambda) * (1.0 - rho);
    let rhs = (base + r2 * lambda).powi(e) - base.powi(e);
    (lhs, rhs)
}

pub fn jigsaw_check(a: u32, r: f64, lambda: f64, rho: f64) -> bool {
    let (lhs, rhs) = jigsaw_sides(a, r, lambda, rho);
    lhs <= rhs + 1e-12 * rhs.abs().max(1.0)
}

/// Counts grid points where the jigsaw inequality fails, over `a <= 10`,
/// `R in {1, 2, 4}` and `lambda, rho in {0.1, ..., 0.9}`. With `flip` the
/// inequality is reversed, which must fail somewhere.
pub fn jigsaw_grid_failures(flip: bool) -> usize {
    let mut fails = 0;
    for a in 0..=10 {
        for r in [1.0, 2.0, 4.0] {
            for li in 1..=9 {
                for ri in 1..=9 {
                    let (l, rho) = (li as f64 / 10.0, ri as f64 / 10.0);
                    let ok = if flip {
                        let (lhs, rhs) = jigsaw_sides(a, r, l, rho);
                        rhs <= lhs + 1e-12 * lhs.abs().max(1.0)
                    } else {
                        jigsaw_check(a, r, l, rho)
                    };
                    fails += usize::from(!ok);
                }
            }
        }
    }
    fails
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityForms {
    pub sigma_lhs: f64,
    pub tau_lhs: f64,
    pub sigma_rhs: f64,
    pub tau_rhs: f64,
    pub p_lhs: f64,
    pub p_rhs: f64,
    /// `p_lhs <= p_rhs`, claimed only for `R' >= 1`.
    pub holds: Option<bool>,
}

/// `h(u) = g(sqrt(rho) R' sqrt(1-lambda) x + sqrt(1 - rho R'^2 (1-lambda)) u)`.
pub fn stability_h(g: &HermitePoly, x: &[f64], r_prime: f64, lambda: f64, rho: f64) -> Result<HermitePoly> {
    check_dim(g.n(), x.len())?;
    let mu = 1.0 - rho * r_prime * r_prime * (1.0 - lambda);
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(invalid(format!("1 - rho R'^2 (1 - lambda) must lie in (0, 1], got {mu}")));
    }
    // the centre works out to x itself
    zoom(g, &ZoomSpec::new(mu, x.to_vec()))
}

/// The `sigma`/`tau` closed forms for both sides at radius `R'`.
pub fn stability_closed_forms(h: &HermitePoly, r_prime: f64, lambda: f64, rho: f64) -> Result<StabilityForms> {
    if !(r_prime > 0.0) || !(0.0..=1.0).contains(&lambda) || !(rho > 0.0 && rho < 1.0) {
        return Err(invalid("need R' > 0, lambda in [0, 1], rho in (0, 1)"));
    }
    let r2 = r_prime * r_prime;
    let den = 1.0 - rho * r2 * (1.0 - lambda);
    if !(den > 0.0) {
        return Err(invalid("1 - rho R'^2 (1 - lambda) must be positive"));
    }
    let sigma_lhs = (1.0 - rho + r2 * lambda * rho) / den;
    let tau_lhs = (1.0 - rho) / den;
    let sigma_rhs = ((1.0 - lambda) * (1.0 - rho) * r2 + r2 * lambda) / den;
    let tau_rhs = (1.0 - lambda) * (1.0 - rho) * r2 / den;
    let p_lhs = stability(h, sigma_lhs) - stability(h, tau_lhs);
    let p_rhs = stability(h, sigma_rhs) - stability(h, tau_rhs);
    Ok(StabilityForms {
        sigma_lhs,
        tau_lhs,
        sigma_rhs,
        tau_rhs,
        holds: (r_prime >= 1.0).then(|| p_lhs <= p_rhs + 1e-12 * p_rhs.abs().max(1.0)),
        p_lhs,
        p_rhs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityMc {
    pub forms: StabilityForms,
    pub mc_lhs: Estimate,
    pub mc_rhs: Estimate,
    pub pass: bool,
}

/// Simulates the defining expectations of both sides for `R' <= 1` and
/// compares them with the closed forms.
pub fn stability_mc_check(
    g: &HermitePoly,
    x: &[f64],
    r_prime: f64,
    lambda: f64,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<StabilityMc> {
    if !(r_prime > 0.0 && r_prime <= 1.0) {
        return Err(invalid("the simulation needs 0 < R' <= 1"));
    }
    let h = stability_h(g, x, r_prime, lambda, rho)?;
    let forms = stability_closed_forms(&h, r_prime, lambda, rho)?;
    let n = g.n();
    let r2 = r_prime * r_prime;
    // LHS: E_v g(c + s v) with s^2 = rho (1 - R'^2) equals (U_t g)(c / t), t = sqrt(1 - s^2).
    let t = (1.0 - rho * (1.0 - r2)).sqrt();
    let u_lhs = noise_op(g, t)?;
    let u_rhs = noise_op(g, r_prime)?;
    let (sl, sr) = ((1.0 - lambda).sqrt(), lambda.sqrt());
    let (sz, sx) = ((1.0 - rho).sqrt(), rho.sqrt());
    let id = stream_id("verify/stability-mc");
    let pairs: Vec<(f64, f64)> = par_map(trials, |i| {
        let mut rng = stream_rng(seed, id, i as u64);
        let z = gaussian_vec(&mut rng, n);
        let y = gaussian_vec(&mut rng, n);
        let y2 = gaussian_vec(&mut rng, n);
        let lhs_at = |yy: &[f64]| {
            let c: Vec<f64> = (0..n)
                .map(|k| sz * z[k] + sx * r_prime * (sl * x[k] + sr * yy[k]))
                .collect();
            let w: Vec<f64> = c.iter().map(|v| v / t).collect();
            u_lhs.eval(&w).expect("dims")
        };
        let rhs_at = |yy: &[f64]| {
            let w: Vec<f64> = (0..n).map(|k| sl * (sz * z[k] + sx * x[k]) + sr * yy[k]).collect();
            u_rhs.eval(&w).expect("dims")
        };
        let dl = lhs_at(&y) - lhs_at(&y2);
        let dr = rhs_at(&y) - rhs_at(&y2);
        (0.5 * dl * dl, 0.5 * dr * dr)
    });
    let (l, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let mc_lhs = Estimate::from_samples(&l);
    let mc_rhs = Estimate::from_samples(&r);
    let tol = |e: &Estimate| SIGMA_GATE * e.stderr + 1e-9 * e.mean.abs().max(1e-12);
    let pass = (mc_lhs.mean - forms.p_lhs).abs() <= tol(&mc_lhs) && (mc_rhs.mean - forms.p_rhs).abs() <= tol(&mc_rhs);
    Ok(StabilityMc { forms, mc_lhs, mc_rhs, pass })
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::MultiIndex;

    #[test]
    fn clean_fraction_small_case() {
        let f = clean_fraction(1, 1).unwrap();
        assert_eq!(f, BigRational::new(BigInt::from(3), BigInt::from(2)));
        assert!(clean_fraction(0, 1).is_err());
        assert!(clean_fraction(4, 1).is_err());
    }

    #[test]
    fn clean_fraction_sign_alternates() {
        for j in 1..=7 {
            let f = clean_fraction(j, 3).unwrap();
            assert_eq!(f.is_negative(), (j - 1) % 2 == 1, "j = {j}");
        }
    }

    #[test]
    fn lagrange_limit_matches_fraction() {
        let rep = lagrange_l0(3, 1e-12).unwrap();
        for (j, v) in rep.l0.iter().enumerate() {
            let exact = rational_to_f64(&clean_fraction(j as u32 + 1, 3).unwrap());
            assert!((v - exact).abs() < 1e-6, "j = {j}: {v} vs {exact}");
        }
        assert!((rep.sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn jigsaw_edges() {
        assert_eq!(jigsaw_sides(0, 2.0, 0.3, 0.4), (0.0, 0.0));
        assert_eq!(jigsaw_grid_failures(false), 0);
        assert!(jigsaw_grid_failures(true) > 0);
    }

    #[test]
    fn stability_constant_h() {
        let h = HermitePoly::constant(2, 3.0);
        let f = stability_closed_forms(&h, 0.7, 0.2, 0.5).unwrap();
        assert_eq!((f.p_lhs, f.p_rhs), (0.0, 0.0));
    }

    #[test]
    fn magic_constant() {
        let r0 = HermitePoly::constant(1, 2.0);
        let rep = magic_lemma_experiment(&r0, 1e-6, &[0.3], 1e-3).unwrap();
        assert!(rep.hypothesis_holds);
        assert_eq!(rep.conclusion, Some(true));
        let sq = HermitePoly::basis(MultiIndex::new(vec![1])).square();
        assert_eq!(magic_lemma_experiment(&sq, 0.5, &[2.0], 1e-4).unwrap().conclusion, None);
    }
}
