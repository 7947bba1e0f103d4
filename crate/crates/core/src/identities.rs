//! Exact algebraic identities of the Hermite engine, measured as errors.

use serde::Serialize;

use crate::error::Result;
use crate::gaussops::{amplified_derivative, binomial_pmf, hermite_addition, noise_op, zoom_coefficients};
use crate::hermite::{hermite_values, HermitePoly, MultiIndex};
use crate::mc::{gaussian_vec, stream_id, stream_rng};
use crate::mollifier::Mollifier;
use crate::prg::{choose_params, PrgOverrides};
use crate::statgrid::{GridOverrides, GridParams, StatMode};
use crate::suite::random_poly;

fn rel_err(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// `prod_i Pr[Bin(gamma_i, lambda) = beta_i]`.
pub fn multi_binomial(gamma: &MultiIndex, beta: &MultiIndex, lambda: f64) -> f64 {
    gamma
        .exps()
        .iter()
        .zip(beta.exps())
        .map(|(&g, &b)| if b > g { 0.0 } else { binomial_pmf(g as u32, lambda)[b as usize] })
        .product()
}

/// Largest relative error, over `beta`, between `E_x[zoom coefficient(beta)^2]`
/// and `sum_{gamma >= beta} Pr[Bin(gamma, lambda) = beta] g^(gamma)^2`.
pub fn zoom_weight_error(g: &HermitePoly, lambda: f64) -> Result<f64> {
    let coeffs = zoom_coefficients(g, lambda)?;
    let mut worst = 0.0f64;
    for (beta, poly) in &coeffs {
        let want: f64 = g
            .terms()
            .filter(|(gamma, _)| gamma.dominates(beta))
            .map(|(gamma, c)| multi_binomial(gamma, beta, lambda) * c * c)
            .sum();
        worst = worst.max(rel_err(poly.sq2norm(), want));
    }
    Ok(worst)
}

/// Largest relative error, over levels `m`, between `E_x[W^{=m}[g_{lambda|x}]]`
/// and `sum_M Pr[Bin(M, lambda) = m] W^{=M}[g]`.
pub fn attenuate0_error(g: &HermitePoly, lambda: f64) -> Result<f64> {
    let coeffs = zoom_coefficients(g, lambda)?;
    let d = g.degree();
    let mut worst = 0.0f64;
    for m in 0..=d {
        let lhs: f64 = coeffs.iter().filter(|(b, _)| b.degree() == m).map(|(_, p)| p.sq2norm()).sum();
        let rhs: f64 = (m..=d).map(|big| binomial_pmf(big, lambda)[m as usize] * g.weight_at_level(big)).sum();
        worst = worst.max(rel_err(lhs, rhs));
    }
    Ok(worst)
}

/// `max |U_a U_b g - U_{ab} g|`, coefficientwise and relative to the largest coefficient.
pub fn semigroup_error(g: &HermitePoly, a: f64, b: f64) -> Result<f64> {
    let two = noise_op(&noise_op(g, a)?, b)?;
    let one = noise_op(g, a * b)?;
    let scale = one.terms().fold(0.0f64, |m, (_, c)| m.max(c.abs())).max(f64::MIN_POSITIVE);
    Ok(two.max_coeff_diff(&one) / scale)
}

/// `max |U_{1/rho} U_rho g - g|` relative to the largest coefficient.
pub fn inverse_error(g: &HermitePoly, rho: f64) -> Result<f64> {
    let back = noise_op(&noise_op(g, rho)?, 1.0 / rho)?;
    let scale = g.terms().fold(0.0f64, |m, (_, c)| m.max(c.abs())).max(f64::MIN_POSITIVE);
    Ok(back.max_coeff_diff(g) / scale)
}

/// `|h_m(sqrt(1-lambda) x + sqrt(lambda) y) - sum_j sqrt(Pr[Bin(m,lambda)=j]) h_{m-j}(x) h_j(y)|`.
pub fn hermite_addition_error(m: usize, lambda: f64, x: f64, y: f64) -> f64 {
    let direct = hermite_values((1.0 - lambda).sqrt() * x + lambda.sqrt() * y, m)[m];
    (direct - hermite_addition(m, lambda, x, y)).abs()
}

/// Whether the amplified derivative has degree at most `deg g - 1`.
pub fn derivative_degree_drops(g: &HermitePoly, y: &[f64], y2: &[f64], r: f64, lambda: f64) -> Result<bool> {
    let dg = amplified_derivative(g, y, y2, r, lambda)?;
    Ok(dg.is_zero() || dg.degree() < g.degree())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityBattery {
    pub polys: usize,
    pub zoom_weight_max_rel: f64,
    pub attenuate0_max_rel: f64,
    pub semigroup_max: f64,
    pub inverse_max: f64,
    pub addition_max_abs: f64,
    pub degree_drop_all: bool,
    pub scale_invariance_points: usize,
    pub scale_invariance_exact: bool,
}

impl IdentityBattery {
    pub fn pass(&self) -> bool {
        self.zoom_weight_max_rel <= 1e-9
            && self.attenuate0_max_rel <= 1e-9
            && self.semigroup_max <= 1e-12
            && self.inverse_max <= 1e-12
            && self.addition_max_abs <= 1e-10
            && self.degree_drop_all
            && self.scale_invariance_exact
    }
}

/// Random polynomials with `n <= 4`, `d <= 4`, deterministic in `seed`.
pub fn identity_polys(seed: u64, count: usize) -> Vec<HermitePoly> {
    let id = stream_id("identities/polys");
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, id, i as u64);
            let n = 1 + i % 4;
            let d = 1 + (i / 4) as u32 % 4;
            random_poly(n, d, &mut rng)
        })
        .collect()
}

/// Mollifier values of `p` and `c p` at `points` random `x`, for `c` in `{4, 1/2}`.
pub fn mollifier_scale_invariance(p: &HermitePoly, d: u32, seed: u64, points: usize) -> Result<bool> {
    let prg = choose_params(p.n(), d, 0.2, &PrgOverrides::default())?;
    let params = GridParams::from_prg(&prg, &GridOverrides::default())?;
    let base = Mollifier::new(p.clone(), params.clone());
    let scaled: Vec<Mollifier> = [4.0, 0.5].iter().map(|&c| Mollifier::new(p.scale(c), params.clone())).collect();
    let id = stream_id("identities/scale-invariance");
    for t in 0..points {
        let x = gaussian_vec(&mut stream_rng(seed, id, t as u64), p.n());
        let want = base.eval(&x, StatMode::Exact)?;
        for m in &scaled {
            if m.eval(&x, StatMode::Exact)? != want {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The full exact-identity battery on `count` random polynomials.
pub fn identity_battery(seed: u64, count: usize) -> Result<IdentityBattery> {
    let polys = identity_polys(seed, count);
    let lambdas = [0.01, 0.2, 0.5, 0.9];
    let mut out = IdentityBattery {
        polys: polys.len(),
        zoom_weight_max_rel: 0.0,
        attenuate0_max_rel: 0.0,
        semigroup_max: 0.0,
        inverse_max: 0.0,
        addition_max_abs: 0.0,
        degree_drop_all: true,
        scale_invariance_points: 10,
        scale_invariance_exact: true,
    };
    let id = stream_id("identities/points");
    for (k, g) in polys.iter().enumerate() {
        for &l in &lambdas {
            out.zoom_weight_max_rel = out.zoom_weight_max_rel.max(zoom_weight_error(g, l)?);
            out.attenuate0_max_rel = out.attenuate0_max_rel.max(attenuate0_error(g, l)?);
        }
        for (a, b) in [(0.5, 0.8), (2.0, 0.5), (1.7, 1.3), (0.3, 3.0)] {
            out.semigroup_max = out.semigroup_max.max(semigroup_error(g, a, b)?);
        }
        for rho in [0.5, 2.0, 0.9] {
            out.inverse_max = out.inverse_max.max(inverse_error(g, rho)?);
        }
        let mut rng = stream_rng(seed, id, k as u64);
        let y = gaussian_vec(&mut rng, g.n());
        let y2 = gaussian_vec(&mut rng, g.n());
        out.degree_drop_all &= derivative_degree_drops(g, &y, &y2, 3.0, 0.1)?;
        let (x, yy) = (gaussian_vec(&mut rng, 1)[0], gaussian_vec(&mut rng, 1)[0]);
        for m in 0..=8 {
            for &l in &lambdas {
                out.addition_max_abs = out.addition_max_abs.max(hermite_addition_error(m, l, x, yy));
            }
        }
    }
    let small = polys.iter().find(|g| g.n() == 2 && g.degree() == 2).cloned().unwrap_or_else(|| polys[0].clone());
    out.scale_invariance_exact = mollifier_scale_invariance(&small, small.degree().max(1), seed, 10)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes() {
        let b = identity_battery(3, 12).unwrap();
        assert!(b.pass(), "{b:?}");
    }
}
