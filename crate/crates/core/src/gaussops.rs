//! Operators on Gaussian polynomials: zooms, the noise operator, stability,
//! hypervariance, attenuation and the amplified noisy derivative.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{check_dim, invalid, Result};
use crate::hermite::{hermite_values, HermitePoly, MultiIndex};

/// `Pr[Bin(m, lambda) = j]` for `j = 0..=m`, by the ratio recurrence.
///
/// The recurrence starts from whichever end carries more mass so that
/// neither `lambda` near 0 nor near 1 underflows the seed term.
pub fn binomial_pmf(m: u32, lambda: f64) -> Vec<f64> {
    let m = m as usize;
    let mut p = vec![0.0; m + 1];
    if lambda <= 0.0 {
        p[0] = 1.0;
        return p;
    }
    if lambda >= 1.0 {
        p[m] = 1.0;
        return p;
    }
    if lambda <= 0.5 {
        p[0] = (m as f64 * (-lambda).ln_1p()).exp();
        let r = lambda / (1.0 - lambda);
        for j in 0..m {
            p[j + 1] = p[j] * (m - j) as f64 / (j + 1) as f64 * r;
        }
    } else {
        p[m] = (m as f64 * lambda.ln()).exp();
        let r = (1.0 - lambda) / lambda;
        for j in (0..m).rev() {
            p[j] = p[j + 1] * (j + 1) as f64 / (m - j) as f64 * r;
        }
    }
    p
}

/// Rows of `sqrt(Pr[Bin(m, lambda) = j])` for `m = 0..=max_m`.
pub(crate) struct SqrtBinomial {
    rows: Vec<Vec<f64>>,
}

impl SqrtBinomial {
    pub(crate) fn new(max_m: usize, lambda: f64) -> Self {
        SqrtBinomial {
            rows: (0..=max_m)
                .map(|m| binomial_pmf(m as u32, lambda).into_iter().map(f64::sqrt).collect())
                .collect(),
        }
    }

    /// `sqrt(Pr[Bin(gamma, lambda) = beta])` for multi-indices.
    pub(crate) fn weight(&self, gamma: &MultiIndex, beta: &MultiIndex) -> f64 {
        let mut w = 1.0;
        for (&g, &b) in gamma.exps().iter().zip(beta.exps()) {
            w *= self.rows[g as usize][b as usize];
        }
        w
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(invalid(format!("lambda must lie in [0, 1], got {lambda}")))
    }
}

fn max_exponent(g: &HermitePoly) -> usize {
    g.max_exponents().into_iter().max().unwrap_or(0)
}

/// Zoom scale and center.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZoomSpec {
    pub lambda: f64,
    pub center: Vec<f64>,
}

impl ZoomSpec {
    pub fn new(lambda: f64, center: Vec<f64>) -> Self {
        ZoomSpec { lambda, center }
    }
}

/// The polynomial `y -> g(sqrt(1-lambda) x + sqrt(lambda) y)` in the Hermite basis of `y`.
pub fn zoom(g: &HermitePoly, spec: &ZoomSpec) -> Result<HermitePoly> {
    check_dim(g.n(), spec.center.len())?;
    check_lambda(spec.lambda)?;
    let tables = g.hermite_tables(&spec.center);
    let sb = SqrtBinomial::new(max_exponent(g), spec.lambda);
    let mut out = HermitePoly::zero(g.n());
    for (gamma, c) in g.terms() {
        gamma.for_each_below(|beta| {
            let mut w = c * sb.weight(gamma, beta);
            if w == 0.0 {
                return;
            }
            for (i, (&gi, &bi)) in gamma.exps().iter().zip(beta.exps()).enumerate() {
                if gi != bi {
                    w *= tables[i][(gi - bi) as usize];
                }
            }
            out.add_term(beta.clone(), w);
        });
    }
    Ok(out)
}

/// For each `beta`, the zoom coefficient as a polynomial in the center `x`:
/// `sum_{gamma >= beta} g^(gamma) sqrt(Pr[Bin(gamma, lambda) = beta]) h_{gamma - beta}(x)`.
pub fn zoom_coefficients(g: &HermitePoly, lambda: f64) -> Result<BTreeMap<MultiIndex, HermitePoly>> {
    check_lambda(lambda)?;
    let sb = SqrtBinomial::new(max_exponent(g), lambda);
    let mut out: BTreeMap<MultiIndex, HermitePoly> = BTreeMap::new();
    for (gamma, c) in g.terms() {
        gamma.for_each_below(|beta| {
            let w = c * sb.weight(gamma, beta);
            if w == 0.0 {
                return;
            }
            let rest = gamma.checked_sub(beta).expect("beta <= gamma");
            out.entry(beta.clone())
                .or_insert_with(|| HermitePoly::zero(g.n()))
                .add_term(rest, w);
        });
    }
    out.retain(|_, p| !p.is_zero());
    Ok(out)
}

/// `U_rho g = sum rho^{|alpha|} g^(alpha) h_alpha`; any `rho > 0`, including `rho > 1`.
pub fn noise_op(g: &HermitePoly, rho: f64) -> Result<HermitePoly> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid(format!("noise parameter must be positive, got {rho}")));
    }
    Ok(g.map_coeffs(|a, c| c * rho.powi(a.degree() as i32)))
}

/// `Stab_rho[g] = sum rho^{|alpha|} g^(alpha)^2`.
pub fn stability(g: &HermitePoly, rho: f64) -> f64 {
    g.terms().map(|(a, c)| rho.powi(a.degree() as i32) * c * c).sum()
}

/// `sum_{|alpha| > above_level} R^{2|alpha|} g^(alpha)^2`.
///
/// Radii below 1 are accepted; they arise when the hypervariance of a
/// statistic is taken at a shrunken radius.
pub fn hypervar(g: &HermitePoly, r: f64, above_level: u32) -> f64 {
    let r2 = r * r;
    g.terms()
        .filter(|(a, _)| a.degree() > above_level)
        .map(|(a, c)| r2.powi(a.degree() as i32) * c * c)
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttenuationReport {
    #[serde(rename = "R")]
    pub r: f64,
    pub eps: f64,
    pub k: u32,
    pub hypervar_above_k: f64,
    pub sq2norm: f64,
    pub attenuated: bool,
}

/// Evaluates `HyperVar_R[g^{>k}] <= eps ||g||_2^2`.
pub fn is_attenuated(g: &HermitePoly, k: u32, r: f64, eps: f64) -> AttenuationReport {
    let hv = hypervar(g, r, k);
    let sq = g.sq2norm();
    AttenuationReport { r, eps, k, hypervar_above_k: hv, sq2norm: sq, attenuated: hv <= eps * sq }
}

/// The amplified noisy derivative, as a polynomial in `x`:
/// `sum_{beta != 0} R^{|beta|} (h_beta(y) - h_beta(y2)) / sqrt(2) * [zoom coefficient beta](x)`.
pub fn amplified_derivative(
    g: &HermitePoly,
    y: &[f64],
    y2: &[f64],
    r: f64,
    lambda: f64,
) -> Result<HermitePoly> {
    check_dim(g.n(), y.len())?;
    check_dim(g.n(), y2.len())?;
    check_lambda(lambda)?;
    let hy = g.hermite_tables(y);
    let hy2 = g.hermite_tables(y2);
    let sb = SqrtBinomial::new(max_exponent(g), lambda);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = HermitePoly::zero(g.n());
    for (gamma, c) in g.terms() {
        gamma.for_each_below(|beta| {
            if beta.is_zero() {
                return;
            }
            let w = sb.weight(gamma, beta);
            if w == 0.0 {
                return;
            }
            let mut a = 1.0;
            let mut b = 1.0;
            for (i, &e) in beta.exps().iter().enumerate() {
                if e != 0 {
                    a *= hy[i][e as usize];
                    b *= hy2[i][e as usize];
                }
            }
            let xi = (a - b) * inv_sqrt2;
            let amp = r.powi(beta.degree() as i32);
            let rest = gamma.checked_sub(beta).expect("beta <= gamma");
            out.add_term(rest, c * amp * xi * w);
        });
    }
    Ok(out)
}

/// Calculus directional derivative `D_y g`, using `h_k' = sqrt(k) h_{k-1}`.
pub fn directional_derivative(g: &HermitePoly, y: &[f64]) -> Result<HermitePoly> {
    check_dim(g.n(), y.len())?;
    let mut out = HermitePoly::zero(g.n());
    for (alpha, c) in g.terms() {
        for (i, &e) in alpha.exps().iter().enumerate() {
            if e == 0 || y[i] == 0.0 {
                continue;
            }
            let mut exps = alpha.exps().to_vec();
            exps[i] -= 1;
            out.add_term(MultiIndex::new(exps), c * y[i] * (e as f64).sqrt());
        }
    }
    Ok(out)
}

/// Evaluates `h_m(sqrt(1-lambda) x + sqrt(lambda) y)` through the addition identity
/// `sum_{i+j=m} sqrt(Pr[Bin(m, lambda) = j]) h_i(x) h_j(y)`.
pub fn hermite_addition(m: usize, lambda: f64, x: f64, y: f64) -> f64 {
    let pmf = binomial_pmf(m as u32, lambda);
    let hx = hermite_values(x, m);
    let hy = hermite_values(y, m);
    (0..=m).map(|j| pmf[j].sqrt() * hx[m - j] * hy[j]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u16]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn binomial_rows_sum_to_one() {
        for &lam in &[0.0, 1e-20, 0.3, 0.5, 0.9, 1.0 - 1e-12, 1.0] {
            for m in 0..12 {
                let s: f64 = binomial_pmf(m, lam).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "m={m} lam={lam}");
            }
        }
        let p = binomial_pmf(2, 0.5);
        assert_eq!(p, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn zoom_of_h2_at_origin() {
        let g = HermitePoly::basis(mi(&[2]));
        let z = zoom(&g, &ZoomSpec::new(0.5, vec![0.0])).unwrap();
        assert_eq!(z.coeff(&mi(&[1])), 0.0);
        assert!((z.coeff(&mi(&[2])) - 0.5).abs() < 1e-15);
        assert!((z.coeff(&mi(&[0])) + 0.5 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zoom_extremes() {
        let g = HermitePoly::from_terms(2, [(mi(&[1, 2]), 0.7), (mi(&[0, 1]), -1.1), (mi(&[0, 0]), 0.3)]).unwrap();
        let x = vec![0.4, -1.2];
        let z0 = zoom(&g, &ZoomSpec::new(0.0, x.clone())).unwrap();
        assert_eq!(z0.degree(), 0);
        assert!((z0.mean() - g.eval(&x).unwrap()).abs() < 1e-14);
        let z1 = zoom(&g, &ZoomSpec::new(1.0, x)).unwrap();
        assert!(z1.max_coeff_diff(&g) < 1e-15);
        assert!(zoom(&g, &ZoomSpec::new(1.5, vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn noise_examples() {
        let g = HermitePoly::basis(mi(&[2]));
        assert_eq!(noise_op(&g, 0.5).unwrap().coeff(&mi(&[2])), 0.25);
        let back = noise_op(&noise_op(&g, 2.0).unwrap(), 0.5).unwrap();
        assert_eq!(back, g);
        assert!(noise_op(&g, 0.0).is_err());
    }

    #[test]
    fn stability_and_hypervar_examples() {
        let g = HermitePoly::from_terms(1, [(mi(&[1]), 1.0), (mi(&[2]), 1.0)]).unwrap();
        assert!((stability(&g, 0.5) - 0.75).abs() < 1e-15);
        let g = HermitePoly::from_terms(1, [(mi(&[0]), 3.0), (mi(&[1]), 2.0)]).unwrap();
        assert_eq!(hypervar(&g, 2.0, 0), 16.0);
        assert_eq!(hypervar(&g, 1.0, 0), g.var());
        assert_eq!(hypervar(&g, 5.0, g.degree()), 0.0);
        assert_eq!(stability(&g, 0.0), 9.0);
    }

    #[test]
    fn attenuation_single_level() {
        let w = 0.3f64;
        let g = HermitePoly::from_terms(1, [(mi(&[3]), w.sqrt())]).unwrap();
        let rep = is_attenuated(&g, 2, 1.5, 0.5);
        assert_eq!(rep.attenuated, 1.5f64.powi(6) <= 0.5);
        assert!(is_attenuated(&g, 3, 100.0, 1e-9).attenuated);
        assert!(is_attenuated(&HermitePoly::zero(3), 0, 10.0, 0.1).attenuated);
    }

    #[test]
    fn derivative_examples() {
        let g = HermitePoly::basis(mi(&[1]));
        let (r, lam) = (3.0, 0.2);
        let d = amplified_derivative(&g, &[1.3], &[-0.4], r, lam).unwrap();
        assert_eq!(d.degree(), 0);
        let want = r * lam.sqrt() * (1.3 + 0.4) / 2f64.sqrt();
        assert!((d.mean() - want).abs() < 1e-14);
        assert!(amplified_derivative(&g, &[0.5], &[0.5], r, lam).unwrap().is_zero());
        let h2 = HermitePoly::basis(mi(&[2]));
        let dd = directional_derivative(&h2, &[1.0]).unwrap();
        assert!((dd.coeff(&mi(&[1])) - 2f64.sqrt()).abs() < 1e-15);
        assert!(directional_derivative(&HermitePoly::constant(2, 4.0), &[1.0, 2.0]).unwrap().is_zero());
    }
}
