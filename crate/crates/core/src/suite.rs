//! Random and structured test polynomials.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::hermite::{HermitePoly, MultiIndex};
use crate::mc::{gaussian_vec, stream_id, stream_rng};

/// Every multi-index in `n` variables with total degree at most `max_deg`, lexicographically.
pub fn all_indices(n: usize, max_deg: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = vec![0u16; n];
    fn rec(i: usize, left: u32, cur: &mut Vec<u16>, out: &mut Vec<MultiIndex>) {
        if i == cur.len() {
            out.push(MultiIndex::new(cur.clone()));
            return;
        }
        for e in 0..=left {
            cur[i] = e as u16;
            rec(i + 1, left - e, cur, out);
        }
        cur[i] = 0;
    }
    rec(0, max_deg, &mut cur, &mut out);
    out
}

/// Independent N(0,1) coefficients on every index of degree at most `d`.
pub fn random_poly<R: Rng + ?Sized>(n: usize, d: u32, rng: &mut R) -> HermitePoly {
    let terms: Vec<_> = all_indices(n, d)
        .into_iter()
        .map(|a| {
            let c: f64 = StandardNormal.sample(rng);
            (a, c)
        })
        .collect();
    HermitePoly::from_terms(n, terms).expect("indices have length n")
}

/// Random polynomial of exact degree `d` with no constant term; a typical PTF test case.
pub fn random_homogeneous_ish<R: Rng + ?Sized>(n: usize, d: u32, rng: &mut R) -> HermitePoly {
    let mut p = random_poly(n, d, rng);
    p = p.map_coeffs(|a, c| if a.is_zero() { 0.0 } else { c });
    p
}

/// `prod_k <w_k, x>` for random unit-free directions `w_k`.
pub fn product_of_linear_forms<R: Rng + ?Sized>(n: usize, d: u32, rng: &mut R) -> HermitePoly {
    let mut p = HermitePoly::constant(n, 1.0);
    for _ in 0..d {
        let w = gaussian_vec(rng, n);
        let lin = HermitePoly::from_terms(n, (0..n).map(|i| (MultiIndex::unit(n, i), w[i]))).expect("dims");
        p = p.mul(&lin).expect("dims");
    }
    p
}

/// `h_d(<w, x>)` for a unit vector `w`.
pub fn hermite_of_linear_form(w: &[f64], d: u32) -> HermitePoly {
    let n = w.len();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = w.iter().map(|v| v / norm).collect();
    // h_d(<u,x>) = sum_{|alpha| = d} sqrt(d! / alpha!) u^alpha h_alpha(x)
    let mut p = HermitePoly::zero(n);
    for a in all_indices(n, d) {
        if a.degree() != d {
            continue;
        }
        let mut c = crate::hermite::factorial(d as usize).sqrt();
        for (i, &e) in a.exps().iter().enumerate() {
            c *= u[i].powi(e as i32) / crate::hermite::factorial(e as usize).sqrt();
        }
        p.add_term(a, c);
    }
    p
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteEntry {
    pub id: String,
    #[serde(skip)]
    pub poly: HermitePoly,
    pub n: usize,
    pub d: u32,
}

/// Median of a chi-square with one degree of freedom.
pub const CHI2_1_MEDIAN: f64 = 0.454_936_423_119_572_7;

/// The builtin 20-polynomial fooling suite (`n <= 8`, `d <= 3`).
pub fn builtin_suite(seed: u64) -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    let mut push = |id: String, poly: HermitePoly| {
        let (n, d) = (poly.n(), poly.degree());
        out.push(SuiteEntry { id, poly, n, d });
    };
    let mut rng = stream_rng(seed, stream_id("suite"), 0);
    push("halfspace_h1".into(), HermitePoly::basis(MultiIndex::unit(1, 0)));
    let mut sq = HermitePoly::basis(MultiIndex::new(vec![2])).scale(2f64.sqrt());
    sq.add_term(MultiIndex::zero(1), 1.0 - CHI2_1_MEDIAN);
    push("chi2_median".into(), sq);
    let w = gaussian_vec(&mut rng, 6);
    let mut shifted = HermitePoly::from_terms(6, (0..6).map(|i| (MultiIndex::unit(6, i), w[i]))).expect("dims");
    shifted.add_term(MultiIndex::zero(6), 0.5);
    push("halfspace_shifted_n6".into(), shifted);
    for (k, (n, d)) in [(4, 1), (8, 1), (3, 2), (5, 2), (8, 2), (4, 2), (3, 3), (5, 3), (8, 3)].into_iter().enumerate() {
        push(format!("random_{k}_n{n}_d{d}"), random_poly(n, d, &mut rng));
    }
    for (n, d) in [(4, 2), (6, 3), (8, 3)] {
        push(format!("product_linear_n{n}_d{d}"), product_of_linear_forms(n, d, &mut rng));
    }
    for (n, d) in [(3, 2), (5, 3)] {
        let w = gaussian_vec(&mut rng, n);
        push(format!("hermite_linear_n{n}_d{d}"), hermite_of_linear_form(&w, d));
    }
    push("random_nc_n6_d2".into(), random_homogeneous_ish(6, 2, &mut rng));
    push("random_nc_n7_d3".into(), random_homogeneous_ish(7, 3, &mut rng));
    let mut tilt = HermitePoly::zero(2);
    tilt.add_term(MultiIndex::new(vec![1, 1]), 1.0);
    tilt.add_term(MultiIndex::new(vec![3, 0]), 0.3);
    tilt.add_term(MultiIndex::zero(2), 0.2);
    push("cubic_tilt_n2".into(), tilt);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_counts() {
        assert_eq!(all_indices(3, 2).len(), 10);
        assert_eq!(all_indices(8, 3).len(), 165);
    }

    #[test]
    fn suite_shape() {
        let s = builtin_suite(1);
        assert_eq!(s.len(), 20);
        assert!(s.iter().all(|e| e.n <= 8 && e.d <= 3 && e.d >= 1));
    }

    #[test]
    fn hermite_of_linear_form_matches_univariate() {
        let p = hermite_of_linear_form(&[3.0, 4.0], 3);
        let x = [0.7, -0.2];
        let t = 0.6 * 0.7 + 0.8 * -0.2;
        let want = crate::hermite::hermite_values(t, 3)[3];
        assert!((p.eval(&x).unwrap() - want).abs() < 1e-12);
        assert!((p.sq2norm() - 1.0).abs() < 1e-12);
    }
}
