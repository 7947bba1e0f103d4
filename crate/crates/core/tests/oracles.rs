//! Library results against independently computed values.

use ptf_prg::gaussops::{
    amplified_derivative, directional_derivative, hypervar, noise_op, zoom, zoom_coefficients, ZoomSpec,
};
use ptf_prg::hermite::{HermitePoly, MultiIndex};
use ptf_prg::hyperlab::{carbery_wright_check, hypercon_check, hypercon_exact_route, kane_lemma9_check,
    local_hyperconc_experiment};
use ptf_prg::kwise::{seed_length, Gf2m, GaussianKWise, KWiseSpec};
use ptf_prg::mc::{gaussian_vec, stream_rng, Estimate};
use ptf_prg::mollifier::{SmoothStep, Mollifier};
use ptf_prg::prg::{choose_params, Prg, PrgOverrides};
use ptf_prg::statgrid::{GridOverrides, GridParams, PolySampler, StatGrid, StatMode};
use ptf_prg::suite::{random_poly, CHI2_1_MEDIAN};
use ptf_prg::verify;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn mi(v: &[u16]) -> MultiIndex {
    MultiIndex::new(v.to_vec())
}

/// Probabilists' Hermite He_k(t) from the explicit sum, normalised by sqrt(k!).
fn h_explicit(k: u32, t: f64) -> f64 {
    let fact = |m: u32| (1..=m).map(|v| v as f64).product::<f64>();
    let mut s = 0.0;
    for j in 0..=k / 2 {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * fact(k) / (fact(j) * fact(k - 2 * j) * 2f64.powi(j as i32)) * t.powi((k - 2 * j) as i32);
    }
    s / fact(k).sqrt()
}

fn eval_explicit(g: &HermitePoly, x: &[f64]) -> f64 {
    g.terms()
        .map(|(a, c)| c * a.exps().iter().zip(x).map(|(&e, &xi)| h_explicit(e as u32, xi)).product::<f64>())
        .sum()
}

#[test]
fn eval_matches_explicit_hermite_sum() {
    let mut rng = stream_rng(1, 1, 0);
    let g = random_poly(2, 3, &mut rng);
    for _ in 0..10 {
        let x = gaussian_vec(&mut rng, 2);
        assert!((g.eval(&x).unwrap() - eval_explicit(&g, &x)).abs() < 1e-10);
    }
}

#[test]
fn monomial_conversion_matches_pointwise() {
    let mut rng = stream_rng(1, 2, 0);
    let g = random_poly(2, 3, &mut rng);
    let mono = g.to_monomial_basis();
    for _ in 0..10 {
        let x = gaussian_vec(&mut rng, 2);
        let direct: f64 = mono
            .iter()
            .map(|(a, c)| c * a.exps().iter().zip(&x).map(|(&e, &xi)| xi.powi(e as i32)).product::<f64>())
            .sum();
        assert!((direct - g.eval(&x).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn zoom_h2_at_origin() {
    let g = HermitePoly::basis(mi(&[2]));
    let z = zoom_coefficients(&g, 0.5).unwrap();
    let at0 = |b: u16| z.get(&mi(&[b])).map(|p| p.eval(&[0.0]).unwrap()).unwrap_or(0.0);
    assert!(at0(1).abs() < 1e-15);
    assert!((at0(2) - 0.5).abs() < 1e-15);
    assert!((at0(0) - 0.5 * (-1.0 / 2f64.sqrt())).abs() < 1e-15);
}

#[test]
fn zoom_is_substitution() {
    let mut rng = stream_rng(1, 3, 0);
    for _ in 0..5 {
        let g = random_poly(3, 3, &mut rng);
        let x = gaussian_vec(&mut rng, 3);
        let lam: f64 = rng.gen_range(0.01..0.99);
        let z = zoom(&g, &ZoomSpec::new(lam, x.clone())).unwrap();
        for _ in 0..5 {
            let y = gaussian_vec(&mut rng, 3);
            let w: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (1.0 - lam).sqrt() * a + lam.sqrt() * b).collect();
            let want = eval_explicit(&g, &w);
            assert!((z.eval(&y).unwrap() - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }
}

#[test]
fn noise_operator_diagonal_and_mc() {
    let g = HermitePoly::basis(mi(&[2]));
    let u = noise_op(&g, 0.5).unwrap();
    assert!((u.coeff(&mi(&[2])) - 0.25).abs() < 1e-15);
    // U_rho g(x) = E g(rho x + sqrt(1 - rho^2) z)
    let mut rng = stream_rng(1, 4, 0);
    let g = random_poly(2, 3, &mut rng);
    let (rho, x): (f64, [f64; 2]) = (0.6, [0.4, -1.2]);
    let vals: Vec<f64> = (0..200_000)
        .map(|_| {
            let z = gaussian_vec(&mut rng, 2);
            let w = [rho * x[0] + (1.0 - rho * rho).sqrt() * z[0], rho * x[1] + (1.0 - rho * rho).sqrt() * z[1]];
            g.eval(&w).unwrap()
        })
        .collect();
    let e = Estimate::from_samples(&vals);
    let exact = noise_op(&g, rho).unwrap().eval(&x).unwrap();
    assert!((e.mean - exact).abs() <= 4.0 * e.stderr, "{} vs {exact}", e.mean);
}

#[test]
fn amplified_derivative_of_h1() {
    let g = HermitePoly::basis(mi(&[1]));
    let (r, lam, y, y2) = (3.0, 0.2, 0.7, -0.4);
    let dg = amplified_derivative(&g, &[y], &[y2], r, lam).unwrap();
    assert_eq!(dg.degree(), 0);
    let want = r * lam.sqrt() * (y - y2) / 2f64.sqrt();
    assert!((dg.mean() - want).abs() < 1e-14);
}

#[test]
fn directional_derivative_energy() {
    // g at level 2: E_y ||D_y g||^2 = 2 ||g||^2
    let g = HermitePoly::from_terms(2, [(mi(&[2, 0]), 0.7), (mi(&[1, 1]), -1.1), (mi(&[0, 2]), 0.4)]).unwrap();
    let mut rng = stream_rng(1, 5, 0);
    let vals: Vec<f64> = (0..40_000)
        .map(|_| directional_derivative(&g, &gaussian_vec(&mut rng, 2)).unwrap().sq2norm())
        .collect();
    let e = Estimate::from_samples(&vals);
    assert!((e.mean - 2.0 * g.sq2norm()).abs() <= 4.0 * e.stderr);
}

#[test]
fn seed_length_example() {
    assert_eq!(seed_length(&KWiseSpec::new(2, 2, 4).unwrap()), 8);
}

/// Polynomials over GF(2) as u128 bit vectors.
fn pmod(mut a: u128, f: u128) -> u128 {
    let df = 127 - f.leading_zeros();
    while a != 0 && 127 - a.leading_zeros() >= df {
        a ^= f << (127 - a.leading_zeros() - df);
    }
    a
}

fn pmulmod(a: u128, b: u128, f: u128) -> u128 {
    let mut acc = 0u128;
    let mut a = pmod(a, f);
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a = pmod(a << 1, f);
    }
    acc
}

fn pgcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = pmod(a, b);
        a = b;
        b = r;
    }
    a
}

/// Rabin's irreducibility test for a degree-m polynomial.
fn irreducible(f: u128, m: u32) -> bool {
    let x = pmod(2, f);
    let frob = |k: u32| (0..k).fold(x, |acc, _| pmulmod(acc, acc, f));
    if frob(m) != x {
        return false;
    }
    let primes: Vec<u32> = (2..=m).filter(|p| m.is_multiple_of(*p) && (2..*p).all(|q| !p.is_multiple_of(q))).collect();
    primes.iter().all(|p| pgcd(f, frob(m / p) ^ x) == 1)
}

#[test]
fn field_moduli_are_irreducible_and_smallest() {
    for m in 1..=64u32 {
        let low = Gf2m::new(m).unwrap().modulus_low();
        let f = (1u128 << m) | low as u128;
        assert!(irreducible(f, m), "m = {m}");
        if (2..=16).contains(&m) {
            for smaller in 0..low {
                assert!(!irreducible((1u128 << m) | smaller as u128, m), "m = {m}, smaller {smaller:#x}");
            }
        }
    }
}

#[test]
fn near_gaussian_moments_and_ks() {
    let draw = |m: u32, count: usize| -> Vec<f64> {
        let g = GaussianKWise::new(KWiseSpec::new(4, 64, m).unwrap()).unwrap();
        let mut rng = stream_rng(2, m as u64, 0);
        let mut out = Vec::new();
        while out.len() < count {
            out.extend(g.vector(&g.random_seed(&mut rng)).unwrap());
        }
        out.truncate(count);
        out
    };
    let v = draw(16, 100_000);
    let e = Estimate::from_samples(&v);
    assert!(e.mean.abs() <= 4.0 * e.stderr);
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let e2 = Estimate::from_samples(&sq);
    assert!((e2.mean - 1.0).abs() <= 4.0 * e2.stderr);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let ks = |mut xs: Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = normal.cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    };
    let (k2, k4, k16) = (ks(draw(2, 100_000)), ks(draw(4, 100_000)), ks(draw(16, 100_000)));
    assert!(k2 > k4 && k4 > k16, "{k2} {k4} {k16}");
}

#[test]
fn kwise_moment_match() {
    // E[q(z)] = q^(0) for degree <= k when coordinates are k-wise independent Gaussians.
    let spec = KWiseSpec::new(4, 3, 24).unwrap();
    let g = GaussianKWise::new(spec).unwrap();
    let mut rng = stream_rng(3, 0, 0);
    let q = random_poly(3, 4, &mut rng);
    let vals: Vec<f64> = (0..100_000).map(|_| q.eval(&g.vector(&g.random_seed(&mut rng)).unwrap()).unwrap()).collect();
    let e = Estimate::from_samples(&vals);
    assert!((e.mean - q.mean()).abs() <= 4.0 * e.stderr + 10.0 * 2f64.powi(-12), "{} vs {}", e.mean, q.mean());
}

#[test]
fn prg_coordinates_have_unit_variance() {
    let p = choose_params(3, 1, 0.5, &PrgOverrides::default()).unwrap();
    let prg = Prg::new(p).unwrap();
    let zs = prg.batch(4, 10_000);
    for i in 0..3 {
        let sq: Vec<f64> = zs.iter().map(|z| z[i] * z[i]).collect();
        let e = Estimate::from_samples(&sq);
        assert!((e.mean - 1.0).abs() <= 4.0 * e.stderr, "coord {i}: {}", e.mean);
    }
}

#[test]
fn full_hybrid_is_gaussian() {
    let p = choose_params(2, 1, 0.5, &PrgOverrides::default()).unwrap();
    let l = p.blocks;
    let prg = Prg::new(p).unwrap();
    let mut xs: Vec<f64> = (0..10_000).map(|i| prg.replacement_hybrid(l, 5, i).unwrap().z[0]).collect();
    xs.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (normal.cdf(x) - i as f64 / n).abs().max(((i + 1) as f64 / n - normal.cdf(x)).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 1.628 / n.sqrt(), "KS {ks}");
}

#[test]
fn stat_row_one_is_hypervariance_of_zoom() {
    let mut rng = stream_rng(5, 0, 0);
    let p = random_poly(2, 2, &mut rng);
    let params = GridParams::new(2, 0.2, 0.05, &GridOverrides { r_bar: Some(3.0), ..Default::default() }).unwrap();
    let grid = StatGrid::new(p.clone(), params);
    for _ in 0..5 {
        let x = gaussian_vec(&mut rng, 2);
        let want = hypervar(&zoom(&p, &ZoomSpec::new(0.05, x.clone())).unwrap(), 3.0, 0);
        let got = grid.stat(1, 0, &x, StatMode::Exact).unwrap().value;
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-12), "{got} vs {want}");
    }
    let x1 = gaussian_vec(&mut rng, 2);
    let x2 = gaussian_vec(&mut rng, 2);
    let top = |x: &[f64]| grid.stat(2, 0, x, StatMode::Exact).unwrap().value;
    assert!((top(&x1) - top(&x2)).abs() <= 1e-9 * top(&x1).abs());
    assert_eq!(grid.stat(3, 0, &x1, StatMode::Exact).unwrap().value, 0.0);
}

#[test]
fn stat_mc_brackets_exact() {
    let mut rng = stream_rng(6, 0, 0);
    let p = random_poly(2, 2, &mut rng);
    let params = GridParams::new(2, 0.2, 0.05, &GridOverrides { r_bar: Some(2.0), ..Default::default() }).unwrap();
    let grid = StatGrid::new(p, params);
    let x = gaussian_vec(&mut rng, 2);
    for (i, j) in [(1, 0), (1, 1), (2, 0)] {
        let exact = grid.stat(i, j, &x, StatMode::Exact).unwrap().value;
        let mc = grid.stat(i, j, &x, StatMode::MonteCarlo { trials: 20_000, seed: 9 }).unwrap();
        assert!((mc.value - exact).abs() <= 4.0 * mc.stderr + 1e-9 * exact.abs(), "({i},{j}) {} vs {exact}", mc.value);
    }
}

#[test]
fn smooth_step_flat_at_ends() {
    let s = SmoothStep::new(4);
    let h = 1e-2;
    // sigma - const behaves like (1 -+ t)^5 near the ends, so low-order differences vanish.
    for end in [-1.0, 1.0] {
        let inside = if end < 0.0 { h } else { -h };
        let v0 = s.eval(end);
        let v1 = s.eval(end + inside);
        assert!((v1 - v0).abs() < 1e-6, "{v1} {v0}");
    }
}

#[test]
fn bottom_row_horizontal_checks_hold() {
    let mut rng = stream_rng(7, 0, 0);
    let p = random_poly(3, 2, &mut rng);
    let params = GridParams::new(2, 0.2, 1e-4, &GridOverrides::default()).unwrap();
    let m = Mollifier::new(p, params);
    for _ in 0..10 {
        let x = gaussian_vec(&mut rng, 3);
        let rep = m.analysis_checks(&x, StatMode::Exact).unwrap();
        assert!(rep.checks.iter().filter(|c| c.id.starts_with("horizontal(2,")).all(|c| c.holds));
    }
}

#[test]
fn hypercon_routes_agree() {
    let mut g = HermitePoly::basis(mi(&[1])).scale(0.05);
    g.add_term(mi(&[0]), 1.0);
    let (r, theta) = (2.0, 0.02);
    let (q, eta) = hypercon_exact_route(&g, r, theta).expect("attenuated");
    assert_eq!(q, 5.0);
    assert!(hypercon_check(&g, q, eta, 50_000, 3).unwrap().holds);
}

#[test]
fn local_hyperconc_linear_closed_form() {
    // zoom of h_1: HyperVar_R = R^2 lambda, norm = (1-lambda) x^2 + lambda.
    let (r, eps, lam): (f64, f64, f64) = (2.0, 0.3, 0.01);
    let t2 = (r * r * lam / (eps * eps) - lam) / (1.0 - lam);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let want = 2.0 * normal.cdf(t2.sqrt()) - 1.0;
    let rep = local_hyperconc_experiment(&PolySampler::dirac(HermitePoly::basis(mi(&[1]))), r, eps, 0.5, lam, 20_000, 1, 4)
        .unwrap();
    assert!((rep.failure_fraction - want).abs() <= 4.0 * rep.stderr, "{} vs {want}", rep.failure_fraction);
}

#[test]
fn carbery_wright_linear_closed_form() {
    let rep = carbery_wright_check(&HermitePoly::basis(mi(&[1])), 0.5, 40_000, 5).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let row = rep.rows.iter().find(|r| r.0 == 2.0).unwrap();
    let want = 2.0 * normal.cdf(0.25) - 1.0;
    assert!((row.1 - want).abs() <= 4.0 * row.2, "{} vs {want}", row.1);
    let prod = HermitePoly::basis(mi(&[1, 1]));
    let rep = carbery_wright_check(&prod, 0.3, 40_000, 6).unwrap();
    assert!(rep.smallest_passing.is_some_and(|c| c <= 8.0));
}

#[test]
fn kane_lemma9_linear_closed_form() {
    let (lam, beta) = (1e-4, 0.1);
    let rep = kane_lemma9_check(&HermitePoly::basis(mi(&[1])), lam, beta, 40_000, 7).unwrap();
    for &(c, frac, se) in &rep.rows {
        let nu = c * lam.sqrt() / beta;
        let s = (1.0 - lam).sqrt();
        let a = ((-nu).exp() - s) / lam.sqrt();
        let b = (nu.exp() - s) / lam.sqrt();
        let want = 1.0 - (b.atan() - a.atan()) / std::f64::consts::PI;
        assert!((frac - want).abs() <= 4.0 * se + 1e-12, "C = {c}: {frac} vs {want}");
    }
    let mut rng = stream_rng(8, 0, 0);
    let g = random_poly(3, 3, &mut rng);
    assert!(kane_lemma9_check(&g, 1e-4, 0.1, 20_000, 8).unwrap().pass);
}

#[test]
fn chi2_median_constant() {
    let q = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.75);
    assert!((q * q - CHI2_1_MEDIAN).abs() < 1e-12, "{}", q * q);
    assert!((ChiSquared::new(1.0).unwrap().cdf(CHI2_1_MEDIAN) - 0.5).abs() < 1e-12);
}

#[test]
fn clean_fraction_hand_value_and_lagrange_limit() {
    assert!((verify::rational_to_f64(&verify::clean_fraction(1, 1).unwrap()) - 1.5).abs() < 1e-15);
    for d in 1..=4 {
        let rep = verify::lagrange_l0(d, 1e-12).unwrap();
        for (j, v) in rep.l0.iter().enumerate() {
            let want = verify::rational_to_f64(&verify::clean_fraction(j as u32 + 1, d).unwrap());
            assert!((v - want).abs() < 1e-6);
        }
    }
}

#[test]
fn magic_lemma_on_squares() {
    let mut rng = stream_rng(9, 0, 0);
    let mut applicable = 0;
    for _ in 0..40 {
        let p = random_poly(2, 1, &mut rng);
        let x = gaussian_vec(&mut rng, 2);
        let rep = verify::magic_lemma_experiment(&p.square(), 1e-7, &x, 1.0 / (12.0 * 9.0 * 3.0)).unwrap();
        if let Some(c) = rep.conclusion {
            applicable += 1;
            assert!(c);
        }
    }
    assert!(applicable >= 30);
    // heavy top level and large q: the hypothesis fails
    let adv = HermitePoly::basis(mi(&[2])).scale(10.0);
    let mut adv = adv;
    adv.add_term(mi(&[0]), 0.1);
    let rep = verify::magic_lemma_experiment(&adv.square(), 0.3, &[2.5], 1e-3).unwrap();
    assert!(!rep.hypothesis_holds);
    assert_eq!(rep.conclusion, None);
}

#[test]
fn stability_forms_match_simulation() {
    let mut rng = stream_rng(10, 0, 0);
    let g = random_poly(2, 2, &mut rng);
    let rep = verify::stability_mc_check(&g, &[0.3, -0.8], 0.8, 0.3, 0.5, 10_000, 11).unwrap();
    assert!(rep.pass, "{rep:?}");
    let h = verify::stability_h(&g, &[0.3, -0.8], 1.0, 0.0, 0.5).unwrap();
    let f = verify::stability_closed_forms(&h, 1.0, 0.0, 0.5).unwrap();
    assert_eq!(f.sigma_lhs, f.tau_lhs);
    assert_eq!(f.p_lhs, 0.0);
}
