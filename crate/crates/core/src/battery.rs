//! Named deterministic and statistical checks with a JSON report.
//!
//! The report depends only on the configuration: no timings, and every
//! parallel reduction is order-preserving.

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{invalid, Result};
use crate::fooling::{fool, FoolingConfig};
use crate::gaussops::{hypervar, is_attenuated};
use crate::hermite::{HermitePoly, MultiIndex};
use crate::hyperlab::{self, main_theorem_lambda};
use crate::identities::identity_battery;
use crate::kwise::{exhaustive_uniformity, KWiseSpec};
use crate::mc::{child_seed, gaussian_vec, stream_id, stream_rng};
use crate::prg::PrgOverrides;
use crate::statgrid::{GridOverrides, GridParams, PolySampler, StatGrid};
use crate::suite::{builtin_suite, random_homogeneous_ish, random_poly, SuiteEntry};
use crate::verify;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Deterministic,
    Statistical,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatteryReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryConfig {
    pub seed: u64,
    /// Monte Carlo sample count for the statistical checks.
    pub trials: usize,
    pub eps: f64,
    /// Check names to run; empty runs everything.
    pub only: Vec<String>,
    /// Reverses the jigsaw inequality, which must make the battery fail.
    pub inject_fault: bool,
    /// Generator overrides for the small fooling check.
    pub fooling: PrgOverrides,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            seed: 1,
            trials: 10_000,
            eps: 0.2,
            only: Vec::new(),
            inject_fault: false,
            fooling: PrgOverrides { lambda_exp: Some(1.0), ..Default::default() },
        }
    }
}

pub const CHECK_NAMES: [&str; 24] = [
    "clean_fraction",
    "lagrange_l0",
    "jigsaw",
    "exact_identities",
    "kwise_exhaustive",
    "magic_lemma",
    "stability_closed_forms",
    "desideratum2",
    "stat_identities",
    "stability_mc",
    "hypercontractivity",
    "two_vs_one_norm",
    "tail_bound",
    "carbery_wright",
    "kane_lemma9",
    "hypermarkov",
    "atten_hyperconcy",
    "attenuated_hypercon",
    "local_hyperconc",
    "derivative_ratio",
    "retention_attrition",
    "fooling_small",
    "seed_accounting",
    "box_muller",
];

const DETERMINISTIC: [&str; 10] = [
    "clean_fraction",
    "lagrange_l0",
    "jigsaw",
    "exact_identities",
    "kwise_exhaustive",
    "magic_lemma",
    "stability_closed_forms",
    "desideratum2",
    "seed_accounting",
    "box_muller",
];

pub fn check_kind(name: &str) -> Option<CheckKind> {
    if DETERMINISTIC.contains(&name) {
        Some(CheckKind::Deterministic)
    } else if CHECK_NAMES.contains(&name) {
        Some(CheckKind::Statistical)
    } else {
        None
    }
}

pub fn run_battery(cfg: &BatteryConfig) -> Result<BatteryReport> {
    for name in &cfg.only {
        if !CHECK_NAMES.contains(&name.as_str()) {
            return Err(invalid(format!("unknown check '{name}'")));
        }
    }
    let mut checks = Vec::new();
    for name in CHECK_NAMES {
        if !cfg.only.is_empty() && !cfg.only.iter().any(|o| o == name) {
            continue;
        }
        checks.push(run_check(name, cfg)?);
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(BatteryReport { seed: cfg.seed, trials: cfg.trials, checks, pass })
}

fn det(name: &str, pass: bool, detail: Value) -> CheckResult {
    CheckResult { name: name.into(), kind: CheckKind::Deterministic, pass, detail }
}

fn stat(name: &str, pass: bool, detail: Value) -> CheckResult {
    CheckResult { name: name.into(), kind: CheckKind::Statistical, pass, detail }
}

/// Suite polynomials normalised to mean 1 and `HyperVar_R = theta`, hence `(R, theta)`-attenuated.
fn attenuated_suite(seed: u64, r: f64, theta: f64) -> Vec<(String, HermitePoly)> {
    builtin_suite(seed)
        .into_iter()
        .filter_map(|e| {
            let centred = e.poly.map_coeffs(|a, c| if a.is_zero() { 0.0 } else { c });
            let hv = hypervar(&centred, r, 0);
            if hv == 0.0 {
                return None;
            }
            let mut g = centred.scale((theta / hv).sqrt() * 0.999);
            g.add_term(MultiIndex::zero(g.n()), 1.0);
            Some((e.id, g))
        })
        .collect()
}

fn run_check(name: &str, cfg: &BatteryConfig) -> Result<CheckResult> {
    let seed = child_seed(cfg.seed, name);
    let trials = cfg.trials;
    let suite = || builtin_suite(cfg.seed);
    Ok(match name {
        "clean_fraction" => {
            let maxima: Vec<f64> = (0..=20).map(|d| verify::rational_to_f64(&verify::clean_fraction_max(d))).collect();
            det(name, verify::clean_fraction_bound_holds(20), json!({ "max_d": 20, "max_abs_by_d": maxima }))
        }
        "lagrange_l0" => {
            let reps = (1..=8).map(|d| verify::lagrange_l0(d, 1e-11)).collect::<Result<Vec<_>>>()?;
            let pass = reps.iter().all(|r| r.max_abs <= 3.0 && (r.sum - 1.0).abs() <= 1e-6);
            let rows: Vec<Value> =
                reps.iter().map(|r| json!({ "d": r.d, "max_abs": r.max_abs, "sum": r.sum })).collect();
            det(name, pass, json!({ "q": 1e-11, "rows": rows }))
        }
        "jigsaw" => {
            let fails = verify::jigsaw_grid_failures(cfg.inject_fault);
            det(name, fails == 0, json!({ "failures": fails, "flipped": cfg.inject_fault }))
        }
        "exact_identities" => {
            let b = identity_battery(seed, 50)?;
            det(name, b.pass(), serde_json::to_value(&b).expect("serialisable"))
        }
        "kwise_exhaustive" => {
            let mut rows = Vec::new();
            for k in 1..=3 {
                for m in 1..=2 {
                    for n in 1..=4u64 {
                        rows.push(exhaustive_uniformity(&KWiseSpec::new(k, n, m)?)?);
                    }
                }
            }
            let pass = rows.iter().all(|r| r.uniform);
            det(name, pass, json!({ "configs": rows.len(), "all_uniform": pass }))
        }
        "magic_lemma" => {
            let id = stream_id("battery/magic");
            let (mut applicable, mut concluded) = (0usize, 0usize);
            let gamma = 1.0 / (12.0 * 9.0 * 3.0);
            for t in 0..50u64 {
                let mut rng = stream_rng(seed, id, t);
                let p = random_poly(2, 1, &mut rng);
                let x = gaussian_vec(&mut rng, 2);
                let rep = verify::magic_lemma_experiment(&p.square(), 1e-6, &x, gamma)?;
                if let Some(c) = rep.conclusion {
                    applicable += 1;
                    concluded += usize::from(c);
                }
            }
            det(name, applicable == concluded, json!({ "cases": 50, "applicable": applicable, "concluded": concluded }))
        }
        "stability_closed_forms" => {
            let (mut evaluated, mut held) = (0usize, 0usize);
            let x_id = stream_id("battery/stability-x");
            for (k, e) in suite().iter().enumerate().take(8) {
                let x = gaussian_vec(&mut stream_rng(seed, x_id, k as u64), e.n);
                for r in [1.0, 1.5, 2.0] {
                    for l in [0.1, 0.5, 0.9] {
                        for rho in [0.1, 0.2, 0.3] {
                            let Ok(h) = verify::stability_h(&e.poly, &x, r, l, rho) else { continue };
                            let f = verify::stability_closed_forms(&h, r, l, rho)?;
                            evaluated += 1;
                            held += usize::from(f.holds == Some(true));
                        }
                    }
                }
            }
            let c = verify::stability_closed_forms(&HermitePoly::constant(2, 1.5), 0.8, 0.3, 0.4)?;
            let pass = evaluated == held && c.p_lhs == 0.0 && c.p_rhs == 0.0;
            det(name, pass, json!({ "evaluated": evaluated, "held": held }))
        }
        "desideratum2" => {
            let mut rng = stream_rng(seed, stream_id("battery/desideratum2"), 0);
            let p = random_homogeneous_ish(3, 2, &mut rng);
            let params = GridParams::new(2, cfg.eps, 1e-4, &GridOverrides::default())?;
            let grid = StatGrid::new(p, params.clone());
            let (mut total, mut held) = (0usize, 0usize);
            for _ in 0..20 {
                let x = gaussian_vec(&mut rng, 3);
                for i in 0..=1 {
                    for j in 0..params.big_d {
                        let r = grid.desideratum2(i, j, &x)?;
                        total += 1;
                        held += usize::from(r.holds);
                    }
                }
            }
            det(name, total == held, json!({ "cells": total, "held": held }))
        }
        "stat_identities" => {
            let mut rng = stream_rng(seed, stream_id("battery/stat-identities"), 0);
            let p = random_poly(2, 2, &mut rng);
            let params = GridParams::new(2, cfg.eps, 0.05, &GridOverrides { r_bar: Some(2.0), ..Default::default() })?;
            let grid = StatGrid::new(p, params);
            let mut rows = Vec::new();
            for (t, (i, j)) in [(0, 0), (0, 3), (1, 0), (1, 2)].into_iter().enumerate() {
                let x = gaussian_vec(&mut rng, 2);
                let r = grid.identities_check(i, j, &x, trials.min(4000), seed.wrapping_add(t as u64))?;
                rows.push(r);
            }
            let pass = rows.iter().all(|r| r.pass);
            stat(name, pass, serde_json::to_value(&rows).expect("serialisable"))
        }
        "stability_mc" => {
            let mut rows = Vec::new();
            let x_id = stream_id("battery/stability-mc-x");
            for (k, e) in suite().iter().enumerate().take(4) {
                let x = gaussian_vec(&mut stream_rng(seed, x_id, k as u64), e.n);
                for (rp, l, rho) in [(1.0, 0.2, 0.5), (0.6, 0.4, 0.3)] {
                    let r = verify::stability_mc_check(&e.poly, &x, rp, l, rho, trials, seed ^ k as u64)?;
                    rows.push(json!({ "poly": e.id, "R": rp, "pass": r.pass, "p_lhs": r.forms.p_lhs,
                        "mc_lhs": r.mc_lhs.mean, "p_rhs": r.forms.p_rhs, "mc_rhs": r.mc_rhs.mean }));
                }
            }
            let pass = rows.iter().all(|r| r["pass"] == json!(true));
            stat(name, pass, Value::Array(rows))
        }
        "hypercontractivity" => per_poly(name, &suite(), |e| hyperlab::hypercontractivity_check(&e.poly, trials, seed))?,
        "two_vs_one_norm" => per_poly(name, &suite(), |e| Ok(hyperlab::two_vs_one_norm_check(&e.poly, trials, seed)))?,
        "tail_bound" => per_poly(name, &suite(), |e| {
            let k = e.poly.degree().max(1) as f64;
            hyperlab::tail_bound_check(&e.poly, (2.0 * std::f64::consts::E).sqrt().powf(k), trials, seed)
        })?,
        "carbery_wright" => sweep_per_poly(name, &suite(), |e| hyperlab::carbery_wright_check(&e.poly, 0.1, trials, seed))?,
        "kane_lemma9" => sweep_per_poly(name, &suite(), |e| {
            let beta = 0.1;
            let d = e.poly.degree().max(1) as f64;
            let lambda = (beta / (8.0 * d * d)).powi(2);
            hyperlab::kane_lemma9_check(&e.poly, lambda, beta, trials, seed)
        })?,
        "hypermarkov" => {
            let (r, theta) = (2.0, 0.01);
            let mut rows = Vec::new();
            for (id, g) in attenuated_suite(cfg.seed, r, theta) {
                let (q, eta) = hyperlab::hypercon_exact_route(&g, r, theta).ok_or_else(|| invalid("exact route failed"))?;
                let c = hyperlab::hypermarkov_check(&g, q, eta, 0.2, trials, seed);
                rows.push(json!({ "poly": id, "pass": c.pass, "empirical": c.empirical, "bound": c.bound }));
            }
            let pass = rows.iter().all(|r| r["pass"] == json!(true));
            stat(name, pass, Value::Array(rows))
        }
        "atten_hyperconcy" => {
            let (r, theta) = (2.0, 0.01);
            let mut rows = Vec::new();
            for (id, g) in attenuated_suite(cfg.seed, r, theta) {
                let c = hyperlab::atten_hyperconcy_check(&g, r, theta, 1.0, trials, seed)?;
                rows.push(json!({ "poly": id, "pass": c.pass, "empirical": c.empirical, "bound": c.bound }));
            }
            let pass = rows.iter().all(|r| r["pass"] == json!(true));
            stat(name, pass, Value::Array(rows))
        }
        "attenuated_hypercon" => {
            let (r, theta) = (2.0, 0.01);
            let mut rows = Vec::new();
            for (id, g) in attenuated_suite(cfg.seed, r, theta) {
                let applicable = is_attenuated(&g, 0, r, theta).attenuated;
                let rep = hyperlab::attenuated_hypercon_consistency(&g, r, theta, trials, seed)?;
                let pass = applicable && rep.as_ref().is_some_and(|h| h.holds);
                rows.push(json!({ "poly": id, "pass": pass, "report": rep }));
            }
            let pass = rows.iter().all(|r| r["pass"] == json!(true));
            stat(name, pass, Value::Array(rows))
        }
        "local_hyperconc" => {
            let rep = local_hyperconc_suite(seed, 10, 500)?;
            let pass = rep.iter().all(|r| r.pass);
            stat(name, pass, serde_json::to_value(&rep).expect("serialisable"))
        }
        "derivative_ratio" => {
            sweep_per_poly(name, &suite(), |e| hyperlab::derivative_ratio_experiment(&e.poly, cfg.eps, trials.min(2000), seed))?
        }
        "retention_attrition" => {
            let mut rows = Vec::new();
            for e in suite().iter().filter(|e| e.d >= 2).take(5) {
                let s = PolySampler::dirac(e.poly.clone());
                let r = hyperlab::retention_attrition_experiment(&s, 1, 1.0, 1e-3, 0.1, trials.min(2000), 1, seed)?;
                rows.push(json!({ "poly": e.id, "pass": r.retention.pass && r.attrition.pass,
                    "retention_c": r.retention.smallest_passing, "attrition_c": r.attrition.smallest_passing }));
            }
            let pass = rows.iter().all(|r| r["pass"] == json!(true));
            stat(name, pass, Value::Array(rows))
        }
        "fooling_small" => {
            let entries: Vec<SuiteEntry> = suite().into_iter().step_by(4).collect();
            let fc = FoolingConfig {
                eps: cfg.eps,
                samples: trials,
                seed,
                overrides: cfg.fooling.clone(),
                n_gen: None,
            };
            let rep = fool(&entries, &fc)?;
            stat(name, rep.pass, serde_json::to_value(&rep.rows).expect("serialisable"))
        }
        "seed_accounting" => {
            let p = crate::prg::choose_params(8, 2, cfg.eps, &cfg.fooling)?;
            let spec = KWiseSpec::new(p.k_indep, p.n as u64, 2 * p.word_bits)?;
            let per_block = crate::kwise::seed_length(&spec);
            let pass = per_block == p.seed_bits_per_block && p.seed_bits_total == per_block * p.blocks;
            det(name, pass, serde_json::to_value(&p).expect("serialisable"))
        }
        "box_muller" => {
            let words: Vec<u64> = (0..64u64).map(|i| i * 997 % 256).collect();
            let g = crate::kwise::to_near_gaussian(&words, 8)?;
            let (a, b) = crate::kwise::box_muller(1.0, 0.25);
            let pass = g.iter().all(|v| v.is_finite()) && a.abs() < 1e-15 && b.abs() < 1e-15;
            det(name, pass, json!({ "values": g.len() }))
        }
        _ => return Err(invalid(format!("unknown check '{name}'"))),
    })
}

fn per_poly(
    name: &str,
    suite: &[SuiteEntry],
    f: impl Fn(&SuiteEntry) -> Result<hyperlab::BoundCheck>,
) -> Result<CheckResult> {
    let mut rows = Vec::new();
    for e in suite {
        let c = f(e)?;
        rows.push(json!({ "poly": e.id, "pass": c.pass, "empirical": c.empirical, "stderr": c.stderr, "bound": c.bound }));
    }
    let pass = rows.iter().all(|r| r["pass"] == json!(true));
    Ok(stat(name, pass, Value::Array(rows)))
}

fn sweep_per_poly(
    name: &str,
    suite: &[SuiteEntry],
    f: impl Fn(&SuiteEntry) -> Result<hyperlab::SweepReport>,
) -> Result<CheckResult> {
    let mut rows = Vec::new();
    for e in suite {
        let r = f(e)?;
        rows.push(json!({ "poly": e.id, "pass": r.pass, "smallest_passing_C": r.smallest_passing }));
    }
    let pass = rows.iter().all(|r| r["pass"] == json!(true));
    Ok(stat(name, pass, Value::Array(rows)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalHyperconcRow {
    pub index: usize,
    pub lambda: f64,
    pub failure_fraction: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Dirac samplers over `count` random degree-3 polynomials with `R = 2`,
/// `eps = 0.3`, `beta = 0.1` and `lambda = 0.01 eps beta / (R d^{9/2})`.
pub fn local_hyperconc_suite(seed: u64, count: usize, x_draws: usize) -> Result<Vec<LocalHyperconcRow>> {
    let (r, eps, beta, d) = (2.0, 0.3, 0.1, 3);
    let lambda = main_theorem_lambda(0.01, eps, beta, r, d);
    let id = stream_id("battery/local-hyperconc");
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, id, i as u64);
            let g = random_poly(3, d, &mut rng);
            let rep = hyperlab::local_hyperconc_experiment(
                &PolySampler::dirac(g),
                r,
                eps,
                beta,
                lambda,
                x_draws,
                1,
                seed.wrapping_add(i as u64),
            )?;
            Ok(LocalHyperconcRow {
                index: i,
                lambda,
                failure_fraction: rep.failure_fraction,
                stderr: rep.stderr,
                pass: rep.pass,
            })
        })
        .collect()
}
