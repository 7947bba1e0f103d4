//! Fooling-error estimation: `E[sign p(Z)]` under the generator against
//! `E[sign p(X)]` under reference Gaussians.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::hermite::HermitePoly;
use crate::hyperlab::SIGMA_GATE;
use crate::mc::{child_seed, combined_stderr, Estimate};
use crate::mollifier::sign_of;
use crate::prg::{choose_params, reference_gaussians, Prg, PrgOverrides, PrgParams};
use crate::suite::SuiteEntry;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoolingRow {
    pub poly_id: String,
    pub n: usize,
    pub d: u32,
    pub est_prg: f64,
    pub est_true: f64,
    pub diff: f64,
    pub stderr: f64,
    pub seed_bits: u64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoolingReport {
    pub eps: f64,
    pub samples: usize,
    /// Generator parameters per degree, in increasing degree.
    pub params: Vec<PrgParams>,
    pub rows: Vec<FoolingRow>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoolingConfig {
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    pub overrides: PrgOverrides,
    /// Generator dimension; polynomials read the leading coordinates. Defaults to the largest `n`.
    pub n_gen: Option<usize>,
}

fn sign_mean(p: &HermitePoly, xs: &[Vec<f64>]) -> Estimate {
    let vals: Vec<f64> = xs.iter().map(|x| sign_of(p.eval(&x[..p.n()]).expect("dims")) as f64).collect();
    Estimate::from_samples(&vals)
}

/// Runs every entry; one generator batch per degree is shared by all entries of that degree.
pub fn fool(entries: &[SuiteEntry], cfg: &FoolingConfig) -> Result<FoolingReport> {
    if cfg.samples < 2 {
        return Err(invalid("need at least 2 samples"));
    }
    let n_max = entries.iter().map(|e| e.n).max().unwrap_or(1);
    let n_gen = cfg.n_gen.unwrap_or(n_max);
    if n_gen < n_max {
        return Err(invalid(format!("generator dimension {n_gen} is below polynomial dimension {n_max}")));
    }
    let reference = reference_gaussians(n_gen, child_seed(cfg.seed, "fool/reference"), cfg.samples);
    let mut degrees: Vec<u32> = entries.iter().map(|e| e.d.max(1)).collect();
    degrees.sort_unstable();
    degrees.dedup();
    let mut params = Vec::new();
    let mut rows: Vec<Option<FoolingRow>> = vec![None; entries.len()];
    for d in degrees {
        let p = choose_params(n_gen, d, cfg.eps, &cfg.overrides)?;
        let prg = Prg::new(p.clone())?;
        let zs = prg.batch(child_seed(cfg.seed, &format!("fool/prg/d{d}")), cfg.samples);
        for (slot, e) in rows.iter_mut().zip(entries) {
            if e.d.max(1) != d {
                continue;
            }
            let a = sign_mean(&e.poly, &zs);
            let b = sign_mean(&e.poly, &reference);
            let diff = (a.mean - b.mean).abs();
            let stderr = combined_stderr(a.stderr, b.stderr);
            *slot = Some(FoolingRow {
                poly_id: e.id.clone(),
                n: e.n,
                d: e.d,
                est_prg: a.mean,
                est_true: b.mean,
                diff,
                stderr,
                seed_bits: p.seed_bits_total,
                pass: diff <= cfg.eps + SIGMA_GATE * stderr,
            });
        }
        params.push(p);
    }
    let rows: Vec<FoolingRow> = rows.into_iter().map(|r| r.expect("every degree visited")).collect();
    Ok(FoolingReport { eps: cfg.eps, samples: cfg.samples, params, pass: rows.iter().all(|r| r.pass), rows })
}
