use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ptf_prg::battery::{check_kind, run_battery, BatteryConfig, BatteryReport, CheckKind};
use ptf_prg::fooling::{fool, FoolingConfig};
use ptf_prg::mc::{child_seed, gaussian_vec, stream_id, stream_rng};
use ptf_prg::mollifier::{mollification_error, Mollifier};
use ptf_prg::prg::{choose_params, Prg, PrgOverrides, PrgParams};
use ptf_prg::statgrid::{GridOverrides, GridParams, PolySampler, StatGrid, StatMode};
use ptf_prg::suite::{builtin_suite, random_homogeneous_ish, SuiteEntry};
use ptf_prg::HermitePoly;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "ptfprg", version, about = "PRG for polynomial threshold functions: sampling and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Dimension; defaults to the polynomial's dimension, or 4 for `gen`.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Degree bound.
    #[arg(long, global = true, default_value_t = 2)]
    d: u32,
    #[arg(long, global = true, default_value_t = 0.2)]
    eps: f64,
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Sample / trial count (subcommand-specific default).
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long = "lambda-exp", global = true)]
    lambda_exp: Option<f64>,
    #[arg(long = "c-lambda", global = true)]
    c_lambda: Option<f64>,
    #[arg(long = "k-mult", global = true)]
    k_mult: Option<u32>,
    /// Bits per uniform word.
    #[arg(long = "M", global = true)]
    word_bits: Option<u32>,
    #[arg(long = "R-bar", global = true)]
    r_bar: Option<f64>,
    /// Check names for `battery`/`verify`, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    only: Vec<String>,
    /// Print the resolved parameters and exit.
    #[arg(long = "print-params", global = true)]
    print_params: bool,
    /// Polynomial file (JSON); the builtin suite or a random polynomial otherwise.
    #[arg(long, global = true)]
    poly: Option<PathBuf>,
    /// Reverse the jigsaw inequality in `battery`/`verify`.
    #[arg(long = "inject-fault", global = true)]
    inject_fault: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Emit generator samples.
    Gen,
    /// Estimate fooling error on a polynomial or the builtin suite.
    Fool,
    /// Local hyperconcentration experiment.
    Hyperconc,
    /// Mollification error over random points.
    Mollifier,
    /// Statistics grid at random points.
    Stats,
    /// Deterministic checks only.
    Verify,
    /// All named checks.
    Battery,
}

impl Cli {
    fn prg_overrides(&self) -> PrgOverrides {
        PrgOverrides {
            lambda_exp: self.lambda_exp,
            c_lambda: self.c_lambda,
            k_mult: self.k_mult,
            word_bits: self.word_bits,
            ..Default::default()
        }
    }

    fn grid_overrides(&self) -> GridOverrides {
        GridOverrides { r_bar: self.r_bar, ..Default::default() }
    }

    fn read_poly(&self) -> Result<Option<HermitePoly>> {
        let Some(path) = &self.poly else { return Ok(None) };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let p = HermitePoly::from_json_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if p.degree() > self.d {
            bail!("polynomial has degree {} above --d {}", p.degree(), self.d);
        }
        Ok(Some(p))
    }

    /// The supplied polynomial, or a random one of degree `d` in `n` (default 3) variables.
    fn poly_or_random(&self) -> Result<HermitePoly> {
        if let Some(p) = self.read_poly()? {
            return Ok(p);
        }
        let mut rng = stream_rng(self.seed, stream_id("cli/random-poly"), 0);
        Ok(random_homogeneous_ish(self.n.unwrap_or(3), self.d, &mut rng))
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = std::env::var("PRG_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if t > 0 {
            // Fails only if a pool already exists, which cannot happen this early.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Gen => cmd_gen(cli),
        Cmd::Fool => cmd_fool(cli),
        Cmd::Hyperconc => cmd_hyperconc(cli),
        Cmd::Mollifier => cmd_mollifier(cli),
        Cmd::Stats => cmd_stats(cli),
        Cmd::Verify => cmd_battery(cli, true),
        Cmd::Battery => cmd_battery(cli, false),
    }
}

fn print_params(cli: &Cli, prg: &[PrgParams], grid: Option<&GridParams>) -> Result<ExitCode> {
    cli.emit(&pretty(&json!({ "prg": prg, "grid": grid })))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(cli: &Cli) -> Result<ExitCode> {
    let n = cli.n.unwrap_or(4);
    let params = choose_params(n, cli.d, cli.eps, &cli.prg_overrides())?;
    if cli.print_params {
        return print_params(cli, &[params], None);
    }
    let count = cli.trials.unwrap_or(10);
    let samples = Prg::new(params.clone())?.batch(child_seed(cli.seed, "gen"), count);
    let text = match cli.format {
        Format::Json => pretty(&json!({ "params": params, "samples": samples })),
        Format::Csv => {
            let mut s = format!("# params {}\n", serde_json::to_string(&params)?);
            s.push_str("index");
            for i in 0..n {
                s.push_str(&format!(",z{i}"));
            }
            s.push('\n');
            for (k, z) in samples.iter().enumerate() {
                s.push_str(&k.to_string());
                for v in z {
                    s.push_str(&format!(",{v}"));
                }
                s.push('\n');
            }
            s
        }
    };
    cli.emit(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_fool(cli: &Cli) -> Result<ExitCode> {
    let entries: Vec<SuiteEntry> = match cli.read_poly()? {
        Some(p) => vec![SuiteEntry { id: "input".into(), n: p.n(), d: p.degree(), poly: p }],
        None => builtin_suite(cli.seed),
    };
    let cfg = FoolingConfig {
        eps: cli.eps,
        samples: cli.trials.unwrap_or(200_000),
        seed: cli.seed,
        overrides: cli.prg_overrides(),
        n_gen: cli.n,
    };
    if cli.print_params {
        let n_gen = cli.n.unwrap_or_else(|| entries.iter().map(|e| e.n).max().unwrap_or(1));
        let mut ds: Vec<u32> = entries.iter().map(|e| e.d.max(1)).collect();
        ds.sort_unstable();
        ds.dedup();
        let ps = ds.iter().map(|&d| choose_params(n_gen, d, cli.eps, &cfg.overrides)).collect::<Result<Vec<_>, _>>()?;
        return print_params(cli, &ps, None);
    }
    let rep = fool(&entries, &cfg)?;
    let text = match cli.format {
        Format::Json => pretty(&serde_json::to_value(&rep)?),
        Format::Csv => {
            let mut s = String::from("poly_id,est_prg,est_true,diff,stderr,seed_bits\n");
            for r in &rep.rows {
                s.push_str(&format!("{},{},{},{},{},{}\n", r.poly_id, r.est_prg, r.est_true, r.diff, r.stderr, r.seed_bits));
            }
            s
        }
    };
    cli.emit(&text)?;
    Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_hyperconc(cli: &Cli) -> Result<ExitCode> {
    let trials = cli.trials.unwrap_or(500);
    let Some(p) = cli.read_poly()? else {
        let rows = ptf_prg::battery::local_hyperconc_suite(cli.seed, 10, trials)?;
        let pass = rows.iter().all(|r| r.pass);
        cli.emit(&pretty(&json!({ "rows": rows, "pass": pass })))?;
        return Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE });
    };
    let (r, eps, beta) = (cli.r_bar.unwrap_or(2.0), 0.3, 0.1);
    let lambda = ptf_prg::hyperlab::main_theorem_lambda(0.01, eps, beta, r, p.degree().max(1));
    let rep = ptf_prg::hyperlab::local_hyperconc_experiment(&PolySampler::dirac(p), r, eps, beta, lambda, trials, 1, cli.seed)?;
    cli.emit(&pretty(&json!({ "R": r, "eps": eps, "beta": beta, "lambda": lambda, "report": rep })))?;
    Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn grid_params(cli: &Cli, p: &HermitePoly) -> Result<(PrgParams, GridParams)> {
    let prg = choose_params(p.n(), p.degree().max(1), cli.eps, &cli.prg_overrides())?;
    let grid = GridParams::from_prg(&prg, &cli.grid_overrides())?;
    Ok((prg, grid))
}

fn cmd_mollifier(cli: &Cli) -> Result<ExitCode> {
    let p = cli.poly_or_random()?;
    let (prg, grid) = grid_params(cli, &p)?;
    if cli.print_params {
        return print_params(cli, &[prg], Some(&grid));
    }
    let m = Mollifier::new(p, grid);
    let rep = mollification_error(&m, cli.trials.unwrap_or(500), child_seed(cli.seed, "cli/mollifier"), StatMode::Exact)?;
    cli.emit(&pretty(&serde_json::to_value(&rep)?))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(cli: &Cli) -> Result<ExitCode> {
    let p = cli.poly_or_random()?;
    let (prg, params) = grid_params(cli, &p)?;
    if cli.print_params {
        return print_params(cli, &[prg], Some(&params));
    }
    let n = p.n();
    let grid = StatGrid::new(p, params);
    let id = stream_id("cli/stats-x");
    let points = cli.trials.unwrap_or(1);
    let mut rows = Vec::new();
    for t in 0..points {
        let x = gaussian_vec(&mut stream_rng(cli.seed, id, t as u64), n);
        let table = grid.table(&x, StatMode::Exact)?;
        rows.push((x, table));
    }
    let text = match cli.format {
        Format::Json => {
            let pts: Vec<Value> = rows.iter().map(|(x, t)| json!({ "x": x, "table": t })).collect();
            pretty(&json!({ "params": grid.params(), "points": pts }))
        }
        Format::Csv => {
            let mut s = String::from("i,j,x_id,value,stderr,exact\n");
            for (x_id, (_, table)) in rows.iter().enumerate() {
                for (i, row) in table.iter().enumerate() {
                    for (j, c) in row.iter().enumerate() {
                        s.push_str(&format!("{i},{j},{x_id},{},{},{}\n", c.value, c.stderr, c.exact));
                    }
                }
            }
            s
        }
    };
    cli.emit(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_battery(cli: &Cli, deterministic_only: bool) -> Result<ExitCode> {
    let mut cfg = BatteryConfig { seed: cli.seed, eps: cli.eps, inject_fault: cli.inject_fault, ..Default::default() };
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if cli.lambda_exp.is_some() || cli.k_mult.is_some() || cli.word_bits.is_some() || cli.c_lambda.is_some() {
        cfg.fooling = PrgOverrides { lambda_exp: cli.lambda_exp.or(Some(1.0)), ..cli.prg_overrides() };
    }
    cfg.only = cli.only.clone();
    if deterministic_only && cfg.only.is_empty() {
        cfg.only = deterministic_checks();
    }
    let rep: BatteryReport = run_battery(&cfg)?;
    if deterministic_only && rep.checks.iter().any(|c| c.kind != CheckKind::Deterministic) {
        bail!("`verify` runs deterministic checks only; use `battery` for the rest");
    }
    cli.emit(&pretty(&serde_json::to_value(&rep)?))?;
    Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn deterministic_checks() -> Vec<String> {
    ptf_prg::battery::CHECK_NAMES
        .iter()
        .filter(|n| check_kind(n) == Some(CheckKind::Deterministic))
        .map(|n| n.to_string())
        .collect()
}
