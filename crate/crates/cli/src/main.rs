//! `cbext`: mechanism analysis, tabulation, limit laws and Monte Carlo
//! experiments for branching processes conditioned on extinction.

mod mc;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cbext::extinction::{Estimate, ExtinctionKernel};
use cbext::laws::{vinf_levy_density, vq_levy_density, LawKind, LimitLaw, Transform};
use cbext::mechanism::BranchingMechanism;
use cbext::montecarlo::SimConfig;
use cbext::reference::{oracle_eval, OracleFamily, Quantity};
use cbext::scale::{PotentialMass, ScaleFunction};
use cbext::verify::verify;
use clap::{Parser, Subcommand, ValueEnum};

use output::{num, sha256_hex, Sink, Table};

#[derive(Debug, Parser)]
#[command(name = "cbext", version, about = "Branching processes conditioned on extinction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Mechanism config (JSON).
    #[arg(long, global = true)]
    mech: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Sample size for `mc`, grid size for `scale-table` and `potential`.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Directory for CSV/JSON outputs and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Relative tolerance of the extinction kernel.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Monte Carlo worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Qsd,
    Yaglom,
    Mus,
    Ws,
    Vq,
    Vinf,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Classification and integral conditions.
    Info,
    /// Runs the self-check gates; exit 1 if any fails.
    Verify,
    /// `φ(λ) = ∫_λ^∞ du/ψ(u)` with a quadrature error estimate.
    Phi {
        #[arg(long, value_delimiter = ',', required = true)]
        lambda: Vec<f64>,
    },
    /// Inverse of `φ`.
    Varphi {
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
    },
    /// `u_t(λ) = varphi(t + φ(λ))` on the product grid.
    Ut {
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        lambda: Vec<f64>,
    },
    /// Law of the extinction time from `x`.
    Extinction {
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
    },
    /// `W`, `W'` and the stationary density on an even grid.
    ScaleTable {
        #[arg(long, default_value_t = 0.1)]
        xmin: f64,
        #[arg(long, default_value_t = 10.0)]
        xmax: f64,
        /// Use the inverted transform even when a closed form is known.
        #[arg(long)]
        inversion: bool,
    },
    /// Potential density `g(x, y)` on an even `y` grid, plus `E_x[ζ]`.
    Potential {
        #[arg(long)]
        x: f64,
        #[arg(long)]
        ymax: Option<f64>,
    },
    /// Transform (and density where known) of a limit law; the density
    /// column is evaluated at `x` equal to the grid value.
    Law {
        #[arg(long)]
        kind: Kind,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        lambda_grid: Vec<f64>,
    },
    /// `v_q(x)` of the Lévy–Khintchine triplet of `V_q` (`--q inf` for `V_∞`).
    LevyTriplet {
        #[arg(long)]
        q: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1,2,4,8")]
        x_grid: Vec<f64>,
    },
    /// Monte Carlo experiment; prints the JSON result.
    Mc(mc::McArgs),
    /// Closed-form values for the oracle families.
    Oracle {
        /// quadratic, linear_plus_quadratic or stable(beta)
        #[arg(long)]
        family: String,
        #[arg(long)]
        quantity: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        args: Vec<f64>,
    },
}

/// `println!` that stops quietly when stdout is closed early (e.g. `| head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Bad input: exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Gate or estimator failure already reported: exit code 1.
#[derive(Debug)]
struct Failed;

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("one or more gates failed")
    }
}

impl std::error::Error for Failed {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<cbext::Error>() {
        Some(c) if c.is_config() => 2,
        _ => 1,
    }
}

struct Loaded {
    mech: Arc<BranchingMechanism>,
    hash: String,
}

fn load(cli: &Cli) -> Result<Loaded> {
    let Some(path) = &cli.mech else {
        return Err(ConfigError("--mech PATH is required for this command".into()).into());
    };
    let bytes = fs::read(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| ConfigError(format!("{} is not UTF-8", path.display())))?;
    let mech = BranchingMechanism::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
    Ok(Loaded { mech: Arc::new(mech), hash: sha256_hex(&bytes) })
}

fn kernel(cli: &Cli, l: &Loaded) -> Result<Arc<ExtinctionKernel>> {
    let k = match cli.tol {
        Some(t) if !(t > 0.0 && t < 1e-2) => bail!(ConfigError(format!("--tol must lie in (0, 1e-2), got {t}"))),
        Some(t) => ExtinctionKernel::with_tol(l.mech.clone(), t)?,
        None => ExtinctionKernel::new(l.mech.clone())?,
    };
    Ok(Arc::new(k))
}

fn grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) || n < 2 {
        bail!(ConfigError(format!("grid needs lo < hi and n >= 2, got [{lo}, {hi}], n = {n}")));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Prints a table to stdout, or writes it when `--out` is set.
fn emit(sink: &mut Sink, name: &str, table: &Table) -> Result<()> {
    let csv = table.to_csv();
    if sink.enabled() {
        sink.write(name, &csv)?;
        say!("wrote {name}");
    } else {
        say!("{}", csv.trim_end());
    }
    Ok(())
}

fn estimate_rows(table: &mut Table, lead: &[f64], e: Estimate) {
    let mut row = lead.to_vec();
    row.extend([e.value, e.est_error]);
    table.push(row);
}

fn yes(b: bool, y: &str, n: &str) -> String {
    if b {
        y.into()
    } else {
        n.into()
    }
}

fn info(cli: &Cli, sink: &mut Sink) -> Result<Option<String>> {
    let l = load(cli)?;
    let m = &l.mech;
    let class = m.classify()?;
    let ints = m.integrals()?;
    let crit = class.criticality.to_string();
    let mut verdicts = vec![crit, yes(class.grey_holds, "Grey holds", "Grey fails")];
    if class.grey_holds {
        verdicts.push(yes(class.potential_finite, "E_x[ζ] finite", "E_x[ζ] infinite"));
        if m.alpha() > 0.0 {
            verdicts.push(yes(class.xlogx_holds, "xlogx holds", "xlogx fails"));
        }
    }
    say!("{}", verdicts.join("; "));
    say!("gamma = {} (largest root of psi)", m.gamma());
    say!("alpha = {}, sigma2 = {}", m.alpha(), m.sigma2());
    let show = |v: Option<f64>| v.map_or_else(|| "divergent".to_string(), num);
    say!("int_1^inf dl/psi       = {}", show(ints.grey));
    say!("int_0^1 u/psi(u) du    = {}", show(ints.potential));
    say!("int_1^inf r ln r pi(dr) = {}", show(ints.xlogx));
    say!("growth exponent        = {}", num(ints.growth_exponent));
    if sink.enabled() {
        let report = serde_json::json!({ "class": class, "integrals": ints, "summary": verdicts.join("; ") });
        sink.write("info.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(Some(l.hash))
}

fn run(cli: &Cli) -> Result<()> {
    let mut sink = Sink::new(cli.out.as_deref())?;
    let mut seed = None;
    let hash = match &cli.cmd {
        Cmd::Info => info(cli, &mut sink)?,
        Cmd::Verify => {
            let l = load(cli)?;
            let k = kernel(cli, &l)?;
            let report = verify(k);
            say!("{:<34} {:>11} {:>9}  status", "gate", "measured", "threshold");
            for g in &report.gates {
                say!("{g}");
            }
            sink.write("verify.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
            sink.finish(Some(l.hash), None)?;
            if !report.all_pass() {
                for g in report.failures() {
                    let measured = g.measured.map_or_else(|| "no value".into(), num);
                    eprintln!("gate failed: {} (measured {measured}, threshold {})", g.name, num(g.threshold));
                }
                return Err(Failed.into());
            }
            return Ok(());
        }
        Cmd::Phi { lambda } => {
            let l = load(cli)?;
            let k = kernel(cli, &l)?;
            let mut t = Table::new(&["lambda", "phi", "est_error"]);
            for &x in lambda {
                estimate_rows(&mut t, &[x], k.phi_estimate(x)?);
            }
            emit(&mut sink, "phi.csv", &t)?;
            Some(l.hash)
        }
        Cmd::Varphi { t: ts } => {
            let l = load(cli)?;
            let k = kernel(cli, &l)?;
            let mut t = Table::new(&["t", "varphi", "est_error"]);
            for &x in ts {
                estimate_rows(&mut t, &[x], k.varphi_estimate(x)?);
            }
            emit(&mut sink, "varphi.csv", &t)?;
            Some(l.hash)
        }
        Cmd::Ut { t: ts, lambda } => {
            let l = load(cli)?;
            let k = kernel(cli, &l)?;
            let mut t = Table::new(&["t", "lambda", "u_t", "est_error"]);
            for &s in ts {
                for &x in lambda {
                    estimate_rows(&mut t, &[s, x], k.u_t_estimate(s, x)?);
                }
            }
            emit(&mut sink, "ut.csv", &t)?;
            Some(l.hash)
        }
        Cmd::Extinction { x, t: ts } => {
            let l = load(cli)?;
            let k = kernel(cli, &l)?;
            let mut t = Table::new(&["t", "cdf", "est_error", "pdf"]);
            for &s in ts {
                let c = k.extinction_cdf_estimate(*x, s)?;
                t.push(vec![s, c.value, c.est_error, k.extinction_pdf(*x, s)?]);
            }
            emit(&mut sink, "extinction.csv", &t)?;
            Some(l.hash)
        }
        Cmd::ScaleTable { xmin, xmax, inversion } => {
            let l = load(cli)?;
            let sf = if *inversion {
                ScaleFunction::inversion(l.mech.clone(), cbext::inversion::DEFAULT_PRECISION)?
            } else {
                ScaleFunction::new(l.mech.clone())?
            };
            let mut t = Table::new(&["x", "W", "W_prime", "mu_density"]);
            for x in grid(*xmin, *xmax, cli.n.unwrap_or(100))? {
                t.push(vec![x, sf.w(x)?, sf.w_prime(x)?, sf.stationary_density(x)?]);
            }
            emit(&mut sink, "scale.csv", &t)?;
            Some(l.hash)
        }
        Cmd::Potential { x, ymax } => {
            let l = load(cli)?;
            let sf = ScaleFunction::new(l.mech.clone())?;
            let n = cli.n.unwrap_or(100);
            let hi = ymax.unwrap_or(3.0 * x);
            let mut t = Table::new(&["y", "g"]);
            for y in grid(hi / n as f64, hi, n)? {
                t.push(vec![y, sf.potential_density(*x, y)?]);
            }
            emit(&mut sink, "potential.csv", &t)?;
            match sf.potential_mass(*x)? {
                PotentialMass::Finite(v) => eprintln!("E_x[zeta] = {}", num(v)),
                PotentialMass::Infinite => eprintln!("E_x[zeta] = inf"),
            }
            Some(l.hash)
        }
        Cmd::Law { kind, s, q, beta, lambda_grid } => {
            let l = load(cli)?;
            let k = kernel(cli, &l)?;
            let need =
                |v: Option<f64>, flag: &str| v.ok_or_else(|| ConfigError(format!("law {kind:?} needs --{flag}")));
            let lk = match kind {
                Kind::Qsd => LawKind::Qsd { beta: need(*beta, "beta")? },
                Kind::Yaglom => LawKind::Yaglom,
                Kind::Mus => LawKind::MuS { s: need(*s, "s")? },
                Kind::Ws => LawKind::Ws { s: need(*s, "s")? },
                Kind::Vq => LawKind::Vq { q: need(*q, "q")? },
                Kind::Vinf => LawKind::Vinf,
            };
            let law = LimitLaw::new(lk, k)?;
            let with_density = law.density(1.0)?.is_some();
            let mut t = if with_density {
                Table::new(&["lambda", "transform", "density"])
            } else {
                Table::new(&["lambda", "transform"])
            };
            for &x in lambda_grid {
                let mut row = vec![x, law.lt(x)?];
                if with_density {
                    row.push(law.density(x)?.unwrap_or(f64::NAN));
                }
                t.push(row);
            }
            emit(&mut sink, "law.csv", &t)?;
            Some(l.hash)
        }
        Cmd::LevyTriplet { q, x_grid } => {
            let l = load(cli)?;
            let k = kernel(cli, &l)?;
            let sf = ScaleFunction::new(l.mech.clone())?;
            let mut t = Table::new(&["x", "v"]);
            for &x in x_grid {
                let v = if q.is_infinite() { vinf_levy_density(&sf, x)? } else { vq_levy_density(&sf, &k, *q, x)? };
                t.push(vec![x, v]);
            }
            emit(&mut sink, "levy_triplet.csv", &t)?;
            Some(l.hash)
        }
        Cmd::Mc(a) => {
            let l = load(cli)?;
            let k = kernel(cli, &l)?;
            let defaults = SimConfig::default();
            let cfg = SimConfig {
                seed: cli.seed,
                n_paths: cli.n.unwrap_or(defaults.n_paths),
                workers: cli.workers,
                horizon: a.horizon.unwrap_or(defaults.horizon),
                ..defaults
            };
            cfg.validate()?;
            seed = Some(cli.seed);
            let r = mc::run(k, a, &cfg)?;
            let json = serde_json::to_string_pretty(&r.report)? + "\n";
            say!("{}", json.trim_end());
            sink.write("result.json", &json)?;
            sink.write("ecdf.csv", &r.ecdf.to_csv())?;
            if let Some(d) = &r.decay {
                sink.write("decay.csv", &d.to_csv())?;
            }
            Some(l.hash)
        }
        Cmd::Oracle { family, quantity, args } => {
            let f: OracleFamily = family.parse()?;
            let q: Quantity = quantity.parse()?;
            let v = oracle_eval(f, q, args)?;
            say!("{}", num(v));
            None
        }
    };
    sink.finish(hash, seed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<Failed>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
