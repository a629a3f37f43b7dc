use std::collections::BTreeMap;

use anyhow::Result;
use cbext::extinction::ExtinctionKernel;
use cbext::laws::{
    rescaled_survival_lt, reversed_limit_lt, vinf_exists, vinf_lt, vq_lt, ws_lt, GammaLaw, LawKind, LimitLaw,
};
use cbext::mechanism::MechanismConfig;
use cbext::montecarlo::{
    mc_fixed_time, mc_near_extinction, mc_qprocess, mc_rescaled_survival, mc_reverse_from_extinction, Diagnostics,
    McOutcome, SimConfig,
};
use clap::{Args, ValueEnum};
use serde::Serialize;
use std::sync::Arc;

use crate::output::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    NearExtinction,
    FixedTime,
    Reverse,
    Qprocess,
    YaglomRescaled,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::NearExtinction => "near-extinction",
            Experiment::FixedTime => "fixed-time",
            Experiment::Reverse => "reverse",
            Experiment::Qprocess => "qprocess",
            Experiment::YaglomRescaled => "yaglom-rescaled",
        }
    }
}

#[derive(Debug, Args)]
pub struct McArgs {
    pub experiment: Experiment,
    /// Starting state (default 1; 100 for reverse).
    #[arg(long)]
    pub x: Option<f64>,
    /// Observation time (defaults: 50, 60, -, 20, 1e4).
    #[arg(long)]
    pub t: Option<f64>,
    /// Window length for near-extinction.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Lag before extinction for fixed-time and reverse.
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Point at which the empirical Laplace transform is reported.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Argument of the rescaled transform for yaglom-rescaled (overrides --lambda).
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Points on the empirical CDF written to ecdf.csv.
    #[arg(long, default_value_t = 200)]
    pub ecdf_points: usize,
}

#[derive(Debug, Serialize)]
pub struct DecayRow {
    pub t: f64,
    pub estimate: f64,
    pub half_width: f64,
}

#[derive(Debug, Serialize)]
pub struct McReport {
    pub experiment: &'static str,
    pub mechanism: MechanismConfig,
    pub seed: u64,
    pub n: usize,
    pub params: BTreeMap<&'static str, f64>,
    pub lambda: f64,
    pub estimate: f64,
    pub half_width: f64,
    pub ess: f64,
    /// Limit-law transforms at `lambda`, by name.
    pub targets: BTreeMap<&'static str, f64>,
    /// Kolmogorov–Smirnov distances to limit laws with a closed form.
    pub ks: BTreeMap<&'static str, f64>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<Vec<DecayRow>>,
}

pub struct McRun {
    pub report: McReport,
    pub ecdf: Table,
    pub decay: Option<Table>,
}

fn gamma_of(kind: LawKind, k: &Arc<ExtinctionKernel>) -> Result<Option<GammaLaw>> {
    Ok(LimitLaw::new(kind, k.clone())?.gamma_form()?)
}

pub fn run(k: Arc<ExtinctionKernel>, a: &McArgs, cfg: &SimConfig) -> Result<McRun> {
    let m = k.mechanism();
    let exp = a.experiment;
    let x = a.x.unwrap_or(if exp == Experiment::Reverse { 100.0 } else { 1.0 });
    let mut params = BTreeMap::from([("x", x)]);
    let mut targets = BTreeMap::new();
    let mut ks = BTreeMap::new();
    let mut lambda = a.lambda;
    let mut decay = None;
    let (out, limit): (McOutcome, Option<(&'static str, GammaLaw)>) = match exp {
        Experiment::NearExtinction => {
            let t = a.t.unwrap_or(50.0);
            params.extend([("t", t), ("s", a.s)]);
            targets.insert("w_s", ws_lt(&k, a.s, lambda)?);
            let g = gamma_of(LawKind::Ws { s: a.s }, &k)?;
            (mc_near_extinction(&k, x, t, a.s, cfg)?, g.map(|g| ("w_s", g)))
        }
        Experiment::FixedTime => {
            let t = a.t.unwrap_or(60.0);
            params.extend([("t", t), ("q", a.q)]);
            targets.insert("v_q", vq_lt(&k, a.q, lambda)?);
            let g = gamma_of(LawKind::Vq { q: a.q }, &k)?;
            (mc_fixed_time(&k, x, t, a.q, cfg)?, g.map(|g| ("v_q", g)))
        }
        Experiment::Reverse => {
            params.insert("q", a.q);
            targets.insert("v_q", vq_lt(&k, a.q, lambda)?);
            targets.insert("reversed_limit", reversed_limit_lt(&k, a.q, lambda)?);
            let g = gamma_of(LawKind::Vq { q: a.q }, &k)?;
            (mc_reverse_from_extinction(&k, x, a.q, cfg)?, g.map(|g| ("v_q", g)))
        }
        Experiment::Qprocess => {
            let t = a.t.unwrap_or(20.0);
            params.insert("t", t);
            let exists = vinf_exists(m)?;
            if exists {
                targets.insert("v_inf", vinf_lt(&k, lambda)?);
            }
            // Transform at t/16, t/8, ..., t: decays to 0 when V_∞ is degenerate.
            let mut rows = Vec::new();
            let mut table = Table::new(&["t", "estimate", "half_width"]);
            for j in (1..=4).rev() {
                let tj = t / f64::from(1u32 << j);
                let e = mc_qprocess(&k, x, tj, cfg)?.sample.laplace(lambda)?;
                table.push(vec![tj, e.estimate, e.half_width]);
                rows.push(DecayRow { t: tj, estimate: e.estimate, half_width: e.half_width });
            }
            let out = mc_qprocess(&k, x, t, cfg)?;
            let e = out.sample.laplace(lambda)?;
            table.push(vec![t, e.estimate, e.half_width]);
            rows.push(DecayRow { t, estimate: e.estimate, half_width: e.half_width });
            decay = Some((rows, table));
            let g = if exists { gamma_of(LawKind::Vinf, &k)? } else { None };
            (out, g.map(|g| ("v_inf", g)))
        }
        Experiment::YaglomRescaled => {
            let t = a.t.unwrap_or(1e4);
            lambda = a.theta.unwrap_or(a.lambda);
            params.insert("t", t);
            targets.insert("analytic", rescaled_survival_lt(&k, x, t, lambda)?);
            let b = 0.5 * m.sigma2();
            let g = if m.alpha() == 0.0 && b > 0.0 {
                targets.insert("limit", 1.0 / (1.0 + b * lambda));
                Some(("exponential", GammaLaw::exponential(1.0 / b)?))
            } else {
                None
            };
            (mc_rescaled_survival(&k, x, t, cfg)?, g)
        }
    };
    if let Some((name, g)) = limit {
        ks.insert(name, out.sample.ks(|z| g.cdf(z)));
    }
    if let Some(h) = a.horizon {
        params.insert("horizon", h);
    }
    let est = out.sample.laplace(lambda)?;
    let mut ecdf = Table::new(&["z", "cdf"]);
    for (z, f) in out.sample.ecdf(a.ecdf_points) {
        ecdf.push(vec![z, f]);
    }
    let (decay_rows, decay_table) = match decay {
        Some((r, t)) => (Some(r), Some(t)),
        None => (None, None),
    };
    let report = McReport {
        experiment: exp.name(),
        mechanism: m.config(),
        seed: cfg.seed,
        n: cfg.n_paths,
        params,
        lambda,
        estimate: est.estimate,
        half_width: est.half_width,
        ess: out.diagnostics.ess,
        targets,
        ks,
        diagnostics: out.diagnostics,
        decay: decay_rows,
    };
    Ok(McRun { report, ecdf, decay: decay_table })
}
