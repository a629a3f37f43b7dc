//! Acceptance criteria AC1-AC9. Each criterion prints one line; the test
//! fails at the end if any of them did.

use std::f64::consts::{E, LN_2, PI};
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cbext::extinction::ExtinctionKernel;
use cbext::inversion::DEFAULT_PRECISION;
use cbext::laws::{
    frullani_exponent, rescaled_survival_lt, reversed_limit_lt, vinf_lt, vq_laplace_exponent, vq_levy_density, vq_lt,
    yaglom_lt, GammaLaw,
};
use cbext::mechanism::{BranchingMechanism, ClosedForm, Criticality, LevyMeasure};
use cbext::montecarlo::{
    mc_fixed_time, mc_near_extinction, mc_qprocess, mc_reverse_from_extinction, McOutcome, SimConfig,
};
use cbext::scale::{normalized_transition_lt, ScaleFunction};

const MC_PATHS: usize = 100_000;
const MC_BUDGET: Duration = Duration::from_secs(120);

struct Line {
    pass: bool,
    detail: String,
}

impl Line {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn kernel(m: BranchingMechanism) -> Arc<ExtinctionKernel> {
    Arc::new(ExtinctionKernel::new(Arc::new(m)).unwrap())
}

fn lq() -> Arc<ExtinctionKernel> {
    kernel(BranchingMechanism::linear_plus_quadratic())
}

fn quad() -> Arc<ExtinctionKernel> {
    kernel(BranchingMechanism::quadratic())
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn cfg(seed: u64) -> SimConfig {
    SimConfig::default().with_seed(seed).with_paths(MC_PATHS)
}

fn ac1() -> Line {
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    let mut check = |f: &dyn Fn() -> f64, exact: f64| {
        let t0 = Instant::now();
        worst = worst.max(rel(f(), exact));
        slowest = slowest.max(t0.elapsed());
    };
    let k = lq();
    let m = k.mechanism_arc();
    let sf = ScaleFunction::new(m.clone()).unwrap();
    let sfi = ScaleFunction::inversion(m, DEFAULT_PRECISION).unwrap();
    check(&|| k.phi(1.0).unwrap(), LN_2);
    check(&|| k.varphi(LN_2).unwrap(), 1.0);
    check(&|| sf.w(1.0).unwrap(), 1.0 - 1.0 / E);
    check(&|| sfi.w(1.0).unwrap(), 1.0 - 1.0 / E);
    for l in [0.5, 1.0, 2.0] {
        check(&|| yaglom_lt(&k, l).unwrap(), 1.0 / (1.0 + l));
    }
    for (beta, gamma) in [(1.5, PI.sqrt() / 2.0), (2.0, 1.0)] {
        let m = Arc::new(BranchingMechanism::with_closed_form(ClosedForm::Stable(beta)).unwrap());
        let sf = ScaleFunction::new(m.clone()).unwrap();
        let sfi = ScaleFunction::inversion(m, DEFAULT_PRECISION).unwrap();
        for x in [0.5_f64, 1.0, 4.0] {
            let exact = x.powf(beta - 1.0) / gamma;
            check(&|| sf.w(x).unwrap(), exact);
            check(&|| sfi.w(x).unwrap(), exact);
        }
    }
    Line::new(
        worst <= 1e-6 && slowest < Duration::from_secs(1),
        format!("worst relative error {worst:.2e} (tol 1e-6), slowest {:.3} s (limit 1 s)", slowest.as_secs_f64()),
    )
}

fn ac2() -> Line {
    let mechs = [
        ("quadratic", BranchingMechanism::quadratic()),
        ("linear_plus_quadratic", BranchingMechanism::linear_plus_quadratic()),
        ("stable triplet 1.5", BranchingMechanism::stable_triplet(1.5).unwrap()),
    ];
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, m) in mechs {
        let m = Arc::new(m);
        let sf = ScaleFunction::inversion(m.clone(), DEFAULT_PRECISION).unwrap();
        let w = [0.5, 1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|&l| rel(sf.laplace_w(l).unwrap(), 1.0 / m.psi_at(l)))
            .fold(0.0, f64::max);
        worst = worst.max(w);
        parts.push(format!("{name} {w:.1e}"));
    }
    Line::new(worst <= 1e-6, format!("{} (tol 1e-6)", parts.join(", ")))
}

fn ac3() -> Line {
    let mut worst: f64 = 0.0;
    for k in [quad(), lq()] {
        for t in [0.1, 0.5, 1.0, 5.0, 20.0] {
            for l in [0.1, 0.5, 1.0, 5.0, 50.0] {
                let r = k.phi(k.u_t(t, l).unwrap()).unwrap() - t - k.phi(l).unwrap();
                worst = worst.max(r.abs());
            }
        }
    }
    Line::new(worst <= 1e-9, format!("worst residual {worst:.2e} on 5x5 grid, both families (tol 1e-9)"))
}

fn ac4() -> Line {
    // Critical: phi(1) = 1. Subcritical: 1 - e^{-phi(1)} = 1/2.
    let crit = (normalized_transition_lt(&quad(), 1.0, 1e4, 1.0).unwrap() - 1.0).abs();
    let sub = (normalized_transition_lt(&lq(), 1.0, 30.0, 1.0).unwrap() - 0.5).abs();
    Line::new(
        crit <= 2e-4 && sub <= 1e-4,
        format!("critical t=1e4: {crit:.5e} (tol 2e-4); subcritical t=30: {sub:.3e} (tol 1e-4)"),
    )
}

fn ac5() -> Line {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for k in [quad(), lq()] {
        let sf = ScaleFunction::new(k.mechanism_arc()).unwrap();
        for l in [1.0, 2.0] {
            worst = worst.max((sf.potential_laplace(50.0, l).unwrap() - k.phi(l).unwrap()).abs());
        }
    }
    let el = t0.elapsed().as_secs_f64();
    Line::new(worst <= 1e-4 && el < 5.0, format!("worst {worst:.3e} at x=50 (tol 1e-4), {el:.3} s (limit 5 s)"))
}

fn ac6() -> Line {
    let k = quad();
    let sf = ScaleFunction::new(k.mechanism_arc()).unwrap();
    let mut worst: f64 = 0.0;
    let mut vs_closed: f64 = 0.0;
    for q in [0.5, 1.0, 2.0] {
        for l in [0.5, 1.0, 2.0] {
            let fr = frullani_exponent(|x| vq_levy_density(&sf, &k, q, x), l).unwrap();
            let lq = vq_laplace_exponent(&k, q, l).unwrap();
            worst = worst.max((fr - lq).abs());
            // V_q is Gamma(2, 1/q) for the quadratic mechanism.
            vs_closed = vs_closed.max((fr - 2.0 * (q * l).ln_1p()).abs());
        }
    }
    Line::new(
        worst <= 1e-4 && vs_closed <= 1e-4,
        format!("Frullani vs l_q: {worst:.2e}; vs 2 ln(1+q lambda): {vs_closed:.2e} (tol 1e-4)"),
    )
}

struct McCheck {
    label: String,
    pass: bool,
}

fn timed(f: impl FnOnce() -> McOutcome) -> (McOutcome, f64) {
    let t0 = Instant::now();
    let out = f();
    (out, t0.elapsed().as_secs_f64())
}

fn mc_line(label: &str, est: f64, target: f64, tol: f64, secs: f64) -> McCheck {
    let err = (est - target).abs();
    let pass = err <= tol && secs <= MC_BUDGET.as_secs_f64();
    McCheck {
        label: format!(
            "{label} {est:.4} vs {target:.4} (|d|={err:.4}, tol {tol}, {secs:.1} s){}",
            if pass { "" } else { " FAIL" }
        ),
        pass,
    }
}

fn ac7() -> Line {
    let (q, l) = (quad(), lq());
    let mut checks = Vec::new();

    let (out, secs) = timed(|| mc_near_extinction(&q, 1.0, 50.0, 1.0, &cfg(1)).unwrap());
    let exp1 = GammaLaw::exponential(1.0).unwrap();
    let ks = out.sample.ks(|z| exp1.cdf(z));
    let pass = ks <= 0.015 && secs <= MC_BUDGET.as_secs_f64();
    checks.push(McCheck {
        label: format!("near-extinction KS {ks:.4} (tol 0.015, {secs:.1} s){}", if pass { "" } else { " FAIL" }),
        pass,
    });

    let (out, secs) = timed(|| mc_fixed_time(&q, 1.0, 60.0, 1.0, &cfg(2)).unwrap());
    checks.push(mc_line("fixed-time lambda^2", out.sample.laplace(1.0).unwrap().estimate, 0.25, 0.02, secs));
    let (out, secs) = timed(|| mc_fixed_time(&l, 1.0, 40.0, LN_2, &cfg(3)).unwrap());
    let target = vq_lt(&l, LN_2, 2.0).unwrap();
    checks.push(mc_line("fixed-time lambda+lambda^2", out.sample.laplace(2.0).unwrap().estimate, target, 0.02, secs));

    let (out, secs) = timed(|| mc_reverse_from_extinction(&q, 100.0, 1.0, &cfg(4)).unwrap());
    checks.push(mc_line("reverse lambda^2", out.sample.laplace(1.0).unwrap().estimate, 0.25, 0.03, secs));
    let (out, secs) = timed(|| mc_reverse_from_extinction(&l, 50.0, LN_2, &cfg(5)).unwrap());
    let est = out.sample.laplace(2.0).unwrap().estimate;
    let mut c = mc_line("reverse lambda+lambda^2", est, target, 0.03, secs);
    if !c.pass {
        let lim = reversed_limit_lt(&l, LN_2, 2.0).unwrap();
        c.label.push_str(&format!(" [large-x limit psi(v)/psi(lambda+v) = {lim:.4}]"));
    }
    checks.push(c);

    let (out, secs) = timed(|| mc_qprocess(&l, 1.0, 20.0, &cfg(6)).unwrap());
    let target = vinf_lt(&l, 1.0).unwrap();
    checks.push(mc_line("qprocess lambda+lambda^2", out.sample.laplace(1.0).unwrap().estimate, target, 0.02, secs));

    let worst = [0.5, 1.0, 2.0]
        .iter()
        .map(|&th| (rescaled_survival_lt(&q, 1.0, 1e4, th).unwrap() - 1.0 / (1.0 + th)).abs())
        .fold(0.0, f64::max);
    checks.push(McCheck {
        label: format!("rescaled analytic t=1e4 {worst:.2e} (tol 1e-3){}", if worst <= 1e-3 { "" } else { " FAIL" }),
        pass: worst <= 1e-3,
    });

    let pass = checks.iter().all(|c| c.pass);
    Line::new(pass, checks.into_iter().map(|c| c.label).collect::<Vec<_>>().join("; "))
}

fn ac8() -> Line {
    let cases = [
        ("lambda+lambda^2", BranchingMechanism::linear_plus_quadratic(), Criticality::Subcritical, true),
        ("lambda^2", BranchingMechanism::quadratic(), Criticality::Critical, false),
        (
            "stable tail r^-2.5",
            BranchingMechanism::new(0.0, 0.0, LevyMeasure::PowerLaw { c: 1.0, a: 1.5 }).unwrap(),
            Criticality::Critical,
            true,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, m, crit, finite) in cases {
        let c = m.classify().unwrap();
        let good = c.criticality == crit && c.potential_finite == finite && c.grey_holds;
        ok &= good;
        let mean = if c.potential_finite { "finite" } else { "infinite" };
        parts.push(format!("{name} -> {}, E[zeta] {mean}{}", c.criticality, if good { "" } else { " FAIL" }));
    }
    Line::new(ok, parts.join("; "))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn mc_run(workers: &str, out: &std::path::Path) -> (Vec<u8>, Vec<u8>) {
    let o = Command::new(env!("CARGO_BIN_EXE_cbext"))
        .arg("--mech")
        .arg(config("linear_plus_quadratic.json"))
        .args(["--seed", "17", "--n", "20000", "--workers", workers, "--out"])
        .arg(out)
        .args(["mc", "fixed-time", "--t", "40", "--q", "0.6931471805599453", "--lambda", "2"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (o.stdout, std::fs::read(out.join("result.json")).unwrap())
}

fn ac9() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let a = mc_run("2", &dir.path().join("a"));
    let b = mc_run("2", &dir.path().join("b"));
    let c = mc_run("1", &dir.path().join("c"));
    let same = a == b;
    Line::new(
        same,
        format!(
            "two runs with seed 17, 2 workers: stdout and result.json {}; 1 worker vs 2: {}",
            if same { "byte-identical" } else { "DIFFER" },
            if a == c { "identical" } else { "differ" }
        ),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Line);

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("AC1", "closed-form reproduction", ac1),
        ("AC2", "Laplace round trip of W", ac2),
        ("AC3", "stationarity identity", ac3),
        ("AC4", "normalized transition limit", ac4),
        ("AC5", "potential vague limit", ac5),
        ("AC6", "V_q Levy-Khintchine triplet", ac6),
        ("AC7", "Monte Carlo gates", ac7),
        ("AC8", "classification truth table", ac8),
        ("AC9", "mc determinism", ac9),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        let line = f();
        println!("{id} {} {name}: {}", if line.pass { "PASS" } else { "FAIL" }, line.detail);
        if !line.pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
