//! Experiment dispatch.

use std::sync::Arc;

use ncergodic::banach::{
    closure_experiment, estimate_c, stochastic_ergodic_run_with, DomainNorm, ErgodicFamily, IdentityFamily,
    LimitSource, OperatorFamily, ScaledIdentityFamily, Verdict,
};
use ncergodic::dynamics::{neveu_decompose_with, DynamicalSystem, NeveuOptions};
use ncergodic::measure::{distribution_curve, mu_curve};
use ncergodic::random::{random_hermitian, sub_rng};
use ncergodic::sequences::{besicovitch_defect, discrepancy_curve, uniform_entry_times, WeightSequence};
use ncergodic::{Execution, Operator};

use crate::config::{Experiment, ExperimentConfig, FamilyKind, NormKind, APPROXIMANT_STREAM};
use crate::csv::{format_real, CsvTable};

/// Structured-text summary written next to the CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub experiment: Experiment,
    pub verdict: &'static str,
    pub n0: Option<usize>,
    pub eps: f64,
    pub delta: f64,
    pub horizon: usize,
    pub seed: u64,
    pub failures: Vec<String>,
    pub details: Vec<(&'static str, String)>,
}

impl Report {
    pub fn to_toml(&self) -> String {
        let mut t = toml::Table::new();
        t.insert("experiment".into(), self.experiment.name().into());
        t.insert("verdict".into(), self.verdict.into());
        t.insert(
            "n0".into(),
            match self.n0 {
                Some(n) => toml::Value::Integer(n as i64),
                None => "none".into(),
            },
        );
        t.insert("eps".into(), self.eps.into());
        t.insert("delta".into(), self.delta.into());
        t.insert("horizon".into(), toml::Value::Integer(self.horizon as i64));
        t.insert(
            "seed".into(),
            match i64::try_from(self.seed) {
                Ok(v) => v.into(),
                Err(_) => self.seed.to_string().into(),
            },
        );
        t.insert(
            "failures".into(),
            toml::Value::Array(self.failures.iter().map(|f| f.as_str().into()).collect()),
        );
        let details: toml::Table = self.details.iter().map(|(k, v)| (k.to_string(), v.as_str().into())).collect();
        t.insert("details".into(), details.into());
        toml::to_string(&t).expect("reports serialize")
    }
}

pub struct Outcome {
    pub table: CsvTable,
    pub report: Report,
    /// Extra console lines (per-suite results and the like).
    pub lines: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.report.failures.is_empty()
    }
}

#[derive(Default)]
struct Checks {
    failures: Vec<String>,
}

impl Checks {
    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }
}

struct Draft {
    table: CsvTable,
    checks: Checks,
    verdict: Option<&'static str>,
    n0: Option<usize>,
    details: Vec<(&'static str, String)>,
    lines: Vec<String>,
}

impl Draft {
    fn new(header: &[&'static str]) -> Self {
        Draft {
            table: CsvTable::new(header),
            checks: Checks::default(),
            verdict: None,
            n0: None,
            details: Vec::new(),
            lines: Vec::new(),
        }
    }

    fn detail(&mut self, key: &'static str, v: impl ToString) {
        self.details.push((key, v.to_string()));
    }
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn grid(t_max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect()
}

fn source_name(s: LimitSource) -> &'static str {
    match s {
        LimitSource::ClosedForm => "closed-form",
        LimitSource::TailAverage => "tail-average",
    }
}

fn system(cfg: &ExperimentConfig) -> ncergodic::Result<(Arc<DynamicalSystem>, Operator)> {
    let alg = cfg.build_algebra()?;
    let alpha = cfg.build_automorphism(&alg)?;
    let sys = DynamicalSystem::new(&alg, alpha)?.with_indexing(cfg.params.indexing.into());
    let x = cfg.build_operator(&alg)?;
    Ok((Arc::new(sys), x))
}

/// Runs one experiment; nothing is written to disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> ncergodic::Result<Outcome> {
    let exec = Execution::default();
    let d = match cfg.experiment {
        Experiment::MuCurve => run_mu_curve(cfg)?,
        Experiment::LambdaCurve => run_lambda_curve(cfg)?,
        Experiment::Ergodic => run_ergodic(cfg)?,
        Experiment::Besicovitch => run_besicovitch(cfg)?,
        Experiment::UniformSeq => run_uniform_seq(cfg)?,
        Experiment::Discrepancy => run_discrepancy(cfg, exec)?,
        Experiment::BanachC => run_banach_c(cfg, exec)?,
        Experiment::Closure => run_closure(cfg)?,
        Experiment::Neveu => run_neveu(cfg)?,
        Experiment::PropertySuite => run_property_suite(cfg, exec)?,
    };
    let passed = d.checks.failures.is_empty();
    let report = Report {
        experiment: cfg.experiment,
        verdict: d.verdict.unwrap_or(if passed { "pass" } else { "fail" }),
        n0: d.n0,
        eps: cfg.params.eps,
        delta: cfg.params.delta,
        horizon: cfg.params.horizon,
        seed: cfg.seed,
        failures: d.checks.failures,
        details: d.details,
    };
    Ok(Outcome {
        table: d.table,
        report,
        lines: d.lines,
    })
}

fn run_mu_curve(cfg: &ExperimentConfig) -> ncergodic::Result<Draft> {
    let alg = cfg.build_algebra()?;
    let x = cfg.build_operator(&alg)?;
    let curve = mu_curve(&x)?;
    let total = alg.total_trace();
    let t_max = cfg.params.t_max.unwrap_or(total);
    let mut d = Draft::new(&["t", "value"]);
    let samples = curve.sample(&grid(t_max, cfg.params.t_points));
    for &(t, v) in &samples {
        d.table.push(vec![t.into(), v.into()]);
    }
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    d.checks.require(non_increasing(&values), || "μ_t is not non-increasing in t".into());
    d.checks.require(values[0] == curve.norm(), || format!("μ_0 = {} differs from ‖x‖∞ = {}", values[0], curve.norm()));
    if t_max >= total {
        let last = *values.last().unwrap();
        d.checks.require(last == 0.0, || format!("μ_t = {last} at t = {t_max} ≥ τ(𝟙)"));
    }
    d.detail("norm", format_real(curve.norm()));
    d.detail("total_trace", format_real(total));
    Ok(d)
}

fn run_lambda_curve(cfg: &ExperimentConfig) -> ncergodic::Result<Draft> {
    let alg = cfg.build_algebra()?;
    let x = cfg.build_operator(&alg)?;
    let norm = x.operator_norm()?;
    let curve = distribution_curve(&x)?;
    let t_max = cfg.params.t_max.unwrap_or(if norm > 0.0 { norm } else { 1.0 });
    let mut d = Draft::new(&["t", "value"]);
    let samples = curve.sample(&grid(t_max, cfg.params.t_points));
    for &(t, v) in &samples {
        d.table.push(vec![t.into(), v.into()]);
    }
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    d.checks.require(non_increasing(&values), || "λ_t is not non-increasing in t".into());
    let total = alg.total_trace();
    d.checks.require(values.iter().all(|v| *v >= 0.0 && *v <= total * (1.0 + 1e-12)), || {
        "λ_t leaves [0, τ(𝟙)]".into()
    });
    if t_max >= norm {
        let last = *values.last().unwrap();
        d.checks.require(last == 0.0, || format!("λ_t = {last} at t = {t_max} ≥ ‖x‖∞"));
    }
    d.detail("norm", format_real(norm));
    d.detail("total_trace", format_real(total));
    Ok(d)
}

fn run_ergodic(cfg: &ExperimentConfig) -> ncergodic::Result<Draft> {
    let (sys, x) = system(cfg)?;
    let beta = cfg.build_sequence()?;
    let p = &cfg.params;
    let r = stochastic_ergodic_run_with(&sys, &x, &beta, p.horizon, p.eps, p.delta, p.tail_fraction)?;
    let mut d = Draft::new(&["n", "sup_norm", "l1_norm", "mu_delta"]);
    for row in &r.rows {
        d.table.push(vec![row.n.into(), row.sup_norm.into(), row.l1_norm.into(), row.mu_delta.into()]);
    }
    d.checks.require(r.converged, || {
        format!("μ_δ(Ã_n(x) - L) < ε not reached by n = {} (ε = {}, δ = {})", p.horizon, p.eps, p.delta)
    });
    d.n0 = r.n0;
    d.detail("limit_source", source_name(r.limit_source));
    d.detail("final_mu_delta", format_real(r.rows.last().map_or(f64::NAN, |row| row.mu_delta)));
    Ok(d)
}

fn run_besicovitch(cfg: &ExperimentConfig) -> ncergodic::Result<Draft> {
    let rot = cfg.build_rotation()?;
    let beta = WeightSequence::Indicator { rotation: rot, scale: 1.0 };
    let n = cfg.params.horizon;
    let mut d = Draft::new(&["k", "defect"]);
    let mut defects = Vec::with_capacity(cfg.params.terms);
    for k in 1..=cfg.params.terms {
        let v = besicovitch_defect(&beta, &rot.fourier_approximant(k)?, n)?;
        d.table.push(vec![k.into(), v.into()]);
        defects.push(v);
    }
    d.checks.require(defects.windows(2).all(|w| w[1] < w[0]), || {
        format!("defect is not strictly decreasing in k at n = {n}")
    });
    d.detail("n", n);
    Ok(d)
}

fn run_uniform_seq(cfg: &ExperimentConfig) -> ncergodic::Result<Draft> {
    let rot = cfg.build_rotation()?;
    let e = uniform_entry_times(&rot, cfg.params.count)?;
    let mut d = Draft::new(&["j", "u_j"]);
    for (j, u) in e.times.iter().enumerate() {
        d.table.push(vec![j.into(), (*u).into()]);
    }
    d.checks.require(e.times.windows(2).all(|w| w[0] < w[1]), || "entry times are not strictly increasing".into());
    d.checks.require(e.times.iter().all(|&u| rot.visits(u)), || "an entry time misses Y".into());
    d.detail("density", format_real(rot.visit_density(cfg.params.horizon as u64)));
    d.detail("measure", format_real(rot.measure()));
    if let Some((p, q)) = e.rational {
        d.detail("diagnostic_only", format!("theta = {p}/{q} is rational: not uniquely ergodic"));
    }
    Ok(d)
}

fn run_discrepancy(cfg: &ExperimentConfig, exec: Execution) -> ncergodic::Result<Draft> {
    let p = &cfg.params;
    let mut ns: Vec<usize> = (p.n_step..=p.horizon).step_by(p.n_step).collect();
    if ns.is_empty() {
        ns.push(p.horizon);
    }
    let values = discrepancy_curve(cfg.rotation.theta, &ns, exec)?;
    let mut d = Draft::new(&["n", "D_star"]);
    for (n, v) in ns.iter().zip(&values) {
        d.table.push(vec![(*n).into(), (*v).into()]);
    }
    d.checks.require(
        ns.iter().zip(&values).all(|(n, v)| *v >= 0.5 / *n as f64 - 1e-15 && *v <= 1.0),
        || "a discrepancy value leaves [1/(2n), 1]".into(),
    );
    d.detail("final", format_real(*values.last().unwrap()));
    Ok(d)
}

fn domain_norm(k: NormKind) -> DomainNorm {
    match k {
        NormKind::Trace => DomainNorm::Trace,
        NormKind::Operator => DomainNorm::Operator,
    }
}

fn run_banach_c(cfg: &ExperimentConfig, exec: Execution) -> ncergodic::Result<Draft> {
    let p = &cfg.params;
    let (sys, _) = system(cfg)?;
    let alg = sys.algebra().clone();
    let norm = domain_norm(p.norm);
    let family: Box<dyn OperatorFamily> = match p.family {
        FamilyKind::Predual | FamilyKind::Forward => Box::new(ErgodicFamily {
            sys,
            beta: cfg.build_sequence()?,
            predual: p.family == FamilyKind::Predual,
            horizon: p.horizon,
            norm,
        }),
        FamilyKind::Identity => Box::new(IdentityFamily { alg, horizon: p.horizon, norm }),
        FamilyKind::ScaledIdentity => Box::new(ScaledIdentityFamily { alg, horizon: p.horizon, norm }),
    };
    let c = estimate_c(family.as_ref(), p.samples, &p.lambdas, cfg.seed, exec)?;
    let mut d = Draft::new(&["lambda", "C_empirical", "bound_1_over_lambda"]);
    for (l, v) in c.lambdas.iter().zip(&c.values) {
        d.table.push(vec![(*l).into(), (*v).into(), (1.0 / l).into()]);
    }
    d.checks.require(c.chebyshev_violations.is_empty(), || {
        let at: Vec<String> = c.chebyshev_violations.iter().map(|&i| format_real(c.lambdas[i])).collect();
        format!("C(λ) > 1/λ at λ = {}", at.join(", "))
    });
    d.checks.require(!c.uniform_boundedness_violated, || "uniform boundedness violated".into());
    d.checks.require(c.is_non_increasing(), || "C(λ) is not non-increasing".into());
    d.detail("family", c.description.clone());
    d.detail("samples", c.samples);
    d.detail("summary", c.summary());
    Ok(d)
}

fn run_closure(cfg: &ExperimentConfig) -> ncergodic::Result<Draft> {
    let p = &cfg.params;
    let (sys, b) = system(cfg)?;
    let alg = sys.algebra().clone();
    let family = ErgodicFamily {
        sys,
        beta: cfg.build_sequence()?,
        predual: true,
        horizon: p.horizon,
        norm: domain_norm(p.norm),
    };
    let y = random_hermitian(&alg, &mut sub_rng(cfg.seed, APPROXIMANT_STREAM));
    let approximants: Vec<Operator> = (1..=p.approximants as i32)
        .map(|k| &b + &y.scale_real(p.ratio.powi(k)))
        .collect();
    let r = closure_experiment(&family, &b, &approximants, p.eps, p.delta)?;
    let mut d = Draft::new(&["n", "mu_delta"]);
    for (i, m) in r.mu_delta.iter().enumerate() {
        d.table.push(vec![(i + 1).into(), (*m).into()]);
    }
    d.checks.require(r.verdict == Verdict::Pass, || format!("{}: {}", r.verdict.as_str(), r.reason));
    d.verdict = Some(r.verdict.as_str());
    d.n0 = r.measured_n0;
    d.detail("reason", r.reason.clone());
    d.detail("j_star", r.j_star);
    d.detail("part_level", format_real(r.part_level));
    d.detail("chosen", r.chosen.map_or("none".into(), |k| k.to_string()));
    d.detail("part1", format_real(r.part1));
    d.detail("part2_n0", r.part2_n0.map_or("none".into(), |k| k.to_string()));
    d.detail("part3", format_real(r.part3));
    d.detail("predicted_n0", r.predicted_n0.map_or("none".into(), |k| k.to_string()));
    d.detail("limit_source", source_name(r.limit_source));
    if let Some((n, v)) = r.first_violation {
        d.detail("last_violation", format!("n = {n}, μ_δ = {}", format_real(v)));
    }
    Ok(d)
}

fn run_neveu(cfg: &ExperimentConfig) -> ncergodic::Result<Draft> {
    let p = &cfg.params;
    let (sys, phi) = system(cfg)?;
    let opts = NeveuOptions {
        support_tol: p.support_tol,
        wandering_tol: p.wandering_tol,
    };
    let r = neveu_decompose_with(&sys, &phi, p.horizon as u64, opts)?;
    let mut d = Draft::new(&["n", "sup_norm"]);
    if let Some(w) = &r.wandering {
        for (i, v) in w.curve.iter().enumerate() {
            d.table.push(vec![(i + 1).into(), (*v).into()]);
        }
    }
    if !r.e2.is_zero() {
        let ok = r.h.is_some() && r.wandering.as_ref().is_some_and(|w| w.weakly_wandering);
        d.checks.require(ok, || "e₂ ≠ 0 but no weakly wandering h was found".into());
    }
    d.detail("e1_trace", format_real(r.e1.trace()));
    d.detail("e2_trace", format_real(r.e2.trace()));
    d.detail("renormalized", r.renormalized);
    d.detail("invariance_residual", format_real(r.invariance_residual));
    d.detail("h_found", r.h.is_some());
    Ok(d)
}

fn run_property_suite(cfg: &ExperimentConfig, exec: Execution) -> ncergodic::Result<Draft> {
    let mut d = Draft::new(&["suite", "trials", "violations", "max_excess"]);
    for s in cfg.suites() {
        let trials = cfg.params.trials.unwrap_or(s.default_trials());
        let r = s.run(trials, cfg.seed, exec)?;
        d.table.push(vec![r.name.into(), r.trials.into(), r.violations.into(), r.max_excess.into()]);
        d.lines.push(r.to_string());
        d.checks.require(r.passed(), || format!("{}: {} of {} trials violated", r.name, r.violations, r.trials));
    }
    Ok(d)
}
