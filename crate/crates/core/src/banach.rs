//! Empirical harness for the stochastic Banach principle.
//!
//! A family of linear maps `A_n` is probed on random unit-ball elements to
//! estimate `C(λ) = sup_n sup_b τ({|A_n(b)| > λ‖b‖})`, closure of the set of
//! stochastically convergent elements is exercised through the triple split
//! `A_n(b) - x = A_n(b - b_k) + (A_n(b_k) - x_k) + (x_k - x)`, and whole
//! weighted ergodic runs are checked for convergence in measure.
//!
//! Everything here is finite: curves are empirical lower estimates and the
//! reports can certify or falsify inequalities on the sampled data only.

use std::sync::Arc;

use crate::algebra::{Operator, TracialAlgebra};
use crate::dynamics::{DynamicalSystem, Indexing};
use crate::error::{Error, Result};
use crate::linalg::{C64, ONE};
use crate::measure::{converges_in_measure, ConvergenceTracker};
use crate::par::Execution;
use crate::random::{random_hermitian, sub_rng};
use crate::sequences::WeightSequence;

/// Slack allowed when comparing against `1/λ`.
pub const CHEBYSHEV_SLACK: f64 = 1e-9;
/// Fraction of the horizon averaged when a limit has to be estimated.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainNorm {
    Operator,
    Trace,
}

impl DomainNorm {
    pub fn of(self, x: &Operator) -> Result<f64> {
        match self {
            DomainNorm::Operator => x.operator_norm(),
            DomainNorm::Trace => x.trace_norm(),
        }
    }
}

/// Linear maps `A_1, …, A_N` on one algebra.
pub trait OperatorFamily: Sync {
    fn description(&self) -> String;

    /// `N`, the largest index probed.
    fn horizon(&self) -> usize;

    fn domain_norm(&self) -> DomainNorm;

    fn algebra(&self) -> &Arc<TracialAlgebra>;

    fn average(&self, n: usize, b: &Operator) -> Result<Operator>;

    /// Calls `visit(n, A_n(b))` for `n = 1..=horizon` in order. Families with
    /// a running-sum structure override this to avoid quadratic work.
    fn run(&self, b: &Operator, horizon: usize, visit: &mut dyn FnMut(usize, &Operator) -> Result<()>) -> Result<()> {
        for n in 1..=horizon {
            visit(n, &self.average(n, b)?)?;
        }
        Ok(())
    }

    /// `lim_n A_n(b)` in closed form, if the family knows it.
    fn limit(&self, _b: &Operator) -> Result<Option<Operator>> {
        Ok(None)
    }
}

/// `A_n = id`.
#[derive(Clone, Debug)]
pub struct IdentityFamily {
    pub alg: Arc<TracialAlgebra>,
    pub horizon: usize,
    pub norm: DomainNorm,
}

impl OperatorFamily for IdentityFamily {
    fn description(&self) -> String {
        "A_n = id".into()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn domain_norm(&self) -> DomainNorm {
        self.norm
    }
    fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.alg
    }
    fn average(&self, _n: usize, b: &Operator) -> Result<Operator> {
        Ok(b.clone())
    }
    fn limit(&self, b: &Operator) -> Result<Option<Operator>> {
        Ok(Some(b.clone()))
    }
}

/// `A_n = n · id`, which is not uniformly bounded in measure.
#[derive(Clone, Debug)]
pub struct ScaledIdentityFamily {
    pub alg: Arc<TracialAlgebra>,
    pub horizon: usize,
    pub norm: DomainNorm,
}

impl OperatorFamily for ScaledIdentityFamily {
    fn description(&self) -> String {
        "A_n = n·id".into()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn domain_norm(&self) -> DomainNorm {
        self.norm
    }
    fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.alg
    }
    fn average(&self, n: usize, b: &Operator) -> Result<Operator> {
        Ok(b.scale_real(n as f64))
    }
}

/// Weighted ergodic averages of a dynamical system:
/// `(1/n) Σ_{j<n} β_j α′^j` when `predual`, else `(1/n) Σ β_j α^j`.
#[derive(Clone, Debug)]
pub struct ErgodicFamily {
    pub sys: Arc<DynamicalSystem>,
    pub beta: WeightSequence,
    pub predual: bool,
    pub horizon: usize,
    pub norm: DomainNorm,
}

impl ErgodicFamily {
    /// `A′_n` with unit weights on the trace-norm ball.
    pub fn predual_averages(sys: Arc<DynamicalSystem>, horizon: usize) -> Self {
        ErgodicFamily {
            sys,
            beta: WeightSequence::ones(),
            predual: true,
            horizon,
            norm: DomainNorm::Trace,
        }
    }
}

impl OperatorFamily for ErgodicFamily {
    fn description(&self) -> String {
        format!(
            "{} averages with weights {:?} on {}",
            if self.predual { "predual" } else { "forward" },
            self.beta,
            self.sys.algebra()
        )
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn domain_norm(&self) -> DomainNorm {
        self.norm
    }
    fn algebra(&self) -> &Arc<TracialAlgebra> {
        self.sys.algebra()
    }

    fn average(&self, n: usize, b: &Operator) -> Result<Operator> {
        if self.predual {
            self.sys.weighted_average(b, &self.beta, n)
        } else if self.beta == WeightSequence::ones() {
            self.sys.ergodic_average(b, n)
        } else {
            let mut out = None;
            self.run(b, n, &mut |m, a| {
                if m == n {
                    out = Some(a.clone());
                }
                Ok(())
            })?;
            Ok(out.expect("run visits n"))
        }
    }

    fn run(&self, b: &Operator, horizon: usize, visit: &mut dyn FnMut(usize, &Operator) -> Result<()>) -> Result<()> {
        let mut sum = Operator::zero(self.algebra());
        let skip_first = !self.predual && self.sys.indexing() == Indexing::FromOne;
        for (j, y) in self.sys.orbit(b, self.predual)?.enumerate().take(horizon) {
            let y = y?;
            let w = self.beta.value(j)?;
            if !(skip_first && j == 0) && w != C64::new(0.0, 0.0) {
                sum.axpy(w, &y);
            }
            visit(j + 1, &sum.scale_real(1.0 / (j + 1) as f64))?;
        }
        Ok(())
    }

    fn limit(&self, b: &Operator) -> Result<Option<Operator>> {
        if self.sys.algebra().window_spec().is_some() {
            return Ok(None);
        }
        let Some(sf) = self.sys.spectral_form()? else {
            return Ok(None);
        };
        if self.predual {
            sf.limit(b, &self.beta)
        } else {
            // α^j = α′^{-j}: conjugate the resonance variable
            let mut missing = false;
            let out = sf.transform(b, |z| {
                Ok(self.beta.limit_coefficient(z.conj()).unwrap_or_else(|| {
                    missing = true;
                    C64::new(0.0, 0.0)
                }))
            })?;
            Ok((!missing).then_some(out))
        }
    }
}

/// Result of [`chebyshev_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChebyshevCheck {
    pub holds: bool,
    /// `τ({|a| > λ})`
    pub lhs: f64,
    /// `τ(|a|)/λ`
    pub rhs: f64,
    /// `rhs - lhs`
    pub slack: f64,
}

/// `τ({|a| > λ}) ≤ τ(|a|)/λ`.
pub fn chebyshev_check(a: &Operator, lambda: f64) -> Result<ChebyshevCheck> {
    if !(lambda > 0.0) {
        return Err(Error::arg("lambda", format!("must be > 0, got {lambda}")));
    }
    let s = a.singular_spectrum()?;
    let lhs = s.lambda(lambda);
    let rhs = s.trace() / lambda;
    Ok(ChebyshevCheck {
        holds: lhs <= rhs + CHEBYSHEV_SLACK,
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}

/// Empirical `C(λ)` over a sampled unit ball.
#[derive(Clone, Debug)]
pub struct CCurve {
    pub description: String,
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub horizon: usize,
    pub domain_norm: DomainNorm,
    /// Grid indices with `C(λ) > 1/λ` (meaningful for trace-norm balls).
    pub chebyshev_violations: Vec<usize>,
    /// The curve shows no decay: `C(λ_max) ≥ C(λ_min) > 0`.
    pub uniform_boundedness_violated: bool,
}

impl CCurve {
    pub fn is_non_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn summary(&self) -> String {
        if self.uniform_boundedness_violated {
            format!(
                "uniform boundedness violated: C(λ) does not decay over λ ∈ [{}, {}] for {}",
                self.lambdas[0],
                self.lambdas[self.lambdas.len() - 1],
                self.description
            )
        } else if !self.chebyshev_violations.is_empty() {
            format!("C(λ) exceeds 1/λ at {} grid points", self.chebyshev_violations.len())
        } else {
            "empirical C(λ) decays; this is a lower estimate on sampled data, not a proof".into()
        }
    }
}

/// Gaussian Hermitian sample normalized to `‖b‖ = 1` in the family's norm.
pub fn unit_ball_sample(family: &dyn OperatorFamily, seed: u64, index: u64) -> Result<Operator> {
    let mut rng = sub_rng(seed, index);
    loop {
        let b = random_hermitian(family.algebra(), &mut rng);
        let nb = family.domain_norm().of(&b)?;
        if nb > 0.0 {
            return Ok(b.scale_real(1.0 / nb));
        }
    }
}

/// `C(λ) ≈ max_{b, n ≤ N} τ({|A_n(b)| > λ‖b‖})` over `samples` unit-ball
/// elements. Sample `i` uses its own generator stream, so the result is the
/// same for every execution strategy.
pub fn estimate_c(
    family: &dyn OperatorFamily,
    samples: usize,
    lambdas: &[f64],
    seed: u64,
    exec: Execution,
) -> Result<CCurve> {
    if lambdas.is_empty() {
        return Err(Error::arg("lambdas", "grid is empty"));
    }
    if samples == 0 {
        return Err(Error::arg("samples", "must be ≥ 1"));
    }
    if family.horizon() == 0 {
        return Err(Error::arg("horizon", "must be ≥ 1"));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::arg("lambdas", format!("grid values must be > 0, got {l}")));
    }
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);

    let per_sample = exec.map(samples, |i| -> Result<Vec<f64>> {
        let b = unit_ball_sample(family, seed, i as u64)?;
        let mut best = vec![0.0; grid.len()];
        family.run(&b, family.horizon(), &mut |_, a| {
            let s = a.singular_spectrum()?;
            for (k, &l) in grid.iter().enumerate() {
                best[k] = f64::max(best[k], s.lambda(l));
            }
            Ok(())
        })?;
        Ok(best)
    });
    let mut values = vec![0.0; grid.len()];
    for s in per_sample {
        for (v, b) in values.iter_mut().zip(s?) {
            *v = f64::max(*v, b);
        }
    }

    let chebyshev_violations = grid
        .iter()
        .zip(&values)
        .enumerate()
        .filter(|(_, (l, v))| **v > 1.0 / **l + CHEBYSHEV_SLACK)
        .map(|(k, _)| k)
        .collect();
    let first = values[0];
    let last = values[values.len() - 1];
    let uniform_boundedness_violated = grid.len() > 1 && first > 0.0 && last >= first;

    Ok(CCurve {
        description: family.description(),
        lambdas: grid,
        values,
        samples,
        seed,
        horizon: family.horizon(),
        domain_norm: family.domain_norm(),
        chebyshev_violations,
        uniform_boundedness_violated,
    })
}

/// `A_n(b)` for `n = 1..=N`, collected.
fn trajectory(family: &dyn OperatorFamily, b: &Operator) -> Result<Vec<Operator>> {
    let mut out = Vec::with_capacity(family.horizon());
    family.run(b, family.horizon(), &mut |_, a| {
        out.push(a.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Closed-form limit if known, else the mean over the last `fraction` of the trajectory.
fn limit_of(family: &dyn OperatorFamily, b: &Operator, traj: &[Operator], fraction: f64) -> Result<(Operator, LimitSource)> {
    if let Some(l) = family.limit(b)? {
        return Ok((l, LimitSource::ClosedForm));
    }
    Ok((tail_mean(family.algebra(), traj, fraction), LimitSource::TailAverage))
}

fn tail_mean(alg: &Arc<TracialAlgebra>, traj: &[Operator], fraction: f64) -> Operator {
    let k = ((traj.len() as f64 * fraction).ceil() as usize).clamp(1, traj.len());
    let mut s = Operator::zero(alg);
    for a in &traj[traj.len() - k..] {
        s.axpy(ONE, a);
    }
    s.scale_real(1.0 / k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitSource {
    ClosedForm,
    TailAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// A precondition did not hold; nothing was asserted.
    Declined,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Declined => "declined",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClosureReport {
    pub verdict: Verdict,
    pub reason: String,
    pub eps: f64,
    pub delta: f64,
    pub horizon: usize,
    /// `j*`: smallest `j` with `3·2^{-j} < min(ε, δ)`.
    pub j_star: u32,
    /// `2^{-j*}`, the size and trace budget of the approximation and limit parts.
    pub part_level: f64,
    /// `‖b - b_k‖` in the family's domain norm.
    pub approximant_distances: Vec<f64>,
    /// Approximant used for the split (0-based).
    pub chosen: Option<usize>,
    /// `max_n μ_p(A_n(b - b_k))`
    pub part1: f64,
    /// Index from which `μ_{δ/3}(A_n(b_k) - x_k) < ε/3`.
    pub part2_n0: Option<usize>,
    /// `μ_p(x_k - x)`
    pub part3: f64,
    pub predicted_n0: Option<usize>,
    pub measured_n0: Option<usize>,
    /// Last index with `μ_δ(A_n(b) - x) ≥ ε`, and that value.
    pub first_violation: Option<(usize, f64)>,
    /// `μ_δ(A_n(b) - x)` for `n = 1..=N`.
    pub mu_delta: Vec<f64>,
    pub limit_source: LimitSource,
}

/// Mirrors the closure argument at one finite scale: find an approximant
/// `b_k` whose three parts are each below `2^{-j*}` in measure, then check
/// that `A_n(b)` itself converges in measure at `(ε, δ)` within the horizon.
pub fn closure_experiment(
    family: &dyn OperatorFamily,
    b: &Operator,
    approximants: &[Operator],
    eps: f64,
    delta: f64,
) -> Result<ClosureReport> {
    if !(eps > 0.0) || !(delta > 0.0) {
        return Err(Error::arg("eps/delta", format!("must be > 0, got ({eps}, {delta})")));
    }
    if approximants.is_empty() {
        return Err(Error::EmptySequence);
    }
    let scale = eps.min(delta);
    let mut j_star = 0u32;
    while 3.0 * 0.5f64.powi(j_star as i32) >= scale {
        j_star += 1;
    }
    let p = 0.5f64.powi(j_star as i32);
    let horizon = family.horizon();
    let norm = family.domain_norm();

    let distances = approximants
        .iter()
        .map(|bk| norm.of(&b.try_sub(bk)?))
        .collect::<Result<Vec<f64>>>()?;

    let traj = trajectory(family, b)?;
    let (x, limit_source) = limit_of(family, b, &traj, DEFAULT_TAIL_FRACTION)?;
    let measured = converges_in_measure_stream(&traj, &x, eps, delta)?;

    let mut report = ClosureReport {
        verdict: Verdict::Declined,
        reason: String::new(),
        eps,
        delta,
        horizon,
        j_star,
        part_level: p,
        approximant_distances: distances.clone(),
        chosen: None,
        part1: f64::NAN,
        part2_n0: None,
        part3: f64::NAN,
        predicted_n0: None,
        measured_n0: measured.n0(),
        first_violation: measured
            .last_violation()
            .map(|n| (n, measured.mu_delta()[n - 1])),
        mu_delta: measured.mu_delta().to_vec(),
        limit_source,
    };

    // gate 1: b_k → b in the domain norm
    let last = distances[distances.len() - 1];
    let monotone = distances.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    if !monotone || (distances.len() > 1 && last >= distances[0] && last > 0.0) {
        report.reason = format!("approximants do not approach b: distances {distances:?}");
        return Ok(report);
    }

    // the first approximant whose difference stays below p in measure for every n
    let mut chosen = None;
    for (k, bk) in approximants.iter().enumerate() {
        let diff = b.try_sub(bk)?;
        let mut sup: f64 = 0.0;
        family.run(&diff, horizon, &mut |_, a| {
            sup = sup.max(a.singular_spectrum()?.mu(p));
            Ok(())
        })?;
        if sup < p {
            chosen = Some((k, sup));
            break;
        }
    }
    let Some((k, part1)) = chosen else {
        report.reason = format!("no approximant has sup_n μ_p(A_n(b - b_k)) < p = {p:e}");
        return Ok(report);
    };
    report.chosen = Some(k);
    report.part1 = part1;

    // gate 2: every approximant up to the chosen one has averages converging at (ε/3, δ/3)
    let mut xk = None;
    for (i, bi) in approximants.iter().enumerate().take(k + 1) {
        let ti = trajectory(family, bi)?;
        let (li, _) = limit_of(family, bi, &ti, DEFAULT_TAIL_FRACTION)?;
        let tracker = converges_in_measure_stream(&ti, &li, eps / 3.0, delta / 3.0)?;
        if !tracker.converged() {
            report.reason = format!(
                "averages of approximant {i} do not converge in measure at (ε/3, δ/3) within the horizon"
            );
            return Ok(report);
        }
        if i == k {
            report.part2_n0 = tracker.n0();
            xk = Some(li);
        }
    }
    let xk = xk.expect("chosen approximant visited");
    report.part3 = xk.try_sub(&x)?.singular_spectrum()?.mu(p);
    if !(report.part3 < p) {
        report.reason = format!("limits differ: μ_p(x_k - x) = {:e} ≥ p = {p:e}", report.part3);
        return Ok(report);
    }
    report.predicted_n0 = report.part2_n0;

    if measured.converged() {
        report.verdict = Verdict::Pass;
        report.reason = format!(
            "A_n(b) converges in measure at (ε, δ) = ({eps:e}, {delta:e}) from n = {} (split predicts n ≥ {})",
            measured.n0().unwrap(),
            report.predicted_n0.unwrap()
        );
    } else {
        report.verdict = Verdict::Fail;
        let (n, m) = report.first_violation.unwrap();
        report.reason = format!("μ_δ(A_n(b) - x) = {m:e} ≥ ε at n = {n}");
    }
    Ok(report)
}

fn converges_in_measure_stream(traj: &[Operator], limit: &Operator, eps: f64, delta: f64) -> Result<ConvergenceTracker> {
    let mut tracker = ConvergenceTracker::new(eps, delta)?;
    for a in traj {
        tracker.push(&a.try_sub(limit)?)?;
    }
    Ok(tracker)
}

/// One row of the `ergodic` output: norms of `Ã_n(x) - L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErgodicRow {
    pub n: usize,
    pub sup_norm: f64,
    pub l1_norm: f64,
    pub mu_delta: f64,
}

#[derive(Clone, Debug)]
pub struct StochasticRunReport {
    pub converged: bool,
    pub n0: Option<usize>,
    pub eps: f64,
    pub delta: f64,
    pub horizon: usize,
    pub limit: Operator,
    pub limit_source: LimitSource,
    pub rows: Vec<ErgodicRow>,
}

impl StochasticRunReport {
    pub fn mu_delta(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.mu_delta)
    }
}

/// Runs `Ã_n(x) = (1/n) Σ_{j<n} β_j α′^j(x)` for `n ≤ horizon`, compares with
/// the limit `L` (closed form when available, else the mean of the last 10%
/// of the run) and decides convergence of `Ã_n(x) - L` in measure.
pub fn stochastic_ergodic_run(
    sys: &DynamicalSystem,
    x: &Operator,
    beta: &WeightSequence,
    horizon: usize,
    eps: f64,
    delta: f64,
) -> Result<StochasticRunReport> {
    stochastic_ergodic_run_with(sys, x, beta, horizon, eps, delta, DEFAULT_TAIL_FRACTION)
}

pub fn stochastic_ergodic_run_with(
    sys: &DynamicalSystem,
    x: &Operator,
    beta: &WeightSequence,
    horizon: usize,
    eps: f64,
    delta: f64,
    tail_fraction: f64,
) -> Result<StochasticRunReport> {
    if horizon < 2 {
        return Err(Error::arg("horizon", format!("must be ≥ 2, got {horizon}")));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::arg("tail_fraction", format!("must lie in (0, 1], got {tail_fraction}")));
    }
    if let Some(len) = beta.len() {
        if len < horizon {
            return Err(Error::WeightOutOfRange(len));
        }
    }
    let alg = sys.algebra();
    let closed = if alg.window_spec().is_none() {
        match sys.spectral_form()? {
            Some(sf) => sf.limit(x, beta)?,
            None => None,
        }
    } else {
        None
    };

    let run = |visit: &mut dyn FnMut(usize, &Operator) -> Result<()>| -> Result<()> {
        let mut sum = Operator::zero(alg);
        for (j, y) in sys.orbit(x, true)?.enumerate().take(horizon) {
            let w = beta.value(j)?;
            if w != C64::new(0.0, 0.0) {
                sum.axpy(w, &y?);
            } else {
                y?;
            }
            visit(j + 1, &sum.scale_real(1.0 / (j + 1) as f64))?;
        }
        Ok(())
    };

    let (limit, limit_source) = match closed {
        Some(l) => (l, LimitSource::ClosedForm),
        None => {
            let k = ((horizon as f64 * tail_fraction).ceil() as usize).clamp(1, horizon);
            let mut acc = Operator::zero(alg);
            run(&mut |n, a| {
                if n > horizon - k {
                    acc.axpy(ONE, a);
                }
                Ok(())
            })?;
            (acc.scale_real(1.0 / k as f64), LimitSource::TailAverage)
        }
    };

    let mut tracker = ConvergenceTracker::new(eps, delta)?;
    let mut rows = Vec::with_capacity(horizon);
    run(&mut |n, a| {
        let s = a.try_sub(&limit)?.singular_spectrum()?;
        let m = s.mu(delta);
        tracker.push_mu(m);
        rows.push(ErgodicRow {
            n,
            sup_norm: s.max(),
            l1_norm: s.trace(),
            mu_delta: m,
        });
        Ok(())
    })?;

    Ok(StochasticRunReport {
        converged: tracker.converged(),
        n0: tracker.n0(),
        eps,
        delta,
        horizon,
        limit,
        limit_source,
        rows,
    })
}

/// Convenience check used by reports: does the family's sequence `A_n(b)`
/// converge in measure to its (closed-form or tail) limit?
pub fn family_converges(family: &dyn OperatorFamily, b: &Operator, eps: f64, delta: f64) -> Result<(bool, Option<usize>)> {
    let traj = trajectory(family, b)?;
    let (x, _) = limit_of(family, b, &traj, DEFAULT_TAIL_FRACTION)?;
    let diffs = traj.iter().map(|a| a.try_sub(&x)).collect::<Result<Vec<_>>>()?;
    let v = converges_in_measure(&diffs, eps, delta)?;
    Ok((v.converged, v.n0))
}
