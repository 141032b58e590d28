//! Distribution function `λ_t`, singular numbers `μ_t` and convergence in measure.
//!
//! Both functions only depend on the weighted singular spectrum of `x`:
//!
//! - `λ_t(x) = τ({|x| > t})`, the weight strictly above `t`;
//! - `μ_t(x) = inf{s ≥ 0 : λ_s(x) ≤ t}`, i.e. the smallest `‖x e‖` over
//!   spectral projections `e` of `|x|` with `τ(𝟙 - e) ≤ t`.
//!
//! The inclusive `≤ t` makes `t ↦ μ_t` right-continuous on atomic spectra.

use crate::algebra::{
    abs_op, hermitian_block_eigens, projection_where, Operator, Projection, SingularSpectrum,
};
use crate::error::{Error, Result};

fn check_t(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::arg("t", format!("must be ≥ 0, got {t}")))
    }
}

/// `λ_t(x) = τ(E_(t,∞)(|x|))`.
pub fn distribution_lambda(x: &Operator, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(x.singular_spectrum()?.lambda(t))
}

/// `μ_t(x)` under the inclusive convention `τ(𝟙 - e) ≤ t`.
pub fn singular_mu(x: &Operator, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(x.singular_spectrum()?.mu(t))
}

pub fn distribution_curve(x: &Operator) -> Result<DistributionCurve> {
    Ok(x.singular_spectrum()?.distribution_curve())
}

pub fn mu_curve(x: &Operator) -> Result<MuCurve> {
    Ok(x.singular_spectrum()?.mu_curve())
}

/// `mass > t`, ignoring a few ulps of summation error so that removing the
/// whole support at `t = τ(𝟙)` is not defeated by rounding.
fn exceeds(mass: f64, t: f64) -> bool {
    mass > t + 4.0 * f64::EPSILON * mass
}

impl SingularSpectrum {
    pub fn lambda(&self, t: f64) -> f64 {
        self.mass_above(t)
    }

    pub fn mu(&self, t: f64) -> f64 {
        // weight strictly above the current level; all of it may be cut away
        let mut removed = 0.0;
        for (v, w) in self.levels() {
            if v == 0.0 || exceeds(removed + w, t) {
                return v;
            }
            removed += w;
        }
        0.0
    }

    pub fn distribution_curve(&self) -> DistributionCurve {
        let mut breakpoints: Vec<f64> = self.levels().into_iter().map(|l| l.0).collect();
        if breakpoints.last().is_none_or(|&v| v > 0.0) {
            breakpoints.push(0.0);
        }
        breakpoints.reverse();
        // summed exactly as `lambda` sums, so the curve and pointwise values agree bit for bit
        let values = breakpoints.iter().map(|&v| self.mass_above(v)).collect();
        DistributionCurve {
            breakpoints,
            values,
            total_trace: self.total_weight(),
        }
    }

    pub fn mu_curve(&self) -> MuCurve {
        let mut breakpoints = Vec::new();
        let mut values = Vec::new();
        let mut removed = 0.0;
        for (v, w) in self.levels() {
            if v == 0.0 {
                break;
            }
            breakpoints.push(removed);
            values.push(v);
            removed += w;
        }
        breakpoints.push(removed);
        values.push(0.0);
        MuCurve {
            breakpoints,
            values,
        }
    }
}

/// Right-continuous step function `t ↦ λ_t(x)`.
///
/// `values[i]` is the value on `[breakpoints[i], breakpoints[i+1])`.
/// Breakpoints are the distinct singular values in ascending order, always
/// starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionCurve {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub total_trace: f64,
}

impl DistributionCurve {
    pub fn eval(&self, t: f64) -> f64 {
        step_eval(&self.breakpoints, &self.values, t)
    }

    /// `τ(supp |x|) = λ_0(x)`.
    pub fn support_trace(&self) -> f64 {
        self.values[0]
    }

    /// `(t, λ_t)` at each grid point.
    pub fn sample(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.iter().map(|&t| (t, self.eval(t))).collect()
    }
}

/// Right-continuous step function `t ↦ μ_t(x)` on trace levels.
///
/// `values[i]` holds on `[breakpoints[i], breakpoints[i+1])`; the last value
/// is 0 and holds from `τ(supp |x|)` on.
#[derive(Clone, Debug, PartialEq)]
pub struct MuCurve {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl MuCurve {
    pub fn eval(&self, t: f64) -> f64 {
        step_eval(&self.breakpoints, &self.values, t)
    }

    /// `μ_0(x) = ‖x‖∞`.
    pub fn norm(&self) -> f64 {
        self.values[0]
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.iter().map(|&t| (t, self.eval(t))).collect()
    }
}

fn step_eval(breakpoints: &[f64], values: &[f64], t: f64) -> f64 {
    let i = breakpoints.partition_point(|&b| b <= t);
    if i == 0 {
        values[0]
    } else {
        values[i - 1]
    }
}

/// Outcome of [`converges_in_measure`] on a finite sequence.
///
/// Indices are 1-based: `mu_delta[0]` belongs to `x_1`.
#[derive(Clone, Debug)]
pub struct ConvergenceVerdict {
    pub converged: bool,
    /// Smallest `n0` with `μ_δ(x_n) < ε` for every provided `n ≥ n0`.
    pub n0: Option<usize>,
    pub eps: f64,
    pub delta: f64,
    /// `μ_δ(x_n)` for every index.
    pub mu_delta: Vec<f64>,
    /// `e_n = 𝟙 - {|x_n| > μ_δ(x_n)}`: `‖x_n e_n‖∞ = μ_δ(x_n)` and `τ(𝟙 - e_n) ≤ δ`.
    pub witnesses: Vec<Projection>,
}

impl ConvergenceVerdict {
    /// Last index whose `μ_δ` is not below `ε`.
    pub fn last_violation(&self) -> Option<usize> {
        self.mu_delta.iter().rposition(|&m| !(m < self.eps)).map(|i| i + 1)
    }
}

fn check_eps_delta(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::arg("eps", format!("must be > 0, got {eps}")));
    }
    if !(delta > 0.0) {
        return Err(Error::arg("delta", format!("must be > 0, got {delta}")));
    }
    Ok(())
}

/// Decides convergence to 0 in measure within the provided range: the
/// sequence passes when `μ_δ(x_n) < ε` from some index on.
pub fn converges_in_measure(xs: &[Operator], eps: f64, delta: f64) -> Result<ConvergenceVerdict> {
    check_eps_delta(eps, delta)?;
    if xs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut mu_delta = Vec::with_capacity(xs.len());
    let mut witnesses = Vec::with_capacity(xs.len());
    for x in xs {
        let m = singular_mu(x, delta)?;
        witnesses.push(witness(x, m)?);
        mu_delta.push(m);
    }
    let (converged, n0) = decide(&mu_delta, eps);
    Ok(ConvergenceVerdict {
        converged,
        n0,
        eps,
        delta,
        mu_delta,
        witnesses,
    })
}

/// `𝟙 - {|x| > m}` with a relative cushion so eigenvalues equal to `m` up to
/// rounding stay inside the witness.
pub fn witness(x: &Operator, m: f64) -> Result<Projection> {
    let a = abs_op(x)?;
    let eig = hermitian_block_eigens(&a, true)?;
    let cut = m * (1.0 + 1e-9) + 1e-300;
    Ok(projection_where(x.algebra(), &eig, |v| v <= cut))
}

fn decide(mu: &[f64], eps: f64) -> (bool, Option<usize>) {
    match mu.iter().rposition(|&m| !(m < eps)) {
        None => (true, Some(1)),
        Some(i) if i + 1 < mu.len() => (true, Some(i + 2)),
        Some(_) => (false, None),
    }
}

/// Streaming form of the convergence rule for long runs where storing every
/// operator or witness is wasteful.
#[derive(Clone, Debug)]
pub struct ConvergenceTracker {
    eps: f64,
    delta: f64,
    count: usize,
    last_violation: Option<usize>,
    mu_delta: Vec<f64>,
}

impl ConvergenceTracker {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        check_eps_delta(eps, delta)?;
        Ok(ConvergenceTracker {
            eps,
            delta,
            count: 0,
            last_violation: None,
            mu_delta: Vec::new(),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Records `x_{count+1}` and returns its `μ_δ`.
    pub fn push(&mut self, x: &Operator) -> Result<f64> {
        let m = singular_mu(x, self.delta)?;
        self.push_mu(m);
        Ok(m)
    }

    pub fn push_mu(&mut self, m: f64) {
        self.count += 1;
        if !(m < self.eps) {
            self.last_violation = Some(self.count);
        }
        self.mu_delta.push(m);
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn mu_delta(&self) -> &[f64] {
        &self.mu_delta
    }

    pub fn converged(&self) -> bool {
        self.count > 0 && self.last_violation != Some(self.count)
    }

    pub fn n0(&self) -> Option<usize> {
        self.converged()
            .then(|| self.last_violation.map_or(1, |v| v + 1))
    }

    pub fn last_violation(&self) -> Option<usize> {
        self.last_violation
    }
}
