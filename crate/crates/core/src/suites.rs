//! Randomized property suites.
//!
//! Each suite draws independent trials from `sub_rng(seed, tag·2³² + trial)`,
//! evaluates an inequality or identity and records its excess, the amount by
//! which the claimed bound is exceeded. A trial is a violation when the excess
//! is above the suite's slack. Trials run through [`Execution::map`], so the
//! result does not depend on the execution strategy.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{proj_meet, spectral_projection_above, Block, Operator, Projection, TracialAlgebra};
use crate::dynamics::{Automorphism, DynamicalSystem};
use crate::error::{Error, Result};
use crate::linalg::{Mat, C64};
use crate::par::Execution;
use crate::random::{
    random_algebra_of_dim, random_hermitian, random_operator, random_positive, random_projection, random_unitary,
    sub_rng,
};
use crate::sequences::{TrigPolynomial, WeightSequence};

pub const SLACK: f64 = 1e-9;
pub const ORACLE_SLACK: f64 = 1e-12;
pub const EXACT_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub trials: usize,
    pub violations: usize,
    /// Largest excess over all trials (may be negative when every bound had room).
    pub max_excess: f64,
    pub slack: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl std::fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<24} {:>5}/{:<5} passed  max excess {:+.3e}",
            self.name,
            self.trials - self.violations,
            self.trials,
            self.max_excess
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    LambdaSubadditivity,
    MuSymmetry,
    MuMonotone,
    MuSubadditivity,
    MuSandwich,
    MuProduct,
    Curves,
    GaloisOracle,
    Chebyshev,
    MeetProduct,
    MeetComplement,
    CentralSplit,
    Averaging,
    Lattice,
    ComparisonBound,
    RationalReduction,
}

impl Suite {
    pub const ALL: [Suite; 16] = [
        Suite::LambdaSubadditivity,
        Suite::MuSymmetry,
        Suite::MuMonotone,
        Suite::MuSubadditivity,
        Suite::MuSandwich,
        Suite::MuProduct,
        Suite::Curves,
        Suite::GaloisOracle,
        Suite::Chebyshev,
        Suite::MeetProduct,
        Suite::MeetComplement,
        Suite::CentralSplit,
        Suite::Averaging,
        Suite::Lattice,
        Suite::ComparisonBound,
        Suite::RationalReduction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LambdaSubadditivity => "lambda-subadditivity",
            Suite::MuSymmetry => "mu-symmetry",
            Suite::MuMonotone => "mu-monotone",
            Suite::MuSubadditivity => "mu-subadditivity",
            Suite::MuSandwich => "mu-sandwich",
            Suite::MuProduct => "mu-product",
            Suite::Curves => "curve-steps",
            Suite::GaloisOracle => "galois-oracle",
            Suite::Chebyshev => "chebyshev",
            Suite::MeetProduct => "meet-product",
            Suite::MeetComplement => "meet-complement",
            Suite::CentralSplit => "central-split",
            Suite::Averaging => "averaging",
            Suite::Lattice => "lattice",
            Suite::ComparisonBound => "comparison-bound",
            Suite::RationalReduction => "rational-reduction",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn default_trials(self) -> usize {
        match self {
            Suite::GaloisOracle => 200,
            Suite::CentralSplit => 500,
            Suite::Averaging | Suite::ComparisonBound | Suite::RationalReduction => 100,
            _ => 1000,
        }
    }

    fn slack(self) -> f64 {
        match self {
            Suite::GaloisOracle => ORACLE_SLACK,
            Suite::RationalReduction => EXACT_SLACK,
            _ => SLACK,
        }
    }

    fn trial(self, rng: &mut ChaCha8Rng) -> Result<f64> {
        match self {
            Suite::LambdaSubadditivity => lambda_subadditivity(rng),
            Suite::MuSymmetry => mu_symmetry(rng),
            Suite::MuMonotone => mu_monotone(rng),
            Suite::MuSubadditivity => mu_subadditivity(rng),
            Suite::MuSandwich => mu_sandwich(rng),
            Suite::MuProduct => mu_product(rng),
            Suite::Curves => curve_steps(rng),
            Suite::GaloisOracle => galois_oracle(rng),
            Suite::Chebyshev => chebyshev(rng),
            Suite::MeetProduct => meet_product(rng),
            Suite::MeetComplement => meet_complement(rng),
            Suite::CentralSplit => central_split(rng),
            Suite::Averaging => averaging(rng),
            Suite::Lattice => lattice(rng),
            Suite::ComparisonBound => comparison_bound(rng),
            Suite::RationalReduction => rational_reduction(rng),
        }
    }

    pub fn run(self, trials: usize, seed: u64, exec: Execution) -> Result<SuiteResult> {
        let tag = Suite::ALL.iter().position(|s| *s == self).unwrap() as u64 + 1;
        let excess = exec.map(trials, |i| self.trial(&mut sub_rng(seed, (tag << 32) + i as u64)));
        let slack = self.slack();
        let mut out = SuiteResult {
            name: self.name(),
            trials,
            violations: 0,
            max_excess: f64::NEG_INFINITY,
            slack,
        };
        for e in excess {
            let e = e?;
            if !(e <= slack) {
                out.violations += 1;
            }
            out.max_excess = out.max_excess.max(e);
        }
        Ok(out)
    }
}

/// Every suite at its default trial count.
pub fn run_all(seed: u64, exec: Execution) -> Result<Vec<SuiteResult>> {
    Suite::ALL
        .into_iter()
        .map(|s| s.run(s.default_trials(), seed, exec))
        .collect()
}

fn small_algebra(rng: &mut ChaCha8Rng, max_dim: usize) -> Arc<TracialAlgebra> {
    let d = rng.random_range(1..=max_dim);
    random_algebra_of_dim(d, rng)
}

fn level(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    rng.random_range(1e-6..=1.0) * scale
}

fn lambda(x: &Operator, t: f64) -> Result<f64> {
    Ok(x.singular_spectrum()?.lambda(t))
}

fn mu(x: &Operator, t: f64) -> Result<f64> {
    Ok(x.singular_spectrum()?.mu(t))
}

/// `λ_{t+s}(x+y) ≤ λ_t(x) + λ_s(y)`
fn lambda_subadditivity(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 8);
    let x = random_hermitian(&alg, rng);
    let y = random_hermitian(&alg, rng);
    let t = level(rng, 2.0 * x.operator_norm()?);
    let s = level(rng, 2.0 * y.operator_norm()?);
    Ok(lambda(&(&x + &y), t + s)? - lambda(&x, t)? - lambda(&y, s)?)
}

/// `μ_t(x) = μ_t(|x|) = μ_t(x*)` and `μ_t(cx) = |c| μ_t(x)`.
fn mu_symmetry(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 8);
    let x = random_operator(&alg, rng);
    let t = level(rng, 1.2 * alg.total_trace());
    let c = C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let m = mu(&x, t)?;
    let scale = 1.0 + m;
    let d1 = (mu(&crate::algebra::abs_op(&x)?, t)? - m).abs();
    let d2 = (mu(&x.adjoint(), t)? - m).abs();
    let d3 = (mu(&x.scale(c), t)? - c.norm() * m).abs();
    Ok(d1.max(d2).max(d3) / scale)
}

/// `0 ≤ x ≤ y ⇒ μ_t(x) ≤ μ_t(y)`
fn mu_monotone(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 8);
    let x = random_positive(&alg, rng);
    let y = &x + &random_positive(&alg, rng);
    let t = level(rng, 1.2 * alg.total_trace());
    Ok(mu(&x, t)? - mu(&y, t)?)
}

/// `μ_{t+s}(x+y) ≤ μ_t(x) + μ_s(y)`
fn mu_subadditivity(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 8);
    let x = random_operator(&alg, rng);
    let y = random_operator(&alg, rng);
    let t = level(rng, alg.total_trace());
    let s = level(rng, alg.total_trace());
    Ok(mu(&(&x + &y), t + s)? - mu(&x, t)? - mu(&y, s)?)
}

/// `μ_t(yxz) ≤ ‖y‖∞ ‖z‖∞ μ_t(x)`
fn mu_sandwich(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 8);
    let x = random_operator(&alg, rng);
    let y = random_operator(&alg, rng);
    let z = random_operator(&alg, rng);
    let t = level(rng, 1.2 * alg.total_trace());
    let yxz = &(&y * &x) * &z;
    Ok(mu(&yxz, t)? - y.operator_norm()? * z.operator_norm()? * mu(&x, t)?)
}

/// `μ_{t+s}(yx) ≤ μ_t(x) μ_s(y)`
fn mu_product(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 8);
    let x = random_operator(&alg, rng);
    let y = random_operator(&alg, rng);
    let t = level(rng, alg.total_trace());
    let s = level(rng, alg.total_trace());
    Ok(mu(&(&y * &x), t + s)? - mu(&x, t)? * mu(&y, s)?)
}

/// Both step functions are non-increasing, agree with the pointwise values
/// at every breakpoint, and are constant just to the right of it.
fn curve_steps(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 8);
    let mut x = random_operator(&alg, rng);
    if rng.random_bool(0.3) {
        // repeated singular values
        x = Operator::scalar(&alg, C64::new(rng.random_range(0.5..2.0), 0.0));
    }
    let s = x.singular_spectrum()?;
    let mut worst: f64 = f64::NEG_INFINITY;

    for (bp, vals, f) in [
        {
            let c = s.mu_curve();
            (c.breakpoints, c.values, 0)
        },
        {
            let c = s.distribution_curve();
            (c.breakpoints, c.values, 1)
        },
    ] {
        let eval = |t: f64| if f == 0 { s.mu(t) } else { s.lambda(t) };
        let gap = bp.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let eta = if gap.is_finite() { gap / 4.0 } else { 1e-6 };
        for (k, (&b, &v)) in bp.iter().zip(&vals).enumerate() {
            worst = worst.max((eval(b) - v).abs());
            worst = worst.max((eval(b + eta) - v).abs());
            if k > 0 {
                worst = worst.max(v - vals[k - 1]);
                worst = worst.max((eval(b - eta) - vals[k - 1]).abs());
            }
        }
    }
    Ok(worst)
}

/// `μ_t` against the minimum over all subsets of spectral atoms of total
/// weight at most `t` of the largest remaining value.
fn galois_oracle(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 10);
    let x = random_operator(&alg, rng);
    let s = x.singular_spectrum()?;
    let atoms = s.atoms();
    let mut ts: Vec<f64> = (0..4).map(|_| level(rng, 1.2 * alg.total_trace())).collect();
    // partial sums are the breakpoints, where the convention matters
    let mut acc = 0.0;
    for a in atoms {
        acc += a.1;
        ts.push(acc);
    }
    ts.push(0.0);
    let mut worst: f64 = 0.0;
    for t in ts {
        worst = worst.max((s.mu(t) - subset_oracle(atoms, t)).abs());
    }
    Ok(worst)
}

fn subset_oracle(atoms: &[(f64, f64)], t: f64) -> f64 {
    let n = atoms.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let removed: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| atoms[i].1).sum();
        if removed <= t + 4.0 * f64::EPSILON * removed {
            let kept = (0..n)
                .filter(|i| mask >> i & 1 == 0)
                .map(|i| atoms[i].0)
                .fold(0.0, f64::max);
            best = best.min(kept);
        }
    }
    best
}

/// `λ_t(x) ≤ τ(|x|)/t`
fn chebyshev(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 8);
    let x = random_operator(&alg, rng);
    let s = x.singular_spectrum()?;
    let t = level(rng, 2.0 * s.max());
    Ok(s.lambda(t) - s.trace() / t)
}

fn positive_pair(rng: &mut ChaCha8Rng) -> Result<(Operator, Operator, f64, f64)> {
    let alg = small_algebra(rng, 8);
    let a = random_positive(&alg, rng);
    let h = random_positive(&alg, rng);
    let t = level(rng, a.operator_norm()?);
    let s = level(rng, h.operator_norm()?);
    Ok((a, h, t, s))
}

/// `t s τ({a > t} ∧ {h > s}) ≤ τ(a h)`
fn meet_product(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (a, h, t, s) = positive_pair(rng)?;
    let e = proj_meet(&spectral_projection_above(&a, t)?, &spectral_projection_above(&h, s)?)?;
    Ok(t * s * e.trace() - (&a * &h).trace().re)
}

/// `τ({a > t}) ≤ τ(a h)/(t s) + τ(𝟙 - {h > s})`
fn meet_complement(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (a, h, t, s) = positive_pair(rng)?;
    let ea = spectral_projection_above(&a, t)?;
    let eh = spectral_projection_above(&h, s)?;
    Ok(ea.trace() - (&a * &h).trace().re / (t * s) - eh.complement().trace())
}

/// Two groups of blocks, each invariant under the dynamics; their central
/// supports `e₁, e₂` commute with every `A_n`, and
/// `λ_{l₁+l₂}(A_n x) ≤ λ_{l₁}(A_n(x e₁)) + λ_{l₂}(A_n(x e₂))`.
fn central_split(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut blocks = Vec::new();
    let mut group = Vec::new();
    for g in 0..2 {
        let d = rng.random_range(1..=3);
        let w = rng.random_range(0.1..2.0);
        let copies = rng.random_range(1..=2);
        for _ in 0..copies {
            blocks.push(Block::new(d, w));
            group.push(g);
        }
    }
    let alg = TracialAlgebra::finite(blocks.clone())?;
    let unitaries = blocks.iter().map(|b| random_unitary(b.dim, rng)).collect();
    // swap equal blocks within each group
    let mut perm: Vec<usize> = (0..blocks.len()).collect();
    for g in 0..2 {
        let members: Vec<usize> = (0..blocks.len()).filter(|&i| group[i] == g).collect();
        if members.len() == 2 && rng.random_bool(0.5) {
            perm.swap(members[0], members[1]);
        }
    }
    let alpha = Automorphism::Compose(vec![Automorphism::Inner(unitaries), Automorphism::BlockPermutation(perm)]);
    let sys = DynamicalSystem::with_horizon(&alg, alpha, 64)?;

    let e1 = Operator::from_blocks(
        &alg,
        blocks
            .iter()
            .zip(&group)
            .map(|(b, &g)| if g == 0 { Mat::identity(b.dim) } else { Mat::zeros(b.dim) })
            .collect(),
    )?;
    let e2 = Projection::new(e1.clone())?.complement().into_operator();
    let x = random_operator(&alg, rng);
    let n = rng.random_range(1..=40);
    let ax = sys.ergodic_average(&x, n)?;
    let a1 = sys.ergodic_average(&(&x * &e1), n)?;
    let a2 = sys.ergodic_average(&(&x * &e2), n)?;
    let l1 = level(rng, 2.0 * a1.operator_norm()?.max(1e-3));
    let l2 = level(rng, 2.0 * a2.operator_norm()?.max(1e-3));
    Ok(lambda(&ax, l1 + l2)? - lambda(&a1, l1)? - lambda(&a2, l2)?)
}

/// Linearity, positivity, trace preservation and `L₁` contraction of `A′_n`.
fn averaging(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 6);
    let unitaries = alg.finite_blocks().iter().map(|b| random_unitary(b.dim, rng)).collect();
    let sys = DynamicalSystem::with_horizon(&alg, Automorphism::Inner(unitaries), 64)?;
    let n = rng.random_range(1..=50);
    let x = random_operator(&alg, rng);
    let y = random_operator(&alg, rng);
    let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let lin = (&sys.predual_average(&(&x.scale(c) + &y), n)?
        - &(&sys.predual_average(&x, n)?.scale(c) + &sys.predual_average(&y, n)?))
        .max_abs_entry();
    let p = random_positive(&alg, rng);
    let ap = sys.predual_average(&p, n)?;
    let pos = -ap.min_eigenvalue()?;
    let tr = (ap.trace() - p.trace()).norm();
    let l1 = sys.predual_average(&x, n)?.trace_norm()? - x.trace_norm()?;
    Ok(lin.max(pos).max(tr).max(l1))
}

/// `e f e ≥ e ∧ f`, `τ(e) ≤ τ(e ∧ f) + τ(𝟙 - f)` and `τ(e ∨ f) + τ(e ∧ f) = τ(e) + τ(f)`.
fn lattice(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 6);
    let e = random_projection(&alg, rng);
    let f = if rng.random_bool(0.2) { e.clone() } else { random_projection(&alg, rng) };
    let m = proj_meet(&e, &f)?;
    let j = crate::algebra::proj_join(&e, &f)?;
    let efe = &(e.as_operator() * f.as_operator()) * e.as_operator();
    let order = -(&efe - m.as_operator()).real_part().min_eigenvalue()?;
    let complement = e.trace() - m.trace() - f.complement().trace();
    let parallelogram = (j.trace() + m.trace() - e.trace() - f.trace()).abs();
    Ok(order.max(complement).max(parallelogram))
}

/// `‖Ã_n(x) - A_n(k, x)‖ ≤ (1/n) Σ_{l<n} |β_l - P(l)| · ‖x‖` in both
/// `‖·‖∞` and `‖·‖₁`, where `A_n(k, ·)` averages with the weights `P(l)`.
fn comparison_bound(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 5);
    let unitaries = alg.finite_blocks().iter().map(|b| random_unitary(b.dim, rng)).collect();
    let sys = DynamicalSystem::with_horizon(&alg, Automorphism::Inner(unitaries), 64)?;
    let n = rng.random_range(1..=200);
    let beta = WeightSequence::Explicit(
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    );
    let k = rng.random_range(1..=4);
    let p = TrigPolynomial::new(
        (0..k)
            .map(|_| {
                (
                    C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect(),
    )?;
    let defect = crate::sequences::besicovitch_defect(&beta, &p, n)?;
    let x = random_operator(&alg, rng);
    let diff = &sys.weighted_average(&x, &beta, n)? - &sys.weighted_average(&x, &WeightSequence::Trig(p), n)?;
    let sup = diff.operator_norm()? - defect * x.operator_norm()?;
    let l1 = diff.trace_norm()? - defect * x.trace_norm()?;
    Ok(sup.max(l1))
}

/// For `λ = e^{2πi p/m}` primitive and `n = q m`,
/// `(1/n) Σ_{j<n} λ^j α′^j(x) = (1/m) Σ_{r<m} λ^r α′^r(B_q(x))` where `B_q`
/// is the plain average of `α′^m` over `q` steps.
fn rational_reduction(rng: &mut ChaCha8Rng) -> Result<f64> {
    let alg = small_algebra(rng, 4);
    let unitaries: Vec<_> = alg.finite_blocks().iter().map(|b| random_unitary(b.dim, rng)).collect();
    let alpha = Automorphism::Inner(unitaries);
    let m = rng.random_range(2..=7u64);
    let p = loop {
        let p = rng.random_range(1..m);
        if gcd(p, m) == 1 {
            break p;
        }
    };
    let q = rng.random_range(1..=30);
    let n = (m * q) as usize;
    let sys = DynamicalSystem::with_horizon(&alg, alpha.clone(), 64)?;
    let x = random_operator(&alg, rng);
    let lhs = sys.weighted_average(&x, &WeightSequence::geometric(p as f64 / m as f64), n)?;

    let sys_m = DynamicalSystem::with_horizon(&alg, Automorphism::Compose(vec![alpha; m as usize]), 64)?;
    let b = sys_m.predual_average(&x, q as usize)?;
    let mut rhs = Operator::zero(&alg);
    for r in 0..m {
        let w = C64::from_polar(1.0, std::f64::consts::TAU * (p * r % m) as f64 / m as f64);
        rhs = &rhs + &sys.predual_power(&b, r)?.scale(w);
    }
    let rhs = rhs.scale_real(1.0 / m as f64);
    Ok((&lhs - &rhs).max_abs_entry() / (1.0 + x.max_abs_entry()))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Parses a comma-separated list of suite names; `all` selects every suite.
pub fn parse_selection(spec: &str) -> Result<Vec<Suite>> {
    let spec = spec.trim();
    if spec.is_empty() || spec == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| {
            let s = s.trim();
            Suite::from_name(s).ok_or_else(|| Error::arg("suite", format!("unknown suite `{s}`")))
        })
        .collect()
}
