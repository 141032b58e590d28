//! Trace-preserving automorphisms and their ergodic averages.
//!
//! An [`Automorphism`] is built from three primitives: per-block unitary
//! conjugation, a permutation of matrix blocks with equal dimension and
//! weight, and a translation of the atomic window. Every composition reduces
//! to one normal form (permutation, unitaries, shift), which is what powers,
//! inverses and the closed-form averages work with.

pub mod neveu;
pub mod spectral;

use std::sync::Arc;

use crate::algebra::{Operator, TracialAlgebra};
use crate::error::{Error, Result};
use crate::linalg::{Mat, C64, ONE};
use crate::par::Execution;
use crate::sequences::WeightSequence;

pub use neveu::{neveu_decompose, neveu_decompose_with, NeveuDecomposition, NeveuOptions};
pub use spectral::{SpectralForm, MAX_SPECTRAL_DIM};

/// Default number of cached powers.
pub const DEFAULT_HORIZON: usize = 1 << 14;
/// Upper bound on the memory held by the power cache.
pub const CACHE_BUDGET_BYTES: usize = 64 << 20;
const UNITARY_TOL: f64 = 1e-10;
const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub enum Automorphism {
    /// `x ↦ u x u*` with one unitary per matrix block (window atoms are fixed).
    Inner(Vec<Mat>),
    /// Matrix block `i` moves to block `perm[i]`.
    BlockPermutation(Vec<usize>),
    /// Window site `s` moves to `s + k`.
    Translation(i64),
    /// Steps applied first to last.
    Compose(Vec<Automorphism>),
}

impl Automorphism {
    pub fn identity() -> Self {
        Automorphism::Compose(Vec::new())
    }

    /// Cyclic permutation of the first `n` blocks: block `i` goes to `i + 1 mod n`.
    pub fn cyclic(n: usize) -> Self {
        Automorphism::BlockPermutation((0..n).map(|i| (i + 1) % n).collect())
    }

    pub fn then(self, next: Automorphism) -> Self {
        match self {
            Automorphism::Compose(mut steps) => {
                steps.push(next);
                Automorphism::Compose(steps)
            }
            first => Automorphism::Compose(vec![first, next]),
        }
    }

    /// `α⁻¹`
    pub fn inverse(&self) -> Self {
        match self {
            Automorphism::Inner(us) => Automorphism::Inner(us.iter().map(Mat::adjoint).collect()),
            Automorphism::BlockPermutation(p) => {
                let mut inv = vec![0; p.len()];
                for (i, &j) in p.iter().enumerate() {
                    if j < inv.len() {
                        inv[j] = i;
                    }
                }
                Automorphism::BlockPermutation(inv)
            }
            Automorphism::Translation(k) => Automorphism::Translation(-k),
            Automorphism::Compose(steps) => {
                Automorphism::Compose(steps.iter().rev().map(Automorphism::inverse).collect())
            }
        }
    }

    /// Checks the automorphism against `alg` and reduces it to normal form.
    pub(crate) fn compile(&self, alg: &TracialAlgebra) -> Result<Action> {
        let nfin = alg.finite_blocks().len();
        match self {
            Automorphism::Inner(us) => {
                if us.len() != nfin {
                    return Err(Error::InvalidAutomorphism(format!(
                        "expected {nfin} unitaries, got {}",
                        us.len()
                    )));
                }
                for (i, (u, b)) in us.iter().zip(alg.finite_blocks()).enumerate() {
                    if u.n() != b.dim {
                        return Err(Error::InvalidAutomorphism(format!(
                            "unitary {i} has dimension {}, block has {}",
                            u.n(),
                            b.dim
                        )));
                    }
                    let defect = u.adjoint().matmul(u).sub(&Mat::identity(b.dim)).max_abs();
                    if defect > UNITARY_TOL {
                        return Err(Error::InvalidAutomorphism(format!(
                            "matrix {i} is not unitary (‖u*u - 1‖ = {defect:e})"
                        )));
                    }
                }
                Ok(Action {
                    perm: (0..nfin).collect(),
                    unitaries: us.iter().cloned().map(Some).collect(),
                    shift: 0,
                })
            }
            Automorphism::BlockPermutation(p) => {
                if p.len() > nfin {
                    return Err(Error::InvalidAutomorphism(format!(
                        "permutation of {} blocks, algebra has {nfin} matrix blocks",
                        p.len()
                    )));
                }
                let mut seen = vec![false; p.len()];
                for (i, &j) in p.iter().enumerate() {
                    if j >= p.len() || seen[j] {
                        return Err(Error::InvalidAutomorphism(format!("{p:?} is not a permutation")));
                    }
                    seen[j] = true;
                    let (a, b) = (alg.finite_blocks()[i], alg.finite_blocks()[j]);
                    if a.dim != b.dim || (a.weight - b.weight).abs() > 1e-12 * a.weight.max(b.weight) {
                        return Err(Error::InvalidAutomorphism(format!(
                            "block {i} (dim {}, weight {}) cannot move to block {j} (dim {}, weight {})",
                            a.dim, a.weight, b.dim, b.weight
                        )));
                    }
                }
                let mut perm: Vec<usize> = (0..nfin).collect();
                perm[..p.len()].copy_from_slice(p);
                Ok(Action {
                    perm,
                    unitaries: vec![None; nfin],
                    shift: 0,
                })
            }
            Automorphism::Translation(k) => {
                if alg.window_spec().is_none() && *k != 0 {
                    return Err(Error::InvalidAutomorphism(
                        "translation needs an atomic window".into(),
                    ));
                }
                Ok(Action {
                    perm: (0..nfin).collect(),
                    unitaries: vec![None; nfin],
                    shift: *k,
                })
            }
            Automorphism::Compose(steps) => {
                let mut acc = Action::identity(nfin);
                for s in steps {
                    acc = acc.then(&s.compile(alg)?);
                }
                Ok(acc)
            }
        }
    }
}

/// Returns `α⁻¹`, the predual adjoint of a trace-preserving `α`:
/// `τ(x α(y)) = τ(α⁻¹(x) y)`.
pub fn predual_adjoint(alpha: &Automorphism) -> Automorphism {
    alpha.inverse()
}

/// Applies `α` once, rejecting translations that push support out of the window.
pub fn apply(alpha: &Automorphism, x: &Operator) -> Result<Operator> {
    alpha.compile(x.algebra())?.apply(x, Overflow::Reject)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Overflow {
    Reject,
    /// Mass leaving the window is dropped, standing in for escape to infinity.
    Drop,
}

/// Normal form `x ↦ shift ∘ perm ∘ Ad(u)`: matrix block `i` is conjugated by
/// `unitaries[i]` and lands in block `perm[i]`; window sites move by `shift`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Action {
    pub(crate) perm: Vec<usize>,
    pub(crate) unitaries: Vec<Option<Mat>>,
    pub(crate) shift: i64,
}

impl Action {
    fn identity(nfin: usize) -> Self {
        Action {
            perm: (0..nfin).collect(),
            unitaries: vec![None; nfin],
            shift: 0,
        }
    }

    /// `self` first, then `next`.
    pub(crate) fn then(&self, next: &Action) -> Action {
        let perm = self.perm.iter().map(|&s| next.perm[s]).collect();
        let unitaries = self
            .perm
            .iter()
            .zip(&self.unitaries)
            .map(|(&s, v)| match (&next.unitaries[s], v) {
                (None, None) => None,
                (Some(u), None) => Some(u.clone()),
                (None, Some(v)) => Some(v.clone()),
                (Some(u), Some(v)) => Some(u.matmul(v)),
            })
            .collect();
        Action {
            perm,
            unitaries,
            shift: self.shift + next.shift,
        }
    }

    pub(crate) fn inverse(&self) -> Action {
        let n = self.perm.len();
        let mut perm = vec![0; n];
        let mut unitaries = vec![None; n];
        for (i, &p) in self.perm.iter().enumerate() {
            perm[p] = i;
            unitaries[p] = self.unitaries[i].as_ref().map(Mat::adjoint);
        }
        Action {
            perm,
            unitaries,
            shift: -self.shift,
        }
    }

    fn pow(&self, mut k: u64) -> Action {
        let mut result = Action::identity(self.perm.len());
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.then(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.then(&base);
            }
        }
        result
    }

    fn bytes(&self) -> usize {
        let mats: usize = self
            .unitaries
            .iter()
            .flatten()
            .map(|u| u.n() * u.n() * std::mem::size_of::<C64>())
            .sum();
        mats + self.perm.len() * (std::mem::size_of::<usize>() + std::mem::size_of::<Option<Mat>>())
    }

    pub(crate) fn apply(&self, x: &Operator, overflow: Overflow) -> Result<Operator> {
        let alg = x.algebra();
        let mut out = Operator::zero(alg);
        for (i, (&dst, u)) in self.perm.iter().zip(&self.unitaries).enumerate() {
            match u {
                None => out.raw_mut()[block_range(alg, dst)].copy_from_slice(x.block(i)),
                Some(u) => out.set_block(dst, &x.block_mat(i).conjugate_by(u)),
            }
        }
        if let Some(w) = alg.window_spec() {
            let base = alg.layout()[alg.finite_blocks().len()].offset;
            let len = w.len() as i64;
            for s in 0..len {
                let v = x.raw()[base + s as usize];
                if v == crate::linalg::ZERO {
                    continue;
                }
                let t = s + self.shift;
                if (0..len).contains(&t) {
                    out.raw_mut()[base + t as usize] = v;
                } else if overflow == Overflow::Reject {
                    return Err(Error::WindowOverflow {
                        site: w.lo + s,
                        target: w.lo + t,
                        lo: w.lo,
                        hi: w.hi,
                    });
                }
            }
        }
        Ok(out)
    }
}

fn block_range(alg: &TracialAlgebra, i: usize) -> std::ops::Range<usize> {
    let b = alg.layout()[i];
    b.offset..b.offset + b.dim * b.dim
}

/// Summation range of the plain averages `A_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Indexing {
    /// `(1/n) Σ_{l=0}^{n-1}`
    #[default]
    FromZero,
    /// `(1/n) Σ_{l=1}^{n-1}`
    FromOne,
}

/// An algebra with a trace-preserving automorphism and an eagerly built
/// cache of its powers.
#[derive(Clone, Debug)]
pub struct DynamicalSystem {
    alg: Arc<TracialAlgebra>,
    alpha: Automorphism,
    forward: Action,
    backward: Action,
    powers: Vec<Action>,
    indexing: Indexing,
    exec: Execution,
}

impl DynamicalSystem {
    pub fn new(alg: &Arc<TracialAlgebra>, alpha: Automorphism) -> Result<Self> {
        Self::with_horizon(alg, alpha, DEFAULT_HORIZON)
    }

    /// Caches `α^0 … α^horizon`, fewer if the cache would exceed
    /// [`CACHE_BUDGET_BYTES`]. Later powers are assembled from cached ones.
    pub fn with_horizon(alg: &Arc<TracialAlgebra>, alpha: Automorphism, horizon: usize) -> Result<Self> {
        let forward = alpha.compile(alg)?;
        let backward = forward.inverse();
        let per = forward.bytes().max(1);
        let cached = horizon.min(CACHE_BUDGET_BYTES / per).max(1);
        let mut powers = Vec::with_capacity(cached + 1);
        powers.push(Action::identity(forward.perm.len()));
        for k in 1..=cached {
            let next = powers[k - 1].then(&forward);
            powers.push(next);
        }
        Ok(DynamicalSystem {
            alg: alg.clone(),
            alpha,
            forward,
            backward,
            powers,
            indexing: Indexing::default(),
            exec: Execution::default(),
        })
    }

    pub fn with_indexing(mut self, indexing: Indexing) -> Self {
        self.indexing = indexing;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.alg
    }

    pub fn automorphism(&self) -> &Automorphism {
        &self.alpha
    }

    pub fn predual(&self) -> Automorphism {
        self.alpha.inverse()
    }

    pub fn indexing(&self) -> Indexing {
        self.indexing
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    /// Largest cached power.
    pub fn cached_horizon(&self) -> usize {
        self.powers.len() - 1
    }

    pub(crate) fn forward_action(&self) -> &Action {
        &self.forward
    }

    pub(crate) fn backward_action(&self) -> &Action {
        &self.backward
    }

    fn check(&self, x: &Operator) -> Result<()> {
        if x.algebra().as_ref() == self.alg.as_ref() {
            Ok(())
        } else {
            Err(Error::AlgebraMismatch)
        }
    }

    fn power_action(&self, k: u64) -> Action {
        let h = self.cached_horizon() as u64;
        if k <= h {
            return self.powers[k as usize].clone();
        }
        self.powers[h as usize].pow(k / h).then(&self.powers[(k % h) as usize])
    }

    pub fn apply(&self, x: &Operator) -> Result<Operator> {
        self.check(x)?;
        self.forward.apply(x, Overflow::Reject)
    }

    /// `α′(x) = α⁻¹(x)`
    pub fn apply_predual(&self, x: &Operator) -> Result<Operator> {
        self.check(x)?;
        self.backward.apply(x, Overflow::Reject)
    }

    /// `α^k(x)`
    pub fn power(&self, x: &Operator, k: u64) -> Result<Operator> {
        self.check(x)?;
        if k as usize <= self.cached_horizon() {
            return self.powers[k as usize].apply(x, Overflow::Reject);
        }
        self.power_action(k).apply(x, Overflow::Reject)
    }

    /// `α′^k(x)`
    pub fn predual_power(&self, x: &Operator, k: u64) -> Result<Operator> {
        self.check(x)?;
        self.power_action(k).inverse().apply(x, Overflow::Reject)
    }

    /// `Σ_{l ∈ range} c_l · α^{±l}(x)`, summed in fixed-size chunks so the
    /// result does not depend on the execution strategy.
    fn weighted_sum(
        &self,
        x: &Operator,
        range: std::ops::Range<usize>,
        predual: bool,
        coeff: &(dyn Fn(usize) -> Result<C64> + Sync),
    ) -> Result<Operator> {
        self.check(x)?;
        let step = if predual { &self.backward } else { &self.forward };
        let start = range.start;
        let len = range.len();
        let chunks = len.div_ceil(CHUNK);
        let partials = self.exec.map(chunks, |c| -> Result<Operator> {
            let lo = start + c * CHUNK;
            let hi = (lo + CHUNK).min(range.end);
            let mut y = if predual {
                self.predual_power(x, lo as u64)?
            } else {
                self.power(x, lo as u64)?
            };
            let mut acc = Operator::zero(&self.alg);
            for l in lo..hi {
                if l > lo {
                    y = step.apply(&y, Overflow::Reject)?;
                }
                let w = coeff(l)?;
                if w != crate::linalg::ZERO {
                    acc.axpy(w, &y);
                }
            }
            Ok(acc)
        });
        let mut total = Operator::zero(&self.alg);
        for p in partials {
            total.axpy(ONE, &p?);
        }
        Ok(total)
    }

    fn plain_range(&self, n: usize) -> std::ops::Range<usize> {
        match self.indexing {
            Indexing::FromZero => 0..n,
            Indexing::FromOne => 1..n,
        }
    }

    /// `A_n(x) = (1/n) Σ α^l(x)`.
    pub fn ergodic_average(&self, x: &Operator, n: usize) -> Result<Operator> {
        check_n(n)?;
        Ok(self
            .weighted_sum(x, self.plain_range(n), false, &|_| Ok(ONE))?
            .scale_real(1.0 / n as f64))
    }

    /// `A′_n(x) = (1/n) Σ α′^l(x)`.
    pub fn predual_average(&self, x: &Operator, n: usize) -> Result<Operator> {
        check_n(n)?;
        Ok(self
            .weighted_sum(x, self.plain_range(n), true, &|_| Ok(ONE))?
            .scale_real(1.0 / n as f64))
    }

    /// `Ã_n(x) = (1/n) Σ_{j=0}^{n-1} β_j α′^j(x)`.
    pub fn weighted_average(&self, x: &Operator, beta: &WeightSequence, n: usize) -> Result<Operator> {
        check_n(n)?;
        if let Some(len) = beta.len() {
            if len < n {
                return Err(Error::WeightOutOfRange(len));
            }
        }
        Ok(self
            .weighted_sum(x, 0..n, true, &|j| beta.value(j))?
            .scale_real(1.0 / n as f64))
    }

    /// Iterates `x, α(x), α²(x), …` (or the predual orbit).
    pub fn orbit(&self, x: &Operator, predual: bool) -> Result<Orbit<'_>> {
        self.check(x)?;
        let step = if predual { &self.backward } else { &self.forward };
        Ok(Orbit::new(step, x.clone(), Overflow::Reject))
    }

    /// Orbit under a translation that drops whatever leaves the window.
    pub(crate) fn escaping_orbit(&self, x: &Operator, predual: bool) -> Orbit<'_> {
        let step = if predual { &self.backward } else { &self.forward };
        Orbit::new(step, x.clone(), Overflow::Drop)
    }

    /// Records `‖A_n(h)‖∞` for `n = 1..=n_max` and decides whether `h` looks
    /// weakly wandering: the last value is within `tol` and is the minimum of
    /// the curve.
    pub fn is_weakly_wandering(&self, h: &Operator, n_max: usize, tol: f64) -> Result<WanderingReport> {
        check_n(n_max)?;
        self.check(h)?;
        h.check_positive()?;
        let mut curve = Vec::with_capacity(n_max);
        let mut sum = Operator::zero(&self.alg);
        let mut orbit = self.orbit(h, false)?;
        let mut l = 0;
        for n in 1..=n_max {
            let range = self.plain_range(n);
            while l < range.end {
                let y = orbit.next().expect("orbits are infinite")?;
                if l >= range.start {
                    sum.axpy(ONE, &y);
                }
                l += 1;
            }
            curve.push(sum.operator_norm()? / n as f64);
        }
        let last = *curve.last().unwrap();
        let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(WanderingReport {
            weakly_wandering: last <= tol && last <= min,
            curve,
            tol,
        })
    }

    /// Closed form of the averages on the matrix blocks, when the total block
    /// dimension is at most [`MAX_SPECTRAL_DIM`].
    pub fn spectral_form(&self) -> Result<Option<SpectralForm>> {
        SpectralForm::new(self)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::arg("n", "must be ≥ 1"))
    } else {
        Ok(())
    }
}

pub struct Orbit<'a> {
    step: &'a Action,
    next: Option<Operator>,
    pending: Option<Error>,
    overflow: Overflow,
}

impl Orbit<'_> {
    fn new(step: &Action, x: Operator, overflow: Overflow) -> Orbit<'_> {
        Orbit {
            step,
            next: Some(x),
            pending: None,
            overflow,
        }
    }
}

impl Iterator for Orbit<'_> {
    type Item = Result<Operator>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(e) = self.pending.take() {
            return Some(Err(e));
        }
        let cur = self.next.take()?;
        // an overflow one step ahead only matters once that step is requested
        match self.step.apply(&cur, self.overflow) {
            Ok(n) => self.next = Some(n),
            Err(e) => self.pending = Some(e),
        }
        Some(Ok(cur))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WanderingReport {
    /// `‖A_n(h)‖∞` for `n = 1, 2, …`
    pub curve: Vec<f64>,
    pub weakly_wandering: bool,
    pub tol: f64,
}
