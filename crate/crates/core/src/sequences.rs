//! Weight sequences for weighted ergodic averages.
//!
//! Trigonometric polynomials `P(n) = Σ b_j e^{2πiθ_j n}`, bounded sequences
//! built from them, and uniform sequences realized as entry times of an
//! irrational circle rotation into a half-open interval.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::par::Execution;

/// `ζ` counts as the resonance `ζ = 1` within this distance.
pub const RESONANCE_TOL: f64 = 1e-9;
/// Largest harmonic searched when matching a frequency against `m·θ`.
pub const MAX_HARMONIC: i64 = 10_000;
/// `θ` is treated as rational when within this distance of `p/q` with `q ≤ MAX_DENOMINATOR`.
pub const RATIONAL_TOL: f64 = 1e-12;
pub const MAX_DENOMINATOR: u64 = 10_000;

fn cis(turns: f64) -> C64 {
    let a = 2.0 * PI * turns;
    C64::new(a.cos(), a.sin())
}

/// `(θ·n) mod 1`, reduced before the product grows large.
fn turns(theta: f64, n: u64) -> f64 {
    (theta * n as f64).rem_euclid(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrigPolynomial {
    terms: Vec<(C64, f64)>,
}

impl TrigPolynomial {
    /// Terms are `(b_j, θ_j)`; angles are reduced into `[0, 1)`.
    pub fn new(terms: Vec<(C64, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::arg("terms", "a trigonometric polynomial needs at least one term"));
        }
        if let Some((b, t)) = terms.iter().find(|(b, t)| !b.is_finite() || !t.is_finite()) {
            return Err(Error::arg("terms", format!("non-finite term ({b}, {t})")));
        }
        Ok(TrigPolynomial {
            terms: terms.into_iter().map(|(b, t)| (b, t.rem_euclid(1.0))).collect(),
        })
    }

    /// `λ^n` with `λ = e^{2πiθ}`.
    pub fn geometric(theta: f64) -> Self {
        TrigPolynomial {
            terms: vec![(C64::new(1.0, 0.0), theta.rem_euclid(1.0))],
        }
    }

    pub fn terms(&self) -> &[(C64, f64)] {
        &self.terms
    }

    pub fn eval(&self, n: u64) -> C64 {
        self.terms.iter().map(|(b, t)| b * cis(turns(*t, n))).sum()
    }

    /// `Σ |b_j|`, a bound for `|P(n)|`.
    pub fn bound(&self) -> f64 {
        self.terms.iter().map(|(b, _)| b.norm()).sum()
    }

    /// `lim (1/n) Σ_j P(j) ζ^j`: the sum of `b_j` over terms with `λ_j ζ = 1`.
    pub fn limit_coefficient(&self, zeta: C64) -> C64 {
        self.terms
            .iter()
            .filter(|(_, t)| (cis(*t) * zeta - 1.0).norm() <= RESONANCE_TOL)
            .map(|(b, _)| *b)
            .sum()
    }
}

pub fn trig_eval(p: &TrigPolynomial, n: u64) -> C64 {
    p.eval(n)
}

/// Circle rotation `y ↦ y + θ mod 1` started at `y0`, observed on `Y = [a, b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationSystem {
    theta: f64,
    y0: f64,
    a: f64,
    b: f64,
}

impl RotationSystem {
    pub fn new(theta: f64, y0: f64, a: f64, b: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::arg("theta", format!("must lie in (0, 1), got {theta}")));
        }
        if !(0.0..1.0).contains(&y0) {
            return Err(Error::arg("y0", format!("must lie in [0, 1), got {y0}")));
        }
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(Error::arg("interval", format!("need 0 ≤ a < b ≤ 1, got [{a}, {b})")));
        }
        Ok(RotationSystem { theta, y0, a, b })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// `ν(Y) = b - a`
    pub fn measure(&self) -> f64 {
        self.b - self.a
    }

    /// Orbit point `y0 + mθ mod 1`.
    pub fn point(&self, m: u64) -> f64 {
        (self.y0 + turns(self.theta, m)).rem_euclid(1.0)
    }

    pub fn visits(&self, m: u64) -> bool {
        let y = self.point(m);
        self.a <= y && y < self.b
    }

    /// `Some((p, q))` when `θ` is numerically the rational `p/q`.
    pub fn rational(&self) -> Option<(u64, u64)> {
        rational_approximation(self.theta)
    }

    /// First `count` entry times `u_0 < u_1 < …` of the orbit into `Y`.
    pub fn entry_times(&self, count: usize) -> EntryTimes {
        let mut times = Vec::with_capacity(count);
        let mut m = 0u64;
        while times.len() < count {
            if self.visits(m) {
                times.push(m);
            }
            m += 1;
        }
        let rational = self.rational();
        EntryTimes {
            times,
            rational,
        }
    }

    /// `|{m < n : y_m ∈ Y}| / n`
    pub fn visit_density(&self, n: u64) -> f64 {
        (0..n).filter(|&m| self.visits(m)).count() as f64 / n as f64
    }

    /// Fourier coefficient of `1_Y`: `c_0 = b - a`,
    /// `c_m = (e^{-2πima} - e^{-2πimb}) / (2πim)`.
    pub fn indicator_coefficient(&self, m: i64) -> C64 {
        if m == 0 {
            return C64::new(self.b - self.a, 0.0);
        }
        let mf = m as f64;
        (cis(-mf * self.a) - cis(-mf * self.b)) / C64::new(0.0, 2.0 * PI * mf)
    }

    /// Harmonic `m` of the indicator sequence `j ↦ 1_Y(y0 + jθ)` as a
    /// trigonometric term `(c_m e^{2πimy0}, mθ mod 1)`.
    pub fn harmonic(&self, m: i64) -> (C64, f64) {
        let b = self.indicator_coefficient(m) * cis(m as f64 * self.y0);
        (b, (m as f64 * self.theta).rem_euclid(1.0))
    }

    /// `k`-term Fourier approximant of the indicator sequence: the `k`
    /// harmonics with largest `|c_m|` (ties broken by smaller `|m|`, then `m > 0`).
    pub fn fourier_approximant(&self, k: usize) -> Result<TrigPolynomial> {
        if k == 0 {
            return Err(Error::arg("k", "need at least one term"));
        }
        let reach = (10 * k as i64).max(1000);
        let mut ms: Vec<i64> = (-reach..=reach).collect();
        ms.sort_by(|&p, &q| {
            let (cp, cq) = (self.indicator_coefficient(p).norm(), self.indicator_coefficient(q).norm());
            cq.total_cmp(&cp)
                .then(p.abs().cmp(&q.abs()))
                .then(q.cmp(&p))
        });
        TrigPolynomial::new(ms[..k].iter().map(|&m| self.harmonic(m)).collect())
    }

    /// `lim (1/n) Σ_j 1_Y(y_j) ζ^j`.
    pub fn limit_coefficient(&self, zeta: C64) -> C64 {
        if let Some((_, q)) = self.rational() {
            // periodic sequence: only q-th roots of unity resonate
            if (zeta.powu(q as u32) - 1.0).norm() > RESONANCE_TOL * q as f64 {
                return ZERO;
            }
            let mut s = ZERO;
            let mut z = C64::new(1.0, 0.0);
            for j in 0..q {
                if self.visits(j) {
                    s += z;
                }
                z *= zeta;
            }
            return s / q as f64;
        }
        let phi = zeta.arg() / (2.0 * PI);
        let mut best: Option<(f64, i64)> = None;
        for m in -MAX_HARMONIC..=MAX_HARMONIC {
            let d = (m as f64 * self.theta + phi).rem_euclid(1.0);
            let d = d.min(1.0 - d);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, m));
            }
        }
        match best {
            Some((d, m)) if 2.0 * PI * d <= RESONANCE_TOL => self.harmonic(m).0,
            _ => ZERO,
        }
    }
}

/// Entry times plus the rationality flag of the rotation that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryTimes {
    pub times: Vec<u64>,
    /// `Some((p, q))`: θ is rational, the rotation is not uniquely ergodic
    /// and the sequence is for diagnostics only.
    pub rational: Option<(u64, u64)>,
}

impl EntryTimes {
    pub fn is_diagnostic_only(&self) -> bool {
        self.rational.is_some()
    }
}

pub fn uniform_entry_times(rot: &RotationSystem, count: usize) -> Result<EntryTimes> {
    if count == 0 {
        return Err(Error::arg("count", "must be ≥ 1"));
    }
    Ok(rot.entry_times(count))
}

/// Best rational `p/q` with `q ≤ MAX_DENOMINATOR` within `RATIONAL_TOL` of `x`,
/// found through the continued-fraction convergents.
pub fn rational_approximation(x: f64) -> Option<(u64, u64)> {
    let x = x.rem_euclid(1.0);
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut r = x;
    loop {
        let a = r.floor();
        let (p2, q2) = (a as u64 * p1 + p0, a as u64 * q1 + q0);
        if q2 > MAX_DENOMINATOR {
            return None;
        }
        if (x - p2 as f64 / q2 as f64).abs() <= RATIONAL_TOL {
            return Some((p2, q2));
        }
        let frac = r - a;
        if frac <= 0.0 {
            return None;
        }
        r = 1.0 / frac;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
}

/// Bounded weight sequence `β_j`, `j ≥ 0`, with bound `C ≥ sup |β_j|`.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSequence {
    Constant(C64),
    Explicit(Vec<C64>),
    Trig(TrigPolynomial),
    /// `scale · 1_Y(y0 + jθ)`
    Indicator { rotation: RotationSystem, scale: f64 },
}

impl WeightSequence {
    pub fn ones() -> Self {
        WeightSequence::Constant(C64::new(1.0, 0.0))
    }

    /// `β_j = λ^j` with `λ = e^{2πiθ}`.
    pub fn geometric(theta: f64) -> Self {
        WeightSequence::Trig(TrigPolynomial::geometric(theta))
    }

    /// Entry-time indicator rescaled by `1/ν(Y)`, so its mean is 1.
    pub fn normalized_indicator(rotation: RotationSystem) -> Self {
        WeightSequence::Indicator {
            scale: 1.0 / rotation.measure(),
            rotation,
        }
    }

    /// The bound `C`.
    pub fn bound(&self) -> f64 {
        match self {
            WeightSequence::Constant(c) => c.norm(),
            WeightSequence::Explicit(v) => v.iter().map(|z| z.norm()).fold(0.0, f64::max),
            WeightSequence::Trig(p) => p.bound(),
            WeightSequence::Indicator { scale, .. } => scale.abs(),
        }
    }

    /// Number of defined terms; `None` for infinite sequences.
    pub fn len(&self) -> Option<usize> {
        match self {
            WeightSequence::Explicit(v) => Some(v.len()),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn value(&self, j: usize) -> Result<C64> {
        let v = match self {
            WeightSequence::Constant(c) => *c,
            WeightSequence::Explicit(v) => *v.get(j).ok_or(Error::WeightOutOfRange(j))?,
            WeightSequence::Trig(p) => p.eval(j as u64),
            WeightSequence::Indicator { rotation, scale } => {
                if rotation.visits(j as u64) {
                    C64::new(*scale, 0.0)
                } else {
                    ZERO
                }
            }
        };
        debug_assert!(v.norm() <= self.bound() * (1.0 + 1e-12) + 1e-300);
        Ok(v)
    }

    /// `β_0, …, β_{n-1}`.
    pub fn values(&self, n: usize) -> Result<Vec<C64>> {
        (0..n).map(|j| self.value(j)).collect()
    }

    /// `lim (1/n) Σ_j β_j ζ^j` for `|ζ| = 1`, when known in closed form.
    pub fn limit_coefficient(&self, zeta: C64) -> Option<C64> {
        match self {
            WeightSequence::Constant(c) => Some(if (zeta - 1.0).norm() <= RESONANCE_TOL {
                *c
            } else {
                ZERO
            }),
            WeightSequence::Explicit(_) => None,
            WeightSequence::Trig(p) => Some(p.limit_coefficient(zeta)),
            WeightSequence::Indicator { rotation, scale } => Some(rotation.limit_coefficient(zeta) * *scale),
        }
    }
}

/// `(1/n) Σ_{j<n} |β_j - P(j)|`
pub fn besicovitch_defect(beta: &WeightSequence, p: &TrigPolynomial, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::arg("n", "must be ≥ 1"));
    }
    let mut s = 0.0;
    for j in 0..n {
        s += (beta.value(j)? - p.eval(j as u64)).norm();
    }
    Ok(s / n as f64)
}

/// Star discrepancy of `{jθ mod 1 : j < n}`:
/// `max_i max(i/n - s_i, s_i - (i-1)/n)` over the sorted points `s_1 ≤ … ≤ s_n`.
pub fn discrepancy(theta: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::arg("n", "must be ≥ 1"));
    }
    let mut s: Vec<f64> = (0..n as u64).map(|j| turns(theta, j)).collect();
    s.sort_by(f64::total_cmp);
    let nf = n as f64;
    Ok(s.iter()
        .enumerate()
        .map(|(i, &si)| {
            let i = i as f64 + 1.0;
            (i / nf - si).max(si - (i - 1.0) / nf)
        })
        .fold(0.0, f64::max))
}

/// `D*_n` at every `n` in `ns`.
pub fn discrepancy_curve(theta: f64, ns: &[usize], exec: Execution) -> Result<Vec<f64>> {
    exec.map(ns.len(), |i| discrepancy(theta, ns[i])).into_iter().collect()
}

/// `(√5 - 1)/2`
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;
