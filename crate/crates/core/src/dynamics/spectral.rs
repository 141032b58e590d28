//! Closed-form averages on the matrix blocks.
//!
//! The predual `α′` acts on the block-diagonal part of `M_D` (`D = Σ d_i`) as
//! `x ↦ W x W*` for one unitary `W`. With `W = V diag(z) V*`,
//!
//! `α′^j(x) = V (ζ^j ∘ V* x V) V*`,  `ζ_kl = z_k conj(z_l)`,
//!
//! so any weighted average `(1/n) Σ β_j α′^j(x)` becomes the entrywise factor
//! `w_n(ζ) = (1/n) Σ_j β_j ζ^j` in the eigenbasis, and its limit the factor
//! `lim w_n(ζ)`.

use std::collections::HashMap;
use std::sync::Arc;

use crate::algebra::{Operator, TracialAlgebra};
use crate::error::{Error, Result};
use crate::linalg::{unitary_eigen, Mat, C64, ONE, ZERO};
use crate::sequences::WeightSequence;

use super::{Action, DynamicalSystem, Indexing};

/// Largest total block dimension handled in closed form.
pub const MAX_SPECTRAL_DIM: usize = 64;
/// Eigenphases closer than this are treated as one eigenvalue.
pub const PHASE_CLUSTER_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SpectralForm {
    alg: Arc<TracialAlgebra>,
    offsets: Vec<usize>,
    dim: usize,
    /// Eigenvalues of `W`, equal within a cluster.
    phases: Vec<C64>,
    cluster: Vec<usize>,
    vectors: Mat,
}

impl SpectralForm {
    /// `None` when the matrix blocks are too large for the closed form.
    /// Window sites are not covered; results carry zeros there.
    pub fn new(sys: &DynamicalSystem) -> Result<Option<Self>> {
        let alg = sys.algebra();
        let dims: Vec<usize> = alg.finite_blocks().iter().map(|b| b.dim).collect();
        let dim: usize = dims.iter().sum();
        if dim == 0 || dim > MAX_SPECTRAL_DIM {
            return Ok(None);
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut o = 0;
        for d in &dims {
            offsets.push(o);
            o += d;
        }
        let w = embed_action(sys.backward_action(), &offsets, &dims, dim);
        let eig = unitary_eigen(&w).map_err(|_| Error::NonConvergence { block: 0 })?;
        let (phases, cluster) = cluster_phases(&eig.phases);
        Ok(Some(SpectralForm {
            alg: alg.clone(),
            offsets,
            dim,
            phases,
            cluster,
            vectors: eig.vectors,
        }))
    }

    /// Eigenvalues of the predual's unitary `W`.
    pub fn phases(&self) -> &[C64] {
        &self.phases
    }

    fn embed(&self, x: &Operator) -> Mat {
        let mut m = Mat::zeros(self.dim);
        for (i, &o) in self.offsets.iter().enumerate() {
            let b = x.block(i);
            let d = self.alg.finite_blocks()[i].dim;
            for r in 0..d {
                for c in 0..d {
                    m.set(o + r, o + c, b[r * d + c]);
                }
            }
        }
        m
    }

    fn restrict(&self, m: &Mat) -> Operator {
        let mut out = Operator::zero(&self.alg);
        for (i, &o) in self.offsets.iter().enumerate() {
            let d = self.alg.finite_blocks()[i].dim;
            out.set_block(i, &Mat::from_fn(d, |r, c| m.get(o + r, o + c)));
        }
        out
    }

    /// `V (f(ζ) ∘ V* x V) V*` on the matrix blocks, with `f` evaluated once
    /// per pair of eigenvalue clusters.
    pub fn transform(&self, x: &Operator, mut f: impl FnMut(C64) -> Result<C64>) -> Result<Operator> {
        if x.algebra().as_ref() != self.alg.as_ref() {
            return Err(Error::AlgebraMismatch);
        }
        let v = &self.vectors;
        let xt = v.adjoint().matmul(&self.embed(x)).matmul(v);
        let mut memo: HashMap<(usize, usize), C64> = HashMap::new();
        let mut yt = Mat::zeros(self.dim);
        for k in 0..self.dim {
            for l in 0..self.dim {
                let key = (self.cluster[k], self.cluster[l]);
                let w = match memo.get(&key) {
                    Some(w) => *w,
                    None => {
                        let w = f(self.phases[k] * self.phases[l].conj())?;
                        memo.insert(key, w);
                        w
                    }
                };
                yt.set(k, l, w * xt.get(k, l));
            }
        }
        Ok(self.restrict(&v.matmul(&yt).matmul(&v.adjoint())))
    }

    /// `α′^j(x)` on the matrix blocks.
    pub fn predual_power(&self, x: &Operator, j: u64) -> Result<Operator> {
        self.transform(x, |z| Ok(unit_pow(z, j)))
    }

    /// `(1/n) Σ_{j<n} β_j α′^j(x)` on the matrix blocks.
    pub fn weighted_average(&self, x: &Operator, beta: &WeightSequence, n: u64) -> Result<Operator> {
        if n == 0 {
            return Err(Error::arg("n", "must be ≥ 1"));
        }
        self.transform(x, |z| cesaro_weight(beta, z, n))
    }

    /// `A_n(x)` (forward) on the matrix blocks; `α^l` carries the factor `conj(ζ)^l`.
    pub fn ergodic_average(&self, x: &Operator, n: u64, indexing: Indexing) -> Result<Operator> {
        if n == 0 {
            return Err(Error::arg("n", "must be ≥ 1"));
        }
        self.transform(x, |z| {
            let g = geometric_sum(z.conj(), n);
            Ok(match indexing {
                Indexing::FromZero => g,
                Indexing::FromOne => g - ONE,
            } / n as f64)
        })
    }

    /// `lim_n (1/n) Σ β_j α′^j(x)`, when `β` has known Fourier–Bohr coefficients.
    pub fn limit(&self, x: &Operator, beta: &WeightSequence) -> Result<Option<Operator>> {
        let mut missing = false;
        let out = self.transform(x, |z| {
            Ok(beta.limit_coefficient(z).unwrap_or_else(|| {
                missing = true;
                ZERO
            }))
        })?;
        Ok((!missing).then_some(out))
    }

    /// Projection of `x` onto the fixed points of `α` (the limit of `A_n(x)`).
    pub fn fixed_part(&self, x: &Operator) -> Result<Operator> {
        self.transform(x, |z| Ok(if (z - ONE).norm() <= PHASE_CLUSTER_TOL { ONE } else { ZERO }))
    }
}

/// `W` with `W x W* = action(x)` on block-diagonal `x`.
fn embed_action(a: &Action, offsets: &[usize], dims: &[usize], dim: usize) -> Mat {
    let mut w = Mat::zeros(dim);
    for (i, (&dst, u)) in a.perm.iter().zip(&a.unitaries).enumerate() {
        let (oi, od, d) = (offsets[i], offsets[dst], dims[i]);
        for b in 0..d {
            for c in 0..d {
                let v = match u {
                    Some(u) => u.get(b, c),
                    None if b == c => ONE,
                    None => ZERO,
                };
                w.set(od + b, oi + c, v);
            }
        }
    }
    w
}

/// Groups eigenvalues whose phase angles lie within [`PHASE_CLUSTER_TOL`]
/// (around the circle) and replaces each by its cluster representative.
fn cluster_phases(z: &[C64]) -> (Vec<C64>, Vec<usize>) {
    let n = z.len();
    let ang: Vec<f64> = z.iter().map(|w| w.arg()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ang[a].total_cmp(&ang[b]).then(a.cmp(&b)));
    let mut cluster = vec![0; n];
    let mut reps: Vec<C64> = Vec::new();
    for (pos, &k) in order.iter().enumerate() {
        if pos > 0 && ang[k] - ang[order[pos - 1]] < PHASE_CLUSTER_TOL {
            cluster[k] = cluster[order[pos - 1]];
        } else {
            cluster[k] = reps.len();
            reps.push(z[k]);
        }
    }
    // wrap-around: angles near +π and -π are the same point
    if reps.len() > 1 {
        let (first, last) = (order[0], order[n - 1]);
        if ang[first] + 2.0 * std::f64::consts::PI - ang[last] < PHASE_CLUSTER_TOL {
            let (from, to) = (cluster[last], cluster[first]);
            for c in cluster.iter_mut() {
                if *c == from {
                    *c = to;
                }
            }
        }
    }
    let phases = cluster.iter().map(|&c| reps[c]).collect();
    (phases, cluster)
}

/// `q^n` for `|q| = 1`, with the angle reduced before multiplying.
fn unit_pow(q: C64, n: u64) -> C64 {
    let turns = (q.arg() / std::f64::consts::TAU * n as f64).rem_euclid(1.0);
    C64::from_polar(1.0, std::f64::consts::TAU * turns)
}

/// `Σ_{j<n} q^j` for `|q| = 1`.
pub(crate) fn geometric_sum(q: C64, n: u64) -> C64 {
    if (q - ONE).norm() <= 1e-13 {
        return C64::new(n as f64, 0.0);
    }
    if n <= 64 {
        let mut s = ZERO;
        let mut p = ONE;
        for _ in 0..n {
            s += p;
            p *= q;
        }
        return s;
    }
    (ONE - unit_pow(q, n)) / (ONE - q)
}

/// `w_n(ζ) = (1/n) Σ_{j<n} β_j ζ^j`; closed form for constant and
/// trigonometric weights, direct summation otherwise.
pub fn cesaro_weight(beta: &WeightSequence, zeta: C64, n: u64) -> Result<C64> {
    let nf = n as f64;
    match beta {
        WeightSequence::Constant(c) => Ok(c * geometric_sum(zeta, n) / nf),
        WeightSequence::Trig(p) => Ok(p
            .terms()
            .iter()
            .map(|(b, t)| b * geometric_sum(C64::from_polar(1.0, std::f64::consts::TAU * t) * zeta, n))
            .sum::<C64>()
            / nf),
        _ => {
            let mut s = ZERO;
            let mut p = ONE;
            for j in 0..n as usize {
                s += beta.value(j)? * p;
                p *= zeta;
                if j % 1024 == 1023 {
                    p /= p.norm();
                }
            }
            Ok(s / nf)
        }
    }
}
