//! Dense square complex matrices and a cyclic Jacobi Hermitian eigensolver.
//!
//! Blocks in the algebra models are small (dimension ≤ 64 in practice), so a
//! plain row-major `Vec` and O(n³) routines are all that is needed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Relative off-diagonal Frobenius mass at which a Jacobi sweep stops.
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    n: usize,
    data: Vec<C64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Mat { n, data }
    }

    /// Builds a matrix from row-major entries. Panics if `data.len() != n*n`.
    pub fn from_vec(n: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), n * n, "expected {} entries", n * n);
        Mat { n, data }
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Mat::zeros(n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    pub fn real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&v| C64::new(v, 0.0)).collect();
        Mat::diagonal(&d)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn adjoint(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Mat { n, data: out }
    }

    /// `u * self * u^*`
    pub fn conjugate_by(&self, u: &Mat) -> Mat {
        u.matmul(self).matmul(&u.adjoint())
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        Mat {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        Mat {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Mat {
        Mat {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise deviation `max |a_ij - conj(a_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    /// `Σ_k v_k v_k^*` over the given columns of `self`.
    pub fn column_projector(&self, cols: impl IntoIterator<Item = usize>) -> Mat {
        let n = self.n;
        let mut p = Mat::zeros(n);
        for k in cols {
            for i in 0..n {
                let vi = self.get(i, k);
                if vi == ZERO {
                    continue;
                }
                for j in 0..n {
                    p.data[i * n + j] += vi * self.get(j, k).conj();
                }
            }
        }
        p
    }
}

/// Eigenpairs of a Hermitian matrix, eigenvalues in descending order.
/// `vectors` holds eigenvectors as columns (absent when only values were
/// requested).
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Option<Mat>,
}

impl HermitianEigen {
    /// `V f(Λ) V^*`, requires vectors.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Mat {
        let v = self.vectors.as_ref().expect("eigenvectors were not computed");
        let n = v.n();
        let mut out = Mat::zeros(n);
        for (k, &lam) in self.values.iter().enumerate() {
            let fl = f(lam);
            if fl == 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = v.get(i, k) * fl;
                for j in 0..n {
                    out.data[i * n + j] += vi * v.get(j, k).conj();
                }
            }
        }
        out
    }
}

/// Returned when the sweep budget is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoConvergence;

fn off_diagonal_mass(a: &[C64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for a Hermitian matrix.
///
/// The input is symmetrized as `(a + a^*)/2` first. Sweeps visit pairs
/// `(p, q)` in row order, so the result is bit-for-bit reproducible.
pub fn eigh(a: &Mat, want_vectors: bool) -> Result<HermitianEigen, NoConvergence> {
    let n = a.n;
    if n == 1 {
        return Ok(HermitianEigen {
            values: vec![a.data[0].re],
            vectors: want_vectors.then(|| Mat::identity(1)),
        });
    }
    let mut m: Vec<C64> = Mat::from_fn(n, |i, j| (a.get(i, j) + a.get(j, i).conj()) * 0.5).data;
    let mut v = want_vectors.then(|| Mat::identity(n));
    let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_mass(&m, n);
        if off == 0.0 || off <= JACOBI_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut m, v.as_mut(), n, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_mass(&m, n);
        if !(off <= JACOBI_TOL * scale) {
            return Err(NoConvergence);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i].re).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.map(|v| Mat::from_fn(n, |i, k| v.get(i, order[k])));
    Ok(HermitianEigen { values, vectors })
}

/// One Jacobi rotation annihilating `m[p][q]`.
///
/// With `m_pq = |β| e^{iφ}`, the phase `diag(1, e^{-iφ})` makes the pair real
/// symmetric, after which the classical real rotation applies. The combined
/// 2×2 transform is `V = [[c, s], [-s e^{-iφ}, c e^{-iφ}]]` and `m ← V^* m V`.
fn rotate(m: &mut [C64], v: Option<&mut Mat>, n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = m[p * n + p].re;
    let aqq = m[q * n + q].re;
    // Skip negligible entries relative to the diagonal pair.
    if mag <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m[p * n + q] = ZERO;
        m[q * n + p] = ZERO;
        return;
    }
    let phase_conj = (apq / mag).conj();
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let vpp = C64::new(c, 0.0);
    let vpq = C64::new(s, 0.0);
    let vqp = phase_conj * (-s);
    let vqq = phase_conj * c;

    for k in 0..n {
        let akp = m[k * n + p];
        let akq = m[k * n + q];
        m[k * n + p] = akp * vpp + akq * vqp;
        m[k * n + q] = akp * vpq + akq * vqq;
    }
    for k in 0..n {
        let apk = m[p * n + k];
        let aqk = m[q * n + k];
        m[p * n + k] = vpp.conj() * apk + vqp.conj() * aqk;
        m[q * n + k] = vpq.conj() * apk + vqq.conj() * aqk;
    }
    m[p * n + q] = ZERO;
    m[q * n + p] = ZERO;
    m[p * n + p] = C64::new(app - t * mag, 0.0);
    m[q * n + q] = C64::new(aqq + t * mag, 0.0);

    if let Some(v) = v {
        for k in 0..n {
            let a = v.data[k * n + p];
            let b = v.data[k * n + q];
            v.data[k * n + p] = a * vpp + b * vqp;
            v.data[k * n + q] = a * vpq + b * vqq;
        }
    }
}

/// Eigen-decomposition of a unitary matrix: `u = V diag(z) V^*` with `|z_k| = 1`.
#[derive(Clone, Debug)]
pub struct UnitaryEigen {
    pub phases: Vec<C64>,
    pub vectors: Mat,
}

/// Diagonalizes a unitary through the commuting Hermitian pencil
/// `Re u + c·Im u`. Distinct eigenvalues `e^{iφ}` can share a pencil value
/// `cos φ + c sin φ`; each degenerate pencil cluster is split again by
/// diagonalizing `Im u` on its subspace.
pub fn unitary_eigen(u: &Mat) -> Result<UnitaryEigen, NoConvergence> {
    const PENCIL: f64 = 0.577_215_664_901_532_9;
    const CLUSTER: f64 = 1e-8;
    let n = u.n();
    let ua = u.adjoint();
    let re = u.add(&ua).scale(C64::new(0.5, 0.0));
    let im = u.sub(&ua).scale(C64::new(0.0, -0.5));
    let pencil = re.add(&im.scale(C64::new(PENCIL, 0.0)));
    let eig = eigh(&pencil, true)?;
    let mut v = eig.vectors.expect("vectors requested");

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eig.values[end - 1] - eig.values[end] < CLUSTER {
            end += 1;
        }
        let k = end - start;
        if k > 1 {
            let cols = Mat::from_fn(n, |i, a| if a < k { v.get(i, start + a) } else { ZERO });
            let restricted = cols.adjoint().matmul(&im).matmul(&cols);
            let sub = Mat::from_fn(k, |a, b| restricted.get(a, b));
            let rot = eigh(&sub, true)?.vectors.expect("vectors requested");
            for i in 0..n {
                for a in 0..k {
                    let z: C64 = (0..k).map(|b| cols.get(i, b) * rot.get(b, a)).sum();
                    v.set(i, start + a, z);
                }
            }
        }
        start = end;
    }

    let uv = u.matmul(&v);
    let phases = (0..n)
        .map(|k| {
            let z: C64 = (0..n).map(|i| v.get(i, k).conj() * uv.get(i, k)).sum();
            z / z.norm()
        })
        .collect();
    Ok(UnitaryEigen { phases, vectors: v })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hermitian_sample(n: usize, seed: u64) -> Mat {
        // small deterministic LCG; the real random helpers live in `random`
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = Mat::from_fn(n, |_, _| C64::new(next(), next()));
        a.add(&a.adjoint())
    }

    #[test]
    fn jacobi_reconstructs_and_orthonormal() {
        for (n, seed) in [(2, 1), (5, 2), (8, 3), (16, 4)] {
            let a = hermitian_sample(n, seed);
            let e = eigh(&a, true).unwrap();
            let rec = e.reconstruct_with(|x| x);
            assert!(rec.sub(&a).max_abs() < 1e-12, "n={n}");
            let v = e.vectors.as_ref().unwrap();
            let gram = v.adjoint().matmul(v);
            assert!(gram.sub(&Mat::identity(n)).max_abs() < 1e-12);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn jacobi_is_deterministic() {
        let a = hermitian_sample(7, 9);
        let e1 = eigh(&a, true).unwrap();
        let e2 = eigh(&a, true).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
    }

    #[test]
    fn pauli_x_eigenvalues() {
        let x = Mat::from_vec(2, vec![ZERO, ONE, ONE, ZERO]);
        let e = eigh(&x, false).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn complex_offdiagonal_rotation() {
        // [[1, i], [-i, 1]] has eigenvalues 2 and 0
        let i = C64::new(0.0, 1.0);
        let a = Mat::from_vec(2, vec![ONE, i, -i, ONE]);
        let e = eigh(&a, true).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14);
        assert!(e.values[1].abs() < 1e-14);
        assert!(e.reconstruct_with(|x| x).sub(&a).max_abs() < 1e-14);
    }

    #[test]
    fn unitary_eigen_of_phase_matrix() {
        let th = 0.7f64;
        let u = Mat::diagonal(&[ONE, C64::from_polar(1.0, th)]);
        let e = unitary_eigen(&u).unwrap();
        let mut args: Vec<f64> = e.phases.iter().map(|z| z.arg()).collect();
        args.sort_by(f64::total_cmp);
        assert!(args[0].abs() < 1e-14 && (args[1] - th).abs() < 1e-14);
    }

    #[test]
    fn unitary_eigen_of_cyclic_shifts() {
        for n in [2, 3, 4, 8, 12, 16] {
            let u = Mat::from_fn(n, |i, j| if i == (j + 1) % n { ONE } else { ZERO });
            let e = unitary_eigen(&u).unwrap();
            let d = Mat::diagonal(&e.phases);
            let rec = e.vectors.matmul(&d).matmul(&e.vectors.adjoint());
            assert!(rec.sub(&u).max_abs() < 1e-12, "n={n}");
            let gram = e.vectors.adjoint().matmul(&e.vectors);
            assert!(gram.sub(&Mat::identity(n)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn unitary_eigen_with_repeated_phases() {
        let i = C64::new(0.0, 1.0);
        let u = Mat::diagonal(&[ONE, i, ONE, -ONE, i, -i]);
        let e = unitary_eigen(&u).unwrap();
        let rec = e.vectors.matmul(&Mat::diagonal(&e.phases)).matmul(&e.vectors.adjoint());
        assert!(rec.sub(&u).max_abs() < 1e-12);
    }
}
