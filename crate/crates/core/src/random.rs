//! Seeded random algebras and operators for sampling and property suites.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{Block, Operator, Projection, TracialAlgebra};
use crate::linalg::{Mat, C64, ZERO};

/// Generator for sample `index` of a run seeded with `seed`: one ChaCha
/// stream per index, so results do not depend on evaluation order.
pub fn sub_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian_mat<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    Mat::from_fn(n, |_, _| gaussian_c64(rng))
}

/// Haar-distributed unitary: Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    loop {
        let g = gaussian_mat(n, rng);
        let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
        let mut ok = true;
        for j in 0..n {
            let mut v = g.column(j);
            for _ in 0..2 {
                for q in &cols {
                    let dot: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= dot * qi;
                    }
                }
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|z| *z /= norm);
            cols.push(v);
        }
        if ok {
            return Mat::from_fn(n, |i, j| cols[j][i]);
        }
    }
}

/// Algebra with 1..=max_blocks blocks of dimension 1..=max_dim and weights in [0.1, 2).
pub fn random_algebra<R: Rng + ?Sized>(max_blocks: usize, max_dim: usize, rng: &mut R) -> Arc<TracialAlgebra> {
    let k = rng.random_range(1..=max_blocks);
    let blocks = (0..k)
        .map(|_| Block::new(rng.random_range(1..=max_dim), rng.random_range(0.1..2.0)))
        .collect();
    TracialAlgebra::finite(blocks).expect("positive weights and dimensions")
}

/// Algebra with total matrix dimension exactly `dim`, split into random blocks.
pub fn random_algebra_of_dim<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Arc<TracialAlgebra> {
    let mut left = dim;
    let mut blocks = Vec::new();
    while left > 0 {
        let d = rng.random_range(1..=left);
        blocks.push(Block::new(d, rng.random_range(0.1..2.0)));
        left -= d;
    }
    TracialAlgebra::finite(blocks).expect("positive weights and dimensions")
}

fn blockwise<R: Rng + ?Sized>(alg: &Arc<TracialAlgebra>, rng: &mut R, mut f: impl FnMut(usize, &mut R) -> Mat) -> Operator {
    let blocks = alg.layout().iter().map(|b| f(b.dim, rng)).collect();
    Operator::from_blocks(alg, blocks).expect("block shapes match")
}

/// Complex Gaussian entries in every block.
pub fn random_operator<R: Rng + ?Sized>(alg: &Arc<TracialAlgebra>, rng: &mut R) -> Operator {
    blockwise(alg, rng, |n, rng| gaussian_mat(n, rng))
}

/// `(g + g*)/2` for Gaussian `g`.
pub fn random_hermitian<R: Rng + ?Sized>(alg: &Arc<TracialAlgebra>, rng: &mut R) -> Operator {
    blockwise(alg, rng, |n, rng| {
        let g = gaussian_mat(n, rng);
        let h = g.add(&g.adjoint()).scale(C64::new(0.5, 0.0));
        Mat::from_fn(n, |i, j| if i == j { C64::new(h.get(i, i).re, 0.0) } else { h.get(i, j) })
    })
}

/// `g*g / n` for Gaussian `g`; sometimes rank-deficient to exercise kernels.
pub fn random_positive<R: Rng + ?Sized>(alg: &Arc<TracialAlgebra>, rng: &mut R) -> Operator {
    blockwise(alg, rng, |n, rng| {
        let rank = rng.random_range(1..=n);
        let g = Mat::from_fn(n, |i, _| if i < rank { gaussian_c64(rng) } else { ZERO });
        let p = g.adjoint().matmul(&g).scale(C64::new(1.0 / n as f64, 0.0));
        Mat::from_fn(n, |i, j| if i == j { C64::new(p.get(i, i).re, 0.0) } else { p.get(i, j) })
    })
}

/// Projection of uniformly random rank in each block, rotated by a Haar unitary.
pub fn random_projection<R: Rng + ?Sized>(alg: &Arc<TracialAlgebra>, rng: &mut R) -> Projection {
    let op = blockwise(alg, rng, |n, rng| {
        let rank = rng.random_range(0..=n);
        let u = random_unitary(n, rng);
        u.column_projector(0..rank)
    });
    Projection::new(op).expect("column projector is a projection")
}
