use std::sync::Arc;

use nalgebra::DMatrix;
use ncergodic::measure::{
    converges_in_measure, distribution_curve, distribution_lambda, mu_curve, singular_mu, ConvergenceTracker,
};
use ncergodic::random::{random_algebra_of_dim, random_hermitian, random_operator, random_projection, sub_rng};
use ncergodic::{Block, Mat, Operator, TracialAlgebra, C64};
use proptest::prelude::*;
use rand::Rng;

fn to_na(m: &Mat) -> DMatrix<nalgebra::Complex<f64>> {
    DMatrix::from_fn(m.n(), m.n(), |i, j| {
        let z = m.get(i, j);
        nalgebra::Complex::new(z.re, z.im)
    })
}

/// Singular values from nalgebra with their block weights.
fn oracle_atoms(x: &Operator) -> Vec<(f64, f64)> {
    let alg = x.algebra();
    let mut out = Vec::new();
    for (k, b) in alg.finite_blocks().iter().enumerate() {
        for s in to_na(&x.block_mat(k)).singular_values().iter() {
            out.push((*s, b.weight));
        }
    }
    out
}

fn subset_oracle(atoms: &[(f64, f64)], t: f64) -> f64 {
    let n = atoms.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let removed: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| atoms[i].1).sum();
        // a few ulps of room: breakpoints are sums taken in another order
        if removed <= t + 4.0 * f64::EPSILON * removed {
            let kept = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| atoms[i].0).fold(0.0, f64::max);
            best = best.min(kept);
        }
    }
    best
}

#[test]
fn lambda_matches_weighted_eigenvalue_count() {
    let alg = TracialAlgebra::finite(vec![Block::new(6, 0.3)]).unwrap();
    for i in 0..20 {
        let x = random_hermitian(&alg, &mut sub_rng(500, i));
        let eig = to_na(&x.block_mat(0)).symmetric_eigenvalues();
        for k in 0..=40 {
            let t = k as f64 * 0.1;
            let count = eig.iter().filter(|e| e.abs() > t).count() as f64 * 0.3;
            let ours = distribution_lambda(&x, t).unwrap();
            assert!((ours - count).abs() < 1e-12, "t={t}: {ours} vs {count}");
        }
    }
}

#[test]
fn mu_matches_subset_oracle_with_independent_singular_values() {
    for i in 0..200 {
        let mut rng = sub_rng(501, i);
        let d = rng.random_range(1..=10);
        let alg = random_algebra_of_dim(d, &mut rng);
        let x = random_operator(&alg, &mut rng);
        let atoms = oracle_atoms(&x);
        let mut ts = vec![0.0, alg.total_trace()];
        let mut acc = 0.0;
        let mut sorted = atoms.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        for a in &sorted {
            acc += a.1;
            ts.push(acc);
        }
        for _ in 0..5 {
            ts.push(rng.random_range(0.0..1.2 * alg.total_trace()));
        }
        for t in ts {
            let ours = singular_mu(&x, t).unwrap();
            let oracle = subset_oracle(&atoms, t);
            assert!((ours - oracle).abs() <= 1e-12, "trial {i}, t={t}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn mu_is_below_any_sampled_projection() {
    for i in 0..200 {
        let mut rng = sub_rng(502, i);
        let alg = random_algebra_of_dim(rng.random_range(1..=6), &mut rng);
        let x = random_operator(&alg, &mut rng);
        let e = random_projection(&alg, &mut rng);
        // the computed trace of a projection can fall a few ulps short of the exact value
        let t = e.complement().trace().max(0.0) + 1e-9;
        let xe = &x * e.as_operator();
        assert!(singular_mu(&x, t).unwrap() <= xe.operator_norm().unwrap() + 1e-10);
    }
}

#[test]
fn witnesses_certify_the_verdict() {
    let alg = TracialAlgebra::finite(vec![Block::new(3, 0.2), Block::new(2, 0.1)]).unwrap();
    let y = random_operator(&alg, &mut sub_rng(503, 0));
    let xs: Vec<Operator> = (1..=400).map(|n| y.scale_real(1.0 / n as f64)).collect();
    let (eps, delta) = (0.05, 0.15);
    let v = converges_in_measure(&xs, eps, delta).unwrap();
    assert!(v.converged);
    let n0 = v.n0.unwrap();
    for n in n0..=400 {
        let e = &v.witnesses[n - 1];
        assert!((&xs[n - 1] * e.as_operator()).operator_norm().unwrap() <= eps);
        assert!(e.complement().trace() <= delta + 1e-12);
    }
    assert!(!(v.mu_delta[n0 - 2] < eps));
}

#[test]
fn window_atoms_never_converge() {
    let alg = TracialAlgebra::window(1, 50).unwrap();
    let xs: Vec<Operator> = (1..=50).map(|n| Operator::unit_atom(&alg, n).unwrap()).collect();
    let v = converges_in_measure(&xs, 0.5, 0.5).unwrap();
    assert!(!v.converged);
    assert!(v.mu_delta.iter().all(|m| *m == 1.0));
}

#[test]
fn alternating_decay_converges() {
    let alg = TracialAlgebra::finite(vec![Block::new(2, 0.5)]).unwrap();
    let y = random_operator(&alg, &mut sub_rng(504, 0));
    let xs: Vec<Operator> = (1..=200)
        .map(|n| y.scale_real(if n % 2 == 0 { 1.0 } else { -1.0 } / n as f64))
        .collect();
    let v = converges_in_measure(&xs, 0.05, 0.1).unwrap();
    assert!(v.converged);
}

#[test]
fn tracker_agrees_with_batch_rule() {
    let alg = TracialAlgebra::atoms(4, 0.25).unwrap();
    let mut rng = sub_rng(505, 0);
    let xs: Vec<Operator> = (1..=80)
        .map(|n| random_operator(&alg, &mut rng).scale_real(3.0 / n as f64))
        .collect();
    let v = converges_in_measure(&xs, 0.1, 0.3).unwrap();
    let mut t = ConvergenceTracker::new(0.1, 0.3).unwrap();
    for x in &xs {
        t.push(x).unwrap();
    }
    assert_eq!(t.converged(), v.converged);
    assert_eq!(t.n0(), v.n0);
    assert_eq!(t.mu_delta(), &v.mu_delta[..]);
}

#[test]
fn invalid_arguments_are_rejected() {
    let alg = TracialAlgebra::atoms(1, 1.0).unwrap();
    let x = Operator::identity(&alg);
    assert!(distribution_lambda(&x, -1.0).is_err());
    assert!(singular_mu(&x, -1.0).is_err());
    assert!(converges_in_measure(&[], 0.1, 0.1).is_err());
    assert!(converges_in_measure(std::slice::from_ref(&x), 0.0, 0.1).is_err());
    assert!(converges_in_measure(&[x], 0.1, -0.1).is_err());
}

fn arb_operator() -> impl Strategy<Value = Operator> {
    (prop::collection::vec((1usize..=3, 0.05f64..2.0), 1..=3), any::<u64>()).prop_map(|(blocks, seed)| {
        let alg: Arc<TracialAlgebra> =
            TracialAlgebra::finite(blocks.into_iter().map(|(d, w)| Block::new(d, w)).collect()).unwrap();
        random_operator(&alg, &mut sub_rng(seed, 0))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lambda_and_mu_are_non_increasing(x in arb_operator(), a in 0.0f64..4.0, b in 0.0f64..4.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(distribution_lambda(&x, hi).unwrap() <= distribution_lambda(&x, lo).unwrap());
        prop_assert!(singular_mu(&x, hi).unwrap() <= singular_mu(&x, lo).unwrap());
    }

    #[test]
    fn mu_is_the_galois_inverse_of_lambda(x in arb_operator(), t in 0.0f64..4.0) {
        // μ_t = inf{s ≥ 0 : λ_s ≤ t}; the infimum is 0 or a singular value
        let s = x.singular_spectrum().unwrap();
        let candidates = std::iter::once(0.0).chain(s.atoms().iter().map(|a| a.0));
        let inf = candidates
            .filter(|&c| distribution_lambda(&x, c).unwrap() <= t)
            .fold(f64::INFINITY, f64::min);
        prop_assert_eq!(singular_mu(&x, t).unwrap(), inf);
    }

    #[test]
    fn curves_agree_with_pointwise_values(x in arb_operator(), t in 0.0f64..4.0) {
        prop_assert_eq!(mu_curve(&x).unwrap().eval(t), singular_mu(&x, t).unwrap());
        prop_assert_eq!(distribution_curve(&x).unwrap().eval(t), distribution_lambda(&x, t).unwrap());
        prop_assert_eq!(mu_curve(&x).unwrap().norm(), singular_mu(&x, 0.0).unwrap());
    }

    #[test]
    fn mu_vanishes_past_total_trace(x in arb_operator()) {
        let tot = x.algebra().total_trace();
        prop_assert_eq!(singular_mu(&x, tot).unwrap(), 0.0);
        prop_assert_eq!(distribution_lambda(&x, x.operator_norm().unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn scalar_multiples_scale_mu(x in arb_operator(), t in 0.0f64..4.0, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let c = C64::new(re, im);
        let lhs = singular_mu(&x.scale(c), t).unwrap();
        let rhs = c.norm() * singular_mu(&x, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
    }
}
