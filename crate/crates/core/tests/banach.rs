use std::sync::Arc;

use nalgebra::DMatrix;
use ncergodic::banach::{
    chebyshev_check, closure_experiment, estimate_c, stochastic_ergodic_run, DomainNorm, ErgodicFamily,
    IdentityFamily, LimitSource, OperatorFamily, ScaledIdentityFamily, Verdict,
};
use ncergodic::dynamics::{Automorphism, DynamicalSystem};
use ncergodic::random::{random_hermitian, random_operator, random_unitary, sub_rng};
use ncergodic::sequences::{RotationSystem, WeightSequence, GOLDEN};
use ncergodic::{Block, Error, Execution, Mat, Operator, Result, TracialAlgebra, C64};
use rand::Rng;

fn grid() -> Vec<f64> {
    (0..7).map(|k| (1u32 << k) as f64).collect()
}

#[test]
fn chebyshev_examples() {
    let alg = TracialAlgebra::atoms(1, 1.0).unwrap();
    let r = chebyshev_check(&Operator::identity(&alg), 2.0).unwrap();
    assert!(r.holds);
    assert_eq!(r.lhs, 0.0);

    let alg = TracialAlgebra::atoms(2, 0.5).unwrap();
    let a = Operator::real_diagonal(&alg, &[2.0, 0.0]).unwrap();
    let r = chebyshev_check(&a, 1.0).unwrap();
    assert!(r.holds);
    assert_eq!((r.lhs, r.rhs), (0.5, 1.0));
    assert_eq!(r.slack, 0.5);

    assert!(matches!(chebyshev_check(&a, 0.0), Err(Error::InvalidArgument { .. })));
    assert!(chebyshev_check(&a, -1.0).is_err());
}

#[test]
fn chebyshev_holds_on_random_operators() {
    for i in 0..1000 {
        let mut rng = sub_rng(301, i);
        let alg = ncergodic::random::random_algebra(3, 4, &mut rng);
        let a = random_operator(&alg, &mut rng);
        let lambda = rng.random_range(0.01..5.0);
        let r = chebyshev_check(&a, lambda).unwrap();
        assert!(r.holds, "trial {i}: {r:?}");
    }
}

#[test]
fn empty_grid_and_zero_samples_are_rejected() {
    let alg = TracialAlgebra::atoms(2, 0.5).unwrap();
    let fam = IdentityFamily { alg, horizon: 4, norm: DomainNorm::Trace };
    assert!(estimate_c(&fam, 4, &[], 0, Execution::Sequential).is_err());
    assert!(estimate_c(&fam, 0, &[1.0], 0, Execution::Sequential).is_err());
    assert!(estimate_c(&fam, 1, &[0.0], 0, Execution::Sequential).is_err());
}

#[test]
fn identity_family_is_chebyshev_dominated() {
    let alg = TracialAlgebra::finite(vec![Block::new(3, 0.1), Block::new(2, 0.2)]).unwrap();
    let fam = IdentityFamily { alg: alg.clone(), horizon: 3, norm: DomainNorm::Trace };
    let c = estimate_c(&fam, 100, &grid(), 7, Execution::default()).unwrap();
    assert!(c.is_non_increasing());
    assert!(c.chebyshev_violations.is_empty(), "{:?}", c.values);
    assert!(!c.uniform_boundedness_violated);
    for (l, v) in c.lambdas.iter().zip(&c.values) {
        assert!(*v <= 1.0 / l + 1e-9);
        assert!((0.0..=alg.total_trace() + 1e-12).contains(v));
    }
}

#[test]
fn scaled_identity_is_flagged() {
    let alg = TracialAlgebra::atoms(3, 1.0 / 3.0).unwrap();
    let fam = ScaledIdentityFamily { alg, horizon: 1000, norm: DomainNorm::Trace };
    let c = estimate_c(&fam, 20, &grid(), 3, Execution::default()).unwrap();
    assert!(c.uniform_boundedness_violated);
    assert!(c.summary().starts_with("uniform boundedness violated"));
}

#[test]
fn predual_averages_are_chebyshev_dominated() {
    let alg = TracialAlgebra::finite(vec![Block::new(2, 0.25), Block::new(2, 0.25), Block::new(1, 0.5)]).unwrap();
    let mut rng = sub_rng(310, 0);
    let alpha = Automorphism::Compose(vec![
        Automorphism::Inner(vec![random_unitary(2, &mut rng), random_unitary(2, &mut rng), Mat::identity(1)]),
        Automorphism::BlockPermutation(vec![1, 0, 2]),
    ]);
    let sys = Arc::new(DynamicalSystem::new(&alg, alpha).unwrap());
    let fam = ErgodicFamily::predual_averages(sys, 64);
    let c = estimate_c(&fam, 200, &grid(), 11, Execution::default()).unwrap();
    assert!(c.is_non_increasing());
    assert!(c.chebyshev_violations.is_empty(), "{:?}", c.values);
    assert!(!c.uniform_boundedness_violated);
}

#[test]
fn estimate_c_is_independent_of_execution() {
    let alg = TracialAlgebra::atoms(5, 0.2).unwrap();
    let sys = Arc::new(DynamicalSystem::new(&alg, Automorphism::cyclic(5)).unwrap());
    let fam = ErgodicFamily::predual_averages(sys, 16);
    let a = estimate_c(&fam, 32, &grid(), 5, Execution::Parallel).unwrap();
    let b = estimate_c(&fam, 32, &grid(), 5, Execution::Sequential).unwrap();
    assert_eq!(a.values, b.values);
    let other = estimate_c(&fam, 32, &grid(), 6, Execution::Sequential).unwrap();
    assert_eq!(other.seed, 6);
}

#[test]
fn family_averages_are_linear() {
    let alg = TracialAlgebra::finite(vec![Block::new(3, 0.3)]).unwrap();
    let mut rng = sub_rng(320, 0);
    let sys = Arc::new(DynamicalSystem::new(&alg, Automorphism::Inner(vec![random_unitary(3, &mut rng)])).unwrap());
    let fam = ErgodicFamily {
        sys,
        beta: WeightSequence::geometric(GOLDEN),
        predual: true,
        horizon: 10,
        norm: DomainNorm::Trace,
    };
    for n in [1, 3, 10] {
        let x = random_operator(&alg, &mut rng);
        let y = random_operator(&alg, &mut rng);
        let a = C64::new(0.3, -1.2);
        let lhs = fam.average(n, &(&x.scale(a) + &y)).unwrap();
        let rhs = &fam.average(n, &x).unwrap().scale(a) + &fam.average(n, &y).unwrap();
        assert!((&lhs - &rhs).max_abs_entry() <= 1e-10);
    }
}

#[test]
fn ergodic_family_run_agrees_with_average() {
    let alg = TracialAlgebra::atoms(4, 0.25).unwrap();
    let sys = Arc::new(DynamicalSystem::new(&alg, Automorphism::cyclic(4)).unwrap());
    for predual in [true, false] {
        let fam = ErgodicFamily {
            sys: sys.clone(),
            beta: WeightSequence::geometric(0.3),
            predual,
            horizon: 9,
            norm: DomainNorm::Operator,
        };
        let x = random_operator(&alg, &mut sub_rng(321, predual as u64));
        fam.run(&x, 9, &mut |n, a| {
            assert!((a - &fam.average(n, &x)?).max_abs_entry() <= 1e-12);
            Ok(())
        })
        .unwrap();
    }
}

fn cyclic_family(n: usize, horizon: usize) -> ErgodicFamily {
    let alg = TracialAlgebra::atoms(n, 1.0 / n as f64).unwrap();
    let sys = Arc::new(DynamicalSystem::new(&alg, Automorphism::cyclic(n)).unwrap());
    ErgodicFamily::predual_averages(sys, horizon)
}

#[test]
fn closure_with_constant_approximants_passes() {
    let fam = cyclic_family(3, 2000);
    let b = Operator::real_diagonal(fam.algebra(), &[1.0, -2.0, 0.5]).unwrap();
    let r = closure_experiment(&fam, &b, &vec![b.clone(); 4], 1e-2, 1e-2).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{}", r.reason);
    assert_eq!(r.chosen, Some(0));
    assert_eq!(r.j_star, 9);
    assert_eq!(r.part_level, 1.0 / 512.0);
    assert_eq!(r.limit_source, LimitSource::ClosedForm);
}

#[test]
fn closure_with_geometric_approximants_passes() {
    let fam = cyclic_family(3, 10_000);
    let alg = fam.algebra().clone();
    let b = Operator::real_diagonal(&alg, &[1.0, -2.0, 0.5]).unwrap();
    let y = random_hermitian(&alg, &mut sub_rng(330, 0));
    let approximants: Vec<Operator> =
        (1..=20).map(|k| &b + &y.scale_real(0.5f64.powi(k))).collect();
    let r = closure_experiment(&fam, &b, &approximants, 1e-2, 1e-2).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{}", r.reason);
    assert!(r.part1 < r.part_level && r.part3 < r.part_level);
    let n0 = r.measured_n0.unwrap();
    assert!(n0 <= 10_000);
    assert!(r.mu_delta[n0 - 1..].iter().all(|m| *m < 1e-2));
    if n0 > 1 {
        assert!(r.mu_delta[n0 - 2] >= 1e-2);
        assert_eq!(r.first_violation.unwrap().0, n0 - 1);
    }
}

/// `A_n = (-1)^n id`: bounded but never convergent.
struct Alternating(Arc<TracialAlgebra>);

impl OperatorFamily for Alternating {
    fn description(&self) -> String {
        "(-1)^n id".into()
    }
    fn horizon(&self) -> usize {
        200
    }
    fn domain_norm(&self) -> DomainNorm {
        DomainNorm::Trace
    }
    fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.0
    }
    fn average(&self, n: usize, b: &Operator) -> Result<Operator> {
        Ok(if n.is_multiple_of(2) { b.clone() } else { -b })
    }
}

#[test]
fn closure_declines_when_approximants_do_not_converge() {
    let alg = TracialAlgebra::atoms(2, 0.5).unwrap();
    let fam = Alternating(alg.clone());
    let b = Operator::real_diagonal(&alg, &[1.0, 2.0]).unwrap();
    let y = Operator::real_diagonal(&alg, &[1.0, 0.0]).unwrap();
    let approximants: Vec<Operator> = (1..=20).map(|k| &b + &y.scale_real(0.5f64.powi(k))).collect();
    let r = closure_experiment(&fam, &b, &approximants, 1e-2, 1e-2).unwrap();
    assert_eq!(r.verdict, Verdict::Declined);
    assert!(r.reason.contains("do not converge"), "{}", r.reason);

    // approximants that move away from b
    let away: Vec<Operator> = (1..=5).map(|k| &b + &y.scale_real(k as f64)).collect();
    let r = closure_experiment(&fam, &b, &away, 1e-2, 1e-2).unwrap();
    assert_eq!(r.verdict, Verdict::Declined);
    assert!(r.reason.contains("do not approach"));
}

#[test]
fn stochastic_run_on_cyclic_permutation() {
    let alg = TracialAlgebra::atoms(5, 0.2).unwrap();
    let sys = DynamicalSystem::new(&alg, Automorphism::cyclic(5)).unwrap();
    let x = Operator::real_diagonal(&alg, &[3.0, -1.0, 0.0, 2.0, 1.0]).unwrap();
    let r = stochastic_ergodic_run(&sys, &x, &WeightSequence::ones(), 1000, 1e-6, 1e-6).unwrap();
    assert_eq!(r.limit_source, LimitSource::ClosedForm);
    assert!((&r.limit - &Operator::scalar(&alg, C64::new(1.0, 0.0))).max_abs_entry() < 1e-12);
    assert!(r.converged);
    assert!(r.n0.unwrap() <= 1000);
    // exact at multiples of the cycle length
    assert!(r.rows[4].sup_norm < 1e-12 && r.rows[999].sup_norm < 1e-12);
}

#[test]
fn stochastic_run_with_geometric_weights_and_identity() {
    let alg = TracialAlgebra::finite(vec![Block::new(2, 0.5)]).unwrap();
    let sys = DynamicalSystem::new(&alg, Automorphism::identity()).unwrap();
    let x = random_hermitian(&alg, &mut sub_rng(340, 0));
    let x = x.scale_real(1.0 / x.operator_norm().unwrap());
    let lambda = C64::from_polar(1.0, std::f64::consts::TAU * GOLDEN);
    let r = stochastic_ergodic_run(&sys, &x, &WeightSequence::geometric(GOLDEN), 5000, 1e-3, 1e-3).unwrap();
    assert!(r.limit.is_zero());
    for row in &r.rows {
        assert!(row.mu_delta <= 2.0 / (row.n as f64 * (C64::new(1.0, 0.0) - lambda).norm()) + 1e-12);
    }
    assert!(r.converged);
}

#[test]
fn stochastic_run_rejects_short_horizon() {
    let alg = TracialAlgebra::atoms(2, 0.5).unwrap();
    let sys = DynamicalSystem::new(&alg, Automorphism::cyclic(2)).unwrap();
    let x = Operator::identity(&alg);
    assert!(stochastic_ergodic_run(&sys, &x, &WeightSequence::ones(), 1, 0.1, 0.1).is_err());
    let short = WeightSequence::Explicit(vec![C64::new(1.0, 0.0); 3]);
    assert!(stochastic_ergodic_run(&sys, &x, &short, 10, 0.1, 0.1).is_err());
}

#[test]
fn stochastic_run_falls_back_to_tail_average_on_windows() {
    let alg = TracialAlgebra::window(0, 2000).unwrap();
    let sys = DynamicalSystem::new(&alg, Automorphism::Translation(1)).unwrap();
    let x = Operator::unit_atom(&alg, 0).unwrap();
    let r = stochastic_ergodic_run(&sys, &x, &WeightSequence::ones(), 1000, 1e-2, 1e-2);
    // the predual orbit walks toward lower sites and leaves the window
    assert!(matches!(r, Err(Error::WindowOverflow { .. })));
    let x = Operator::unit_atom(&alg, 2000).unwrap();
    let r = stochastic_ergodic_run(&sys, &x, &WeightSequence::ones(), 1000, 1e-2, 1e-2).unwrap();
    assert_eq!(r.limit_source, LimitSource::TailAverage);
    assert!(r.converged);
}

fn to_na(m: &Mat) -> DMatrix<nalgebra::Complex<f64>> {
    DMatrix::from_fn(m.n(), m.n(), |i, j| {
        let z = m.get(i, j);
        nalgebra::Complex::new(z.re, z.im)
    })
}

/// Cesàro limit of `(λS)^j x` with `S(y) = u* y u`: orthogonal projection of
/// `vec(x)` onto `ker(I - λS)`.
fn limit_oracle(u: &Mat, lambda: C64, x: &Mat) -> Mat {
    let d = u.n();
    let un = to_na(u);
    let lam = nalgebra::Complex::new(lambda.re, lambda.im);
    let s = un.transpose().kronecker(&un.adjoint()) * lam;
    let id = DMatrix::<nalgebra::Complex<f64>>::identity(d * d, d * d);
    let svd = (&id - &s).svd(false, true);
    let vt = svd.v_t.unwrap();
    let xv = DMatrix::from_column_slice(d * d, 1, to_na(x).as_slice());
    let mut out = DMatrix::<nalgebra::Complex<f64>>::zeros(d * d, 1);
    for (k, sv) in svd.singular_values.iter().enumerate() {
        if *sv < 1e-8 {
            let row = vt.row(k).adjoint();
            let c = (row.adjoint() * &xv)[(0, 0)];
            out += row * c;
        }
    }
    Mat::from_fn(d, |i, j| {
        let z = out[(j * d + i, 0)];
        C64::new(z.re, z.im)
    })
}

#[test]
fn limit_oracle_finds_fixed_points() {
    // u diagonal with λ = 1: diagonal entries are fixed, off-diagonal rotate
    let u = Mat::diagonal(&[C64::new(1.0, 0.0), C64::from_polar(1.0, 1.0)]);
    let x = Mat::from_fn(2, |i, j| C64::new((i + 2 * j) as f64, 1.0));
    let l = limit_oracle(&u, C64::new(1.0, 0.0), &x);
    assert!((l.get(0, 0) - x.get(0, 0)).norm() < 1e-12);
    assert!((l.get(1, 1) - x.get(1, 1)).norm() < 1e-12);
    assert!(l.get(0, 1).norm() < 1e-12 && l.get(1, 0).norm() < 1e-12);
}

#[test]
fn golden_weighted_run_on_random_inner_converges() {
    let alg = TracialAlgebra::finite(vec![Block::new(4, 0.25)]).unwrap();
    let mut rng = sub_rng(350, 0);
    let u = random_unitary(4, &mut rng);
    let sys = DynamicalSystem::new(&alg, Automorphism::Inner(vec![u.clone()])).unwrap();
    let x = random_operator(&alg, &mut rng);
    let lambda = C64::from_polar(1.0, std::f64::consts::TAU * GOLDEN);
    let r = stochastic_ergodic_run(&sys, &x, &WeightSequence::geometric(GOLDEN), 20_000, 1e-3, 1e-3).unwrap();
    let oracle = limit_oracle(&u, lambda, &x.block_mat(0));
    assert!(r.limit.block_mat(0).sub(&oracle).max_abs() < 1e-10);
    assert!(r.converged, "last μ = {:?}", r.rows.last());
}

#[test]
fn resonant_weights_have_nonzero_limit() {
    // off-diagonal entries rotate by e^{±2πiθ} under the predual, so both
    // geometric weights e^{±2πiθj} resonate with one of them
    let theta = GOLDEN;
    let u = Mat::diagonal(&[C64::new(1.0, 0.0), C64::from_polar(1.0, std::f64::consts::TAU * theta)]);
    let alg = TracialAlgebra::finite(vec![Block::new(2, 0.5)]).unwrap();
    let sys = DynamicalSystem::new(&alg, Automorphism::Inner(vec![u.clone()])).unwrap();
    let x = Operator::from_blocks(&alg, vec![Mat::from_fn(2, |_, _| C64::new(1.0, 0.0))]).unwrap();
    for w in [theta, 1.0 - theta] {
        let lambda = C64::from_polar(1.0, std::f64::consts::TAU * w);
        let r = stochastic_ergodic_run(&sys, &x, &WeightSequence::geometric(w), 2000, 1e-3, 1e-3).unwrap();
        let oracle = limit_oracle(&u, lambda, &x.block_mat(0));
        assert!(r.limit.block_mat(0).sub(&oracle).max_abs() < 1e-10);
        assert!(oracle.max_abs() > 0.5);
        assert!(r.converged);
    }
}

#[test]
fn indicator_weighted_run_converges() {
    let alg = TracialAlgebra::finite(vec![Block::new(4, 0.25)]).unwrap();
    let mut rng = sub_rng(360, 0);
    let u = random_unitary(4, &mut rng);
    let sys = DynamicalSystem::new(&alg, Automorphism::Inner(vec![u.clone()])).unwrap();
    let x = random_operator(&alg, &mut rng);
    let rot = RotationSystem::new(GOLDEN, 0.0, 0.0, 0.5).unwrap();
    let beta = WeightSequence::normalized_indicator(rot);
    let r = stochastic_ergodic_run(&sys, &x, &beta, 100_000, 1e-2, 1e-2).unwrap();
    assert_eq!(r.limit_source, LimitSource::ClosedForm);
    assert!(r.converged, "n0 = {:?}, last = {:?}", r.n0, r.rows.last());

    // cross-check: the trigonometric approximant's limit from the superoperator oracle
    let p = rot.fourier_approximant(40).unwrap();
    let mut approx = Mat::zeros(4);
    for (b, t) in p.terms() {
        let lambda = C64::from_polar(1.0, std::f64::consts::TAU * t);
        approx = approx.add(&limit_oracle(&u, lambda, &x.block_mat(0)).scale(*b * (1.0 / rot.measure())));
    }
    assert!(r.limit.block_mat(0).sub(&approx).max_abs() < 1e-8);
}
