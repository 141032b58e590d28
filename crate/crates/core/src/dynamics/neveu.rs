//! Finite-model Neveu decomposition `𝟙 = e₁ + e₂`: `e₁` supports an
//! invariant normal state, `e₂` carries a weakly wandering operator.

use crate::algebra::{level_projection, Operator, Projection};
use crate::error::{Error, Result};
use crate::linalg::ONE;

use super::spectral::geometric_sum;
use super::{DynamicalSystem, Overflow, WanderingReport};

/// Longest decay curve computed when certifying a wandering candidate.
const MAX_WANDERING_HORIZON: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeveuOptions {
    /// Density eigenvalues above this belong to `e₁`.
    pub support_tol: f64,
    /// `‖A_n(h)‖∞` must reach this for `h` to count as weakly wandering.
    pub wandering_tol: f64,
}

impl Default for NeveuOptions {
    fn default() -> Self {
        NeveuOptions {
            support_tol: 1e-8,
            wandering_tol: 1e-2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NeveuDecomposition {
    /// Cesàro average of the predual orbit of `φ`, renormalized when its
    /// trace is at least the support tolerance.
    pub rho: Operator,
    pub renormalized: bool,
    /// `‖α′(ρ) - ρ‖₁`
    pub invariance_residual: f64,
    pub e1: Projection,
    pub e2: Projection,
    /// Positive operator supported in `e₂` that passed the wandering check.
    pub h: Option<Operator>,
    pub wandering: Option<WanderingReport>,
}

pub fn neveu_decompose(sys: &DynamicalSystem, phi: &Operator, n: u64, tol: f64) -> Result<NeveuDecomposition> {
    neveu_decompose_with(
        sys,
        phi,
        n,
        NeveuOptions {
            support_tol: tol,
            ..NeveuOptions::default()
        },
    )
}

/// On the window, mass carried past the edge by the predual orbit is dropped:
/// it has escaped to infinity and no longer contributes to the average.
pub fn neveu_decompose_with(
    sys: &DynamicalSystem,
    phi: &Operator,
    n: u64,
    opts: NeveuOptions,
) -> Result<NeveuDecomposition> {
    if n == 0 {
        return Err(Error::arg("n", "must be ≥ 1"));
    }
    if !(opts.support_tol > 0.0) {
        return Err(Error::arg("tol", format!("must be > 0, got {}", opts.support_tol)));
    }
    let alg = sys.algebra();
    if phi.algebra().as_ref() != alg.as_ref() {
        return Err(Error::AlgebraMismatch);
    }
    phi.check_positive()?;
    if alg.window_spec().is_none() && (phi.trace().re - 1.0).abs() > 1e-9 {
        return Err(Error::arg("phi", format!("density must have trace 1, got {}", phi.trace().re)));
    }

    let rho = cesaro_density(sys, phi, n)?;
    let tr = rho.trace().re;
    let renormalized = tr >= opts.support_tol;
    let rho = if renormalized { rho.scale_real(1.0 / tr) } else { rho };

    let moved = sys.backward_action().apply(&rho, Overflow::Drop)?;
    let invariance_residual = (&moved - &rho).trace_norm()?;

    let e1 = level_projection(&rho.real_part(), opts.support_tol)?;
    let e2 = e1.complement();

    let (h, wandering) = if e2.is_zero() {
        (None, None)
    } else {
        find_wandering(sys, &e2, n, opts.wandering_tol)?
    };

    Ok(NeveuDecomposition {
        rho,
        renormalized,
        invariance_residual,
        e1,
        e2,
        h,
        wandering,
    })
}

/// `(1/n) Σ_{j<n} α′^j(φ)` with escaping translation. Matrix blocks use the
/// closed form when available, so `n` may be astronomically large; window
/// orbits stop as soon as all mass has escaped.
fn cesaro_density(sys: &DynamicalSystem, phi: &Operator, n: u64) -> Result<Operator> {
    let alg = sys.algebra();
    let nfin = alg.finite_blocks().len();
    let spectral = if nfin > 0 { sys.spectral_form()? } else { None };

    let (mut total, rest) = match &spectral {
        Some(sf) => {
            let fin = sf.transform(phi, |z| Ok(geometric_sum(z, n) / n as f64))?;
            let mut win = phi.clone();
            for i in 0..nfin {
                let d = alg.finite_blocks()[i].dim;
                win.set_block(i, &crate::linalg::Mat::zeros(d));
            }
            (fin, win)
        }
        None => (Operator::zero(alg), phi.clone()),
    };

    let mut sum = Operator::zero(alg);
    for (j, y) in sys.escaping_orbit(&rest, true).enumerate() {
        if j as u64 >= n {
            break;
        }
        let y = y?;
        if y.is_zero() {
            break;
        }
        sum.axpy(ONE, &y);
    }
    total.axpy(ONE.scale(1.0 / n as f64), &sum);
    Ok(total)
}

/// Tries the `e₂` window atom with the longest forward run inside the window,
/// then `e₂` itself.
fn find_wandering(
    sys: &DynamicalSystem,
    e2: &Projection,
    n: u64,
    tol: f64,
) -> Result<(Option<Operator>, Option<WanderingReport>)> {
    let alg = sys.algebra();
    let shift = sys.forward_action().shift;
    let mut candidates: Vec<(Operator, usize)> = Vec::new();

    if let (Some(w), true) = (alg.window_spec(), shift != 0) {
        let best = (w.lo..=w.hi)
            .filter(|&s| e2.as_operator().site_value(s).is_some_and(|v| v.re > 0.5))
            .map(|s| {
                let room = if shift > 0 { (w.hi - s) / shift } else { (s - w.lo) / -shift };
                (room, s)
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((room, site)) = best {
            candidates.push((Operator::unit_atom(alg, site)?, room as usize + 1));
        }
    }
    candidates.push((e2.as_operator().clone(), usize::MAX));

    let mut last = None;
    for (h, room) in candidates {
        let horizon = (n.min(MAX_WANDERING_HORIZON as u64) as usize).min(room).max(1);
        match sys.is_weakly_wandering(&h, horizon, tol) {
            Ok(report) if report.weakly_wandering => return Ok((Some(h), Some(report))),
            Ok(report) => last = Some(report),
            Err(Error::WindowOverflow { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((None, last))
}
