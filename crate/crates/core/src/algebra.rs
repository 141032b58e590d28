//! Finite tracial algebra models and their operators.
//!
//! A [`TracialAlgebra`] is a direct sum of weighted matrix blocks, optionally
//! followed by an atomic window: the sites `lo..=hi` of ℤ, each a 1×1 block of
//! trace weight 1. With no window the trace is finite; the window stands in for
//! a patch of the counting trace on ℤ.
//!
//! Operators store all block entries in one flat row-major buffer. Window
//! atoms are ordinary 1×1 blocks, so every block-wise routine covers both
//! models without special cases.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, HermitianEigen, Mat, C64, ONE, ZERO};

/// Max-entry deviation allowed for an operator to count as self-adjoint,
/// relative to `max(1, max |x_ij|)`.
pub const SELF_ADJOINT_TOL: f64 = 1e-12;
/// Allowed `‖e² - e‖∞` for a projection.
pub const PROJECTION_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are merged into one spectral projector.
pub const DEFAULT_CLUSTER_GAP: f64 = 1e-9;
/// Eigenvalue tolerance used to read off the range intersection of two projections.
pub const MEET_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub dim: usize,
    pub weight: f64,
}

impl Block {
    pub fn new(dim: usize, weight: f64) -> Self {
        Block { dim, weight }
    }
}

/// Integer interval `lo..=hi` of sites with counting trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, site: i64) -> bool {
        site >= self.lo && site <= self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMode {
    /// Matrix blocks only; `τ(𝟙)` finite.
    Finite,
    /// Window atoms only.
    AtomicWindow,
    /// Matrix blocks followed by a window.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockLayout {
    pub offset: usize,
    pub dim: usize,
    pub weight: f64,
}

/// Serialized shape of an algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraSpec {
    #[serde(default)]
    pub blocks: Vec<Block>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "AlgebraSpec", into = "AlgebraSpec")]
pub struct TracialAlgebra {
    blocks: Vec<Block>,
    window: Option<Window>,
    layout: Vec<BlockLayout>,
    len: usize,
    total_trace: f64,
}

impl PartialEq for TracialAlgebra {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks && self.window == other.window
    }
}

impl TryFrom<AlgebraSpec> for TracialAlgebra {
    type Error = Error;

    fn try_from(spec: AlgebraSpec) -> Result<Self> {
        TracialAlgebra::new(spec.blocks, spec.window)
    }
}

impl From<TracialAlgebra> for AlgebraSpec {
    fn from(a: TracialAlgebra) -> Self {
        AlgebraSpec {
            blocks: a.blocks,
            window: a.window,
        }
    }
}

impl TracialAlgebra {
    pub fn new(blocks: Vec<Block>, window: Option<Window>) -> Result<Self> {
        if blocks.is_empty() && window.is_none() {
            return Err(Error::InvalidAlgebra("no blocks and no window".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(Error::InvalidAlgebra(format!("block {i}: dim must be positive")));
            }
            if !(b.weight > 0.0) || !b.weight.is_finite() {
                return Err(Error::InvalidAlgebra(format!(
                    "block {i}: weight must be positive and finite, got {}",
                    b.weight
                )));
            }
        }
        if let Some(w) = window {
            if w.is_empty() {
                return Err(Error::InvalidAlgebra(format!(
                    "window [{}, {}] is empty",
                    w.lo, w.hi
                )));
            }
        }
        let mut layout = Vec::new();
        let mut offset = 0;
        let mut total = 0.0;
        for b in &blocks {
            layout.push(BlockLayout {
                offset,
                dim: b.dim,
                weight: b.weight,
            });
            offset += b.dim * b.dim;
            total += b.weight * b.dim as f64;
        }
        if let Some(w) = window {
            for _ in 0..w.len() {
                layout.push(BlockLayout {
                    offset,
                    dim: 1,
                    weight: 1.0,
                });
                offset += 1;
            }
            total += w.len() as f64;
        }
        Ok(TracialAlgebra {
            blocks,
            window,
            layout,
            len: offset,
            total_trace: total,
        })
    }

    /// Finite-trace algebra `⊕ M_{d_i}` with trace `Σ w_i Tr`.
    pub fn finite(blocks: Vec<Block>) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(blocks, None)?))
    }

    /// `n` one-dimensional blocks of weight `weight` each.
    pub fn atoms(n: usize, weight: f64) -> Result<Arc<Self>> {
        Self::finite(vec![Block::new(1, weight); n])
    }

    /// Atomic window `lo..=hi` with counting trace.
    pub fn window(lo: i64, hi: i64) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(Vec::new(), Some(Window { lo, hi }))?))
    }

    pub fn mode(&self) -> TraceMode {
        match (self.blocks.is_empty(), self.window.is_some()) {
            (_, false) => TraceMode::Finite,
            (true, true) => TraceMode::AtomicWindow,
            (false, true) => TraceMode::Mixed,
        }
    }

    /// The matrix blocks (window atoms excluded).
    pub fn finite_blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn window_spec(&self) -> Option<Window> {
        self.window
    }

    /// All blocks including window atoms.
    pub fn layout(&self) -> &[BlockLayout] {
        &self.layout
    }

    pub fn num_blocks(&self) -> usize {
        self.layout.len()
    }

    /// Length of the flat entry buffer of an operator.
    pub fn buffer_len(&self) -> usize {
        self.len
    }

    /// `τ(𝟙)`; for window models this is the atom count of the window.
    pub fn total_trace(&self) -> f64 {
        self.total_trace
    }

    /// Total matrix dimension `Σ d_i` (window atoms included).
    pub fn total_dim(&self) -> usize {
        self.layout.iter().map(|b| b.dim).sum()
    }

    /// Block index of a window site.
    pub fn site_block(&self, site: i64) -> Option<usize> {
        let w = self.window?;
        w.contains(site)
            .then(|| self.blocks.len() + (site - w.lo) as usize)
    }

    /// Window site of a block index, if the block is a window atom.
    pub fn block_site(&self, block: usize) -> Option<i64> {
        let w = self.window?;
        (block >= self.blocks.len() && block < self.layout.len())
            .then(|| w.lo + (block - self.blocks.len()) as i64)
    }

    pub fn spec(&self) -> AlgebraSpec {
        self.clone().into()
    }
}

impl fmt::Display for TracialAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<String> = self
            .blocks
            .iter()
            .map(|b| format!("M{}(w={})", b.dim, b.weight))
            .collect();
        write!(f, "{}", blocks.join(" ⊕ "))?;
        if let Some(w) = self.window {
            if !self.blocks.is_empty() {
                write!(f, " ⊕ ")?;
            }
            write!(f, "ℓ∞[{}, {}]", w.lo, w.hi)?;
        }
        Ok(())
    }
}

fn same_algebra(a: &Arc<TracialAlgebra>, b: &Arc<TracialAlgebra>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Block-diagonal operator in a [`TracialAlgebra`].
#[derive(Clone, Debug)]
pub struct Operator {
    alg: Arc<TracialAlgebra>,
    data: Vec<C64>,
}

impl PartialEq for Operator {
    fn eq(&self, other: &Self) -> bool {
        same_algebra(&self.alg, &other.alg) && self.data == other.data
    }
}

impl Operator {
    pub fn zero(alg: &Arc<TracialAlgebra>) -> Self {
        Operator {
            alg: alg.clone(),
            data: vec![ZERO; alg.len],
        }
    }

    pub fn identity(alg: &Arc<TracialAlgebra>) -> Self {
        Self::scalar(alg, ONE)
    }

    pub fn scalar(alg: &Arc<TracialAlgebra>, c: C64) -> Self {
        let mut op = Self::zero(alg);
        for b in &alg.layout {
            for i in 0..b.dim {
                op.data[b.offset + i * b.dim + i] = c;
            }
        }
        op
    }

    pub fn from_blocks(alg: &Arc<TracialAlgebra>, blocks: Vec<Mat>) -> Result<Self> {
        if blocks.len() != alg.num_blocks() {
            return Err(Error::Shape(format!(
                "expected {} blocks, got {}",
                alg.num_blocks(),
                blocks.len()
            )));
        }
        let mut data = Vec::with_capacity(alg.len);
        for (i, (m, b)) in blocks.into_iter().zip(&alg.layout).enumerate() {
            if m.n() != b.dim {
                return Err(Error::Shape(format!(
                    "block {i}: expected dimension {}, got {}",
                    b.dim,
                    m.n()
                )));
            }
            data.extend(m.into_vec());
        }
        Ok(Operator {
            alg: alg.clone(),
            data,
        })
    }

    /// Builds an operator from its flat entry buffer.
    pub fn from_raw(alg: &Arc<TracialAlgebra>, data: Vec<C64>) -> Result<Self> {
        if data.len() != alg.len {
            return Err(Error::Shape(format!(
                "expected {} entries, got {}",
                alg.len,
                data.len()
            )));
        }
        Ok(Operator {
            alg: alg.clone(),
            data,
        })
    }

    /// Diagonal operator; `diag` lists the diagonal of every block in order.
    pub fn diagonal(alg: &Arc<TracialAlgebra>, diag: &[C64]) -> Result<Self> {
        if diag.len() != alg.total_dim() {
            return Err(Error::Shape(format!(
                "expected {} diagonal entries, got {}",
                alg.total_dim(),
                diag.len()
            )));
        }
        let mut op = Self::zero(alg);
        let mut k = 0;
        for b in &alg.layout {
            for i in 0..b.dim {
                op.data[b.offset + i * b.dim + i] = diag[k];
                k += 1;
            }
        }
        Ok(op)
    }

    pub fn real_diagonal(alg: &Arc<TracialAlgebra>, diag: &[f64]) -> Result<Self> {
        let d: Vec<C64> = diag.iter().map(|&v| C64::new(v, 0.0)).collect();
        Self::diagonal(alg, &d)
    }

    /// Projection onto a single window site.
    pub fn unit_atom(alg: &Arc<TracialAlgebra>, site: i64) -> Result<Self> {
        let block = alg.site_block(site).ok_or_else(|| {
            Error::arg("site", format!("site {site} is not in the window of {alg}"))
        })?;
        let mut op = Self::zero(alg);
        op.data[alg.layout[block].offset] = ONE;
        Ok(op)
    }

    /// Rank-one projection `e_ii` inside block `block`.
    pub fn matrix_unit(alg: &Arc<TracialAlgebra>, block: usize, i: usize) -> Result<Self> {
        let b = alg
            .layout
            .get(block)
            .ok_or_else(|| Error::arg("block", format!("no block {block}")))?;
        if i >= b.dim {
            return Err(Error::arg("i", format!("index {i} out of block dimension {}", b.dim)));
        }
        let mut op = Self::zero(alg);
        op.data[b.offset + i * b.dim + i] = ONE;
        Ok(op)
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.alg
    }

    pub fn raw(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn block(&self, i: usize) -> &[C64] {
        let b = self.alg.layout[i];
        &self.data[b.offset..b.offset + b.dim * b.dim]
    }

    pub fn block_mat(&self, i: usize) -> Mat {
        let b = self.alg.layout[i];
        Mat::from_vec(b.dim, self.block(i).to_vec())
    }

    pub(crate) fn set_block(&mut self, i: usize, m: &Mat) {
        let b = self.alg.layout[i];
        debug_assert_eq!(m.n(), b.dim);
        self.data[b.offset..b.offset + b.dim * b.dim].copy_from_slice(m.as_slice());
    }

    /// Entry at a window site.
    pub fn site_value(&self, site: i64) -> Option<C64> {
        let block = self.alg.site_block(site)?;
        Some(self.data[self.alg.layout[block].offset])
    }

    pub fn same_algebra(&self, other: &Operator) -> bool {
        same_algebra(&self.alg, &other.alg)
    }

    pub(crate) fn check_same(&self, other: &Operator) -> Result<()> {
        if self.same_algebra(other) {
            Ok(())
        } else {
            Err(Error::AlgebraMismatch)
        }
    }

    pub fn try_add(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        let mut out = Operator::zero(&self.alg);
        for b in &self.alg.layout {
            let n = b.dim;
            let lhs = &self.data[b.offset..b.offset + n * n];
            let rhs = &other.data[b.offset..b.offset + n * n];
            let dst = &mut out.data[b.offset..b.offset + n * n];
            if n == 1 {
                dst[0] = lhs[0] * rhs[0];
                continue;
            }
            for i in 0..n {
                for k in 0..n {
                    let a = lhs[i * n + k];
                    if a == ZERO {
                        continue;
                    }
                    for j in 0..n {
                        dst[i * n + j] += a * rhs[k * n + j];
                    }
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Operator, f: impl Fn(C64, C64) -> C64) -> Operator {
        Operator {
            alg: self.alg.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Operator {
        Operator {
            alg: self.alg.clone(),
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Operator {
        Operator {
            alg: self.alg.clone(),
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `self += s * other`
    pub(crate) fn axpy(&mut self, s: C64, other: &Operator) {
        debug_assert!(self.same_algebra(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn adjoint(&self) -> Operator {
        let mut out = Operator::zero(&self.alg);
        for b in &self.alg.layout {
            let n = b.dim;
            for i in 0..n {
                for j in 0..n {
                    out.data[b.offset + j * n + i] = self.data[b.offset + i * n + j].conj();
                }
            }
        }
        out
    }

    /// Hermitian part `(x + x*)/2`.
    pub fn real_part(&self) -> Operator {
        let adj = self.adjoint();
        self.zip_with(&adj, |a, b| (a + b) * 0.5)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|x_ij - conj(x_ji)|` over all blocks, with the worst block.
    pub fn hermitian_defect(&self) -> (f64, usize) {
        let mut worst = (0.0, 0);
        for (k, b) in self.alg.layout.iter().enumerate() {
            let n = b.dim;
            let s = &self.data[b.offset..b.offset + n * n];
            for i in 0..n {
                for j in i..n {
                    let d = (s[i * n + j] - s[j * n + i].conj()).norm();
                    if d > worst.0 {
                        worst = (d, k);
                    }
                }
            }
        }
        worst
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.check_self_adjoint().is_ok()
    }

    pub(crate) fn check_self_adjoint(&self) -> Result<()> {
        let (dev, block) = self.hermitian_defect();
        if dev <= SELF_ADJOINT_TOL * self.max_abs_entry().max(1.0) {
            Ok(())
        } else {
            Err(Error::NotSelfAdjoint {
                block,
                deviation: dev,
            })
        }
    }

    /// `τ(x) = Σ_blocks w · Tr(x_block)`.
    pub fn trace(&self) -> C64 {
        let mut t = ZERO;
        for b in &self.alg.layout {
            let mut s = ZERO;
            for i in 0..b.dim {
                s += self.data[b.offset + i * b.dim + i];
            }
            t += s * b.weight;
        }
        t
    }

    /// `‖x‖∞`, the largest singular value over all blocks.
    pub fn operator_norm(&self) -> Result<f64> {
        let mut best: f64 = 0.0;
        for (k, b) in self.alg.layout.iter().enumerate() {
            let s = &self.data[b.offset..b.offset + b.dim * b.dim];
            let v = if b.dim == 1 {
                s[0].norm()
            } else {
                let m = Mat::from_vec(b.dim, s.to_vec());
                block_singular_values(&m)
                    .map_err(|_| Error::NonConvergence { block: k })?
                    .into_iter()
                    .fold(0.0, f64::max)
            };
            best = best.max(v);
        }
        Ok(best)
    }

    /// True when every entry is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    /// `‖x‖₁ = τ(|x|)`.
    pub fn trace_norm(&self) -> Result<f64> {
        Ok(self.singular_spectrum()?.trace())
    }

    /// Singular values of every block, each carrying its block's trace weight.
    pub fn singular_spectrum(&self) -> Result<SingularSpectrum> {
        let mut atoms = Vec::with_capacity(self.alg.total_dim());
        for (k, b) in self.alg.layout.iter().enumerate() {
            let n = b.dim;
            let s = &self.data[b.offset..b.offset + n * n];
            if n == 1 {
                atoms.push((s[0].norm(), b.weight));
                continue;
            }
            let m = Mat::from_vec(n, s.to_vec());
            for v in block_singular_values(&m).map_err(|_| Error::NonConvergence { block: k })? {
                atoms.push((v, b.weight));
            }
        }
        Ok(SingularSpectrum::from_atoms(atoms))
    }

    /// Minimum eigenvalue over all blocks; rejects non-self-adjoint input.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        self.check_self_adjoint()?;
        let mut lo = f64::INFINITY;
        for (k, e) in hermitian_block_eigens(self, false)?.iter().enumerate() {
            let _ = k;
            if let Some(&v) = e.values.last() {
                lo = lo.min(v);
            }
        }
        Ok(lo)
    }

    /// Positive semidefinite within `tol · max(1, ‖x‖∞)`.
    pub fn is_positive(&self, tol: f64) -> bool {
        if self.check_self_adjoint().is_err() {
            return false;
        }
        match self.min_eigenvalue() {
            Ok(m) => m >= -tol * self.max_abs_entry().max(1.0),
            Err(_) => false,
        }
    }

    pub(crate) fn check_positive(&self) -> Result<()> {
        self.check_self_adjoint()?;
        let scale = self.max_abs_entry().max(1.0);
        for (k, e) in hermitian_block_eigens(self, false)?.iter().enumerate() {
            if let Some(&v) = e.values.last() {
                if v < -1e-10 * scale {
                    return Err(Error::NotPositive {
                        block: k,
                        min_eigenvalue: v,
                    });
                }
            }
        }
        Ok(())
    }

    /// Serializable form: algebra plus row-major `[re, im]` entries per block.
    pub fn to_spec(&self) -> OperatorSpec {
        OperatorSpec {
            algebra: self.alg.spec(),
            blocks: (0..self.alg.num_blocks())
                .map(|i| self.block(i).iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn from_spec(spec: &OperatorSpec) -> Result<Self> {
        let alg = Arc::new(TracialAlgebra::try_from(spec.algebra.clone())?);
        Self::from_spec_in(&alg, &spec.blocks)
    }

    pub fn from_spec_in(alg: &Arc<TracialAlgebra>, blocks: &[Vec<[f64; 2]>]) -> Result<Self> {
        if blocks.len() != alg.num_blocks() {
            return Err(Error::Shape(format!(
                "expected {} blocks, got {}",
                alg.num_blocks(),
                blocks.len()
            )));
        }
        let mut data = Vec::with_capacity(alg.len);
        for (i, (entries, b)) in blocks.iter().zip(&alg.layout).enumerate() {
            if entries.len() != b.dim * b.dim {
                return Err(Error::Shape(format!(
                    "block {i}: expected {} entries, got {}",
                    b.dim * b.dim,
                    entries.len()
                )));
            }
            data.extend(entries.iter().map(|[re, im]| C64::new(*re, *im)));
        }
        Ok(Operator {
            alg: alg.clone(),
            data,
        })
    }

    /// Structured-text (JSON) serialization.
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("operator spec serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let spec: OperatorSpec = serde_json::from_str(text)
            .map_err(|e| Error::arg("text", e.to_string()))?;
        Self::from_spec(&spec)
    }
}

/// Serialized operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub algebra: AlgebraSpec,
    pub blocks: Vec<Vec<[f64; 2]>>,
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operators from different algebras")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.try_sub(rhs).expect("operators from different algebras")
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operators from different algebras")
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

/// Singular values of a square block. Self-adjoint blocks use `|eig|`; other
/// blocks use the Hermitian dilation `[[0, x], [x*, 0]]`, whose top half of
/// the spectrum is the singular values to absolute accuracy `ε‖x‖`.
fn block_singular_values(m: &Mat) -> std::result::Result<Vec<f64>, crate::linalg::NoConvergence> {
    let n = m.n();
    if m.hermitian_defect() <= SELF_ADJOINT_TOL * m.max_abs().max(1.0) {
        let e = eigh(m, false)?;
        return Ok(e.values.iter().map(|v| v.abs()).collect());
    }
    let dil = Mat::from_fn(2 * n, |i, j| match (i < n, j < n) {
        (true, false) => m.get(i, j - n),
        (false, true) => m.get(j, i - n).conj(),
        _ => ZERO,
    });
    let e = eigh(&dil, false)?;
    Ok(e.values[..n].iter().map(|v| v.max(0.0)).collect())
}

pub(crate) fn hermitian_block_eigens(x: &Operator, want_vectors: bool) -> Result<Vec<HermitianEigen>> {
    x.alg
        .layout
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let s = &x.data[b.offset..b.offset + b.dim * b.dim];
            eigh(&Mat::from_vec(b.dim, s.to_vec()), want_vectors)
                .map_err(|_| Error::NonConvergence { block: k })
        })
        .collect()
}

/// Spectral projection built block by block from the eigenvectors whose
/// eigenvalue satisfies `keep`.
pub(crate) fn projection_where(
    alg: &Arc<TracialAlgebra>,
    eigens: &[HermitianEigen],
    keep: impl Fn(f64) -> bool,
) -> Projection {
    let mut op = Operator::zero(alg);
    for (k, e) in eigens.iter().enumerate() {
        let b = alg.layout[k];
        if b.dim == 1 {
            if keep(e.values[0]) {
                op.data[b.offset] = ONE;
            }
            continue;
        }
        let cols: Vec<usize> = (0..b.dim).filter(|&i| keep(e.values[i])).collect();
        if cols.is_empty() {
            continue;
        }
        let v = e.vectors.as_ref().expect("eigenvectors computed");
        op.set_block(k, &v.column_projector(cols));
    }
    Projection(op)
}

/// Multiset of (value, trace weight) pairs, sorted by value descending.
///
/// This is all the spectral information `λ_t` and `μ_t` depend on: for `|x|`
/// it lists each singular value once per multiplicity with its block weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum {
    atoms: Vec<(f64, f64)>,
}

impl SingularSpectrum {
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
        SingularSpectrum { atoms }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn max(&self) -> f64 {
        self.atoms.first().map_or(0.0, |a| a.0)
    }

    /// `Σ value · weight`
    pub fn trace(&self) -> f64 {
        self.atoms.iter().map(|(v, w)| v * w).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Trace weight of the atoms strictly above `t`.
    pub fn mass_above(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| a.0 > t)
            .map(|a| a.1)
            .sum()
    }

    /// Distinct values (descending) with the total weight at each value.
    pub fn levels(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &(v, w) in &self.atoms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => out.push((v, w)),
            }
        }
        out
    }
}

/// Orthogonal projection `e = e* = e²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection(Operator);

impl Projection {
    /// Validates `e = e*` and `‖e² - e‖∞ ≤ 1e-10`.
    pub fn new(op: Operator) -> Result<Self> {
        op.check_self_adjoint()
            .map_err(|e| Error::NotProjection(e.to_string()))?;
        let sq = &op * &op;
        let defect = (&sq - &op).operator_norm()?;
        if defect > PROJECTION_TOL {
            return Err(Error::NotProjection(format!("‖e² - e‖ = {defect:e}")));
        }
        Ok(Projection(op))
    }

    pub fn zero(alg: &Arc<TracialAlgebra>) -> Self {
        Projection(Operator::zero(alg))
    }

    pub fn identity(alg: &Arc<TracialAlgebra>) -> Self {
        Projection(Operator::identity(alg))
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        self.0.algebra()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `𝟙 - e`
    pub fn complement(&self) -> Projection {
        Projection(&Operator::identity(self.0.algebra()) - &self.0)
    }

    /// Rank of the projection (sum of block ranks, read from the trace per block).
    pub fn rank(&self) -> usize {
        let alg = self.0.algebra();
        (0..alg.num_blocks())
            .map(|k| {
                let b = alg.layout[k];
                (0..b.dim)
                    .map(|i| self.0.data[b.offset + i * b.dim + i].re)
                    .sum::<f64>()
                    .round() as usize
            })
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.max_abs_entry() <= PROJECTION_TOL
    }

    /// `self ≤ other`: `other - self` is positive semidefinite within `tol`.
    pub fn le(&self, other: &Projection, tol: f64) -> Result<bool> {
        let d = self.0.algebra();
        if !same_algebra(d, other.algebra()) {
            return Err(Error::AlgebraMismatch);
        }
        Ok((&other.0 - &self.0).min_eigenvalue()? >= -tol)
    }
}

/// Eigenvalues (descending) of a self-adjoint operator with their spectral
/// projections and the trace of each projection.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub projectors: Vec<Projection>,
    pub traces: Vec<f64>,
}

impl SpectralDecomposition {
    /// `Σ λ_i p_i`
    pub fn reconstruct(&self) -> Operator {
        let alg = self.projectors[0].algebra().clone();
        let mut out = Operator::zero(&alg);
        for (l, p) in self.eigenvalues.iter().zip(&self.projectors) {
            out.axpy(C64::new(*l, 0.0), p.as_operator());
        }
        out
    }
}

pub fn spectral_decompose(x: &Operator) -> Result<SpectralDecomposition> {
    spectral_decompose_with(x, DEFAULT_CLUSTER_GAP)
}

/// Spectral decomposition merging eigenvalues whose consecutive gap is below
/// `cluster_gap`. The merged eigenvalue is the weighted mean of its members.
pub fn spectral_decompose_with(x: &Operator, cluster_gap: f64) -> Result<SpectralDecomposition> {
    x.check_self_adjoint()?;
    let alg = x.algebra();
    let eigens = hermitian_block_eigens(x, true)?;

    // (value, block, column)
    let mut pairs: Vec<(f64, usize, usize)> = eigens
        .iter()
        .enumerate()
        .flat_map(|(k, e)| e.values.iter().enumerate().map(move |(i, &v)| (v, k, i)))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut clusters: Vec<Vec<(f64, usize, usize)>> = Vec::new();
    for p in pairs {
        match clusters.last_mut() {
            Some(c) if c.last().unwrap().0 - p.0 < cluster_gap => c.push(p),
            _ => clusters.push(vec![p]),
        }
    }

    let mut eigenvalues = Vec::with_capacity(clusters.len());
    let mut projectors = Vec::with_capacity(clusters.len());
    let mut traces = Vec::with_capacity(clusters.len());
    for c in clusters {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); alg.num_blocks()];
        let mut wsum = 0.0;
        let mut vsum = 0.0;
        for &(v, k, i) in &c {
            cols[k].push(i);
            let w = alg.layout[k].weight;
            wsum += w;
            vsum += v * w;
        }
        let mut op = Operator::zero(alg);
        for (k, cs) in cols.into_iter().enumerate() {
            if cs.is_empty() {
                continue;
            }
            let v = eigens[k].vectors.as_ref().unwrap();
            op.set_block(k, &v.column_projector(cs));
        }
        eigenvalues.push(vsum / wsum);
        projectors.push(Projection(op));
        traces.push(wsum);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        projectors,
        traces,
    })
}

/// `|x| = (x*x)^{1/2}` by spectral calculus. Self-adjoint blocks take
/// `|λ|` on the spectrum of the block itself.
pub fn abs_op(x: &Operator) -> Result<Operator> {
    let alg = x.algebra();
    let mut out = Operator::zero(alg);
    for (k, b) in alg.layout.iter().enumerate() {
        let s = &x.data[b.offset..b.offset + b.dim * b.dim];
        if b.dim == 1 {
            out.data[b.offset] = C64::new(s[0].norm(), 0.0);
            continue;
        }
        let m = Mat::from_vec(b.dim, s.to_vec());
        let nc = |_| Error::NonConvergence { block: k };
        let r = if m.hermitian_defect() <= SELF_ADJOINT_TOL * m.max_abs().max(1.0) {
            eigh(&m, true).map_err(nc)?.reconstruct_with(f64::abs)
        } else {
            eigh(&m.adjoint().matmul(&m), true)
                .map_err(nc)?
                .reconstruct_with(|v| v.max(0.0).sqrt())
        };
        out.set_block(k, &r);
    }
    Ok(out)
}

/// `{x > t}`: sum of the spectral projectors of a positive `x` with
/// eigenvalue strictly above `t`.
pub fn spectral_projection_above(x: &Operator, t: f64) -> Result<Projection> {
    if !(t >= 0.0) {
        return Err(Error::arg("t", format!("threshold must be ≥ 0, got {t}")));
    }
    x.check_positive()?;
    let eigens = hermitian_block_eigens(x, true)?;
    Ok(projection_where(x.algebra(), &eigens, |v| v > t))
}

/// Spectral projection `{x > t}` of a self-adjoint (not necessarily positive) `x`.
pub(crate) fn level_projection(x: &Operator, t: f64) -> Result<Projection> {
    x.check_self_adjoint()?;
    let eigens = hermitian_block_eigens(x, true)?;
    Ok(projection_where(x.algebra(), &eigens, |v| v > t))
}

/// `e ∧ f`: projection onto `range(e) ∩ range(f)`, read off as the
/// eigenspace of `e + f` at eigenvalue 2.
pub fn proj_meet(e: &Projection, f: &Projection) -> Result<Projection> {
    e.0.check_same(&f.0)?;
    let sum = &e.0 + &f.0;
    let eigens = hermitian_block_eigens(&sum, true)?;
    Ok(projection_where(e.algebra(), &eigens, |v| v > 2.0 - MEET_TOL))
}

/// `e ∨ f = 𝟙 - ((𝟙 - e) ∧ (𝟙 - f))`.
pub fn proj_join(e: &Projection, f: &Projection) -> Result<Projection> {
    Ok(proj_meet(&e.complement(), &f.complement())?.complement())
}

pub fn trace_of(x: &Operator) -> C64 {
    x.trace()
}

pub fn operator_norm(x: &Operator) -> Result<f64> {
    x.operator_norm()
}

pub fn trace_norm(x: &Operator) -> Result<f64> {
    x.trace_norm()
}
