//! Experiment configuration: one TOML document per run.
//!
//! The grammar and every default are listed in `docs/config.md`.

use std::sync::Arc;

use ncergodic::dynamics::{Automorphism, Indexing};
use ncergodic::random::{random_hermitian, random_operator, random_positive, random_unitary, sub_rng};
use ncergodic::sequences::{RotationSystem, TrigPolynomial, WeightSequence, GOLDEN};
use ncergodic::suites::{parse_selection, Suite};
use ncergodic::{Block, Operator, TracialAlgebra, Window, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Random stream tags under the run seed: `sub_rng(seed, tag)`.
pub const OPERATOR_STREAM: u64 = 1;
pub const DYNAMICS_STREAM: u64 = 2;
pub const APPROXIMANT_STREAM: u64 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("`{key}`: expected {expected}, got {got}")]
    Invalid { key: String, expected: String, got: String },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, expected: impl Into<String>, got: impl std::fmt::Display) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            expected: expected.into(),
            got: got.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MuCurve,
    LambdaCurve,
    Ergodic,
    Besicovitch,
    UniformSeq,
    Discrepancy,
    BanachC,
    Closure,
    Neveu,
    PropertySuite,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::MuCurve => "mu-curve",
            Experiment::LambdaCurve => "lambda-curve",
            Experiment::Ergodic => "ergodic",
            Experiment::Besicovitch => "besicovitch",
            Experiment::UniformSeq => "uniform-seq",
            Experiment::Discrepancy => "discrepancy",
            Experiment::BanachC => "banach-c",
            Experiment::Closure => "closure",
            Experiment::Neveu => "neveu",
            Experiment::PropertySuite => "property-suite",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, with = "seed_repr")]
    pub seed: u64,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub algebra: AlgebraConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub rotation: RotationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub dim: usize,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub lo: i64,
    pub hi: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraConfig {
    #[serde(default)]
    pub blocks: Vec<BlockConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowConfig>,
}

impl Default for AlgebraConfig {
    fn default() -> Self {
        AlgebraConfig {
            blocks: vec![BlockConfig { dim: 4, weight: 0.25 }],
            window: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorConfig {
    /// Real diagonal, one entry per matrix row then per window site.
    Diagonal { values: Vec<f64> },
    /// Row-major `[re, im]` entries per block.
    Explicit { blocks: Vec<Vec<[f64; 2]>> },
    Identity,
    /// `𝟙 / τ(𝟙)` on a finite algebra.
    TraceState,
    UnitAtom { site: i64 },
    Random {
        #[serde(default = "one")]
        scale: f64,
    },
    RandomHermitian {
        #[serde(default = "one")]
        scale: f64,
    },
    RandomPositive {
        #[serde(default = "one")]
        scale: f64,
    },
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig::Random { scale: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DynamicsConfig {
    #[default]
    Identity,
    /// Matrix block `i` moves to `i + 1 mod length`; all blocks by default.
    Cyclic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        length: Option<usize>,
    },
    /// One Haar-random unitary per matrix block.
    RandomInner,
    /// `Ad(diag(e^{2πi a_k}))` per block, angles listed block by block.
    PhaseInner { angles: Vec<f64> },
    Translation { shift: i64 },
    Compose { steps: Vec<DynamicsConfig> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub theta: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SequenceConfig {
    #[default]
    Ones,
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `β_j = e^{2πijθ}`
    Geometric {
        #[serde(default = "golden")]
        theta: f64,
    },
    /// Entry-time indicator of the `[rotation]` system.
    Indicator {
        #[serde(default = "yes")]
        normalized: bool,
    },
    Trig { terms: Vec<TermConfig> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationConfig {
    #[serde(default = "golden")]
    pub theta: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default = "half")]
    pub b: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        RotationConfig {
            theta: GOLDEN,
            y0: 0.0,
            a: 0.0,
            b: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Predual,
    Forward,
    Identity,
    ScaledIdentity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Trace,
    Operator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexingKind {
    FromZero,
    FromOne,
}

impl From<IndexingKind> for Indexing {
    fn from(k: IndexingKind) -> Self {
        match k {
            IndexingKind::FromZero => Indexing::FromZero,
            IndexingKind::FromOne => Indexing::FromOne,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub eps: f64,
    pub delta: f64,
    pub horizon: usize,
    pub t_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    pub lambdas: Vec<f64>,
    pub samples: usize,
    pub family: FamilyKind,
    pub norm: NormKind,
    pub indexing: IndexingKind,
    pub count: usize,
    pub n_step: usize,
    pub terms: usize,
    pub approximants: usize,
    pub ratio: f64,
    pub tail_fraction: f64,
    pub support_tol: f64,
    pub wandering_tol: f64,
    pub suites: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            eps: 1e-2,
            delta: 1e-2,
            horizon: 1000,
            t_points: 256,
            t_max: None,
            lambdas: (0..7).map(|k| (1u32 << k) as f64).collect(),
            samples: 200,
            family: FamilyKind::Predual,
            norm: NormKind::Trace,
            indexing: IndexingKind::FromZero,
            count: 5,
            n_step: 100,
            terms: 5,
            approximants: 20,
            ratio: 0.5,
            tail_fraction: 0.1,
            support_tol: 1e-8,
            wandering_tol: 1e-2,
            suites: "all".into(),
            trials: None,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn golden() -> f64 {
    GOLDEN
}
fn yes() -> bool {
    true
}

/// TOML integers are signed; seeds past `i64::MAX` are written as strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom(format!("seed must be ≥ 0, got {v}"))),
            Repr::Text(t) => t
                .parse()
                .map_err(|_| de::Error::custom(format!("seed must be a 64-bit unsigned integer, got {t:?}"))),
        }
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, "a positive finite number", v))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("an integer ≥ {min}"), v))
    }
}

fn unit_interval(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, "a number in [0, 1)", v))
    }
}

impl ExperimentConfig {
    /// Checks every knob; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        positive("params.eps", p.eps)?;
        positive("params.delta", p.delta)?;
        at_least("params.horizon", p.horizon, 1)?;
        at_least("params.t_points", p.t_points, 2)?;
        if let Some(t) = p.t_max {
            positive("params.t_max", t)?;
        }
        if p.lambdas.is_empty() {
            return Err(ConfigError::invalid("params.lambdas", "a non-empty list", "[]"));
        }
        for (i, l) in p.lambdas.iter().enumerate() {
            positive(&format!("params.lambdas[{i}]"), *l)?;
        }
        at_least("params.samples", p.samples, 1)?;
        at_least("params.count", p.count, 1)?;
        at_least("params.n_step", p.n_step, 1)?;
        at_least("params.terms", p.terms, 1)?;
        at_least("params.approximants", p.approximants, 1)?;
        if !(p.ratio > 0.0 && p.ratio < 1.0) {
            return Err(ConfigError::invalid("params.ratio", "a number in (0, 1)", p.ratio));
        }
        if !(p.tail_fraction > 0.0 && p.tail_fraction <= 1.0) {
            return Err(ConfigError::invalid("params.tail_fraction", "a number in (0, 1]", p.tail_fraction));
        }
        positive("params.support_tol", p.support_tol)?;
        positive("params.wandering_tol", p.wandering_tol)?;
        if let Some(t) = p.trials {
            at_least("params.trials", t, 1)?;
        }
        parse_selection(&p.suites).map_err(|e| ConfigError::invalid("params.suites", "suite names or \"all\"", e))?;
        if self.experiment == Experiment::Ergodic && p.horizon < 2 {
            return Err(ConfigError::invalid("params.horizon", "an integer ≥ 2 for ergodic runs", p.horizon));
        }

        for (i, b) in self.algebra.blocks.iter().enumerate() {
            at_least(&format!("algebra.blocks[{i}].dim"), b.dim, 1)?;
            positive(&format!("algebra.blocks[{i}].weight"), b.weight)?;
        }
        if let Some(w) = self.algebra.window {
            if w.hi < w.lo {
                return Err(ConfigError::invalid("algebra.window.hi", format!("a site ≥ lo = {}", w.lo), w.hi));
            }
        }
        if self.algebra.blocks.is_empty() && self.algebra.window.is_none() {
            return Err(ConfigError::invalid("algebra.blocks", "at least one block or a window", "none"));
        }

        let r = &self.rotation;
        unit_interval("rotation.theta", r.theta)?;
        unit_interval("rotation.y0", r.y0)?;
        unit_interval("rotation.a", r.a)?;
        if !(r.b > r.a && r.b <= 1.0) {
            return Err(ConfigError::invalid("rotation.b", format!("a number in ({}, 1]", r.a), r.b));
        }

        match &self.operator {
            OperatorConfig::Random { scale }
            | OperatorConfig::RandomHermitian { scale }
            | OperatorConfig::RandomPositive { scale } => positive("operator.scale", *scale)?,
            _ => {}
        }
        if let SequenceConfig::Geometric { theta } = &self.sequence {
            if !theta.is_finite() {
                return Err(ConfigError::invalid("sequence.theta", "a finite number", theta));
            }
        }
        if let SequenceConfig::Trig { terms } = &self.sequence {
            if terms.is_empty() {
                return Err(ConfigError::invalid("sequence.terms", "a non-empty list", "[]"));
            }
        }
        Ok(())
    }

    /// Canonical TOML form: `parse_config(cfg.to_toml())` gives `cfg` back.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn build_algebra(&self) -> Result<Arc<TracialAlgebra>, ncergodic::Error> {
        let blocks = self.algebra.blocks.iter().map(|b| Block::new(b.dim, b.weight)).collect();
        let window = self.algebra.window.map(|w| Window { lo: w.lo, hi: w.hi });
        TracialAlgebra::new(blocks, window).map(Arc::new)
    }

    pub fn build_operator(&self, alg: &Arc<TracialAlgebra>) -> Result<Operator, ncergodic::Error> {
        let mut rng = sub_rng(self.seed, OPERATOR_STREAM);
        Ok(match &self.operator {
            OperatorConfig::Diagonal { values } => Operator::real_diagonal(alg, values)?,
            OperatorConfig::Explicit { blocks } => Operator::from_spec_in(alg, blocks)?,
            OperatorConfig::Identity => Operator::identity(alg),
            OperatorConfig::TraceState => {
                if alg.window_spec().is_some() {
                    return Err(ncergodic::Error::InvalidArgument {
                        name: "operator",
                        reason: "trace-state needs a finite algebra".into(),
                    });
                }
                Operator::identity(alg).scale_real(1.0 / alg.total_trace())
            }
            OperatorConfig::UnitAtom { site } => Operator::unit_atom(alg, *site)?,
            OperatorConfig::Random { scale } => random_operator(alg, &mut rng).scale_real(*scale),
            OperatorConfig::RandomHermitian { scale } => random_hermitian(alg, &mut rng).scale_real(*scale),
            OperatorConfig::RandomPositive { scale } => random_positive(alg, &mut rng).scale_real(*scale),
        })
    }

    pub fn build_automorphism(&self, alg: &TracialAlgebra) -> Result<Automorphism, ncergodic::Error> {
        let mut next = 0;
        build_step(&self.dynamics, alg, self.seed, &mut next)
    }

    pub fn build_rotation(&self) -> Result<RotationSystem, ncergodic::Error> {
        let r = &self.rotation;
        RotationSystem::new(r.theta, r.y0, r.a, r.b)
    }

    pub fn build_sequence(&self) -> Result<WeightSequence, ncergodic::Error> {
        Ok(match &self.sequence {
            SequenceConfig::Ones => WeightSequence::ones(),
            SequenceConfig::Constant { re, im } => WeightSequence::Constant(C64::new(*re, *im)),
            SequenceConfig::Geometric { theta } => WeightSequence::geometric(*theta),
            SequenceConfig::Indicator { normalized } => {
                let rot = self.build_rotation()?;
                if *normalized {
                    WeightSequence::normalized_indicator(rot)
                } else {
                    WeightSequence::Indicator { rotation: rot, scale: 1.0 }
                }
            }
            SequenceConfig::Trig { terms } => WeightSequence::Trig(TrigPolynomial::new(
                terms.iter().map(|t| (C64::new(t.re, t.im), t.theta)).collect(),
            )?),
        })
    }

    pub fn suites(&self) -> Vec<Suite> {
        parse_selection(&self.params.suites).expect("validated")
    }
}

/// The `k`-th random unitary of a run is drawn from `sub_rng(seed, (DYNAMICS_STREAM << 32) + k)`.
fn build_step(step: &DynamicsConfig, alg: &TracialAlgebra, seed: u64, next: &mut u64) -> Result<Automorphism, ncergodic::Error> {
    let blocks = alg.finite_blocks();
    Ok(match step {
        DynamicsConfig::Identity => Automorphism::identity(),
        DynamicsConfig::Cyclic { length } => Automorphism::cyclic(length.unwrap_or(blocks.len())),
        DynamicsConfig::RandomInner => Automorphism::Inner(
            blocks
                .iter()
                .map(|b| {
                    let mut rng = sub_rng(seed, (DYNAMICS_STREAM << 32) + *next);
                    *next += 1;
                    random_unitary(b.dim, &mut rng)
                })
                .collect(),
        ),
        DynamicsConfig::PhaseInner { angles } => {
            let need: usize = blocks.iter().map(|b| b.dim).sum();
            if angles.len() != need {
                return Err(ncergodic::Error::InvalidArgument {
                    name: "dynamics.angles",
                    reason: format!("expected {need} angles, got {}", angles.len()),
                });
            }
            let mut it = angles.iter();
            Automorphism::Inner(
                blocks
                    .iter()
                    .map(|b| {
                        let d: Vec<C64> = it
                            .by_ref()
                            .take(b.dim)
                            .map(|a| C64::from_polar(1.0, std::f64::consts::TAU * a))
                            .collect();
                        ncergodic::Mat::diagonal(&d)
                    })
                    .collect(),
            )
        }
        DynamicsConfig::Translation { shift } => Automorphism::Translation(*shift),
        DynamicsConfig::Compose { steps } => Automorphism::Compose(
            steps.iter().map(|s| build_step(s, alg, seed, next)).collect::<Result<_, _>>()?,
        ),
    })
}
