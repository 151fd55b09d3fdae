//! Kaizen loop: GP proposes features, the sparse learner fits them together
//! with the current standard's features, and the best snapshot by adjusted
//! R² replaces the standard only on strict improvement.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{metrics, stream_rng, Dataset, Metrics, Stream};
use crate::expr::{CanonicalExpr, EvalCache, EvalCounters, Expr, Op, DEFAULT_CACHE_CAPACITY};
use crate::gp::{
    collect_candidates, init_population, propose_features, GpConfig, GpRng, Population,
};
use crate::rvm::{
    sequential_fit, DesignMatrix, FeatureId, FitTrace, RvmConfig, RvmError, SparseLinearModel,
    MIN_COLUMN_NORM,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KaizenError {
    #[error("need at least 2 samples, got {0}")]
    TooFewRows(usize),
    #[error("prediction and target lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate target: zero variance")]
    DegenerateTarget,
    #[error("over-parameterized model: N = {n}, p = {p}")]
    OverParameterized { n: usize, p: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Rvm(#[from] RvmError),
}

/// Coefficient of determination `1 − Σ(t − y)² / Σ(t − t̄)²`.
pub fn r_squared(y: &[f64], t: &[f64]) -> Result<f64, KaizenError> {
    if y.len() != t.len() {
        return Err(KaizenError::LengthMismatch(y.len(), t.len()));
    }
    if t.len() < 2 {
        return Err(KaizenError::TooFewRows(t.len()));
    }
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let ss_tot: f64 = t.iter().map(|v| (v - mean) * (v - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(KaizenError::DegenerateTarget);
    }
    let ss_res: f64 = y.iter().zip(t).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Adjusted R², `r2 − (1 − r2)·p / (n − p − 1)`.
pub fn adj_r2(r2: f64, n: usize, p: usize) -> Result<f64, KaizenError> {
    if n < p + 2 {
        return Err(KaizenError::OverParameterized { n, p });
    }
    Ok(r2 - (1.0 - r2) * p as f64 / (n - p - 1) as f64)
}

fn predictions(model: &SparseLinearModel, n: usize) -> Vec<f64> {
    if model.is_empty() {
        vec![0.0; n]
    } else {
        model.fitted()
    }
}

/// Adjusted R² of a model's training predictions; `−∞` when undefined.
pub fn model_fitness(model: &SparseLinearModel, t: &[f64]) -> f64 {
    r_squared(&predictions(model, t.len()), t)
        .and_then(|r2| adj_r2(r2, t.len(), model.len()))
        .unwrap_or(f64::NEG_INFINITY)
}

/// Index and fitness of the snapshot with the largest adjusted R². Values
/// within `1e-12` tie; ties go to fewer active bases, then the earlier
/// snapshot.
pub fn select_model(snapshots: &[SparseLinearModel], t: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in snapshots.iter().enumerate() {
        let f = model_fitness(m, t);
        best = match best {
            None => Some((i, f)),
            Some((b, bf)) => {
                let better = if (f - bf).abs() <= 1e-12 || f == bf {
                    m.len() < snapshots[b].len()
                } else {
                    f > bf
                };
                if better {
                    Some((i, f))
                } else {
                    Some((b, bf))
                }
            }
        };
    }
    best
}

#[derive(Clone, Debug)]
pub struct StandardTerm {
    pub id: FeatureId,
    pub expr: CanonicalExpr,
    pub weight: f64,
}

/// The best model found so far.
#[derive(Clone, Debug)]
pub struct Standard {
    pub terms: Vec<StandardTerm>,
    pub model: Option<SparseLinearModel>,
    pub fitness: f64,
    pub iteration_found: usize,
    /// Training-set predictions.
    pub fitted: Vec<f64>,
}

impl Standard {
    pub fn empty(n: usize) -> Standard {
        Standard {
            terms: Vec::new(),
            model: None,
            fitness: f64::NEG_INFINITY,
            iteration_found: 0,
            fitted: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `w₁·f₁ + w₂·f₂ + …` as a left-nested sum; `0` when empty.
    pub fn expression(&self) -> Expr {
        weighted_sum(self.terms.iter().map(|t| (t.weight, t.expr.expr().clone())))
    }
}

/// Left-nested `(+ (+ (* w₁ e₁) (* w₂ e₂)) …)`, evaluated in the same order
/// as the model's training predictions.
pub fn weighted_sum(terms: impl IntoIterator<Item = (f64, Expr)>) -> Expr {
    terms
        .into_iter()
        .map(|(w, e)| Expr::binary(Op::Mul, Expr::Const(w), e))
        .reduce(|acc, t| Expr::binary(Op::Add, acc, t))
        .unwrap_or(Expr::Const(0.0))
}

/// Stable feature ids for canonical expressions within one run.
#[derive(Clone, Debug, Default)]
pub struct FeatureRegistry {
    ids: HashMap<CanonicalExpr, FeatureId>,
    exprs: Vec<CanonicalExpr>,
}

impl FeatureRegistry {
    pub fn id(&mut self, ce: &CanonicalExpr) -> FeatureId {
        if let Some(id) = self.ids.get(ce) {
            return *id;
        }
        let id = FeatureId(self.exprs.len() as u64);
        self.ids.insert(ce.clone(), id);
        self.exprs.push(ce.clone());
        id
    }

    pub fn expr(&self, id: FeatureId) -> Option<&CanonicalExpr> {
        self.exprs.get(id.0 as usize)
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }
}

/// Learner-action bookkeeping over a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monotonicity {
    pub actions: u64,
    /// Smallest `(after − before) / max(1, |before|)` over all actions.
    pub worst_action_delta: f64,
    pub beta_updates: u64,
    pub worst_beta_delta: f64,
    pub fitness_non_decreasing: bool,
    /// Largest `1 − γ` or `γ` excursion outside `[0, 1]` seen on a
    /// selected model; zero when every γ is in range.
    pub gamma_violation: f64,
}

impl Default for Monotonicity {
    fn default() -> Self {
        Monotonicity {
            actions: 0,
            worst_action_delta: f64::INFINITY,
            beta_updates: 0,
            worst_beta_delta: f64::INFINITY,
            fitness_non_decreasing: true,
            gamma_violation: 0.0,
        }
    }
}

impl Monotonicity {
    pub fn record(&mut self, trace: &FitTrace) {
        for a in &trace.actions {
            self.actions += 1;
            let d = (a.log_ml_after - a.log_ml_before) / a.log_ml_before.abs().max(1.0);
            self.worst_action_delta = self.worst_action_delta.min(d);
        }
        for b in &trace.beta_updates {
            self.beta_updates += 1;
            let d = (b.log_ml_after - b.log_ml_before) / b.log_ml_before.abs().max(1.0);
            self.worst_beta_delta = self.worst_beta_delta.min(d);
        }
    }

    fn record_gamma(&mut self, model: &SparseLinearModel) {
        for g in model.gamma() {
            let excess = (-g).max(g - 1.0).max(0.0);
            self.gamma_violation = self.gamma_violation.max(excess);
        }
    }

    pub fn merge(&mut self, other: &Monotonicity) {
        self.actions += other.actions;
        self.beta_updates += other.beta_updates;
        self.worst_action_delta = self.worst_action_delta.min(other.worst_action_delta);
        self.worst_beta_delta = self.worst_beta_delta.min(other.worst_beta_delta);
        self.fitness_non_decreasing &= other.fitness_non_decreasing;
        self.gamma_violation = self.gamma_violation.max(other.gamma_violation);
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    /// The new standard when the selected model strictly improves.
    pub improved: Option<Standard>,
    pub pool_size: usize,
    pub trace: Option<FitTrace>,
}

/// One Do/Check/Act pass: pools the standard's features with `candidates`,
/// drops non-finite, zero-norm and bitwise-duplicate columns, fits, and
/// selects a snapshot.
pub fn kp_step(
    standard: &Standard,
    candidates: &[CanonicalExpr],
    data: &Dataset,
    cache: &mut EvalCache,
    registry: &mut FeatureRegistry,
    rvm: &RvmConfig,
    iteration: usize,
) -> Result<StepResult, KaizenError> {
    let n = data.len();
    let mut design = DesignMatrix::new(n);
    let mut exprs: Vec<CanonicalExpr> = Vec::new();
    let mut offered: HashSet<&CanonicalExpr> = HashSet::new();
    let mut columns_seen: HashSet<Vec<u64>> = HashSet::new();
    let pool = standard.terms.iter().map(|t| &t.expr).chain(candidates);
    for ce in pool {
        if !offered.insert(ce) {
            continue;
        }
        let values: Arc<[f64]> = match cache.evaluate(ce, &data.inputs) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm >= MIN_COLUMN_NORM) {
            continue;
        }
        if !columns_seen.insert(values.iter().map(|v| v.to_bits()).collect()) {
            continue;
        }
        let id = registry.id(ce);
        design.push(id, values)?;
        exprs.push(ce.clone());
    }
    let pool_size = design.len();
    if design.is_empty() {
        return Ok(StepResult {
            improved: None,
            pool_size,
            trace: None,
        });
    }
    let fit = match sequential_fit(&design, &data.target, rvm) {
        Ok(fit) => fit,
        Err(RvmError::NoAdmissibleBasis) => {
            return Ok(StepResult {
                improved: None,
                pool_size,
                trace: None,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let (index, fitness) = select_model(&fit.snapshots, &data.target).expect("non-empty snapshots");
    let improved = (fitness > standard.fitness).then(|| {
        let model = fit.snapshots[index].clone();
        let terms = model
            .active
            .iter()
            .zip(&model.mean)
            .map(|(&id, &weight)| StandardTerm {
                id,
                expr: exprs[design.position(id).expect("active id in design")].clone(),
                weight,
            })
            .collect();
        Standard {
            terms,
            fitted: predictions(&model, n),
            model: Some(model),
            fitness,
            iteration_found: iteration,
        }
    });
    Ok(StepResult {
        improved,
        pool_size,
        trace: Some(fit.trace),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum StopRule {
    /// Stop after `max_generations` or once fitness exceeds `fitness_stop`.
    Generations {
        max_generations: usize,
        fitness_stop: f64,
    },
    /// Stop once node evaluations reach `max_node_evals` or every training
    /// error is within `abs_error`.
    NodeBudget { max_node_evals: u64, abs_error: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KaizenConfig {
    pub stop: StopRule,
    pub gp: GpConfig,
    pub rvm: RvmConfig,
    pub cache_capacity: usize,
}

impl KaizenConfig {
    pub fn keijzer() -> KaizenConfig {
        KaizenConfig {
            stop: StopRule::Generations {
                max_generations: 2000,
                fitness_stop: 0.99999,
            },
            gp: GpConfig::keijzer(),
            rvm: RvmConfig::default(),
            cache_capacity: DEFAULT_CACHE_CAPACITY,
        }
    }

    pub fn nguyen(dims: usize) -> KaizenConfig {
        KaizenConfig {
            stop: StopRule::NodeBudget {
                max_node_evals: 2_000_000,
                abs_error: 0.01,
            },
            gp: GpConfig::nguyen(dims),
            rvm: RvmConfig::default(),
            cache_capacity: DEFAULT_CACHE_CAPACITY,
        }
    }

    pub fn validate(&self) -> Result<(), KaizenError> {
        self.gp
            .validate()
            .map_err(|e| KaizenError::Config(e.to_string()))?;
        match self.stop {
            StopRule::Generations { fitness_stop, .. } if !fitness_stop.is_finite() => {
                Err(KaizenError::Config("fitness_stop must be finite".into()))
            }
            StopRule::NodeBudget { abs_error, .. } if !(abs_error >= 0.0) => {
                Err(KaizenError::Config("abs_error must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FitnessReached,
    ErrorReached,
    Generations,
    NodeBudget,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub standard: Standard,
    /// Generations consumed, the initial fit counting as the first.
    pub generations: usize,
    pub counters: EvalCounters,
    pub success: bool,
    pub stop: StopReason,
    /// Standard fitness after every generation.
    pub history: Vec<f64>,
    pub monotonicity: Monotonicity,
    pub train: Metrics,
}

/// State of one trial.
pub struct Kaizen<'a> {
    cfg: KaizenConfig,
    data: &'a Dataset,
    rng: GpRng,
    population: Population,
    cache: EvalCache,
    registry: FeatureRegistry,
    standard: Standard,
    generation: usize,
    history: Vec<f64>,
    monotonicity: Monotonicity,
}

impl<'a> Kaizen<'a> {
    pub fn new(cfg: KaizenConfig, data: &'a Dataset, seed: u64) -> Result<Kaizen<'a>, KaizenError> {
        cfg.validate()?;
        if data.len() < 2 {
            return Err(KaizenError::TooFewRows(data.len()));
        }
        let mut rng = stream_rng(seed, Stream::Evolution);
        let population = init_population(&cfg.gp, &mut rng);
        Ok(Kaizen {
            cache: EvalCache::new(cfg.cache_capacity),
            cfg,
            data,
            rng,
            population,
            registry: FeatureRegistry::default(),
            standard: Standard::empty(data.len()),
            generation: 0,
            history: Vec::new(),
            monotonicity: Monotonicity::default(),
        })
    }

    pub fn standard(&self) -> &Standard {
        &self.standard
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn counters(&self) -> EvalCounters {
        self.cache.counters()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    fn train_max_error(&self) -> f64 {
        metrics(&self.standard.fitted, &self.data.target).max_abs_error
    }

    fn stop_reason(&self) -> Option<StopReason> {
        match self.cfg.stop {
            StopRule::Generations {
                max_generations,
                fitness_stop,
            } => {
                if self.standard.fitness > fitness_stop {
                    Some(StopReason::FitnessReached)
                } else if self.generation >= max_generations {
                    Some(StopReason::Generations)
                } else {
                    None
                }
            }
            StopRule::NodeBudget {
                max_node_evals,
                abs_error,
            } => {
                if self.generation > 0 && self.train_max_error() <= abs_error {
                    Some(StopReason::ErrorReached)
                } else if self.cache.counters().node_evals >= max_node_evals {
                    Some(StopReason::NodeBudget)
                } else {
                    None
                }
            }
        }
    }

    /// One generation: the first fits the initial population's subtrees,
    /// later ones fit the subtrees of freshly varied offspring.
    pub fn step(&mut self) -> Result<StepResult, KaizenError> {
        let candidates = if self.generation == 0 {
            collect_candidates(&self.population.individuals)
        } else {
            propose_features(&mut self.population, &self.cfg.gp, &mut self.rng)
        };
        self.generation += 1;
        let result = kp_step(
            &self.standard,
            &candidates,
            self.data,
            &mut self.cache,
            &mut self.registry,
            &self.cfg.rvm,
            self.generation,
        )?;
        if let Some(trace) = &result.trace {
            self.monotonicity.record(trace);
        }
        if let Some(new) = &result.improved {
            if let Some(model) = &new.model {
                self.monotonicity.record_gamma(model);
            }
            if !(new.fitness >= self.standard.fitness) {
                self.monotonicity.fitness_non_decreasing = false;
            }
            self.standard = new.clone();
        }
        if let Some(&last) = self.history.last() {
            if self.standard.fitness < last {
                self.monotonicity.fitness_non_decreasing = false;
            }
        }
        self.history.push(self.standard.fitness);
        Ok(result)
    }

    pub fn run(mut self) -> Result<TrialOutcome, KaizenError> {
        let stop = loop {
            if let Some(reason) = self.stop_reason() {
                break reason;
            }
            self.step()?;
        };
        let train = metrics(&self.standard.fitted, &self.data.target);
        let success = match self.cfg.stop {
            StopRule::Generations { fitness_stop, .. } => self.standard.fitness > fitness_stop,
            StopRule::NodeBudget { abs_error, .. } => {
                self.generation > 0 && train.max_abs_error <= abs_error
            }
        };
        Ok(TrialOutcome {
            counters: self.cache.counters(),
            generations: self.generation,
            success,
            stop,
            history: self.history,
            monotonicity: self.monotonicity,
            train,
            standard: self.standard,
        })
    }
}

/// Runs one trial of the Kaizen loop on `data`.
pub fn run(cfg: &KaizenConfig, data: &Dataset, seed: u64) -> Result<TrialOutcome, KaizenError> {
    Kaizen::new(cfg.clone(), data, seed)?.run()
}
