//! Feature proposal by a small GP population.
//!
//! There is no fitness-based selection here: each generation pairs the
//! population at random, applies one-point crossover and mutation, and the
//! rooted subtrees of the offspring become candidate features. Selection
//! pressure is applied downstream by the sparse Bayesian learner.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::expr::{subtrees, CanonicalExpr, Expr, Op};

/// The generator used for every stochastic step of a trial.
pub type GpRng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum Terminal {
    Variable(usize),
    Constant(f64),
    /// Ephemeral random constant drawn from `Normal(mean, std_dev)` when
    /// the terminal is instantiated.
    Ephemeral {
        mean: f64,
        std_dev: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveSet {
    operators: Vec<Op>,
    terminals: Vec<Terminal>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GpConfigError {
    #[error("primitive set needs at least one operator and one terminal")]
    EmptyPrimitiveSet,
    #[error("ephemeral constant needs a positive finite standard deviation")]
    BadEphemeral,
    #[error("{name} = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("mutation mix must sum to 1 (uniform {uniform} + erc {erc})")]
    MutationMix { uniform: f64, erc: f64 },
    #[error("population size must be at least 2, got {0}")]
    PopulationSize(usize),
    #[error("initial depth range {min}..={max} does not fit under max depth {limit}")]
    DepthRange {
        min: usize,
        max: usize,
        limit: usize,
    },
}

impl PrimitiveSet {
    pub fn new(operators: Vec<Op>, terminals: Vec<Terminal>) -> Result<Self, GpConfigError> {
        if operators.is_empty() || terminals.is_empty() {
            return Err(GpConfigError::EmptyPrimitiveSet);
        }
        for t in &terminals {
            if let Terminal::Ephemeral { mean, std_dev } = t {
                if !(mean.is_finite() && std_dev.is_finite() && *std_dev > 0.0) {
                    return Err(GpConfigError::BadEphemeral);
                }
            }
        }
        Ok(PrimitiveSet {
            operators,
            terminals,
        })
    }

    /// `{+, *, 1/n, -n, sqrt|n|}` over `{x, N(0, 5) constant}`.
    pub fn keijzer() -> Self {
        PrimitiveSet {
            operators: vec![Op::Add, Op::Mul, Op::Inv, Op::Neg, Op::SqrtAbs],
            terminals: vec![
                Terminal::Variable(0),
                Terminal::Ephemeral {
                    mean: 0.0,
                    std_dev: 5.0,
                },
            ],
        }
    }

    /// `{+, -, *, /, sin, cos, exp, log}` over `{x, 1}`, plus `y` for two
    /// inputs.
    pub fn nguyen(dims: usize) -> Self {
        let mut terminals = vec![Terminal::Variable(0), Terminal::Constant(1.0)];
        if dims >= 2 {
            terminals.push(Terminal::Variable(1));
        }
        PrimitiveSet {
            operators: vec![
                Op::Add,
                Op::Sub,
                Op::Mul,
                Op::Div,
                Op::Sin,
                Op::Cos,
                Op::Exp,
                Op::Log,
            ],
            terminals,
        }
    }

    pub fn operators(&self) -> &[Op] {
        &self.operators
    }

    pub fn terminals(&self) -> &[Terminal] {
        &self.terminals
    }

    fn ephemeral(&self) -> Option<Normal<f64>> {
        self.terminals.iter().find_map(|t| match t {
            Terminal::Ephemeral { mean, std_dev } => Normal::new(*mean, *std_dev).ok(),
            _ => None,
        })
    }

    fn terminal_ratio(&self) -> f64 {
        let t = self.terminals.len() as f64;
        t / (t + self.operators.len() as f64)
    }

    fn random_terminal<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        match self.terminals.choose(rng).expect("non-empty terminals") {
            Terminal::Variable(i) => Expr::Var(*i),
            Terminal::Constant(c) => Expr::Const(*c),
            Terminal::Ephemeral { mean, std_dev } => {
                let dist = Normal::new(*mean, *std_dev).expect("validated ephemeral");
                Expr::Const(dist.sample(rng))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MutationMix {
    pub uniform: f64,
    pub erc: f64,
}

impl Default for MutationMix {
    fn default() -> Self {
        MutationMix {
            uniform: 0.9,
            erc: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpConfig {
    pub population_size: usize,
    pub max_depth: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub mutation_mix: MutationMix,
    /// Ramped half-and-half initial depth range.
    pub init_min_depth: usize,
    pub init_max_depth: usize,
    /// Maximum depth of subtrees grown by uniform mutation.
    pub mutation_max_depth: usize,
    pub primitive_set: PrimitiveSet,
}

impl GpConfig {
    pub fn keijzer() -> Self {
        GpConfig {
            population_size: 8,
            max_depth: 15,
            crossover_prob: 1.0,
            mutation_prob: 1.0,
            mutation_mix: MutationMix::default(),
            init_min_depth: 2,
            init_max_depth: 6,
            mutation_max_depth: 3,
            primitive_set: PrimitiveSet::keijzer(),
        }
    }

    pub fn nguyen(dims: usize) -> Self {
        GpConfig {
            population_size: 4,
            primitive_set: PrimitiveSet::nguyen(dims),
            ..GpConfig::keijzer()
        }
    }

    pub fn validate(&self) -> Result<(), GpConfigError> {
        for (name, value) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("mutation_mix.uniform", self.mutation_mix.uniform),
            ("mutation_mix.erc", self.mutation_mix.erc),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(GpConfigError::Probability { name, value });
            }
        }
        let MutationMix { uniform, erc } = self.mutation_mix;
        if ((uniform + erc) - 1.0).abs() > 1e-9 {
            return Err(GpConfigError::MutationMix { uniform, erc });
        }
        if self.population_size < 2 {
            return Err(GpConfigError::PopulationSize(self.population_size));
        }
        if self.init_min_depth > self.init_max_depth
            || self.init_max_depth > self.max_depth
            || self.mutation_max_depth > self.max_depth
        {
            return Err(GpConfigError::DepthRange {
                min: self.init_min_depth,
                max: self.init_max_depth,
                limit: self.max_depth,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMethod {
    Full,
    Grow,
}

/// Random tree with height drawn uniformly from `min_depth..=max_depth`.
///
/// `Full` places operators at every level above the chosen height. `Grow`
/// may stop early once `min_depth` is reached, choosing a terminal with
/// probability `|terminals| / |primitives|`.
pub fn random_tree<R: Rng + ?Sized>(
    pset: &PrimitiveSet,
    rng: &mut R,
    min_depth: usize,
    max_depth: usize,
    method: InitMethod,
) -> Expr {
    let height = rng.random_range(min_depth..=max_depth);
    grow_node(pset, rng, 0, height, min_depth, method)
}

fn grow_node<R: Rng + ?Sized>(
    pset: &PrimitiveSet,
    rng: &mut R,
    depth: usize,
    height: usize,
    min_depth: usize,
    method: InitMethod,
) -> Expr {
    let leaf = match method {
        InitMethod::Full => depth == height,
        InitMethod::Grow => {
            depth == height || (depth >= min_depth && rng.random::<f64>() < pset.terminal_ratio())
        }
    };
    if leaf {
        return pset.random_terminal(rng);
    }
    let op = *pset.operators.choose(rng).expect("non-empty operators");
    let args = (0..op.arity())
        .map(|_| grow_node(pset, rng, depth + 1, height, min_depth, method))
        .collect();
    Expr::Call(op, args)
}

/// Ramped half-and-half: a fair coin picks full or grow per individual.
pub fn ramped_half_and_half<R: Rng + ?Sized>(
    config: &GpConfig,
    rng: &mut R,
    count: usize,
) -> Vec<(Expr, InitMethod)> {
    (0..count)
        .map(|_| {
            let method = if rng.random_bool(0.5) {
                InitMethod::Full
            } else {
                InitMethod::Grow
            };
            let tree = random_tree(
                &config.primitive_set,
                rng,
                config.init_min_depth,
                config.init_max_depth,
                method,
            );
            (tree, method)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub individuals: Vec<Expr>,
    pub generation: usize,
}

pub fn init_population<R: Rng + ?Sized>(config: &GpConfig, rng: &mut R) -> Population {
    Population {
        individuals: ramped_half_and_half(config, rng, config.population_size)
            .into_iter()
            .map(|(t, _)| t)
            .collect(),
        generation: 0,
    }
}

/// Aligned node positions `(index in a, index in b)` of the common region:
/// both trees are walked from the root and descended where the two nodes
/// have equal arity.
pub fn common_region(a: &Expr, b: &Expr) -> Vec<(usize, usize)> {
    fn walk(a: &Expr, ia: usize, b: &Expr, ib: usize, out: &mut Vec<(usize, usize)>) {
        out.push((ia, ib));
        if let (Expr::Call(_, ca), Expr::Call(_, cb)) = (a, b) {
            if ca.len() == cb.len() {
                let (mut oa, mut ob) = (ia + 1, ib + 1);
                for (x, y) in ca.iter().zip(cb) {
                    walk(x, oa, y, ob, out);
                    oa += x.node_count();
                    ob += y.node_count();
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(a, 0, b, 0, &mut out);
    out
}

/// Swaps the subtrees at the given aligned positions.
pub fn crossover_at(a: &Expr, b: &Expr, point: (usize, usize)) -> (Expr, Expr) {
    let sa = a.subtree(point.0).expect("point inside a").clone();
    let sb = b.subtree(point.1).expect("point inside b").clone();
    (a.with_subtree(point.0, sb), b.with_subtree(point.1, sa))
}

fn repair(child: Expr, parent: &Expr, max_depth: usize) -> Expr {
    if child.depth() > max_depth {
        parent.clone()
    } else {
        child
    }
}

/// Common-region one-point crossover. An offspring deeper than `max_depth`
/// is replaced by its parent.
pub fn one_point_crossover<R: Rng + ?Sized>(
    a: &Expr,
    b: &Expr,
    rng: &mut R,
    max_depth: usize,
) -> (Expr, Expr) {
    let region = common_region(a, b);
    let point = *region.choose(rng).expect("root is always common");
    let (c1, c2) = crossover_at(a, b, point);
    (repair(c1, a, max_depth), repair(c2, b, max_depth))
}

/// Replaces a uniformly chosen subtree with a freshly grown one.
pub fn uniform_mutation<R: Rng + ?Sized>(tree: &Expr, config: &GpConfig, rng: &mut R) -> Expr {
    let index = rng.random_range(0..tree.node_count());
    let fresh = random_tree(
        &config.primitive_set,
        rng,
        0,
        config.mutation_max_depth,
        InitMethod::Grow,
    );
    repair(tree.with_subtree(index, fresh), tree, config.max_depth)
}

/// Resamples one uniformly chosen constant from the ephemeral distribution.
/// Falls back to [`uniform_mutation`] when the tree has no constants or the
/// primitive set has no ephemeral terminal.
pub fn erc_mutation<R: Rng + ?Sized>(tree: &Expr, config: &GpConfig, rng: &mut R) -> Expr {
    let positions = tree.constant_positions();
    match (config.primitive_set.ephemeral(), positions.choose(rng)) {
        (Some(dist), Some(&index)) => tree.with_subtree(index, Expr::Const(dist.sample(rng))),
        _ => uniform_mutation(tree, config, rng),
    }
}

/// One generation of variation; returns the deduplicated canonical subtrees
/// of the offspring, which replace the population.
pub fn propose_features<R: Rng + ?Sized>(
    population: &mut Population,
    config: &GpConfig,
    rng: &mut R,
) -> Vec<CanonicalExpr> {
    let mut order: Vec<usize> = (0..population.individuals.len()).collect();
    order.shuffle(rng);
    let mut offspring: Vec<Expr> = order
        .iter()
        .map(|&i| population.individuals[i].clone())
        .collect();
    for pair in offspring.chunks_mut(2) {
        if let [a, b] = pair {
            if rng.random_bool(config.crossover_prob) {
                let (c1, c2) = one_point_crossover(a, b, rng, config.max_depth);
                *a = c1;
                *b = c2;
            }
        }
    }
    for child in offspring.iter_mut() {
        if rng.random_bool(config.mutation_prob) {
            *child = if rng.random_bool(config.mutation_mix.uniform) {
                uniform_mutation(child, config, rng)
            } else {
                erc_mutation(child, config, rng)
            };
        }
    }
    population.individuals = offspring;
    population.generation += 1;
    collect_candidates(&population.individuals)
}

/// Union of canonical subtrees over `trees`, first occurrence kept.
pub fn collect_candidates(trees: &[Expr]) -> Vec<CanonicalExpr> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for tree in trees {
        for ce in subtrees(tree) {
            if seen.insert(ce.clone()) {
                out.push(ce);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> GpRng {
        GpRng::seed_from_u64(seed)
    }

    fn is_full(e: &Expr, height: usize, depth: usize) -> bool {
        match e {
            Expr::Call(_, args) => args.iter().all(|a| is_full(a, height, depth + 1)),
            _ => depth == height,
        }
    }

    #[test]
    fn population_contract() {
        let cfg = GpConfig::nguyen(1);
        let pop = init_population(&cfg, &mut rng(1));
        assert_eq!(pop.individuals.len(), 4);
        for t in &pop.individuals {
            assert!(t.depth() <= 15 && t.depth() >= 1);
            assert!(t.is_well_formed());
        }
        assert_eq!(pop, init_population(&cfg, &mut rng(1)));
    }

    #[test]
    fn full_trees_have_uniform_leaf_depth() {
        let cfg = GpConfig::keijzer();
        let mut r = rng(5);
        for _ in 0..200 {
            let t = random_tree(&cfg.primitive_set, &mut r, 2, 6, InitMethod::Full);
            assert!(is_full(&t, t.depth(), 0));
        }
    }

    #[test]
    fn half_and_half_ratio() {
        let cfg = GpConfig::keijzer();
        let mut r = rng(11);
        let inits = ramped_half_and_half(&cfg, &mut r, 1000);
        let full = inits.iter().filter(|(_, m)| *m == InitMethod::Full).count();
        let ratio = full as f64 / 1000.0;
        assert!((ratio - 0.5).abs() <= 0.05, "ratio {}", ratio);
        assert!(inits
            .iter()
            .any(|(t, m)| *m == InitMethod::Grow && !is_full(t, t.depth(), 0)));
    }

    #[test]
    fn root_crossover_swaps_parents() {
        let a = crate::expr::parse("(+ x (sin x))").unwrap();
        let b = crate::expr::parse("(cos (* x 1))").unwrap();
        let (c1, c2) = crossover_at(&a, &b, (0, 0));
        assert_eq!((c1, c2), (b, a));
    }

    #[test]
    fn common_region_stops_at_arity_mismatch() {
        let a = crate::expr::parse("(+ (sin x) x)").unwrap();
        let b = crate::expr::parse("(* (+ x x) x)").unwrap();
        assert_eq!(common_region(&a, &b), vec![(0, 0), (1, 1), (3, 4)]);
    }

    #[test]
    fn identical_parents_give_identical_offspring() {
        let cfg = GpConfig::keijzer();
        let mut r = rng(3);
        let t = random_tree(&cfg.primitive_set, &mut r, 2, 6, InitMethod::Grow);
        for _ in 0..50 {
            let (c1, c2) = one_point_crossover(&t, &t, &mut r, 15);
            assert_eq!(c1, t);
            assert_eq!(c2, t);
        }
    }

    #[test]
    fn leaf_mutation_replaces_root() {
        let cfg = GpConfig::nguyen(1);
        let mut r = rng(9);
        let mut saw_change = false;
        for _ in 0..20 {
            let m = uniform_mutation(&Expr::Var(0), &cfg, &mut r);
            assert!(m.depth() <= 3);
            saw_change |= m != Expr::Var(0);
        }
        assert!(saw_change);
        let a = uniform_mutation(&Expr::Var(0), &cfg, &mut rng(4));
        let b = uniform_mutation(&Expr::Var(0), &cfg, &mut rng(4));
        assert_eq!(a, b);
    }

    #[test]
    fn erc_mutation_keeps_structure() {
        let cfg = GpConfig::keijzer();
        let t = crate::expr::parse("(+ x 2.5)").unwrap();
        let m = erc_mutation(&t, &cfg, &mut rng(2));
        match &m {
            Expr::Call(Op::Add, args) => {
                assert_eq!(args[0], Expr::Var(0));
                assert!(matches!(args[1], Expr::Const(c) if c != 2.5));
            }
            other => panic!("structure changed: {}", other),
        }
    }

    #[test]
    fn erc_mutation_falls_back_without_constants() {
        let cfg = GpConfig::keijzer();
        let t = crate::expr::parse("(sqrtabs (* x x))").unwrap();
        let a = erc_mutation(&t, &cfg, &mut rng(8));
        let mut r = rng(8);
        // the fallback consumes no extra draws before delegating
        let b = uniform_mutation(&t, &cfg, &mut r);
        assert_eq!(a, b);
    }

    #[test]
    fn erc_distribution_moments() {
        let cfg = GpConfig::keijzer();
        let t = crate::expr::parse("(+ x 0)").unwrap();
        let mut r = rng(123);
        let samples: Vec<f64> = (0..10_000)
            .map(|_| match erc_mutation(&t, &cfg, &mut r) {
                Expr::Call(_, args) => match args[1] {
                    Expr::Const(c) => c,
                    _ => unreachable!(),
                },
                _ => unreachable!(),
            })
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.15, "mean {}", mean);
        assert!((var.sqrt() - 5.0).abs() <= 0.15, "sd {}", var.sqrt());
    }

    #[test]
    fn leaf_population_proposes_single_feature() {
        let cfg = GpConfig {
            mutation_prob: 0.0,
            ..GpConfig::nguyen(1)
        };
        let mut pop = Population {
            individuals: vec![Expr::Var(0); 4],
            generation: 0,
        };
        let out = propose_features(&mut pop, &cfg, &mut rng(1));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].expr(), &Expr::Var(0));
        assert_eq!(pop.generation, 1);
    }

    #[test]
    fn proposals_are_unique_and_bounded() {
        let cfg = GpConfig::keijzer();
        let mut r = rng(77);
        let mut pop = init_population(&cfg, &mut r);
        for _ in 0..30 {
            let out = propose_features(&mut pop, &cfg, &mut r);
            let total: usize = pop.individuals.iter().map(Expr::node_count).sum();
            assert!(out.len() <= total);
            let distinct: HashSet<_> = out.iter().collect();
            assert_eq!(distinct.len(), out.len());
            assert!(pop.individuals.iter().all(|t| t.depth() <= 15));
        }
    }

    #[test]
    fn validation() {
        assert!(GpConfig::keijzer().validate().is_ok());
        let bad = GpConfig {
            mutation_mix: MutationMix {
                uniform: 0.5,
                erc: 0.4,
            },
            ..GpConfig::keijzer()
        };
        assert!(matches!(
            bad.validate(),
            Err(GpConfigError::MutationMix { .. })
        ));
        let bad = GpConfig {
            population_size: 1,
            ..GpConfig::keijzer()
        };
        assert_eq!(bad.validate(), Err(GpConfigError::PopulationSize(1)));
    }
}
