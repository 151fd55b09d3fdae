//! Expression trees over one or two input variables.
//!
//! Trees are the genotype handled by the GP layer and, after
//! canonicalization, the formula of a regression feature. Evaluation is
//! column-wise: a tree is evaluated once over every row of the input matrix.

mod cache;
mod canon;
mod parse;

pub use cache::{EvalCache, EvalCounters, DEFAULT_CACHE_CAPACITY};
pub use canon::{canonicalize, structural_hash, subtrees, CanonicalExpr};
pub use parse::{format_constant, parse, ParseError};

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

/// Threshold below which a denominator or log argument counts as zero.
pub const PROTECTION_EPS: f64 = 1e-12;
/// `exp` clamps its argument to `[-EXP_CLAMP, EXP_CLAMP]`.
pub const EXP_CLAMP: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Inv,
    SqrtAbs,
    Sin,
    Cos,
    Exp,
    Log,
}

impl Op {
    pub const ALL: [Op; 11] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::Neg,
        Op::Inv,
        Op::SqrtAbs,
        Op::Sin,
        Op::Cos,
        Op::Exp,
        Op::Log,
    ];

    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            _ => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Neg => "neg",
            Op::Inv => "inv",
            Op::SqrtAbs => "sqrtabs",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Exp => "exp",
            Op::Log => "log",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Op> {
        Op::ALL.iter().copied().find(|op| op.symbol() == symbol)
    }

    /// Protected unary application.
    #[inline]
    pub fn apply1(self, a: f64) -> f64 {
        match self {
            Op::Neg => -a,
            Op::Inv => {
                if a == 0.0 {
                    1.0
                } else {
                    1.0 / a
                }
            }
            Op::SqrtAbs => a.abs().sqrt(),
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Exp => a.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
            Op::Log => {
                if a.abs() < PROTECTION_EPS {
                    0.0
                } else {
                    a.abs().ln()
                }
            }
            _ => panic!("{:?} is not unary", self),
        }
    }

    /// Protected binary application.
    #[inline]
    pub fn apply2(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => {
                if b.abs() < PROTECTION_EPS {
                    1.0
                } else {
                    a / b
                }
            }
            _ => panic!("{:?} is not binary", self),
        }
    }

    pub fn apply(self, args: &[f64]) -> f64 {
        match args {
            [a] => self.apply1(*a),
            [a, b] => self.apply2(*a, *b),
            _ => panic!("{:?} applied to {} arguments", self, args.len()),
        }
    }
}

/// A node of an expression tree. The root node is the tree.
///
/// Constants compare by bit pattern, so `Expr` equality is exact structural
/// equality (and `NaN` constants equal themselves).
#[derive(Clone, Debug)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Call(Op, Vec<Expr>),
}

/// The GP genotype and feature formula.
pub type ExpressionTree = Expr;

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Expr::Var(a), Expr::Var(b)) => a == b,
            (Expr::Const(a), Expr::Const(b)) => a.to_bits() == b.to_bits(),
            (Expr::Call(oa, ca), Expr::Call(ob, cb)) => oa == ob && ca == cb,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Expr {
    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn unary(op: Op, a: Expr) -> Expr {
        debug_assert_eq!(op.arity(), 1);
        Expr::Call(op, vec![a])
    }

    pub fn binary(op: Op, a: Expr, b: Expr) -> Expr {
        debug_assert_eq!(op.arity(), 2);
        Expr::Call(op, vec![a, b])
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self, Expr::Call(..))
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Call(_, args) => 1 + args.iter().map(Expr::node_count).sum::<usize>(),
            _ => 1,
        }
    }

    /// Edges on the longest root-to-leaf path; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Call(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) => None,
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_var).max(),
        }
    }

    /// Checks that every call node carries as many children as its arity.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Expr::Call(op, args) => {
                args.len() == op.arity() && args.iter().all(Expr::is_well_formed)
            }
            _ => true,
        }
    }

    /// Subtree at a pre-order position (root = 0).
    pub fn subtree(&self, index: usize) -> Option<&Expr> {
        if index == 0 {
            return Some(self);
        }
        let Expr::Call(_, args) = self else {
            return None;
        };
        let mut offset = 1;
        for arg in args {
            let size = arg.node_count();
            if index < offset + size {
                return arg.subtree(index - offset);
            }
            offset += size;
        }
        None
    }

    pub fn subtree_mut(&mut self, index: usize) -> Option<&mut Expr> {
        if index == 0 {
            return Some(self);
        }
        let Expr::Call(_, args) = self else {
            return None;
        };
        let mut offset = 1;
        for arg in args.iter_mut() {
            let size = arg.node_count();
            if index < offset + size {
                return arg.subtree_mut(index - offset);
            }
            offset += size;
        }
        None
    }

    /// Returns a copy of `self` with the subtree at `index` replaced.
    pub fn with_subtree(&self, index: usize, replacement: Expr) -> Expr {
        let mut out = self.clone();
        if let Some(slot) = out.subtree_mut(index) {
            *slot = replacement;
        }
        out
    }

    /// Pre-order positions of constant leaves.
    pub fn constant_positions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut index = 0;
        self.visit_preorder(&mut |node| {
            if matches!(node, Expr::Const(_)) {
                out.push(index);
            }
            index += 1;
        });
        out
    }

    pub fn visit_preorder<F: FnMut(&Expr)>(&self, f: &mut F) {
        f(self);
        if let Expr::Call(_, args) = self {
            for arg in args {
                arg.visit_preorder(f);
            }
        }
    }

    /// Evaluates at a single point.
    pub fn eval_point(&self, point: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => point[*i],
            Expr::Const(c) => *c,
            Expr::Call(op, args) => match args.as_slice() {
                [a] => op.apply1(a.eval_point(point)),
                [a, b] => op.apply2(a.eval_point(point), b.eval_point(point)),
                _ => f64::NAN,
            },
        }
    }

    fn eval_columns(&self, inputs: &Inputs) -> Vec<f64> {
        match self {
            Expr::Var(i) => inputs.column(*i).to_vec(),
            Expr::Const(c) => vec![*c; inputs.n_rows()],
            Expr::Call(op, args) => match args.as_slice() {
                [a] => {
                    let mut out = a.eval_columns(inputs);
                    for v in out.iter_mut() {
                        *v = op.apply1(*v);
                    }
                    out
                }
                [a, b] => {
                    let mut out = a.eval_columns(inputs);
                    let rhs = b.eval_columns(inputs);
                    for (v, r) in out.iter_mut().zip(rhs) {
                        *v = op.apply2(*v, r);
                    }
                    out
                }
                _ => vec![f64::NAN; inputs.n_rows()],
            },
        }
    }
}

/// Total structural order: leaves before calls, then by variable index,
/// constant bits, operator, and children.
pub fn cmp_structure(a: &Expr, b: &Expr) -> Ordering {
    fn rank(e: &Expr) -> u8 {
        match e {
            Expr::Const(_) => 0,
            Expr::Var(_) => 1,
            Expr::Call(..) => 2,
        }
    }
    match (a, b) {
        (Expr::Var(x), Expr::Var(y)) => x.cmp(y),
        (Expr::Const(x), Expr::Const(y)) => x.to_bits().cmp(&y.to_bits()),
        (Expr::Call(oa, ca), Expr::Call(ob, cb)) => oa.cmp(ob).then_with(|| {
            for (x, y) in ca.iter().zip(cb) {
                let ord = cmp_structure(x, y);
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            ca.len().cmp(&cb.len())
        }),
        _ => rank(a).cmp(&rank(b)),
    }
}

/// Prefix s-expression serialization; see [`parse`] for the grammar.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(0) => f.write_str("x"),
            Expr::Var(1) => f.write_str("y"),
            Expr::Var(i) => write!(f, "x{}", i),
            Expr::Const(c) => f.write_str(&format_constant(*c)),
            Expr::Call(op, args) => {
                write!(f, "({}", op.symbol())?;
                for arg in args {
                    write!(f, " {}", arg)?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Input matrix stored column-major: one vector per input dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Inputs {
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InputsError {
    #[error("input matrix needs at least one dimension")]
    NoDimensions,
    #[error("input column {column} has {found} rows, expected {expected}")]
    RaggedColumns {
        column: usize,
        expected: usize,
        found: usize,
    },
    #[error("input value at row {row}, column {column} is not finite")]
    NonFinite { row: usize, column: usize },
}

impl Inputs {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Inputs, InputsError> {
        let n_rows = columns.first().ok_or(InputsError::NoDimensions)?.len();
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(InputsError::RaggedColumns {
                    column: j,
                    expected: n_rows,
                    found: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(InputsError::NonFinite { row, column: j });
            }
        }
        Ok(Inputs { columns, n_rows })
    }

    /// Builds from row-major points, each of length `dims`.
    pub fn from_rows(rows: &[Vec<f64>], dims: usize) -> Result<Inputs, InputsError> {
        if dims == 0 {
            return Err(InputsError::NoDimensions);
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); dims];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dims {
                return Err(InputsError::RaggedColumns {
                    column: r,
                    expected: dims,
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                columns[j].push(*v);
            }
        }
        Inputs::from_columns(columns)
    }

    pub fn single(values: Vec<f64>) -> Result<Inputs, InputsError> {
        Inputs::from_columns(vec![values])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dims(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, dim: usize) -> &[f64] {
        &self.columns[dim]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("expression produced a non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("expression references variable {index} but inputs have {dims} dimensions")]
    UnknownVariable { index: usize, dims: usize },
    #[error("malformed expression: operator arity mismatch")]
    Malformed,
}

/// Evaluates `expr` on every input row under the protected-operator rules.
///
/// Any NaN or infinite entry in the result is reported as
/// [`EvalError::NonFinite`]; such features must be discarded.
pub fn evaluate(expr: &Expr, inputs: &Inputs) -> Result<Vec<f64>, EvalError> {
    if let Some(index) = expr.max_var() {
        if index >= inputs.dims() {
            return Err(EvalError::UnknownVariable {
                index,
                dims: inputs.dims(),
            });
        }
    }
    if !expr.is_well_formed() {
        return Err(EvalError::Malformed);
    }
    let out = expr.eval_columns(inputs);
    match out.iter().position(|v| !v.is_finite()) {
        Some(row) => Err(EvalError::NonFinite { row }),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var(0)
    }

    #[test]
    fn identity_terminal() {
        let inputs = Inputs::single(vec![3.0]).unwrap();
        assert_eq!(evaluate(&x(), &inputs).unwrap(), vec![3.0]);
    }

    #[test]
    fn sqrt_abs_is_exact_on_squares() {
        let inputs = Inputs::single(vec![4.0, -9.0]).unwrap();
        let e = Expr::unary(Op::SqrtAbs, x());
        assert_eq!(evaluate(&e, &inputs).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn protected_rules() {
        assert_eq!(Op::Inv.apply1(0.0), 1.0);
        assert_eq!(Op::Inv.apply1(4.0), 0.25);
        assert_eq!(Op::Div.apply2(3.0, 1e-13), 1.0);
        assert_eq!(Op::Div.apply2(3.0, -1e-13), 1.0);
        assert_eq!(Op::Div.apply2(3.0, 2.0), 1.5);
        assert_eq!(Op::Log.apply1(0.0), 0.0);
        assert_eq!(Op::Log.apply1(5e-13), 0.0);
        assert_eq!(Op::Log.apply1(-std::f64::consts::E), 1.0);
        assert_eq!(Op::Exp.apply1(1000.0), 60f64.exp());
        assert_eq!(Op::Exp.apply1(-1000.0), (-60f64).exp());
    }

    #[test]
    fn reciprocal_at_zero_evaluates_to_one() {
        let inputs = Inputs::single(vec![0.0]).unwrap();
        let e = Expr::unary(Op::Inv, x());
        assert_eq!(evaluate(&e, &inputs).unwrap(), vec![1.0]);
    }

    #[test]
    fn non_finite_output_is_reported() {
        let inputs = Inputs::single(vec![1e300, 1.0]).unwrap();
        let e = Expr::binary(Op::Mul, x(), x());
        assert_eq!(evaluate(&e, &inputs), Err(EvalError::NonFinite { row: 0 }));
    }

    #[test]
    fn unknown_variable_rejected() {
        let inputs = Inputs::single(vec![1.0]).unwrap();
        assert!(matches!(
            evaluate(&Expr::var(1), &inputs),
            Err(EvalError::UnknownVariable { index: 1, dims: 1 })
        ));
    }

    #[test]
    fn positions_and_replacement() {
        // (+ x (sin x))
        let e = Expr::binary(Op::Add, x(), Expr::unary(Op::Sin, x()));
        assert_eq!(e.node_count(), 4);
        assert_eq!(e.depth(), 2);
        assert_eq!(e.subtree(2), Some(&Expr::unary(Op::Sin, x())));
        assert_eq!(e.subtree(3), Some(&x()));
        assert_eq!(e.subtree(4), None);
        let r = e.with_subtree(2, Expr::constant(1.0));
        assert_eq!(r, Expr::binary(Op::Add, x(), Expr::constant(1.0)));
        assert_eq!(r.constant_positions(), vec![2]);
    }

    #[test]
    fn constant_equality_is_bitwise() {
        assert_ne!(Expr::constant(0.0), Expr::constant(-0.0));
        assert_eq!(Expr::constant(f64::NAN), Expr::constant(f64::NAN));
    }

    #[test]
    fn point_and_column_evaluation_agree() {
        let e = Expr::binary(
            Op::Div,
            Expr::unary(Op::Cos, x()),
            Expr::binary(Op::Sub, x(), Expr::var(1)),
        );
        let inputs =
            Inputs::from_rows(&[vec![0.5, 0.25], vec![1.0, 1.0], vec![-2.0, 3.0]], 2).unwrap();
        let col = evaluate(&e, &inputs).unwrap();
        for r in 0..3 {
            assert_eq!(col[r].to_bits(), e.eval_point(&inputs.row(r)).to_bits());
        }
    }
}
