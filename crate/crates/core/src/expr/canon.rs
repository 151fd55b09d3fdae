//! Canonical form of expression trees.
//!
//! Rule set (fixed):
//! - constant folding under the protected-operator semantics;
//! - `+`, `-`, `neg` and scalar multiples are normalized into a linear
//!   combination `c0 + c1*m1 + ... + ck*mk` of distinct monomials, which
//!   eliminates `+0`, `*1`, `*0`, `-(-n)` and collects like terms;
//! - `*` chains are flattened into monomials whose factors are sorted;
//! - commutative operands are ordered by `(node_count, hash)`, with a
//!   structural comparison as the final tie-break;
//! - no trigonometric, exponential or rational rewriting.
//!
//! A scalar multiplying a sum is distributed over it; a product of two
//! non-constant sums is kept as a product. Rendering puts the constant first
//! and writes negative coefficients with `-`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::{self, Write};
use std::hash::{Hash, Hasher};

use super::{cmp_structure, Expr, Op, PROTECTION_EPS};

struct Fnv64(u64);

impl Fnv64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
}

impl fmt::Write for Fnv64 {
    fn write_str(&mut self, s: &str) -> fmt::Result {
        for b in s.bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(Fnv64::PRIME);
        }
        Ok(())
    }
}

/// 64-bit FNV-1a digest of the prefix serialization.
pub fn structural_hash(expr: &Expr) -> u64 {
    let mut h = Fnv64(Fnv64::OFFSET);
    write!(h, "{}", expr).expect("hash sink never fails");
    h.0
}

/// An expression in canonical form together with its digest and size.
#[derive(Clone, Debug)]
pub struct CanonicalExpr {
    expr: Expr,
    hash: u64,
    node_count: usize,
}

impl CanonicalExpr {
    fn from_rendered(expr: Expr) -> CanonicalExpr {
        CanonicalExpr {
            hash: structural_hash(&expr),
            node_count: expr.node_count(),
            expr,
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn into_expr(self) -> Expr {
        self.expr
    }
}

impl PartialEq for CanonicalExpr {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash && self.expr == other.expr
    }
}

impl Eq for CanonicalExpr {}

impl Hash for CanonicalExpr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.hash);
    }
}

impl fmt::Display for CanonicalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

#[derive(Clone, Debug)]
struct Keyed {
    expr: Expr,
    count: usize,
    hash: u64,
}

impl Keyed {
    fn new(expr: Expr) -> Keyed {
        Keyed {
            count: expr.node_count(),
            hash: structural_hash(&expr),
            expr,
        }
    }

    fn order(&self, other: &Keyed) -> Ordering {
        self.count
            .cmp(&other.count)
            .then(self.hash.cmp(&other.hash))
            .then_with(|| cmp_structure(&self.expr, &other.expr))
    }
}

#[derive(Clone, Debug)]
struct Term {
    coef: f64,
    factors: Vec<Keyed>,
    mono: Keyed,
}

impl Term {
    fn new(coef: f64, mut factors: Vec<Keyed>) -> Term {
        factors.sort_by(Keyed::order);
        let mut iter = factors.iter();
        let first = iter.next().expect("monomial has at least one factor");
        let product = iter.fold(first.expr.clone(), |acc, f| {
            Expr::binary(Op::Mul, acc, f.expr.clone())
        });
        Term {
            coef,
            mono: Keyed::new(product),
            factors,
        }
    }

    fn signed_expr(&self, coef: f64) -> Expr {
        if coef == 1.0 {
            self.mono.expr.clone()
        } else if coef == -1.0 {
            Expr::unary(Op::Neg, self.mono.expr.clone())
        } else {
            Expr::binary(Op::Mul, Expr::Const(coef), self.mono.expr.clone())
        }
    }
}

/// `constant + sum(coef * monomial)`, terms sorted by monomial with
/// non-zero coefficients.
#[derive(Clone, Debug)]
struct Lin {
    constant: f64,
    terms: Vec<Term>,
}

impl Lin {
    fn constant(c: f64) -> Lin {
        Lin {
            constant: c,
            terms: Vec::new(),
        }
    }

    fn atom(expr: Expr) -> Lin {
        Lin {
            constant: 0.0,
            terms: vec![Term::new(1.0, vec![Keyed::new(expr)])],
        }
    }

    fn as_constant(&self) -> Option<f64> {
        self.terms.is_empty().then_some(self.constant)
    }

    fn add(self, other: Lin) -> Lin {
        let constant = self.constant + other.constant;
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let mut a = self.terms.into_iter().peekable();
        let mut b = other.terms.into_iter().peekable();
        loop {
            let ord = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => x.mono.order(&y.mono),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => break,
            };
            match ord {
                Ordering::Less => terms.push(a.next().unwrap()),
                Ordering::Greater => terms.push(b.next().unwrap()),
                Ordering::Equal => {
                    let mut t = a.next().unwrap();
                    let u = b.next().unwrap();
                    t.coef += u.coef;
                    if t.coef != 0.0 {
                        terms.push(t);
                    }
                }
            }
        }
        Lin { constant, terms }
    }

    fn scale(mut self, c: f64) -> Lin {
        if c == 1.0 {
            return self;
        }
        if c == 0.0 {
            return Lin::constant(0.0);
        }
        self.constant *= c;
        for t in self.terms.iter_mut() {
            t.coef *= c;
        }
        self.terms.retain(|t| t.coef != 0.0);
        self
    }

    fn into_product(self) -> (f64, Vec<Keyed>) {
        if self.constant == 0.0 && self.terms.len() == 1 {
            let t = self.terms.into_iter().next().unwrap();
            (t.coef, t.factors)
        } else {
            (1.0, vec![Keyed::new(self.render())])
        }
    }

    fn mul(self, other: Lin) -> Lin {
        if let Some(c) = self.as_constant() {
            return other.scale(c);
        }
        if let Some(c) = other.as_constant() {
            return self.scale(c);
        }
        let (ca, mut fa) = self.into_product();
        let (cb, fb) = other.into_product();
        let coef = ca * cb;
        if coef == 0.0 {
            return Lin::constant(0.0);
        }
        fa.extend(fb);
        Lin {
            constant: 0.0,
            terms: vec![Term::new(coef, fa)],
        }
    }

    fn render(&self) -> Expr {
        let mut acc = if self.constant != 0.0 || self.terms.is_empty() {
            Some(Expr::Const(self.constant))
        } else {
            None
        };
        for t in &self.terms {
            acc = Some(match acc {
                None => t.signed_expr(t.coef),
                Some(a) if t.coef > 0.0 || t.coef.is_nan() => {
                    Expr::binary(Op::Add, a, t.signed_expr(t.coef))
                }
                Some(a) => Expr::binary(Op::Sub, a, t.signed_expr(-t.coef)),
            });
        }
        acc.expect("constant or at least one term")
    }
}

fn apply(op: Op, mut args: Vec<Lin>) -> Lin {
    match op {
        Op::Add => {
            let b = args.pop().unwrap();
            args.pop().unwrap().add(b)
        }
        Op::Sub => {
            let b = args.pop().unwrap();
            args.pop().unwrap().add(b.scale(-1.0))
        }
        Op::Mul => {
            let b = args.pop().unwrap();
            args.pop().unwrap().mul(b)
        }
        Op::Neg => args.pop().unwrap().scale(-1.0),
        Op::Div if args[1].as_constant().is_some() => {
            let c = args.pop().unwrap().as_constant().unwrap();
            if c.abs() < PROTECTION_EPS {
                Lin::constant(1.0)
            } else {
                let a = args.pop().unwrap();
                match a.as_constant() {
                    Some(v) => Lin::constant(v / c),
                    None => a.scale(1.0 / c),
                }
            }
        }
        _ => {
            let consts: Option<Vec<f64>> = args.iter().map(Lin::as_constant).collect();
            match consts {
                Some(values) => Lin::constant(op.apply(&values)),
                None => Lin::atom(Expr::Call(op, args.iter().map(Lin::render).collect())),
            }
        }
    }
}

fn canon_rec(expr: &Expr, sink: &mut Option<&mut Vec<Expr>>) -> Lin {
    let lin = match expr {
        Expr::Const(c) => Lin::constant(*c),
        Expr::Var(i) => Lin::atom(Expr::Var(*i)),
        Expr::Call(op, args) => {
            let args = args.iter().map(|a| canon_rec(a, sink)).collect();
            apply(*op, args)
        }
    };
    if let Some(out) = sink {
        out.push(lin.render());
    }
    lin
}

/// Rewrites `expr` into canonical form. Idempotent and semantics-preserving
/// up to floating-point reassociation of collected coefficients.
pub fn canonicalize(expr: &Expr) -> CanonicalExpr {
    CanonicalExpr::from_rendered(canon_rec(expr, &mut None).render())
}

/// Every rooted subtree of `expr`, canonicalized and deduplicated, in
/// post-order of first occurrence.
pub fn subtrees(expr: &Expr) -> Vec<CanonicalExpr> {
    let mut rendered = Vec::with_capacity(expr.node_count());
    canon_rec(expr, &mut Some(&mut rendered));
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut out: Vec<CanonicalExpr> = Vec::new();
    for e in rendered {
        let ce = CanonicalExpr::from_rendered(e);
        let bucket = seen.entry(ce.hash).or_default();
        if bucket.iter().any(|&i| out[i].expr == ce.expr) {
            continue;
        }
        bucket.push(out.len());
        out.push(ce);
    }
    out
}
