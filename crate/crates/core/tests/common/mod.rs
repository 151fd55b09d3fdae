#![allow(dead_code)]

use gp_rvm::rvm::{DesignMatrix, FeatureId, SparseLinearModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Log marginal likelihood evaluated directly from the N×N covariance
/// `C = I/β + Σ_j φ_j φ_jᵀ / α_j`.
pub fn dense_log_ml(cols: &[&[f64]], t: &[f64], alpha: &[f64], beta: f64) -> f64 {
    let n = t.len();
    let mut c = DMatrix::<f64>::identity(n, n) / beta;
    for (col, a) in cols.iter().zip(alpha) {
        let v = DVector::from_column_slice(col);
        c += (&v * v.transpose()) / *a;
    }
    let chol = c.cholesky().expect("C is positive definite");
    let tv = DVector::from_column_slice(t);
    let quad = tv.dot(&chol.solve(&tv));
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// Maximizes a unimodal function of `ln α` on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

pub struct Instance {
    pub design: DesignMatrix,
    pub target: Vec<f64>,
    pub planted: Vec<usize>,
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random Gaussian columns with a target built from a few of them plus noise.
pub fn planted_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(12..=30);
    let k = rng.random_range(3..=10);
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| normal(rng)).collect())
        .collect();
    let truth = rng.random_range(1..=3.min(k));
    let mut planted: Vec<usize> = (0..k).collect();
    for i in 0..k {
        let j = rng.random_range(i..k);
        planted.swap(i, j);
    }
    planted.truncate(truth);
    planted.sort();
    let noise = [0.01, 0.1, 0.5][rng.random_range(0..3)];
    let mut target: Vec<f64> = (0..n).map(|_| noise * normal(rng)).collect();
    for &j in &planted {
        let w = rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for (t, x) in target.iter_mut().zip(&cols[j]) {
            *t += w * x;
        }
    }
    let design = DesignMatrix::from_columns(
        n,
        cols.into_iter()
            .enumerate()
            .map(|(i, c)| (FeatureId(i as u64), c)),
    )
    .unwrap();
    Instance {
        design,
        target,
        planted,
    }
}

/// Largest log-likelihood increase any single add, delete or re-estimate
/// achieves from `model`, with β held fixed. Each candidate action is scored
/// by the dense evaluation, optimizing the new precision by golden section.
pub fn best_single_action_gain(design: &DesignMatrix, t: &[f64], model: &SparseLinearModel) -> f64 {
    let positions: Vec<usize> = model
        .active
        .iter()
        .map(|id| design.position(*id).unwrap())
        .collect();
    let col = |i: usize| -> &[f64] { &design.column(i).values };
    let eval = |idx: &[usize], alpha: &[f64]| {
        let cols: Vec<&[f64]> = idx.iter().map(|&i| col(i)).collect();
        dense_log_ml(&cols, t, alpha, model.beta)
    };
    let base = eval(&positions, &model.alpha);
    let mut best = f64::NEG_INFINITY;
    for k in 0..design.len() {
        if let Some(j) = positions.iter().position(|&p| p == k) {
            let mut idx = positions.clone();
            let mut alpha = model.alpha.clone();
            idx.remove(j);
            alpha.remove(j);
            best = best.max(eval(&idx, &alpha) - base);
            let (_, v) = golden_max(
                |la| {
                    let mut a = model.alpha.clone();
                    a[j] = la.exp();
                    eval(&positions, &a)
                },
                -20.0,
                28.0,
            );
            best = best.max(v - base);
        } else {
            let mut idx = positions.clone();
            idx.push(k);
            let (_, v) = golden_max(
                |la| {
                    let mut a = model.alpha.clone();
                    a.push(la.exp());
                    eval(&idx, &a)
                },
                -20.0,
                28.0,
            );
            best = best.max(v - base);
        }
    }
    best
}
