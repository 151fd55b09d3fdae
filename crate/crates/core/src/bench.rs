//! Benchmark registry, dataset sampling, metrics and cross-trial summaries.
//!
//! Sampling notation: `E[a, b, c]` is the evenly spaced grid from `a` to
//! `b` with step `c`; `U[a, b, c]` is `c` independent uniform draws from
//! `[a, b]` per dimension.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Inputs, InputsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("unknown benchmark `{0}`")]
    Unknown(String),
    #[error("invalid sampling {spec}: {reason}")]
    InvalidSampling { spec: String, reason: String },
    #[error("input {value} outside the domain of {benchmark}")]
    Domain { benchmark: &'static str, value: f64 },
    #[error(transparent)]
    Inputs(#[from] InputsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Keijzer,
    Nguyen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingKind {
    /// Even grid with step `c`.
    E,
    /// `c` uniform draws.
    U,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingSpec {
    pub kind: SamplingKind,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub dims: usize,
}

impl std::fmt::Display for SamplingSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self.kind {
            SamplingKind::E => "E",
            SamplingKind::U => "U",
        };
        write!(f, "{}[{}, {}, {}]", k, self.a, self.b, self.c)
    }
}

impl SamplingSpec {
    pub const fn grid(a: f64, b: f64, step: f64) -> SamplingSpec {
        SamplingSpec {
            kind: SamplingKind::E,
            a,
            b,
            c: step,
            dims: 1,
        }
    }

    pub const fn uniform(a: f64, b: f64, count: usize, dims: usize) -> SamplingSpec {
        SamplingSpec {
            kind: SamplingKind::U,
            a,
            b,
            c: count as f64,
            dims,
        }
    }

    fn invalid(&self, reason: &str) -> BenchError {
        BenchError::InvalidSampling {
            spec: self.to_string(),
            reason: reason.into(),
        }
    }

    /// Checks `a < b` and the step or count constraints.
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.a.is_finite() && self.b.is_finite() && self.a < self.b) {
            return Err(self.invalid("requires finite a < b"));
        }
        if self.dims == 0 {
            return Err(self.invalid("requires at least one dimension"));
        }
        match self.kind {
            SamplingKind::E => {
                if !(self.c > 0.0 && self.c.is_finite()) {
                    return Err(self.invalid("step must be positive"));
                }
                let steps = (self.b - self.a) / self.c;
                if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                    return Err(self.invalid("(b - a) / c must be an integer"));
                }
                if self.dims != 1 {
                    return Err(self.invalid("grids are one-dimensional"));
                }
            }
            SamplingKind::U => {
                if !(self.c >= 1.0 && self.c.fract() == 0.0) {
                    return Err(self.invalid("count must be a positive integer"));
                }
            }
        }
        Ok(())
    }
}

/// Points `a + k·c` for `k = 0..=round((b − a)/c)`, the last forced to `b`.
pub fn sample_grid(spec: &SamplingSpec) -> Result<Vec<f64>, BenchError> {
    spec.validate()?;
    if spec.kind != SamplingKind::E {
        return Err(spec.invalid("not a grid spec"));
    }
    let steps = ((spec.b - spec.a) / spec.c).round() as usize;
    let mut out: Vec<f64> = (0..=steps).map(|k| spec.a + k as f64 * spec.c).collect();
    out[steps] = spec.b;
    Ok(out)
}

/// `c` uniform draws per dimension from `[a, b]`, column-major.
pub fn sample_uniform<R: Rng + ?Sized>(
    spec: &SamplingSpec,
    rng: &mut R,
) -> Result<Inputs, BenchError> {
    spec.validate()?;
    if spec.kind != SamplingKind::U {
        return Err(spec.invalid("not a uniform spec"));
    }
    let n = spec.c as usize;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(
            (0..spec.dims)
                .map(|_| rng.random_range(spec.a..=spec.b))
                .collect::<Vec<f64>>(),
        );
    }
    Ok(Inputs::from_rows(&rows, spec.dims)?)
}

pub fn sample(spec: &SamplingSpec, rng: &mut ChaCha8Rng) -> Result<Inputs, BenchError> {
    match spec.kind {
        SamplingKind::E => Ok(Inputs::single(sample_grid(spec)?)?),
        SamplingKind::U => sample_uniform(spec, rng),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BenchmarkSpec {
    pub name: &'static str,
    pub family: Family,
    pub dims: usize,
    pub formula: &'static str,
    pub train: SamplingSpec,
    pub test: SamplingSpec,
    target: fn(&[f64]) -> f64,
    domain: fn(f64) -> bool,
}

fn keijzer1(p: &[f64]) -> f64 {
    0.3 * p[0] * (2.0 * std::f64::consts::PI * p[0]).sin()
}

fn harmonic(p: &[f64]) -> f64 {
    let upper = p[0].floor() as u64;
    (1..=upper).map(|i| 1.0 / i as f64).sum()
}

fn poly(p: &[f64], degree: i32) -> f64 {
    (1..=degree).map(|k| p[0].powi(k)).sum()
}

fn any(_: f64) -> bool {
    true
}

fn at_least_one(x: f64) -> bool {
    x >= 1.0
}

fn positive(x: f64) -> bool {
    x > 0.0
}

fn non_negative(x: f64) -> bool {
    x >= 0.0
}

fn above_minus_one(x: f64) -> bool {
    x > -1.0
}

const fn keijzer(
    name: &'static str,
    formula: &'static str,
    train: SamplingSpec,
    test: SamplingSpec,
    target: fn(&[f64]) -> f64,
    domain: fn(f64) -> bool,
) -> BenchmarkSpec {
    BenchmarkSpec {
        name,
        family: Family::Keijzer,
        dims: 1,
        formula,
        train,
        test,
        target,
        domain,
    }
}

const fn nguyen(
    name: &'static str,
    formula: &'static str,
    spec: SamplingSpec,
    target: fn(&[f64]) -> f64,
    domain: fn(f64) -> bool,
) -> BenchmarkSpec {
    BenchmarkSpec {
        name,
        family: Family::Nguyen,
        dims: spec.dims,
        formula,
        train: spec,
        test: spec,
        target,
        domain,
    }
}

static REGISTRY: [BenchmarkSpec; 17] = [
    keijzer(
        "keijzer1",
        "0.3 x sin(2 pi x)",
        SamplingSpec::grid(-1.0, 1.0, 0.1),
        SamplingSpec::grid(-1.0, 1.0, 0.001),
        keijzer1,
        any,
    ),
    keijzer(
        "keijzer2",
        "0.3 x sin(2 pi x)",
        SamplingSpec::grid(-2.0, 2.0, 0.1),
        SamplingSpec::grid(-2.0, 2.0, 0.001),
        keijzer1,
        any,
    ),
    keijzer(
        "keijzer3",
        "0.3 x sin(2 pi x)",
        SamplingSpec::grid(-3.0, 3.0, 0.1),
        SamplingSpec::grid(-3.0, 3.0, 0.001),
        keijzer1,
        any,
    ),
    keijzer(
        "keijzer6",
        "sum_{i=1}^{x} 1/i",
        SamplingSpec::grid(1.0, 50.0, 1.0),
        SamplingSpec::grid(1.0, 120.0, 1.0),
        harmonic,
        at_least_one,
    ),
    keijzer(
        "keijzer7",
        "ln x",
        SamplingSpec::grid(1.0, 100.0, 1.0),
        SamplingSpec::grid(1.0, 100.0, 0.1),
        |p| p[0].ln(),
        positive,
    ),
    keijzer(
        "keijzer8",
        "sqrt x",
        SamplingSpec::grid(1.0, 100.0, 1.0),
        SamplingSpec::grid(1.0, 100.0, 0.1),
        |p| p[0].sqrt(),
        non_negative,
    ),
    keijzer(
        "keijzer9",
        "arcsinh x",
        SamplingSpec::grid(1.0, 100.0, 1.0),
        SamplingSpec::grid(1.0, 100.0, 0.1),
        |p| p[0].asinh(),
        any,
    ),
    nguyen(
        "nguyen1",
        "x^3 + x^2 + x",
        SamplingSpec::uniform(-1.0, 1.0, 20, 1),
        |p| poly(p, 3),
        any,
    ),
    nguyen(
        "nguyen2",
        "x^4 + x^3 + x^2 + x",
        SamplingSpec::uniform(-1.0, 1.0, 20, 1),
        |p| poly(p, 4),
        any,
    ),
    nguyen(
        "nguyen3",
        "x^5 + x^4 + x^3 + x^2 + x",
        SamplingSpec::uniform(-1.0, 1.0, 20, 1),
        |p| poly(p, 5),
        any,
    ),
    nguyen(
        "nguyen4",
        "x^6 + x^5 + x^4 + x^3 + x^2 + x",
        SamplingSpec::uniform(-1.0, 1.0, 20, 1),
        |p| poly(p, 6),
        any,
    ),
    nguyen(
        "nguyen5",
        "sin(x^2) cos(x) - 1",
        SamplingSpec::uniform(-1.0, 1.0, 20, 1),
        |p| (p[0] * p[0]).sin() * p[0].cos() - 1.0,
        any,
    ),
    nguyen(
        "nguyen6",
        "sin(x) + sin(x + x^2)",
        SamplingSpec::uniform(-1.0, 1.0, 20, 1),
        |p| p[0].sin() + (p[0] + p[0] * p[0]).sin(),
        any,
    ),
    nguyen(
        "nguyen7",
        "log(x + 1) + log(x^2 + 1)",
        SamplingSpec::uniform(0.0, 2.0, 20, 1),
        |p| (p[0] + 1.0).ln() + (p[0] * p[0] + 1.0).ln(),
        above_minus_one,
    ),
    nguyen(
        "nguyen8",
        "sqrt x",
        SamplingSpec::uniform(0.0, 4.0, 40, 1),
        |p| p[0].sqrt(),
        non_negative,
    ),
    nguyen(
        "nguyen9",
        "sin(x) + sin(y^2)",
        SamplingSpec::uniform(-1.0, 1.0, 100, 2),
        |p| p[0].sin() + (p[1] * p[1]).sin(),
        any,
    ),
    nguyen(
        "nguyen10",
        "2 sin(x) cos(y)",
        SamplingSpec::uniform(-1.0, 1.0, 100, 2),
        |p| 2.0 * p[0].sin() * p[1].cos(),
        any,
    ),
];

pub fn registry() -> &'static [BenchmarkSpec] {
    &REGISTRY
}

pub fn benchmark(name: &str) -> Result<&'static BenchmarkSpec, BenchError> {
    REGISTRY
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| BenchError::Unknown(name.to_string()))
}

impl BenchmarkSpec {
    /// Closed-form target at every row of `inputs`.
    pub fn target_eval(&self, inputs: &Inputs) -> Result<Vec<f64>, BenchError> {
        if inputs.dims() < self.dims {
            return Err(BenchError::InvalidSampling {
                spec: self.name.to_string(),
                reason: format!("needs {} input dimensions", self.dims),
            });
        }
        if let Some(&value) = inputs.column(0).iter().find(|&&x| !(self.domain)(x)) {
            return Err(BenchError::Domain {
                benchmark: self.name,
                value,
            });
        }
        Ok((0..inputs.n_rows())
            .map(|r| (self.target)(&inputs.row(r)))
            .collect())
    }

    pub fn eval_point(&self, point: &[f64]) -> f64 {
        (self.target)(point)
    }

    /// Training and test sets for one trial. Uniform sets draw from
    /// independent streams of a generator seeded with `seed`.
    pub fn datasets(&self, seed: u64) -> Result<(Dataset, Dataset), BenchError> {
        let train_inputs = sample(&self.train, &mut stream_rng(seed, Stream::TrainData))?;
        let test_inputs = sample(&self.test, &mut stream_rng(seed, Stream::TestData))?;
        let train = Dataset::new(self.target_eval(&train_inputs)?, train_inputs);
        let test = Dataset::new(self.target_eval(&test_inputs)?, test_inputs);
        Ok((train, test))
    }
}

/// Independent random streams derived from one trial seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Evolution = 0,
    TrainData = 1,
    TestData = 2,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Inputs with their target values.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Inputs,
    pub target: Vec<f64>,
}

impl Dataset {
    pub fn new(target: Vec<f64>, inputs: Inputs) -> Dataset {
        assert_eq!(target.len(), inputs.n_rows(), "target length matches rows");
        Dataset { inputs, target }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub max_abs_error: f64,
    /// Sum of absolute errors.
    pub raw_fitness: f64,
}

pub fn metrics(y: &[f64], t: &[f64]) -> Metrics {
    assert_eq!(y.len(), t.len(), "prediction and target lengths differ");
    let mut sq = 0.0;
    let mut max = 0.0f64;
    let mut raw = 0.0;
    for (a, b) in y.iter().zip(t) {
        let e = (a - b).abs();
        sq += e * e;
        max = max.max(e);
        raw += e;
    }
    Metrics {
        rmse: (sq / y.len().max(1) as f64).sqrt(),
        max_abs_error: max,
        raw_fitness: raw,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    /// Lower middle element for even counts.
    pub median: f64,
    pub max: f64,
    pub mean: f64,
}

/// Order statistics of `values`; `None` when empty.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Summary {
        min: v[0],
        median: v[(v.len() - 1) / 2],
        max: v[v.len() - 1],
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}
