use gp_rvm::bench::{
    benchmark, registry, sample_uniform, stream_rng, summarize, Family, SamplingKind, SamplingSpec,
    Stream,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn uniform_draws_have_uniform_moments() {
    let spec = SamplingSpec::uniform(-1.0, 3.0, 20_000, 2);
    let inputs = sample_uniform(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    for d in 0..2 {
        let col = inputs.column(d);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Uniform on [a, b]: mean (a + b)/2, variance (b - a)²/12.
        let sd_mean = (16.0f64 / 12.0 / n).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * sd_mean, "mean {mean}");
        assert!((var - 16.0 / 12.0).abs() < 0.05, "variance {var}");
        // Decile occupancy within 4 sd of n/10.
        let mut bins = [0usize; 10];
        for x in col {
            bins[(((x + 1.0) / 4.0 * 10.0) as usize).min(9)] += 1;
        }
        let sd_bin = (n * 0.1 * 0.9).sqrt();
        for b in bins {
            assert!((b as f64 - n / 10.0).abs() < 4.0 * sd_bin, "{bins:?}");
        }
    }
}

#[test]
fn dataset_streams_are_independent_of_each_other() {
    let spec = benchmark("nguyen9").unwrap();
    let (train, test) = spec.datasets(11).unwrap();
    assert_ne!(train.inputs, test.inputs);
    let shifted = sample_uniform(&spec.train, &mut stream_rng(11, Stream::Evolution)).unwrap();
    assert_ne!(shifted, train.inputs);
    assert_eq!(spec.datasets(11).unwrap(), (train, test));
}

fn grid(a: f64, b: f64, c: f64) -> (SamplingKind, f64, f64, f64) {
    (SamplingKind::E, a, b, c)
}

fn unif(a: f64, b: f64, c: f64) -> (SamplingKind, f64, f64, f64) {
    (SamplingKind::U, a, b, c)
}

#[test]
fn registry_matches_published_sampling() {
    let expected = [
        ("keijzer1", grid(-1.0, 1.0, 0.1), grid(-1.0, 1.0, 0.001)),
        ("keijzer2", grid(-2.0, 2.0, 0.1), grid(-2.0, 2.0, 0.001)),
        ("keijzer3", grid(-3.0, 3.0, 0.1), grid(-3.0, 3.0, 0.001)),
        ("keijzer6", grid(1.0, 50.0, 1.0), grid(1.0, 120.0, 1.0)),
        ("keijzer7", grid(1.0, 100.0, 1.0), grid(1.0, 100.0, 0.1)),
        ("keijzer8", grid(1.0, 100.0, 1.0), grid(1.0, 100.0, 0.1)),
        ("keijzer9", grid(1.0, 100.0, 1.0), grid(1.0, 100.0, 0.1)),
        ("nguyen1", unif(-1.0, 1.0, 20.0), unif(-1.0, 1.0, 20.0)),
        ("nguyen2", unif(-1.0, 1.0, 20.0), unif(-1.0, 1.0, 20.0)),
        ("nguyen3", unif(-1.0, 1.0, 20.0), unif(-1.0, 1.0, 20.0)),
        ("nguyen4", unif(-1.0, 1.0, 20.0), unif(-1.0, 1.0, 20.0)),
        ("nguyen5", unif(-1.0, 1.0, 20.0), unif(-1.0, 1.0, 20.0)),
        ("nguyen6", unif(-1.0, 1.0, 20.0), unif(-1.0, 1.0, 20.0)),
        ("nguyen7", unif(0.0, 2.0, 20.0), unif(0.0, 2.0, 20.0)),
        ("nguyen8", unif(0.0, 4.0, 40.0), unif(0.0, 4.0, 40.0)),
        ("nguyen9", unif(-1.0, 1.0, 100.0), unif(-1.0, 1.0, 100.0)),
        ("nguyen10", unif(-1.0, 1.0, 100.0), unif(-1.0, 1.0, 100.0)),
    ];
    assert_eq!(registry().len(), expected.len());
    for (name, train, test) in expected {
        let b = benchmark(name).unwrap();
        let kind = |s: &SamplingSpec| (s.kind, s.a, s.b, s.c);
        assert_eq!(kind(&b.train), train, "{name} train");
        assert_eq!(kind(&b.test), test, "{name} test");
        let family = if name.starts_with("keijzer") {
            Family::Keijzer
        } else {
            Family::Nguyen
        };
        assert_eq!(b.family, family);
    }
}

#[test]
fn targets_match_independent_formulas() {
    use std::f64::consts::PI;
    type Oracle = fn(f64, f64) -> f64;
    let oracles: [(&str, Oracle); 17] = [
        ("keijzer1", |x, _| 0.3 * x * (2.0 * PI * x).sin()),
        ("keijzer2", |x, _| 0.3 * x * (2.0 * PI * x).sin()),
        ("keijzer3", |x, _| 0.3 * x * (2.0 * PI * x).sin()),
        ("keijzer6", |x, _| {
            let mut s = 0.0;
            let mut i = 1.0;
            while i <= x {
                s += 1.0 / i;
                i += 1.0;
            }
            s
        }),
        ("keijzer7", |x, _| x.ln()),
        ("keijzer8", |x, _| x.sqrt()),
        ("keijzer9", |x, _| (x + (x * x + 1.0).sqrt()).ln()),
        ("nguyen1", |x, _| x * x * x + x * x + x),
        ("nguyen2", |x, _| x * x * x * x + x * x * x + x * x + x),
        ("nguyen3", |x, _| {
            x.powi(5) + x.powi(4) + x.powi(3) + x * x + x
        }),
        ("nguyen4", |x, _| {
            x.powi(6) + x.powi(5) + x.powi(4) + x.powi(3) + x * x + x
        }),
        ("nguyen5", |x, _| (x * x).sin() * x.cos() - 1.0),
        ("nguyen6", |x, _| x.sin() + (x + x * x).sin()),
        ("nguyen7", |x, _| (x + 1.0).ln() + (x * x + 1.0).ln()),
        ("nguyen8", |x, _| x.sqrt()),
        ("nguyen9", |x, y| x.sin() + (y * y).sin()),
        ("nguyen10", |x, y| 2.0 * x.sin() * y.cos()),
    ];
    for (name, f) in oracles {
        let b = benchmark(name).unwrap();
        let (train, test) = b.datasets(3).unwrap();
        for set in [&train, &test] {
            for r in 0..set.len() {
                let p = set.inputs.row(r);
                let want = f(p[0], p.get(1).copied().unwrap_or(0.0));
                let got = set.target[r];
                assert!(
                    (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                    "{name} at {p:?}"
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn summary_orders_and_bounds(values in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
        let s = summarize(&values).unwrap();
        prop_assert!(s.min <= s.median && s.median <= s.max);
        prop_assert!(s.min <= s.mean + 1e-9 && s.mean <= s.max + 1e-9);
        let below = values.iter().filter(|&&v| v <= s.median).count();
        prop_assert!(2 * below >= values.len());
    }
}
