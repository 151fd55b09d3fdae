use gp_rvm::bench::{benchmark, stream_rng, Stream};
use gp_rvm::expr::evaluate;
use gp_rvm::gp::{init_population, propose_features, GpConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_generation_respects_depth_limit(seed in any::<u64>(), keijzer in any::<bool>()) {
        let cfg = if keijzer { GpConfig::keijzer() } else { GpConfig::nguyen(2) };
        let mut rng = stream_rng(seed, Stream::Evolution);
        let mut pop = init_population(&cfg, &mut rng);
        for _ in 0..30 {
            let cands = propose_features(&mut pop, &cfg, &mut rng);
            prop_assert_eq!(pop.individuals.len(), cfg.population_size);
            for t in &pop.individuals {
                prop_assert!(t.depth() <= cfg.max_depth);
                prop_assert!(t.is_well_formed());
            }
            let bound: usize = pop.individuals.iter().map(|t| t.node_count()).sum();
            prop_assert!(cands.len() <= bound);
            for (i, a) in cands.iter().enumerate() {
                prop_assert!(!cands[i + 1..].contains(a));
            }
        }
    }

    #[test]
    fn evolution_is_deterministic(seed in any::<u64>()) {
        let cfg = GpConfig::keijzer();
        let run = || {
            let mut rng = stream_rng(seed, Stream::Evolution);
            let mut pop = init_population(&cfg, &mut rng);
            let mut all = vec![];
            for _ in 0..10 {
                all.push(propose_features(&mut pop, &cfg, &mut rng));
            }
            (pop, all)
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn offspring_evaluate_on_training_grid() {
    let spec = benchmark("nguyen8").unwrap();
    let (train, _) = spec.datasets(3).unwrap();
    let cfg = GpConfig::nguyen(spec.dims);
    let mut rng = stream_rng(3, Stream::Evolution);
    let mut pop = init_population(&cfg, &mut rng);
    for _ in 0..200 {
        propose_features(&mut pop, &cfg, &mut rng);
        for t in &pop.individuals {
            // Protected operators keep every value finite except overflow
            // in products, which is reported as an error rather than a panic.
            let _ = evaluate(t, &train.inputs);
        }
    }
}
