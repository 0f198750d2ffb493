use proptest::prelude::*;
use rand::rngs::SmallRng;
use rand::SeedableRng;

use wordvec::corpus::{iter_instances, window_bounds, Vocabulary};
use wordvec::eval::spearman;
use wordvec::gradcheck::{analytic_cbow_grad, random_cbow_problem};
use wordvec::model::{sigmoid, Sigmoid, SigmoidTable};
use wordvec::trainer::cbow_step;

fn distinct_floats(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(-10_000i32..10_000, n)
        .prop_map(|s| s.into_iter().map(|x| x as f64 / 7.0).collect::<Vec<_>>())
        .prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spearman_ignores_monotone_transforms(xs in distinct_floats(3..30), seed in any::<u64>()) {
        let mut rng = SmallRng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let base = spearman(&xs, &ys).unwrap();
        let transformed: Vec<f64> = xs.iter().map(|x| (x / 50.0).exp() * 3.0 + 1.0).collect();
        prop_assert!((spearman(&transformed, &ys).unwrap() - base).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
        prop_assert!((spearman(&ys, &xs).unwrap() - base).abs() < 1e-12);
        let negated: Vec<f64> = xs.iter().map(|x| -x).collect();
        prop_assert!((spearman(&negated, &ys).unwrap() + base).abs() < 1e-12);
    }

    #[test]
    fn instances_respect_windows(
        sentence in prop::collection::vec(0u32..6, 0..40),
        c_max in 1usize..8,
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let counts: Vec<(String, u64)> = (0..6).map(|i| (format!("w{i}"), 10 + i as u64)).collect();
        let vocab = Vocabulary::from_counts(counts, 0.75).unwrap();
        let mut rng = SmallRng::seed_from_u64(seed);
        let instances: Vec<_> = iter_instances(&sentence, c_max, k, &vocab, &mut rng).collect();
        if sentence.len() >= 2 {
            prop_assert_eq!(instances.len(), sentence.len());
        } else {
            prop_assert!(instances.is_empty());
        }
        for inst in &instances {
            prop_assert!(!inst.context.is_empty());
            prop_assert!(inst.context.len() <= 2 * c_max);
            prop_assert!(inst.context.len() < sentence.len());
            prop_assert_eq!(inst.negatives.len(), k);
            prop_assert!(inst.negatives.iter().all(|&n| (n as usize) < vocab.len()));
        }
    }

    #[test]
    fn window_bounds_stay_in_sentence(len in 1usize..100, pos_frac in 0.0f64..1.0, b in 1usize..20) {
        let pos = ((len as f64 * pos_frac) as usize).min(len - 1);
        let (lo, hi) = window_bounds(len, pos, b);
        prop_assert!(lo <= pos && pos < hi && hi <= len);
        prop_assert!(pos - lo <= b && hi - pos - 1 <= b);
    }

    #[test]
    fn sigmoid_table_error_is_small(x in -20.0f64..20.0) {
        let t = Sigmoid::Table(SigmoidTable::default());
        // linear interpolation with step h = 0.01: error <= h^2/8 * max|σ''| (< 0.1) inside,
        // saturation error <= σ(-6) outside
        let bound = if x.abs() < 6.0 { 2e-6 } else { sigmoid(-6.0f64) + 1e-12 };
        prop_assert!((t.eval(x) - sigmoid(x)).abs() <= bound);
    }

    #[test]
    fn faulty_source_step_is_c_times_correct(
        dim in 1usize..10,
        c in 1usize..8,
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = SmallRng::seed_from_u64(seed);
        let (model, inst) = random_cbow_problem(&mut rng, dim, c, k, 0.5);
        let mut correct = model.clone();
        let mut faulty = model.clone();
        cbow_step(&inst, &mut correct, 0.01, false, &Sigmoid::Exact);
        cbow_step(&inst, &mut faulty, 0.01, true, &Sigmoid::Exact);
        prop_assert_eq!(correct.target_matrix(), faulty.target_matrix());
        for ((&m, &a), &b) in model.source_matrix().iter().zip(correct.source_matrix()).zip(faulty.source_matrix()) {
            let (dc, df) = (a - m, b - m);
            prop_assert!((df - c as f64 * dc).abs() <= 1e-12 * (1.0 + df.abs()), "{} vs {}", df, dc);
        }
        let g = analytic_cbow_grad(&inst, &model, false);
        let gf = analytic_cbow_grad(&inst, &model, true);
        prop_assert_eq!(gf.target_grad, g.target_grad);
    }
}

/// Total variation distance between empirical negative draws and
/// counts^0.75 / Z.
#[test]
fn noise_distribution_total_variation() {
    let counts = [1000u64, 400, 120, 50, 9, 3, 1];
    let entries = counts.iter().enumerate().map(|(i, &c)| (format!("w{i}"), c)).collect();
    let vocab = Vocabulary::from_counts(entries, 0.75).unwrap();
    let z: f64 = counts.iter().map(|&c| (c as f64).powf(0.75)).sum();
    let mut rng = SmallRng::seed_from_u64(11);
    let draws = 200_000;
    let mut hist = vec![0usize; counts.len()];
    for _ in 0..draws {
        hist[vocab.sample_negative(&mut rng) as usize] += 1;
    }
    let tvd: f64 = counts
        .iter()
        .zip(&hist)
        .map(|(&c, &h)| ((c as f64).powf(0.75) / z - h as f64 / draws as f64).abs())
        .sum::<f64>()
        / 2.0;
    // E[TVD] is about sum sqrt(p(1-p)/n) / 2 ~ 2e-3 here
    assert!(tvd < 0.01, "{tvd}");
    for (i, &c) in counts.iter().enumerate() {
        let p = vocab.noise_probability(i as u32);
        assert!((p - (c as f64).powf(0.75) / z).abs() < 1e-12);
    }
}
