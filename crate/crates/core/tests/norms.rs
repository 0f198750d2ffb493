use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use wordvec::analysis::norm_experiment;
use wordvec::trainer::{Mode, TrainConfig};

/// Sentences drawn from one of 8 topics of 25 words each, plus shared filler.
fn topic_corpus(sentences: usize) -> String {
    let mut rng = SmallRng::seed_from_u64(8);
    let mut text = String::new();
    for _ in 0..sentences {
        let topic = rng.random_range(0..8);
        let words: Vec<String> = (0..rng.random_range(6..=12))
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    format!("f{}", rng.random_range(0..30))
                } else {
                    format!("t{topic}_{}", rng.random_range(0..25))
                }
            })
            .collect();
        text += &words.join(" ");
        text.push('\n');
    }
    text
}

fn base() -> TrainConfig {
    TrainConfig {
        dim: 50,
        min_count: 1,
        ..TrainConfig::new(Mode::CbowCorrect)
    }
}

#[test]
fn faulty_norms_grow_with_window_and_correct_norms_stay_flat() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, topic_corpus(20_000)).unwrap();
    let report = norm_experiment(&path, &[1, 5, 10, 15], &[Mode::CbowCorrect, Mode::CbowFaulty], &base(), false).unwrap();
    let faulty: Vec<f64> = report.source_norms(Mode::CbowFaulty).iter().map(|r| r.1).collect();
    assert!(faulty.windows(2).all(|w| w[0] < w[1]), "{faulty:?}");
    let correct: Vec<f64> = report.source_norms(Mode::CbowCorrect).iter().map(|r| r.1).collect();
    let (lo, hi) = correct.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    assert!(hi / lo < 1.5, "{correct:?}");
}

#[test]
fn single_word_contexts_make_the_modes_coincide() {
    // every sentence has two tokens, so each window holds exactly one word
    let mut rng = SmallRng::seed_from_u64(3);
    let text: String = (0..3000)
        .map(|_| format!("w{} w{}\n", rng.random_range(0..40), rng.random_range(0..40)))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.txt");
    std::fs::write(&path, text).unwrap();
    let report = norm_experiment(&path, &[1, 3], &[Mode::CbowCorrect, Mode::CbowFaulty], &base(), true).unwrap();
    for c in [1, 3] {
        let a = report.get(Mode::CbowCorrect, c).unwrap();
        let b = report.get(Mode::CbowFaulty, c).unwrap();
        assert_eq!((a.source_norm, a.target_norm), (b.source_norm, b.target_norm), "c_max {c}");
    }
}
