//! Shared fixtures for integration tests: the corpus and a toy model trained
//! once per test binary.

use std::sync::OnceLock;

use rpl_core::corpus::{self, CorpusCase};
use rpl_core::oracle::{train_toy, ToyOracle, TrainConfig, Vocab};

pub struct TrainedFixture {
    pub cases: Vec<CorpusCase>,
    pub vocab: Vocab,
    pub oracle: ToyOracle,
    pub train_seconds: f64,
}

pub fn trained() -> &'static TrainedFixture {
    static FIXTURE: OnceLock<TrainedFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let cases = corpus::builtin_corpus();
        let vocab = corpus::build_vocab(&cases);
        let pairs = corpus::training_pairs(&cases, &vocab);
        let config = TrainConfig {
            epochs: 400,
            learning_rate: 2.5,
            seed: 7,
            ..TrainConfig::default()
        };
        let started = std::time::Instant::now();
        let (model, losses) = train_toy(vocab.len(), &pairs, &config).expect("training converges");
        let train_seconds = started.elapsed().as_secs_f64();
        assert!(
            losses.last().unwrap() < &1.0,
            "fixture model failed to converge: {:?}",
            losses.last()
        );
        TrainedFixture {
            oracle: ToyOracle::new(model, vocab.clone()),
            cases,
            vocab,
            train_seconds,
        }
    })
}
