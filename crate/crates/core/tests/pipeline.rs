use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stackjoint::corpus::{is_tree, read_conll_str, write_conll_string, EmbeddingTable, Format, Sentence};
use stackjoint::decoder::{parse, parse_corpus};
use stackjoint::nn::{Hyper, ModelFile};
use stackjoint::pid::{identify_predicates, mark_predicates, train_pid, PidConfig};
use stackjoint::synth::{joint_parse, SynthOptions};
use stackjoint::trainer::{train, TrainConfig};
use stackjoint::Mode;

fn corpus(seed: u64, size: usize) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| {
            let n = rng.gen_range(2..=9);
            joint_parse(&mut rng, n, &SynthOptions::default())
        })
        .collect()
}

fn config(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        epochs: 2,
        hyper: Hyper::tiny(),
        ..TrainConfig::default()
    }
}

#[test]
fn hybrid_model_parses_and_survives_a_file_round_trip() {
    let data = corpus(1, 6);
    let model = train(&data, Some(&data), EmbeddingTable::empty(), &config(Mode::Hybrid), &mut |_| {}).unwrap();
    assert_eq!(model.mode, Mode::Hybrid);
    assert_eq!(model.syntax.as_ref().map(|m| m.mode), Some(Mode::SyntaxOnly));
    let parsed = parse_corpus(&model, &data).unwrap();
    for (gold, p) in data.iter().zip(&parsed) {
        assert!(is_tree(&p.sentence));
        for a in &p.sentence.sem_arcs {
            assert!(gold.token(a.pred).is_predicate);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hybrid.bin");
    let file = ModelFile {
        parser: Some(model),
        pid: None,
    };
    file.save(&path).unwrap();
    let loaded = ModelFile::load(&path).unwrap();
    assert_eq!(loaded, file);
    assert_eq!(loaded.to_bytes(), file.to_bytes());
    let again = parse_corpus(loaded.parser.as_ref().unwrap(), &data).unwrap();
    assert_eq!(again, parsed);
}

#[test]
fn every_mode_trains_and_decodes() {
    let data = corpus(2, 4);
    for mode in [Mode::Joint, Mode::SyntaxOnly, Mode::SemanticsOnly] {
        let mut epochs = 0;
        let model = train(&data, None, EmbeddingTable::empty(), &config(mode), &mut |_| epochs += 1).unwrap();
        assert_eq!(epochs, 2);
        for s in &data {
            let p = parse(&model, s).unwrap();
            assert_eq!(p.sentence.syn_arcs.is_empty(), !mode.has_syntax());
            if !mode.has_semantics() {
                assert!(p.sentence.sem_arcs.is_empty());
            }
        }
    }
}

#[test]
fn identified_predicates_feed_the_parser() {
    let data = corpus(3, 12);
    let pid_config = PidConfig {
        lemma_dim: 8,
        pos_dim: 4,
        hidden: 8,
        epochs: 5,
        ..PidConfig::default()
    };
    let mut log = Vec::new();
    let pid = train_pid(&data, Some(&data), &pid_config, |e: &_| log.push(Clone::clone(e))).unwrap();
    assert!(!log.is_empty());
    let marked = mark_predicates(&data, &pid);
    for (s, m) in data.iter().zip(&marked) {
        let ids = identify_predicates(s, &pid);
        for t in &m.tokens {
            assert_eq!(t.is_predicate, ids.contains(&t.index));
            assert!(t.sense.is_none());
        }
    }
    let model = train(&data, None, EmbeddingTable::empty(), &config(Mode::Joint), &mut |_| {}).unwrap();
    for (s, p) in marked.iter().zip(parse_corpus(&model, &marked).unwrap()) {
        for a in &p.sentence.sem_arcs {
            assert!(s.token(a.pred).is_predicate);
        }
        for t in &p.sentence.tokens {
            assert_eq!(t.sense.is_some(), s.token(t.index).is_predicate);
        }
    }
}

proptest! {
    #[test]
    fn conll_write_read_round_trip(seed in any::<u64>(), size in 1usize..4) {
        let data = corpus(seed, size);
        for format in [Format::Conll2008, Format::Conll2009] {
            let text = write_conll_string(&data, format);
            prop_assert_eq!(&read_conll_str(&text, format).unwrap(), &data);
        }
    }
}
