use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bitext_distill::curriculum::curriculum_views;
use bitext_distill::model_io::{read_model, write_model};
use bitext_distill::toy::ToyLanguage;
use bitext_distill::train::{batch_loss, MaskedSeq};
use bitext_distill::vocab::PAD;
use bitext_distill::{
    load_model, save_model, train, Corpus, CurriculumSchedule, DistillConfig, EncoderConfig, StepMetrics, Student,
    SubwordVocab, SyntheticTeacher,
};

fn small_corpus(mono: bool) -> Corpus {
    let lang = ToyLanguage::new(20, 2, 0.5, 3, 6, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let parallel = lang.pairs(40, &[0], &mut rng);
    let mono = if mono { lang.monolingual(40, &[0, 1], &mut rng) } else { Vec::new() };
    Corpus { parallel, mono, ..Default::default() }
}

fn small_student(corpus: &Corpus) -> Student {
    let vocab = SubwordVocab::train(&corpus.student_lines(), 120).unwrap();
    let cfg = EncoderConfig { layers: 2, width: 16, heads: 2, ffn_mult: 2, vocab_size: 0, max_len: 16 };
    Student::init(vocab, cfg, 5).unwrap()
}

fn run(corpus: &Corpus, cfg: &DistillConfig) -> (Student, Vec<StepMetrics>) {
    let teacher = SyntheticTeacher::new(16, 1);
    // The vocabulary always comes from the full corpus so runs are comparable.
    let student = small_student(&small_corpus(true));
    train(student, corpus, &teacher, cfg, |_| {}).unwrap()
}

fn cfg(mlm_weight: f64, curriculum: bool) -> DistillConfig {
    DistillConfig {
        steps: 12,
        batch_size: 8,
        lr: 0.002,
        mlm_weight,
        curriculum: curriculum.then(CurriculumSchedule::default),
        seed: 7,
        ..Default::default()
    }
}

#[test]
fn same_seed_gives_identical_trajectories() {
    let corpus = small_corpus(true);
    for c in [cfg(1.0, false), cfg(1.0, true)] {
        let (a, ma) = run(&corpus, &c);
        let (b, mb) = run(&corpus, &c);
        assert_eq!(ma, mb);
        assert_eq!(a.params, b.params);
    }
}

#[test]
fn zero_mlm_weight_ignores_monolingual_data() {
    let (a, ma) = run(&small_corpus(true), &cfg(0.0, false));
    let (b, mb) = run(&small_corpus(false), &cfg(0.0, false));
    assert_eq!(ma, mb);
    assert_eq!(a.params, b.params);
    assert!(ma.iter().all(|m| m.mlm_loss == 0.0));
}

#[test]
fn total_is_cosine_plus_weighted_mlm() {
    let (_, metrics) = run(&small_corpus(true), &cfg(0.7, false));
    for m in metrics {
        assert!(m.mlm_loss > 0.0);
        assert_eq!(m.total, m.cosine_loss + 0.7 * m.mlm_loss);
    }
}

#[test]
fn training_reduces_the_cosine_loss() {
    let mut c = cfg(0.0, false);
    c.steps = 150;
    let (_, metrics) = run(&small_corpus(false), &c);
    let head: f64 = metrics[..10].iter().map(|m| m.cosine_loss).sum();
    let tail: f64 = metrics[metrics.len() - 10..].iter().map(|m| m.cosine_loss).sum();
    assert!(tail < 0.5 * head, "{head} -> {tail}");
}

#[test]
fn pad_tokens_do_not_change_the_encoding() {
    let student = small_student(&small_corpus(true));
    let toks = student.tokens_for("a b c");
    let plain = student.encode(&toks).unwrap();
    let mut padded = vec![PAD, PAD];
    for &t in &toks {
        padded.push(t);
        padded.push(PAD);
    }
    assert_eq!(student.encode(&padded).unwrap(), plain);
}

#[test]
fn single_token_sentence_pools_to_its_state() {
    let student = small_student(&small_corpus(true));
    let v = student.encode(&[7]).unwrap();
    let cache = student.encoder.forward(&student.params, &[&[7]]);
    assert_eq!(v, cache.output.row(0).to_vec());
}

#[test]
fn batch_loss_with_zero_weight_matches_pure_distillation() {
    let student = small_student(&small_corpus(true));
    let parallel = vec![(vec![5u32, 6, 7], vec![0.5; 16])];
    let masked = vec![MaskedSeq::with_mask_token(&[5, 6, 7, 8], &[1]).unwrap()];
    let mut g0 = vec![0.0; student.params.len()];
    let mut g1 = vec![0.0; student.params.len()];
    let a = batch_loss(&student.encoder, &student.params, &parallel, &[], 1.0, Some(&mut g0)).unwrap();
    let b = batch_loss(&student.encoder, &student.params, &parallel, &masked, 0.0, Some(&mut g1)).unwrap();
    assert_eq!(a.total, b.total);
    assert_eq!(g0, g1);
}

#[test]
fn model_file_round_trips() {
    let (student, _) = run(&small_corpus(true), &cfg(1.0, false));
    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("student.model");
    save_model(&student, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.vocab.pieces(), student.vocab.pieces());
    assert_eq!(loaded.encoder.config(), student.encoder.config());
    for (a, b) in loaded.params.iter().zip(&student.params) {
        assert_eq!(*a, f64::from(*b as f32));
    }
    let mut first = Vec::new();
    write_model(&loaded, &mut first).unwrap();
    let again = read_model(&mut &first[..]).unwrap();
    let mut second = Vec::new();
    write_model(&again, &mut second).unwrap();
    assert_eq!(first, second);
}

#[test]
fn truncated_model_file_is_rejected() {
    let student = small_student(&small_corpus(true));
    let mut buf = Vec::new();
    write_model(&student, &mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    assert!(read_model(&mut &buf[..]).is_err());
}

proptest! {
    #[test]
    fn curriculum_views_grow_to_the_full_pair(len in 1usize..40, words in 1usize..15, step in prop::sample::select(vec![0.1, 0.2, 0.25, 0.5, 1.0])) {
        let sched = CurriculumSchedule::uniform(step).unwrap();
        let toks: Vec<u32> = (0..len as u32).collect();
        let teacher: Vec<String> = (0..words).map(|w| format!("w{w}")).collect();
        let teacher = teacher.join(" ");
        let views = curriculum_views(&toks, &teacher, &sched);
        for pair in views.windows(2) {
            prop_assert!(pair[0].tokens.len() <= pair[1].tokens.len());
            prop_assert!(pair[0].teacher_text.len() <= pair[1].teacher_text.len());
        }
        let last = views.last().unwrap();
        prop_assert_eq!(&last.tokens, &toks);
        prop_assert_eq!(&last.teacher_text, &teacher);
    }

    #[test]
    fn tokenization_round_trips(words in prop::collection::vec("[a-f]{1,6}", 1..8)) {
        let corpus = ["abc def", "fed cab bad", "face bead"];
        let vocab = SubwordVocab::train(&corpus, 40).unwrap();
        let text = words.join(" ");
        prop_assert_eq!(vocab.detokenize(&vocab.tokenize(&text)), text);
    }
}
