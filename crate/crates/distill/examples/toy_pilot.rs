use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bitext_core::{xsim_error_rate, EmbeddingMatrix, MarginConfig};
use bitext_distill::toy::ToyLanguage;
use bitext_distill::{train, Corpus, DistillConfig, EncoderConfig, Student, SubwordVocab, SyntheticTeacher, Teacher};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(500, |s| s.parse().unwrap());
    let width: usize = args.get(2).map_or(64, |s| s.parse().unwrap());
    let lr: f64 = args.get(3).map_or(0.0005, |s| s.parse().unwrap());
    let lang = ToyLanguage::new(200, 1, 0.0, 4, 10, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pairs = lang.pairs(2000, &[0], &mut rng);
    let held = lang.pairs(500, &[0], &mut rng);
    let corpus = Corpus { parallel: pairs, ..Default::default() };
    let vocab = SubwordVocab::train(&corpus.student_lines(), 1000).unwrap();
    println!("vocab {}", vocab.len());
    let enc = EncoderConfig { width, vocab_size: 0, max_len: 64, ..Default::default() };
    let student = Student::init(vocab, enc, 1).unwrap();
    let teacher = SyntheticTeacher::new(width, 5);
    let cfg = DistillConfig { steps, lr, mlm_weight: 0.0, seed: 3, ..Default::default() };
    let t0 = Instant::now();
    let (student, _) = train(student, &corpus, &teacher, &cfg, |m| {
        if m.step % 250 == 0 {
            println!("step {} cos {:.4} {:.1}s", m.step, m.cosine_loss, t0.elapsed().as_secs_f64());
        }
    })
    .unwrap();
    let src: Vec<&str> = held.iter().map(|(s, _)| s.as_str()).collect();
    let s = student.embed_texts(&src).unwrap();
    let trows: Vec<Vec<f32>> = held.iter().map(|(_, t)| teacher.embed(t).unwrap().iter().map(|&v| v as f32).collect()).collect();
    let t = EmbeddingMatrix::from_rows(width, &trows).unwrap();
    let mut cos = 0.0;
    for i in 0..held.len() {
        cos += bitext_core::cosine(s.row(i), t.row(i)).unwrap();
    }
    let rep = xsim_error_rate(&s, &t, &MarginConfig::default()).unwrap();
    println!("held-out cos {:.4} xsim {} time {:.1}s", cos / held.len() as f64, rep.summary(), t0.elapsed().as_secs_f64());
}
