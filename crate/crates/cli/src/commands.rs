use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use bitext_core::knn::topk;
use bitext_core::mine::{mine, write_pairs, MineConfig};
use bitext_core::preprocess::{split_sentences, Pipeline, PreprocessConfig};
use bitext_core::{xsim_error_rate, EmbeddingMatrix, SentenceIndexMap};
use bitext_distill::{
    load_model, save_model, train, Corpus, CurriculumSchedule, DistillConfig, EncoderConfig, Student, SubwordVocab,
    SyntheticTeacher, TableTeacher, Teacher,
};

use crate::manifest::{self, ManifestBuilder};
use crate::{Cli, Command, EmbInput, EmbedArgs, IndexArgs, MineArgs, PreprocessArgs, TrainArgs, UsageError, XsimArgs};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Preprocess(a) => preprocess(cli, a),
        Command::Index(a) => index(cli, a),
        Command::Xsim(a) => xsim(cli, a),
        Command::Mine(a) => mine_cmd(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::EmbedToy(a) => embed(cli, a),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .collect::<io::Result<_>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_emb(path: &Path, dim: Option<usize>) -> Result<EmbeddingMatrix> {
    let m = match dim {
        Some(d) => EmbeddingMatrix::load_raw(path, d),
        None => EmbeddingMatrix::load_headered(path),
    };
    m.with_context(|| format!("loading {}", path.display()))
}

fn load_pair(emb: &EmbInput, m: &mut ManifestBuilder) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    m.input(&emb.src)?;
    m.input(&emb.tgt)?;
    let src = load_emb(&emb.src, emb.dim)?;
    let tgt = load_emb(&emb.tgt, emb.dim)?;
    src.check_same_dim(&tgt)?;
    Ok((src, tgt))
}

fn preprocess(cli: &Cli, a: &PreprocessArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("preprocess", cli.seed);
    m.input(&a.input)?;
    let cfg = PreprocessConfig {
        max_punct_num_ratio: a.max_ratio,
        allowed_scripts: a.scripts.clone(),
        min_chars: a.min_chars,
        dedup: !a.no_dedup,
    };
    let mut pipeline = Pipeline::new(cfg.clone())?;
    let mut out = create(&a.output)?;
    for line in read_lines(&a.input)? {
        let segments = if a.split { split_sentences(&line) } else { vec![line] };
        for s in segments {
            if let Some(kept) = pipeline.push(&s) {
                writeln!(out, "{kept}")?;
            }
        }
    }
    out.flush()?;
    let report = pipeline.finish();
    let json = serde_json::to_string_pretty(&report)?;
    match &a.report {
        Some(p) => fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None if !cli.quiet => eprintln!("{json}"),
        None => {}
    }
    #[derive(Serialize)]
    struct Config<'a> {
        #[serde(flatten)]
        filters: &'a PreprocessConfig,
        split: bool,
    }
    let manifest = m.finish(&Config { filters: &cfg, split: a.split })?;
    manifest::emit(&manifest, Some(&a.output), cli.quiet)
}

fn load_ids(path: Option<&Path>, count: usize, m: &mut ManifestBuilder) -> Result<SentenceIndexMap> {
    match path {
        Some(p) => {
            m.input(p)?;
            let ids = SentenceIndexMap::load(p).with_context(|| format!("loading {}", p.display()))?;
            if ids.len() != count {
                return Err(UsageError(format!("{} has {} ids for {count} rows", p.display(), ids.len())).into());
            }
            Ok(ids)
        }
        None => Ok(SentenceIndexMap::sequential(count)),
    }
}

fn index(cli: &Cli, a: &IndexArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("index", cli.seed);
    let (src, tgt) = load_pair(&a.emb, &mut m)?;
    let src_ids = load_ids(a.src_ids.as_deref(), src.count(), &mut m)?;
    let tgt_ids = load_ids(a.tgt_ids.as_deref(), tgt.count(), &mut m)?;
    let nn = topk(&src, &tgt, a.k)?;
    let mut w: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for q in 0..nn.len() {
        for (rank, (&t, &s)) in nn.indices(q).iter().zip(nn.scores(q)).enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{:.6}",
                src_ids.get(q).unwrap_or_default(),
                rank + 1,
                tgt_ids.get(t).unwrap_or_default(),
                s
            )?;
        }
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Config {
        k: usize,
        raw_dim: Option<usize>,
    }
    let manifest = m.finish(&Config { k: a.k, raw_dim: a.emb.dim })?;
    manifest::emit(&manifest, a.output.as_deref(), cli.quiet)
}

fn xsim(cli: &Cli, a: &XsimArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("xsim", cli.seed);
    let (src, tgt) = load_pair(&a.emb, &mut m)?;
    let cfg = a.margin.config();
    let report = xsim_error_rate(&src, &tgt, &cfg)?;
    println!("{}", report.summary());
    if let Some(p) = &a.report {
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    let manifest = m.finish(&cfg)?;
    manifest::emit(&manifest, a.report.as_deref(), cli.quiet)
}

fn mine_cmd(cli: &Cli, a: &MineArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("mine", cli.seed);
    let (src, tgt) = load_pair(&a.emb, &mut m)?;
    m.input(&a.src_text)?;
    m.input(&a.tgt_text)?;
    let src_text = read_lines(&a.src_text)?;
    let tgt_text = read_lines(&a.tgt_text)?;
    for (text, emb, path) in [(&src_text, &src, &a.src_text), (&tgt_text, &tgt, &a.tgt_text)] {
        if text.len() != emb.count() {
            return Err(UsageError(format!(
                "{} has {} lines for {} embeddings",
                path.display(),
                text.len(),
                emb.count()
            ))
            .into());
        }
    }
    let mut cfg = MineConfig::new(a.margin.config());
    cfg.direction = a.direction;
    cfg.candidates_per_query = a.candidates;
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    let outcome = mine(&src, &tgt, &cfg)?;
    let mut w = create(&a.output)?;
    write_pairs(&outcome.pairs, &src_text, &tgt_text, &mut w)?;
    w.flush()?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        config: &'a MineConfig,
        forward_count: Option<usize>,
        backward_count: Option<usize>,
        union_count: Option<usize>,
        written: usize,
    }
    let sidecar = Sidecar {
        config: &cfg,
        forward_count: outcome.forward_count,
        backward_count: outcome.backward_count,
        union_count: outcome.union_count,
        written: outcome.pairs.len(),
    };
    let mut side_path = a.output.as_os_str().to_owned();
    side_path.push(".json");
    fs::write(&side_path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    if !cli.quiet {
        eprintln!("mined {} pairs", outcome.pairs.len());
    }
    let manifest = m.finish(&cfg)?;
    manifest::emit(&manifest, Some(&a.output), cli.quiet)
}

fn load_teacher(spec: &str, width: usize, seed: u64, m: &mut ManifestBuilder) -> Result<Box<dyn Teacher>> {
    if spec == "synthetic" {
        return Ok(Box::new(SyntheticTeacher::new(width, seed)));
    }
    let (emb, ids) = spec
        .split_once('+')
        .ok_or_else(|| UsageError(format!("--teacher must be EMB+SENTENCES or synthetic, got {spec:?}")))?;
    m.input(Path::new(emb))?;
    m.input(Path::new(ids))?;
    Ok(Box::new(TableTeacher::load(emb, ids)?))
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("train", cli.seed);
    m.input(&a.parallel)?;
    let mut corpus = Corpus::default();
    for (n, line) in read_lines(&a.parallel)?.into_iter().enumerate() {
        let (s, t) = line
            .split_once('\t')
            .ok_or_else(|| bitext_core::Error::Parse {
                line: n + 1,
                reason: "expected student<TAB>teacher".into(),
            })?;
        corpus.parallel.push((s.to_string(), t.to_string()));
    }
    if let Some(p) = &a.mono {
        m.input(p)?;
        corpus.mono = read_lines(p)?;
    }
    if let Some(p) = &a.anchor {
        m.input(p)?;
        corpus.anchor = read_lines(p)?;
    }
    let teacher = load_teacher(&a.teacher, a.width, cli.seed, &mut m)?;
    let curriculum = a.curriculum.map(CurriculumSchedule::uniform).transpose()?;
    let cfg = DistillConfig {
        lr: a.lr,
        batch_size: a.batch_size,
        mlm_weight: a.mlm_weight,
        mask_prob: a.mask_prob,
        curriculum,
        steps: a.steps,
        seed: cli.seed,
    };
    cfg.validate()?;
    let enc = EncoderConfig {
        layers: a.layers,
        width: a.width,
        heads: a.heads,
        ffn_mult: a.ffn_mult,
        vocab_size: a.vocab_size,
        max_len: a.max_len,
    };
    enc.validate()?;
    let vocab = SubwordVocab::train(&corpus.student_lines(), a.vocab_size)?;
    let student = Student::init(vocab, enc, cli.seed)?;

    let mut metrics: Box<dyn Write> = match &a.metrics {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut write_err = None;
    let (student, _) = train(student, &corpus, teacher.as_ref(), &cfg, |step| {
        if write_err.is_none() {
            let line = serde_json::to_string(step).expect("metrics serialize");
            if let Err(e) = writeln!(metrics, "{line}") {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context("writing metrics");
    }
    metrics.flush()?;
    save_model(&student, &a.output).with_context(|| format!("writing {}", a.output.display()))?;

    #[derive(Serialize)]
    struct Config<'a> {
        encoder: EncoderConfig,
        distill: &'a DistillConfig,
        teacher: &'a str,
        vocab_pieces: usize,
    }
    let manifest = m.finish(&Config {
        encoder: *student.encoder.config(),
        distill: &cfg,
        teacher: &a.teacher,
        vocab_pieces: student.vocab.len(),
    })?;
    manifest::emit(&manifest, Some(&a.output), cli.quiet)
}

fn embed(cli: &Cli, a: &EmbedArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("embed-toy", cli.seed);
    m.input(&a.model)?;
    m.input(&a.input)?;
    let student = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let lines = read_lines(&a.input)?;
    let mut emb = student.embed_texts(&lines)?;
    if a.normalize {
        emb = emb.l2_normalize()?;
    }
    emb.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    #[derive(Serialize)]
    struct Config {
        normalize: bool,
        count: usize,
        dim: usize,
    }
    let manifest = m.finish(&Config {
        normalize: a.normalize,
        count: emb.count(),
        dim: emb.dim(),
    })?;
    manifest::emit(&manifest, Some(&a.output), cli.quiet)
}
