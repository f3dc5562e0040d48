use std::fmt;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use maldbn::bench::{emit_report, load_suite, run_benchmark, BenchOptions, BenchmarkReport, Confusion, RunEvent};
use maldbn::datagen::{generate, generate_suite, write_generated, GenSpec};
use maldbn::features::{build_vocab, encode, load_corpus, Corpus, EncodedDataset, FeatureVocabulary};
use maldbn::model::{fit, Algorithm, AlgorithmConfig, Classifier, ModelFile};
use maldbn::Curve;
use serde::Serialize;

use crate::{BenchArgs, Command, EncodeArgs, EvalArgs, GenArgs, Profile, ReportArgs, TrainArgs};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn code(&self) -> u8 {
        self.code
    }

    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub const USAGE: u8 = 1;
pub const UNKNOWN_ALGORITHM: u8 = 2;
pub const INCOMPATIBLE: u8 = 3;
pub const MISSING: u8 = 4;

impl From<maldbn::Error> for CliError {
    fn from(e: maldbn::Error) -> Self {
        use maldbn::Error as E;
        let code = match &e {
            E::DimensionMismatch { .. }
            | E::Incompatible(_)
            | E::UnknownZone { .. }
            | E::MalformedRecord { .. }
            | E::DuplicateId(_)
            | E::Json { .. } => INCOMPATIBLE,
            E::MissingInput(_) => MISSING,
            E::Io { source, .. } if source.kind() == ErrorKind::NotFound => MISSING,
            _ => USAGE,
        };
        Self::new(code, e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| maldbn::Error::Io { path: path.into(), source: e })?;
    serde_json::from_str(&text).map_err(|e| CliError::new(USAGE, format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| maldbn::Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| CliError::new(USAGE, format!("{}: {e}", path.display())))
}

fn parse_algorithm(name: &str) -> Result<Algorithm> {
    name.parse().map_err(|_| {
        CliError::new(
            UNKNOWN_ALGORITHM,
            format!("unknown algorithm `{name}`; supported: {}", Algorithm::supported()),
        )
    })
}

fn algorithm_config(profile: Profile, file: Option<&Path>) -> Result<AlgorithmConfig> {
    let base = match profile {
        Profile::Default => AlgorithmConfig::default(),
        Profile::Quick => AlgorithmConfig::quick(),
    };
    match file {
        Some(path) => Ok(base.merged(&read_json(path)?)?),
        None => Ok(base),
    }
}

fn labeled(corpus: Corpus, path: &Path) -> Result<Corpus> {
    if corpus.samples.is_empty() {
        return Err(CliError::new(INCOMPATIBLE, format!("{} holds no samples", path.display())));
    }
    if !corpus.is_labeled() {
        return Err(CliError::new(INCOMPATIBLE, format!("{} is not fully labeled", path.display())));
    }
    Ok(corpus)
}

fn gen(a: GenArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => serde_json::from_value::<GenSpec>(read_json(path)?)
            .map_err(|e| CliError::new(USAGE, format!("{}: {e}", path.display())))?,
        None => GenSpec::default(),
    };
    macro_rules! overlay {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { spec.$field = v; } )* };
    }
    overlay!(n_malicious, n_benign, n_features, n_zones, rule_arity, zone_conditioned, label_noise, seed);
    if a.rule_seed.is_some() {
        spec.rule_seed = a.rule_seed;
    }
    let generated = if a.suite {
        generate_suite(&spec)?
    } else {
        vec![generate(&spec)?]
    };
    for (corpus, truth) in &generated {
        let (c, t) = write_generated(&a.out, corpus, truth)?;
        println!("{}\t{}", c.display(), t.display());
    }
    Ok(())
}

fn encode_cmd(a: EncodeArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let vocab = match &a.model {
        Some(m) => ModelFile::load(m)?.vocabulary,
        None => build_vocab(&corpus)?,
    };
    let ds = encode(&corpus, &vocab)?;
    let mut text = serde_json::to_string(&ds).expect("dataset serializes");
    text.push('\n');
    write_text(&a.out, &text)?;
    println!("{}\t{} samples\t{} columns", a.out.display(), ds.len(), ds.x.cols());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    algorithm: Algorithm,
    samples: usize,
    columns: usize,
    train_accuracy: f64,
}

fn curves_csv(curves: &[Curve]) -> String {
    let mut s = String::from("layer,epoch,value\n");
    for (l, c) in curves.iter().enumerate() {
        for p in &c.points {
            s.push_str(&format!("{},{},{}\n", l + 1, p.epoch, p.value));
        }
    }
    s
}

fn train(a: TrainArgs) -> Result<()> {
    let algorithm = parse_algorithm(&a.algo)?;
    let mut cfg = algorithm_config(a.profile, a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg = cfg.with_seed(seed);
    }
    let corpus = labeled(load_corpus(&a.corpus)?, &a.corpus)?;
    let vocab = build_vocab(&corpus)?;
    let ds = encode(&corpus, &vocab)?;
    let y = ds.labels()?;
    eprintln!("training {algorithm} on {} samples x {} columns", ds.len(), ds.x.cols());
    let fitted = fit(algorithm, &ds.x, y, &cfg)?;
    let preds = fitted.model.predict(&ds.x)?;
    let train_accuracy = maldbn::bench::accuracy(&preds, y)?;
    let file = ModelFile { vocabulary: vocab, model: fitted.model };
    write_text(&a.model_out, &file.to_json())?;

    if algorithm == Algorithm::Dbn {
        let dir = a
            .curves_out
            .clone()
            .or_else(|| a.model_out.parent().map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from("."));
        write_text(&dir.join("pretrain_error.csv"), &curves_csv(&fitted.pretrain_curves))?;
        if let Some(loss) = &fitted.finetune_curve {
            write_text(&dir.join("finetune_loss.csv"), &curves_csv(std::slice::from_ref(loss)))?;
        }
    }
    let summary = TrainSummary {
        algorithm,
        samples: ds.len(),
        columns: ds.x.cols(),
        train_accuracy,
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

#[derive(Serialize)]
struct Metrics {
    algorithm: Algorithm,
    samples: usize,
    accuracy: f64,
    tp: usize,
    fp: usize,
    tn: usize,
    #[serde(rename = "fn")]
    fn_: usize,
}

fn encode_for(vocab: &FeatureVocabulary, corpus: &Corpus) -> Result<EncodedDataset> {
    encode(corpus, vocab).map_err(|e| match e {
        maldbn::Error::UnknownZone { .. } => CliError::new(INCOMPATIBLE, format!("{e}; the model was trained without it")),
        other => other.into(),
    })
}

fn eval(a: EvalArgs) -> Result<()> {
    let file = ModelFile::load(&a.model)?;
    let corpus = labeled(load_corpus(&a.corpus)?, &a.corpus)?;
    let ds = encode_for(&file.vocabulary, &corpus)?;
    let preds = file.model.predict(&ds.x)?;
    let y = ds.labels()?;
    let c = Confusion::from_labels(&preds, y);
    let metrics = Metrics {
        algorithm: file.model.algorithm(),
        samples: ds.len(),
        accuracy: maldbn::bench::accuracy(&preds, y)?,
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
    };
    let text = serde_json::to_string(&metrics).expect("metrics serialize");
    println!("{text}");
    if let Some(path) = &a.metrics_out {
        write_text(path, &format!("{text}\n"))?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let algorithms = match &a.algos {
        Some(names) => names.iter().map(|n| parse_algorithm(n)).collect::<Result<Vec<_>>>()?,
        None => Algorithm::ALL.to_vec(),
    };
    let config = algorithm_config(a.profile, a.config.as_deref())?;
    if !a.suite.is_dir() {
        return Err(CliError::new(MISSING, format!("suite directory {} does not exist", a.suite.display())));
    }
    let datasets = load_suite(&a.suite)?;
    let opts = BenchOptions {
        repetitions: a.reps,
        base_seed: a.seed,
        jobs: a.jobs,
        config,
    };
    let total = datasets.len() * algorithms.len() * a.reps;
    eprintln!("{total} runs over {} datasets", datasets.len());
    let progress = |e: RunEvent<'_>| match e {
        RunEvent::Done(r) => eprintln!(
            "{} {} run {}: accuracy {:.4} ({:.1}s)",
            r.dataset, r.algorithm, r.run, r.accuracy, r.wall_seconds
        ),
        RunEvent::Failed(f) => eprintln!("{} {} run {}: FAILED {}", f.dataset, f.algorithm, f.run, f.error),
    };
    let report = run_benchmark(&datasets, &algorithms, &opts, &progress)?;
    emit_report(&report, &a.out)?;
    if !report.failures.is_empty() {
        eprintln!("{} of {total} runs failed; see report.json", report.failures.len());
    }
    print!("{}", report.table());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.report).map_err(|e| maldbn::Error::Io { path: a.report.clone(), source: e })?;
    let saved: BenchmarkReport = serde_json::from_str(&text)
        .map_err(|e| CliError::new(INCOMPATIBLE, format!("{}: {e}", a.report.display())))?;
    let rebuilt = saved.recomputed();
    if rebuilt != saved {
        return Err(CliError::new(
            INCOMPATIBLE,
            format!("{}: aggregates do not match the raw runs", a.report.display()),
        ));
    }
    emit_report(&rebuilt, &a.out)?;
    print!("{}", rebuilt.table());
    Ok(())
}
