//! Experiment harness: algorithms × datasets × repeated runs, accuracy and
//! distribution statistics, and the report files.
//!
//! Run `r` of algorithm `a` on dataset `d` uses
//!
//! * split seed `mix_seed([base, d, SPLIT_STREAM, r])`, shared by all
//!   algorithms so that each run compares them on the same split;
//! * training seed `mix_seed([base, d, a, r])`, with `a` the position of the
//!   algorithm in [`Algorithm::ALL`].
//!
//! Every run draws a fresh stratified 0.8/0.2 split. Runs are independent and
//! may execute in any order; [`BenchmarkReport::assemble`] sorts them before
//! any aggregate is computed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{Curve, ErrorCurve, LossCurve};
use crate::datagen::SUITE_BENIGN_COUNTS;
use crate::error::{Error, Result};
use crate::features::{build_vocab, encode, load_corpus, split, Corpus, EncodedDataset, SplitSpec};
use crate::model::{fit, Algorithm, AlgorithmConfig, Classifier};
use crate::tensor::mix_seed;

pub const SPLIT_STREAM: u64 = 0x5350_4c54;
pub const TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_REPETITIONS: usize = 10;

/// An encoded labeled corpus and its display id, e.g. `500/1000`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    pub data: EncodedDataset,
}

impl Dataset {
    pub fn from_corpus(id: impl Into<String>, corpus: &Corpus) -> Result<Self> {
        if !corpus.is_labeled() {
            return Err(Error::InvalidInput("benchmark corpora must be labeled".into()));
        }
        let vocab = build_vocab(corpus)?;
        Ok(Self {
            id: id.into(),
            data: encode(corpus, &vocab)?,
        })
    }
}

/// Loads `corpus_<m>_<b>.json` for every benign count of the standard sweep.
/// The malicious count `m` is taken from the files present and must be shared.
pub fn load_suite(dir: &Path) -> Result<Vec<Dataset>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found: BTreeMap<usize, Vec<(usize, PathBuf)>> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_prefix("corpus_").and_then(|n| n.strip_suffix(".json")) else {
            continue;
        };
        let Some((m, b)) = stem.split_once('_') else {
            continue;
        };
        if let (Ok(m), Ok(b)) = (m.parse::<usize>(), b.parse::<usize>()) {
            found.entry(m).or_default().push((b, path));
        }
    }
    if found.len() > 1 {
        return Err(Error::InvalidInput(format!(
            "{} mixes malicious counts {:?}",
            dir.display(),
            found.keys().collect::<Vec<_>>()
        )));
    }
    let Some((m, files)) = found.into_iter().next() else {
        return Err(Error::MissingInput(format!("no corpus_<m>_<b>.json files in {}", dir.display())));
    };
    let mut out = Vec::with_capacity(SUITE_BENIGN_COUNTS.len());
    for b in SUITE_BENIGN_COUNTS {
        let Some((_, path)) = files.iter().find(|(fb, _)| *fb == b) else {
            return Err(Error::MissingInput(format!(
                "{} lacks corpus_{m}_{b}.json",
                dir.display()
            )));
        };
        out.push(Dataset::from_corpus(format!("{m}/{b}"), &load_corpus(path)?)?);
    }
    Ok(out)
}

/// Malicious is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(preds: &[u8], truth: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in preds.iter().zip(truth) {
            match (p, t) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Fraction of positions where `preds` and `truth` agree.
pub fn accuracy(preds: &[u8], truth: &[u8]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::dims(
            "accuracy",
            format!("{} predictions for {} labels", preds.len(), truth.len()),
        ));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty set".into()));
    }
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub dataset: String,
    pub dataset_index: usize,
    pub run: usize,
    pub split_seed: u64,
    pub train_seed: u64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub test_ids: Vec<String>,
    pub predictions: Vec<u8>,
    pub truth: Vec<u8>,
    /// One curve per RBM layer (DBN only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pretrain_error: Vec<ErrorCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finetune_loss: Option<LossCurve>,
    /// Kept out of `report.json` so that reruns are byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub algorithm: Algorithm,
    pub dataset: String,
    pub dataset_index: usize,
    pub run: usize,
    pub error: String,
}

/// Split, fit and score one run. Only the DBN's curves are attached.
pub fn run_experiment(
    dataset: &Dataset,
    algorithm: Algorithm,
    split_seed: u64,
    train_seed: u64,
    cfg: &AlgorithmConfig,
) -> Result<RunResult> {
    let start = Instant::now();
    let spec = SplitSpec {
        train_fraction: TRAIN_FRACTION,
        seed: split_seed,
        stratified: true,
    };
    let (train, test) = split(&dataset.data, &spec)?;
    let fitted = fit(algorithm, &train.x, train.labels()?, &cfg.with_seed(train_seed))?;
    let predictions = fitted.model.predict(&test.x)?;
    let truth = test.labels()?.to_vec();
    let acc = accuracy(&predictions, &truth)?;
    let is_dbn = algorithm == Algorithm::Dbn;
    Ok(RunResult {
        algorithm,
        dataset: dataset.id.clone(),
        dataset_index: 0,
        run: 0,
        split_seed,
        train_seed,
        accuracy: acc,
        confusion: Confusion::from_labels(&predictions, &truth),
        test_ids: test.sample_ids,
        predictions,
        truth,
        pretrain_error: if is_dbn { fitted.pretrain_curves } else { Vec::new() },
        finetune_loss: if is_dbn { fitted.finetune_curve } else { None },
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn split_seed(base: u64, dataset: usize, run: usize) -> u64 {
    mix_seed(&[base, dataset as u64, SPLIT_STREAM, run as u64])
}

pub fn train_seed(base: u64, dataset: usize, algorithm: Algorithm, run: usize) -> u64 {
    mix_seed(&[base, dataset as u64, algorithm.index() as u64, run as u64])
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub repetitions: usize,
    pub base_seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    pub config: AlgorithmConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repetitions: DEFAULT_REPETITIONS,
            base_seed: 0,
            jobs: 0,
            config: AlgorithmConfig::default(),
        }
    }
}

/// Outcome of one run, handed to the progress callback as runs finish.
pub enum RunEvent<'a> {
    Done(&'a RunResult),
    Failed(&'a RunFailure),
}

pub fn run_benchmark(
    datasets: &[Dataset],
    algorithms: &[Algorithm],
    opts: &BenchOptions,
    progress: &(dyn Fn(RunEvent<'_>) + Sync),
) -> Result<BenchmarkReport> {
    if datasets.is_empty() || algorithms.is_empty() || opts.repetitions == 0 {
        return Err(Error::InvalidInput(
            "benchmark needs datasets, algorithms and at least one repetition".into(),
        ));
    }
    let mut tasks = Vec::new();
    for d in 0..datasets.len() {
        for &a in algorithms {
            for r in 0..opts.repetitions {
                tasks.push((d, a, r));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let outcomes: Vec<std::result::Result<RunResult, RunFailure>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(d, a, r)| {
                let ss = split_seed(opts.base_seed, d, r);
                let ts = train_seed(opts.base_seed, d, a, r);
                let out = match run_experiment(&datasets[d], a, ss, ts, &opts.config) {
                    Ok(res) => Ok(RunResult {
                        dataset_index: d,
                        run: r,
                        ..res
                    }),
                    Err(e) => Err(RunFailure {
                        algorithm: a,
                        dataset: datasets[d].id.clone(),
                        dataset_index: d,
                        run: r,
                        error: e.to_string(),
                    }),
                };
                match &out {
                    Ok(res) => progress(RunEvent::Done(res)),
                    Err(f) => progress(RunEvent::Failed(f)),
                }
                out
            })
            .collect()
    });
    let (mut runs, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(BenchmarkReport::assemble(
        algorithms.to_vec(),
        datasets.iter().map(|d| d.id.clone()).collect(),
        opts.repetitions,
        opts.base_seed,
        runs,
        failures,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile `p` of sorted `v` by linear interpolation at position `(n − 1)·p`.
fn quantile(v: &[f64], p: f64) -> f64 {
    let pos = (v.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn distribution_stats(values: &[f64]) -> Result<FiveNumber> {
    if values.is_empty() {
        return Err(Error::InvalidInput("distribution of an empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("distribution_stats"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(FiveNumber {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub algorithm: Algorithm,
    pub dataset: String,
    pub runs: usize,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub distribution: FiveNumber,
}

/// `mean over datasets of (dbn cell mean − algorithm cell mean)`, over the
/// datasets where both cells have runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbnDelta {
    pub algorithm: Algorithm,
    pub datasets: usize,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub algorithms: Vec<Algorithm>,
    pub datasets: Vec<String>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
    pub cell_means: Vec<CellMean>,
    pub distributions: Vec<AlgorithmSummary>,
    pub dbn_deltas: Vec<DbnDelta>,
    /// Pointwise mean of the first-layer pre-training curve over DBN runs.
    pub mean_pretrain_error: Curve,
    /// Pointwise mean of the fine-tuning loss over DBN runs.
    pub mean_finetune_loss: Curve,
}

fn sort_key(algorithms: &[Algorithm], a: Algorithm, d: usize, r: usize) -> (usize, usize, usize) {
    let ai = algorithms.iter().position(|&x| x == a).unwrap_or(usize::MAX);
    (d, ai, r)
}

impl BenchmarkReport {
    /// Builds every aggregate from raw results. The input order is irrelevant.
    pub fn assemble(
        algorithms: Vec<Algorithm>,
        datasets: Vec<String>,
        repetitions: usize,
        base_seed: u64,
        mut runs: Vec<RunResult>,
        mut failures: Vec<RunFailure>,
    ) -> Self {
        runs.sort_by_key(|r| sort_key(&algorithms, r.algorithm, r.dataset_index, r.run));
        failures.sort_by_key(|f| sort_key(&algorithms, f.algorithm, f.dataset_index, f.run));

        let mut cell_means = Vec::new();
        for (d, id) in datasets.iter().enumerate() {
            for &a in &algorithms {
                let acc: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.dataset_index == d && r.algorithm == a)
                    .map(|r| r.accuracy)
                    .collect();
                if !acc.is_empty() {
                    cell_means.push(CellMean {
                        algorithm: a,
                        dataset: id.clone(),
                        runs: acc.len(),
                        mean_accuracy: acc.iter().sum::<f64>() / acc.len() as f64,
                    });
                }
            }
        }

        let distributions = algorithms
            .iter()
            .filter_map(|&a| {
                let acc: Vec<f64> = runs.iter().filter(|r| r.algorithm == a).map(|r| r.accuracy).collect();
                let distribution = distribution_stats(&acc).ok()?;
                Some(AlgorithmSummary { algorithm: a, runs: acc.len(), distribution })
            })
            .collect();

        let cell = |a: Algorithm, id: &str| {
            cell_means
                .iter()
                .find(|c| c.algorithm == a && c.dataset == id)
                .map(|c| c.mean_accuracy)
        };
        let mut dbn_deltas = Vec::new();
        if algorithms.contains(&Algorithm::Dbn) {
            for &a in algorithms.iter().filter(|&&a| a != Algorithm::Dbn) {
                let diffs: Vec<f64> = datasets
                    .iter()
                    .filter_map(|id| Some(cell(Algorithm::Dbn, id)? - cell(a, id)?))
                    .collect();
                if !diffs.is_empty() {
                    dbn_deltas.push(DbnDelta {
                        algorithm: a,
                        datasets: diffs.len(),
                        mean_delta: diffs.iter().sum::<f64>() / diffs.len() as f64,
                    });
                }
            }
        }

        let dbn_runs = || runs.iter().filter(|r| r.algorithm == Algorithm::Dbn);
        let mean_pretrain_error = Curve::pointwise_mean(dbn_runs().filter_map(|r| r.pretrain_error.first()));
        let mean_finetune_loss = Curve::pointwise_mean(dbn_runs().filter_map(|r| r.finetune_loss.as_ref()));

        Self {
            algorithms,
            datasets,
            repetitions,
            base_seed,
            runs,
            failures,
            cell_means,
            distributions,
            dbn_deltas,
            mean_pretrain_error,
            mean_finetune_loss,
        }
    }

    /// A report with no algorithms, datasets or runs.
    pub fn empty() -> Self {
        Self::assemble(Vec::new(), Vec::new(), 0, 0, Vec::new(), Vec::new())
    }

    /// Re-derives the aggregates from `runs` and `failures`.
    pub fn recomputed(&self) -> Self {
        Self::assemble(
            self.algorithms.clone(),
            self.datasets.clone(),
            self.repetitions,
            self.base_seed,
            self.runs.clone(),
            self.failures.clone(),
        )
    }

    pub fn cell_mean(&self, algorithm: Algorithm, dataset: &str) -> Option<f64> {
        self.cell_means
            .iter()
            .find(|c| c.algorithm == algorithm && c.dataset == dataset)
            .map(|c| c.mean_accuracy)
    }

    /// Mean-accuracy table as text: one row per dataset, one column per algorithm.
    pub fn table(&self) -> String {
        let mut s = format!("{:<10}", "ratio");
        for a in &self.algorithms {
            let _ = write!(s, " {:>18}", a.name());
        }
        s.push('\n');
        for id in &self.datasets {
            let _ = write!(s, "{id:<10}");
            for &a in &self.algorithms {
                match self.cell_mean(a, id) {
                    Some(m) => {
                        let _ = write!(s, " {m:>18.4}");
                    }
                    None => {
                        let _ = write!(s, " {:>18}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn accuracy_by_ratio_csv(&self) -> String {
        let mut s = String::from("ratio");
        for a in &self.algorithms {
            let _ = write!(s, ",{a}");
        }
        s.push('\n');
        for id in &self.datasets {
            s.push_str(id);
            for &a in &self.algorithms {
                s.push(',');
                if let Some(m) = self.cell_mean(a, id) {
                    let _ = write!(s, "{m}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn accuracy_distribution_csv(&self) -> String {
        let mut s = String::from("algorithm,runs,min,q1,median,q3,max\n");
        for d in &self.distributions {
            let f = &d.distribution;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                d.algorithm, d.runs, f.min, f.q1, f.median, f.q3, f.max
            );
        }
        s
    }
}

fn curve_csv(c: &Curve) -> String {
    let mut s = String::from("epoch,value\n");
    for p in &c.points {
        let _ = writeln!(s, "{},{}", p.epoch, p.value);
    }
    s
}

pub const REPORT_FILES: [&str; 5] = [
    "accuracy_by_ratio.csv",
    "accuracy_distribution.csv",
    "pretrain_error.csv",
    "finetune_loss.csv",
    "report.json",
];

/// Writes the [`REPORT_FILES`] into `out_dir`, creating it if needed.
pub fn emit_report(report: &BenchmarkReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let contents = [
        report.accuracy_by_ratio_csv(),
        report.accuracy_distribution_csv(),
        curve_csv(&report.mean_pretrain_error),
        curve_csv(&report.mean_finetune_loss),
        report.to_json(),
    ];
    let mut paths = Vec::with_capacity(REPORT_FILES.len());
    for (name, body) in REPORT_FILES.iter().zip(contents) {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
