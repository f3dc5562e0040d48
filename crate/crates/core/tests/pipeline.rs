use maldbn::bench::{emit_report, load_suite, run_benchmark, run_experiment, BenchOptions, Dataset, RunResult};
use maldbn::datagen::{generate, generate_suite, write_generated, GenSpec};
use maldbn::dbn::{greedy_pretrain, FineTuneConfig};
use maldbn::features::{build_vocab, decode, encode, load_corpus, split, SplitSpec};
use maldbn::model::{fit, Algorithm, AlgorithmConfig, Classifier};
use maldbn::rbm::CdConfig;
use maldbn::{Matrix, SeededRng};

fn tiny_config() -> AlgorithmConfig {
    let mut cfg = AlgorithmConfig::quick();
    cfg.dbn.hidden_layers = vec![16];
    cfg.dbn.pretrain.epochs = 2;
    cfg.dbn.fine_tune.epochs = 5;
    cfg.random_forest.n_trees = 5;
    cfg.softmax_regression.epochs = 5;
    cfg.svm.epochs = 3;
    cfg
}

fn small_dataset(seed: u64) -> Dataset {
    let spec = GenSpec { n_malicious: 40, n_benign: 60, n_features: 16, seed, ..GenSpec::default() };
    let (corpus, _) = generate(&spec).unwrap();
    Dataset::from_corpus("40/60", &corpus).unwrap()
}

#[test]
fn generated_corpus_survives_disk_and_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GenSpec { n_malicious: 30, n_benign: 50, n_features: 24, seed: 4, ..GenSpec::default() };
    let (corpus, truth) = generate(&spec).unwrap();
    let (path, _) = write_generated(dir.path(), &corpus, &truth).unwrap();
    assert_eq!(path.file_name().unwrap(), "corpus_30_50.json");
    let back = load_corpus(&path).unwrap();
    assert_eq!(back, corpus);
    let ds = encode(&back, &build_vocab(&back).unwrap()).unwrap();
    assert_eq!(decode(&ds).unwrap(), corpus.samples);
    for s in &back.samples {
        assert_eq!(truth.replay(s), s.label);
    }
}

#[test]
fn regenerating_writes_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GenSpec { n_malicious: 10, n_benign: 20, seed: 9, ..GenSpec::default() };
    let (a, ta) = generate(&spec).unwrap();
    let (p1, t1) = write_generated(&dir.path().join("a"), &a, &ta).unwrap();
    let (b, tb) = generate(&spec).unwrap();
    let (p2, t2) = write_generated(&dir.path().join("b"), &b, &tb).unwrap();
    assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    assert_eq!(std::fs::read(t1).unwrap(), std::fs::read(t2).unwrap());
}

#[test]
fn suite_directory_loads_in_ratio_order() {
    let dir = tempfile::tempdir().unwrap();
    let base = GenSpec { n_malicious: 4, n_features: 8, ..GenSpec::default() };
    for (c, t) in generate_suite(&base).unwrap() {
        write_generated(dir.path(), &c, &t).unwrap();
    }
    let suite = load_suite(dir.path()).unwrap();
    let ids: Vec<&str> = suite.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids[0], "4/500");
    assert_eq!(ids[9], "4/5000");
    std::fs::remove_file(dir.path().join("corpus_4_3000.json")).unwrap();
    let err = load_suite(dir.path()).unwrap_err().to_string();
    assert!(err.contains("corpus_4_3000.json"), "{err}");
}

#[test]
fn experiment_is_deterministic_and_self_consistent() {
    let ds = small_dataset(1);
    let cfg = tiny_config();
    for a in Algorithm::ALL {
        let strip = |r: RunResult| RunResult { wall_seconds: 0.0, ..r };
        let r1 = strip(run_experiment(&ds, a, 11, 12, &cfg).unwrap());
        let r2 = strip(run_experiment(&ds, a, 11, 12, &cfg).unwrap());
        assert_eq!(r1, r2, "{a}");
        // 20% of 100 rows
        assert_eq!(r1.confusion.total(), 20);
        assert_eq!(r1.truth.len(), 20);
        let hits = r1.predictions.iter().zip(&r1.truth).filter(|(p, t)| p == t).count();
        assert_eq!(r1.accuracy, hits as f64 / 20.0);
        assert_eq!(r1.pretrain_error.is_empty(), a != Algorithm::Dbn);
        assert_eq!(r1.finetune_loss.is_some(), a == Algorithm::Dbn);
    }
}

#[test]
fn single_run_benchmark_and_order_free_assembly() {
    let ds = vec![small_dataset(2)];
    let opts = BenchOptions { repetitions: 1, base_seed: 3, jobs: 1, config: tiny_config() };
    let one = run_benchmark(&ds, &[Algorithm::Svm], &opts, &|_| {}).unwrap();
    assert_eq!(one.runs.len(), 1);
    assert_eq!(one.cell_means[0].mean_accuracy, one.runs[0].accuracy);
    assert!(one.dbn_deltas.is_empty());

    let opts = BenchOptions { repetitions: 3, jobs: 3, ..opts };
    let many = run_benchmark(&ds, &Algorithm::ALL, &opts, &|_| {}).unwrap();
    assert_eq!(many.runs.len(), 15);
    assert_eq!(many.recomputed(), many);
    for cell in &many.cell_means {
        let acc: Vec<f64> = many
            .runs
            .iter()
            .filter(|r| r.algorithm == cell.algorithm && r.dataset == cell.dataset)
            .map(|r| r.accuracy)
            .collect();
        assert_eq!(cell.mean_accuracy, acc.iter().sum::<f64>() / acc.len() as f64);
    }
    let serial = run_benchmark(&ds, &Algorithm::ALL, &BenchOptions { jobs: 1, ..opts }, &|_| {}).unwrap();
    assert_eq!(serial.to_json(), many.to_json());
}

#[test]
fn emitted_csv_cells_match_report_means() {
    let ds = vec![small_dataset(5), small_dataset(6)];
    let opts = BenchOptions { repetitions: 2, base_seed: 1, jobs: 1, config: tiny_config() };
    let report = run_benchmark(&ds, &[Algorithm::Dbn, Algorithm::DecisionTree], &opts, &|_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("accuracy_by_ratio.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "ratio,dbn,decision_tree");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[1].parse::<f64>().unwrap(), report.cell_mean(Algorithm::Dbn, row[0]).unwrap());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["runs"].as_array().unwrap().len(), 8);
    let pre = std::fs::read_to_string(dir.path().join("pretrain_error.csv")).unwrap();
    assert_eq!(pre.lines().count(), 1 + 2);

    let again = tempfile::tempdir().unwrap();
    emit_report(&report, again.path()).unwrap();
    for f in maldbn::bench::REPORT_FILES {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap()
        );
    }
}

#[test]
fn repeated_pattern_pretraining_error_halves() {
    let mut rng = SeededRng::new(1);
    let pattern: Vec<f64> = (0..16).map(|_| rng.below(2) as f64).collect();
    let data = Matrix::new(64, 16, pattern.repeat(64)).unwrap();
    let pre = greedy_pretrain(&[512], &data, &CdConfig::default()).unwrap();
    let c = &pre.curves[0];
    assert_eq!(c.len(), 200);
    assert!(c.last().unwrap() < 0.5 * c.first().unwrap());
}

#[test]
fn dbn_fits_parity_that_softmax_regression_cannot() {
    let mut rng = SeededRng::new(2);
    let x = Matrix::new(200, 4, (0..800).map(|_| rng.below(2) as f64).collect()).unwrap();
    let y: Vec<u8> = x.iter_rows().map(|r| (r[0] as u8) ^ (r[1] as u8)).collect();
    let mut cfg = AlgorithmConfig::default();
    cfg.dbn.hidden_layers = vec![8];
    cfg.dbn.pretrain = CdConfig::default();
    cfg.dbn.fine_tune = FineTuneConfig { epochs: 500, ..FineTuneConfig::default() };
    let dbn = fit(Algorithm::Dbn, &x, &y, &cfg).unwrap();
    let acc = |p: Vec<u8>| p.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 200.0;
    assert!(acc(dbn.model.predict(&x).unwrap()) >= 0.95);
    let loss = dbn.finetune_curve.unwrap();
    assert!(loss.last().unwrap() < 0.5 * loss.first().unwrap());
    let soft = fit(Algorithm::SoftmaxRegression, &x, &y, &cfg).unwrap();
    assert!(acc(soft.model.predict(&x).unwrap()) <= 0.6);
}

#[test]
fn split_then_fit_uses_only_training_rows() {
    let ds = small_dataset(7);
    let (train, test) = split(&ds.data, &SplitSpec { seed: 3, ..SplitSpec::default() }).unwrap();
    assert_eq!((train.len(), test.len()), (80, 20));
    let fitted = fit(Algorithm::DecisionTree, &train.x, train.labels().unwrap(), &tiny_config()).unwrap();
    let p = fitted.model.predict(&train.x).unwrap();
    assert_eq!(p, train.labels().unwrap());
}
