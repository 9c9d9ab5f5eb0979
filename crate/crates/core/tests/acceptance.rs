//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `cargo test --test acceptance -- --nocapture` to see
//! them as they complete).
//!
//! The end-to-end pipeline (synthetic corpus, trained predictor) is built
//! once and shared; wall-clock-sensitive criteria serialize on a mutex so
//! they never time each other's work.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use archpred::archspace::{sample, ArchitectureSpec, SearchSpaceConfig, INPUT_SHAPE};
use archpred::encoding::ENCODING_DIM;
use archpred::evolve::{self, EvolutionConfig, MutationKind};
use archpred::metrics::{kendall_tau, mse, r_squared, MetricsError, PairedSeries};
use archpred::nn::Network;
use archpred::predictor::{
    build_training_samples, predict, predict_batch, train, PredictorConfig, PredictorModel,
    TrainingConfig,
};
use archpred::rng::SplitMix64;
use archpred::store::{
    generate_synthetic_corpus, DatasetMeta, DatasetRegistry, ExperimentRecord, ExperimentStore,
    FilterConfig,
};

const EPOCH_TS: &str = "1970-01-01T00:00:00Z";
const CORPUS_SEED: u64 = 7;
const TRAIN_SEED: u64 = 4;

fn timed_section() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

struct Pipeline {
    registry: DatasetRegistry,
    train_records: Vec<ExperimentRecord>,
    holdout_records: Vec<ExperimentRecord>,
    model: PredictorModel,
    corpus_seconds: f64,
    train_seconds: f64,
}

fn corpus_registry() -> DatasetRegistry {
    let datasets = [0.1, 0.3, 0.5, 0.7, 0.9]
        .iter()
        .enumerate()
        .map(|(i, &dcn)| DatasetMeta {
            id: format!("d{i}"),
            name: format!("synthetic-{dcn}"),
            dcn,
            num_classes: 10,
        })
        .collect();
    DatasetRegistry::new(datasets).expect("registry is well-formed")
}

fn pipeline() -> &'static Pipeline {
    static PIPELINE: OnceLock<Pipeline> = OnceLock::new();
    PIPELINE.get_or_init(|| {
        let registry = corpus_registry();

        let corpus_start = Instant::now();
        let mut records = generate_synthetic_corpus(
            registry.datasets(),
            200,
            &SearchSpaceConfig::default(),
            CORPUS_SEED,
            EPOCH_TS,
        )
        .expect("corpus generation succeeds");
        let corpus_seconds = corpus_start.elapsed().as_secs_f64();
        assert_eq!(records.len(), 1000);

        // Held-out 20% split, stratified per dataset (40 of each 200) so
        // every difficulty level is equally represented in the evaluation.
        let mut order: Vec<usize> = (0..200).collect();
        SplitMix64::derived(CORPUS_SEED, 100).shuffle(&mut order);
        let holdout_set: std::collections::HashSet<usize> =
            order[..40].iter().copied().collect();
        let mut train_records = Vec::with_capacity(800);
        let mut holdout_records = Vec::with_capacity(200);
        for (i, record) in records.drain(..).enumerate() {
            if holdout_set.contains(&(i % 200)) {
                holdout_records.push(record);
            } else {
                train_records.push(record);
            }
        }

        let train_start = Instant::now();
        let samples =
            build_training_samples(&train_records, &registry).expect("records are valid");
        let tcfg = TrainingConfig {
            seed: TRAIN_SEED,
            validation_fraction: 0.0,
            ..TrainingConfig::default()
        };
        let model =
            train(&samples, &tcfg, &PredictorConfig::default()).expect("training succeeds");
        let train_seconds = train_start.elapsed().as_secs_f64();

        Pipeline {
            registry,
            train_records,
            holdout_records,
            model,
            corpus_seconds,
            train_seconds,
        }
    })
}

/// Criterion 1: analytic gradients of the full-size model (2-step
/// sequence, stacked LSTM 50/100, scalar concat, sigmoid head, squared
/// error) match central finite differences at relative error < 1e-4 over
/// 100 random configurations, in under a minute.
#[test]
fn acceptance_1_gradient_correctness() {
    let _guard = timed_section();
    let start = Instant::now();
    let mut rng = SplitMix64::new(314159);
    let step = 1e-5;
    // Finite differences over the full 73k-parameter model cost two
    // forward passes per coordinate, so each configuration checks a
    // deterministic random subset of coordinates; the analytic side is
    // always the complete gradient.
    let coords_per_config = 48;
    let mut worst_rel: f64 = 0.0;

    for config in 0..100 {
        let mut net = Network::he_normal(ENCODING_DIM, 50, 100, &mut rng);
        let sequence: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..ENCODING_DIM).map(|_| rng.next_gaussian()).collect())
            .collect();
        let scalar = rng.next_f64();
        let target = rng.next_f64();

        let (y, cache) = net.forward(&sequence, scalar).unwrap();
        let analytic = net.backward(&cache, 2.0 * (y - target)).unwrap().flatten();

        let mut flat = net.flatten();
        let total = flat.len();
        for _ in 0..coords_per_config {
            let i = rng.next_below(total as u64) as usize;
            let saved = flat[i];
            flat[i] = saved + step;
            net.assign_flat(&flat).unwrap();
            let (y_plus, _) = net.forward(&sequence, scalar).unwrap();
            flat[i] = saved - step;
            net.assign_flat(&flat).unwrap();
            let (y_minus, _) = net.forward(&sequence, scalar).unwrap();
            flat[i] = saved;
            net.assign_flat(&flat).unwrap();

            let loss_plus = (y_plus - target) * (y_plus - target);
            let loss_minus = (y_minus - target) * (y_minus - target);
            let numeric = (loss_plus - loss_minus) / (2.0 * step);
            // Floor absorbs the oracle's own rounding noise on near-zero
            // coordinates.
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic[i] - numeric).abs() / denom;
            worst_rel = worst_rel.max(rel);
            assert!(
                rel < 1e-4,
                "config {config} param {i}: analytic {} vs numeric {numeric}",
                analytic[i]
            );
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_rel < 1e-4 && elapsed < 60.0;
    println!(
        "ACCEPTANCE 1 gradient-correctness: {} (worst relative error {:.3e}, {:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        worst_rel,
        elapsed
    );
    assert!(pass, "worst rel {worst_rel}, elapsed {elapsed}s");
}

/// Criterion 2: the full synthetic pipeline (5 datasets x 200 networks,
/// seed 7, 50 epochs) reaches MSE <= 0.005, Kendall tau >= 0.7 and
/// R-squared >= 0.8 on a held-out 20% split, within 10 minutes.
#[test]
fn acceptance_2_end_to_end_pipeline() {
    let _guard = timed_section();
    let p = pipeline();

    let eval_start = Instant::now();
    let mut predictions = Vec::with_capacity(p.holdout_records.len());
    let mut truths = Vec::with_capacity(p.holdout_records.len());
    for record in &p.holdout_records {
        let dataset = p.registry.get(&record.dataset_id).unwrap();
        predictions.push(
            predict(&record.architecture, dataset.dcn, dataset.num_classes, &p.model).unwrap(),
        );
        truths.push(record.final_accuracy());
    }
    let series = PairedSeries::new(predictions, truths).unwrap();
    let mse_value = mse(&series);
    let tau_value = kendall_tau(&series).unwrap();
    let r2_value = r_squared(&series).unwrap();

    // In-sample error cannot exceed the held-out error.
    let mut train_predictions = Vec::with_capacity(p.train_records.len());
    let mut train_truths = Vec::with_capacity(p.train_records.len());
    for record in &p.train_records {
        let dataset = p.registry.get(&record.dataset_id).unwrap();
        train_predictions.push(
            predict(&record.architecture, dataset.dcn, dataset.num_classes, &p.model).unwrap(),
        );
        train_truths.push(record.final_accuracy());
    }
    let train_mse = mse(&PairedSeries::new(train_predictions, train_truths).unwrap());
    assert!(
        train_mse <= mse_value,
        "training-record mse {train_mse} exceeds held-out mse {mse_value}"
    );

    let total_seconds = p.corpus_seconds + p.train_seconds + eval_start.elapsed().as_secs_f64();

    let pass = mse_value <= 0.005 && tau_value >= 0.7 && r2_value >= 0.8 && total_seconds <= 600.0;
    println!(
        "ACCEPTANCE 2 end-to-end-pipeline: {} (holdout mse {:.5}, tau {:.3}, r2 {:.3}, {:.0}s total)",
        if pass { "PASS" } else { "FAIL" },
        mse_value,
        tau_value,
        r2_value,
        total_seconds
    );
    assert!(
        pass,
        "mse {mse_value}, tau {tau_value}, r2 {r2_value}, {total_seconds}s \
         (train loss {}, val loss {:?})",
        p.model.meta.final_train_loss, p.model.meta.final_val_loss
    );
}

/// Criterion 3: difficulty filtering is set-equal to a brute-force scan
/// for 1000 random (query, tau) cases including tau = 0.05.
#[test]
fn acceptance_3_filter_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let metas: Vec<DatasetMeta> = (0..40)
        .map(|i| DatasetMeta {
            id: format!("f{i}"),
            name: format!("filter-{i}"),
            dcn: (i as f64 * 0.9871) % 1.0,
            num_classes: 10,
        })
        .collect();
    let registry = DatasetRegistry::new(metas.clone()).unwrap();
    let records = generate_synthetic_corpus(
        &metas,
        3,
        &SearchSpaceConfig::default(),
        99,
        EPOCH_TS,
    )
    .unwrap();
    let path = dir.path().join("store.ndjson");
    let mut store = ExperimentStore::create(&path, registry).unwrap();
    for r in records {
        store.append(r).unwrap();
    }

    let mut rng = SplitMix64::new(2025);
    let mut checked = 0;
    for case in 0..1000 {
        let query = rng.next_f64();
        let tau = if case % 4 == 0 { 0.05 } else { rng.next_f64() * 0.3 };
        let got: Vec<*const ExperimentRecord> = store
            .filter_by_dcn(query, &FilterConfig { tau })
            .into_iter()
            .map(|r| r as *const _)
            .collect();
        // Brute-force scan applying the selection rule per record.
        let want: Vec<*const ExperimentRecord> = store
            .records()
            .iter()
            .filter(|r| {
                let dcn = store.registry().get(&r.dataset_id).unwrap().dcn;
                (query - dcn).abs() <= tau
            })
            .map(|r| r as *const _)
            .collect();
        assert_eq!(got, want, "case {case}: query {query}, tau {tau}");
        checked += 1;
    }
    println!("ACCEPTANCE 3 filter-equivalence: PASS ({checked} cases, exact)");
}

/// Criterion 4: batch prediction sustains at least 100 networks/second on
/// one core over 1000 sampled architectures.
#[test]
fn acceptance_4_prediction_throughput() {
    let p = pipeline();
    let _guard = timed_section();
    let space = SearchSpaceConfig::default();
    let archs: Vec<ArchitectureSpec> = (0..1000)
        .map(|seed| sample(&space, 10, seed).unwrap())
        .collect();
    let report = predict_batch(&archs, 0.5, 10, &p.model);
    assert!(report.results.iter().all(|r| r.is_ok()));
    let pass = report.networks_per_second >= 100.0;
    println!(
        "ACCEPTANCE 4 prediction-throughput: {} ({:.0} networks/second)",
        if pass { "PASS" } else { "FAIL" },
        report.networks_per_second
    );
    assert!(pass, "{} networks/second", report.networks_per_second);
}

/// Criterion 5: 20000 tournament steps over a population of 1000 finish
/// within 400 seconds, keep the population size invariant, produce a
/// non-decreasing best-so-far history, and are bit-reproducible.
#[test]
fn acceptance_5_evolution_run() {
    let p = pipeline();
    let _guard = timed_section();
    let cfg = EvolutionConfig {
        population_size: 1000,
        steps: 20_000,
        seed: 42,
        ..EvolutionConfig::default()
    };
    let space = SearchSpaceConfig::default();

    let start = Instant::now();
    let outcome = evolve::run(&cfg, &space, 10, &p.model, 0.5).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    assert_eq!(outcome.population.len(), 1000, "population size invariant");
    assert_eq!(outcome.history.len(), 20_000);
    for (i, pair) in outcome.history.windows(2).enumerate() {
        assert!(pair[1] >= pair[0], "history decreased at step {}", i + 1);
    }
    for individual in &outcome.population.individuals {
        assert!(archpred::archspace::validate(&individual.arch, INPUT_SHAPE).is_ok());
    }

    let again = evolve::run(&cfg, &space, 10, &p.model, 0.5).unwrap();
    assert_eq!(outcome.best.id, again.best.id);
    assert_eq!(outcome.best.predicted_accuracy, again.best.predicted_accuracy);
    assert_eq!(outcome.history, again.history);

    let pass = elapsed <= 400.0;
    println!(
        "ACCEPTANCE 5 evolution-run: {} ({:.0}s for 20000 steps, best {:.4}, bit-reproducible)",
        if pass { "PASS" } else { "FAIL" },
        elapsed,
        outcome.best.predicted_accuracy
    );
    assert!(pass, "evolution took {elapsed}s");
}

/// Criterion 6: metric implementations match brute-force references to
/// 1e-12 relative on 100 random series and reproduce the hand cases.
#[test]
fn acceptance_6_metric_oracles() {
    // Hand cases.
    let s = PairedSeries::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 3.0, 2.0, 4.0]).unwrap();
    let tau = kendall_tau(&s).unwrap();
    assert!((tau - 2.0 / 3.0).abs() < 1e-12);
    let s = PairedSeries::new(vec![2.0, 2.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
    assert_eq!(r_squared(&s).unwrap(), 0.0);

    let mut rng = SplitMix64::new(5150);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let n = 2 + rng.next_below(80) as usize;
        let quantize = checked % 2 == 0;
        let draw = |rng: &mut SplitMix64| {
            let v = rng.next_f64();
            if quantize { (v * 10.0).floor() / 10.0 } else { v }
        };
        let p: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let t: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let series = PairedSeries::new(p.clone(), t.clone()).unwrap();

        // Brute-force references: direct sums and full pair enumeration.
        let mut ss = 0.0;
        for i in 0..n {
            ss += (p[i] - t[i]) * (p[i] - t[i]);
        }
        let want_mse = ss / n as f64;
        let got_mse = mse(&series);
        let rel = (got_mse - want_mse).abs() / want_mse.abs().max(1e-300);
        worst = worst.max(rel);
        assert!(rel <= 1e-12);

        let mean = t.iter().sum::<f64>() / n as f64;
        let ss_tot: f64 = t.iter().map(|v| (v - mean) * (v - mean)).sum();
        if ss_tot > 0.0 {
            let want_r2 = 1.0 - ss / ss_tot;
            let got_r2 = r_squared(&series).unwrap();
            let rel = (got_r2 - want_r2).abs() / want_r2.abs().max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-12);
        }

        let mut concordant = 0i64;
        let mut discordant = 0i64;
        let mut ties_p = 0i64;
        let mut ties_t = 0i64;
        for a in 0..n {
            for b in (a + 1)..n {
                let dp = p[a] - p[b];
                let dt = t[a] - t[b];
                if dp == 0.0 {
                    ties_p += 1;
                }
                if dt == 0.0 {
                    ties_t += 1;
                }
                if dp != 0.0 && dt != 0.0 {
                    if (dp > 0.0) == (dt > 0.0) {
                        concordant += 1;
                    } else {
                        discordant += 1;
                    }
                }
            }
        }
        let n0 = (n * (n - 1) / 2) as i64;
        let denom = ((n0 - ties_p) as f64 * (n0 - ties_t) as f64).sqrt();
        match kendall_tau(&series) {
            Ok(got_tau) => {
                let want_tau = (concordant - discordant) as f64 / denom;
                let rel = (got_tau - want_tau).abs() / want_tau.abs().max(1.0);
                worst = worst.max(rel);
                assert!(rel <= 1e-12, "tau {got_tau} vs {want_tau}");
            }
            Err(MetricsError::DegenerateInput(_)) => {
                assert_eq!(denom, 0.0);
            }
            Err(e) => panic!("{e}"),
        }
        checked += 1;
    }
    println!(
        "ACCEPTANCE 6 metric-oracles: PASS ({checked} series, worst relative error {worst:.3e})"
    );
}

/// Criterion 7: store and model files survive write-reload-rewrite
/// byte-identically, and loading rejects a corpus of corrupted files.
#[test]
fn acceptance_7_persistence_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let registry = corpus_registry();

    // Store: write, reload, rewrite, byte-compare.
    let records = generate_synthetic_corpus(
        registry.datasets(),
        5,
        &SearchSpaceConfig::default(),
        3,
        EPOCH_TS,
    )
    .unwrap();
    let store_a = dir.path().join("a.ndjson");
    let mut store = ExperimentStore::create(&store_a, registry.clone()).unwrap();
    for r in &records {
        store.append(r.clone()).unwrap();
    }
    let reloaded = ExperimentStore::open(&store_a, registry.clone()).unwrap();
    let store_b = dir.path().join("b.ndjson");
    let mut rewrite = ExperimentStore::create(&store_b, registry.clone()).unwrap();
    for r in reloaded.records() {
        rewrite.append(r.clone()).unwrap();
    }
    let bytes_a = std::fs::read(&store_a).unwrap();
    let bytes_b = std::fs::read(&store_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "store rewrite is byte-identical");

    // Model: save, load, save, byte-compare.
    let samples = build_training_samples(&records, &registry).unwrap();
    let tcfg = TrainingConfig {
        epochs: 2,
        seed: 17,
        ..TrainingConfig::default()
    };
    let model = train(&samples, &tcfg, &PredictorConfig::default()).unwrap();
    let model_a = dir.path().join("a.model.json");
    let model_b = dir.path().join("b.model.json");
    model.save(&model_a).unwrap();
    let loaded = PredictorModel::load(&model_a).unwrap();
    loaded.save(&model_b).unwrap();
    assert_eq!(
        std::fs::read(&model_a).unwrap(),
        std::fs::read(&model_b).unwrap(),
        "model rewrite is byte-identical"
    );

    // Ten deliberately corrupted files, each rejected on load.
    let model_json = model.to_json();
    let mut rejected = 0;
    let corrupt_model = |mutate: &dyn Fn(&mut serde_json::Value)| -> String {
        let mut value: serde_json::Value = serde_json::from_str(&model_json).unwrap();
        mutate(&mut value);
        serde_json::to_string(&value).unwrap()
    };
    let model_corruptions: Vec<String> = vec![
        // 1. Truncated document.
        model_json[..model_json.len() / 2].to_string(),
        // 2. Wrong schema version.
        corrupt_model(&|v| v["v"] = serde_json::json!(2)),
        // 3. Standardizer means too short.
        corrupt_model(&|v| {
            let means = v["standardizer"]["means"].as_array_mut().unwrap();
            means.pop();
        }),
        // 4. Negative standard deviation.
        corrupt_model(&|v| v["standardizer"]["stds"][0] = serde_json::json!(-1.0)),
        // 5. First LSTM missing a row of its input-gate weights.
        corrupt_model(&|v| {
            let rows = v["lstm1"]["w"][0].as_array_mut().unwrap();
            rows.pop();
        }),
        // 6. Ragged recurrent matrix in the second LSTM.
        corrupt_model(&|v| {
            let row = v["lstm2"]["u"][1][3].as_array_mut().unwrap();
            row.pop();
        }),
        // 7. Dense head one weight short.
        corrupt_model(&|v| {
            let weights = v["dense"]["weights"].as_array_mut().unwrap();
            weights.pop();
        }),
        // 8. Config contradicts the stored matrices.
        corrupt_model(&|v| v["config"]["lstm2_hidden"] = serde_json::json!(64)),
    ];
    for (i, text) in model_corruptions.iter().enumerate() {
        assert!(
            PredictorModel::from_json(text).is_err(),
            "model corruption {} must be rejected",
            i + 1
        );
        rejected += 1;
    }

    // 9. Store record with an accuracy outside [0, 1].
    let store_c = dir.path().join("c.ndjson");
    let line = std::fs::read_to_string(&store_a)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let mut value: serde_json::Value = serde_json::from_str(&line).unwrap();
    value["prefix_accuracies"][0] = serde_json::json!(1.5);
    std::fs::write(&store_c, serde_json::to_string(&value).unwrap() + "\n").unwrap();
    assert!(ExperimentStore::open(&store_c, registry.clone()).is_err());
    rejected += 1;

    // 10. Store record referencing an unregistered dataset.
    let store_d = dir.path().join("d.ndjson");
    let mut value: serde_json::Value = serde_json::from_str(&line).unwrap();
    value["dataset_id"] = serde_json::json!("not-registered");
    std::fs::write(&store_d, serde_json::to_string(&value).unwrap() + "\n").unwrap();
    assert!(ExperimentStore::open(&store_d, registry).is_err());
    rejected += 1;

    println!("ACCEPTANCE 7 persistence-round-trips: PASS ({rejected} corrupted files rejected)");
}

/// Criterion 8: 10000 sampled architectures and 10000 random mutations all
/// validate against the 32x32x3 input.
#[test]
fn acceptance_8_validity_sweep() {
    let space = SearchSpaceConfig::default();
    for seed in 0..10_000u64 {
        let arch = sample(&space, 10, seed).unwrap();
        assert!(
            archpred::archspace::validate(&arch, INPUT_SHAPE).is_ok(),
            "sample seed {seed}"
        );
    }
    let mut rng = SplitMix64::new(616);
    for case in 0..10_000 {
        let arch = sample(&space, 10, rng.next_u64()).unwrap();
        let kind = MutationKind::ALL[rng.next_below(MutationKind::ALL.len() as u64) as usize];
        let mutant = evolve::mutate(&arch, kind, &mut rng, &space);
        assert!(
            archpred::archspace::validate(&mutant, INPUT_SHAPE).is_ok(),
            "mutation case {case} ({kind:?})"
        );
    }
    println!("ACCEPTANCE 8 validity-sweep: PASS (10000 samples + 10000 mutations)");
}
