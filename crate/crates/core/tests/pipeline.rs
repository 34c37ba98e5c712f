use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use speedgrid::domain::Trip;
use speedgrid::model::{predict_trip, ArchKind, Predictor};
use speedgrid::pipeline::{
    assemble_split, build_dictionary, check_dataset, run_experiment, sweep_csv, train_method, Method,
    PipelineConfig, PipelineError, SweepRow, MEAN_METHOD,
};
use speedgrid::synth::{generate, SynthOutput, WorldConfig};

fn world(seed: u64) -> SynthOutput {
    generate(&WorldConfig::new(seed)).unwrap()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn early_training_loss_mostly_decreases() {
    let out = world(3);
    let cfg = PipelineConfig {
        epochs: 6,
        ..PipelineConfig::new(3)
    };
    let (kmeans, dict) = build_dictionary(&out.dataset.reference, cfg.k, cfg.percent, cfg.agg, cfg.seed).unwrap();
    let train = assemble_split(&out.dataset.train, &kmeans, &dict, cfg.features).unwrap();
    let val = assemble_split(&out.dataset.val, &kmeans, &dict, cfg.features).unwrap();
    for method in Method::standard() {
        let t = train_method(&method, cfg.features, cfg.k, &train, &val, &cfg).unwrap();
        let losses: Vec<f64> = t.history.iter().map(|r| r.train_loss).collect();
        let down = losses.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(down >= 4, "{}: {losses:?}", method.name);
    }
}

#[test]
fn predicted_profiles_have_trip_length_and_track_the_oracle() {
    let out = world(4);
    let cfg = PipelineConfig {
        epochs: 20,
        ..PipelineConfig::new(4)
    };
    let data = &out.dataset;
    let (kmeans, dict) = build_dictionary(&data.reference, cfg.k, cfg.percent, cfg.agg, cfg.seed).unwrap();
    let train = assemble_split(&data.train, &kmeans, &dict, cfg.features).unwrap();
    let val = assemble_split(&data.val, &kmeans, &dict, cfg.features).unwrap();
    let method = Method::new("ROPPA_RNN", ArchKind::Rnn, true);
    let trained = train_method(&method, cfg.features, cfg.k, &train, &val, &cfg).unwrap();
    let predictor = Predictor::new(trained.checkpoint).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sample: Vec<&Trip> = data.test.trips.choose_multiple(&mut rng, 100).collect();
    assert_eq!(sample.len(), 100);
    for t in &sample {
        let pred = predict_trip(&predictor, &dict, &kmeans, t, &data.test.links, 9).unwrap();
        assert_eq!(pred.len(), t.len());
    }

    let single = Trip {
        points: data.test.trips[0].points[..1].to_vec(),
        ..data.test.trips[0].clone()
    };
    assert_eq!(predict_trip(&predictor, &dict, &kmeans, &single, &data.test.links, 9).unwrap().len(), 1);

    let mut predicted = Vec::new();
    let mut oracle = Vec::new();
    for t in &data.test.trips {
        predicted.extend(predict_trip(&predictor, &dict, &kmeans, t, &data.test.links, 9).unwrap());
        oracle.extend(&out.oracle[&t.trip_id]);
    }
    let r = pearson(&predicted, &oracle);
    assert!(r > 0.5, "pearson r = {r}");
}

#[test]
fn overlapping_splits_are_rejected() {
    let mut data = world(5).dataset;
    let leaked = data.reference.links.iter().next().unwrap().clone();
    data.test.links.insert(leaked.clone()).unwrap();
    match check_dataset(&data) {
        Err(e @ PipelineError::LinkOverlap { .. }) => {
            assert!(e.is_validation());
            assert!(e.to_string().contains(leaked.link_id.as_str()));
        }
        other => panic!("expected overlap error, got {other:?}"),
    }
    let cfg = PipelineConfig::new(5);
    assert!(matches!(
        run_experiment(&data, &cfg, &Method::standard()),
        Err(PipelineError::LinkOverlap { .. })
    ));
}

#[test]
fn report_lists_baseline_then_methods() {
    let cfg = WorldConfig {
        n_regions: 4,
        links_per_region: 80,
        trips_per_region: 60,
        ..WorldConfig::new(6)
    };
    let data = generate(&cfg).unwrap().dataset;
    let pcfg = PipelineConfig {
        k: 8,
        epochs: 2,
        ..PipelineConfig::new(6)
    };
    let exp = run_experiment(&data, &pcfg, &Method::standard()).unwrap();
    let names: Vec<&str> = exp.report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(names, [MEAN_METHOD, "MLP", "MLP_f", "ROPPA_RNN"]);
    assert_eq!(exp.trained.len(), 3);
    assert!(exp.trained.iter().all(|t| t.history.len() == 2));
    let again = run_experiment(&data, &pcfg, &Method::standard()).unwrap();
    assert_eq!(exp.report, again.report);
}

#[test]
fn sweep_csv_layout() {
    let rows = [SweepRow {
        k: 6,
        mse: 4.0,
        rmse: 2.0,
        mae: 1.5,
    }];
    assert_eq!(sweep_csv(&rows), "k,mse,rmse,mae\n6,4.000000,2.000000,1.500000\n");
}
