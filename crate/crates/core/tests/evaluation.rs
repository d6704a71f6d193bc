use gesture_core::dataset::loocv_splits_by_subject;
use gesture_core::evaluation::*;
use gesture_core::features::{FeatureKind, SequenceFeatures};
use gesture_core::network::Standardizer;
use gesture_core::synth::{builtin_scripts, generate_dataset, SynthOptions};
use proptest::prelude::*;

fn tiny_pipeline(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.architecture.lstm_hidden = 4;
    c.architecture.fc_out = 4;
    c.architecture.head_hidden = vec![8];
    c.train.epochs = 2;
    c.train.batch = 8;
    c.train.seed = seed;
    c
}

fn small_features() -> Vec<SequenceFeatures> {
    let seqs = generate_dataset(&builtin_scripts()[..3], 4, 2, 5, &SynthOptions::default()).unwrap();
    extract_features(&seqs, &tiny_pipeline(0).extractor).unwrap()
}

#[test]
fn four_subjects_give_four_disjoint_splits() {
    let feats = small_features();
    let report = run_loocv_features(&feats, &tiny_pipeline(1)).unwrap();
    assert_eq!(report.splits.len(), 4);
    for (k, s) in report.splits.iter().enumerate() {
        assert_eq!(s.held_out_subject, k as u32 + 1);
        assert_eq!(s.test_size, 6);
        assert_eq!(s.train_size, 18);
        assert_eq!(s.epochs.len(), 2);
    }
    assert_eq!(report.confusion.total(), feats.len() as u64);
    assert!(report.both.worst <= report.both.avg && report.both.avg <= report.both.best);
    assert!(report.larfd.is_none());
}

#[test]
fn same_seed_same_report() {
    let feats = small_features();
    let a = run_loocv_features(&feats, &tiny_pipeline(7)).unwrap();
    let b = run_loocv_features(&feats, &tiny_pipeline(7)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert_eq!(a.splits_csv(), b.splits_csv());
    assert_eq!(a.confusion_csv(), b.confusion_csv());
}

#[test]
fn twenty_eight_class_report_has_larfd() {
    let feats = small_features();
    let mut cfg = tiny_pipeline(2);
    cfg.scheme = ClassScheme::Gestures28;
    let report = run_loocv_features(&feats, &cfg).unwrap();
    assert_eq!(report.confusion.classes(), 28);
    let l = report.larfd.unwrap();
    assert!(l >= 0.0);
    assert!(report.summary_csv().contains(",larfd,"));
}

#[test]
fn normalization_uses_training_subjects_only() {
    let feats = small_features();
    let subjects: Vec<u32> = feats.iter().map(|f| f.meta.subject).collect();
    let split = &loocv_splits_by_subject(&subjects).unwrap()[2];
    let train: Vec<&SequenceFeatures> = split.train.iter().map(|&i| &feats[i]).collect();
    let trained = train_model(&train, &tiny_pipeline(3), 3).unwrap();
    let norm = trained.model.normalization();
    for (k, kind) in FeatureKind::ALL.iter().enumerate() {
        let expected = if *kind == FeatureKind::Skeleton {
            None
        } else {
            Standardizer::fit(train.iter().map(|f| f.stream(*kind)))
        };
        assert_eq!(norm[k], expected, "{kind}");
    }
    let everyone = Standardizer::fit(feats.iter().map(|f| f.stream(FeatureKind::Global)));
    assert_ne!(norm[0], everyone);
}

#[test]
fn report_files_written() {
    let feats = small_features();
    let report = run_loocv_features(&feats, &tiny_pipeline(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write_to(dir.path()).unwrap();
    for f in ["summary.txt", "summary.csv", "splits.csv", "confusion.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let confusion = std::fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
    for (r, line) in confusion.lines().skip(1).enumerate() {
        let sum: u64 = line.split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).sum();
        assert_eq!(sum, report.confusion.row_sum(r));
    }
}

fn predictions(classes: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(move |n| {
        (
            proptest::collection::vec(0..classes, n),
            proptest::collection::vec(0..classes, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn confusion_trace_over_total_is_accuracy((p, l) in predictions(14)) {
        let m = ConfusionMatrix::from_predictions(14, &p, &l).unwrap();
        let cats = GestureCategoryMap::default();
        let acc = accuracy(&p, &l, ClassScheme::Gestures14, &cats, Category::Both).unwrap();
        prop_assert_eq!(m.accuracy().unwrap(), acc);
        prop_assert_eq!(m.total(), p.len() as u64);
        for c in 0..14 {
            prop_assert_eq!(m.row_sum(c), l.iter().filter(|&&x| x == c).count() as u64);
        }
    }

    #[test]
    fn both_is_the_weighted_mean_of_fine_and_coarse((p, l) in predictions(14)) {
        let cats = GestureCategoryMap::default();
        let s = ClassScheme::Gestures14;
        let n_fine = l.iter().filter(|&&c| cats.is_fine(s.gesture_of(c))).count();
        let n_coarse = l.len() - n_fine;
        let both = accuracy(&p, &l, s, &cats, Category::Both).unwrap();
        let fine = accuracy(&p, &l, s, &cats, Category::Fine).ok();
        let coarse = accuracy(&p, &l, s, &cats, Category::Coarse).ok();
        let weighted = (fine.unwrap_or(0.0) * n_fine as f64 + coarse.unwrap_or(0.0) * n_coarse as f64) / l.len() as f64;
        prop_assert!((both - weighted).abs() < 1e-12);
        let lo = fine.unwrap_or(both).min(coarse.unwrap_or(both));
        let hi = fine.unwrap_or(both).max(coarse.unwrap_or(both));
        prop_assert!(lo - 1e-12 <= both && both <= hi + 1e-12);
    }

    #[test]
    fn larfd_is_never_negative((p, l) in predictions(28)) {
        let to28 = |v: &Vec<usize>| v.iter().map(|&c| c as u32 + 1).collect::<Vec<_>>();
        let value = larfd(&to28(&p), &to28(&l)).unwrap();
        prop_assert!((0.0..=1.0).contains(&value));
    }

    #[test]
    fn aggregate_ordering(values in proptest::collection::vec(0.0..1.0f64, 1..25)) {
        let a = aggregate_splits(&values).unwrap();
        prop_assert!(a.worst <= a.avg && a.avg <= a.best);
        prop_assert!(a.std >= 0.0);
    }
}
