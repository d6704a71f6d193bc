//! Leave-one-subject-out evaluation and recognition metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{load_sequence, loocv_splits_by_subject, DatasetError, DatasetIndex, LoocvSplit};
use crate::features::{Extractor, FeatureError, FeatureKind, SequenceFeatures};
use crate::network::{
    train, BranchConfig, EpochLog, NetworkConfig, NetworkError, NetworkModel, Standardizer,
    TrainConfig, TrainSample,
};
use crate::seed::derive_seed;
use crate::skeleton::{GestureLabel, SequenceMeta, SkeletonSequence};

pub const GESTURE_NAMES: [&str; 14] = [
    "Grab",
    "Tap",
    "Expand",
    "Pinch",
    "Rotation CW",
    "Rotation CCW",
    "Swipe Right",
    "Swipe Left",
    "Swipe Up",
    "Swipe Down",
    "Swipe X",
    "Swipe V",
    "Swipe +",
    "Shake",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples belong to the {0} category")]
    EmptyFilter(Category),
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("label {label} outside 1..={max}")]
    OutOfRange { label: u32, max: u32 },
    #[error("class {class} outside 0..{classes}")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("at least one split is required")]
    NoSplits,
    #[error("invalid category map: {0}")]
    InvalidCategories(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("subject {subject} gesture {gesture} finger {finger} trial {trial}: {source}")]
    Feature {
        subject: u32,
        gesture: u32,
        finger: u32,
        trial: u32,
        source: FeatureError,
    },
    #[error("subject {subject} gesture {gesture} finger {finger} trial {trial}: {message}")]
    Label {
        subject: u32,
        gesture: u32,
        finger: u32,
        trial: u32,
        message: String,
    },
    #[error("split holding out subject {subject}: {source}")]
    Split { subject: u32, source: NetworkError },
    #[error("split holding out subject {subject} has no training data")]
    EmptyTrainSplit { subject: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Fine,
    Coarse,
    Both,
}

impl Category {
    pub const ALL: [Category; 3] = [Self::Fine, Self::Coarse, Self::Both];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fine => "fine",
            Self::Coarse => "coarse",
            Self::Both => "both",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Partition of gestures 1..=14 into fine and coarse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureCategoryMap {
    fine: BTreeSet<u32>,
}

impl Default for GestureCategoryMap {
    /// Grab, Expand, Pinch, Rotation CW, Rotation CCW.
    fn default() -> Self {
        Self {
            fine: [1, 3, 4, 5, 6].into_iter().collect(),
        }
    }
}

impl GestureCategoryMap {
    pub fn new(fine: impl IntoIterator<Item = u32>) -> Result<Self, EvalError> {
        let fine: BTreeSet<u32> = fine.into_iter().collect();
        if let Some(&g) = fine.iter().find(|g| !(1..=14).contains(*g)) {
            return Err(EvalError::InvalidCategories(format!("gesture {g} not in 1..=14")));
        }
        Ok(Self { fine })
    }

    pub fn fine(&self) -> &BTreeSet<u32> {
        &self.fine
    }

    pub fn is_fine(&self, gesture: u32) -> bool {
        self.fine.contains(&gesture)
    }

    pub fn matches(&self, gesture: u32, filter: Category) -> bool {
        match filter {
            Category::Both => true,
            Category::Fine => self.is_fine(gesture),
            Category::Coarse => !self.is_fine(gesture),
        }
    }
}

/// 14 gesture classes or 28 gesture × finger-configuration classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassScheme {
    Gestures14,
    Gestures28,
}

impl ClassScheme {
    pub fn from_count(classes: usize) -> Option<Self> {
        match classes {
            14 => Some(Self::Gestures14),
            28 => Some(Self::Gestures28),
            _ => None,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Self::Gestures14 => 14,
            Self::Gestures28 => 28,
        }
    }

    /// Zero-based class id of a sequence.
    pub fn class_of(&self, meta: &SequenceMeta) -> Result<usize, EvalError> {
        let label_err = |message: String| EvalError::Label {
            subject: meta.subject,
            gesture: meta.gesture,
            finger: meta.finger,
            trial: meta.trial,
            message,
        };
        let g = u8::try_from(meta.gesture).map_err(|_| label_err(format!("gesture {} not in 1..=14", meta.gesture)))?;
        match self {
            Self::Gestures14 => {
                if !(1..=14).contains(&g) {
                    return Err(label_err(format!("gesture {g} not in 1..=14")));
                }
                Ok(g as usize - 1)
            }
            Self::Gestures28 => {
                let f = u8::try_from(meta.finger).unwrap_or(0);
                let label = GestureLabel::new(g, f).map_err(|e| label_err(e.to_string()))?;
                Ok(label.gesture_28() as usize - 1)
            }
        }
    }

    /// Gesture id (1..=14) of a zero-based class id.
    pub fn gesture_of(&self, class: usize) -> u32 {
        match self {
            Self::Gestures14 => class as u32 + 1,
            Self::Gestures28 => class as u32 / 2 + 1,
        }
    }

    pub fn class_name(&self, class: usize) -> String {
        let gesture = GESTURE_NAMES[self.gesture_of(class) as usize - 1];
        match self {
            Self::Gestures14 => gesture.to_string(),
            Self::Gestures28 => format!("{gesture} ({})", if class % 2 == 0 { "one finger" } else { "whole hand" }),
        }
    }
}

/// Fraction of correct predictions among samples whose true gesture is in
/// `filter`. Predictions and labels are zero-based class ids.
pub fn accuracy(
    predictions: &[usize],
    labels: &[usize],
    scheme: ClassScheme,
    categories: &GestureCategoryMap,
    filter: Category,
) -> Result<f64, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        if l >= scheme.classes() {
            return Err(EvalError::ClassOutOfRange {
                class: l,
                classes: scheme.classes(),
            });
        }
        if categories.matches(scheme.gesture_of(l), filter) {
            total += 1;
            hits += usize::from(p == l);
        }
    }
    if total == 0 {
        return Err(EvalError::EmptyFilter(filter));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub best: f64,
    pub worst: f64,
    pub avg: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn aggregate_splits(values: &[f64]) -> Result<Aggregate, EvalError> {
    if values.is_empty() {
        return Err(EvalError::NoSplits);
    }
    let n = values.len() as f64;
    let avg = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / n;
    Ok(Aggregate {
        best: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        worst: values.iter().copied().fold(f64::INFINITY, f64::min),
        avg: avg.clamp(
            values.iter().copied().fold(f64::INFINITY, f64::min),
            values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        std: var.sqrt(),
    })
}

pub fn collapse_28_to_14(label_28: u32) -> Result<u32, EvalError> {
    if !(1..=28).contains(&label_28) {
        return Err(EvalError::OutOfRange { label: label_28, max: 28 });
    }
    Ok(label_28.div_ceil(2))
}

/// Accuracy after collapsing predictions and labels (1..=28) to 14 gestures,
/// minus the 28-class accuracy.
pub fn larfd(predictions_28: &[u32], labels_28: &[u32]) -> Result<f64, EvalError> {
    if predictions_28.len() != labels_28.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions_28.len(),
            labels: labels_28.len(),
        });
    }
    if labels_28.is_empty() {
        return Err(EvalError::EmptyFilter(Category::Both));
    }
    let (mut raw, mut collapsed) = (0usize, 0usize);
    for (&p, &l) in predictions_28.iter().zip(labels_28) {
        let (p14, l14) = (collapse_28_to_14(p)?, collapse_28_to_14(l)?);
        raw += usize::from(p == l);
        collapsed += usize::from(p14 == l14);
    }
    Ok((collapsed - raw) as f64 / labels_28.len() as f64)
}

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_predictions(classes: usize, predictions: &[usize], labels: &[usize]) -> Result<Self, EvalError> {
        if predictions.len() != labels.len() {
            return Err(EvalError::LengthMismatch {
                predictions: predictions.len(),
                labels: labels.len(),
            });
        }
        let mut m = Self::new(classes);
        for (&p, &l) in predictions.iter().zip(labels) {
            m.record(l, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), EvalError> {
        for class in [truth, predicted] {
            if class >= self.classes {
                return Err(EvalError::ClassOutOfRange {
                    class,
                    classes: self.classes,
                });
            }
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes, "confusion matrices of different sizes");
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.classes..(truth + 1) * self.classes].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// `trace / total`, or `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// CSV with a header row and a leading column of class names.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for n in names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push('\n');
        for r in 0..self.classes {
            out.push_str(&csv_field(&names[r]));
            for c in 0..self.classes {
                let _ = write!(out, ",{}", self.get(r, c));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Which branches the classifier uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Full,
    MotionOnly,
    SkeletonOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Self::Full, Self::MotionOnly, Self::SkeletonOnly];

    pub fn kinds(&self) -> &'static [FeatureKind] {
        match self {
            Self::Full => &FeatureKind::ALL,
            Self::MotionOnly => &[FeatureKind::Global, FeatureKind::Finger],
            Self::SkeletonOnly => &[FeatureKind::Skeleton],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::MotionOnly => "motion",
            Self::SkeletonOnly => "skeleton",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "full" => Ok(Self::Full),
            "motion" => Ok(Self::MotionOnly),
            "skeleton" => Ok(Self::SkeletonOnly),
            other => Err(format!("unknown method '{other}' (expected full, motion or skeleton)")),
        }
    }
}

/// Branch sizes shared by all branches; the input width comes from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureConfig {
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub fc_out: usize,
    pub dropout: f64,
    pub head_hidden: Vec<usize>,
    pub head_dropout: f64,
    pub bidirectional: bool,
    /// Standardize the skeleton stream as well as the motion streams.
    pub standardize_skeleton: bool,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            lstm_hidden: 100,
            lstm_layers: 2,
            fc_out: 128,
            dropout: 0.3,
            head_hidden: vec![256, 128],
            head_dropout: 0.3,
            bidirectional: true,
            standardize_skeleton: false,
        }
    }
}

impl ArchitectureConfig {
    pub fn network(&self, branches: &[(FeatureKind, usize)], classes: usize) -> NetworkConfig {
        NetworkConfig {
            branches: branches
                .iter()
                .map(|&(kind, input_dim)| BranchConfig {
                    kind,
                    input_dim,
                    lstm_hidden: self.lstm_hidden,
                    lstm_layers: self.lstm_layers,
                    fc_out: self.fc_out,
                    dropout_rate: self.dropout,
                })
                .collect(),
            head_hidden: self.head_hidden.clone(),
            classes,
            bidirectional: self.bidirectional,
            head_dropout: self.head_dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub extractor: Extractor,
    pub architecture: ArchitectureConfig,
    pub train: TrainConfig,
    pub scheme: ClassScheme,
    pub method: Method,
    pub categories: GestureCategoryMap,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            extractor: Extractor::default(),
            architecture: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            scheme: ClassScheme::Gestures14,
            method: Method::Full,
            categories: GestureCategoryMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub held_out_subject: u32,
    pub train_size: usize,
    pub test_size: usize,
    /// `None` when the test subject has no samples of the category.
    pub fine: Option<f64>,
    pub coarse: Option<f64>,
    pub both: f64,
    pub epochs: Vec<EpochLog>,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub method: Method,
    pub scheme: ClassScheme,
    pub splits: Vec<SplitResult>,
    pub fine: Option<Aggregate>,
    pub coarse: Option<Aggregate>,
    pub both: Aggregate,
    /// Summed over splits.
    pub confusion: ConfusionMatrix,
    /// Over the pooled test predictions of all splits, 28-class runs only.
    pub larfd: Option<f64>,
}

impl EvaluationReport {
    pub fn from_splits(
        method: Method,
        scheme: ClassScheme,
        splits: Vec<SplitResult>,
    ) -> Result<Self, EvalError> {
        let collect = |f: fn(&SplitResult) -> Option<f64>| -> Result<Option<Aggregate>, EvalError> {
            let values: Vec<f64> = splits.iter().filter_map(f).collect();
            if values.is_empty() {
                Ok(None)
            } else {
                aggregate_splits(&values).map(Some)
            }
        };
        let fine = collect(|s| s.fine)?;
        let coarse = collect(|s| s.coarse)?;
        let both = collect(|s| Some(s.both))?.ok_or(EvalError::NoSplits)?;
        let mut confusion = ConfusionMatrix::new(scheme.classes());
        for s in &splits {
            confusion.merge(&ConfusionMatrix::from_predictions(scheme.classes(), &s.predictions, &s.labels)?);
        }
        let larfd = match scheme {
            ClassScheme::Gestures14 => None,
            ClassScheme::Gestures28 => {
                let to_label = |v: &usize| *v as u32 + 1;
                let preds: Vec<u32> = splits.iter().flat_map(|s| s.predictions.iter().map(to_label)).collect();
                let labels: Vec<u32> = splits.iter().flat_map(|s| s.labels.iter().map(to_label)).collect();
                Some(larfd(&preds, &labels)?)
            }
        };
        Ok(Self {
            method,
            scheme,
            splits,
            fine,
            coarse,
            both,
            confusion,
            larfd,
        })
    }

    fn rows(&self) -> Vec<(Category, Option<Aggregate>)> {
        vec![
            (Category::Fine, self.fine),
            (Category::Coarse, self.coarse),
            (Category::Both, Some(self.both)),
        ]
    }

    /// Human-readable table: best, worst and average ± std per category, in
    /// percent.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "method {} | {} classes | {} splits\n",
            self.method,
            self.scheme.classes(),
            self.splits.len()
        );
        let _ = writeln!(out, "{:<8} {:>8} {:>8} {:>16}", "", "best", "worst", "avg ± std");
        for (cat, agg) in self.rows() {
            match agg {
                Some(a) => {
                    let _ = writeln!(
                        out,
                        "{:<8} {:>8.2} {:>8.2} {:>16}",
                        cat.name(),
                        100.0 * a.best,
                        100.0 * a.worst,
                        format!("{:.2} ± {:.2}", 100.0 * a.avg, 100.0 * a.std)
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<8} {:>8} {:>8} {:>16}", cat.name(), "-", "-", "-");
                }
            }
        }
        if let Some(l) = self.larfd {
            let _ = writeln!(out, "LARFD {l:.4}");
        }
        out
    }

    /// `category,best,worst,avg,std` rows as fractions, plus a `larfd` row for
    /// 28-class runs.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,classes,category,best,worst,avg,std\n");
        for (cat, agg) in self.rows() {
            let _ = write!(out, "{},{},{},", self.method, self.scheme.classes(), cat.name());
            match agg {
                Some(a) => {
                    let _ = writeln!(out, "{:.6},{:.6},{:.6},{:.6}", a.best, a.worst, a.avg, a.std);
                }
                None => out.push_str(",,,\n"),
            }
        }
        if let Some(l) = self.larfd {
            let _ = writeln!(out, "{},{},larfd,,,{l:.6},", self.method, self.scheme.classes());
        }
        out
    }

    pub fn splits_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        let mut out = String::from(
            "held_out_subject,train_size,test_size,fine,coarse,both,epochs,final_loss,final_train_accuracy\n",
        );
        for s in &self.splits {
            let last = s.epochs.last();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{},{},{}",
                s.held_out_subject,
                s.train_size,
                s.test_size,
                fmt(s.fine),
                fmt(s.coarse),
                s.both,
                s.epochs.len(),
                fmt(last.map(|e| e.loss)),
                fmt(last.map(|e| e.train_accuracy)),
            );
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let names: Vec<String> = (0..self.scheme.classes()).map(|c| self.scheme.class_name(c)).collect();
        self.confusion.to_csv(&names)
    }

    /// Writes `summary.txt`, `summary.csv`, `splits.csv` and `confusion.csv`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.txt"), self.to_table())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("splits.csv"), self.splits_csv())?;
        std::fs::write(dir.join("confusion.csv"), self.confusion_csv())?;
        Ok(())
    }
}

fn feature_err(meta: &SequenceMeta, source: FeatureError) -> EvalError {
    EvalError::Feature {
        subject: meta.subject,
        gesture: meta.gesture,
        finger: meta.finger,
        trial: meta.trial,
        source,
    }
}

/// Extracts all three streams of every sequence (in parallel, order kept).
pub fn extract_features(
    sequences: &[SkeletonSequence],
    extractor: &Extractor,
) -> Result<Vec<SequenceFeatures>, EvalError> {
    sequences
        .par_iter()
        .map(|s| extractor.extract_all(s).map_err(|e| feature_err(&s.meta, e)))
        .collect()
}

/// Per-branch statistics over the given training sequences; the skeleton
/// stream is left raw unless `standardize_skeleton` is set.
pub fn fit_normalization(
    train: &[&SequenceFeatures],
    kinds: &[FeatureKind],
    standardize_skeleton: bool,
) -> Vec<Option<Standardizer>> {
    kinds
        .iter()
        .map(|&k| {
            if k == FeatureKind::Skeleton && !standardize_skeleton {
                None
            } else {
                Standardizer::fit(train.iter().map(|f| f.stream(k)))
            }
        })
        .collect()
}

/// A trained split model together with its training log.
#[derive(Debug, Clone)]
pub struct TrainedSplit {
    pub model: NetworkModel,
    pub epochs: Vec<EpochLog>,
}

/// Fits normalization on `train` only, initializes from `seed` and trains.
pub fn train_model(
    train_set: &[&SequenceFeatures],
    config: &PipelineConfig,
    seed: u64,
) -> Result<TrainedSplit, NetworkError> {
    let kinds = config.method.kinds();
    let first = train_set.first().ok_or(NetworkError::EmptyDataset)?;
    let dims: Vec<(FeatureKind, usize)> = kinds.iter().map(|&k| (k, first.stream(k).cols())).collect();
    let net = config.architecture.network(&dims, config.scheme.classes());
    let mut model = NetworkModel::new(net, derive_seed(seed, &[1]))?;
    model.set_normalization(fit_normalization(train_set, kinds, config.architecture.standardize_skeleton))?;
    let samples = train_set
        .iter()
        .map(|f| {
            let label = config.scheme.class_of(&f.meta).map_err(|e| match e {
                EvalError::Label { message, .. } => NetworkError::InvalidConfig(message),
                other => NetworkError::InvalidConfig(other.to_string()),
            })?;
            Ok(TrainSample {
                streams: model.prepare(f)?,
                label,
            })
        })
        .collect::<Result<Vec<_>, NetworkError>>()?;
    let train_config = TrainConfig {
        seed: derive_seed(seed, &[2]),
        ..config.train.clone()
    };
    let epochs = train(&mut model, &samples, &train_config)?;
    Ok(TrainedSplit { model, epochs })
}

fn evaluate_split(
    features: &[SequenceFeatures],
    labels: &[usize],
    split: &LoocvSplit,
    config: &PipelineConfig,
) -> Result<SplitResult, EvalError> {
    let subject = split.held_out_subject;
    if split.train.is_empty() {
        return Err(EvalError::EmptyTrainSplit { subject });
    }
    let train_set: Vec<&SequenceFeatures> = split.train.iter().map(|&i| &features[i]).collect();
    let seed = derive_seed(config.train.seed, &[subject as u64]);
    let trained = train_model(&train_set, config, seed).map_err(|source| EvalError::Split { subject, source })?;
    let mut predictions = Vec::with_capacity(split.test.len());
    for &i in &split.test {
        let streams = trained
            .model
            .prepare(&features[i])
            .map_err(|source| EvalError::Split { subject, source })?;
        let (class, _) = trained
            .model
            .predict(&streams)
            .map_err(|source| EvalError::Split { subject, source })?;
        predictions.push(class);
    }
    let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let acc = |filter| match accuracy(&predictions, &truth, config.scheme, &config.categories, filter) {
        Ok(v) => Ok(Some(v)),
        Err(EvalError::EmptyFilter(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(SplitResult {
        held_out_subject: subject,
        train_size: split.train.len(),
        test_size: split.test.len(),
        fine: acc(Category::Fine)?,
        coarse: acc(Category::Coarse)?,
        both: acc(Category::Both)?.ok_or(EvalError::EmptyFilter(Category::Both))?,
        epochs: trained.epochs,
        predictions,
        labels: truth,
    })
}

/// LOOCV over already extracted features: one split per subject, splits run
/// on the rayon pool, results in subject order.
pub fn run_loocv_features(features: &[SequenceFeatures], config: &PipelineConfig) -> Result<EvaluationReport, EvalError> {
    let labels = features
        .iter()
        .map(|f| config.scheme.class_of(&f.meta))
        .collect::<Result<Vec<_>, _>>()?;
    let subjects: Vec<u32> = features.iter().map(|f| f.meta.subject).collect();
    if subjects.is_empty() {
        return Err(EvalError::NoSplits);
    }
    let splits = loocv_splits_by_subject(&subjects)?;
    let results = splits
        .par_iter()
        .map(|s| evaluate_split(features, &labels, s, config))
        .collect::<Result<Vec<_>, _>>()?;
    EvaluationReport::from_splits(config.method, config.scheme, results)
}

pub fn run_loocv(sequences: &[SkeletonSequence], config: &PipelineConfig) -> Result<EvaluationReport, EvalError> {
    run_loocv_features(&extract_features(sequences, &config.extractor)?, config)
}

/// Loads every indexed sequence and runs [`run_loocv`].
pub fn run_loocv_index(index: &DatasetIndex, config: &PipelineConfig) -> Result<EvaluationReport, EvalError> {
    let joints = config.extractor.layout.joint_count();
    let sequences = index
        .entries()
        .par_iter()
        .map(|e| load_sequence(e, joints))
        .collect::<Result<Vec<_>, _>>()?;
    run_loocv(&sequences, config)
}
