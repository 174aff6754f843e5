//! Video-level prediction by majority vote, person-independent cross
//! validation, random-split evaluation, the ablation suite, and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    prepare_samples, split_pi, split_random, Action, Dataset, KeypointSet, PaddingMode,
    PoseSequence, Preprocessing, Transform, WindowSample, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::models::{presets, Model, ModelConfig, ModelKind};
use crate::rng::{derive_seed, derived_rng};
use crate::training::{batch_tensor, train, TrainConfig, TrainLog};

const EVAL_BATCH: usize = 256;

/// Everything one train/evaluate run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    pub seed: u64,
}

impl Experiment {
    /// Model config re-wired for the preprocessing's channels and the input
    /// length implied by `train_set`.
    pub fn resolved_model(&self, train_set: &Dataset) -> ModelConfig {
        self.model
            .clone()
            .with_input_channels(self.preprocessing.channels())
            .with_input_length(self.preprocessing.input_length(train_set))
    }
}

/// Modal class; ties go to the lowest class index.
pub fn majority_vote(votes: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoPrediction {
    pub video_id: String,
    pub fencer_id: u32,
    pub label: Action,
    pub predicted: Action,
    pub votes: [usize; NUM_CLASSES],
}

impl VideoPrediction {
    pub fn is_correct(&self) -> bool {
        self.label == self.predicted
    }

    pub fn num_windows(&self) -> usize {
        self.votes.iter().sum()
    }
}

/// Per-window class predictions in `windows` order.
pub fn predict_windows(model: &Model, windows: &[WindowSample]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_BATCH) {
        let refs: Vec<&WindowSample> = chunk.iter().collect();
        out.extend(model.predict(&batch_tensor(&refs)?)?);
    }
    Ok(out)
}

/// Vote over each video's windows. Videos keep dataset order.
pub fn predict_dataset(
    model: &Model,
    dataset: &Dataset,
    preprocessing: &Preprocessing,
    seed: u64,
) -> Result<(Vec<VideoPrediction>, usize)> {
    let windows = prepare_samples(dataset, preprocessing, seed, model.config().input_length)?;
    let classes = predict_windows(model, &windows)?;
    let mut votes: BTreeMap<&str, [usize; NUM_CLASSES]> = BTreeMap::new();
    let mut window_correct = 0;
    for (w, &c) in windows.iter().zip(&classes) {
        votes.entry(w.video_id.as_str()).or_default()[c] += 1;
        window_correct += usize::from(w.label == c);
    }
    let predictions = dataset
        .iter()
        .map(|seq| {
            let v = votes.get(seq.video_id.as_str()).copied().ok_or_else(|| {
                Error::data(&seq.video_id, "no valid windows to classify".to_string())
            })?;
            Ok(VideoPrediction {
                video_id: seq.video_id.clone(),
                fencer_id: seq.fencer_id,
                label: seq.action,
                predicted: Action::from_index(majority_vote(&v)).expect("class index in range"),
                votes: v,
            })
        })
        .collect::<Result<_>>()?;
    Ok((predictions, window_correct))
}

/// Class and vote counts for one video.
pub fn predict_video(
    model: &Model,
    seq: &PoseSequence,
    preprocessing: &Preprocessing,
    seed: u64,
) -> Result<(Action, [usize; NUM_CLASSES])> {
    let (mut p, _) = predict_dataset(model, &Dataset::new(vec![seq.clone()]), preprocessing, seed)?;
    let p = p.remove(0);
    Ok((p.predicted, p.votes))
}

/// Outcome of training on one split and evaluating on its held-out part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    /// Held-out fencer id, or `"random"`.
    pub fold: String,
    pub test_videos: usize,
    pub correct_videos: usize,
    pub accuracy: f64,
    pub test_windows: usize,
    pub window_accuracy: f64,
    pub final_train_loss: f64,
    pub param_checksum: String,
    #[serde(skip)]
    pub predictions: Vec<VideoPrediction>,
}

/// Train a fresh model on `train_set` and evaluate it on `test_set`.
pub fn run_fold(
    fold: &str,
    train_set: &Dataset,
    test_set: &Dataset,
    experiment: &Experiment,
) -> Result<(FoldResult, Model, TrainLog)> {
    if test_set.is_empty() {
        return Err(Error::Argument(format!("fold {fold}: empty test set")));
    }
    let seed = |label: &str| derive_seed(experiment.seed, &format!("fold-{fold}-{label}"));
    let cfg = experiment.resolved_model(train_set);
    let windows = prepare_samples(train_set, &experiment.preprocessing, seed("train-data"), cfg.input_length)?;
    let model = Model::build(&cfg, seed("init"))?;
    let train_cfg = TrainConfig {
        seed: seed("train"),
        ..experiment.train.clone()
    };
    let (model, log) = train(model, &windows, &train_cfg)?;
    let (predictions, window_correct) =
        predict_dataset(&model, test_set, &experiment.preprocessing, seed("test-data"))?;
    let test_windows: usize = predictions.iter().map(VideoPrediction::num_windows).sum();
    let correct_videos = predictions.iter().filter(|p| p.is_correct()).count();
    let result = FoldResult {
        fold: fold.to_string(),
        test_videos: predictions.len(),
        correct_videos,
        accuracy: correct_videos as f64 / predictions.len() as f64,
        test_windows,
        window_accuracy: window_correct as f64 / test_windows as f64,
        final_train_loss: log.epochs.last().map_or(f64::NAN, |e| e.mean_loss),
        param_checksum: log.param_checksum.clone(),
        predictions,
    };
    Ok((result, model, log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub label: String,
    pub num_params: usize,
    pub folds: Vec<FoldResult>,
    /// Correct videos over all videos, across folds.
    pub accuracy: f64,
    pub window_accuracy: f64,
    /// Diagonal of the row-normalized confusion matrix, in percent; 0 for
    /// classes without test videos.
    pub per_class_accuracy: [f64; NUM_CLASSES],
    /// `confusion[true][predicted]` video counts.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub confusion_percent: [[f64; NUM_CLASSES]; NUM_CLASSES],
    pub predictions: Vec<VideoPrediction>,
}

impl EvaluationReport {
    pub fn from_folds(label: &str, num_params: usize, folds: Vec<FoldResult>) -> Self {
        let predictions: Vec<VideoPrediction> =
            folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
        let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
        for p in &predictions {
            confusion[p.label.index()][p.predicted.index()] += 1;
        }
        let mut confusion_percent = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        let mut per_class_accuracy = [0.0; NUM_CLASSES];
        for (i, row) in confusion.iter().enumerate() {
            let n: usize = row.iter().sum();
            if n > 0 {
                for (j, &c) in row.iter().enumerate() {
                    confusion_percent[i][j] = 100.0 * c as f64 / n as f64;
                }
            }
            per_class_accuracy[i] = confusion_percent[i][i];
        }
        let total = predictions.len();
        let trace: usize = (0..NUM_CLASSES).map(|i| confusion[i][i]).sum();
        let windows: usize = folds.iter().map(|f| f.test_windows).sum();
        let window_correct: f64 = folds
            .iter()
            .map(|f| f.window_accuracy * f.test_windows as f64)
            .sum();
        EvaluationReport {
            label: label.to_string(),
            num_params,
            accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            window_accuracy: if windows == 0 { 0.0 } else { window_correct / windows as f64 },
            per_class_accuracy,
            confusion,
            confusion_percent,
            folds,
            predictions,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("report {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Aligned plain-text summary: folds, per-class accuracy, confusion matrix.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}  ({} parameters)", self.label, self.num_params);
        let _ = writeln!(s, "{:>8} {:>7} {:>8} {:>9} {:>10}", "fold", "videos", "correct", "accuracy", "window_acc");
        for f in &self.folds {
            let _ = writeln!(
                s,
                "{:>8} {:>7} {:>8} {:>8.1}% {:>9.1}%",
                f.fold,
                f.test_videos,
                f.correct_videos,
                100.0 * f.accuracy,
                100.0 * f.window_accuracy
            );
        }
        let _ = writeln!(
            s,
            "{:>8} {:>7} {:>8} {:>8.1}% {:>9.1}%",
            "all",
            self.predictions.len(),
            self.predictions.iter().filter(|p| p.is_correct()).count(),
            100.0 * self.accuracy,
            100.0 * self.window_accuracy
        );
        let _ = writeln!(s, "\nconfusion (rows: true, columns: predicted, % of row)");
        let _ = write!(s, "{:>4}", "");
        for a in Action::ALL {
            let _ = write!(s, " {:>6}", a.code());
        }
        let _ = writeln!(s, " {:>6}", "n");
        for (i, a) in Action::ALL.iter().enumerate() {
            let _ = write!(s, "{:>4}", a.code());
            for pct in self.confusion_percent[i] {
                let _ = write!(s, " {pct:>6.1}");
            }
            let _ = writeln!(s, " {:>6}", self.confusion[i].iter().sum::<usize>());
        }
        s
    }

    /// `true,predicted,count,percent` rows in class order.
    pub fn write_confusion_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("true,predicted,count,percent\n");
        for (i, a) in Action::ALL.iter().enumerate() {
            for (j, b) in Action::ALL.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{a},{b},{},{:.4}",
                    self.confusion[i][j], self.confusion_percent[i][j]
                );
            }
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn write_predictions_csv(&self, path: &Path) -> Result<()> {
        write_predictions_csv(&self.predictions, path)
    }
}

/// `video_id,fencer_id,label,predicted,votes_R,...,votes_SB`.
pub fn write_predictions_csv(predictions: &[VideoPrediction], path: &Path) -> Result<()> {
    let mut s = String::from("video_id,fencer_id,label,predicted");
    for a in Action::ALL {
        let _ = write!(s, ",votes_{a}");
    }
    s.push('\n');
    for p in predictions {
        let _ = write!(s, "{},{},{},{}", p.video_id, p.fencer_id, p.label, p.predicted);
        for v in p.votes {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Leave-one-fencer-out cross validation with a fresh model per fold; up to
/// `jobs` folds run concurrently.
pub fn run_cv_pi(
    dataset: &Dataset,
    experiment: &Experiment,
    label: &str,
    jobs: usize,
) -> Result<EvaluationReport> {
    let fencers = dataset.fencers();
    if fencers.len() < 2 {
        return Err(Error::Argument(format!(
            "cross validation needs at least 2 fencers, found {}",
            fencers.len()
        )));
    }
    let folds = with_jobs(jobs, || {
        fencers
            .par_iter()
            .map(|&f| {
                let (train_set, test_set) = split_pi(dataset, f)?;
                let (result, _, _) = run_fold(&f.to_string(), &train_set, &test_set, experiment)
                    .map_err(|e| e.context(format!("fold {f}")))?;
                log::info!("{label} fold {f}: {:.3}", result.accuracy);
                Ok(result)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let num_params = experiment.resolved_model(dataset).num_params();
    Ok(EvaluationReport::from_folds(label, num_params, folds))
}

/// One stratified train/test split holding out `fraction` of every
/// (fencer, action) group.
pub fn run_random_split(
    dataset: &Dataset,
    fraction: f64,
    experiment: &Experiment,
    label: &str,
) -> Result<EvaluationReport> {
    let mut rng = derived_rng(experiment.seed, "random-split");
    let (train_set, test_set) = split_random(dataset, fraction, &mut rng);
    if test_set.is_empty() || train_set.is_empty() {
        return Err(Error::Argument(format!(
            "random split with fraction {fraction} leaves {} train and {} test videos",
            train_set.len(),
            test_set.len()
        )));
    }
    let (result, model, _) = run_fold("random", &train_set, &test_set, experiment)?;
    Ok(EvaluationReport::from_folds(label, model.num_params(), vec![result]))
}

/// Rows of the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fencenet,
    Bifencenet,
    Reversed,
    Shuffled,
    Forward2,
    Wide,
    RegularConv1d,
    ZeroPadding,
    FullBody,
    LowerBody,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Fencenet,
        Variant::Bifencenet,
        Variant::Reversed,
        Variant::Shuffled,
        Variant::Forward2,
        Variant::Wide,
        Variant::RegularConv1d,
        Variant::ZeroPadding,
        Variant::FullBody,
        Variant::LowerBody,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fencenet => "fencenet",
            Variant::Bifencenet => "bifencenet",
            Variant::Reversed => "reversed",
            Variant::Shuffled => "shuffled",
            Variant::Forward2 => "forward2",
            Variant::Wide => "wide",
            Variant::RegularConv1d => "regular_conv1d",
            Variant::ZeroPadding => "zero_padding",
            Variant::FullBody => "full_body",
            Variant::LowerBody => "lower_body",
        }
    }

    /// Base model family the variant is defined on.
    pub fn needs_bidirectional(self) -> bool {
        matches!(self, Variant::Bifencenet | Variant::Forward2)
    }

    /// Turn a base model and preprocessing into this variant's. The base must
    /// be bidirectional exactly when the variant is a BiFenceNet row.
    pub fn apply(
        self,
        model: ModelConfig,
        mut prep: Preprocessing,
    ) -> Result<(ModelConfig, Preprocessing)> {
        if model.kind.is_bidirectional() != self.needs_bidirectional() {
            let family = if self.needs_bidirectional() { "a BiFenceNet" } else { "a FenceNet" };
            return Err(Error::Config(format!(
                "variant `{self}` needs {family} base model, got {:?}",
                model.kind
            )));
        }
        let model = match self {
            Variant::Bifencenet => model.with_kind(ModelKind::Bifencenet),
            Variant::Forward2 => model.with_kind(ModelKind::BifencenetForward2),
            Variant::Wide => model.widened(1.5).with_kind(ModelKind::FencenetWide),
            Variant::RegularConv1d => model.with_kind(ModelKind::AcausalFlatten),
            _ => model.with_kind(ModelKind::Fencenet),
        };
        match self {
            Variant::Reversed => prep.transform = Transform::Reversed,
            Variant::Shuffled => prep.transform = Transform::Shuffled,
            Variant::ZeroPadding => prep.padding = PaddingMode::ZeroPad,
            Variant::FullBody => prep.keypoints = KeypointSet::Full13,
            Variant::LowerBody => prep.keypoints = KeypointSet::Lower6,
            _ => {}
        }
        Ok((model, prep))
    }

    /// The experiment this variant runs under a suite's base settings.
    pub fn experiment(self, suite: &SuiteConfig) -> Result<Experiment> {
        let (base, train) = if self.needs_bidirectional() {
            (&suite.bifencenet, &suite.bifencenet_train)
        } else {
            (&suite.fencenet, &suite.train)
        };
        let (model, preprocessing) = self.apply(base.clone(), suite.preprocessing.clone())?;
        Ok(Experiment {
            model,
            train: train.clone(),
            preprocessing,
            seed: suite.seed,
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub fencenet: ModelConfig,
    pub bifencenet: ModelConfig,
    pub train: TrainConfig,
    pub bifencenet_train: TrainConfig,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    pub seed: u64,
    pub variants: Vec<Variant>,
}

impl SuiteConfig {
    /// Full-size models; FenceNet trains 103 epochs per fold, BiFenceNet 94.
    pub fn full(seed: u64) -> Self {
        SuiteConfig {
            fencenet: presets::fencenet(KeypointSet::default().channels()),
            bifencenet: presets::bifencenet(KeypointSet::default().channels()),
            train: TrainConfig::default(),
            bifencenet_train: TrainConfig {
                epochs: 94,
                ..TrainConfig::default()
            },
            preprocessing: Preprocessing::default(),
            seed,
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub num_params: usize,
    pub accuracy: f64,
    pub per_class_accuracy: [f64; NUM_CLASSES],
}

/// PI cross validation of every requested variant.
pub fn run_ablation_suite(
    dataset: &Dataset,
    suite: &SuiteConfig,
    jobs: usize,
) -> Result<(Vec<AblationRow>, Vec<EvaluationReport>)> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &variant in &suite.variants {
        let report = run_cv_pi(dataset, &variant.experiment(suite)?, variant.name(), jobs)
            .map_err(|e| e.context(format!("variant {variant}")))?;
        rows.push(AblationRow {
            variant,
            num_params: report.num_params,
            accuracy: report.accuracy,
            per_class_accuracy: report.per_class_accuracy,
        });
        reports.push(report);
    }
    Ok((rows, reports))
}

/// Parameters in millions, accuracy, then per-class accuracy, all in percent.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<16} {:>8} {:>8}", "variant", "params_M", "acc");
    for a in Action::ALL {
        let _ = write!(s, " {:>6}", a.code());
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{:<16} {:>8.3} {:>7.1}%",
            r.variant.name(),
            r.num_params as f64 / 1e6,
            100.0 * r.accuracy
        );
        for pct in r.per_class_accuracy {
            let _ = write!(s, " {pct:>6.1}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn votes_break_ties_toward_lower_index() {
        assert_eq!(majority_vote(&[4, 4, 0, 0, 0, 0]), 0);
        assert_eq!(majority_vote(&[2, 0, 1, 7, 0, 0]), 3);
        assert_eq!(majority_vote(&[0, 0, 0, 0, 1, 1]), 4);
        assert_eq!(majority_vote(&[0, 0, 0, 0, 0, 1]), 5);
    }

    fn prediction(label: Action, predicted: Action) -> VideoPrediction {
        VideoPrediction {
            video_id: format!("{label}-{predicted}"),
            fencer_id: 1,
            label,
            predicted,
            votes: [0; NUM_CLASSES],
        }
    }

    #[test]
    fn report_rows_and_accuracy_agree() {
        let predictions = vec![
            prediction(Action::R, Action::R),
            prediction(Action::R, Action::IS),
            prediction(Action::JS, Action::JS),
            prediction(Action::SB, Action::SB),
        ];
        let fold = FoldResult {
            fold: "1".into(),
            test_videos: 4,
            correct_videos: 3,
            accuracy: 0.75,
            test_windows: 10,
            window_accuracy: 0.7,
            final_train_loss: 0.1,
            param_checksum: String::new(),
            predictions,
        };
        let r = EvaluationReport::from_folds("t", 10, vec![fold]);
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.confusion[0], [1, 1, 0, 0, 0, 0]);
        assert_eq!(r.confusion_percent[0][0], 50.0);
        assert_eq!(r.per_class_accuracy, [50.0, 0.0, 0.0, 100.0, 0.0, 100.0]);
        assert!((r.window_accuracy - 0.7).abs() < 1e-12);
        assert!(r.to_table().contains("75.0%"));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("lstm".parse::<Variant>(), Err(Error::Config(_))));
    }

    #[test]
    fn variants_change_what_they_claim() {
        let suite = SuiteConfig::full(0);
        let base = Variant::Fencenet.experiment(&suite).unwrap();
        let wide = Variant::Wide.experiment(&suite).unwrap();
        assert_eq!(wide.model.kind, ModelKind::FencenetWide);
        assert!(wide.model.num_params() > base.model.num_params());
        assert_eq!(Variant::Shuffled.experiment(&suite).unwrap().preprocessing.transform, Transform::Shuffled);
        assert_eq!(Variant::Forward2.experiment(&suite).unwrap().train.epochs, 94);
        let lower = Variant::LowerBody.experiment(&suite).unwrap();
        assert_eq!(lower.preprocessing.keypoints, KeypointSet::Lower6);
        assert!(lower.resolved_model(&Dataset::new(vec![])).validate().is_ok());
        let bi = presets::bifencenet_small(18);
        assert!(matches!(
            Variant::Reversed.apply(bi, Preprocessing::default()),
            Err(Error::Config(_))
        ));
    }
}
