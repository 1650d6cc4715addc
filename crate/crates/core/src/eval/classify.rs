use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{fill_window, MotionRecording};
use crate::error::{Error, Result};
use crate::model::{ArchKind, Network, Tap};
use crate::tensor::Tensor;

/// How per-step class distributions are combined into one sequence label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Mean softmax, then argmax.
    #[default]
    Mean,
    /// Most frequent per-step argmax.
    Vote,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Vote => "vote",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "vote" => Ok(Aggregation::Vote),
            _ => Err(Error::Param(format!("unknown aggregation {s:?} (expected mean|vote)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Only windows lying inside the first `window_seconds` are used.
    pub window_seconds: f64,
    pub aggregation: Aggregation,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            window_seconds: 8.0,
            aggregation: Aggregation::Mean,
        }
    }
}

/// Every input window of `rec` that ends inside the first `window_seconds`
/// (all of them when `window_seconds` is infinite), taking every `stride`-th.
/// Returns `[n × 3·J·Δt]`.
pub fn sequence_windows(rec: &MotionRecording, delta_t: usize, window_seconds: f64, stride: usize) -> Result<Tensor> {
    if delta_t == 0 || stride == 0 || !(window_seconds > 0.0) {
        return Err(Error::Param(
            "delta_t, stride and window_seconds must be positive".into(),
        ));
    }
    let limit = if window_seconds.is_finite() {
        rec.num_frames().min((window_seconds * rec.fps as f64).round() as usize)
    } else {
        rec.num_frames()
    };
    if limit < delta_t {
        return Err(Error::Eval(format!(
            "{} has {limit} usable frames, fewer than one window of {delta_t}",
            rec.trial
        )));
    }
    let d = 3 * rec.num_joints() * delta_t;
    let starts: Vec<usize> = (0..=limit - delta_t).step_by(stride).collect();
    let mut x = vec![0.0; starts.len() * d];
    for (k, &s) in starts.iter().enumerate() {
        fill_window(rec, s, delta_t, &mut x[k * d..(k + 1) * d]);
    }
    Tensor::new(&[starts.len(), d], x)
}

/// Tap features `[n × width]` for the windows of [`sequence_windows`].
pub fn sequence_features(
    te: &Network,
    rec: &MotionRecording,
    tap: Tap,
    window_seconds: f64,
    stride: usize,
) -> Result<Tensor> {
    if rec.num_joints() != te.spec().num_joints {
        return Err(Error::Eval(format!(
            "{} has {} joints, encoder expects {}",
            rec.trial,
            rec.num_joints(),
            te.spec().num_joints
        )));
    }
    let x = sequence_windows(rec, te.spec().delta_t, window_seconds, stride)?;
    te.extract_features(&x, tap)
}

/// Index of the largest value; the first one wins ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Combines per-step class distributions `[n × M]` into a class and the
/// aggregated distribution (mean probabilities, or vote fractions).
pub fn aggregate(probs: &Tensor, how: Aggregation) -> Result<(usize, Vec<f64>)> {
    if probs.shape().len() != 2 || probs.rows() == 0 || probs.row_len() == 0 {
        return Err(Error::shape("aggregate", probs.shape(), &[1, 1]));
    }
    let (n, m) = (probs.rows(), probs.row_len());
    let mut dist = vec![0.0; m];
    for i in 0..n {
        match how {
            Aggregation::Mean => dist.iter_mut().zip(probs.row(i)).for_each(|(d, p)| *d += p),
            Aggregation::Vote => dist[argmax(probs.row(i))] += 1.0,
        }
    }
    dist.iter_mut().for_each(|d| *d /= n as f64);
    Ok((argmax(&dist), dist))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequencePrediction {
    pub class: usize,
    pub distribution: Vec<f64>,
    pub steps: usize,
}

fn check_classifier(clf: &Network) -> Result<()> {
    if clf.kind() != ArchKind::Classifier {
        return Err(Error::Param(format!("expected a classifier, got {}", clf.kind())));
    }
    Ok(())
}

/// Classifies the tap features of every time step in the first
/// `opts.window_seconds` of `rec` and aggregates them.
pub fn classify_sequence(
    clf: &Network,
    te: &Network,
    rec: &MotionRecording,
    tap: Tap,
    opts: &ClassifyOptions,
) -> Result<SequencePrediction> {
    check_classifier(clf)?;
    let features = sequence_features(te, rec, tap, opts.window_seconds, 1)?;
    if features.row_len() != clf.input_width() {
        return Err(Error::Param(format!(
            "{tap} features have width {}, classifier expects {}",
            features.row_len(),
            clf.input_width()
        )));
    }
    let probs = clf.forward(&features)?;
    let (class, distribution) = aggregate(&probs, opts.aggregation)?;
    Ok(SequencePrediction {
        class,
        distribution,
        steps: probs.rows(),
    })
}

/// Position of `rec`'s label in `classes`.
pub fn class_index(classes: &[String], rec: &MotionRecording) -> Result<usize> {
    let label = rec
        .label
        .as_deref()
        .ok_or_else(|| Error::Data(format!("{} has no action label", rec.trial)))?;
    classes
        .iter()
        .position(|c| c == label)
        .ok_or_else(|| Error::Data(format!("{}: label {label:?} is not one of {classes:?}", rec.trial)))
}

/// Sorted distinct labels of `recs`.
pub fn class_names(recs: &[MotionRecording]) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for r in recs {
        let l = r
            .label
            .clone()
            .ok_or_else(|| Error::Data(format!("{} has no action label", r.trial)))?;
        names.push(l);
    }
    names.sort();
    names.dedup();
    Ok(names)
}

/// Per-step training set: tap features from every `stride`-th window of each
/// recording (whole recordings), labelled with the recording's class.
pub fn labeled_features(
    te: &Network,
    recs: &[MotionRecording],
    classes: &[String],
    tap: Tap,
    stride: usize,
) -> Result<(Tensor, Vec<usize>)> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0;
    for r in recs {
        let class = class_index(classes, r)?;
        let f = sequence_features(te, r, tap, f64::INFINITY, stride)?;
        width = f.row_len();
        labels.extend(std::iter::repeat_n(class, f.rows()));
        data.extend_from_slice(f.data());
    }
    if labels.is_empty() {
        return Err(Error::Eval("no training recordings".into()));
    }
    Ok((Tensor::new(&[labels.len(), width], data)?, labels))
}

/// Refuses recording sets that share a `(subject, trial)` identity.
pub fn check_disjoint(train: &[MotionRecording], test: &[MotionRecording]) -> Result<()> {
    let seen: HashSet<(&str, &str)> = train.iter().map(|r| (r.subject.as_str(), r.trial.as_str())).collect();
    let shared: Vec<String> = test
        .iter()
        .filter(|r| seen.contains(&(r.subject.as_str(), r.trial.as_str())))
        .map(|r| format!("{}/{}", r.subject, r.trial))
        .collect();
    if !shared.is_empty() {
        return Err(Error::Config(format!(
            "train and test sets overlap in {} recording(s): {}",
            shared.len(),
            shared.join(", ")
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[actual][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let m = classes.len();
        Self {
            classes,
            counts: vec![vec![0; m]; m],
        }
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// trace / total; zero for an empty matrix.
    pub fn rate(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Recall of each class, `None` when it has no sequences.
    pub fn per_class_rate(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect()
    }

    pub fn to_table(&self) -> String {
        let w = self.classes.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut s = format!("{:<w$}", "actual");
        for c in &self.classes {
            let _ = write!(s, " {c:>w$}");
        }
        let _ = writeln!(s, " {:>w$}", "rate");
        for ((name, row), r) in self.classes.iter().zip(&self.counts).zip(self.per_class_rate()) {
            let _ = write!(s, "{name:<w$}");
            for n in row {
                let _ = write!(s, " {n:>w$}");
            }
            let rate = r.map_or("-".to_string(), |r| format!("{r:.3}"));
            let _ = writeln!(s, " {rate:>w$}");
        }
        let _ = writeln!(
            s,
            "classification rate {:.4} ({}/{})",
            self.rate(),
            self.correct(),
            self.total()
        );
        s
    }

    /// `actual,predicted,count` for every cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("actual,predicted,count\n");
        for (a, row) in self.classes.iter().zip(&self.counts) {
            for (p, n) in self.classes.iter().zip(row) {
                let _ = writeln!(s, "{a},{p},{n}");
            }
        }
        s
    }
}

/// Classifies every test recording and tallies the outcomes.
pub fn evaluate_classification(
    clf: &Network,
    te: &Network,
    recs: &[MotionRecording],
    classes: &[String],
    tap: Tap,
    opts: &ClassifyOptions,
) -> Result<ConfusionMatrix> {
    check_classifier(clf)?;
    if clf.output_width() != classes.len() {
        return Err(Error::Param(format!(
            "classifier has {} outputs for {} classes",
            clf.output_width(),
            classes.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes.to_vec());
    for r in recs {
        let actual = class_index(classes, r)?;
        cm.record(actual, classify_sequence(clf, te, r, tap, opts)?.class);
    }
    Ok(cm)
}
