//! Leave-one-person-out evaluation with per-fold filtering and tuning.

pub mod metrics;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{build_feature_matrix, drop_missing, FeatureError, FeatureMatrix, FeatureOptions, RoadScope};
use crate::models::{self, FittedModel, Labels, ModelError, ModelKind, ModelSpec};
use crate::segmentation::{
    build_segments, mean_arterial_seconds, plan_arterial_windows, DurationGrid, DurationTarget, RouteMap,
    SegmentConfig, SegmentError, SegmentSet,
};
use crate::signals::{derive_channels, DriveSession, SignalError, Target, TraitTable};

pub use metrics::{macro_f1, pearson_p_value, pearson_r, rmse};
pub use report::{scatter_svg, EvalReport};

pub const DEFAULT_CORR_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric input: {0}")]
    MetricInput(String),
    #[error("correlation undefined for zero-variance input")]
    UndefinedCorrelation,
    #[error("degenerate target {0}: all scores identical")]
    DegenerateTarget(String),
    #[error("need at least 2 drivers, got {0}")]
    TooFewDrivers(usize),
    #[error("experiment config: {0}")]
    Config(String),
    #[error("driver {driver} has no score for {target}")]
    MissingTrait { driver: String, target: Target },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Segments(#[from] SegmentError),
    #[error(transparent)]
    Signals(#[from] SignalError),
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: ModelError,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Segmentation variant: (i) road type and durations, (ii) road type only,
/// (iii) no segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    Ii,
    #[serde(rename = "iii")]
    Iii,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::I, Variant::Ii, Variant::Iii];

    pub fn name(self) -> &'static str {
        match self {
            Variant::I => "i",
            Variant::Ii => "ii",
            Variant::Iii => "iii",
        }
    }

    pub fn road_scopes(self) -> &'static [RoadScope] {
        match self {
            Variant::I | Variant::Ii => &[RoadScope::Arterial, RoadScope::Intersection],
            Variant::Iii => &[RoadScope::Whole],
        }
    }

    /// Arterial window plan for this variant.
    pub fn plan(self, mean_arterial: f64) -> BTreeMap<DurationTarget, usize> {
        match self {
            Variant::I => plan_arterial_windows(&DurationGrid::standard(mean_arterial)),
            Variant::Ii | Variant::Iii => plan_arterial_windows(&DurationGrid::all_only(mean_arterial)),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "i" => Ok(Variant::I),
            "ii" => Ok(Variant::Ii),
            "iii" => Ok(Variant::Iii),
            _ => Err(format!("unknown variant `{s}`")),
        }
    }
}

/// Sessions, ground truth and route of one cohort.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub sessions: Vec<DriveSession>,
    pub traits: TraitTable,
    pub route: RouteMap,
}

/// Binary labels per score: high iff strictly above the median.
pub fn median_split(scores: &[f64]) -> Result<Vec<bool>> {
    if scores.len() < 2 {
        return Err(EvalError::TooFewDrivers(scores.len()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(EvalError::DegenerateTarget("all scores equal".into()));
    }
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(scores.iter().map(|&s| s > median).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub test_driver: String,
    pub train_drivers: Vec<String>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// One fold per distinct driver, in driver-id order; `groups[i]` is the
/// driver of row i.
pub fn make_folds<S: AsRef<str>>(groups: &[S]) -> Result<FoldPlan> {
    let mut rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        rows.entry(g.as_ref()).or_default().push(i);
    }
    if rows.len() < 2 {
        return Err(EvalError::TooFewDrivers(rows.len()));
    }
    let drivers: Vec<&str> = rows.keys().copied().collect();
    let folds = drivers
        .iter()
        .map(|&test| Fold {
            test_driver: test.to_string(),
            train_drivers: drivers.iter().filter(|&&d| d != test).map(|d| d.to_string()).collect(),
            train_rows: (0..groups.len()).filter(|&i| groups[i].as_ref() != test).collect(),
            test_rows: rows[test].clone(),
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// Columns whose |Pearson r| with the target exceeds `threshold`.
/// Constant columns have no defined r and are dropped.
pub fn filter_features(x: &DMatrix<f64>, y: &[f64], threshold: f64) -> Vec<usize> {
    let n = y.len() as f64;
    let ym = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let syy: f64 = yc.iter().map(|v| v * v).sum();
    if syy <= 0.0 {
        return Vec::new();
    }
    (0..x.ncols())
        .filter(|&j| {
            let col = x.column(j);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            // rounding noise on a constant column is not variation
            if !(hi - lo > 1e-12 * lo.abs().max(hi.abs())) {
                return false;
            }
            let m = col.sum() / n;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (v, w) in col.iter().zip(&yc) {
                let d = v - m;
                sxy += d * w;
                sxx += d * d;
            }
            sxx > 0.0 && (sxy / (sxx.sqrt() * syy.sqrt())).abs() > threshold
        })
        .collect()
}

/// Index of the best score; ties go to the earlier (smaller) grid value.
pub fn select_best(scores: &[Option<f64>], minimize: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = *s else { continue };
        let better = match best {
            None => true,
            Some((_, b)) => {
                if minimize {
                    s < b
                } else {
                    s > b
                }
            }
        };
        if better {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-driver mean of session values, in driver-id order.
pub fn aggregate_sessions<S: AsRef<str>>(groups: &[S], values: &[f64]) -> Vec<(String, f64)> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (g, &v) in groups.iter().zip(values) {
        let e = acc.entry(g.as_ref()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().map(|(d, (s, n))| (d.to_string(), s / n as f64)).collect()
}

/// Row labels of a target: continuous scores or binary classes.
#[derive(Debug, Clone, PartialEq)]
pub enum RowLabels {
    Continuous(Vec<f64>),
    Binary(Vec<bool>),
}

impl RowLabels {
    fn as_labels(&self) -> Labels<'_> {
        match self {
            RowLabels::Continuous(y) => Labels::Continuous(y),
            RowLabels::Binary(y) => Labels::Binary(y),
        }
    }

    fn as_f64(&self) -> Vec<f64> {
        match self {
            RowLabels::Continuous(y) => y.clone(),
            RowLabels::Binary(y) => y.iter().map(|&b| f64::from(u8::from(b))).collect(),
        }
    }

    fn subset(&self, rows: &[usize]) -> RowLabels {
        match self {
            RowLabels::Continuous(y) => RowLabels::Continuous(rows.iter().map(|&r| y[r]).collect()),
            RowLabels::Binary(y) => RowLabels::Binary(rows.iter().map(|&r| y[r]).collect()),
        }
    }
}

/// Ground truth of one target per driver.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverTargets {
    pub target: Target,
    pub scores: BTreeMap<String, f64>,
    /// Median-split classes for questionnaire items.
    pub classes: Option<BTreeMap<String, bool>>,
}

impl DriverTargets {
    pub fn new(traits: &TraitTable, target: Target, drivers: &[String]) -> Result<DriverTargets> {
        let mut scores = BTreeMap::new();
        for d in drivers {
            let s = traits.score(d, target).ok_or_else(|| EvalError::MissingTrait {
                driver: d.clone(),
                target,
            })?;
            scores.insert(d.clone(), s);
        }
        let classes = if target.is_regression() {
            None
        } else {
            let values: Vec<f64> = scores.values().copied().collect();
            let labels = median_split(&values).map_err(|_| EvalError::DegenerateTarget(target.name()))?;
            Some(scores.keys().cloned().zip(labels).collect())
        };
        Ok(DriverTargets {
            target,
            scores,
            classes,
        })
    }

    pub fn row_labels<S: AsRef<str>>(&self, groups: &[S]) -> RowLabels {
        match &self.classes {
            Some(c) => RowLabels::Binary(groups.iter().map(|g| c[g.as_ref()]).collect()),
            None => RowLabels::Continuous(groups.iter().map(|g| self.scores[g.as_ref()]).collect()),
        }
    }
}

/// Chosen hyperparameter plus the inner score of every grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub value: f64,
    pub inner_scores: Vec<Option<f64>>,
    pub notes: Vec<String>,
}

fn model_err(context: impl Into<String>) -> impl FnOnce(ModelError) -> EvalError {
    let context = context.into();
    move |source| EvalError::Model { context, source }
}

/// Test scores for every grid value, sharing work along the grid where the
/// model allows it.
fn grid_scores(
    x_train: &DMatrix<f64>,
    y_train: &RowLabels,
    x_test: &DMatrix<f64>,
    template: &ModelSpec,
    grid: &[f64],
    notes: &mut Vec<String>,
) -> std::result::Result<Vec<Vec<f64>>, ModelError> {
    match (template.kind, y_train) {
        (ModelKind::Ridge, RowLabels::Continuous(y)) => models::ridge_path(x_train, y, grid)?
            .iter()
            .map(|m| m.score(x_test))
            .collect(),
        (ModelKind::Lasso, RowLabels::Continuous(y)) => models::lasso_path(x_train, y, grid)?
            .into_iter()
            .map(|r| {
                let m = usable(r, notes)?;
                m.score(x_test)
            })
            .collect(),
        (ModelKind::RandomForestReg | ModelKind::RandomForestClf, _) => {
            let deepest = grid.iter().cloned().fold(0.0, f64::max);
            let spec = ModelSpec {
                param: deepest,
                ..template.clone()
            };
            let m = models::fit(&spec, x_train, y_train.as_labels())?;
            grid.iter().map(|&d| m.score_at_depth(x_test, d as usize)).collect()
        }
        _ => grid
            .iter()
            .map(|&c| {
                let spec = ModelSpec {
                    param: c,
                    ..template.clone()
                };
                models::fit(&spec, x_train, y_train.as_labels())?.score(x_test)
            })
            .collect(),
    }
}

/// A converged model, or the last iterate of a non-converged one with a note.
fn usable(r: std::result::Result<FittedModel, ModelError>, notes: &mut Vec<String>) -> std::result::Result<FittedModel, ModelError> {
    match r {
        Err(ModelError::NotConverged { sweeps, last }) => {
            notes.push(format!(
                "{} (param {}) stopped after {sweeps} sweeps; using last iterate",
                last.spec.kind, last.spec.param
            ));
            Ok(*last)
        }
        other => other,
    }
}

fn driver_metric(kind: ModelKind, preds: &[(String, f64)], targets: &DriverTargets) -> Option<f64> {
    if preds.is_empty() {
        return None;
    }
    match &targets.classes {
        None => {
            let p: Vec<f64> = preds.iter().map(|(_, v)| *v).collect();
            let t: Vec<f64> = preds.iter().map(|(d, _)| targets.scores[d]).collect();
            rmse(&p, &t).ok()
        }
        Some(classes) => {
            let b = kind.decision_boundary();
            let p: Vec<bool> = preds.iter().map(|(_, v)| *v > b).collect();
            let t: Vec<bool> = preds.iter().map(|(d, _)| classes[d]).collect();
            macro_f1(&p, &t).ok()
        }
    }
}

/// Inner leave-one-person-out over the training drivers. Minimizes pooled
/// per-driver RMSE (regression) or maximizes macro F1 (classification).
pub fn tune_hyperparams(
    x: &DMatrix<f64>,
    groups: &[String],
    targets: &DriverTargets,
    template: &ModelSpec,
    grid: &[f64],
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(EvalError::Config("empty hyperparameter grid".into()));
    }
    let mut notes = Vec::new();
    if grid.len() == 1 {
        return Ok(TuneOutcome {
            value: grid[0],
            inner_scores: vec![None],
            notes,
        });
    }
    let plan = make_folds(groups)?;
    let labels = targets.row_labels(groups);
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    let mut pooled_groups: Vec<&str> = Vec::new();
    let mut skipped = 0;
    for fold in &plan.folds {
        let xt = x.select_rows(fold.train_rows.iter());
        let xv = x.select_rows(fold.test_rows.iter());
        let yt = labels.subset(&fold.train_rows);
        match grid_scores(&xt, &yt, &xv, template, grid, &mut notes) {
            Ok(scores) => {
                for (g, s) in scores.into_iter().enumerate() {
                    pooled[g].extend(s);
                }
                pooled_groups.extend(fold.test_rows.iter().map(|&r| groups[r].as_str()));
            }
            Err(ModelError::DegenerateLabels) => skipped += 1,
            Err(e) => return Err(model_err(format!("inner fold {}", fold.test_driver))(e)),
        }
    }
    if skipped > 0 {
        notes.push(format!("{skipped} inner folds skipped: single-class training labels"));
    }
    let inner_scores: Vec<Option<f64>> = pooled
        .iter()
        .map(|vals| driver_metric(template.kind, &aggregate_sessions(&pooled_groups, vals), targets))
        .collect();
    let minimize = targets.classes.is_none();
    let value = match select_best(&inner_scores, minimize) {
        Some(i) => grid[i],
        None => {
            notes.push("every inner fold degenerate; using the grid midpoint".into());
            grid[(grid.len() - 1) / 2]
        }
    };
    Ok(TuneOutcome {
        value,
        inner_scores,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub test_driver: String,
    /// Chosen hyperparameter; `None` when the fold fell back to a constant.
    pub chosen: Option<f64>,
    pub n_survivors: usize,
    #[serde(skip)]
    pub survivors: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverPrediction {
    pub driver_id: String,
    pub truth: f64,
    /// Regression prediction or aggregated classifier score.
    pub prediction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_class: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_class: Option<bool>,
}

/// Metrics and per-fold details of one model on one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub pearson_r: Option<f64>,
    pub p_value: Option<f64>,
    pub rmse: Option<f64>,
    pub macro_f1: Option<f64>,
    pub predictions: Vec<DriverPrediction>,
    pub folds: Vec<FoldRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn fallback_scores(kind: ModelKind, y: &RowLabels, n: usize) -> Vec<f64> {
    let v = match y {
        RowLabels::Continuous(y) => y.iter().sum::<f64>() / y.len() as f64,
        RowLabels::Binary(y) => {
            let frac = y.iter().filter(|&&b| b).count() as f64 / y.len() as f64;
            if kind == ModelKind::LinearSvm {
                2.0 * frac - 1.0
            } else {
                frac
            }
        }
    };
    vec![v; n]
}

fn run_fold(
    matrix: &FeatureMatrix,
    groups: &[String],
    labels: &RowLabels,
    targets: &DriverTargets,
    fold: &Fold,
    template: &ModelSpec,
    grid: &[f64],
    threshold: f64,
) -> Result<(Vec<f64>, FoldRecord)> {
    let x_train = matrix.values.select_rows(fold.train_rows.iter());
    let y_train = labels.subset(&fold.train_rows);
    let survivors = filter_features(&x_train, &y_train.as_f64(), threshold);
    let mut record = FoldRecord {
        test_driver: fold.test_driver.clone(),
        chosen: None,
        n_survivors: survivors.len(),
        survivors: survivors.clone(),
        notes: Vec::new(),
    };
    if survivors.is_empty() {
        record.notes.push("no feature passed the correlation filter; predicting the training baseline".into());
        return Ok((fallback_scores(template.kind, &y_train, fold.test_rows.len()), record));
    }
    let xs = x_train.select_columns(survivors.iter());
    let train_groups: Vec<String> = fold.train_rows.iter().map(|&r| groups[r].clone()).collect();
    let tuned = tune_hyperparams(&xs, &train_groups, targets, template, grid)?;
    record.notes.extend(tuned.notes);
    record.chosen = Some(tuned.value);
    let spec = ModelSpec {
        param: tuned.value,
        ..template.clone()
    };
    let x_test = matrix
        .values
        .select_rows(fold.test_rows.iter())
        .select_columns(survivors.iter());
    let fitted = match models::fit(&spec, &xs, y_train.as_labels()) {
        Err(ModelError::DegenerateLabels) => {
            record.notes.push("single-class training labels; predicting the majority".into());
            record.chosen = None;
            return Ok((fallback_scores(template.kind, &y_train, fold.test_rows.len()), record));
        }
        r => usable(r, &mut record.notes).map_err(model_err(format!("fold {}", fold.test_driver)))?,
    };
    let scores = fitted
        .score(&x_test)
        .map_err(model_err(format!("fold {}", fold.test_driver)))?;
    Ok((scores, record))
}

/// Outer leave-one-person-out on one feature matrix: filter, tune, fit and
/// predict per fold, then aggregate per driver and score.
pub fn evaluate_matrix(
    matrix: &FeatureMatrix,
    targets: &DriverTargets,
    template: &ModelSpec,
    grid: &[f64],
    threshold: f64,
) -> Result<ModelEvaluation> {
    let groups: Vec<String> = matrix.rows.iter().map(|k| k.driver_id.clone()).collect();
    let plan = make_folds(&groups)?;
    let labels = targets.row_labels(&groups);
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let outcomes: Vec<(Vec<f64>, FoldRecord)> = plan
        .folds
        .par_iter()
        .map(|fold| run_fold(matrix, &groups, &labels, targets, fold, template, &grid, threshold))
        .collect::<Result<_>>()?;

    let mut session_scores = vec![0.0; groups.len()];
    let mut folds = Vec::with_capacity(outcomes.len());
    for (fold, (scores, record)) in plan.folds.iter().zip(outcomes) {
        for (&r, s) in fold.test_rows.iter().zip(scores) {
            session_scores[r] = s;
        }
        folds.push(record);
    }
    let aggregated = aggregate_sessions(&groups, &session_scores);
    let boundary = template.kind.decision_boundary();
    let predictions: Vec<DriverPrediction> = aggregated
        .iter()
        .map(|(d, v)| DriverPrediction {
            driver_id: d.clone(),
            truth: targets.scores[d],
            prediction: *v,
            truth_class: targets.classes.as_ref().map(|c| c[d]),
            predicted_class: targets.classes.as_ref().map(|_| *v > boundary),
        })
        .collect();

    let mut notes = Vec::new();
    let mut eval = ModelEvaluation {
        pearson_r: None,
        p_value: None,
        rmse: None,
        macro_f1: None,
        predictions,
        folds,
        notes: Vec::new(),
    };
    let p: Vec<f64> = eval.predictions.iter().map(|d| d.prediction).collect();
    let t: Vec<f64> = eval.predictions.iter().map(|d| d.truth).collect();
    if targets.classes.is_none() {
        match pearson_r(&p, &t) {
            Ok(r) => {
                eval.pearson_r = Some(r);
                eval.p_value = pearson_p_value(r, p.len());
            }
            Err(_) => notes.push("constant predictions; correlation undefined".into()),
        }
        eval.rmse = rmse(&p, &t).ok();
    } else {
        let pc: Vec<bool> = eval.predictions.iter().map(|d| d.predicted_class.unwrap_or(false)).collect();
        let tc: Vec<bool> = eval.predictions.iter().map(|d| d.truth_class.unwrap_or(false)).collect();
        eval.macro_f1 = macro_f1(&pc, &tc).ok();
    }
    eval.notes = notes;
    Ok(eval)
}

fn default_threshold() -> f64 {
    DEFAULT_CORR_THRESHOLD
}

fn default_trees() -> usize {
    models::DEFAULT_TREES
}

fn default_epsilon() -> f64 {
    crate::segmentation::DEFAULT_BRAKE_EPSILON
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub targets: Vec<Target>,
    pub variant: Variant,
    /// Defaults to arterial for variants i/ii; variant iii forces whole.
    #[serde(default)]
    pub road_scope: Option<RoadScope>,
    pub models: Vec<ModelKind>,
    /// Per-kind grid overrides; default grids otherwise.
    #[serde(default)]
    pub grids: BTreeMap<ModelKind, Vec<f64>>,
    #[serde(default = "default_threshold")]
    pub corr_threshold: f64,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub brake_epsilon: f64,
    #[serde(default = "default_true")]
    pub include_whole_pass: bool,
}

impl ExperimentConfig {
    pub fn new(targets: Vec<Target>, variant: Variant, road_scope: RoadScope, models: Vec<ModelKind>) -> Self {
        ExperimentConfig {
            targets,
            variant,
            road_scope: Some(road_scope),
            models,
            grids: BTreeMap::new(),
            corr_threshold: DEFAULT_CORR_THRESHOLD,
            n_trees: models::DEFAULT_TREES,
            seed: 0,
            brake_epsilon: crate::segmentation::DEFAULT_BRAKE_EPSILON,
            include_whole_pass: true,
        }
    }

    pub fn scope(&self) -> RoadScope {
        match (self.variant, self.road_scope) {
            (Variant::Iii, _) => RoadScope::Whole,
            (_, Some(s)) => s,
            (_, None) => RoadScope::Arterial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(EvalError::Config("no targets".into()));
        }
        if self.models.is_empty() {
            return Err(EvalError::Config("no models".into()));
        }
        if let Some(s) = self.road_scope {
            if !self.variant.road_scopes().contains(&s) {
                return Err(EvalError::Config(format!(
                    "variant {} does not support road scope {s}",
                    self.variant
                )));
            }
        }
        if !(self.corr_threshold.is_finite() && (0.0..1.0).contains(&self.corr_threshold)) {
            return Err(EvalError::Config("corr_threshold must lie in [0, 1)".into()));
        }
        for (kind, grid) in &self.grids {
            if grid.is_empty() || grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(EvalError::Config(format!("bad grid for {kind}")));
            }
        }
        if self.n_trees == 0 {
            return Err(EvalError::Config("n_trees must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self, kind: ModelKind) -> Vec<f64> {
        self.grids.get(&kind).cloned().unwrap_or_else(|| kind.grid().to_vec())
    }

    pub fn template(&self, kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            param: kind.grid()[0],
            n_trees: self.n_trees,
            bootstrap: true,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub target: Target,
    pub model: ModelKind,
    pub variant: Variant,
    pub road_scope: RoadScope,
    pub n_features: usize,
    #[serde(flatten)]
    pub evaluation: ModelEvaluation,
}

type MatrixKey = (Variant, RoadScope, bool);

/// Derived sessions and segments of a cohort with cached feature matrices.
pub struct Workbench {
    cohort: Cohort,
    segments: Vec<SegmentSet>,
    mean_arterial: f64,
    cache: Mutex<BTreeMap<MatrixKey, Arc<FeatureMatrix>>>,
}

impl Workbench {
    pub fn new(cohort: Cohort, config: &SegmentConfig) -> Result<Workbench> {
        cohort.route.validate()?;
        let sessions: Vec<DriveSession> = cohort
            .sessions
            .into_iter()
            .map(|s| if s.has_derived() { Ok(s) } else { derive_channels(s) })
            .collect::<std::result::Result<_, SignalError>>()?;
        for s in &sessions {
            if cohort.traits.get(s.driver_id()).is_none() {
                return Err(EvalError::Config(format!("session {} has no trait row", s.key())));
            }
        }
        let labels: Vec<_> = sessions
            .iter()
            .map(|s| (crate::segmentation::classify_frames(s, &cohort.route), s.sample_rate()))
            .collect();
        let mean_arterial = mean_arterial_seconds(labels.iter().map(|(l, r)| (l, *r)))
            .ok_or_else(|| EvalError::Config("empty cohort".into()))?;
        let plan = Variant::I.plan(mean_arterial);
        let segments = sessions
            .par_iter()
            .map(|s| build_segments(s, &cohort.route, &plan, config))
            .collect::<std::result::Result<Vec<_>, SegmentError>>()?;
        Ok(Workbench {
            cohort: Cohort {
                sessions,
                traits: cohort.traits,
                route: cohort.route,
            },
            segments,
            mean_arterial,
            cache: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn cohort(&self) -> &Cohort {
        &self.cohort
    }

    pub fn segments(&self) -> &[SegmentSet] {
        &self.segments
    }

    pub fn mean_arterial(&self) -> f64 {
        self.mean_arterial
    }

    pub fn drivers(&self) -> Vec<String> {
        let mut d: Vec<String> = self.cohort.sessions.iter().map(|s| s.driver_id().to_string()).collect();
        d.sort();
        d.dedup();
        d
    }

    /// Full matrix for a variant and scope, missing values included.
    pub fn raw_features(&self, variant: Variant, scope: RoadScope, include_whole_pass: bool) -> Result<FeatureMatrix> {
        if !variant.road_scopes().contains(&scope) {
            return Err(EvalError::Config(format!("variant {variant} does not support road scope {scope}")));
        }
        let options = FeatureOptions { include_whole_pass };
        Ok(build_feature_matrix(
            &self.cohort.sessions,
            &self.segments,
            &variant.plan(self.mean_arterial),
            scope,
            &options,
        )?)
    }

    /// As [`Workbench::raw_features`] with incomplete columns dropped; cached.
    pub fn features(&self, variant: Variant, scope: RoadScope, include_whole_pass: bool) -> Result<Arc<FeatureMatrix>> {
        let key = (variant, scope, include_whole_pass);
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        let m = Arc::new(drop_missing(&self.raw_features(variant, scope, include_whole_pass)?)?);
        self.cache.lock().expect("cache lock").insert(key, m.clone());
        Ok(m)
    }
}

/// Runs every applicable (target, model) pair of `config` against `traits`.
pub fn run_experiment_with_traits(config: &ExperimentConfig, bench: &Workbench, traits: &TraitTable) -> Result<EvalReport> {
    config.validate()?;
    let scope = config.scope();
    let matrix = bench.features(config.variant, scope, config.include_whole_pass)?;
    let drivers = bench.drivers();
    let mut entries = Vec::new();
    let mut notes = Vec::new();
    for &target in &config.targets {
        let targets = match DriverTargets::new(traits, target, &drivers) {
            Ok(t) => t,
            Err(EvalError::DegenerateTarget(t)) => {
                notes.push(format!("target {t} skipped: all scores identical"));
                continue;
            }
            Err(e) => return Err(e),
        };
        for &kind in &config.models {
            if kind.is_classifier() == target.is_regression() {
                continue;
            }
            let evaluation = evaluate_matrix(
                &matrix,
                &targets,
                &config.template(kind),
                &config.grid(kind),
                config.corr_threshold,
            )?;
            entries.push(EvalEntry {
                target,
                model: kind,
                variant: config.variant,
                road_scope: scope,
                n_features: matrix.n_cols(),
                evaluation,
            });
        }
    }
    Ok(EvalReport { entries, notes })
}

pub fn run_experiment(config: &ExperimentConfig, bench: &Workbench) -> Result<EvalReport> {
    run_experiment_with_traits(config, bench, &bench.cohort.traits)
}
