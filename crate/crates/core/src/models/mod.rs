//! Standardized linear models and random forests.

mod classify;
mod forest;
mod linear;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMatrix, FeatureName};

pub use classify::{
    logistic_fit, logistic_fit_traced, logistic_gradient, logistic_objective, svm_fit, svm_fit_with_tolerance,
    svm_objective, svm_subgradient, ClassifierTrace,
};
pub use forest::{forest_fit, Forest, ForestParams, Tree, TreeNode};
pub use linear::{lasso_fit, lasso_fit_traced, lasso_objective, lasso_path, ridge_fit, ridge_path};

/// Regularization grid shared by ridge, lasso, logistic and SVM.
pub const REGULARIZATION_GRID: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];
/// Forest depth grid.
pub const DEPTH_GRID: [f64; 5] = [3.0, 5.0, 7.0, 9.0, 11.0];
pub const DEFAULT_TREES: usize = 200;
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite value in model input")]
    NonFinite,
    #[error("need at least {0} rows")]
    TooFewRows(usize),
    #[error("row count mismatch: {rows} rows, {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("model expects {expected} columns, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("feature names differ from the training columns")]
    ColumnNames,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("{kind} expects {expected} labels")]
    WrongLabels {
        kind: ModelKind,
        expected: &'static str,
    },
    #[error("no convergence after {sweeps} sweeps")]
    NotConverged {
        sweeps: usize,
        last: Box<FittedModel>,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ridge,
    Lasso,
    LogisticL2,
    LinearSvm,
    RandomForestReg,
    RandomForestClf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Ridge,
        ModelKind::Lasso,
        ModelKind::LogisticL2,
        ModelKind::LinearSvm,
        ModelKind::RandomForestReg,
        ModelKind::RandomForestClf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
            ModelKind::LogisticL2 => "logistic_l2",
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::RandomForestReg => "random_forest_reg",
            ModelKind::RandomForestClf => "random_forest_clf",
        }
    }

    pub fn is_classifier(self) -> bool {
        matches!(
            self,
            ModelKind::LogisticL2 | ModelKind::LinearSvm | ModelKind::RandomForestClf
        )
    }

    pub fn is_linear(self) -> bool {
        !matches!(self, ModelKind::RandomForestReg | ModelKind::RandomForestClf)
    }

    /// Default hyperparameter grid for this kind.
    pub fn grid(self) -> &'static [f64] {
        if self.is_linear() {
            &REGULARIZATION_GRID
        } else {
            &DEPTH_GRID
        }
    }

    /// Threshold on the real-valued score above which the class is high.
    pub fn decision_boundary(self) -> f64 {
        match self {
            ModelKind::LinearSvm => 0.0,
            _ => 0.5,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// λ for ridge/lasso, C for logistic/SVM, max depth for forests.
    pub param: f64,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_trees() -> usize {
    DEFAULT_TREES
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn new(kind: ModelKind, param: f64) -> Self {
        ModelSpec {
            kind,
            param,
            n_trees: DEFAULT_TREES,
            bootstrap: true,
            seed: 0,
        }
    }

    /// Checks the hyperparameter is on the default grid.
    pub fn validate(&self) -> Result<()> {
        if !self.kind.grid().contains(&self.param) {
            return Err(ModelError::InvalidHyperparameter(format!(
                "{} = {} is not on the grid {:?}",
                self.kind,
                self.param,
                self.kind.grid()
            )));
        }
        if !self.kind.is_linear() && self.n_trees == 0 {
            return Err(ModelError::InvalidHyperparameter("n_trees = 0".into()));
        }
        Ok(())
    }
}

/// Per-column affine map fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Training mean and population standard deviation, floored at 1e-12.
    pub fn fit(x: &DMatrix<f64>) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let mut center = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            center.push(mean);
            scale.push(var.sqrt().max(SCALE_FLOOR));
        }
        Standardizer { center, scale }
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let (c, s) = (self.center[j], self.scale[j]);
            col.apply(|v| *v = (*v - c) / s);
        }
        z
    }
}

/// Training labels: continuous for regressors, binary for classifiers.
#[derive(Debug, Clone, Copy)]
pub enum Labels<'a> {
    Continuous(&'a [f64]),
    Binary(&'a [bool]),
}

impl Labels<'_> {
    pub fn len(&self) -> usize {
        match self {
            Labels::Continuous(y) => y.len(),
            Labels::Binary(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelBody {
    Linear { coefficients: Vec<f64>, intercept: f64 },
    Forest(Forest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub standardizer: Standardizer,
    /// Training column names, when fitted from a named matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<FeatureName>>,
    pub body: ModelBody,
}

/// Real-valued outputs plus classes for classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// Regression prediction, or classifier score (probability, decision
    /// value or vote share).
    pub values: Vec<f64>,
    pub classes: Option<Vec<bool>>,
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Coefficients in standardized units; `None` for forests.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.body {
            ModelBody::Linear { coefficients, .. } => Some(coefficients),
            ModelBody::Forest(_) => None,
        }
    }

    pub fn intercept(&self) -> Option<f64> {
        match &self.body {
            ModelBody::Linear { intercept, .. } => Some(*intercept),
            ModelBody::Forest(_) => None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.standardizer.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<FittedModel, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Raw scores on unstandardized rows.
    pub fn score(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.score_inner(x, None)
    }

    /// Forest scores using only the top `depth` levels of every tree; equals a
    /// forest fitted with that max depth. Linear models ignore `depth`.
    pub fn score_at_depth(&self, x: &DMatrix<f64>, depth: usize) -> Result<Vec<f64>> {
        self.score_inner(x, Some(depth))
    }

    fn score_inner(&self, x: &DMatrix<f64>, depth: Option<usize>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(ModelError::SchemaMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        let z = self.standardizer.apply(x);
        Ok(match &self.body {
            ModelBody::Linear {
                coefficients,
                intercept,
            } => {
                let beta = nalgebra::DVector::from_column_slice(coefficients);
                let eta = &z * beta;
                eta.iter()
                    .map(|e| {
                        let v = e + intercept;
                        if self.kind() == ModelKind::LogisticL2 {
                            classify::sigmoid(v)
                        } else {
                            v
                        }
                    })
                    .collect()
            }
            ModelBody::Forest(forest) => {
                let d = depth.unwrap_or(usize::MAX);
                forest.predict(&z, d, self.kind() == ModelKind::RandomForestClf)
            }
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Predictions> {
        let values = self.score(x)?;
        Ok(self.wrap(values))
    }

    /// Wraps raw scores with classes for classifiers.
    pub fn wrap(&self, values: Vec<f64>) -> Predictions {
        let classes = self.kind().is_classifier().then(|| {
            let b = self.kind().decision_boundary();
            values.iter().map(|&s| s > b).collect()
        });
        Predictions { values, classes }
    }

    /// As [`FittedModel::predict`], checking feature names too.
    pub fn predict_named(&self, x: &FeatureMatrix) -> Result<Predictions> {
        if let Some(cols) = &self.columns {
            if cols.len() != x.columns.len() {
                return Err(ModelError::SchemaMismatch {
                    expected: cols.len(),
                    got: x.columns.len(),
                });
            }
            if cols != &x.columns {
                return Err(ModelError::ColumnNames);
            }
        }
        self.predict(&x.values)
    }
}

pub(crate) fn check_inputs(x: &DMatrix<f64>, n_labels: usize, min_rows: usize) -> Result<()> {
    if x.nrows() != n_labels {
        return Err(ModelError::LengthMismatch {
            rows: x.nrows(),
            labels: n_labels,
        });
    }
    if x.nrows() < min_rows {
        return Err(ModelError::TooFewRows(min_rows));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(())
}

/// Fits one model from its spec.
pub fn fit(spec: &ModelSpec, x: &DMatrix<f64>, labels: Labels<'_>) -> Result<FittedModel> {
    let wrong = |expected| ModelError::WrongLabels {
        kind: spec.kind,
        expected,
    };
    let mut model = match (spec.kind, labels) {
        (ModelKind::Ridge, Labels::Continuous(y)) => ridge_fit(x, y, spec.param)?,
        (ModelKind::Lasso, Labels::Continuous(y)) => lasso_fit(x, y, spec.param)?,
        (ModelKind::LogisticL2, Labels::Binary(y)) => logistic_fit(x, y, spec.param)?,
        (ModelKind::LinearSvm, Labels::Binary(y)) => svm_fit(x, y, spec.param)?,
        (ModelKind::RandomForestReg, Labels::Continuous(y)) => {
            forest_fit(x, y, &ForestParams::from_spec(spec), false)?
        }
        (ModelKind::RandomForestClf, Labels::Binary(y)) => {
            let y: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
            forest_fit(x, &y, &ForestParams::from_spec(spec), true)?
        }
        (k, _) if k.is_classifier() => return Err(wrong("binary")),
        _ => return Err(wrong("continuous")),
    };
    model.spec = spec.clone();
    Ok(model)
}

/// As [`fit`], recording the training column names.
pub fn fit_named(spec: &ModelSpec, x: &FeatureMatrix, labels: Labels<'_>) -> Result<FittedModel> {
    let mut model = fit(spec, &x.values, labels)?;
    model.columns = Some(x.columns.clone());
    Ok(model)
}
