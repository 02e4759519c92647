//! Sensor and window-duration importance from absolute standardized
//! coefficients of linear regressors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{filter_features, DriverTargets, EvalEntry, EvalError, EvalReport, Variant, Workbench};
use crate::features::{FeatureName, RoadScope, SegmentScope};
use crate::models::{self, FittedModel, Labels, ModelError, ModelKind, ModelSpec};
use crate::segmentation::DurationTarget;
use crate::signals::{ChannelId, Target};

#[derive(Debug, Error)]
pub enum ImportanceError {
    #[error("importance needs a ridge or lasso model, got {0}")]
    UnsupportedKind(ModelKind),
    #[error("model carries no column names")]
    NoColumnNames,
    #[error("total contribution is zero; shares undefined")]
    ZeroTotal,
    #[error("no window count for duration {0}")]
    MissingCount(DurationTarget),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, ImportanceError>;

/// |standardized coefficient| per model column.
pub fn feature_contributions(model: &FittedModel) -> Result<Vec<(FeatureName, f64)>> {
    if !matches!(model.kind(), ModelKind::Ridge | ModelKind::Lasso) {
        return Err(ImportanceError::UnsupportedKind(model.kind()));
    }
    let columns = model.columns.as_ref().ok_or(ImportanceError::NoColumnNames)?;
    let coef = model.coefficients().ok_or(ImportanceError::UnsupportedKind(model.kind()))?;
    Ok(columns.iter().cloned().zip(coef.iter().map(|c| c.abs())).collect())
}

/// Extends contributions to `universe`; absent names contribute 0.
pub fn with_universe(contributions: &[(FeatureName, f64)], universe: &[FeatureName]) -> Vec<(FeatureName, f64)> {
    let known: BTreeMap<&FeatureName, f64> = contributions.iter().map(|(n, v)| (n, *v)).collect();
    universe
        .iter()
        .map(|n| (n.clone(), known.get(n).copied().unwrap_or(0.0)))
        .collect()
}

fn to_percent<K: Ord + Copy>(sums: BTreeMap<K, f64>) -> Result<BTreeMap<K, f64>> {
    let total: f64 = sums.values().sum();
    if !(total > 0.0) {
        return Err(ImportanceError::ZeroTotal);
    }
    Ok(sums.into_iter().map(|(k, v)| (k, 100.0 * v / total)).collect())
}

/// Percentage of total contribution per channel.
pub fn aggregate_by_sensor(contributions: &[(FeatureName, f64)]) -> Result<BTreeMap<ChannelId, f64>> {
    let mut sums = BTreeMap::new();
    for (name, v) in contributions {
        *sums.entry(name.channel).or_insert(0.0) += v;
    }
    to_percent(sums)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationShares {
    pub unnormalized: BTreeMap<DurationTarget, f64>,
    /// Per-duration sums divided by the window count K(d), then rescaled.
    pub normalized: BTreeMap<DurationTarget, f64>,
}

/// Shares per arterial duration; non-arterial features are ignored.
pub fn aggregate_by_duration(
    contributions: &[(FeatureName, f64)],
    window_counts: &BTreeMap<DurationTarget, usize>,
) -> Result<DurationShares> {
    let mut sums: BTreeMap<DurationTarget, f64> = window_counts.keys().map(|&d| (d, 0.0)).collect();
    for (name, v) in contributions {
        if let SegmentScope::Arterial { duration, .. } = name.scope {
            *sums.get_mut(&duration).ok_or(ImportanceError::MissingCount(duration))? += v;
        }
    }
    let normalized = sums.iter().map(|(d, v)| (*d, v / window_counts[d] as f64)).collect();
    Ok(DurationShares {
        unnormalized: to_percent(sums)?,
        normalized: to_percent(normalized)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetImportance {
    pub target: Target,
    pub model: ModelKind,
    pub variant: Variant,
    pub road_scope: RoadScope,
    /// Hyperparameter of the all-sessions refit.
    pub param: f64,
    pub n_survivors: usize,
    pub sensor_shares: BTreeMap<ChannelId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_shares: Option<DurationShares>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TargetImportance {
    /// Channels by descending share; ties in channel order.
    pub fn top_sensors(&self, k: usize) -> Vec<(ChannelId, f64)> {
        let mut v: Vec<(ChannelId, f64)> = self.sensor_shares.iter().map(|(c, s)| (*c, *s)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(k);
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub targets: Vec<TargetImportance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ImportanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("importance report serializes")
    }

    /// Top-k sensors per target: `target,model,rank,sensor,share`.
    pub fn sensors_csv(&self, k: usize) -> String {
        let mut out = String::from("target,model,variant,road_scope,rank,sensor,share\n");
        for t in &self.targets {
            for (rank, (c, s)) in t.top_sensors(k).into_iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{c},{s}\n",
                    t.target,
                    t.model,
                    t.variant,
                    t.road_scope,
                    rank + 1
                ));
            }
        }
        out
    }

    /// One row per (target, duration) with both share kinds.
    pub fn durations_csv(&self) -> String {
        let mut out = String::from("target,model,duration,unnormalized,normalized\n");
        for t in &self.targets {
            let Some(d) = &t.duration_shares else { continue };
            for (dur, u) in &d.unnormalized {
                out.push_str(&format!("{},{},{dur},{u},{}\n", t.target, t.model, d.normalized[dur]));
            }
        }
        out
    }
}

/// Most frequent chosen value across folds; ties go to the smaller value.
pub fn modal_parameter(entry: &EvalEntry) -> Option<f64> {
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for f in &entry.evaluation.folds {
        let Some(c) = f.chosen else { continue };
        match counts.iter_mut().find(|(v, _)| *v == c) {
            Some(e) => e.1 += 1,
            None => counts.push((c, 1)),
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.total_cmp(&b.0)));
    counts.first().map(|(v, _)| *v)
}

/// Refits on every session with the modal hyperparameter and the filter
/// applied to all rows, then aggregates the coefficients.
pub fn entry_importance(bench: &Workbench, entry: &EvalEntry, corr_threshold: f64, include_whole_pass: bool) -> Result<TargetImportance> {
    if !matches!(entry.model, ModelKind::Ridge | ModelKind::Lasso) {
        return Err(ImportanceError::UnsupportedKind(entry.model));
    }
    let matrix = bench.features(entry.variant, entry.road_scope, include_whole_pass)?;
    let drivers = bench.drivers();
    let targets = DriverTargets::new(&bench.cohort().traits, entry.target, &drivers)?;
    let groups: Vec<&str> = matrix.rows.iter().map(|k| k.driver_id.as_str()).collect();
    let y: Vec<f64> = groups.iter().map(|g| targets.scores[*g]).collect();
    let mut notes = Vec::new();
    let param = modal_parameter(entry).unwrap_or_else(|| {
        notes.push("no fold chose a hyperparameter; using the grid midpoint".into());
        let g = entry.model.grid();
        g[(g.len() - 1) / 2]
    });
    let survivors = filter_features(&matrix.values, &y, corr_threshold);
    let contributions = if survivors.is_empty() {
        Vec::new()
    } else {
        let selected = matrix.select_columns(&survivors);
        let spec = ModelSpec::new(entry.model, param);
        let model = match models::fit_named(&spec, &selected, Labels::Continuous(&y)) {
            Err(ModelError::NotConverged { sweeps, last }) => {
                notes.push(format!("refit stopped after {sweeps} sweeps; using last iterate"));
                *last
            }
            r => r?,
        };
        feature_contributions(&model)?
    };
    let full = with_universe(&contributions, &matrix.columns);
    let duration_shares = match entry.road_scope {
        RoadScope::Arterial => Some(aggregate_by_duration(&full, &entry.variant.plan(bench.mean_arterial()))?),
        _ => None,
    };
    Ok(TargetImportance {
        target: entry.target,
        model: entry.model,
        variant: entry.variant,
        road_scope: entry.road_scope,
        param,
        n_survivors: survivors.len(),
        sensor_shares: aggregate_by_sensor(&full)?,
        duration_shares,
        notes,
    })
}

/// Importance for every ridge/lasso entry of an evaluation report. Entries
/// whose refit has no nonzero coefficient are listed in the notes.
pub fn compute_importance(bench: &Workbench, report: &EvalReport, corr_threshold: f64, include_whole_pass: bool) -> Result<ImportanceReport> {
    let mut out = ImportanceReport::default();
    for entry in &report.entries {
        if !matches!(entry.model, ModelKind::Ridge | ModelKind::Lasso) {
            continue;
        }
        match entry_importance(bench, entry, corr_threshold, include_whole_pass) {
            Ok(t) => out.targets.push(t),
            Err(ImportanceError::ZeroTotal) => out.notes.push(format!(
                "{} {} {} {}: all coefficients zero",
                entry.target, entry.model, entry.variant, entry.road_scope
            )),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
