//! Six-statistic window features and the session × feature matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmentation::{DurationTarget, SegmentSet};
use crate::signals::{ChannelId, DriveSession, SessionKey};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("segment set for unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} has no segment set")]
    MissingSegments(String),
    #[error("segment schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("session {0} lacks channel {1}; derive channels first")]
    MissingChannel(String, ChannelId),
    #[error("every feature column has a missing value")]
    AllMissing,
    #[error("bad feature name `{0}`")]
    BadName(String),
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatId {
    Mean,
    Median,
    Variance,
    Maximum,
    Kurtosis,
    Skewness,
}

impl StatId {
    pub const ALL: [StatId; 6] = [
        StatId::Mean,
        StatId::Median,
        StatId::Variance,
        StatId::Maximum,
        StatId::Kurtosis,
        StatId::Skewness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatId::Mean => "mean",
            StatId::Median => "median",
            StatId::Variance => "variance",
            StatId::Maximum => "maximum",
            StatId::Kurtosis => "kurtosis",
            StatId::Skewness => "skewness",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for StatId {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self> {
        StatId::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| FeatureError::BadName(s.to_string()))
    }
}

/// The six window statistics; `None` marks a missing value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats6([Option<f64>; 6]);

impl Stats6 {
    pub fn get(&self, stat: StatId) -> Option<f64> {
        self.0[stat.index()]
    }
}

/// Mean, median (midpoint for even length), sample variance (n-1; 0 for a
/// single sample), maximum, adjusted Fisher-Pearson skewness (n >= 3) and
/// adjusted excess kurtosis (n >= 4). Skewness and kurtosis are missing for
/// zero-variance input; an empty series is missing throughout.
pub fn stats6(series: &[f64]) -> Stats6 {
    let n = series.len();
    if n == 0 {
        return Stats6([None; 6]);
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let mut maximum = f64::NEG_INFINITY;
    let mut max_dev = 0.0f64;
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    for &x in series {
        maximum = maximum.max(x);
        let d = x - mean;
        max_dev = max_dev.max(d.abs());
        let d2 = d * d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }
    let variance = if n > 1 { s2 / (nf - 1.0) } else { 0.0 };

    let mut sorted = series.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };

    // rounding in the mean can leave sub-ulp deviations on a constant series
    let flat = max_dev <= 4.0 * f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE);
    let (m2, m3, m4) = (s2 / nf, s3 / nf, s4 / nf);
    let skewness = (!flat && n >= 3).then(|| {
        let g1 = m3 / m2.powf(1.5);
        g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
    });
    let kurtosis = (!flat && n >= 4).then(|| {
        let g2 = m4 / (m2 * m2) - 3.0;
        ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0))
    });

    let mut out = [None; 6];
    out[StatId::Mean.index()] = Some(mean);
    out[StatId::Median.index()] = Some(median);
    out[StatId::Variance.index()] = Some(variance);
    out[StatId::Maximum.index()] = Some(maximum);
    out[StatId::Kurtosis.index()] = kurtosis;
    out[StatId::Skewness.index()] = skewness;
    Stats6(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Before,
    After,
    Whole,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Before => "before",
            Phase::After => "after",
            Phase::Whole => "whole",
        }
    }
}

/// Where in the drive a feature is computed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SegmentScope {
    Arterial {
        duration: DurationTarget,
        window: usize,
    },
    Intersection {
        id: String,
        phase: Phase,
    },
    /// The whole drive, ignoring road labels.
    Drive,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureName {
    pub scope: SegmentScope,
    pub channel: ChannelId,
    pub stat: StatId,
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.scope {
            SegmentScope::Arterial { duration, window } => {
                write!(f, "art.{duration}.w{window:02}.")?
            }
            SegmentScope::Intersection { id, phase } => write!(f, "int.{id}.{}.", phase.name())?,
            SegmentScope::Drive => f.write_str("whole.")?,
        }
        write!(f, "{}.{}", self.channel.name(), self.stat.name())
    }
}

impl FromStr for FeatureName {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || FeatureError::BadName(s.to_string());
        let (rest, stat) = s.rsplit_once('.').ok_or_else(bad)?;
        let (rest, channel) = rest.rsplit_once('.').ok_or_else(bad)?;
        let stat: StatId = stat.parse().map_err(|_| bad())?;
        let channel: ChannelId = channel.parse().map_err(|_| bad())?;
        let scope = if rest == "whole" {
            SegmentScope::Drive
        } else if let Some(art) = rest.strip_prefix("art.") {
            let (duration, window) = art.split_once('.').ok_or_else(bad)?;
            let window = window.strip_prefix('w').ok_or_else(bad)?;
            SegmentScope::Arterial {
                duration: duration.parse().map_err(|_| bad())?,
                window: window.parse().map_err(|_| bad())?,
            }
        } else if let Some(int) = rest.strip_prefix("int.") {
            let (id, phase) = int.rsplit_once('.').ok_or_else(bad)?;
            let phase = match phase {
                "before" => Phase::Before,
                "after" => Phase::After,
                "whole" => Phase::Whole,
                _ => return Err(bad()),
            };
            SegmentScope::Intersection {
                id: id.to_string(),
                phase,
            }
        } else {
            return Err(bad());
        };
        Ok(FeatureName {
            scope,
            channel,
            stat,
        })
    }
}

impl Serialize for FeatureName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Road scope a matrix is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadScope {
    Arterial,
    Intersection,
    Whole,
}

impl RoadScope {
    pub fn name(self) -> &'static str {
        match self {
            RoadScope::Arterial => "arterial",
            RoadScope::Intersection => "intersection",
            RoadScope::Whole => "whole",
        }
    }
}

impl FromStr for RoadScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "arterial" => Ok(RoadScope::Arterial),
            "intersection" => Ok(RoadScope::Intersection),
            "whole" => Ok(RoadScope::Whole),
            _ => Err(format!("unknown road scope `{s}`")),
        }
    }
}

impl fmt::Display for RoadScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Add whole-pass statistics next to before/after at intersections.
    pub include_whole_pass: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            include_whole_pass: true,
        }
    }
}

/// Column schema for a scope. Depends only on the window plan, the zone ids,
/// the phases and the fixed channel and statistic lists.
pub fn feature_layout(
    scope: RoadScope,
    plan: &BTreeMap<DurationTarget, usize>,
    intersection_ids: &[String],
    options: &FeatureOptions,
) -> Vec<FeatureName> {
    let segments: Vec<SegmentScope> = match scope {
        RoadScope::Arterial => plan
            .iter()
            .flat_map(|(&duration, &k)| {
                (0..k).map(move |window| SegmentScope::Arterial { duration, window })
            })
            .collect(),
        RoadScope::Intersection => {
            let mut phases = vec![Phase::Before, Phase::After];
            if options.include_whole_pass {
                phases.push(Phase::Whole);
            }
            intersection_ids
                .iter()
                .flat_map(|id| {
                    phases.iter().map(move |&phase| SegmentScope::Intersection {
                        id: id.clone(),
                        phase,
                    })
                })
                .collect()
        }
        RoadScope::Whole => vec![SegmentScope::Drive],
    };
    segments
        .into_iter()
        .flat_map(|scope| {
            ChannelId::ALL.into_iter().flat_map(move |channel| {
                let scope = scope.clone();
                StatId::ALL.into_iter().map(move |stat| FeatureName {
                    scope: scope.clone(),
                    channel,
                    stat,
                })
            })
        })
        .collect()
}

/// Sessions × named features. `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<SessionKey>,
    pub columns: Vec<FeatureName>,
    pub values: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.values[(row, col)].is_nan()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: self.rows.clone(),
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            values: self.values.select_columns(cols.iter()),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("session_id");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.to_string());
        }
        out.push('\n');
        for (r, key) in self.rows.iter().enumerate() {
            out.push_str(&key.to_string());
            for c in 0..self.n_cols() {
                out.push(',');
                let v = self.values[(r, c)];
                if !v.is_nan() {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| FeatureError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let err = |message: String| FeatureError::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
        if headers.get(0) != Some("session_id") {
            return Err(err("first column must be `session_id`".into()));
        }
        let columns = headers
            .iter()
            .skip(1)
            .map(str::parse)
            .collect::<Result<Vec<FeatureName>>>()?;
        let mut rows = Vec::new();
        let mut data = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| err(e.to_string()))?;
            let key: SessionKey = record[0].parse().map_err(err)?;
            rows.push(key);
            for field in record.iter().skip(1) {
                let v = if field.is_empty() {
                    f64::NAN
                } else {
                    field
                        .parse()
                        .map_err(|_| err(format!("bad value `{field}`")))?
                };
                data.push(v);
            }
        }
        let values = DMatrix::from_row_slice(rows.len(), columns.len(), &data);
        Ok(FeatureMatrix {
            rows,
            columns,
            values,
        })
    }
}

/// Drops every column with at least one missing value; survivors keep order.
pub fn drop_missing(matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    let keep: Vec<usize> = (0..matrix.n_cols())
        .filter(|&c| matrix.values.column(c).iter().all(|v| !v.is_nan()))
        .collect();
    if keep.is_empty() && matrix.n_cols() > 0 {
        return Err(FeatureError::AllMissing);
    }
    Ok(matrix.select_columns(&keep))
}

fn gather(series: &[f64], frames: &[usize]) -> Vec<f64> {
    frames.iter().map(|&i| series[i]).collect()
}

fn session_row(
    session: &DriveSession,
    segments: &SegmentSet,
    scope: RoadScope,
    plan: &BTreeMap<DurationTarget, usize>,
    intersection_ids: &[String],
    options: &FeatureOptions,
) -> Result<Vec<f64>> {
    let mut row = Vec::new();
    let mut push_segment = |frames: Option<Vec<usize>>| -> Result<()> {
        for channel in ChannelId::ALL {
            let series = session
                .channel(channel)
                .ok_or_else(|| FeatureError::MissingChannel(session.key().to_string(), channel))?;
            let stats = match &frames {
                Some(f) => stats6(&gather(series, f)),
                None => stats6(&[]),
            };
            row.extend(StatId::ALL.iter().map(|&s| stats.get(s).unwrap_or(f64::NAN)));
        }
        Ok(())
    };
    match scope {
        RoadScope::Arterial => {
            let art = &segments.arterial;
            for (duration, &k) in plan {
                let windows = art.windows.get(duration).ok_or_else(|| {
                    FeatureError::SchemaMismatch(format!(
                        "session {} has no windows for {duration}",
                        segments.key
                    ))
                })?;
                match windows {
                    Some(ranges) if ranges.len() == k => {
                        for r in ranges {
                            push_segment(Some(art.frames[r.clone()].to_vec()))?;
                        }
                    }
                    Some(ranges) => {
                        return Err(FeatureError::SchemaMismatch(format!(
                            "session {} has {} windows for {duration}, plan says {k}",
                            segments.key,
                            ranges.len()
                        )))
                    }
                    None => {
                        for _ in 0..k {
                            push_segment(None)?;
                        }
                    }
                }
            }
        }
        RoadScope::Intersection => {
            for id in intersection_ids {
                let split = segments.intersections.get(id).ok_or_else(|| {
                    FeatureError::SchemaMismatch(format!(
                        "session {} lacks intersection `{id}`",
                        segments.key
                    ))
                })?;
                let range = |r: std::ops::Range<usize>| Some(r.collect::<Vec<_>>());
                match split {
                    Some(s) => {
                        push_segment(range(s.before.clone()))?;
                        push_segment(range(s.after.clone()))?;
                        if options.include_whole_pass {
                            push_segment(range(s.pass.clone()))?;
                        }
                    }
                    None => {
                        let phases = if options.include_whole_pass { 3 } else { 2 };
                        for _ in 0..phases {
                            push_segment(None)?;
                        }
                    }
                }
            }
        }
        RoadScope::Whole => push_segment(Some((0..session.len()).collect()))?,
    }
    Ok(row)
}

/// One row per session, columns from [`feature_layout`]. Segments too short
/// for a statistic leave it missing. Sessions pair with segment sets by key.
pub fn build_feature_matrix(
    sessions: &[DriveSession],
    segment_sets: &[SegmentSet],
    plan: &BTreeMap<DurationTarget, usize>,
    scope: RoadScope,
    options: &FeatureOptions,
) -> Result<FeatureMatrix> {
    let by_key: BTreeMap<&SessionKey, &SegmentSet> =
        segment_sets.iter().map(|s| (&s.key, s)).collect();
    if let Some(unknown) = segment_sets
        .iter()
        .find(|s| !sessions.iter().any(|x| x.key() == &s.key))
    {
        return Err(FeatureError::UnknownSession(unknown.key.to_string()));
    }
    let intersection_ids: Vec<String> = segment_sets
        .first()
        .map(|s| s.intersections.keys().cloned().collect())
        .unwrap_or_default();
    for s in segment_sets {
        if !s.intersections.keys().eq(intersection_ids.iter()) {
            return Err(FeatureError::SchemaMismatch(format!(
                "session {} has a different intersection set",
                s.key
            )));
        }
    }
    let columns = feature_layout(scope, plan, &intersection_ids, options);

    let rows: Vec<Vec<f64>> = sessions
        .par_iter()
        .map(|session| {
            let segments = by_key
                .get(session.key())
                .ok_or_else(|| FeatureError::MissingSegments(session.key().to_string()))?;
            session_row(session, segments, scope, plan, &intersection_ids, options)
        })
        .collect::<Result<_>>()?;

    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(FeatureMatrix {
        rows: sessions.iter().map(|s| s.key().clone()).collect(),
        values: DMatrix::from_row_slice(sessions.len(), columns.len(), &flat),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::DurationGrid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook formulas, written out independently of `stats6`.
    fn oracle_variance(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    fn oracle_kurtosis(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let s = oracle_variance(x).sqrt();
        let sum4: f64 = x.iter().map(|v| ((v - mean) / s).powi(4)).sum();
        n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0)) * sum4
            - 3.0 * (n - 1.0).powi(2) / ((n - 2.0) * (n - 3.0))
    }

    #[test]
    fn constant_series() {
        let s = stats6(&[2.5; 4]);
        assert_eq!(s.get(StatId::Mean), Some(2.5));
        assert_eq!(s.get(StatId::Median), Some(2.5));
        assert_eq!(s.get(StatId::Variance), Some(0.0));
        assert_eq!(s.get(StatId::Maximum), Some(2.5));
        assert_eq!(s.get(StatId::Skewness), None);
        assert_eq!(s.get(StatId::Kurtosis), None);
        let s = stats6(&[0.1; 7]);
        assert_eq!(s.get(StatId::Skewness), None);
    }

    #[test]
    fn one_to_four() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let s = stats6(&x);
        assert_eq!(s.get(StatId::Mean), Some(2.5));
        assert_eq!(s.get(StatId::Median), Some(2.5));
        assert_eq!(s.get(StatId::Maximum), Some(4.0));
        assert!(s.get(StatId::Skewness).unwrap().abs() < 1e-15);
        assert!((s.get(StatId::Variance).unwrap() - oracle_variance(&x)).abs() < 1e-12);
        // 5/3 and -1.2 by hand
        assert!((oracle_variance(&x) - 5.0 / 3.0).abs() < 1e-12);
        assert!((oracle_kurtosis(&x) + 1.2).abs() < 1e-12);
        assert!((s.get(StatId::Kurtosis).unwrap() - oracle_kurtosis(&x)).abs() < 1e-12);
    }

    #[test]
    fn short_series_conventions() {
        assert!(StatId::ALL.iter().all(|&st| stats6(&[]).get(st).is_none()));
        let one = stats6(&[3.0]);
        assert_eq!(one.get(StatId::Variance), Some(0.0));
        assert_eq!(one.get(StatId::Skewness), None);
        let two = stats6(&[1.0, 3.0]);
        assert_eq!(two.get(StatId::Median), Some(2.0));
        assert_eq!(two.get(StatId::Skewness), None);
        let three = stats6(&[1.0, 2.0, 9.0]);
        assert!(three.get(StatId::Skewness).is_some());
        assert_eq!(three.get(StatId::Kurtosis), None);
    }

    proptest! {
        #[test]
        fn stats_ignore_sample_order(mut x in prop::collection::vec(-50.0f64..50.0, 4..60), seed in any::<u64>()) {
            let a = stats6(&x);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..x.len()).rev() {
                x.swap(i, rng.random_range(0..=i));
            }
            let b = stats6(&x);
            for st in StatId::ALL {
                match (a.get(st), b.get(st)) {
                    (Some(u), Some(v)) => prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs())),
                    (u, v) => prop_assert_eq!(u, v),
                }
            }
        }

        #[test]
        fn stats_follow_affine_maps(
            x in prop::collection::vec(-10.0f64..10.0, 5..60),
            a in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
            b in -100.0f64..100.0,
        ) {
            let s = stats6(&x);
            prop_assume!(s.get(StatId::Skewness).is_some());
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let t = stats6(&y);
            let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * (1.0 + u.abs().max(v.abs()));
            prop_assert!(close(t.get(StatId::Mean).unwrap(), a * s.get(StatId::Mean).unwrap() + b));
            prop_assert!(close(t.get(StatId::Variance).unwrap(), a * a * s.get(StatId::Variance).unwrap()));
            prop_assert!(close(t.get(StatId::Skewness).unwrap(), a.signum() * s.get(StatId::Skewness).unwrap()));
            prop_assert!(close(t.get(StatId::Kurtosis).unwrap(), s.get(StatId::Kurtosis).unwrap()));
        }
    }

    #[test]
    fn feature_names_round_trip() {
        for name in [
            "art.d60.w03.steering_angle.kurtosis",
            "art.all.w00.speed.mean",
            "art.d3.w117.accelerator_rate.variance",
            "int.int2.before.brake_pressure.mean",
            "int.int4.whole.lateral_jerk.skewness",
            "whole.fuel_consumption.maximum",
        ] {
            let parsed: FeatureName = name.parse().unwrap();
            assert_eq!(parsed.to_string(), name);
        }
        assert!("art.d60.steering_angle.mean".parse::<FeatureName>().is_err());
        assert!("int.int1.middle.speed.mean".parse::<FeatureName>().is_err());
    }

    #[test]
    fn layout_counts() {
        let all = crate::segmentation::plan_arterial_windows(&DurationGrid::all_only(355.0));
        let ids: Vec<String> = (1..=4).map(|i| format!("int{i}")).collect();
        let opts = FeatureOptions::default();
        assert_eq!(feature_layout(RoadScope::Arterial, &all, &ids, &opts).len(), 78);
        assert_eq!(feature_layout(RoadScope::Intersection, &all, &ids, &opts).len(), 936);
        let two_phase = FeatureOptions {
            include_whole_pass: false,
        };
        assert_eq!(feature_layout(RoadScope::Intersection, &all, &ids, &two_phase).len(), 624);
        assert_eq!(feature_layout(RoadScope::Whole, &all, &ids, &opts).len(), 78);
        let full = crate::segmentation::plan_arterial_windows(&DurationGrid::standard(355.0));
        let names = feature_layout(RoadScope::Arterial, &full, &ids, &opts);
        assert_eq!(names.len(), (1 + 6 + 12 + 24 + 36 + 71 + 118) * 78);
        let unique: std::collections::BTreeSet<String> = names.iter().map(|n| n.to_string()).collect();
        assert_eq!(unique.len(), names.len());
    }

    fn matrix(values: Vec<f64>, rows: usize, cols: usize) -> FeatureMatrix {
        let ids: Vec<String> = (1..=4).map(|i| format!("int{i}")).collect();
        let plan = crate::segmentation::plan_arterial_windows(&DurationGrid::all_only(1.0));
        let names = feature_layout(RoadScope::Intersection, &plan, &ids, &FeatureOptions::default());
        FeatureMatrix {
            rows: (0..rows).map(|i| SessionKey::new(format!("d{i}"), 1)).collect(),
            columns: names[..cols].to_vec(),
            values: DMatrix::from_row_slice(rows, cols, &values),
        }
    }

    #[test]
    fn drop_missing_removes_incomplete_columns() {
        let m = matrix(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, f64::NAN], 4, 2);
        let d = drop_missing(&m).unwrap();
        assert_eq!(d.n_cols(), 1);
        assert_eq!(d.columns[0], m.columns[0]);
        let full = matrix(vec![1.0; 6], 3, 2);
        assert_eq!(drop_missing(&full).unwrap(), full);
        let none = matrix(vec![f64::NAN; 4], 2, 2);
        assert!(matches!(drop_missing(&none), Err(FeatureError::AllMissing)));
    }

    #[test]
    fn drop_missing_matches_column_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (r, c) = (rng.random_range(1..6), rng.random_range(1..30));
            let vals: Vec<f64> = (0..r * c)
                .map(|_| if rng.random_bool(0.05) { f64::NAN } else { rng.random() })
                .collect();
            let m = matrix(vals.clone(), r, c);
            let expected: Vec<usize> = (0..c)
                .filter(|&j| (0..r).all(|i| !vals[i * c + j].is_nan()))
                .collect();
            match drop_missing(&m) {
                Ok(d) => {
                    let got: Vec<_> = d.columns.iter().map(|n| m.columns.iter().position(|x| x == n).unwrap()).collect();
                    assert_eq!(got, expected);
                    assert!(!d.has_missing());
                }
                Err(_) => assert!(expected.is_empty()),
            }
        }
    }

    #[test]
    fn csv_round_trip_keeps_missing() {
        let m = matrix(vec![1.5, f64::NAN, -3.0, 1e-300], 2, 2);
        let f = tempfile::NamedTempFile::new().unwrap();
        m.write_csv(f.path()).unwrap();
        let back = FeatureMatrix::read_csv(f.path()).unwrap();
        assert_eq!(back.rows, m.rows);
        assert_eq!(back.columns, m.columns);
        assert!(back.is_missing(0, 1));
        assert_eq!(back.values[(1, 1)], 1e-300);
    }
}
