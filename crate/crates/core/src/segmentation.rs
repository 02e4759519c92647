//! Road-type labelling, brake-release intersection split and multi-duration
//! arterial windowing.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo;
use crate::signals::{ChannelId, DriveSession, SessionKey};

/// Brake pressure at or below which the pedal counts as released, MPa.
pub const DEFAULT_BRAKE_EPSILON: f64 = 0.02;

/// Reference mean arterial duration of the original cohort, seconds.
pub const REFERENCE_MEAN_ARTERIAL_S: f64 = 355.0;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("{path}: {message}")]
    RouteFile { path: PathBuf, message: String },
    #[error("invalid route map: {0}")]
    InvalidRoute(String),
    #[error("invalid duration grid: {0}")]
    InvalidGrid(String),
    #[error("{available} arterial frames cannot fill {needed} windows")]
    InsufficientData { needed: usize, available: usize },
    #[error("no pass through intersection `{0}`")]
    NoPass(String),
    #[error("brake pressure channel missing")]
    MissingBrake,
    #[error("label vector has {labels} frames, session has {session}")]
    LengthMismatch { labels: usize, session: usize },
}

pub type Result<T> = std::result::Result<T, SegmentError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArterialZone {
    pub polyline: Vec<(f64, f64)>,
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionZone {
    pub id: String,
    pub center: (f64, f64),
    pub radius_m: f64,
}

/// Route zones: the arterial capture corridor plus N disjoint intersection
/// discs, in route order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteMap {
    pub arterial: ArterialZone,
    pub intersections: Vec<IntersectionZone>,
}

impl RouteMap {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SegmentError::InvalidRoute(m));
        if self.arterial.polyline.is_empty() {
            return bad("arterial polyline is empty".into());
        }
        if !(self.arterial.radius_m > 0.0) {
            return bad("arterial radius must be positive".into());
        }
        if self.intersections.is_empty() {
            return bad("at least one intersection zone is required".into());
        }
        for (i, a) in self.intersections.iter().enumerate() {
            if !(a.radius_m > 0.0) {
                return bad(format!("intersection `{}` radius must be positive", a.id));
            }
            for b in &self.intersections[i + 1..] {
                if a.id == b.id {
                    return bad(format!("duplicate intersection id `{}`", a.id));
                }
                if geo::haversine_m(a.center, b.center) <= a.radius_m + b.radius_m {
                    return bad(format!("intersections `{}` and `{}` overlap", a.id, b.id));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: RouteMap =
            serde_json::from_str(text).map_err(|e| SegmentError::InvalidRoute(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SegmentError::RouteFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| SegmentError::RouteFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("route map serializes")
    }

    pub fn intersection_ids(&self) -> impl Iterator<Item = &str> {
        self.intersections.iter().map(|z| z.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoadLabel {
    Arterial,
    /// Index into [`RouteMap::intersections`].
    Intersection(usize),
    Other,
}

/// Per-frame road type of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadLabels {
    pub labels: Vec<RoadLabel>,
    pub warnings: Vec<String>,
}

impl RoadLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Arterial frame indices in temporal order.
    pub fn arterial_frames(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == RoadLabel::Arterial)
            .map(|(i, _)| i)
            .collect()
    }

    /// Maximal contiguous runs labelled `Intersection(zone)`.
    pub fn passes(&self, zone: usize) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, l) in self.labels.iter().enumerate() {
            let inside = *l == RoadLabel::Intersection(zone);
            match (inside, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push(s..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push(s..self.labels.len());
        }
        out
    }
}

/// Labels every frame: inside an intersection disc wins, then the arterial
/// corridor, else `Other`.
pub fn classify_frames(session: &DriveSession, route: &RouteMap) -> RoadLabels {
    let labels: Vec<RoadLabel> = session
        .position()
        .iter()
        .map(|&p| classify_point(p, route))
        .collect();
    let mut warnings = Vec::new();
    if labels.iter().all(|l| *l == RoadLabel::Other) {
        warnings.push(format!("session {}: no frame falls in any route zone", session.key()));
    }
    RoadLabels { labels, warnings }
}

fn classify_point(p: (f64, f64), route: &RouteMap) -> RoadLabel {
    for (i, zone) in route.intersections.iter().enumerate() {
        if geo::haversine_m(p, zone.center) <= zone.radius_m {
            return RoadLabel::Intersection(i);
        }
    }
    if geo::distance_to_polyline_m(p, &route.arterial.polyline) <= route.arterial.radius_m {
        RoadLabel::Arterial
    } else {
        RoadLabel::Other
    }
}

/// Average arterial window length, or the whole arterial stretch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DurationTarget {
    All,
    Seconds(u32),
}

impl DurationTarget {
    pub fn seconds(self) -> Option<u32> {
        match self {
            DurationTarget::All => None,
            DurationTarget::Seconds(s) => Some(s),
        }
    }
}

impl Ord for DurationTarget {
    /// `All` first, then longer windows before shorter ones.
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (DurationTarget::All, DurationTarget::All) => Ordering::Equal,
            (DurationTarget::All, _) => Ordering::Less,
            (_, DurationTarget::All) => Ordering::Greater,
            (DurationTarget::Seconds(a), DurationTarget::Seconds(b)) => b.cmp(a),
        }
    }
}

impl PartialOrd for DurationTarget {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DurationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DurationTarget::All => f.write_str("all"),
            DurationTarget::Seconds(s) => write!(f, "d{s}"),
        }
    }
}

impl FromStr for DurationTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all" {
            return Ok(DurationTarget::All);
        }
        let digits = s.strip_prefix('d').unwrap_or(s);
        match digits.parse::<u32>() {
            Ok(v) if v > 0 => Ok(DurationTarget::Seconds(v)),
            _ => Err(format!("bad duration target `{s}`")),
        }
    }
}

impl Serialize for DurationTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DurationTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Window targets and the cohort mean arterial duration they are sized from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationGrid {
    pub targets: Vec<DurationTarget>,
    pub cohort_mean_arterial: f64,
}

impl DurationGrid {
    /// `[All, 60, 30, 15, 10, 5, 3]` seconds.
    pub fn standard(cohort_mean_arterial: f64) -> Self {
        let mut targets = vec![DurationTarget::All];
        targets.extend([60, 30, 15, 10, 5, 3].map(DurationTarget::Seconds));
        DurationGrid {
            targets,
            cohort_mean_arterial,
        }
    }

    /// The whole arterial stretch only.
    pub fn all_only(cohort_mean_arterial: f64) -> Self {
        DurationGrid {
            targets: vec![DurationTarget::All],
            cohort_mean_arterial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cohort_mean_arterial.is_finite() && self.cohort_mean_arterial > 0.0) {
            return Err(SegmentError::InvalidGrid(
                "cohort mean arterial duration must be positive".into(),
            ));
        }
        if self.targets.is_empty() {
            return Err(SegmentError::InvalidGrid("no window targets".into()));
        }
        let secs: Vec<u32> = self.targets.iter().filter_map(|t| t.seconds()).collect();
        let alls = self.targets.len() - secs.len();
        if alls > 1 || (alls == 1 && self.targets[0] != DurationTarget::All) {
            return Err(SegmentError::InvalidGrid("`All` may appear once, first".into()));
        }
        if secs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(SegmentError::InvalidGrid(
                "window targets must be strictly decreasing".into(),
            ));
        }
        Ok(())
    }
}

/// Window count per duration target. `K(All) = 1`, `K(d) = max(1,
/// round(mean / d))`; one plan serves every session so columns align.
pub fn plan_arterial_windows(grid: &DurationGrid) -> BTreeMap<DurationTarget, usize> {
    grid.targets
        .iter()
        .map(|&t| {
            let k = match t {
                DurationTarget::All => 1,
                DurationTarget::Seconds(d) => {
                    ((grid.cohort_mean_arterial / f64::from(d)).round() as usize).max(1)
                }
            };
            (t, k)
        })
        .collect()
}

/// Splits `n_frames` arterial frames into `k` contiguous near-equal ranges;
/// the first `n_frames % k` ranges take one extra frame.
pub fn partition_frames(n_frames: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k == 0 || n_frames < k {
        return Err(SegmentError::InsufficientData {
            needed: k.max(1),
            available: n_frames,
        });
    }
    let base = n_frames / k;
    let extra = n_frames % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}

/// Windows of a session's arterial frames. Ranges index into
/// [`RoadLabels::arterial_frames`], i.e. the arterial stream with any
/// interleaved non-arterial frames cut out.
pub fn segment_arterial(labels: &RoadLabels, k: usize) -> Result<Vec<Range<usize>>> {
    let n = labels.labels.iter().filter(|l| **l == RoadLabel::Arterial).count();
    partition_frames(n, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitOutcome {
    /// Brake applied and released inside the pass.
    Released,
    /// No frame above the brake threshold; `before` is empty.
    NoBrake,
    /// Braking continues to the end of the pass; `after` is empty.
    NoRelease,
}

/// Intersection pass split at brake release. Ranges are session frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSplit {
    pub pass: Range<usize>,
    pub before: Range<usize>,
    pub after: Range<usize>,
    pub outcome: SplitOutcome,
}

/// Release frame: the first frame after the final braking interval
/// (`brake > epsilon`) whose pressure is back at or below `epsilon`.
pub fn split_pass(brake: &[f64], pass: Range<usize>, brake_epsilon: f64) -> IntersectionSplit {
    let last_braking = pass.clone().rev().find(|&i| brake[i] > brake_epsilon);
    match last_braking {
        None => IntersectionSplit {
            before: pass.start..pass.start,
            after: pass.clone(),
            pass,
            outcome: SplitOutcome::NoBrake,
        },
        Some(last) => {
            let release = last + 1;
            let outcome = if release >= pass.end {
                SplitOutcome::NoRelease
            } else {
                SplitOutcome::Released
            };
            IntersectionSplit {
                before: pass.start..release,
                after: release..pass.end,
                pass,
                outcome,
            }
        }
    }
}

/// Splits the first pass through intersection `zone` at brake release.
pub fn split_intersection(
    session: &DriveSession,
    labels: &RoadLabels,
    zone: usize,
    brake_epsilon: f64,
) -> Result<IntersectionSplit> {
    if labels.len() != session.len() {
        return Err(SegmentError::LengthMismatch {
            labels: labels.len(),
            session: session.len(),
        });
    }
    let brake = session
        .channel(ChannelId::BrakePressure)
        .ok_or(SegmentError::MissingBrake)?;
    let pass = labels
        .passes(zone)
        .into_iter()
        .next()
        .ok_or_else(|| SegmentError::NoPass(format!("#{zone}")))?;
    Ok(split_pass(brake, pass, brake_epsilon))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArterialWindows {
    /// Session frame indices of the arterial stream.
    pub frames: Vec<usize>,
    /// Ranges into `frames` per duration target; `None` when the session
    /// has fewer arterial frames than windows.
    pub windows: BTreeMap<DurationTarget, Option<Vec<Range<usize>>>>,
}

/// All segments of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub key: SessionKey,
    pub labels: RoadLabels,
    pub arterial: ArterialWindows,
    /// Per intersection id; `None` when the session never enters the zone.
    pub intersections: BTreeMap<String, Option<IntersectionSplit>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub brake_epsilon: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            brake_epsilon: DEFAULT_BRAKE_EPSILON,
        }
    }
}

/// Labels, windows and splits one session. Later passes through the same
/// intersection are ignored with a warning.
pub fn build_segments(
    session: &DriveSession,
    route: &RouteMap,
    plan: &BTreeMap<DurationTarget, usize>,
    config: &SegmentConfig,
) -> Result<SegmentSet> {
    let labels = classify_frames(session, route);
    let brake = session
        .channel(ChannelId::BrakePressure)
        .ok_or(SegmentError::MissingBrake)?;
    let mut warnings = labels.warnings.clone();

    let frames = labels.arterial_frames();
    let windows = plan
        .iter()
        .map(|(&target, &k)| {
            let split = partition_frames(frames.len(), k).ok();
            if split.is_none() {
                warnings.push(format!(
                    "session {}: {} arterial frames are too few for {k} windows of {target}",
                    session.key(),
                    frames.len()
                ));
            }
            (target, split)
        })
        .collect();

    let mut intersections = BTreeMap::new();
    for (zone_idx, zone) in route.intersections.iter().enumerate() {
        let passes = labels.passes(zone_idx);
        if passes.len() > 1 {
            warnings.push(format!(
                "session {}: {} passes through `{}`, keeping the first",
                session.key(),
                passes.len(),
                zone.id
            ));
        }
        let split = passes
            .into_iter()
            .next()
            .map(|pass| split_pass(brake, pass, config.brake_epsilon));
        match &split {
            None => warnings.push(format!(
                "session {}: never enters intersection `{}`",
                session.key(),
                zone.id
            )),
            Some(s) if s.outcome == SplitOutcome::NoBrake => warnings.push(format!(
                "session {}: no braking inside `{}`",
                session.key(),
                zone.id
            )),
            _ => {}
        }
        intersections.insert(zone.id.clone(), split);
    }

    Ok(SegmentSet {
        key: session.key().clone(),
        labels,
        arterial: ArterialWindows { frames, windows },
        intersections,
        warnings,
    })
}

/// Mean arterial duration over sessions, seconds.
pub fn mean_arterial_seconds<'a>(
    items: impl IntoIterator<Item = (&'a RoadLabels, f64)>,
) -> Option<f64> {
    let (sum, n) = items.into_iter().fold((0.0, 0usize), |(s, n), (labels, rate)| {
        let arterial = labels.labels.iter().filter(|l| **l == RoadLabel::Arterial).count();
        (s + arterial as f64 / rate, n + 1)
    });
    (n > 0).then(|| sum / n as f64)
}
