//! Telemetry and ground-truth data model.
//!
//! A [`DriveSession`] holds one drive of one driver: nine measured in-vehicle
//! channels, the GPS trace, and optionally the four first-difference channels
//! added by [`derive_channels`]. A [`TraitTable`] holds the per-driver
//! ground truth (four cognitive tests, eight DSQ items, ten WSQ items).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling rate assumed when a telemetry file carries no rate header and the
/// rate cannot be inferred from its timestamps.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 10.0;

/// Header of the telemetry CSV, in write order.
pub const TELEMETRY_HEADER: [&str; 12] = [
    "t",
    "steering_deg",
    "eps_torque_nm",
    "acc_fwd_ms2",
    "acc_lat_ms2",
    "yaw_deg_s",
    "speed_kmh",
    "accel_pct",
    "brake_mpa",
    "fuel_ml",
    "lat",
    "lon",
];

const RATE_HEADER_KEY: &str = "sample_rate_hz";

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: missing mandatory column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: timestamp not strictly increasing at row {row} (line {line})")]
    NonMonotoneTimestamp { path: PathBuf, row: usize, line: u64 },
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("derived channel `{0}` already present")]
    AlreadyDerived(ChannelId),
    #[error("parent channel `{0}` missing, cannot derive")]
    MissingParent(ChannelId),
    #[error("duplicate driver_id `{0}`")]
    DuplicateDriver(String),
    #[error("driver `{driver}`: {column} = {value} outside {min}..={max}")]
    OrdinalOutOfRange {
        driver: String,
        column: String,
        value: i64,
        min: u8,
        max: u8,
    },
    #[error("driver `{driver}`: {column} must be strictly positive, got {value}")]
    NonPositiveScore {
        driver: String,
        column: String,
        value: f64,
    },
    #[error("{0}: trait table is empty")]
    EmptyTable(PathBuf),
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// The 13 telemetry channels: nine measured sensors and four first
/// differences of measured sensors.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ChannelId {
    SteeringAngle,
    EpsTorque,
    ForwardAccel,
    LateralAccel,
    YawRate,
    Speed,
    AcceleratorPosition,
    BrakePressure,
    FuelConsumption,
    SteeringVelocity,
    ForwardJerk,
    LateralJerk,
    AcceleratorRate,
}

impl ChannelId {
    pub const ALL: [ChannelId; 13] = [
        ChannelId::SteeringAngle,
        ChannelId::EpsTorque,
        ChannelId::ForwardAccel,
        ChannelId::LateralAccel,
        ChannelId::YawRate,
        ChannelId::Speed,
        ChannelId::AcceleratorPosition,
        ChannelId::BrakePressure,
        ChannelId::FuelConsumption,
        ChannelId::SteeringVelocity,
        ChannelId::ForwardJerk,
        ChannelId::LateralJerk,
        ChannelId::AcceleratorRate,
    ];

    pub const MEASURED: [ChannelId; 9] = [
        ChannelId::SteeringAngle,
        ChannelId::EpsTorque,
        ChannelId::ForwardAccel,
        ChannelId::LateralAccel,
        ChannelId::YawRate,
        ChannelId::Speed,
        ChannelId::AcceleratorPosition,
        ChannelId::BrakePressure,
        ChannelId::FuelConsumption,
    ];

    pub const DERIVED: [ChannelId; 4] = [
        ChannelId::SteeringVelocity,
        ChannelId::ForwardJerk,
        ChannelId::LateralJerk,
        ChannelId::AcceleratorRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::SteeringAngle => "steering_angle",
            ChannelId::EpsTorque => "eps_torque",
            ChannelId::ForwardAccel => "forward_accel",
            ChannelId::LateralAccel => "lateral_accel",
            ChannelId::YawRate => "yaw_rate",
            ChannelId::Speed => "speed",
            ChannelId::AcceleratorPosition => "accelerator_position",
            ChannelId::BrakePressure => "brake_pressure",
            ChannelId::FuelConsumption => "fuel_consumption",
            ChannelId::SteeringVelocity => "steering_velocity",
            ChannelId::ForwardJerk => "forward_jerk",
            ChannelId::LateralJerk => "lateral_jerk",
            ChannelId::AcceleratorRate => "accelerator_rate",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ChannelId::SteeringAngle => "deg",
            ChannelId::EpsTorque => "Nm",
            ChannelId::ForwardAccel | ChannelId::LateralAccel => "m/s^2",
            ChannelId::YawRate | ChannelId::SteeringVelocity => "deg/s",
            ChannelId::Speed => "km/h",
            ChannelId::AcceleratorPosition => "%",
            ChannelId::BrakePressure => "MPa",
            ChannelId::FuelConsumption => "ml",
            ChannelId::ForwardJerk | ChannelId::LateralJerk => "m/s^3",
            ChannelId::AcceleratorRate => "%/s",
        }
    }

    /// Measured channel a derived channel is the first difference of.
    pub fn parent(self) -> Option<ChannelId> {
        match self {
            ChannelId::SteeringVelocity => Some(ChannelId::SteeringAngle),
            ChannelId::ForwardJerk => Some(ChannelId::ForwardAccel),
            ChannelId::LateralJerk => Some(ChannelId::LateralAccel),
            ChannelId::AcceleratorRate => Some(ChannelId::AcceleratorPosition),
            _ => None,
        }
    }

    pub fn is_derived(self) -> bool {
        self.parent().is_some()
    }

    /// Telemetry CSV column for measured channels.
    pub fn csv_column(self) -> Option<&'static str> {
        let col = match self {
            ChannelId::SteeringAngle => "steering_deg",
            ChannelId::EpsTorque => "eps_torque_nm",
            ChannelId::ForwardAccel => "acc_fwd_ms2",
            ChannelId::LateralAccel => "acc_lat_ms2",
            ChannelId::YawRate => "yaw_deg_s",
            ChannelId::Speed => "speed_kmh",
            ChannelId::AcceleratorPosition => "accel_pct",
            ChannelId::BrakePressure => "brake_mpa",
            ChannelId::FuelConsumption => "fuel_ml",
            _ => return None,
        };
        Some(col)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelId {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self> {
        ChannelId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| SignalError::UnknownChannel(s.to_string()))
    }
}

/// Identifies one drive: a driver and the 1-based index of their session.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionKey {
    pub driver_id: String,
    pub session_index: u8,
}

impl SessionKey {
    pub fn new(driver_id: impl Into<String>, session_index: u8) -> Self {
        SessionKey {
            driver_id: driver_id.into(),
            session_index,
        }
    }
}

impl fmt::Display for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.driver_id, self.session_index)
    }
}

impl FromStr for SessionKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (driver, idx) = s
            .rsplit_once('#')
            .ok_or_else(|| format!("session id `{s}` lacks `#<index>`"))?;
        let idx = idx
            .parse()
            .map_err(|_| format!("session id `{s}` has a non-numeric index"))?;
        Ok(SessionKey::new(driver, idx))
    }
}

/// One driver's one drive. Immutable once built; every channel series and
/// the position trace share one length of at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSession {
    key: SessionKey,
    sample_rate: f64,
    timestamps: Vec<f64>,
    channels: BTreeMap<ChannelId, Vec<f64>>,
    position: Vec<(f64, f64)>,
}

impl DriveSession {
    pub fn new(
        key: SessionKey,
        sample_rate: f64,
        timestamps: Vec<f64>,
        channels: BTreeMap<ChannelId, Vec<f64>>,
        position: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SignalError::InvalidSession(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if key.session_index == 0 {
            return Err(SignalError::InvalidSession(
                "session index is 1-based".to_string(),
            ));
        }
        let len = timestamps.len();
        if len < 2 {
            return Err(SignalError::InvalidSession(format!(
                "need at least 2 samples, got {len}"
            )));
        }
        if position.len() != len {
            return Err(SignalError::InvalidSession(format!(
                "position trace has {} samples, channels have {len}",
                position.len()
            )));
        }
        for (id, series) in &channels {
            if series.len() != len {
                return Err(SignalError::InvalidSession(format!(
                    "channel {id} has {} samples, expected {len}",
                    series.len()
                )));
            }
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SignalError::InvalidSession(format!(
                "timestamp not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(DriveSession {
            key,
            sample_rate,
            timestamps,
            channels,
            position,
        })
    }

    pub fn key(&self) -> &SessionKey {
        &self.key
    }

    pub fn driver_id(&self) -> &str {
        &self.key.driver_id
    }

    pub fn session_index(&self) -> u8 {
        self.key.session_index
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Time spanned by the samples, `(len - 1) / sample_rate` seconds.
    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 / self.sample_rate
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn channel(&self, id: ChannelId) -> Option<&[f64]> {
        self.channels.get(&id).map(Vec::as_slice)
    }

    pub fn channels(&self) -> &BTreeMap<ChannelId, Vec<f64>> {
        &self.channels
    }

    pub fn position(&self) -> &[(f64, f64)] {
        &self.position
    }

    pub fn has_derived(&self) -> bool {
        ChannelId::DERIVED.iter().any(|c| self.channels.contains_key(c))
    }

    /// Copy of this session with every timestamp shifted by `offset` seconds.
    pub fn time_shifted(&self, offset: f64) -> DriveSession {
        let mut out = self.clone();
        out.timestamps.iter_mut().for_each(|t| *t += offset);
        out
    }
}

/// Adds the four first-difference channels. `derived[t] = (parent[t] -
/// parent[t-1]) * sample_rate`, with `derived[0] = 0` so every series keeps
/// the session length.
pub fn derive_channels(session: DriveSession) -> Result<DriveSession> {
    if let Some(&c) = ChannelId::DERIVED
        .iter()
        .find(|c| session.channels.contains_key(c))
    {
        return Err(SignalError::AlreadyDerived(c));
    }
    let mut session = session;
    let rate = session.sample_rate;
    for derived in ChannelId::DERIVED {
        let parent = derived.parent().expect("derived channel has a parent");
        let src = session
            .channels
            .get(&parent)
            .ok_or(SignalError::MissingParent(parent))?;
        let mut out = Vec::with_capacity(src.len());
        out.push(0.0);
        out.extend(src.windows(2).map(|w| (w[1] - w[0]) * rate));
        session.channels.insert(derived, out);
    }
    Ok(session)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SignalError + '_ {
    move |source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_rate_header(first_line: &str) -> Option<f64> {
    let body = first_line.strip_prefix('#')?.trim();
    let (key, value) = body.split_once(['=', ':'])?;
    if key.trim() != RATE_HEADER_KEY {
        return None;
    }
    value.trim().parse().ok()
}

/// Loads one telemetry CSV. The file may start with a `# sample_rate_hz=<f>`
/// comment; otherwise the rate is inferred from the timestamp span.
/// Derived channels are not populated.
pub fn load_session(
    telemetry_file: &Path,
    driver_id: &str,
    session_index: u8,
) -> Result<DriveSession> {
    let text = fs::read_to_string(telemetry_file).map_err(io_err(telemetry_file))?;
    let declared_rate = text.lines().next().and_then(parse_rate_header);

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| SignalError::Parse {
            path: telemetry_file.to_path_buf(),
            line: e.position().map_or(1, |p| p.line()),
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SignalError::MissingColumn {
                path: telemetry_file.to_path_buf(),
                column: name.to_string(),
            })
    };
    let t_col = column("t")?;
    let lat_col = column("lat")?;
    let lon_col = column("lon")?;
    let channel_cols = ChannelId::MEASURED
        .iter()
        .map(|&c| Ok((c, column(c.csv_column().expect("measured"))?)))
        .collect::<Result<Vec<_>>>()?;

    let mut timestamps = Vec::new();
    let mut position = Vec::new();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); channel_cols.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SignalError::Parse {
            path: telemetry_file.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| SignalError::Parse {
                path: telemetry_file.to_path_buf(),
                line,
                message: format!("column `{name}`: cannot parse `{raw}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(SignalError::Parse {
                    path: telemetry_file.to_path_buf(),
                    line,
                    message: format!("column `{name}`: non-finite value `{raw}`"),
                });
            }
            Ok(v)
        };
        let t = field(t_col, "t")?;
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                return Err(SignalError::NonMonotoneTimestamp {
                    path: telemetry_file.to_path_buf(),
                    row: row_idx + 1,
                    line,
                });
            }
        }
        timestamps.push(t);
        position.push((field(lat_col, "lat")?, field(lon_col, "lon")?));
        for (k, (c, idx)) in channel_cols.iter().enumerate() {
            series[k].push(field(*idx, c.csv_column().expect("measured"))?);
        }
    }

    let sample_rate = match declared_rate {
        Some(rate) => rate,
        None if timestamps.len() >= 2 => {
            let span = timestamps[timestamps.len() - 1] - timestamps[0];
            (timestamps.len() - 1) as f64 / span
        }
        None => DEFAULT_SAMPLE_RATE_HZ,
    };
    let channels = channel_cols
        .iter()
        .map(|(c, _)| *c)
        .zip(series)
        .collect::<BTreeMap<_, _>>();
    DriveSession::new(
        SessionKey::new(driver_id, session_index),
        sample_rate,
        timestamps,
        channels,
        position,
    )
}

/// Writes the measured channels of `session` as telemetry CSV, preceded by
/// the sample-rate comment. Values use shortest round-trip formatting.
pub fn write_session(session: &DriveSession, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(session.len() * 160);
    out.push_str(&format!("# {RATE_HEADER_KEY}={}\n", session.sample_rate));
    out.push_str(&TELEMETRY_HEADER.join(","));
    out.push('\n');
    let cols: Vec<&[f64]> = ChannelId::MEASURED
        .iter()
        .map(|&c| {
            session
                .channel(c)
                .ok_or(SignalError::InvalidSession(format!("channel {c} missing")))
        })
        .collect::<Result<_>>()?;
    for i in 0..session.len() {
        out.push_str(&session.timestamps[i].to_string());
        for col in &cols {
            out.push(',');
            out.push_str(&col[i].to_string());
        }
        let (lat, lon) = session.position[i];
        out.push_str(&format!(",{lat},{lon}\n"));
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(out.as_bytes()).map_err(io_err(path))
}

/// Number of DSQ items (scale 1..=4).
pub const DSQ_ITEMS: usize = 8;
/// Number of WSQ items (scale 1..=5).
pub const WSQ_ITEMS: usize = 10;
pub const DSQ_MAX: u8 = 4;
pub const WSQ_MAX: u8 = 5;

/// Ground truth for one driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverTraits {
    /// Trail Making Test A, seconds.
    pub tmt_a: f64,
    /// Trail Making Test B, seconds.
    pub tmt_b: f64,
    /// Maze task, seconds.
    pub maze: f64,
    /// Useful Field of View, milliseconds.
    pub ufov: f64,
    pub dsq: [u8; DSQ_ITEMS],
    pub wsq: [u8; WSQ_ITEMS],
}

impl DriverTraits {
    pub fn get(&self, target: Target) -> f64 {
        match target {
            Target::TmtA => self.tmt_a,
            Target::TmtB => self.tmt_b,
            Target::Maze => self.maze,
            Target::Ufov => self.ufov,
            Target::Dsq(i) => f64::from(self.dsq[usize::from(i) - 1]),
            Target::Wsq(i) => f64::from(self.wsq[usize::from(i) - 1]),
        }
    }

    pub fn set(&mut self, target: Target, value: f64) {
        match target {
            Target::TmtA => self.tmt_a = value,
            Target::TmtB => self.tmt_b = value,
            Target::Maze => self.maze = value,
            Target::Ufov => self.ufov = value,
            Target::Dsq(i) => self.dsq[usize::from(i) - 1] = value as u8,
            Target::Wsq(i) => self.wsq[usize::from(i) - 1] = value as u8,
        }
    }

    fn validate(&self, driver: &str) -> Result<()> {
        for target in [Target::TmtA, Target::TmtB, Target::Maze, Target::Ufov] {
            let v = self.get(target);
            if !(v.is_finite() && v > 0.0) {
                return Err(SignalError::NonPositiveScore {
                    driver: driver.to_string(),
                    column: target.name(),
                    value: v,
                });
            }
        }
        let check = |items: &[u8], prefix: &str, max: u8| -> Result<()> {
            for (i, &v) in items.iter().enumerate() {
                if !(1..=max).contains(&v) {
                    return Err(SignalError::OrdinalOutOfRange {
                        driver: driver.to_string(),
                        column: format!("{prefix}_{}", i + 1),
                        value: i64::from(v),
                        min: 1,
                        max,
                    });
                }
            }
            Ok(())
        };
        check(&self.dsq, "dsq", DSQ_MAX)?;
        check(&self.wsq, "wsq", WSQ_MAX)
    }
}

/// One of the 22 estimation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    TmtA,
    TmtB,
    Maze,
    Ufov,
    /// DSQ item, 1-based.
    Dsq(u8),
    /// WSQ item, 1-based.
    Wsq(u8),
}

impl Target {
    pub const COGNITIVE: [Target; 4] = [Target::TmtA, Target::TmtB, Target::Maze, Target::Ufov];

    pub fn all() -> Vec<Target> {
        let mut out = Target::COGNITIVE.to_vec();
        out.extend((1..=DSQ_ITEMS as u8).map(Target::Dsq));
        out.extend((1..=WSQ_ITEMS as u8).map(Target::Wsq));
        out
    }

    /// Cognitive tests are regressed; questionnaire items are classified.
    pub fn is_regression(self) -> bool {
        matches!(
            self,
            Target::TmtA | Target::TmtB | Target::Maze | Target::Ufov
        )
    }

    pub fn name(self) -> String {
        match self {
            Target::TmtA => "tmt_a".into(),
            Target::TmtB => "tmt_b".into(),
            Target::Maze => "maze".into(),
            Target::Ufov => "ufov".into(),
            Target::Dsq(i) => format!("dsq_{i}"),
            Target::Wsq(i) => format!("wsq_{i}"),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Target {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || SignalError::UnknownTarget(s.to_string());
        match s {
            "tmt_a" => return Ok(Target::TmtA),
            "tmt_b" => return Ok(Target::TmtB),
            "maze" => return Ok(Target::Maze),
            "ufov" => return Ok(Target::Ufov),
            _ => {}
        }
        let (prefix, idx) = s.split_once('_').ok_or_else(unknown)?;
        let idx: u8 = idx.parse().map_err(|_| unknown())?;
        match prefix {
            "dsq" if (1..=DSQ_ITEMS as u8).contains(&idx) => Ok(Target::Dsq(idx)),
            "wsq" if (1..=WSQ_ITEMS as u8).contains(&idx) => Ok(Target::Wsq(idx)),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-driver ground truth keyed by driver id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraitTable {
    drivers: BTreeMap<String, DriverTraits>,
}

impl TraitTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, driver_id: impl Into<String>, traits: DriverTraits) -> Result<()> {
        let driver_id = driver_id.into();
        traits.validate(&driver_id)?;
        if self.drivers.contains_key(&driver_id) {
            return Err(SignalError::DuplicateDriver(driver_id));
        }
        self.drivers.insert(driver_id, traits);
        Ok(())
    }

    pub fn get(&self, driver_id: &str) -> Option<&DriverTraits> {
        self.drivers.get(driver_id)
    }

    pub fn score(&self, driver_id: &str, target: Target) -> Option<f64> {
        self.drivers.get(driver_id).map(|t| t.get(target))
    }

    pub fn len(&self) -> usize {
        self.drivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drivers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DriverTraits)> {
        self.drivers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn driver_ids(&self) -> impl Iterator<Item = &str> {
        self.drivers.keys().map(String::as_str)
    }

    pub(crate) fn drivers_mut(&mut self) -> &mut BTreeMap<String, DriverTraits> {
        &mut self.drivers
    }
}

fn traits_header() -> Vec<String> {
    let mut h: Vec<String> = ["driver_id", "tmt_a", "tmt_b", "maze", "ufov"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=DSQ_ITEMS).map(|i| format!("dsq_{i}")));
    h.extend((1..=WSQ_ITEMS).map(|i| format!("wsq_{i}")));
    h
}

/// Loads the traits CSV (`driver_id,tmt_a,tmt_b,maze,ufov,dsq_1..dsq_8,wsq_1..wsq_10`).
pub fn load_traits(traits_file: &Path) -> Result<TraitTable> {
    let text = fs::read_to_string(traits_file).map_err(io_err(traits_file))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: u64, message: String| SignalError::Parse {
        path: traits_file.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols = traits_header()
        .into_iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| SignalError::MissingColumn {
                    path: traits_file.to_path_buf(),
                    column: name.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = TraitTable::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            parse_err(e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |k: usize| record.get(cols[k]).unwrap_or("");
        let real = |k: usize| -> Result<f64> {
            get(k)
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("cannot parse `{}` as a number", get(k))))
        };
        let ordinal = |k: usize, max: u8, name: String, driver: &str| -> Result<u8> {
            let v: i64 = get(k)
                .parse()
                .map_err(|_| parse_err(line, format!("`{name}`: `{}` is not an integer", get(k))))?;
            if !(1..=i64::from(max)).contains(&v) {
                return Err(SignalError::OrdinalOutOfRange {
                    driver: driver.to_string(),
                    column: name,
                    value: v,
                    min: 1,
                    max,
                });
            }
            Ok(v as u8)
        };
        let driver = get(0).to_string();
        if driver.is_empty() {
            return Err(parse_err(line, "empty driver_id".into()));
        }
        let mut dsq = [0u8; DSQ_ITEMS];
        for (i, slot) in dsq.iter_mut().enumerate() {
            *slot = ordinal(5 + i, DSQ_MAX, format!("dsq_{}", i + 1), &driver)?;
        }
        let mut wsq = [0u8; WSQ_ITEMS];
        for (i, slot) in wsq.iter_mut().enumerate() {
            *slot = ordinal(5 + DSQ_ITEMS + i, WSQ_MAX, format!("wsq_{}", i + 1), &driver)?;
        }
        let traits = DriverTraits {
            tmt_a: real(1)?,
            tmt_b: real(2)?,
            maze: real(3)?,
            ufov: real(4)?,
            dsq,
            wsq,
        };
        table.insert(driver, traits)?;
    }
    if table.is_empty() {
        return Err(SignalError::EmptyTable(traits_file.to_path_buf()));
    }
    Ok(table)
}

pub fn write_traits(table: &TraitTable, path: &Path) -> Result<()> {
    let mut out = traits_header().join(",");
    out.push('\n');
    for (driver, t) in table.iter() {
        out.push_str(&format!("{driver},{},{},{},{}", t.tmt_a, t.tmt_b, t.maze, t.ufov));
        for v in t.dsq.iter().chain(t.wsq.iter()) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
