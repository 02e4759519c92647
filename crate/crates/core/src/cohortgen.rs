//! Synthetic cohorts with known trait-telemetry couplings.
//!
//! Every driver drives the same straight route: an approach road, four
//! signalised intersections joined by three arterial stretches, and an exit
//! road. Drivers stop at each intersection. Couplings add noise whose
//! amplitude scales with `exp(effect * z)`, where `z` is the driver's latent
//! standard-normal score for the coupled target.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::evaluation::Cohort;
use crate::features::RoadScope;
use crate::geo;
use crate::segmentation::{ArterialZone, IntersectionZone, RouteMap, SegmentError};
use crate::signals::{
    load_session, load_traits, write_session, write_traits, ChannelId, DriveSession, DriverTraits, SessionKey,
    SignalError, Target, TraitTable, DSQ_ITEMS, DSQ_MAX, WSQ_ITEMS, WSQ_MAX,
};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("cohort config: {0}")]
    Config(String),
    #[error("cohort file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Signals(#[from] SignalError),
    #[error(transparent)]
    Segments(#[from] SegmentError),
}

pub type Result<T> = std::result::Result<T, CohortError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

/// One planted trait-behaviour link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub target: Target,
    pub channel: ChannelId,
    pub road: RoadScope,
    /// Correlation time of the injected noise, seconds. Short bands mostly
    /// show up in short windows and rate channels.
    pub band_s: f64,
    /// Log-amplitude slope per unit latent z. For brake pressure at
    /// intersections it scales the stop duration before release instead.
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_drivers: usize,
    /// Sessions per driver, cycled when shorter than `n_drivers`.
    pub sessions_per_driver: Vec<u8>,
    pub sample_rate_hz: f64,
    pub arterial_mean_s: f64,
    pub arterial_sd_s: f64,
    pub n_intersections: usize,
    pub tmt_a: Moments,
    pub tmt_b: Moments,
    pub maze: Moments,
    pub ufov: Moments,
    /// Equicorrelation of the latent cognitive scores.
    pub cognitive_correlation: f64,
    pub dsq_probabilities: Vec<f64>,
    pub wsq_probabilities: Vec<f64>,
    pub couplings: Vec<Coupling>,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        let mut sessions = vec![2u8; 15];
        sessions.extend([1u8; 8]);
        CohortConfig {
            n_drivers: 23,
            sessions_per_driver: sessions,
            sample_rate_hz: 10.0,
            arterial_mean_s: 355.0,
            arterial_sd_s: 40.0,
            n_intersections: 4,
            tmt_a: Moments { mean: 34.1, sd: 10.2 },
            tmt_b: Moments { mean: 94.9, sd: 36.3 },
            maze: Moments { mean: 26.3, sd: 16.9 },
            ufov: Moments { mean: 151.4, sd: 100.1 },
            cognitive_correlation: 0.4,
            dsq_probabilities: vec![0.15, 0.35, 0.35, 0.15],
            wsq_probabilities: vec![0.1, 0.2, 0.4, 0.2, 0.1],
            couplings: CohortConfig::planted_couplings(),
            seed: 0,
        }
    }
}

impl CohortConfig {
    /// Default couplings: TMT(B) drives accelerator and steering noise on
    /// arterial roads and stop length at intersections; two questionnaire
    /// items get weaker links.
    pub fn planted_couplings() -> Vec<Coupling> {
        vec![
            Coupling {
                target: Target::TmtB,
                channel: ChannelId::AcceleratorRate,
                road: RoadScope::Arterial,
                band_s: 0.3,
                effect: 0.5,
            },
            Coupling {
                target: Target::TmtB,
                channel: ChannelId::SteeringAngle,
                road: RoadScope::Arterial,
                band_s: 1.0,
                effect: 0.5,
            },
            Coupling {
                target: Target::TmtB,
                channel: ChannelId::BrakePressure,
                road: RoadScope::Intersection,
                band_s: 1.0,
                effect: 0.3,
            },
            Coupling {
                target: Target::Dsq(1),
                channel: ChannelId::Speed,
                road: RoadScope::Arterial,
                band_s: 10.0,
                effect: 0.5,
            },
            Coupling {
                target: Target::Wsq(2),
                channel: ChannelId::ForwardAccel,
                road: RoadScope::Arterial,
                band_s: 2.0,
                effect: 0.5,
            },
        ]
    }

    /// Same cohort shape with every effect size set to zero.
    pub fn null(mut self) -> Self {
        for c in &mut self.couplings {
            c.effect = 0.0;
        }
        self
    }

    pub fn session_count(&self, driver: usize) -> u8 {
        self.sessions_per_driver[driver % self.sessions_per_driver.len()]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CohortError::Config(m));
        if self.n_drivers < 2 {
            return bad("need at least 2 drivers".into());
        }
        if self.sessions_per_driver.is_empty() || self.sessions_per_driver.iter().any(|&s| s == 0) {
            return bad("every driver needs at least one session".into());
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad("sample_rate_hz must be positive".into());
        }
        if !(self.arterial_mean_s > 60.0 && self.arterial_sd_s >= 0.0 && self.arterial_sd_s.is_finite()) {
            return bad("arterial duration must have mean > 60 s and finite sd".into());
        }
        if self.n_intersections < 2 {
            return bad("need at least 2 intersections".into());
        }
        for (name, m) in [("tmt_a", self.tmt_a), ("tmt_b", self.tmt_b), ("maze", self.maze), ("ufov", self.ufov)] {
            if !(m.mean > 0.0 && m.sd > 0.0 && m.mean.is_finite() && m.sd.is_finite()) {
                return bad(format!("{name} moments must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.cognitive_correlation) {
            return bad("cognitive_correlation must lie in [0, 1)".into());
        }
        for (name, p, k) in [
            ("dsq", &self.dsq_probabilities, DSQ_MAX),
            ("wsq", &self.wsq_probabilities, WSQ_MAX),
        ] {
            if p.len() != usize::from(k) || p.iter().any(|v| !(*v > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("{name}_probabilities needs {k} positive entries summing to 1"));
            }
        }
        for c in &self.couplings {
            if !c.effect.is_finite() {
                return bad(format!("coupling {} on {} has non-finite effect", c.target, c.channel));
            }
            if !(c.band_s.is_finite() && c.band_s > 0.0) {
                return bad(format!("coupling {} on {} needs band_s > 0", c.target, c.channel));
            }
            let valid_target = match c.target {
                Target::Dsq(i) => (1..=DSQ_ITEMS as u8).contains(&i),
                Target::Wsq(i) => (1..=WSQ_ITEMS as u8).contains(&i),
                _ => true,
            };
            if !valid_target {
                return bad(format!("coupling target {} does not exist", c.target));
            }
        }
        Ok(())
    }
}

/// Parameters of a normal truncated to (0, ∞) whose own mean and sd equal
/// `target`.
pub fn truncated_normal_params(target: Moments) -> (f64, f64) {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let (mut mu, mut sigma) = (target.mean, target.sd);
    for _ in 0..500 {
        let alpha = -mu / sigma;
        let lambda = std.pdf(alpha) / (1.0 - std.cdf(alpha));
        let var_factor = 1.0 + alpha * lambda - lambda * lambda;
        let next_sigma = target.sd / var_factor.sqrt();
        let next_mu = target.mean - next_sigma * lambda;
        let done = (next_mu - mu).abs() < 1e-13 * target.mean && (next_sigma - sigma).abs() < 1e-13 * target.sd;
        mu = next_mu;
        sigma = next_sigma;
        if done {
            break;
        }
    }
    (mu, sigma)
}

/// Maps a standard-normal latent through the truncated distribution's
/// quantile function, keeping ranks.
fn truncated_quantile(z: f64, mu: f64, sigma: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let lo = std.cdf(-mu / sigma);
    let u = (lo + std.cdf(z) * (1.0 - lo)).clamp(lo + 1e-15, 1.0 - 1e-15);
    (mu + sigma * std.inverse_cdf(u)).max(1e-6 * sigma)
}

fn ordinal(z: f64, probabilities: &[f64]) -> u8 {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let u = std.cdf(z);
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u8 + 1;
        }
    }
    probabilities.len() as u8
}

/// Ground truth written next to a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub couplings: Vec<Coupling>,
    /// Latent z per driver and coupled target.
    pub latent: BTreeMap<String, BTreeMap<Target, f64>>,
}

#[derive(Debug, Clone)]
pub struct GeneratedCohort {
    pub cohort: Cohort,
    pub truth: GroundTruth,
}

const ORIGIN: (f64, f64) = (35.1815, 136.9066);
const INTERSECTION_RADIUS_M: f64 = 30.0;
const ARTERIAL_RADIUS_M: f64 = 15.0;
const STRETCH_M: f64 = 1316.0;
const OTHER_ROAD_M: f64 = 400.0;
const WHEELBASE_M: f64 = 2.7;
const STEERING_RATIO: f64 = 15.0;

fn intersection_x(i: usize) -> f64 {
    i as f64 * (STRETCH_M + 2.0 * INTERSECTION_RADIUS_M)
}

/// The straight test route for `n` intersections.
pub fn route_map(n_intersections: usize) -> RouteMap {
    let last = intersection_x(n_intersections - 1);
    RouteMap {
        arterial: ArterialZone {
            polyline: vec![geo::from_local(ORIGIN, 0.0, 0.0), geo::from_local(ORIGIN, last, 0.0)],
            radius_m: ARTERIAL_RADIUS_M,
        },
        intersections: (0..n_intersections)
            .map(|i| IntersectionZone {
                id: format!("int{}", i + 1),
                center: geo::from_local(ORIGIN, intersection_x(i), 0.0),
                radius_m: INTERSECTION_RADIUS_M,
            })
            .collect(),
    }
}

fn driver_id(i: usize) -> String {
    format!("D{:02}", i + 1)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Unit-variance AR(1) noise with correlation time `tau` seconds.
fn ar_noise(rng: &mut ChaCha8Rng, n: usize, dt: f64, tau: f64) -> Vec<f64> {
    let phi = (-dt / tau).exp();
    let innov = (1.0 - phi * phi).sqrt();
    let mut v = Vec::with_capacity(n);
    let mut x = normal(rng);
    for _ in 0..n {
        v.push(x);
        x = phi * x + innov * normal(rng);
    }
    v
}

/// Per-driver behaviour independent of any trait.
#[derive(Debug, Clone)]
struct Style {
    speed: f64,
    pedal_jitter: f64,
    steer_jitter: f64,
    other_road: f64,
    stop_s: f64,
}

impl Style {
    fn draw(rng: &mut ChaCha8Rng) -> Style {
        Style {
            speed: (0.08 * normal(rng)).exp(),
            pedal_jitter: (0.1 * normal(rng)).exp(),
            steer_jitter: (0.1 * normal(rng)).exp(),
            other_road: 3.0 * (1.0 * normal(rng)).exp(),
            stop_s: rng.random_range(2.0..5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Other,
    Arterial,
    Intersection,
}

/// Noise amplitude at z = 0 for a coupling on `channel`.
fn base_scale(channel: ChannelId) -> f64 {
    match channel {
        ChannelId::SteeringAngle | ChannelId::SteeringVelocity => 1.0,
        ChannelId::EpsTorque => 0.05,
        ChannelId::ForwardAccel | ChannelId::ForwardJerk => 0.1,
        ChannelId::LateralAccel | ChannelId::LateralJerk => 0.05,
        ChannelId::YawRate => 0.3,
        ChannelId::Speed => 1.0,
        ChannelId::AcceleratorPosition | ChannelId::AcceleratorRate => 1.5,
        ChannelId::BrakePressure => 0.02,
        ChannelId::FuelConsumption => 0.0002,
    }
}

struct Kinematics {
    speed: Vec<f64>,
    accel: Vec<f64>,
    x: Vec<f64>,
    phase: Vec<Phase>,
    /// Brake pressure before noise; zero outside stops.
    brake: Vec<f64>,
    /// Pedal level implied by the speed plan, percent.
    pedal: Vec<f64>,
}

/// Plans the longitudinal motion frame by frame.
fn plan_motion(rng: &mut ChaCha8Rng, cfg: &CohortConfig, style: &Style, stop_scale: f64) -> Kinematics {
    let dt = 1.0 / cfg.sample_rate_hz;
    let n_int = cfg.n_intersections;
    let arterial_s = (cfg.arterial_mean_s + cfg.arterial_sd_s * normal(rng)).clamp(0.5 * cfg.arterial_mean_s, 2.0 * cfg.arterial_mean_s);

    // cruise segments: approach, stretches, exit
    let mut cruise: Vec<(Phase, f64, f64)> = vec![(Phase::Other, OTHER_ROAD_M, OTHER_ROAD_M / (8.0 * style.speed))];
    for _ in 0..n_int - 1 {
        let share = arterial_s / (n_int - 1) as f64 * (1.0 + 0.05 * normal(rng));
        cruise.push((Phase::Arterial, STRETCH_M, share));
    }
    cruise.push((Phase::Other, OTHER_ROAD_M, OTHER_ROAD_M / (8.0 * style.speed)));

    let mut k = Kinematics {
        speed: Vec::new(),
        accel: Vec::new(),
        x: Vec::new(),
        phase: Vec::new(),
        brake: Vec::new(),
        pedal: Vec::new(),
    };
    let mut x = -OTHER_ROAD_M - INTERSECTION_RADIUS_M;
    let profiles: Vec<Vec<f64>> = cruise
        .iter()
        .map(|&(_, dist, dur)| {
            let n = (dur / dt).round().max(2.0) as usize;
            let shape: Vec<f64> = ar_noise(rng, n, dt, 20.0).into_iter().map(|e| (1.0 + 0.12 * e).max(0.5)).collect();
            let mean = shape.iter().sum::<f64>() / n as f64;
            let v_bar = dist / (n as f64 * dt);
            shape.into_iter().map(|s| v_bar * s / mean).collect()
        })
        .collect();

    let push = |k: &mut Kinematics, v: f64, a: f64, phase: Phase, brake: f64, pedal: f64, x: &mut f64| {
        k.speed.push(v);
        k.accel.push(a);
        k.x.push(*x);
        k.phase.push(phase);
        k.brake.push(brake);
        k.pedal.push(pedal);
        *x += v * dt;
    };

    for (seg, profile) in profiles.iter().enumerate() {
        let phase = cruise[seg].0;
        for (i, &v) in profile.iter().enumerate() {
            let a = if i + 1 < profile.len() { (profile[i + 1] - v) / dt } else { 0.0 };
            let pedal = (10.0 + 1.2 * v + 25.0 * a.max(0.0)).clamp(0.0, 100.0);
            push(&mut k, v, a, phase, 0.0, pedal, &mut x);
        }
        if seg + 1 == profiles.len() {
            break;
        }
        // stop at the intersection centre, wait, pull away
        let v_in = *profile.last().expect("nonempty profile");
        let v_out = profiles[seg + 1][0];
        let decel = v_in * v_in / (2.0 * INTERSECTION_RADIUS_M);
        let t_dec = v_in / decel;
        let n_dec = (t_dec / dt).round().max(1.0) as usize;
        for i in 0..n_dec {
            let v = (v_in - decel * i as f64 * dt).max(0.0);
            push(&mut k, v, -decel, Phase::Intersection, 0.2 + 0.25 * decel, 0.0, &mut x);
        }
        let n_stop = ((style.stop_s * stop_scale + rng.random_range(0.0..1.0)) / dt).round().max(1.0) as usize;
        for _ in 0..n_stop {
            push(&mut k, 0.0, 0.0, Phase::Intersection, 0.35, 0.0, &mut x);
        }
        let n_release = (0.4 / dt).round().max(1.0) as usize;
        for i in 0..n_release {
            let b = 0.35 * (1.0 - (i + 1) as f64 / n_release as f64);
            push(&mut k, 0.0, 0.0, Phase::Intersection, b, 0.0, &mut x);
        }
        let acc = v_out * v_out / (2.0 * INTERSECTION_RADIUS_M);
        let n_acc = ((v_out / acc) / dt).round().max(1.0) as usize;
        for i in 0..n_acc {
            let v = acc * (i as f64 + 0.5) * dt;
            push(&mut k, v, acc, Phase::Intersection, 0.0, (30.0 + 20.0 * acc).min(100.0), &mut x);
        }
    }
    k
}

fn latent_scores(rng: &mut ChaCha8Rng, cfg: &CohortConfig) -> (DriverTraits, BTreeMap<Target, f64>) {
    let rho = cfg.cognitive_correlation;
    let common = normal(rng);
    let mut latent = BTreeMap::new();
    let mut cog = [0.0; 4];
    for (i, t) in Target::COGNITIVE.iter().enumerate() {
        let z = rho.sqrt() * common + (1.0 - rho).sqrt() * normal(rng);
        latent.insert(*t, z);
        cog[i] = z;
    }
    let value = |m: Moments, z: f64| {
        let (mu, sigma) = truncated_normal_params(m);
        truncated_quantile(z, mu, sigma)
    };
    let mut dsq = [0u8; DSQ_ITEMS];
    for (i, d) in dsq.iter_mut().enumerate() {
        let z = normal(rng);
        latent.insert(Target::Dsq(i as u8 + 1), z);
        *d = ordinal(z, &cfg.dsq_probabilities);
    }
    let mut wsq = [0u8; WSQ_ITEMS];
    for (i, w) in wsq.iter_mut().enumerate() {
        let z = normal(rng);
        latent.insert(Target::Wsq(i as u8 + 1), z);
        *w = ordinal(z, &cfg.wsq_probabilities);
    }
    let traits = DriverTraits {
        tmt_a: value(cfg.tmt_a, cog[0]),
        tmt_b: value(cfg.tmt_b, cog[1]),
        maze: value(cfg.maze, cog[2]),
        ufov: value(cfg.ufov, cog[3]),
        dsq,
        wsq,
    };
    (traits, latent)
}

fn in_scope(phase: Phase, road: RoadScope) -> bool {
    match road {
        RoadScope::Arterial => phase == Phase::Arterial,
        RoadScope::Intersection => phase == Phase::Intersection,
        RoadScope::Whole => true,
    }
}

fn is_stop_timing(c: &Coupling) -> bool {
    c.channel == ChannelId::BrakePressure && c.road == RoadScope::Intersection
}

fn gen_session(
    cfg: &CohortConfig,
    key: SessionKey,
    style: &Style,
    latent: &BTreeMap<Target, f64>,
    rng: &mut ChaCha8Rng,
) -> Result<DriveSession> {
    let dt = 1.0 / cfg.sample_rate_hz;
    let stop_scale: f64 = cfg
        .couplings
        .iter()
        .filter(|c| is_stop_timing(c))
        .map(|c| (c.effect * latent[&c.target]).exp())
        .product();
    let kin = plan_motion(rng, cfg, style, stop_scale);
    let n = kin.speed.len();
    let session_factor = (0.1 * normal(rng)).exp();
    let road_factor = |p: Phase| if p == Phase::Arterial { 1.0 } else { style.other_road };

    let mut pedal_noise: Vec<f64> = ar_noise(rng, n, dt, 0.3);
    let mut steer: Vec<f64> = ar_noise(rng, n, dt, 2.0);
    for i in 0..n {
        let f = session_factor * road_factor(kin.phase[i]);
        pedal_noise[i] *= 1.0 * style.pedal_jitter * f;
        steer[i] *= 1.5 * style.steer_jitter * f;
    }

    // couplings that act before vehicle dynamics
    let mut late: Vec<(&Coupling, Vec<f64>)> = Vec::new();
    for c in &cfg.couplings {
        if is_stop_timing(c) {
            continue;
        }
        let amp = base_scale(c.channel) * (c.effect * latent[&c.target]).exp();
        let mut e = ar_noise(rng, n, dt, c.band_s);
        for (i, v) in e.iter_mut().enumerate() {
            *v = if in_scope(kin.phase[i], c.road) { *v * amp } else { 0.0 };
        }
        match c.channel {
            ChannelId::AcceleratorPosition | ChannelId::AcceleratorRate => {
                pedal_noise.iter_mut().zip(&e).for_each(|(p, v)| *p += v);
            }
            ChannelId::SteeringAngle | ChannelId::SteeringVelocity => {
                steer.iter_mut().zip(&e).for_each(|(s, v)| *s += v);
            }
            _ => late.push((c, e)),
        }
    }

    let mut ch: BTreeMap<ChannelId, Vec<f64>> = BTreeMap::new();
    let pedal: Vec<f64> = (0..n)
        .map(|i| if kin.pedal[i] > 0.0 { (kin.pedal[i] + pedal_noise[i]).clamp(0.0, 100.0) } else { 0.0 })
        .collect();
    let speed_kmh: Vec<f64> = (0..n).map(|i| kin.speed[i] * 3.6 + 0.05 * normal(rng)).collect();
    let acc_fwd: Vec<f64> = (0..n)
        .map(|i| kin.accel[i] + 0.02 * (pedal[i] - kin.pedal[i]) + 0.05 * normal(rng))
        .collect();
    let yaw: Vec<f64> = (0..n)
        .map(|i| kin.speed[i] * (steer[i] / STEERING_RATIO) / WHEELBASE_M + 0.05 * normal(rng))
        .collect();
    let acc_lat: Vec<f64> = (0..n)
        .map(|i| kin.speed[i] * yaw[i].to_radians() + 0.02 * normal(rng))
        .collect();
    let eps: Vec<f64> = (0..n).map(|i| 0.05 * steer[i] + 0.02 * normal(rng)).collect();
    let brake: Vec<f64> = (0..n)
        .map(|i| if kin.brake[i] > 0.0 { (kin.brake[i] * (1.0 + 0.03 * normal(rng))).max(0.0) } else { 0.0 })
        .collect();
    let fuel: Vec<f64> = (0..n)
        .map(|i| (dt * (0.2 + 0.004 * pedal[i] * kin.speed[i]) * (1.0 + 0.05 * normal(rng))).max(0.0))
        .collect();
    ch.insert(ChannelId::SteeringAngle, steer);
    ch.insert(ChannelId::EpsTorque, eps);
    ch.insert(ChannelId::ForwardAccel, acc_fwd);
    ch.insert(ChannelId::LateralAccel, acc_lat);
    ch.insert(ChannelId::YawRate, yaw);
    ch.insert(ChannelId::Speed, speed_kmh);
    ch.insert(ChannelId::AcceleratorPosition, pedal);
    ch.insert(ChannelId::BrakePressure, brake);
    ch.insert(ChannelId::FuelConsumption, fuel);

    for (c, e) in late {
        let target = c.channel.parent().unwrap_or(c.channel);
        let series = ch.get_mut(&target).expect("measured channel");
        for (i, (s, v)) in series.iter_mut().zip(&e).enumerate() {
            match target {
                // keep pressure nonnegative and exactly zero off the pedal
                ChannelId::BrakePressure if kin.brake[i] <= 0.0 => {}
                ChannelId::BrakePressure | ChannelId::FuelConsumption => *s = (*s + v).max(0.0),
                _ => *s += v,
            }
        }
    }

    let timestamps: Vec<f64> = (0..n).map(|i| i as f64 / cfg.sample_rate_hz).collect();
    let position: Vec<(f64, f64)> = kin
        .x
        .iter()
        .map(|&x| {
            let (lat, lon) = geo::from_local(ORIGIN, x, 0.0);
            // round-trip through text is exact at this precision
            (round_to(lat, 1e-9), round_to(lon, 1e-9))
        })
        .collect();
    Ok(DriveSession::new(key, cfg.sample_rate_hz, timestamps, ch, position)?)
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// Draws traits, route and telemetry for every driver.
pub fn gen_cohort(cfg: &CohortConfig) -> Result<GeneratedCohort> {
    cfg.validate()?;
    let route = route_map(cfg.n_intersections);
    let mut traits = TraitTable::new();
    let mut latent_all = BTreeMap::new();
    let mut sessions = Vec::new();
    for d in 0..cfg.n_drivers {
        let id = driver_id(d);
        let mut rng = rng_for(cfg.seed, d as u64 + 1);
        let (t, latent) = latent_scores(&mut rng, cfg);
        let style = Style::draw(&mut rng);
        for s in 1..=cfg.session_count(d) {
            let mut srng = rng_for(cfg.seed, ((d as u64 + 1) << 8) | u64::from(s));
            sessions.push(gen_session(cfg, SessionKey::new(id.clone(), s), &style, &latent, &mut srng)?);
        }
        traits.insert(id.clone(), t)?;
        let coupled: BTreeMap<Target, f64> = cfg
            .couplings
            .iter()
            .map(|c| (c.target, latent[&c.target]))
            .chain(Target::COGNITIVE.iter().map(|t| (*t, latent[t])))
            .collect();
        latent_all.insert(id, coupled);
    }
    Ok(GeneratedCohort {
        cohort: Cohort { sessions, traits, route },
        truth: GroundTruth {
            seed: cfg.seed,
            couplings: cfg.couplings.clone(),
            latent: latent_all,
        },
    })
}

/// Shuffles driver-to-score assignment independently per target. Seed 0
/// returns the table unchanged.
pub fn permute_labels(table: &TraitTable, seed: u64) -> TraitTable {
    let mut out = table.clone();
    if seed == 0 {
        return out;
    }
    let drivers: Vec<String> = table.driver_ids().map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for target in Target::all() {
        let mut values: Vec<f64> = drivers.iter().map(|d| table.score(d, target).expect("known driver")).collect();
        for i in (1..values.len()).rev() {
            let j = rng.random_range(0..=i);
            values.swap(i, j);
        }
        for (d, v) in drivers.iter().zip(values) {
            out.drivers_mut().get_mut(d).expect("known driver").set(target, v);
        }
    }
    out
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> CohortError + '_ {
    move |e| CohortError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub const SESSIONS_FILE: &str = "sessions.csv";
pub const TRAITS_FILE: &str = "traits.csv";
pub const ROUTE_FILE: &str = "route.json";
pub const TRUTH_FILE: &str = "couplings.json";
pub const TELEMETRY_DIR: &str = "telemetry";

/// Writes telemetry CSVs, the session index, traits, route and ground truth.
pub fn write_cohort(generated: &GeneratedCohort, dir: &Path) -> Result<()> {
    let tele = dir.join(TELEMETRY_DIR);
    fs::create_dir_all(&tele).map_err(file_err(&tele))?;
    let mut index = String::from("driver_id,session_index,file\n");
    for s in &generated.cohort.sessions {
        let name = format!("{}_{}.csv", s.driver_id(), s.session_index());
        write_session(s, &tele.join(&name))?;
        index.push_str(&format!("{},{},{TELEMETRY_DIR}/{name}\n", s.driver_id(), s.session_index()));
    }
    let p = dir.join(SESSIONS_FILE);
    fs::write(&p, index).map_err(file_err(&p))?;
    write_traits(&generated.cohort.traits, &dir.join(TRAITS_FILE))?;
    let p = dir.join(ROUTE_FILE);
    fs::write(&p, generated.cohort.route.to_json()).map_err(file_err(&p))?;
    let p = dir.join(TRUTH_FILE);
    let truth = serde_json::to_string_pretty(&generated.truth).expect("ground truth serializes");
    fs::write(&p, truth).map_err(file_err(&p))?;
    Ok(())
}

/// Reads a cohort directory. `route` overrides `<dir>/route.json`.
pub fn load_cohort(dir: &Path, route: Option<&Path>) -> Result<Cohort> {
    let index_path = dir.join(SESSIONS_FILE);
    let text = fs::read_to_string(&index_path).map_err(file_err(&index_path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut sessions = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let bad = |m: String| CohortError::File {
            path: index_path.clone(),
            message: format!("line {}: {m}", line + 2),
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", rec.len())));
        }
        let index: u8 = rec[1].parse().map_err(|_| bad(format!("bad session index `{}`", &rec[1])))?;
        sessions.push(load_session(&dir.join(&rec[2]), &rec[0], index)?);
    }
    if sessions.is_empty() {
        return Err(CohortError::File {
            path: index_path,
            message: "no sessions listed".into(),
        });
    }
    let traits = load_traits(&dir.join(TRAITS_FILE))?;
    let route_path = route.map(Path::to_path_buf).unwrap_or_else(|| dir.join(ROUTE_FILE));
    let route = RouteMap::load(&route_path)?;
    Ok(Cohort { sessions, traits, route })
}

pub fn load_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let p = dir.join(TRUTH_FILE);
    let text = fs::read_to_string(&p).map_err(file_err(&p))?;
    serde_json::from_str(&text).map_err(|e| CohortError::File {
        path: p,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{build_segments, classify_frames, RoadLabel, SegmentConfig, SplitOutcome};
    use crate::signals::derive_channels;

    fn small() -> CohortConfig {
        CohortConfig {
            n_drivers: 4,
            sessions_per_driver: vec![2, 1],
            seed: 5,
            ..CohortConfig::default()
        }
    }

    #[test]
    fn default_shape() {
        let cfg = CohortConfig::default();
        let total: u32 = (0..cfg.n_drivers).map(|d| u32::from(cfg.session_count(d))).sum();
        assert_eq!(cfg.n_drivers, 23);
        assert_eq!(total, 38);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_cohort(&small()).unwrap();
        let b = gen_cohort(&small()).unwrap();
        assert_eq!(a.cohort.sessions, b.cohort.sessions);
        assert_eq!(a.cohort.traits, b.cohort.traits);
        assert_eq!(a.truth, b.truth);
        let c = gen_cohort(&CohortConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a.cohort.traits, c.cohort.traits);
    }

    #[test]
    fn sessions_pass_segmentation_contracts() {
        let g = gen_cohort(&small()).unwrap();
        assert_eq!(g.cohort.sessions.len(), 6);
        let plan = crate::evaluation::Variant::I.plan(355.0);
        for s in &g.cohort.sessions {
            let labels = classify_frames(s, &g.cohort.route);
            for zone in 0..4 {
                assert_eq!(labels.passes(zone).len(), 1, "{} zone {zone}", s.key());
            }
            let arterial = labels.labels.iter().filter(|l| **l == RoadLabel::Arterial).count();
            assert!(arterial as f64 / s.sample_rate() > 150.0);
            let derived = derive_channels(s.clone()).unwrap();
            let seg = build_segments(&derived, &g.cohort.route, &plan, &SegmentConfig::default()).unwrap();
            assert!(seg.warnings.is_empty(), "{:?}", seg.warnings);
            for split in seg.intersections.values() {
                let split = split.as_ref().unwrap();
                assert_eq!(split.outcome, SplitOutcome::Released);
                assert!(!split.before.is_empty() && !split.after.is_empty());
            }
            let brake = s.channel(ChannelId::BrakePressure).unwrap();
            assert!(brake.iter().all(|b| *b >= 0.0));
        }
    }

    #[test]
    fn arterial_duration_has_configured_mean() {
        let cfg = CohortConfig {
            n_drivers: 60,
            sessions_per_driver: vec![1],
            couplings: Vec::new(),
            seed: 2,
            ..CohortConfig::default()
        };
        let g = gen_cohort(&cfg).unwrap();
        let means: Vec<f64> = g
            .cohort
            .sessions
            .iter()
            .map(|s| {
                let l = classify_frames(s, &g.cohort.route);
                l.arterial_frames().len() as f64 / s.sample_rate()
            })
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        // 3 standard errors plus the frames lost at zone edges
        assert!((m - 355.0).abs() < 3.0 * 40.0 / (60f64).sqrt() + 5.0, "{m}");
    }

    #[test]
    fn truncated_parameters_reproduce_moments() {
        let std = Normal::new(0.0, 1.0).unwrap();
        for m in [
            Moments { mean: 34.1, sd: 10.2 },
            Moments { mean: 151.4, sd: 100.1 },
            Moments { mean: 26.3, sd: 16.9 },
        ] {
            let (mu, sigma) = truncated_normal_params(m);
            let a = -mu / sigma;
            let lam = std.pdf(a) / (1.0 - std.cdf(a));
            let mean = mu + sigma * lam;
            let sd = sigma * (1.0 + a * lam - lam * lam).sqrt();
            assert!((mean - m.mean).abs() < 1e-8 && (sd - m.sd).abs() < 1e-8, "{mean} {sd}");
        }
    }

    #[test]
    fn trait_moments_match_targets_at_500_drivers() {
        let cfg = CohortConfig::default();
        let mut rng = rng_for(11, 0);
        let draws: Vec<DriverTraits> = (0..500).map(|_| latent_scores(&mut rng, &cfg).0).collect();
        for (target, m) in [
            (Target::TmtA, cfg.tmt_a),
            (Target::TmtB, cfg.tmt_b),
            (Target::Maze, cfg.maze),
            (Target::Ufov, cfg.ufov),
        ] {
            let v: Vec<f64> = draws.iter().map(|t| t.get(target)).collect();
            assert!(v.iter().all(|x| *x > 0.0));
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let se_mean = m.sd / n.sqrt();
            // sd of the sample sd, allowing for skew from truncation
            let se_sd = m.sd / (2.0 * (n - 1.0)).sqrt() * 1.5;
            assert!((mean - m.mean).abs() < 3.0 * se_mean, "{target} mean {mean}");
            assert!((sd - m.sd).abs() < 3.0 * se_sd, "{target} sd {sd}");
        }
        for t in &draws {
            assert!(t.dsq.iter().all(|v| (1..=DSQ_MAX).contains(v)));
            assert!(t.wsq.iter().all(|v| (1..=WSQ_MAX).contains(v)));
        }
    }

    #[test]
    fn permutation_keeps_score_multisets() {
        let g = gen_cohort(&small()).unwrap();
        let t = &g.cohort.traits;
        assert_eq!(&permute_labels(t, 0), t);
        let p = permute_labels(t, 9);
        assert_eq!(p, permute_labels(t, 9));
        for target in Target::all() {
            let mut a: Vec<f64> = t.iter().map(|(_, d)| d.get(target)).collect();
            let mut b: Vec<f64> = p.iter().map(|(_, d)| d.get(target)).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cohort_round_trips_through_files() {
        let g = gen_cohort(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_cohort(&g, dir.path()).unwrap();
        let back = load_cohort(dir.path(), None).unwrap();
        assert_eq!(back.sessions, g.cohort.sessions);
        assert_eq!(back.traits, g.cohort.traits);
        assert_eq!(back.route, g.cohort.route);
        assert_eq!(load_ground_truth(dir.path()).unwrap(), g.truth);
    }

    #[test]
    fn config_rejects_bad_couplings() {
        let mut cfg = small();
        cfg.couplings[0].effect = f64::NAN;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.couplings[0].target = Target::Dsq(9);
        assert!(cfg.validate().is_err());
        let json = r#"{"couplings":[{"target":"tmt_b","channel":"gear","road":"arterial","band_s":1,"effect":0.5}]}"#;
        assert!(serde_json::from_str::<CohortConfig>(json).is_err());
        let ok: CohortConfig = serde_json::from_str(r#"{"seed":3}"#).unwrap();
        assert_eq!(ok.n_drivers, 23);
    }
}
