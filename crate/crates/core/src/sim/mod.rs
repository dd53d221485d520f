//! Kinematic multi-UAV team simulator.
//!
//! A virtual team center flies straight legs from the start location through
//! one or two targets at the commanded speed. Robots hold line-abreast slots
//! (perpendicular to the leg heading in the horizontal plane) spaced by the
//! commanded formation spacing; when the formation rotates at a waypoint they
//! catch up to their new slots at a bounded speed. Each robot's yaw is the leg
//! heading plus independent Gaussian noise every step. Point-mass kinematics,
//! fixed `dt`.

mod calibration;
mod extract;
mod io;

pub use calibration::FeatureCalibration;
pub use extract::{cruise_stats, extract_features, CruiseStats, FormationPattern};
pub use io::{
    load_trajectory, save_trajectory, trajectory_from_bytes, trajectory_to_bytes, TRAJECTORY_MAGIC, TRAJECTORY_VERSION,
};

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeasibleBox;
use crate::rng::Seed;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// meters
    pub position: Vec3,
    /// m/s
    pub velocity: Vec3,
    /// (yaw, pitch, roll) in radians, yaw in (-pi, pi]
    pub orientation: Vec3,
}

impl RobotState {
    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.velocity)
            .chain(&self.orientation)
            .all(|v| v.is_finite())
    }
}

/// Time-ordered team states with uniform `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    id: String,
    team_size: usize,
    dt: f64,
    targets: Vec<Vec3>,
    /// Step-major: robot `r` at step `t` is `states[t * team_size + r]`.
    states: Vec<RobotState>,
}

impl Trajectory {
    pub fn new(
        id: impl Into<String>,
        team_size: usize,
        dt: f64,
        targets: Vec<Vec3>,
        states: Vec<RobotState>,
    ) -> Result<Self> {
        let t = Self {
            id: id.into(),
            team_size,
            dt,
            targets,
            states,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_steps(id: impl Into<String>, dt: f64, targets: Vec<Vec3>, steps: Vec<Vec<RobotState>>) -> Result<Self> {
        let team_size = steps.first().map_or(0, Vec::len);
        if let Some((t, s)) = steps.iter().enumerate().find(|(_, s)| s.len() != team_size) {
            return Err(Error::Trajectory(format!(
                "step {t} has {} states, expected {team_size}",
                s.len()
            )));
        }
        Self::new(id, team_size, dt, targets, steps.into_iter().flatten().collect())
    }

    fn validate(&self) -> Result<()> {
        if self.team_size == 0 {
            return Err(Error::Trajectory("team size must be positive".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Trajectory(format!("dt must be positive, got {}", self.dt)));
        }
        if !(1..=2).contains(&self.targets.len()) {
            return Err(Error::Trajectory(format!(
                "expected 1 or 2 targets, got {}",
                self.targets.len()
            )));
        }
        if !self.states.len().is_multiple_of(self.team_size) {
            return Err(Error::Trajectory(
                "state count is not a multiple of the team size".into(),
            ));
        }
        if self.num_steps() < 2 {
            return Err(Error::Trajectory(format!(
                "need at least 2 steps, got {}",
                self.num_steps()
            )));
        }
        if self.states.iter().any(|s| !s.is_finite()) {
            return Err(Error::Trajectory("non-finite robot state".into()));
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn team_size(&self) -> usize {
        self.team_size
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn targets(&self) -> &[Vec3] {
        &self.targets
    }

    pub fn num_steps(&self) -> usize {
        self.states.len() / self.team_size
    }

    pub fn step(&self, t: usize) -> &[RobotState] {
        &self.states[t * self.team_size..(t + 1) * self.team_size]
    }

    pub fn steps(&self) -> impl Iterator<Item = &[RobotState]> {
        self.states.chunks(self.team_size)
    }

    pub fn states(&self) -> &[RobotState] {
        &self.states
    }
}

/// The three commanded knobs of a task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// m/s
    pub commanded_speed: f64,
    /// meters between adjacent slots
    pub formation_spacing: f64,
    /// radians
    pub heading_noise_std: f64,
}

impl ControlParams {
    pub fn to_array(self) -> [f64; 3] {
        [self.commanded_speed, self.formation_spacing, self.heading_noise_std]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self {
            commanded_speed: v[0],
            formation_spacing: v[1],
            heading_noise_std: v[2],
        }
    }

    pub fn sample<R: Rng + ?Sized>(control_box: &FeasibleBox, rng: &mut R) -> Self {
        Self::from_array(control_box.sample_uniform(rng))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub team_size: usize,
    /// seconds
    pub dt: f64,
    /// Scenario extent; targets are drawn uniformly in `[0, x] x [0, y] x [0, z]`.
    pub scenario: Vec3,
    pub start: Vec3,
    /// Adjacent-slot spacing of the reference formation that formation error
    /// is measured against.
    pub nominal_spacing: f64,
    pub max_steps: usize,
    /// Slot catch-up speed cap as a multiple of the commanded speed.
    pub catch_up_factor: f64,
    /// Bounds on (commanded_speed, formation_spacing, heading_noise_std).
    pub control_box: FeasibleBox,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            team_size: 6,
            dt: 0.1,
            scenario: [200.0, 200.0, 30.0],
            start: [100.0, 100.0, 0.0],
            nominal_spacing: 2.0,
            max_steps: 20_000,
            catch_up_factor: 2.0,
            control_box: FeasibleBox {
                lower: [2.0, 2.0, 0.0],
                upper: [12.0, 12.0, 1.2],
            },
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.team_size < 2 {
            return Err(Error::Config(format!("team_size must be >= 2, got {}", self.team_size)));
        }
        if !(self.dt > 0.0 && self.catch_up_factor >= 1.0 && self.nominal_spacing >= 0.0) {
            return Err(Error::Config(
                "dt > 0, catch_up_factor >= 1 and nominal_spacing >= 0 required".into(),
            ));
        }
        if self.scenario.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::Config(format!(
                "scenario extent must be positive: {:?}",
                self.scenario
            )));
        }
        self.control_box.validate()?;
        if self.control_box.lower[0] <= 0.0 || self.control_box.lower[1] <= 0.0 || self.control_box.lower[2] < 0.0 {
            return Err(Error::Config(
                "control box needs speed > 0, spacing > 0, noise >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn reference_pattern(&self) -> FormationPattern {
        FormationPattern::line_abreast(self.nominal_spacing)
    }

    pub fn calibration(&self) -> FeatureCalibration {
        FeatureCalibration::new(self.team_size, self.nominal_spacing)
    }

    pub fn feature_box(&self) -> FeasibleBox {
        self.calibration().feature_box(&self.control_box)
    }

    /// One or two targets, uniform in the scenario box.
    pub fn sample_targets(&self, seed: Seed) -> Vec<Vec3> {
        let mut rng = seed.derive("targets").rng();
        let n = if rng.random_bool(0.5) { 1 } else { 2 };
        (0..n)
            .map(|_| std::array::from_fn(|d| rng.random_range(0.0..=self.scenario[d])))
            .collect()
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x - 2.0 * PI
    } else {
        x
    }
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

struct Leg {
    yaw: f64,
    pitch: f64,
}

impl Leg {
    fn toward(from: Vec3, to: Vec3, previous_yaw: f64) -> Self {
        let d = sub(to, from);
        let horizontal = d[0].hypot(d[1]);
        let yaw = if horizontal > 1e-9 {
            d[1].atan2(d[0])
        } else {
            previous_yaw
        };
        Self {
            yaw,
            pitch: d[2].atan2(horizontal),
        }
    }
}

fn slot(center: Vec3, yaw: f64, index: usize, team_size: usize, spacing: f64) -> Vec3 {
    let lateral = (index as f64 - (team_size as f64 - 1.0) / 2.0) * spacing;
    [
        center[0] - yaw.sin() * lateral,
        center[1] + yaw.cos() * lateral,
        center[2],
    ]
}

/// Flies one task with fresh seeded targets.
pub fn simulate(params: &ControlParams, config: &SimConfig, seed: Seed, id: impl Into<String>) -> Result<Trajectory> {
    let targets = config.sample_targets(seed);
    simulate_with_targets(params, config, seed, id, targets)
}

pub fn simulate_with_targets(
    params: &ControlParams,
    config: &SimConfig,
    seed: Seed,
    id: impl Into<String>,
    targets: Vec<Vec3>,
) -> Result<Trajectory> {
    config.validate()?;
    let cb = &config.control_box;
    let raw = params.to_array();
    // Tolerate rounding at the box faces.
    if (0..3).any(|d| raw[d] < cb.lower[d] - 1e-9 || raw[d] > cb.upper[d] + 1e-9) {
        return Err(Error::Config(format!(
            "control parameters {params:?} outside the control box"
        )));
    }
    let n = config.team_size;
    let v = params.commanded_speed;
    let spacing = params.formation_spacing;
    let sigma = params.heading_noise_std;
    let dt = config.dt;
    let step_len = v * dt;
    let max_disp = config.catch_up_factor * step_len;
    let mut noise_rng = seed.derive("heading").rng();
    let mut noisy_yaw = |base: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut noise_rng);
        wrap_angle(base + sigma * z)
    };

    let mut center = config.start;
    let mut leg_index = 0;
    let mut leg = Leg::toward(center, targets[0], 0.0);
    let mut states = Vec::with_capacity(n * 256);

    let dir0 = sub(targets[0], center);
    let len0 = norm(dir0);
    let v0 = if len0 > 0.0 {
        [dir0[0] / len0 * v, dir0[1] / len0 * v, dir0[2] / len0 * v]
    } else {
        [0.0; 3]
    };
    let mut positions: Vec<Vec3> = (0..n).map(|i| slot(center, leg.yaw, i, n, spacing)).collect();
    for p in &positions {
        states.push(RobotState {
            position: *p,
            velocity: v0,
            orientation: [noisy_yaw(leg.yaw), leg.pitch, 0.0],
        });
    }

    let mut steps = 1;
    loop {
        if steps >= config.max_steps {
            return Err(Error::TargetUnreachable {
                index: leg_index,
                position: targets[leg_index],
                max_steps: config.max_steps,
            });
        }
        let target = targets[leg_index];
        let to_target = sub(target, center);
        let dist = norm(to_target);
        let arrived = dist <= step_len;
        if arrived {
            center = target;
        } else {
            let k = step_len / dist;
            center = [
                center[0] + to_target[0] * k,
                center[1] + to_target[1] * k,
                center[2] + to_target[2] * k,
            ];
        }
        for (i, pos) in positions.iter_mut().enumerate() {
            let goal = slot(center, leg.yaw, i, n, spacing);
            let mut disp = sub(goal, *pos);
            let len = norm(disp);
            if len > max_disp {
                let k = max_disp / len;
                disp = [disp[0] * k, disp[1] * k, disp[2] * k];
            }
            *pos = [pos[0] + disp[0], pos[1] + disp[1], pos[2] + disp[2]];
            states.push(RobotState {
                position: *pos,
                velocity: [disp[0] / dt, disp[1] / dt, disp[2] / dt],
                orientation: [noisy_yaw(leg.yaw), leg.pitch, 0.0],
            });
        }
        steps += 1;
        if arrived {
            leg_index += 1;
            if leg_index == targets.len() {
                break;
            }
            leg = Leg::toward(center, targets[leg_index], leg.yaw);
        }
    }
    Trajectory::new(id, n, dt, targets, states)
}
