use serde::{Deserialize, Serialize};

use super::{norm, sub, Trajectory};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Reference line-abreast formation: slots `i` and `j` sit `spacing * |i - j|` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationPattern {
    pub spacing: f64,
}

impl FormationPattern {
    pub fn line_abreast(spacing: f64) -> Self {
        Self { spacing }
    }

    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        self.spacing * i.abs_diff(j) as f64
    }
}

/// Feature extraction:
///
/// - `avg_speed`: mean speed over every step and robot;
/// - `formation_error`: time mean of the mean absolute deviation of pairwise
///   robot distances from the reference pattern's pairwise distances;
/// - `heading_variance`: one minus the mean resultant length of the per-step
///   yaw increments, pooled over robots.
pub fn extract_features(traj: &Trajectory, pattern: &FormationPattern) -> Result<FeatureVector> {
    let steps = traj.num_steps();
    if steps < 2 {
        return Err(Error::Trajectory(format!("need at least 2 steps, got {steps}")));
    }
    let n = traj.team_size();

    let speed_sum: f64 = traj.states().iter().map(|s| norm(s.velocity)).sum();
    let avg_speed = speed_sum / traj.states().len() as f64;

    let formation_error = if n < 2 {
        0.0
    } else {
        let pairs = n * (n - 1) / 2;
        let total: f64 = traj
            .steps()
            .map(|states| {
                let mut dev = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        let d = norm(sub(states[i].position, states[j].position));
                        dev += (d - pattern.pair_distance(i, j)).abs();
                    }
                }
                dev / pairs as f64
            })
            .sum();
        total / steps as f64
    };

    let (mut c, mut s) = (0.0, 0.0);
    for t in 1..steps {
        let (prev, cur) = (traj.step(t - 1), traj.step(t));
        for r in 0..n {
            let delta = cur[r].orientation[0] - prev[r].orientation[0];
            c += delta.cos();
            s += delta.sin();
        }
    }
    let count = ((steps - 1) * n) as f64;
    let resultant = c.hypot(s) / count;
    let heading_variance = (1.0 - resultant).clamp(0.0, 1.0);

    Ok(FeatureVector::new(avg_speed, formation_error, heading_variance))
}

/// Speed and adjacent-slot spacing measured over cruise steps only, i.e. steps
/// where every robot moves with the same nonzero velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CruiseStats {
    pub cruise_steps: usize,
    pub mean_speed: f64,
    pub mean_spacing: f64,
}

pub fn cruise_stats(traj: &Trajectory) -> Option<CruiseStats> {
    let n = traj.team_size();
    let (mut count, mut speed, mut spacing) = (0usize, 0.0, 0.0);
    for states in traj.steps() {
        let v0 = states[0].velocity;
        let s0 = norm(v0);
        let tol = 1e-9 * s0.max(1.0);
        if s0 == 0.0 || states.iter().any(|st| norm(sub(st.velocity, v0)) > tol) {
            continue;
        }
        count += 1;
        speed += s0;
        if n > 1 {
            let gaps: f64 = (1..n)
                .map(|i| norm(sub(states[i].position, states[i - 1].position)))
                .sum();
            spacing += gaps / (n - 1) as f64;
        }
    }
    (count > 0).then(|| CruiseStats {
        cruise_steps: count,
        mean_speed: speed / count as f64,
        mean_spacing: spacing / count as f64,
    })
}
