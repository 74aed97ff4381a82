//! Differential-drive kinematics, disc collision checks, grid-traversal LiDAR
//! and the arrival / collision / timeout episode lifecycle.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::worldmap::{normalize_angle, GridMap, Point2, Pose2};

/// Raw beams per scan.
pub const BEAM_COUNT: usize = 684;
/// Half field of view, radians (135 degrees).
pub const HALF_FOV: f64 = 0.75 * PI;
/// Angular spacing between adjacent beams.
pub const BEAM_SPACING: f64 = 2.0 * HALF_FOV / (BEAM_COUNT - 1) as f64;

pub const V_MAX: f64 = 0.5;
pub const OMEGA_MAX: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("ray origin ({x:.4}, {y:.4}) lies in an occupied cell or outside the map")]
    OriginBlocked { x: f64, y: f64 },
    #[error("episode already finished with status {0}")]
    EpisodeFinished(EpisodeStatus),
    #[error("non-finite action ({0}, {1})")]
    NonFiniteAction(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub robot_radius: f64,
    pub max_range: f64,
    pub d_min: f64,
    pub train_timeout: usize,
    pub eval_timeout: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            robot_radius: 0.2,
            max_range: 10.0,
            d_min: 0.5,
            train_timeout: 500,
            eval_timeout: 1500,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [self.dt, self.robot_radius, self.max_range, self.d_min];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err("sim: dt, robot_radius, max_range and d_min must be positive".into());
        }
        if self.train_timeout == 0 || self.eval_timeout == 0 {
            return Err("sim: timeouts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState {
    pub pose: Pose2,
    /// Realized linear velocity, m/s.
    pub v: f64,
    /// Realized angular velocity, rad/s.
    pub omega: f64,
}

/// Commanded velocities in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action {
    pub v: f64,
    pub omega: f64,
}

impl Action {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    /// Clamps into `[0, 0.5] x [-1, 1]`; the flag is set when anything moved.
    pub fn clamped(self) -> (Action, bool) {
        let v = self.v.clamp(0.0, V_MAX);
        let omega = self.omega.clamp(-OMEGA_MAX, OMEGA_MAX);
        (Action { v, omega }, v != self.v || omega != self.omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    ranges: Vec<f64>,
}

impl LidarScan {
    /// Wraps raw ranges; length must be [`BEAM_COUNT`].
    pub fn from_ranges(ranges: Vec<f64>) -> Option<Self> {
        (ranges.len() == BEAM_COUNT).then_some(Self { ranges })
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn min_range(&self) -> f64 {
        self.ranges.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Body-frame angle of beam `i`.
    pub fn beam_angle(i: usize) -> f64 {
        -HALF_FOV + i as f64 * BEAM_SPACING
    }
}

/// Cells visited by a ray, in order, each with the ray parameter (meters)
/// at which the ray enters it. Amanatides-Woo traversal.
pub struct GridRay {
    col: i64,
    row: i64,
    step_col: i64,
    step_row: i64,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    t: f64,
}

impl GridRay {
    pub fn new(resolution: f64, origin: Point2, angle: f64) -> Self {
        let (dy, dx) = angle.sin_cos();
        let col = (origin.x / resolution).floor() as i64;
        let row = (origin.y / resolution).floor() as i64;
        let (step_col, t_max_x, t_delta_x) = axis_setup(origin.x, dx, col, resolution);
        let (step_row, t_max_y, t_delta_y) = axis_setup(origin.y, dy, row, resolution);
        Self {
            col,
            row,
            step_col,
            step_row,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            t: 0.0,
        }
    }
}

fn axis_setup(origin: f64, dir: f64, cell: i64, res: f64) -> (i64, f64, f64) {
    if dir > 0.0 {
        (1, ((cell + 1) as f64 * res - origin) / dir, res / dir)
    } else if dir < 0.0 {
        (-1, (cell as f64 * res - origin) / dir, -res / dir)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

impl Iterator for GridRay {
    /// `(col, row, t_enter)`
    type Item = (i64, i64, f64);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        let out = (self.col, self.row, self.t);
        if self.t_max_x < self.t_max_y {
            self.t = self.t_max_x;
            self.t_max_x += self.t_delta_x;
            self.col += self.step_col;
        } else {
            self.t = self.t_max_y;
            self.t_max_y += self.t_delta_y;
            self.row += self.step_row;
        }
        Some(out)
    }
}

/// Distance along the ray to the first occupied cell boundary, clipped at
/// `max_range`.
pub fn raycast(map: &GridMap, origin: Point2, angle: f64, max_range: f64) -> Result<f64, SimError> {
    let mut walk = GridRay::new(map.resolution(), origin, angle);
    let Some((c0, r0, _)) = walk.next() else {
        unreachable!()
    };
    if map.is_occupied_at(c0, r0) {
        return Err(SimError::OriginBlocked {
            x: origin.x,
            y: origin.y,
        });
    }
    for (col, row, t) in walk {
        if t >= max_range {
            return Ok(max_range);
        }
        if map.is_occupied_at(col, row) {
            return Ok(t);
        }
    }
    unreachable!("grid rays are unbounded")
}

/// Full 684-beam scan from the robot pose. Beam `i` points at
/// `theta - 135deg + i * 270deg / 683`.
pub fn scan(map: &GridMap, state: &RobotState, max_range: f64) -> Result<LidarScan, SimError> {
    let origin = state.pose.position();
    let ranges = (0..BEAM_COUNT)
        .map(|i| {
            raycast(
                map,
                origin,
                state.pose.theta + LidarScan::beam_angle(i),
                max_range,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LidarScan { ranges })
}

/// Exact unicycle integration over `dt`.
pub fn integrate_pose(pose: &Pose2, v: f64, omega: f64, dt: f64) -> Pose2 {
    let (s0, c0) = pose.theta.sin_cos();
    if omega.abs() < 1e-6 {
        Pose2 {
            x: pose.x + v * dt * c0,
            y: pose.y + v * dt * s0,
            theta: normalize_angle(pose.theta + omega * dt),
        }
    } else {
        let th1 = pose.theta + omega * dt;
        let (s1, c1) = th1.sin_cos();
        let r = v / omega;
        Pose2 {
            x: pose.x + r * (s1 - s0),
            y: pose.y - r * (c1 - c0),
            theta: normalize_angle(th1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpisodeStatus {
    Running,
    Arrived,
    Collided,
    TimedOut,
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeStatus::Running => "running",
            EpisodeStatus::Arrived => "arrived",
            EpisodeStatus::Collided => "collided",
            EpisodeStatus::TimedOut => "timed_out",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "running" => EpisodeStatus::Running,
            "arrived" => EpisodeStatus::Arrived,
            "collided" => EpisodeStatus::Collided,
            "timed_out" => EpisodeStatus::TimedOut,
            _ => return None,
        })
    }
}

impl fmt::Display for EpisodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What happened during one call to [`EpisodeState::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub status: EpisodeStatus,
    /// The command was outside the action box and got clamped.
    pub clamped: bool,
    pub applied: Action,
    /// Goal distance before the step.
    pub prev_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub robot: RobotState,
    pub goal: Point2,
    pub step_count: usize,
    pub status: EpisodeStatus,
    pub timeout: usize,
}

impl EpisodeState {
    pub fn new(start: Pose2, goal: Point2, timeout: usize) -> Self {
        Self {
            robot: RobotState {
                pose: start,
                v: 0.0,
                omega: 0.0,
            },
            goal,
            step_count: 0,
            status: EpisodeStatus::Running,
            timeout,
        }
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.robot.pose.position().distance(&self.goal)
    }

    /// Applies one control period. Collision freezes the pose at the last
    /// free pose; arrival is checked before timeout.
    pub fn step(
        &mut self,
        action: Action,
        cfg: &SimConfig,
        map: &GridMap,
    ) -> Result<StepInfo, SimError> {
        if self.status.is_terminal() {
            return Err(SimError::EpisodeFinished(self.status));
        }
        if !(action.v.is_finite() && action.omega.is_finite()) {
            return Err(SimError::NonFiniteAction(action.v, action.omega));
        }
        let prev_distance = self.distance_to_goal();
        let (applied, clamped) = action.clamped();
        self.robot.v = applied.v;
        self.robot.omega = applied.omega;

        let old = self.robot.pose;
        let mid = integrate_pose(&old, applied.v, applied.omega, 0.5 * cfg.dt);
        let new = integrate_pose(&old, applied.v, applied.omega, cfg.dt);
        let hit = map.disc_collides(mid.position(), cfg.robot_radius)
            || map.disc_collides(new.position(), cfg.robot_radius);

        self.step_count += 1;
        self.status = if hit {
            EpisodeStatus::Collided
        } else {
            self.robot.pose = new;
            if self.distance_to_goal() <= cfg.d_min {
                EpisodeStatus::Arrived
            } else if self.step_count >= self.timeout {
                EpisodeStatus::TimedOut
            } else {
                EpisodeStatus::Running
            }
        };
        Ok(StepInfo {
            status: self.status,
            clamped,
            applied,
            prev_distance,
        })
    }
}

/// Rows of the debugging trajectory dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub state: RobotState,
    pub reward: f64,
    pub status: EpisodeStatus,
    /// Optional per-term reward breakdown appended as extra columns.
    pub terms: Vec<(&'static str, f64)>,
}

/// CSV `step,x,y,theta,v,omega,reward,status[,term...]`.
pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from("step,x,y,theta,v,omega,reward,status");
    if let Some(first) = rows.first() {
        for (name, _) in &first.terms {
            out.push(',');
            out.push_str(name);
        }
    }
    out.push('\n');
    for r in rows {
        let p = r.state.pose;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            r.step, p.x, p.y, p.theta, r.state.v, r.state.omega, r.reward, r.status
        ));
        for (_, v) in &r.terms {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
