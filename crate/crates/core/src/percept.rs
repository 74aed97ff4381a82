//! Observation vector assembly and the per-episode seen-cell tracker that
//! measures map information gain.

use thiserror::Error;

use crate::simcore::{EpisodeState, GridRay, LidarScan, RobotState, BEAM_COUNT};
use crate::worldmap::GridMap;

/// Beams pooled into one observation entry.
pub const GROUP_SIZE: usize = 12;
/// Decimated LiDAR entries.
pub const LIDAR_GROUPS: usize = BEAM_COUNT / GROUP_SIZE;
/// Flattened observation length: relative goal (2), v, omega, 57 LiDAR groups.
pub const OBS_DIM: usize = 4 + LIDAR_GROUPS;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptError {
    #[error("scan has {0} beams, expected {BEAM_COUNT}")]
    ScanLength(usize),
    #[error("tracker is {tracker_w}x{tracker_h} but map is {map_w}x{map_h}")]
    TrackerMismatch {
        tracker_w: usize,
        tracker_h: usize,
        map_w: usize,
        map_h: usize,
    },
}

/// Minimum over each group of 12 consecutive beams.
pub fn decimate(ranges: &[f64]) -> Result<[f64; LIDAR_GROUPS], PerceptError> {
    if ranges.len() != BEAM_COUNT {
        return Err(PerceptError::ScanLength(ranges.len()));
    }
    let mut out = [0.0; LIDAR_GROUPS];
    for (o, group) in out.iter_mut().zip(ranges.chunks_exact(GROUP_SIZE)) {
        *o = group.iter().copied().fold(f64::INFINITY, f64::min);
    }
    Ok(out)
}

/// Optional unit scaling of the observation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ObsScaling {
    /// Raw metric values.
    #[default]
    Raw,
    /// LiDAR divided by max range, relative goal divided by `goal_scale`.
    Unit { max_range: f64, goal_scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Goal in the robot body frame, meters.
    pub rel_goal: [f64; 2],
    pub v: f64,
    pub omega: f64,
    pub lidar: [f64; LIDAR_GROUPS],
}

impl Observation {
    pub fn to_vec(&self, scaling: ObsScaling) -> Vec<f64> {
        let mut out = Vec::with_capacity(OBS_DIM);
        match scaling {
            ObsScaling::Raw => {
                out.extend_from_slice(&self.rel_goal);
                out.push(self.v);
                out.push(self.omega);
                out.extend_from_slice(&self.lidar);
            }
            ObsScaling::Unit {
                max_range,
                goal_scale,
            } => {
                out.extend(self.rel_goal.iter().map(|g| g / goal_scale));
                out.push(self.v);
                out.push(self.omega);
                out.extend(self.lidar.iter().map(|l| l / max_range));
            }
        }
        out
    }
}

pub fn build_observation(ep: &EpisodeState, scan: &LidarScan) -> Observation {
    let pose = ep.robot.pose;
    let (s, c) = pose.theta.sin_cos();
    let dx = ep.goal.x - pose.x;
    let dy = ep.goal.y - pose.y;
    Observation {
        rel_goal: [c * dx + s * dy, -s * dx + c * dy],
        v: ep.robot.v,
        omega: ep.robot.omega,
        lidar: decimate(scan.ranges()).expect("LidarScan always has BEAM_COUNT beams"),
    }
}

/// Seen/unseen flags over the episode map.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTracker {
    width: usize,
    height: usize,
    seen: Vec<bool>,
    seen_count: usize,
}

impl OccupancyTracker {
    pub fn new(map: &GridMap) -> Self {
        Self {
            width: map.width(),
            height: map.height(),
            seen: vec![false; map.width() * map.height()],
            seen_count: 0,
        }
    }

    pub fn reset(&mut self) {
        self.seen.iter_mut().for_each(|s| *s = false);
        self.seen_count = 0;
    }

    pub fn seen_count(&self) -> usize {
        self.seen_count
    }

    pub fn is_seen(&self, col: usize, row: usize) -> bool {
        self.seen[row * self.width + col]
    }

    /// Marks every cell each beam traverses, up to and including the cell it
    /// hit. Returns the number of newly seen cells.
    pub fn update(
        &mut self,
        map: &GridMap,
        state: &RobotState,
        scan: &LidarScan,
    ) -> Result<usize, PerceptError> {
        if map.width() != self.width || map.height() != self.height {
            return Err(PerceptError::TrackerMismatch {
                tracker_w: self.width,
                tracker_h: self.height,
                map_w: map.width(),
                map_h: map.height(),
            });
        }
        let before = self.seen_count;
        let origin = state.pose.position();
        for (i, &range) in scan.ranges().iter().enumerate() {
            let angle = state.pose.theta + LidarScan::beam_angle(i);
            for (col, row, t) in GridRay::new(map.resolution(), origin, angle) {
                if t > range {
                    break;
                }
                if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
                    break;
                }
                let idx = row as usize * self.width + col as usize;
                if !self.seen[idx] {
                    self.seen[idx] = true;
                    self.seen_count += 1;
                }
                if map.is_occupied_at(col, row) || t == range {
                    break;
                }
            }
        }
        Ok(self.seen_count - before)
    }

    /// Plain PGM (P2): 0 unseen, 1 seen free, 2 seen occupied; top row first.
    pub fn to_pgm(&self, map: &GridMap) -> String {
        let mut s = format!("P2\n{} {}\n2\n", self.width, self.height);
        for row in (0..self.height).rev() {
            let line: Vec<&str> = (0..self.width)
                .map(|col| {
                    if !self.seen[row * self.width + col] {
                        "0"
                    } else if map.is_occupied_at(col as i64, row as i64) {
                        "2"
                    } else {
                        "1"
                    }
                })
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Functional form of [`OccupancyTracker::update`].
pub fn update_tracker(
    tracker: &mut OccupancyTracker,
    map: &GridMap,
    state: &RobotState,
    scan: &LidarScan,
) -> Result<usize, PerceptError> {
    tracker.update(map, state, scan)
}
