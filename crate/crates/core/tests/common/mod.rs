//! Independent oracles shared by the integration test targets.
#![allow(dead_code)]

use std::collections::HashSet;

use navforge::nn::{DenseNet, Matrix};
use navforge::simcore::{LidarScan, RobotState};
use navforge::worldmap::{Cell, CellIndex, GridMap};
use navforge::Point2;

/// Fixed-step ray marcher: parameter of the first sample inside an occupied
/// cell or outside the grid.
pub fn march(map: &GridMap, o: Point2, angle: f64, max_range: f64, step: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    let res = map.resolution();
    let n = (max_range / step).ceil() as usize;
    for k in 1..=n {
        let t = k as f64 * step;
        let (x, y) = (o.x + t * c, o.y + t * s);
        let (col, row) = ((x / res).floor(), (y / res).floor());
        let outside =
            col < 0.0 || row < 0.0 || col >= map.width() as f64 || row >= map.height() as f64;
        if outside
            || map.cell(CellIndex {
                col: col as usize,
                row: row as usize,
            }) == Cell::Occupied
        {
            return t.min(max_range);
        }
    }
    max_range
}

/// Cells a segment of length `range` passes through, found by sorting every
/// grid-line crossing and sampling the midpoint of each gap. When the beam
/// stopped short of `max_range` the occupied cell just past its end is added.
pub fn swept_cells(
    map: &GridMap,
    o: Point2,
    angle: f64,
    range: f64,
    max_range: f64,
) -> HashSet<(i64, i64)> {
    let (s, c) = angle.sin_cos();
    let res = map.resolution();
    let mut ts = vec![0.0, range];
    for (p0, d) in [(o.x, c), (o.y, s)] {
        if d.abs() < 1e-15 {
            continue;
        }
        let end = p0 + range * d;
        let (lo, hi) = (p0.min(end), p0.max(end));
        let mut k = (lo / res).ceil() as i64;
        while (k as f64) * res <= hi {
            let t = ((k as f64) * res - p0) / d;
            if t > 0.0 && t < range {
                ts.push(t);
            }
            k += 1;
        }
    }
    ts.sort_by(f64::total_cmp);
    let cell = |t: f64| {
        (
            ((o.x + t * c) / res).floor() as i64,
            ((o.y + t * s) / res).floor() as i64,
        )
    };
    let mut out = HashSet::new();
    for w in ts.windows(2) {
        if w[1] > w[0] {
            out.insert(cell(0.5 * (w[0] + w[1])));
        }
    }
    if range < max_range {
        // Probe just past the hit, staying short of the next grid line.
        let mut next = range + 1e-7;
        for (p0, d) in [(o.x, c), (o.y, s)] {
            if d.abs() < 1e-15 {
                continue;
            }
            let mut k = ((p0 + range * d) / res).floor() as i64 + if d > 0.0 { 1 } else { 0 };
            loop {
                let t = ((k as f64) * res - p0) / d;
                if t > range + 1e-12 {
                    next = next.min(t);
                    break;
                }
                k += if d > 0.0 { 1 } else { -1 };
            }
        }
        out.insert(cell(0.5 * (range + next)));
    }
    out.retain(|&(col, row)| {
        col >= 0 && row >= 0 && (col as usize) < map.width() && (row as usize) < map.height()
    });
    out
}

pub fn scan_cells(
    map: &GridMap,
    st: &RobotState,
    sc: &LidarScan,
    max_range: f64,
) -> HashSet<(i64, i64)> {
    let mut all = HashSet::new();
    for (i, &r) in sc.ranges().iter().enumerate() {
        all.extend(swept_cells(
            map,
            st.pose.position(),
            st.pose.theta + LidarScan::beam_angle(i),
            r,
            max_range,
        ));
    }
    all
}

/// Straight-line forward pass read through the public parameter accessors.
pub fn oracle_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (li, l) in net.layers().iter().enumerate() {
        let mut out = vec![0.0; l.n_out];
        for (o, slot) in out.iter_mut().enumerate() {
            let mut z = net.bias(li, o);
            for (i, hv) in h.iter().enumerate() {
                z += net.weight(li, o, i) * hv;
            }
            *slot = l.activation.apply(z);
        }
        h = out;
    }
    h
}

/// Smallest |pre-activation| over every layer with a kink, for screening
/// finite-difference points that sit on a ReLU corner.
pub fn min_relu_margin(net: &DenseNet, x: &Matrix) -> f64 {
    let mut best = f64::INFINITY;
    for r in 0..x.rows() {
        let mut h = x.row(r).to_vec();
        for (li, l) in net.layers().iter().enumerate() {
            let mut out = vec![0.0; l.n_out];
            for (o, slot) in out.iter_mut().enumerate() {
                let mut z = net.bias(li, o);
                for (i, hv) in h.iter().enumerate() {
                    z += net.weight(li, o, i) * hv;
                }
                if l.activation == navforge::nn::Activation::ReLU {
                    best = best.min(z.abs());
                }
                *slot = l.activation.apply(z);
            }
            h = out;
        }
    }
    best
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central differences of `f` with respect to every entry of `params`.
/// `|a - b|_2 / max(|a|_2, |b|_2, floor)` over whole gradient vectors.
pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / norm(a).max(norm(b)).max(1e-12)
}

pub fn central_diff(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Scalar Adam reference.
pub struct ScalarAdam {
    pub lr: f64,
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            b1: 0.9,
            b2: 0.999,
            eps: 1e-8,
            m: 0.0,
            v: 0.0,
            t: 0,
        }
    }

    pub fn step(&mut self, p: f64, g: f64) -> f64 {
        self.t += 1;
        self.m = self.b1 * self.m + (1.0 - self.b1) * g;
        self.v = self.b2 * self.v + (1.0 - self.b2) * g * g;
        let mh = self.m / (1.0 - self.b1.powi(self.t));
        let vh = self.v / (1.0 - self.b2.powi(self.t));
        p - self.lr * mh / (vh.sqrt() + self.eps)
    }
}
