//! Metric occupancy grids, the `.gridmap` text format, procedural map
//! generation and free-space pose sampling.
//!
//! World frame: the origin sits on the outer corner of cell `(0, 0)`, `x`
//! grows with the column index and `y` with the row index. In the text format
//! the first row line is the *top* row (largest `y`), so the file reads like a
//! picture of the map.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default map discretization in meters per cell.
pub const DEFAULT_RESOLUTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("map generation failed after {attempts} attempts: {msg}")]
    Generation { attempts: usize, msg: String },
    #[error("no free cell with clearance {clearance} m")]
    NoFreePose { clearance: f64 },
    #[error("invalid generator parameter: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Occupied,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Position plus heading, heading in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid maps -pi to pi, which is the closed end we want
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
}

/// Rasterized workspace. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    resolution: f64,
    cells: Vec<Cell>,
}

impl GridMap {
    /// Builds a map from row-major cells (row 0 = lowest `y`). The boundary
    /// ring is forced to `Occupied`.
    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        mut cells: Vec<Cell>,
    ) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::InvalidSpec("zero map dimension".into()));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(MapError::InvalidSpec(format!(
                "resolution {resolution} must be > 0"
            )));
        }
        if cells.len() != width * height {
            return Err(MapError::InvalidSpec(format!(
                "{} cells for a {width}x{height} map",
                cells.len()
            )));
        }
        for row in 0..height {
            for col in 0..width {
                if row == 0 || col == 0 || row + 1 == height || col + 1 == width {
                    cells[row * width + col] = Cell::Occupied;
                }
            }
        }
        Ok(Self {
            width,
            height,
            resolution,
            cells,
        })
    }

    /// Closed room with no interior obstacles.
    pub fn empty_room(width: usize, height: usize, resolution: f64) -> Result<Self, MapError> {
        Self::from_cells(width, height, resolution, vec![Cell::Free; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    pub fn diagonal_m(&self) -> f64 {
        self.width_m().hypot(self.height_m())
    }

    #[inline]
    pub fn cell(&self, c: CellIndex) -> Cell {
        self.cells[c.row * self.width + c.col]
    }

    /// Cell at signed coordinates; anything outside the grid counts as occupied.
    #[inline]
    pub fn is_occupied_at(&self, col: i64, row: i64) -> bool {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return true;
        }
        self.cells[row as usize * self.width + col as usize] == Cell::Occupied
    }

    pub fn world_to_cell(&self, p: Point2) -> Option<CellIndex> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return None;
        }
        let col = (p.x / self.resolution).floor();
        let row = (p.y / self.resolution).floor();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some(CellIndex {
            col: col as usize,
            row: row as usize,
        })
    }

    pub fn cell_center(&self, c: CellIndex) -> Point2 {
        Point2::new(
            (c.col as f64 + 0.5) * self.resolution,
            (c.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn free_cell_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Free).count()
    }

    /// Occupied fraction over the interior (non-boundary) cells.
    pub fn interior_density(&self) -> f64 {
        if self.width < 3 || self.height < 3 {
            return 1.0;
        }
        let mut occ = 0usize;
        for row in 1..self.height - 1 {
            for col in 1..self.width - 1 {
                if self.cells[row * self.width + col] == Cell::Occupied {
                    occ += 1;
                }
            }
        }
        occ as f64 / ((self.width - 2) * (self.height - 2)) as f64
    }

    /// Distance from `p` to the nearest occupied cell, searched out to
    /// `limit` meters. Returns `limit` when nothing is closer.
    pub fn clearance_at(&self, p: Point2, limit: f64) -> f64 {
        let r = self.resolution;
        let reach = (limit / r).ceil() as i64 + 1;
        let c0 = (p.x / r).floor() as i64;
        let r0 = (p.y / r).floor() as i64;
        let mut best = limit;
        for row in r0 - reach..=r0 + reach {
            for col in c0 - reach..=c0 + reach {
                if !self.is_occupied_at(col, row) {
                    continue;
                }
                let d = point_rect_distance(p, col, row, r);
                if d < best {
                    best = d;
                }
            }
        }
        best
    }

    /// True when the disc of `radius` at `p` touches an occupied cell or
    /// leaves the map.
    pub fn disc_collides(&self, p: Point2, radius: f64) -> bool {
        let r = self.resolution;
        let c_lo = ((p.x - radius) / r).floor() as i64;
        let c_hi = ((p.x + radius) / r).floor() as i64;
        let r_lo = ((p.y - radius) / r).floor() as i64;
        let r_hi = ((p.y + radius) / r).floor() as i64;
        for row in r_lo..=r_hi {
            for col in c_lo..=c_hi {
                if self.is_occupied_at(col, row) && point_rect_distance(p, col, row, r) < radius {
                    return true;
                }
            }
        }
        false
    }

    /// Serializes to the `.gridmap` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height + 32);
        s.push_str(&format!(
            "{} {} {}\n",
            self.width, self.height, self.resolution
        ));
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                s.push(match self.cells[row * self.width + col] {
                    Cell::Free => '.',
                    Cell::Occupied => '#',
                });
            }
            s.push('\n');
        }
        s
    }

    /// Hex SHA-256 of the serialized map, used in run manifests.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of free cells reachable (4-connected) from `start`.
    pub fn flood_fill_count(&self, start: CellIndex) -> usize {
        if self.cell(start) == Cell::Occupied {
            return 0;
        }
        let labels = self.component_labels();
        let target = labels[start.row * self.width + start.col];
        labels.iter().filter(|l| **l == target).count()
    }

    /// Labels 4-connected free components; occupied cells get `usize::MAX`.
    fn component_labels(&self) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.cells.len()];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for seed in 0..self.cells.len() {
            if self.cells[seed] == Cell::Occupied || labels[seed] != usize::MAX {
                continue;
            }
            labels[seed] = next;
            queue.push_back(seed);
            while let Some(i) = queue.pop_front() {
                let (col, row) = (i % self.width, i / self.width);
                let mut visit = |j: usize| {
                    if self.cells[j] == Cell::Free && labels[j] == usize::MAX {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                };
                if col > 0 {
                    visit(i - 1);
                }
                if col + 1 < self.width {
                    visit(i + 1);
                }
                if row > 0 {
                    visit(i - self.width);
                }
                if row + 1 < self.height {
                    visit(i + self.width);
                }
            }
            next += 1;
        }
        labels
    }

    /// True when all free cells form a single 4-connected component.
    pub fn free_space_connected(&self) -> bool {
        match self.cells.iter().position(|c| *c == Cell::Free) {
            None => false,
            Some(i) => {
                let start = CellIndex {
                    col: i % self.width,
                    row: i / self.width,
                };
                self.flood_fill_count(start) == self.free_cell_count()
            }
        }
    }
}

fn point_rect_distance(p: Point2, col: i64, row: i64, res: f64) -> f64 {
    let x0 = col as f64 * res;
    let y0 = row as f64 * res;
    let dx = (x0 - p.x).max(0.0).max(p.x - (x0 + res));
    let dy = (y0 - p.y).max(0.0).max(p.y - (y0 + res));
    dx.hypot(dy)
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses `.gridmap` text: header `width height resolution`, then `height`
/// rows of `#`/`.`, top row first.
pub fn load_map(text: &str) -> Result<GridMap, MapError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(MapError::Parse {
        line: 1,
        msg: "empty map file".into(),
    })?;
    let herr = |msg: &str| MapError::Parse {
        line: hline + 1,
        msg: msg.to_string(),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(herr("header must be `width height resolution`"));
    }
    let width: usize = fields[0].parse().map_err(|_| herr("bad width"))?;
    let height: usize = fields[1].parse().map_err(|_| herr("bad height"))?;
    let resolution: f64 = fields[2].parse().map_err(|_| herr("bad resolution"))?;
    if width == 0 || height == 0 {
        return Err(herr("zero dimension"));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(herr("resolution must be positive"));
    }

    let mut cells = vec![Cell::Free; width * height];
    let mut rows_read = 0;
    for (lineno, line) in lines {
        let line = line.trim_end();
        if rows_read == height {
            return Err(MapError::Parse {
                line: lineno + 1,
                msg: format!("more than {height} rows"),
            });
        }
        if line.chars().count() != width {
            return Err(MapError::Parse {
                line: lineno + 1,
                msg: format!("row has {} cells, expected {width}", line.chars().count()),
            });
        }
        let row = height - 1 - rows_read;
        for (col, ch) in line.chars().enumerate() {
            cells[row * width + col] = match ch {
                '#' => Cell::Occupied,
                '.' => Cell::Free,
                other => {
                    return Err(MapError::Parse {
                        line: lineno + 1,
                        msg: format!("unexpected character {other:?}"),
                    })
                }
            };
        }
        rows_read += 1;
    }
    if rows_read != height {
        return Err(MapError::Parse {
            line: text.lines().count() + 1,
            msg: format!("expected {height} rows, found {rows_read}"),
        });
    }
    GridMap::from_cells(width, height, resolution, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoomStyle {
    /// Single hall with scattered rectangular blocks.
    Open,
    /// Hall split into a grid of rooms by interior walls with door gaps,
    /// plus scattered blocks.
    Rooms,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapGenSpec {
    pub size_m: f64,
    pub obstacle_density: f64,
    pub room_style: RoomStyle,
    pub resolution: f64,
}

impl MapGenSpec {
    pub fn new(size_m: f64, obstacle_density: f64, room_style: RoomStyle) -> Self {
        Self {
            size_m,
            obstacle_density,
            room_style,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

const GEN_ATTEMPTS: usize = 64;
/// Allowed relative deviation of the realized interior density.
pub const DENSITY_TOLERANCE: f64 = 0.1;

/// Deterministic procedural map. Free space is a single connected component
/// and the interior density lies within 10% of the request.
pub fn generate_map(seed: u64, spec: &MapGenSpec) -> Result<GridMap, MapError> {
    if !(0.0..=0.4).contains(&spec.obstacle_density) {
        return Err(MapError::InvalidSpec(format!(
            "obstacle density {} outside [0, 0.4]",
            spec.obstacle_density
        )));
    }
    if !(spec.resolution > 0.0) || !(spec.size_m > 0.0) {
        return Err(MapError::InvalidSpec(
            "size and resolution must be positive".into(),
        ));
    }
    let n = (spec.size_m / spec.resolution).round() as usize;
    if n < 3 {
        return Err(MapError::InvalidSpec(format!(
            "{n} cells per side is too small"
        )));
    }
    let mut last = String::new();
    for attempt in 0..GEN_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        match try_generate(&mut rng, n, spec) {
            Ok(map) => return Ok(map),
            Err(msg) => last = msg,
        }
    }
    Err(MapError::Generation {
        attempts: GEN_ATTEMPTS,
        msg: last,
    })
}

fn try_generate(rng: &mut ChaCha8Rng, n: usize, spec: &MapGenSpec) -> Result<GridMap, String> {
    let res = spec.resolution;
    let mut cells = vec![Cell::Free; n * n];
    let interior = (n - 2) * (n - 2);
    let target = (spec.obstacle_density * interior as f64).round() as usize;
    let mut occupied = 0usize;
    let fill = |cells: &mut Vec<Cell>, c0: usize, r0: usize, w: usize, h: usize| -> usize {
        let mut added = 0;
        for row in r0..(r0 + h).min(n - 1) {
            for col in c0..(c0 + w).min(n - 1) {
                if row == 0 || col == 0 {
                    continue;
                }
                let c = &mut cells[row * n + col];
                if *c == Cell::Free {
                    *c = Cell::Occupied;
                    added += 1;
                }
            }
        }
        added
    };

    if spec.room_style == RoomStyle::Rooms && spec.obstacle_density > 0.0 {
        let wall = ((0.2 / res).round() as usize).max(1);
        let door = ((1.2 / res).round() as usize).max(2);
        let rooms_per_side = ((spec.size_m / 6.0).round() as usize).max(2);
        let pitch = n / rooms_per_side;
        for k in 1..rooms_per_side {
            let at = k * pitch;
            // vertical wall at column `at`, horizontal wall at row `at`
            for seg in 0..rooms_per_side {
                let lo = seg * pitch;
                let hi = if seg + 1 == rooms_per_side {
                    n - 1
                } else {
                    (seg + 1) * pitch
                };
                let span = hi.saturating_sub(lo + wall);
                if span <= door + 2 {
                    continue;
                }
                let gap = lo + wall + rng.gen_range(1..span - door);
                occupied += fill(&mut cells, at, lo, wall, gap - lo);
                occupied += fill(
                    &mut cells,
                    at,
                    gap + door,
                    wall,
                    hi.saturating_sub(gap + door),
                );
                let gap = lo + wall + rng.gen_range(1..span - door);
                occupied += fill(&mut cells, lo, at, gap - lo, wall);
                occupied += fill(
                    &mut cells,
                    gap + door,
                    at,
                    hi.saturating_sub(gap + door),
                    wall,
                );
            }
        }
        if occupied as f64 > target as f64 * (1.0 + DENSITY_TOLERANCE) {
            return Err(format!(
                "room walls alone occupy {:.3} of the interior",
                occupied as f64 / interior as f64
            ));
        }
    }

    let min_side = ((0.3 / res).round() as usize).max(1);
    let max_side = ((1.5 / res).round() as usize).max(min_side).min(n - 2);
    let mut guard = 0;
    while occupied < target {
        guard += 1;
        if guard > 100_000 {
            return Err("block placement stalled".into());
        }
        let remaining = target - occupied;
        let w = rng.gen_range(min_side..=max_side);
        let mut h = rng.gen_range(min_side..=max_side);
        if w * h > remaining {
            h = (remaining / w).max(1);
        }
        let c0 = rng.gen_range(1..n - 1);
        let r0 = rng.gen_range(1..n - 1);
        occupied += fill(&mut cells, c0, r0, w, h);
    }

    let mut map = GridMap::from_cells(n, n, res, cells).map_err(|e| e.to_string())?;
    // Seal pockets cut off from the largest free component.
    let labels = map.component_labels();
    let mut sizes = std::collections::HashMap::new();
    for l in labels.iter().filter(|l| **l != usize::MAX) {
        *sizes.entry(*l).or_insert(0usize) += 1;
    }
    let Some((&largest, _)) = sizes
        .iter()
        .max_by_key(|(l, s)| (**s, std::cmp::Reverse(**l)))
    else {
        return Err("no free space".into());
    };
    for (i, l) in labels.iter().enumerate() {
        if *l != usize::MAX && *l != largest {
            map.cells[i] = Cell::Occupied;
        }
    }
    let density = map.interior_density();
    let want = spec.obstacle_density;
    if want == 0.0 {
        if density != 0.0 {
            return Err("nonzero density for an empty spec".into());
        }
    } else if (density - want).abs() > DENSITY_TOLERANCE * want {
        return Err(format!("density {density:.4} outside tolerance of {want}"));
    }
    Ok(map)
}

/// Precomputed set of cells whose centers keep a given clearance from every
/// occupied cell. Build once per map, then sample repeatedly.
#[derive(Debug, Clone)]
pub struct FreeSpaceIndex {
    clearance: f64,
    cells: Vec<CellIndex>,
}

impl FreeSpaceIndex {
    pub fn new(map: &GridMap, clearance: f64) -> Self {
        let mut cells = Vec::new();
        for row in 0..map.height() {
            for col in 0..map.width() {
                let c = CellIndex { col, row };
                if map.cell(c) == Cell::Occupied {
                    continue;
                }
                let p = map.cell_center(c);
                if map.clearance_at(p, clearance + map.resolution()) > clearance {
                    cells.push(c);
                }
            }
        }
        Self { clearance, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    /// Uniform cell center plus uniform heading in `(-pi, pi]`.
    pub fn sample<R: Rng + ?Sized>(&self, map: &GridMap, rng: &mut R) -> Result<Pose2, MapError> {
        if self.cells.is_empty() {
            return Err(MapError::NoFreePose {
                clearance: self.clearance,
            });
        }
        let c = self.cells[rng.gen_range(0..self.cells.len())];
        let p = map.cell_center(c);
        // (-pi, pi]: negate a sample from [-pi, pi)
        let heading = -rng.gen_range(-PI..PI);
        Ok(Pose2 {
            x: p.x,
            y: p.y,
            theta: heading,
        })
    }
}

/// One-shot version of [`FreeSpaceIndex::sample`].
pub fn sample_free_pose<R: Rng + ?Sized>(
    map: &GridMap,
    rng: &mut R,
    clearance: f64,
) -> Result<Pose2, MapError> {
    FreeSpaceIndex::new(map, clearance).sample(map, rng)
}

/// A single start/goal evaluation pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPair {
    pub start: Pose2,
    pub goal: Point2,
}

/// Ordered start/goal pairs bound to one map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRoster {
    pub map_id: String,
    pub pairs: Vec<ScenarioPair>,
}

impl ScenarioRoster {
    /// Parses lines of `start_x start_y heading goal_x goal_y`; `#` starts a comment.
    pub fn parse(map_id: &str, text: &str) -> Result<Self, MapError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| MapError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if vals.len() != 5 || vals.iter().any(|v| !v.is_finite()) {
                return Err(MapError::Parse {
                    line: i + 1,
                    msg: "expected five finite numbers".into(),
                });
            }
            pairs.push(ScenarioPair {
                start: Pose2::new(vals[0], vals[1], vals[2]),
                goal: Point2::new(vals[3], vals[4]),
            });
        }
        Ok(Self {
            map_id: map_id.to_string(),
            pairs,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# roster for map {}\n# start_x start_y heading goal_x goal_y\n",
            self.map_id
        );
        for p in &self.pairs {
            s.push_str(&format!(
                "{} {} {} {} {}\n",
                p.start.x, p.start.y, p.start.theta, p.goal.x, p.goal.y
            ));
        }
        s
    }

    /// Samples `count` pairs whose start and goal keep `clearance` and are at
    /// least `min_separation` apart.
    pub fn generate(
        map_id: &str,
        map: &GridMap,
        seed: u64,
        count: usize,
        clearance: f64,
        min_separation: f64,
    ) -> Result<Self, MapError> {
        let index = FreeSpaceIndex::new(map, clearance);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(count);
        while pairs.len() < count {
            let start = index.sample(map, &mut rng)?;
            let goal = sample_goal(&index, map, &mut rng, start.position(), min_separation)?;
            pairs.push(ScenarioPair { start, goal });
        }
        Ok(Self {
            map_id: map_id.to_string(),
            pairs,
        })
    }
}

/// Goal at least `min_separation` from `start`, with bounded retries.
pub fn sample_goal<R: Rng + ?Sized>(
    index: &FreeSpaceIndex,
    map: &GridMap,
    rng: &mut R,
    start: Point2,
    min_separation: f64,
) -> Result<Point2, MapError> {
    for _ in 0..1000 {
        let g = index.sample(map, rng)?.position();
        if g.distance(&start) >= min_separation {
            return Ok(g);
        }
    }
    Err(MapError::NoFreePose {
        clearance: index.clearance,
    })
}
