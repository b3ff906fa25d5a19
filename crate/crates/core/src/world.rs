//! Occupancy-grid world model.
//!
//! Cells are closed axis-aligned squares. Cell `(i, j)` spans
//! `[ox + i*res, ox + (i+1)*res] x [oy + j*res, oy + (j+1)*res]`, stored
//! row-major with row 0 at minimum y.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::agents::PursuerState;
use crate::error::MapError;
use crate::Point;

/// Binary occupancy grid. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Point,
    width: usize,
    height: usize,
    cells: Vec<bool>,
    boundary: Vec<Segment>,
}

/// An axis-aligned piece of the obstacle boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Segment {
    a: Point,
    b: Point,
}

/// Result of a signed obstacle-distance query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObstacleDistance {
    /// Positive outside obstacles, negative inside, zero on the boundary.
    /// Equals [`OccupancyGrid::no_obstacle_distance`] when the grid is empty.
    pub distance: f64,
    /// Closest boundary point; `None` when the grid has no obstacles.
    pub nearest: Option<Point>,
}

/// Simulated 2D scan returns, in world coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl OccupancyGrid {
    pub fn new(
        resolution: f64,
        origin: Point,
        width: usize,
        height: usize,
        cells: Vec<bool>,
    ) -> Result<Self, MapError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(MapError::NonPositiveResolution(resolution));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(MapError::Header("origin must be finite".into()));
        }
        if width == 0 || height == 0 {
            return Err(MapError::Header("size must be positive".into()));
        }
        if cells.len() != width * height {
            return Err(MapError::RasterSize {
                expected: width * height,
                found: cells.len(),
            });
        }
        let mut grid = Self {
            resolution,
            origin,
            width,
            height,
            cells,
            boundary: Vec::new(),
        };
        grid.boundary = grid.build_boundary();
        Ok(grid)
    }

    /// All-free grid.
    pub fn empty(resolution: f64, origin: Point, width: usize, height: usize) -> Result<Self, MapError> {
        Self::new(resolution, origin, width, height, vec![false; width * height])
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// World-space extent `(min, max)` of the whole grid.
    pub fn bounds(&self) -> (Point, Point) {
        let max = self.origin
            + Point::new(
                self.width as f64 * self.resolution,
                self.height as f64 * self.resolution,
            );
        (self.origin, max)
    }

    /// Length of the grid diagonal; the declared "no obstacle" distance.
    pub fn no_obstacle_distance(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Number of merged axis-aligned boundary segments.
    pub fn boundary_segment_count(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.width + i]
    }

    /// Occupancy with out-of-grid cells treated as free.
    fn occupied_or_free(&self, i: i64, j: i64) -> bool {
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            false
        } else {
            self.is_occupied(i as usize, j as usize)
        }
    }

    pub fn contains_point(&self, p: Point) -> bool {
        let (lo, hi) = self.bounds();
        p.x >= lo.x && p.y >= lo.y && p.x <= hi.x && p.y <= hi.y
    }

    /// Cell holding `p`. Points on the max edge map to the last cell.
    pub fn world_to_cell(&self, p: Point) -> Option<(usize, usize)> {
        if !self.contains_point(p) {
            return None;
        }
        let fx = ((p.x - self.origin.x) / self.resolution).floor() as i64;
        let fy = ((p.y - self.origin.y) / self.resolution).floor() as i64;
        let i = fx.clamp(0, self.width as i64 - 1) as usize;
        let j = fy.clamp(0, self.height as i64 - 1) as usize;
        Some((i, j))
    }

    /// Centre of cell `(i, j)`.
    pub fn cell_to_world(&self, i: usize, j: usize) -> Point {
        self.origin + Point::new((i as f64 + 0.5) * self.resolution, (j as f64 + 0.5) * self.resolution)
    }

    /// Axis-aligned box `(min, max)` spanning all occupied cells.
    pub fn occupied_aabb(&self) -> Option<(Point, Point)> {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for j in 0..self.height {
            for i in 0..self.width {
                if self.is_occupied(i, j) {
                    any = true;
                    let c0 = self.origin + Point::new(i as f64, j as f64) * self.resolution;
                    let c1 = c0 + Point::new(self.resolution, self.resolution);
                    lo = lo.inf(&c0);
                    hi = hi.sup(&c1);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Unit faces between occupied and free (or out-of-grid) cells, merged
    /// into maximal collinear runs.
    fn build_boundary(&self) -> Vec<Segment> {
        let res = self.resolution;
        let mut segs = Vec::new();
        // horizontal faces on the line y = oy + j*res
        for j in 0..=self.height as i64 {
            let mut run: Option<i64> = None;
            for i in 0..=self.width as i64 {
                let face = i < self.width as i64
                    && self.occupied_or_free(i, j - 1) != self.occupied_or_free(i, j);
                match (face, run) {
                    (true, None) => run = Some(i),
                    (false, Some(start)) => {
                        let y = self.origin.y + j as f64 * res;
                        segs.push(Segment {
                            a: Point::new(self.origin.x + start as f64 * res, y),
                            b: Point::new(self.origin.x + i as f64 * res, y),
                        });
                        run = None;
                    }
                    _ => {}
                }
            }
        }
        // vertical faces on the line x = ox + i*res
        for i in 0..=self.width as i64 {
            let mut run: Option<i64> = None;
            for j in 0..=self.height as i64 {
                let face = j < self.height as i64
                    && self.occupied_or_free(i - 1, j) != self.occupied_or_free(i, j);
                match (face, run) {
                    (true, None) => run = Some(j),
                    (false, Some(start)) => {
                        let x = self.origin.x + i as f64 * res;
                        segs.push(Segment {
                            a: Point::new(x, self.origin.y + start as f64 * res),
                            b: Point::new(x, self.origin.y + j as f64 * res),
                        });
                        run = None;
                    }
                    _ => {}
                }
            }
        }
        segs
    }

    /// Signed Euclidean distance from `p` to the boundary of the union of
    /// occupied cells.
    pub fn obstacle_distance(&self, p: Point) -> Result<ObstacleDistance, MapError> {
        if !p.iter().all(|c| c.is_finite()) || !self.contains_point(p) {
            return Err(MapError::OutOfBounds { x: p.x, y: p.y });
        }
        if self.boundary.is_empty() {
            return Ok(ObstacleDistance {
                distance: self.no_obstacle_distance(),
                nearest: None,
            });
        }
        let mut best = f64::INFINITY;
        let mut nearest = p;
        for s in &self.boundary {
            let q = closest_on_segment(p, s.a, s.b);
            let d = (p - q).norm_squared();
            if d < best {
                best = d;
                nearest = q;
            }
        }
        let dist = best.sqrt();
        let inside = self
            .world_to_cell(p)
            .is_some_and(|(i, j)| self.is_occupied(i, j));
        Ok(ObstacleDistance {
            distance: if inside { -dist } else { dist },
            nearest: Some(nearest),
        })
    }

    /// True when `p` is inside the grid and not in an occupied cell.
    pub fn is_free(&self, p: Point) -> bool {
        self.world_to_cell(p).is_some_and(|(i, j)| !self.is_occupied(i, j))
    }

    /// Exact cell-crossing traversal from `origin` along unit `dir`.
    ///
    /// Returns the distance to the first occupied cell entered, or `None` if
    /// the ray leaves the grid or exceeds `max_range` first. An origin inside
    /// an occupied cell hits at distance 0.
    pub fn cast_ray(&self, origin: Point, dir: Point, max_range: f64) -> Option<f64> {
        let (mut i, mut j) = self.world_to_cell(origin)?;
        if self.is_occupied(i, j) {
            return Some(0.0);
        }
        let res = self.resolution;
        let local = (origin - self.origin) / res;
        let (step_x, mut t_max_x, t_delta_x) = axis_setup(local.x, i, dir.x, res);
        let (step_y, mut t_max_y, t_delta_y) = axis_setup(local.y, j, dir.y, res);
        loop {
            let t;
            if t_max_x < t_max_y {
                t = t_max_x;
                t_max_x += t_delta_x;
                if step_x < 0 {
                    if i == 0 {
                        return None;
                    }
                    i -= 1;
                } else {
                    i += 1;
                    if i >= self.width {
                        return None;
                    }
                }
            } else {
                t = t_max_y;
                t_max_y += t_delta_y;
                if step_y < 0 {
                    if j == 0 {
                        return None;
                    }
                    j -= 1;
                } else {
                    j += 1;
                    if j >= self.height {
                        return None;
                    }
                }
            }
            if t > max_range {
                return None;
            }
            if self.is_occupied(i, j) {
                return Some(t);
            }
        }
    }

    /// Simulated planar range scan: `n_rays` uniform bearings over
    /// `[-pi, pi)` relative to the pose heading.
    pub fn simulate_lidar(
        &self,
        pose: &PursuerState,
        n_rays: usize,
        max_range: f64,
    ) -> Result<PointCloud, MapError> {
        let p = pose.position();
        if !self.is_free(p) {
            return Err(MapError::InsideObstacle { x: p.x, y: p.y });
        }
        let mut points = Vec::new();
        for k in 0..n_rays {
            let a = pose.theta - std::f64::consts::PI
                + std::f64::consts::TAU * k as f64 / n_rays as f64;
            let dir = Point::new(a.cos(), a.sin());
            if let Some(t) = self.cast_ray(p, dir, max_range) {
                points.push(p + dir * t);
            }
        }
        Ok(PointCloud { points })
    }

    /// Serialise to the plain-text map document.
    pub fn dump_map(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "resolution: {:?}", self.resolution);
        let _ = writeln!(out, "origin: {:?} {:?}", self.origin.x, self.origin.y);
        let _ = writeln!(out, "size: {} {}", self.width, self.height);
        for j in 0..self.height {
            for i in 0..self.width {
                out.push(if self.is_occupied(i, j) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    /// Parse a map document.
    ///
    /// ```text
    /// resolution: 1.0
    /// origin: 0 0
    /// size: 3 3
    /// ...
    /// .#.
    /// ...
    /// ```
    ///
    /// The first raster line is row 0 (minimum y).
    pub fn load_map(text: &str) -> Result<Self, MapError> {
        let mut resolution = None;
        let mut origin = None;
        let mut size = None;
        let mut lines = text.lines().map(str::trim_end).filter(|l| !l.trim().is_empty());
        while resolution.is_none() || origin.is_none() || size.is_none() {
            let line = lines
                .next()
                .ok_or_else(|| MapError::Header("missing header line".into()))?;
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| MapError::Header(format!("expected `key: value`, got `{line}`")))?;
            let nums: Vec<&str> = value.split_whitespace().collect();
            match key.trim() {
                "resolution" if nums.len() == 1 => resolution = Some(parse_num::<f64>(nums[0])?),
                "origin" if nums.len() == 2 => {
                    origin = Some(Point::new(parse_num(nums[0])?, parse_num(nums[1])?))
                }
                "size" if nums.len() == 2 => {
                    size = Some((parse_num::<usize>(nums[0])?, parse_num::<usize>(nums[1])?))
                }
                _ => return Err(MapError::Header(format!("unrecognised header line `{line}`"))),
            }
        }
        let (resolution, origin, (width, height)) = (resolution.unwrap(), origin.unwrap(), size.unwrap());
        if !(resolution > 0.0) {
            return Err(MapError::NonPositiveResolution(resolution));
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut rows = 0;
        for line in lines {
            let line = line.trim();
            if line.chars().count() != width {
                return Err(MapError::RasterSize {
                    expected: width,
                    found: line.chars().count(),
                });
            }
            for c in line.chars() {
                match c {
                    '#' => cells.push(true),
                    '.' => cells.push(false),
                    other => return Err(MapError::RasterChar(other)),
                }
            }
            rows += 1;
        }
        if rows != height {
            return Err(MapError::RasterSize {
                expected: height,
                found: rows,
            });
        }
        Self::new(resolution, origin, width, height, cells)
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, MapError> {
    s.parse()
        .map_err(|_| MapError::Header(format!("bad number `{s}`")))
}

fn axis_setup(local: f64, cell: usize, d: f64, res: f64) -> (i32, f64, f64) {
    if d > 0.0 {
        (1, ((cell as f64 + 1.0) - local) * res / d, res / d)
    } else if d < 0.0 {
        (-1, (local - cell as f64) * res / -d, res / -d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

pub(crate) fn closest_on_segment(p: Point, a: Point, b: Point) -> Point {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Map source accepted in scenario documents: a generator expression or a
/// path to a map document.
#[derive(Clone, Debug, PartialEq)]
pub enum MapSpec {
    /// `pillars(count, size, extent[, resolution])`: a square arena centred
    /// on the origin with `count` square pillars on a regular lattice.
    Pillars {
        count: usize,
        size: f64,
        extent: f64,
        resolution: f64,
    },
    /// `empty(extent[, resolution])`: obstacle-free square arena centred on
    /// the origin.
    Empty { extent: f64, resolution: f64 },
    /// `file:<path>`: a map document on disk.
    File(std::path::PathBuf),
}

impl FromStr for MapSpec {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(MapSpec::File(path.trim().into()));
        }
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| MapError::Generator(s.to_string()))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| MapError::Generator(s.to_string()))?;
        let args: Vec<f64> = args
            .split(',')
            .map(|a| {
                let a = a.trim();
                a.strip_suffix('m').unwrap_or(a).trim().parse::<f64>()
            })
            .collect::<Result<_, _>>()
            .map_err(|_| MapError::Generator(s.to_string()))?;
        match (name.trim(), args.as_slice()) {
            ("pillars", [count, size, extent]) | ("pillars", [count, size, extent, _]) => {
                let resolution = args.get(3).copied().unwrap_or(size / 5.0);
                if count.fract() != 0.0 || *count < 0.0 {
                    return Err(MapError::Generator(s.to_string()));
                }
                Ok(MapSpec::Pillars {
                    count: *count as usize,
                    size: *size,
                    extent: *extent,
                    resolution,
                })
            }
            ("empty", [extent]) => Ok(MapSpec::Empty {
                extent: *extent,
                resolution: extent / 160.0,
            }),
            ("empty", [extent, resolution]) => Ok(MapSpec::Empty {
                extent: *extent,
                resolution: *resolution,
            }),
            _ => Err(MapError::Generator(s.to_string())),
        }
    }
}

impl MapSpec {
    /// Build the grid. Relative file paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &std::path::Path) -> Result<OccupancyGrid, MapError> {
        match self {
            MapSpec::Empty { extent, resolution } => {
                let n = cells_for(*extent, *resolution)?;
                OccupancyGrid::empty(*resolution, Point::new(-extent / 2.0, -extent / 2.0), n, n)
            }
            MapSpec::Pillars {
                count,
                size,
                extent,
                resolution,
            } => pillars(*count, *size, *extent, *resolution),
            MapSpec::File(path) => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| MapError::Io(format!("{}: {e}", path.display())))?;
                OccupancyGrid::load_map(&text)
            }
        }
    }
}

fn cells_for(extent: f64, resolution: f64) -> Result<usize, MapError> {
    if !(resolution > 0.0) {
        return Err(MapError::NonPositiveResolution(resolution));
    }
    if !(extent > 0.0) {
        return Err(MapError::Generator(format!("extent {extent}")));
    }
    Ok((extent / resolution).round() as usize)
}

/// Square arena of side `extent` centred on the origin, with `count` square
/// pillars (a perfect square) of side `size` centred on a regular lattice.
pub fn pillars(count: usize, size: f64, extent: f64, resolution: f64) -> Result<OccupancyGrid, MapError> {
    let side = (count as f64).sqrt().round() as usize;
    if side * side != count {
        return Err(MapError::Generator(format!(
            "pillar count {count} is not a perfect square"
        )));
    }
    let n = cells_for(extent, resolution)?;
    let origin = Point::new(-extent / 2.0, -extent / 2.0);
    let mut cells = vec![false; n * n];
    let spacing = extent / side as f64;
    for pj in 0..side {
        for pi in 0..side {
            let c = origin + Point::new((pi as f64 + 0.5) * spacing, (pj as f64 + 0.5) * spacing);
            let (lo, hi) = (c.add_scalar(-size / 2.0), c.add_scalar(size / 2.0));
            // half-open inclusion of cell centres keeps the pillar at size/res cells
            for j in 0..n {
                let y = origin.y + (j as f64 + 0.5) * resolution;
                if y < lo.y - 1e-9 || y >= hi.y - 1e-9 {
                    continue;
                }
                for i in 0..n {
                    let x = origin.x + (i as f64 + 0.5) * resolution;
                    if x >= lo.x - 1e-9 && x < hi.x - 1e-9 {
                        cells[j * n + i] = true;
                    }
                }
            }
        }
    }
    OccupancyGrid::new(resolution, origin, n, n, cells)
}
