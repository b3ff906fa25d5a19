//! Field-of-view geometry: the sensor sector placed at the pursuer pose,
//! clipped by the occupancy grid, and signed distance to the result.

use serde::{Deserialize, Serialize};

use crate::agents::PursuerState;
use crate::error::MapError;
use crate::world::{closest_on_segment, OccupancyGrid};
use crate::Point;

/// Circular sensor sector: `range` metres, `±half_angle` about the heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FovParams {
    pub range: f64,
    pub half_angle: f64,
    #[serde(default = "default_rays")]
    pub n_rays: usize,
}

fn default_rays() -> usize {
    128
}

impl FovParams {
    pub fn new(range: f64, half_angle: f64, n_rays: usize) -> Self {
        Self {
            range,
            half_angle,
            n_rays,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.range > 0.0) {
            return Err(format!("fov range must be positive, got {}", self.range));
        }
        if !(self.half_angle > 0.0 && self.half_angle <= std::f64::consts::PI) {
            return Err(format!("fov half angle must be in (0, pi], got {}", self.half_angle));
        }
        if self.n_rays < 8 {
            return Err(format!("need at least 8 fov rays, got {}", self.n_rays));
        }
        Ok(())
    }
}

/// Star-shaped polygon: `apex` followed by ray endpoints in
/// counter-clockwise order, closing back to the apex.
#[derive(Clone, Debug, PartialEq)]
pub struct FovPolygon {
    pub apex: Point,
    pub vertices: Vec<Point>,
}

/// Signed distance with the boundary point that realises it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryDistance {
    pub distance: f64,
    pub nearest: Point,
}

/// Ray-cast the sensor sector at `pose` against `grid`.
pub fn occluded_fov(
    grid: &OccupancyGrid,
    pose: &PursuerState,
    params: &FovParams,
) -> Result<FovPolygon, MapError> {
    let apex = pose.position();
    if !grid.is_free(apex) {
        return Err(MapError::InsideObstacle { x: apex.x, y: apex.y });
    }
    let n = params.n_rays.max(2);
    let start = pose.theta - params.half_angle;
    let step = 2.0 * params.half_angle / (n - 1) as f64;
    let vertices = (0..n)
        .map(|k| {
            let a = start + step * k as f64;
            let dir = Point::new(a.cos(), a.sin());
            let r = grid
                .cast_ray(apex, dir, params.range)
                .map_or(params.range, |t| t.min(params.range));
            apex + dir * r
        })
        .collect();
    Ok(FovPolygon { apex, vertices })
}

impl FovPolygon {
    /// Closed ring: apex, vertices..., (implicitly back to apex).
    fn ring(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let pts = std::iter::once(&self.apex).chain(self.vertices.iter());
        let next = self.vertices.iter().chain(std::iter::once(&self.apex));
        pts.zip(next).map(|(a, b)| (*a, *b))
    }

    fn is_degenerate(&self) -> bool {
        let mut distinct: Vec<Point> = Vec::with_capacity(3);
        for p in std::iter::once(&self.apex).chain(self.vertices.iter()) {
            if distinct.iter().all(|q| (q - p).norm() > 1e-12) {
                distinct.push(*p);
                if distinct.len() >= 3 {
                    return false;
                }
            }
        }
        true
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        0.5 * self.ring().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>()
    }

    /// Crossing-number point-in-polygon test (strict interior plus some
    /// boundary points; use [`FovPolygon::contains`] for the closed set).
    fn crossing_inside(&self, q: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.ring() {
            if (a.y > q.y) != (b.y > q.y) {
                let x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if q.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Signed distance from `q` to the polygon boundary: negative inside,
    /// positive outside, zero on the boundary. A degenerate polygon is an
    /// empty FoV and `q` is reported outside at its distance to the apex.
    pub fn signed_distance(&self, q: Point) -> BoundaryDistance {
        if self.is_degenerate() {
            return BoundaryDistance {
                distance: (q - self.apex).norm(),
                nearest: self.apex,
            };
        }
        let mut best = f64::INFINITY;
        let mut nearest = self.apex;
        for (a, b) in self.ring() {
            let c = closest_on_segment(q, a, b);
            let d = (q - c).norm_squared();
            if d < best {
                best = d;
                nearest = c;
            }
        }
        let d = best.sqrt();
        BoundaryDistance {
            distance: if self.crossing_inside(q) { -d } else { d },
            nearest,
        }
    }

    /// Closed-set membership: boundary counts as visible.
    pub fn contains(&self, q: Point) -> bool {
        self.signed_distance(q).distance <= 0.0
    }

    /// Flat `[x0, y0, x1, y1, ...]` of apex then vertices.
    pub fn flat_coords(&self) -> Vec<f64> {
        std::iter::once(&self.apex)
            .chain(self.vertices.iter())
            .flat_map(|p| [p.x, p.y])
            .collect()
    }
}

/// Signed distance from `q` to `poly`.
pub fn fov_signed_distance(poly: &FovPolygon, q: Point) -> f64 {
    poly.signed_distance(q).distance
}

/// `q` is visible iff it lies in the closed polygon.
pub fn contains(poly: &FovPolygon, q: Point) -> bool {
    poly.contains(q)
}
