use super::GeometryError;

/// Clip results below this area are treated as empty.
pub const AREA_EPS: f64 = 1e-12;

/// Tolerance on the cross product when checking strict convexity.
pub const CONVEX_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Validates vertex count, orientation and strict convexity.
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::Polygon(format!("need at least 3 vertices, got {n}")));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(GeometryError::Polygon("non-finite vertex".into()));
        }
        for i in 0..n {
            let c = cross(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if c <= CONVEX_EPS {
                return Err(GeometryError::Polygon(format!(
                    "vertex {} breaks counter-clockwise strict convexity (cross = {c:e})",
                    (i + 1) % n
                )));
            }
        }
        Ok(Self { vertices })
    }

    /// Skips validation. Callers guarantee a CCW convex ring.
    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }
}

/// Signed shoelace area; positive for CCW rings.
pub fn shoelace(ring: &[Point2]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice
}

fn segment_line_intersection(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    Point2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Clips `subject` against every edge of `clip` (Sutherland–Hodgman).
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % m]);
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Area of `a ∩ b` for convex polygons.
pub fn convex_intersection_area(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let area = shoelace(&clip_convex(&a.vertices, &b.vertices)).abs();
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}
