//! Delaunay triangulation of planar point sets via incremental
//! Bowyer-Watson insertion into a super-triangle.
//!
//! Canonical form: points are inserted in lexicographic `(x, y)` order and a
//! point lying exactly on a circumcircle does not invalidate the triangle,
//! so co-circular configurations resolve deterministically from the point
//! set alone (the unit square keeps the diagonal chosen by this rule).

use crate::error::{Error, Result};

type Point = (f64, f64);

/// Undirected Delaunay edge set as index pairs `(a, b)` with `a < b`,
/// sorted. Requires at least 3 pairwise-distinct, not-all-collinear points.
pub fn delaunay(points: &[Point]) -> Result<Vec<(usize, usize)>> {
    Ok(triangulate(points)?.edges())
}

/// Full triangulation; the triangle list backs the empty-circumcircle
/// oracle used by the tests.
pub fn triangulate(points: &[Point]) -> Result<Triangulation> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "triangulation needs at least 3 points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !p.0.is_finite() || !p.1.is_finite() {
            return Err(Error::NonFinite("point coordinate"));
        }
    }
    for (a, pa) in points.iter().enumerate() {
        for pb in &points[a + 1..] {
            if pa == pb {
                return Err(Error::DegenerateGeometry(format!(
                    "coincident points at ({}, {})",
                    pa.0, pa.1
                )));
            }
        }
    }
    if all_collinear(points) {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }

    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .partial_cmp(&points[b])
            .expect("finite coordinates are totally ordered")
    });

    // Super-triangle far outside the bounding box. Interior circumcircle
    // tests never involve its vertices, so the scale only needs to dominate
    // the circumcircles that appear for points in general position.
    let (min_x, max_x) = min_max(points.iter().map(|p| p.0));
    let (min_y, max_y) = min_max(points.iter().map(|p| p.1));
    let cx = 0.5 * (min_x + max_x);
    let cy = 0.5 * (min_y + max_y);
    let span = (max_x - min_x).max(max_y - min_y).max(1.0);
    let big = 1e4 * span;
    let mut pts: Vec<Point> = points.to_vec();
    pts.push((cx - 3.0 * big, cy - big));
    pts.push((cx + 3.0 * big, cy - big));
    pts.push((cx, cy + 3.0 * big));
    let super_base = n;

    let mut triangles: Vec<[usize; 3]> = vec![[super_base, super_base + 1, super_base + 2]];
    for &p in &order {
        let bad: Vec<usize> = (0..triangles.len())
            .filter(|&t| {
                let [a, b, c] = triangles[t];
                circumcircle_strictly_contains(pts[a], pts[b], pts[c], pts[p])
            })
            .collect();

        // Cavity boundary: edges of bad triangles that appear exactly once.
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for &t in &bad {
            let [a, b, c] = triangles[t];
            for edge in [(a, b), (b, c), (c, a)] {
                let key = undirected(edge);
                if let Some(pos) = boundary.iter().position(|&e| e == key) {
                    boundary.swap_remove(pos);
                } else {
                    boundary.push(key);
                }
            }
        }
        for &t in bad.iter().rev() {
            triangles.swap_remove(t);
        }
        for (a, b) in boundary {
            triangles.push([a, b, p]);
        }
    }

    triangles.retain(|t| t.iter().all(|&v| v < super_base));
    let mut tris: Vec<[usize; 3]> = triangles
        .into_iter()
        .map(|mut t| {
            t.sort_unstable();
            t
        })
        .collect();
    tris.sort_unstable();

    let triangulation = Triangulation {
        n,
        triangles: tris,
    };
    if triangulation.triangles.is_empty() {
        return Err(Error::DegenerateGeometry(
            "no triangle survived; points are numerically degenerate".into(),
        ));
    }
    let edges = triangulation.edges();
    let mut covered = vec![false; n];
    for &(a, b) in &edges {
        covered[a] = true;
        covered[b] = true;
    }
    if covered.iter().any(|&c| !c) {
        return Err(Error::DegenerateGeometry(
            "a point ended up isolated; input is numerically degenerate".into(),
        ));
    }
    Ok(triangulation)
}

/// The triangle list of a triangulation over `n` points.
#[derive(Debug, Clone)]
pub struct Triangulation {
    n: usize,
    triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    pub fn point_count(&self) -> usize {
        self.n
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Deduplicated undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [undirected((a, b)), undirected((b, c)), undirected((c, a))])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

fn undirected((a, b): (usize, usize)) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn all_collinear(points: &[Point]) -> bool {
    let a = points[0];
    let Some(&b) = points[1..].iter().find(|&&p| p != a) else {
        return true;
    };
    points
        .iter()
        .all(|&c| cross(a, b, c) == 0.0)
}

fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Strict in-circumcircle predicate, orientation-normalized. A point exactly
/// on the circle (determinant zero) counts as outside.
pub(crate) fn circumcircle_strictly_contains(a: Point, b: Point, c: Point, p: Point) -> bool {
    let orientation = cross(a, b, c);
    if orientation == 0.0 {
        return false;
    }
    let (adx, ady) = (a.0 - p.0, a.1 - p.1);
    let (bdx, bdy) = (b.0 - p.0, b.1 - p.1);
    let (cdx, cdy) = (c.0 - p.0, c.1 - p.1);
    let det = (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        - (bdx * bdx + bdy * bdy) * (adx * cdy - cdx * ady)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady);
    if orientation > 0.0 {
        det > 0.0
    } else {
        det < 0.0
    }
}
