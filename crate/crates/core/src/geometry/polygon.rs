use serde::{Deserialize, Serialize};

use super::{GeometryError, Point2, Result};

/// Oriented edge of a counter-clockwise polygon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub start: Point2,
    pub end: Point2,
    pub length: f64,
    /// Unit tangent pointing from `start` to `end`.
    pub tangent: Point2,
    /// Unit outward normal.
    pub normal: Point2,
}

impl Edge {
    fn new(start: Point2, end: Point2) -> Self {
        let d = end - start;
        let length = d.norm();
        let tangent = (1.0 / length) * d;
        Self {
            start,
            end,
            length,
            tangent,
            normal: Point2::new(tangent.y, -tangent.x),
        }
    }

    pub fn point_at(&self, t: f64) -> Point2 {
        self.start.lerp(self.end, t)
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        let t = ((p - self.start).dot(self.tangent) / self.length).clamp(0.0, 1.0);
        p.distance(self.point_at(t))
    }

    /// Signed distance of `p` from the supporting line, negative on the inner side.
    fn signed_offset(&self, p: Point2) -> f64 {
        (p - self.start).dot(self.normal)
    }
}

/// Shape-regularity constant of the mesh assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshAssumptionParams {
    pub rho: f64,
}

impl Default for MeshAssumptionParams {
    fn default() -> Self {
        Self { rho: 0.1 }
    }
}

/// A simple polygon with counter-clockwise vertices and cached geometric data.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
    edges: Vec<Edge>,
    area: f64,
    centroid: Point2,
    diameter: f64,
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum::<f64>()
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_segment = |p: Point2, q: Point2, r: Point2, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on_segment(a, b, c, d1) || on_segment(a, b, d, d2) || on_segment(c, d, a, d3) || on_segment(c, d, b, d4)
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let mut diameter = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                diameter = diameter.max(vertices[i].distance(vertices[j]));
            }
        }
        let area = signed_area(&vertices);
        if !(area > 1e-14 * diameter * diameter) {
            return Err(GeometryError::InvalidElement(format!(
                "signed area {area:e} is not positive (vertices must be counter-clockwise and non-degenerate)"
            )));
        }
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(GeometryError::InvalidElement(format!("zero-length edge at vertex {i}")));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                    return Err(GeometryError::InvalidElement(format!(
                        "edges {i} and {j} intersect (polygon is not simple)"
                    )));
                }
            }
        }
        // Adjacent edges folding back onto each other.
        for i in 0..n {
            let prev = vertices[(i + n - 1) % n];
            let cur = vertices[i];
            let next = vertices[(i + 1) % n];
            let (a, b) = (prev - cur, next - cur);
            if a.cross(b) == 0.0 && a.dot(b) > 0.0 {
                return Err(GeometryError::InvalidElement(format!("edges overlap at vertex {i}")));
            }
        }

        let origin = vertices[0];
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let p = vertices[i] - origin;
            let q = vertices[(i + 1) % n] - origin;
            let w = p.cross(q);
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        let centroid = origin + Point2::new(cx / (6.0 * area), cy / (6.0 * area));
        let edges = (0..n).map(|i| Edge::new(vertices[i], vertices[(i + 1) % n])).collect();
        Ok(Self {
            vertices,
            edges,
            area,
            centroid,
            diameter,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point2 {
        self.vertices[i]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn centroid(&self) -> Point2 {
        self.centroid
    }

    /// h_E, the largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn perimeter(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Area second moments about the centroid: (∫x², ∫xy, ∫y²).
    pub fn central_second_moments(&self) -> (f64, f64, f64) {
        let n = self.vertices.len();
        let (mut ixx, mut ixy, mut iyy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i] - self.centroid;
            let q = self.vertices[(i + 1) % n] - self.centroid;
            let w = p.cross(q);
            ixx += w * (p.x * p.x + p.x * q.x + q.x * q.x);
            iyy += w * (p.y * p.y + p.y * q.y + q.y * q.y);
            ixy += w * (p.x * q.y + 2.0 * p.x * p.y + 2.0 * q.x * q.y + q.x * p.y);
        }
        (ixx / 12.0, ixy / 24.0, iyy / 12.0)
    }

    /// Polygon with the same shape, vertex list rotated so that `start` becomes vertex 0.
    pub fn reindexed(&self, start: usize) -> Polygon {
        let n = self.vertices.len();
        let vertices = (0..n).map(|k| self.vertices[(start + k) % n]).collect();
        Polygon::new(vertices).expect("cyclic re-indexing preserves validity")
    }

    /// Whether every edge sees `p` strictly on its inner side, with margin `tol`.
    pub fn sees_all_edges_from(&self, p: Point2, tol: f64) -> bool {
        self.edges.iter().all(|e| e.signed_offset(p) < -tol)
    }

    /// Largest disc contained in the kernel (the region from which the whole polygon is visible).
    ///
    /// Solves max r subject to n_i·x + r ≤ n_i·v_i by enumerating vertices of the
    /// feasible set in (x, y, r). Returns `None` when the kernel is empty.
    pub fn kernel_inscribed_disc(&self) -> Option<(Point2, f64)> {
        let rows: Vec<[f64; 4]> = self
            .edges
            .iter()
            .map(|e| [e.normal.x, e.normal.y, 1.0, e.normal.dot(e.start)])
            .collect();
        let scale = self.diameter;
        let mut best: Option<(Point2, f64)> = None;
        let m = rows.len();
        for a in 0..m {
            for b in a + 1..m {
                for c in b + 1..m {
                    let (ra, rb, rc) = (rows[a], rows[b], rows[c]);
                    let det = ra[0] * (rb[1] * rc[2] - rb[2] * rc[1]) - ra[1] * (rb[0] * rc[2] - rb[2] * rc[0])
                        + ra[2] * (rb[0] * rc[1] - rb[1] * rc[0]);
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    let solve_col = |col: usize| {
                        let pick = |r: [f64; 4], k: usize| if k == col { r[3] } else { r[k] };
                        (pick(ra, 0) * (pick(rb, 1) * pick(rc, 2) - pick(rb, 2) * pick(rc, 1))
                            - pick(ra, 1) * (pick(rb, 0) * pick(rc, 2) - pick(rb, 2) * pick(rc, 0))
                            + pick(ra, 2) * (pick(rb, 0) * pick(rc, 1) - pick(rb, 1) * pick(rc, 0)))
                            / det
                    };
                    let (x, y, r) = (solve_col(0), solve_col(1), solve_col(2));
                    if r <= 0.0 {
                        continue;
                    }
                    let feasible = rows
                        .iter()
                        .all(|row| row[0] * x + row[1] * y + r <= row[3] + 1e-12 * scale);
                    if feasible && best.is_none_or(|(_, br)| r > br) {
                        best = Some((Point2::new(x, y), r));
                    }
                }
            }
        }
        best
    }

    /// Checks both mesh-assumption bullets; on failure names the violated constraint.
    pub fn check_mesh_assumptions(&self, params: MeshAssumptionParams) -> std::result::Result<(), &'static str> {
        let h = self.diameter;
        if self.edges.iter().any(|e| e.length < params.rho * h) {
            return Err("edge length >= rho*h_E");
        }
        match self.kernel_inscribed_disc() {
            Some((_, r)) if r >= params.rho * h => Ok(()),
            _ => Err("star-shaped w.r.t. a ball of radius >= rho*h_E"),
        }
    }

    /// Index of the edge containing `p` (within `tol`), preferring the lowest index.
    pub fn edge_containing(&self, p: Point2, tol: f64) -> Option<usize> {
        self.edges.iter().position(|e| e.distance_to(p) <= tol)
    }

    /// Point-in-polygon by crossing number; boundary points count as inside within `tol`.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        if self.edge_containing(p, tol).is_some() {
            return true;
        }
        let mut inside = false;
        for e in &self.edges {
            let (a, b) = (e.start, e.end);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Sub-triangles covering the polygon: a fan from the centroid when it lies in the
    /// kernel, otherwise ear clipping.
    pub fn triangulate(&self) -> Result<Vec<[Point2; 3]>> {
        let n = self.vertices.len();
        if self.sees_all_edges_from(self.centroid, 1e-12 * self.diameter) {
            return Ok((0..n)
                .map(|i| [self.centroid, self.vertices[i], self.vertices[(i + 1) % n]])
                .collect());
        }
        self.ear_clip()
    }

    fn ear_clip(&self) -> Result<Vec<[Point2; 3]>> {
        let mut idx: Vec<usize> = (0..self.vertices.len()).collect();
        let mut out = Vec::with_capacity(idx.len() - 2);
        let v = &self.vertices;
        while idx.len() > 3 {
            let m = idx.len();
            let ear = (0..m).find(|&k| {
                let (a, b, c) = (v[idx[(k + m - 1) % m]], v[idx[k]], v[idx[(k + 1) % m]]);
                if (b - a).cross(c - b) <= 0.0 {
                    return false;
                }
                idx.iter().all(|&q| {
                    let p = v[q];
                    if p == a || p == b || p == c {
                        return true;
                    }
                    let s1 = (b - a).cross(p - a);
                    let s2 = (c - b).cross(p - b);
                    let s3 = (a - c).cross(p - c);
                    !(s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0)
                })
            });
            let Some(k) = ear else {
                return Err(GeometryError::InvalidElement("ear clipping found no ear".into()));
            };
            out.push([v[idx[(k + m - 1) % m]], v[idx[k]], v[idx[(k + 1) % m]]]);
            idx.remove(k);
        }
        out.push([v[idx[0]], v[idx[1]], v[idx[2]]]);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon {
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn square_data() {
        let s = square();
        assert_eq!(s.area(), 1.0);
        assert_eq!(s.centroid(), Point2::new(0.5, 0.5));
        assert!((s.diameter() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.edges()[0].normal, Point2::new(0.0, -1.0));
        let (ixx, ixy, iyy) = s.central_second_moments();
        assert!((ixx - 1.0 / 12.0).abs() < 1e-15 && ixy.abs() < 1e-15 && (iyy - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_clockwise_and_self_intersecting() {
        let cw = Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(0.0, 1.0), Point2::new(1.0, 0.0)]);
        assert!(matches!(cw, Err(GeometryError::InvalidElement(_))));
        let bowtie = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, -3.0),
        ]);
        assert!(bowtie.is_err());
        assert_eq!(Polygon::new(vec![Point2::ORIGIN; 2]), Err(GeometryError::TooFewVertices(2)));
    }

    #[test]
    fn fan_triangulation_of_square() {
        let tris = square().triangulate().unwrap();
        assert_eq!(tris.len(), 4);
        for t in tris {
            let a = 0.5 * (t[1] - t[0]).cross(t[2] - t[0]);
            assert!((a - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn ear_clipping_when_centroid_outside_kernel() {
        // Thin L-shape: centroid is not in the kernel.
        let l = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 0.2),
            Point2::new(0.2, 0.2),
            Point2::new(0.2, 4.0),
            Point2::new(0.0, 4.0),
        ])
        .unwrap();
        assert!(!l.sees_all_edges_from(l.centroid(), 0.0));
        let tris = l.triangulate().unwrap();
        assert_eq!(tris.len(), 4);
        let total: f64 = tris.iter().map(|t| 0.5 * (t[1] - t[0]).cross(t[2] - t[0])).sum();
        assert!((total - l.area()).abs() < 1e-13 * l.area());
    }

    #[test]
    fn kernel_disc_of_rectangle() {
        let r = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        let (_, radius) = r.kernel_inscribed_disc().unwrap();
        assert!((radius - 0.5).abs() < 1e-12);
        let tri = Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(3.0, 0.0), Point2::new(0.0, 4.0)]).unwrap();
        // Inradius of the 3-4-5 triangle is 1.
        let (c, radius) = tri.kernel_inscribed_disc().unwrap();
        assert!((radius - 1.0).abs() < 1e-12);
        assert!(c.distance(Point2::new(1.0, 1.0)) < 1e-12);
    }

    #[test]
    fn contains_and_edge_lookup() {
        let s = square();
        assert!(s.contains(Point2::new(0.3, 0.7), 0.0));
        assert!(!s.contains(Point2::new(1.3, 0.7), 0.0));
        assert_eq!(s.edge_containing(Point2::new(0.5, 0.0), 1e-12), Some(0));
        assert_eq!(s.edge_containing(Point2::new(0.0, 0.5), 1e-12), Some(3));
    }
}
