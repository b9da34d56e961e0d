use num_complex::Complex64;

use super::{GeometryError, Point2, Polygon, Result};

/// x ↦ scale · rotation · x + translation, with `rotation` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityMap {
    pub rotation: [[f64; 2]; 2],
    pub scale: f64,
    pub translation: Point2,
}

impl SimilarityMap {
    pub const IDENTITY: SimilarityMap = SimilarityMap {
        rotation: [[1.0, 0.0], [0.0, 1.0]],
        scale: 1.0,
        translation: Point2::ORIGIN,
    };

    /// Rotation given by its first column (cos θ, sin θ), which must be a unit vector.
    pub fn from_cos_sin(cos: f64, sin: f64, scale: f64, translation: Point2) -> Self {
        Self {
            rotation: [[cos, -sin], [sin, cos]],
            scale,
            translation,
        }
    }

    pub fn rotation_angle(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let r = &self.rotation;
        Point2::new(
            self.scale * (r[0][0] * p.x + r[0][1] * p.y) + self.translation.x,
            self.scale * (r[1][0] * p.x + r[1][1] * p.y) + self.translation.y,
        )
    }

    /// Applies only the linear part (for vectors such as tangents).
    pub fn apply_linear(&self, v: Point2) -> Point2 {
        self.apply(v) - self.translation
    }

    /// Pulls a gradient taken in the image frame back to the source frame:
    /// ∇(f ∘ M)(x) = scale · Rᵀ · (∇f)(M x).
    pub fn pull_back_gradient(&self, g: Point2) -> Point2 {
        let r = &self.rotation;
        Point2::new(
            self.scale * (r[0][0] * g.x + r[1][0] * g.y),
            self.scale * (r[0][1] * g.x + r[1][1] * g.y),
        )
    }

    pub fn apply_polygon(&self, e: &Polygon) -> Result<Polygon> {
        Polygon::new(e.vertices().iter().map(|&p| self.apply(p)).collect())
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &SimilarityMap) -> SimilarityMap {
        let (a, b) = (&self.rotation, &inner.rotation);
        let mut rotation = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                rotation[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        SimilarityMap {
            rotation,
            scale: self.scale * inner.scale,
            translation: self.apply(inner.translation),
        }
    }

    pub fn inverse(&self) -> SimilarityMap {
        let r = &self.rotation;
        let rt = [[r[0][0], r[1][0]], [r[0][1], r[1][1]]];
        let inv = SimilarityMap {
            rotation: rt,
            scale: 1.0 / self.scale,
            translation: Point2::ORIGIN,
        };
        let t = inv.apply(self.translation);
        SimilarityMap {
            translation: -t,
            ..inv
        }
    }

    /// The map as z ↦ αz + b on the complex plane.
    pub fn as_complex(&self) -> (Complex64, Complex64) {
        (
            Complex64::new(self.scale * self.rotation[0][0], self.scale * self.rotation[1][0]),
            Complex64::new(self.translation.x, self.translation.y),
        )
    }

    /// Orthogonality and unit determinant of the rotation, positive scale.
    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let det = r[0][0] * r[1][1] - r[0][1] * r[1][0];
        let c0 = r[0][0] * r[0][0] + r[1][0] * r[1][0];
        let c1 = r[0][1] * r[0][1] + r[1][1] * r[1][1];
        let off = r[0][0] * r[0][1] + r[1][0] * r[1][1];
        (det - 1.0).abs() < tol && (c0 - 1.0).abs() < tol && (c1 - 1.0).abs() < tol && off.abs() < tol && self.scale > 0.0
    }
}

/// Inverse inertial map: sends E to a centred, unit-diameter copy with principal
/// inertia axes along the coordinate axes (larger eigenvalue on x₁).
pub fn inertial_map(e: &Polygon) -> Result<SimilarityMap> {
    let h = e.diameter();
    if e.area() < 1e-14 * h * h {
        return Err(GeometryError::InvalidElement("degenerate polygon area".into()));
    }
    let (ixx, ixy, iyy) = e.central_second_moments();
    // Normalise to the unit-diameter frame so the tie threshold is scale-free.
    let s4 = h.powi(4);
    let (ixx, ixy, iyy) = (ixx / s4, ixy / s4, iyy / s4);
    let mean = 0.5 * (ixx + iyy);
    let radius = (0.25 * (ixx - iyy).powi(2) + ixy * ixy).sqrt();
    let (mut cos, mut sin) = if 2.0 * radius < 1e-12 {
        (1.0, 0.0)
    } else {
        // Eigenvector of the larger eigenvalue, rotated back onto x₁.
        let lambda = mean + radius;
        let (vx, vy) = if (ixx - lambda).abs() > (iyy - lambda).abs() {
            (ixy, lambda - ixx)
        } else {
            (lambda - iyy, ixy)
        };
        let n = vx.hypot(vy);
        (vx / n, -vy / n)
    };
    let map = |cos: f64, sin: f64| {
        let scale = 1.0 / h;
        let m = SimilarityMap::from_cos_sin(cos, sin, scale, Point2::ORIGIN);
        let t = m.apply(e.centroid());
        SimilarityMap { translation: -t, ..m }
    };
    let candidate = map(cos, sin);
    if 2.0 * radius >= 1e-12 && candidate.apply(e.vertex(0)).y < 0.0 {
        cos = -cos;
        sin = -sin;
    }
    Ok(map(cos, sin))
}

/// Rotation about the origin plus scaling that places vertex `j` of a centred element at (1, 0).
pub fn vertex_canonical_map(e_canonical: &Polygon, j: usize) -> Result<SimilarityMap> {
    let v = e_canonical.vertex(j);
    let r = v.norm();
    if r < 1e-10 {
        return Err(GeometryError::DegenerateVertex(j));
    }
    let (c, s) = (v.x / r, v.y / r);
    Ok(SimilarityMap::from_cos_sin(c, -s, 1.0 / r, Point2::ORIGIN))
}

/// Network input for vertex `j`: coordinates of the remaining vertices of Ẽ_j,
/// counter-clockwise from the canonical vertex, which is omitted.
pub fn encode_input(e_canonical: &Polygon, j: usize) -> Result<Vec<f64>> {
    let g = vertex_canonical_map(e_canonical, j)?;
    let n = e_canonical.num_vertices();
    Ok((1..n)
        .flat_map(|k| {
            let p = g.apply(e_canonical.vertex((j + k) % n));
            [p.x, p.y]
        })
        .collect())
}

/// Everything the network pipeline derives from a (vertex, element) pair.
#[derive(Debug, Clone)]
pub struct VertexFrame {
    /// Composite map E → Ẽ_j.
    pub map: SimilarityMap,
    /// Ẽ_j, re-indexed so that its vertex 0 is (1, 0).
    pub element: Polygon,
    pub input: Vec<f64>,
}

impl VertexFrame {
    pub fn for_all_vertices(e: &Polygon) -> Result<Vec<VertexFrame>> {
        let inertial = inertial_map(e)?;
        let canonical = inertial.apply_polygon(e)?;
        (0..e.num_vertices())
            .map(|j| {
                let g = vertex_canonical_map(&canonical, j)?;
                let map = g.compose(&inertial);
                let mut element = g.apply_polygon(&canonical)?.reindexed(j);
                // Pin the canonical vertex exactly.
                let mut vertices = element.vertices().to_vec();
                vertices[0] = Point2::new(1.0, 0.0);
                element = Polygon::new(vertices)?;
                let input = encode_input(&canonical, j)?;
                Ok(VertexFrame { map, element, input })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(pts: &[(f64, f64)]) -> Polygon {
        Polygon::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn unit_square_inertial_map() {
        let sq = poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let m = inertial_map(&sq).unwrap();
        assert_eq!(m.rotation, SimilarityMap::IDENTITY.rotation);
        assert!((m.scale - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let img = m.apply_polygon(&sq).unwrap();
        assert!(img.centroid().norm() < 1e-12);
        assert!((img.diameter() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vertex_on_axis_gets_identity_rotation() {
        let tri = poly(&[(0.4, 0.0), (-0.2, 0.3), (-0.2, -0.3)]);
        let g = vertex_canonical_map(&tri, 0).unwrap();
        assert_eq!(g.rotation, SimilarityMap::IDENTITY.rotation);
        assert!((g.scale - 2.5).abs() < 1e-15);
    }

    #[test]
    fn centroid_vertex_is_rejected() {
        let p = poly(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(vertex_canonical_map(&p, 0), Err(GeometryError::DegenerateVertex(0)));
    }

    #[test]
    fn triangle_encoding_readout() {
        let tri = poly(&[(1.0, 0.0), (-0.5, 0.9), (-0.5, -0.9)]);
        assert_eq!(encode_input(&tri, 0).unwrap(), vec![-0.5, 0.9, -0.5, -0.9]);
    }

    #[test]
    fn compose_and_inverse() {
        let a = SimilarityMap::from_cos_sin(0.6, 0.8, 2.0, Point2::new(1.0, -1.0));
        let b = SimilarityMap::from_cos_sin(0.0, 1.0, 0.5, Point2::new(0.3, 0.2));
        let p = Point2::new(0.7, -0.4);
        let ab = a.compose(&b);
        assert!(ab.apply(p).distance(a.apply(b.apply(p))) < 1e-15);
        assert!(a.inverse().apply(a.apply(p)).distance(p) < 1e-15);
        assert!(ab.is_valid(1e-12));
        let (alpha, beta) = a.as_complex();
        let z = alpha * Complex64::new(p.x, p.y) + beta;
        assert!((z.re - a.apply(p).x).abs() < 1e-15 && (z.im - a.apply(p).y).abs() < 1e-15);
    }
}
