//! Planar geometry: points, polygons, similarity maps, sampling, quadrature and meshes.

mod mesh;
mod polygon;
mod quadrature;
mod random;
mod similarity;

pub use mesh::{build_mesh_family, parse_mesh, write_mesh, MeshFamily, PolygonalMesh, MESH_HEADER};
pub use polygon::{Edge, MeshAssumptionParams, Polygon};
pub use quadrature::{gauss_legendre, quadrature_on_polygon, QuadPoint, TriangleQuadRule};
pub use random::{random_distorted_regular_polygon, random_polygon, sample_polygon, PolygonSampler};
pub use similarity::{encode_input, inertial_map, vertex_canonical_map, SimilarityMap, VertexFrame};

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("non-finite vertex coordinate at index {0}")]
    NonFinite(usize),
    #[error("invalid element: {0}")]
    InvalidElement(String),
    #[error("vertex {0} coincides with the centroid")]
    DegenerateVertex(usize),
    #[error("polygon generation failed after {attempts} attempts (most frequent failure: {constraint})")]
    GenerationFailure { attempts: usize, constraint: String },
    #[error("mesh parameter error: {0}")]
    Parameter(String),
    #[error("mesh file line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        // Exact at t = 0 and t = 1.
        Point2::new((1.0 - t) * self.x + t * other.x, (1.0 - t) * self.y + t * other.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, rhs: Point2) -> Point2 {
        Point2::new(self * rhs.x, self * rhs.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(p: [f64; 2]) -> Self {
        Point2::new(p[0], p[1])
    }
}
