use std::f64::consts::PI;

use crate::geometry::Point2;

/// Coefficients of −∇·(D∇u) + β·∇u + γu.
pub trait AdrCoefficients: Sync {
    fn diffusion(&self, p: Point2) -> [[f64; 2]; 2];
    /// (∇·D)_j = Σ_i ∂_i D_ij, needed to manufacture source terms.
    fn diffusion_divergence(&self, p: Point2) -> Point2;
    fn advection(&self, p: Point2) -> Point2;
    fn reaction(&self, p: Point2) -> f64;
}

/// D = I, β = 0, γ = 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct Laplacian;

impl AdrCoefficients for Laplacian {
    fn diffusion(&self, _: Point2) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [0.0, 1.0]]
    }
    fn diffusion_divergence(&self, _: Point2) -> Point2 {
        Point2::ORIGIN
    }
    fn advection(&self, _: Point2) -> Point2 {
        Point2::ORIGIN
    }
    fn reaction(&self, _: Point2) -> f64 {
        0.0
    }
}

/// D = [[1+y², −xy], [−xy, 1+x²]], β = (x, −y), γ = xy.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnisotropicAdr;

impl AdrCoefficients for AnisotropicAdr {
    fn diffusion(&self, p: Point2) -> [[f64; 2]; 2] {
        [[1.0 + p.y * p.y, -p.x * p.y], [-p.x * p.y, 1.0 + p.x * p.x]]
    }
    fn diffusion_divergence(&self, p: Point2) -> Point2 {
        Point2::new(-p.x, -p.y)
    }
    fn advection(&self, p: Point2) -> Point2 {
        Point2::new(p.x, -p.y)
    }
    fn reaction(&self, p: Point2) -> f64 {
        p.x * p.y
    }
}

/// Smooth exact solution with closed-form derivatives.
pub trait ExactSolution: Sync {
    fn value(&self, p: Point2) -> f64;
    fn gradient(&self, p: Point2) -> Point2;
    /// [[u_xx, u_xy], [u_xy, u_yy]].
    fn hessian(&self, p: Point2) -> [[f64; 2]; 2];
}

/// 3a² + 2b³ + sin(2πx)sin(3πy) with a = (x−0.2) + (y−0.3)/2, b = (x−0.7)/2 + (y−0.8).
#[derive(Debug, Clone, Copy, Default)]
pub struct PolySineSolution;

impl PolySineSolution {
    fn ab(p: Point2) -> (f64, f64) {
        ((p.x - 0.2) + 0.5 * (p.y - 0.3), 0.5 * (p.x - 0.7) + (p.y - 0.8))
    }
}

impl ExactSolution for PolySineSolution {
    fn value(&self, p: Point2) -> f64 {
        let (a, b) = Self::ab(p);
        3.0 * a * a + 2.0 * b.powi(3) + (2.0 * PI * p.x).sin() * (3.0 * PI * p.y).sin()
    }
    fn gradient(&self, p: Point2) -> Point2 {
        let (a, b) = Self::ab(p);
        let (sx, cx) = (2.0 * PI * p.x).sin_cos();
        let (sy, cy) = (3.0 * PI * p.y).sin_cos();
        Point2::new(
            6.0 * a + 3.0 * b * b + 2.0 * PI * cx * sy,
            3.0 * a + 6.0 * b * b + 3.0 * PI * sx * cy,
        )
    }
    fn hessian(&self, p: Point2) -> [[f64; 2]; 2] {
        let (_, b) = Self::ab(p);
        let (sx, cx) = (2.0 * PI * p.x).sin_cos();
        let (sy, cy) = (3.0 * PI * p.y).sin_cos();
        let xy = 3.0 + 6.0 * b + 6.0 * PI * PI * cx * cy;
        [
            [6.0 + 3.0 * b - 4.0 * PI * PI * sx * sy, xy],
            [xy, 1.5 + 12.0 * b - 9.0 * PI * PI * sx * sy],
        ]
    }
}

/// sin(kx·πx) sin(ky·πy).
#[derive(Debug, Clone, Copy)]
pub struct SineProduct {
    pub kx: f64,
    pub ky: f64,
}

impl ExactSolution for SineProduct {
    fn value(&self, p: Point2) -> f64 {
        (self.kx * PI * p.x).sin() * (self.ky * PI * p.y).sin()
    }
    fn gradient(&self, p: Point2) -> Point2 {
        let (ax, ay) = (self.kx * PI, self.ky * PI);
        let (sx, cx) = (ax * p.x).sin_cos();
        let (sy, cy) = (ay * p.y).sin_cos();
        Point2::new(ax * cx * sy, ay * sx * cy)
    }
    fn hessian(&self, p: Point2) -> [[f64; 2]; 2] {
        let (ax, ay) = (self.kx * PI, self.ky * PI);
        let (sx, cx) = (ax * p.x).sin_cos();
        let (sy, cy) = (ay * p.y).sin_cos();
        let xy = ax * ay * cx * cy;
        [[-ax * ax * sx * sy, xy], [xy, -ay * ay * sx * sy]]
    }
}

/// c₀ + c₁x + c₂y.
#[derive(Debug, Clone, Copy)]
pub struct Affine(pub [f64; 3]);

impl ExactSolution for Affine {
    fn value(&self, p: Point2) -> f64 {
        self.0[0] + self.0[1] * p.x + self.0[2] * p.y
    }
    fn gradient(&self, _: Point2) -> Point2 {
        Point2::new(self.0[1], self.0[2])
    }
    fn hessian(&self, _: Point2) -> [[f64; 2]; 2] {
        [[0.0; 2]; 2]
    }
}

/// Boundary-value problem with a manufactured source.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub coefficients: &'a dyn AdrCoefficients,
    pub solution: &'a dyn ExactSolution,
}

impl<'a> Problem<'a> {
    pub fn new(coefficients: &'a dyn AdrCoefficients, solution: &'a dyn ExactSolution) -> Self {
        Self {
            coefficients,
            solution,
        }
    }

    /// f = −D:∇²u − (∇·D)·∇u + β·∇u + γu.
    pub fn source(&self, p: Point2) -> f64 {
        let d = self.coefficients.diffusion(p);
        let h = self.solution.hessian(p);
        let g = self.solution.gradient(p);
        let contraction = d[0][0] * h[0][0] + d[0][1] * h[0][1] + d[1][0] * h[1][0] + d[1][1] * h[1][1];
        -contraction - self.coefficients.diffusion_divergence(p).dot(g)
            + self.coefficients.advection(p).dot(g)
            + self.coefficients.reaction(p) * self.solution.value(p)
    }

    pub fn dirichlet(&self, p: Point2) -> f64 {
        self.solution.value(p)
    }
}
