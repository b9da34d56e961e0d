use super::{GeometryError, Point2, Polygon, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Positive-weight rule on the reference triangle (0,0), (1,0), (0,1).
///
/// Collapsed Gauss–Legendre product rule; exact for total degree ≤ `degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleQuadRule {
    pub degree: usize,
    /// Barycentric coordinates (λ₀, λ₁, λ₂) of each node.
    pub nodes: Vec<[f64; 3]>,
    /// Weights summing to the reference area ½.
    pub weights: Vec<f64>,
}

impl TriangleQuadRule {
    pub fn new(degree: usize) -> Self {
        let n = (degree + 2).div_ceil(2).max(1);
        let (x, w) = gauss_legendre(n);
        let mut nodes = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            let u = 0.5 * (x[i] + 1.0);
            for j in 0..n {
                let v = 0.5 * (x[j] + 1.0);
                let (px, py) = (u, v * (1.0 - u));
                nodes.push([1.0 - px - py, px, py]);
                weights.push(0.25 * w[i] * w[j] * (1.0 - u));
            }
        }
        Self { degree, nodes, weights }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub point: Point2,
    pub weight: f64,
}

/// Quadrature over a polygon: the triangle rule mapped onto each sub-triangle.
pub fn quadrature_on_polygon(e: &Polygon, degree: usize) -> Result<Vec<QuadPoint>> {
    if degree == 0 {
        return Err(GeometryError::Parameter("quadrature degree must be >= 1".into()));
    }
    let rule = TriangleQuadRule::new(degree);
    let triangles = e.triangulate()?;
    let mut out = Vec::with_capacity(triangles.len() * rule.weights.len());
    for [a, b, c] in triangles {
        let jac = (b - a).cross(c - a);
        for (l, &w) in rule.nodes.iter().zip(&rule.weights) {
            let point = Point2::new(
                l[0] * a.x + l[1] * b.x + l[2] * c.x,
                l[0] * a.y + l[1] * b.y + l[2] * c.y,
            );
            out.push(QuadPoint { point, weight: w * jac });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for k in 0..2 * n as i32 {
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k + 1) as f64 };
                assert!((got - exact).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn triangle_rule_exactness() {
        // ∫_T x^a y^b = a! b! / (a+b+2)! on the reference triangle.
        for degree in 1..=14 {
            let rule = TriangleQuadRule::new(degree);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let got: f64 = rule
                        .nodes
                        .iter()
                        .zip(&rule.weights)
                        .map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!(((got - exact) / exact).abs() < 1e-13, "deg {degree} a {a} b {b}");
                }
            }
        }
    }

    #[test]
    fn unit_square_integrals() {
        let sq = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        let q = quadrature_on_polygon(&sq, 2).unwrap();
        let one: f64 = q.iter().map(|p| p.weight).sum();
        let xy: f64 = q.iter().map(|p| p.weight * p.point.x * p.point.y).sum();
        assert!((one - 1.0).abs() < 1e-15);
        assert!((xy - 0.25).abs() < 1e-15);
        assert!(quadrature_on_polygon(&sq, 0).is_err());
    }
}
