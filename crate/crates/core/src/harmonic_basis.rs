//! Harmonic polynomial spaces H_ℓ on a reference square.
//!
//! A real harmonic polynomial of degree ≤ ℓ is stored as `Re Σ_k a_k w^k` with complex
//! coefficients `a_k` and a scaled variable `w = (z − center)/scale`. This keeps every
//! operation (linear combination, composition with similarity maps) inside the
//! harmonic space by construction. The monomial basis is
//! `{1, Re w, Im w, Re w², Im w², …, Re w^ℓ, Im w^ℓ}` on the reference square S̃.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{Point2, Polygon, SimilarityMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("invalid basis parameters: {0}")]
    InvalidParameters(String),
    #[error("harmonic Vandermonde matrix is rank deficient (condition estimate {0:e})")]
    Degenerate(f64),
}

/// Real bivariate polynomial with integer coefficients, `coeff[i][j]` multiplying ξ^i η^j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntPoly {
    pub coeff: Vec<Vec<i64>>,
}

impl IntPoly {
    fn zero(degree: usize) -> Self {
        Self {
            coeff: vec![vec![0; degree + 1]; degree + 1],
        }
    }

    pub fn degree_bound(&self) -> usize {
        self.coeff.len() - 1
    }

    /// Δ = ∂²/∂ξ² + ∂²/∂η², exact in integer arithmetic.
    pub fn laplacian(&self) -> IntPoly {
        let d = self.degree_bound();
        let mut out = IntPoly::zero(d);
        for i in 0..=d {
            for j in 0..=d {
                let c = self.coeff[i][j];
                if c == 0 {
                    continue;
                }
                if i >= 2 {
                    out.coeff[i - 2][j] += (i * (i - 1)) as i64 * c;
                }
                if j >= 2 {
                    out.coeff[i][j - 2] += (j * (j - 1)) as i64 * c;
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.iter().flatten().all(|&c| c == 0)
    }
}

/// Re and Im of (ξ + iη)^k as integer polynomials, k = 0..=ℓ, built by the two-term recurrence.
pub fn complex_power_parts(ell: usize) -> Vec<(IntPoly, IntPoly)> {
    let mut out: Vec<(IntPoly, IntPoly)> = Vec::with_capacity(ell + 1);
    let mut re = IntPoly::zero(ell);
    let im = IntPoly::zero(ell);
    re.coeff[0][0] = 1;
    out.push((re, im));
    for k in 1..=ell {
        let (pr, pi) = &out[k - 1];
        let (mut re, mut im) = (IntPoly::zero(ell), IntPoly::zero(ell));
        // (R + iI)(ξ + iη) = (Rξ − Iη) + i(Rη + Iξ)
        for i in 0..ell {
            for j in 0..ell {
                re.coeff[i + 1][j] += pr.coeff[i][j];
                re.coeff[i][j + 1] -= pi.coeff[i][j];
                im.coeff[i][j + 1] += pr.coeff[i][j];
                im.coeff[i + 1][j] += pi.coeff[i][j];
            }
        }
        out.push((re, im));
    }
    out
}

/// `Re Σ_k a_k ((z − center)/scale)^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicPoly {
    pub center: Point2,
    pub scale: f64,
    pub coeffs: Vec<Complex64>,
}

impl HarmonicPoly {
    fn local(&self, p: Point2) -> Complex64 {
        Complex64::new((p.x - self.center.x) / self.scale, (p.y - self.center.y) / self.scale)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn value(&self, p: Point2) -> f64 {
        let w = self.local(p);
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * w + a).re
    }

    /// Value and gradient; for holomorphic f, ∇ Re f = (Re f′, −Im f′).
    pub fn value_and_gradient(&self, p: Point2) -> (f64, Point2) {
        let w = self.local(p);
        let zero = Complex64::new(0.0, 0.0);
        let (mut f, mut df) = (zero, zero);
        for &a in self.coeffs.iter().rev() {
            df = df * w + f;
            f = f * w + a;
        }
        let df = df / self.scale;
        (f.re, Point2::new(df.re, -df.im))
    }

    pub fn gradient(&self, p: Point2) -> Point2 {
        self.value_and_gradient(p).1
    }

    /// Coefficients (in the scaled variables) of the Laplacian of this polynomial,
    /// accumulated by linearity from the exact Laplacians of Re wᵏ and Im wᵏ.
    pub fn laplacian_coefficients(&self) -> Vec<f64> {
        let ell = self.degree();
        let parts = complex_power_parts(ell);
        let mut out = vec![0.0; (ell + 1) * (ell + 1)];
        for (a, (re, im)) in self.coeffs.iter().zip(&parts) {
            let (lr, li) = (re.laplacian(), im.laplacian());
            for i in 0..=ell {
                for j in 0..=ell {
                    // Re(a wᵏ) = Re a · Re wᵏ − Im a · Im wᵏ
                    out[i * (ell + 1) + j] += a.re * lr.coeff[i][j] as f64 - a.im * li.coeff[i][j] as f64;
                }
            }
        }
        out
    }

    /// Expands into real coefficients of ξ^i η^j (scaled variables), row-major (ℓ+1)².
    pub fn real_coefficients(&self) -> Vec<f64> {
        let ell = self.degree();
        let parts = complex_power_parts(ell);
        let mut out = vec![0.0; (ell + 1) * (ell + 1)];
        for (a, (re, im)) in self.coeffs.iter().zip(&parts) {
            for i in 0..=ell {
                for j in 0..=ell {
                    out[i * (ell + 1) + j] += a.re * re.coeff[i][j] as f64 - a.im * im.coeff[i][j] as f64;
                }
            }
        }
        out
    }

    /// `x ↦ self(map(x))`, re-expressed about `center` with length `scale`.
    pub fn compose(&self, map: &SimilarityMap, center: Point2, scale: f64) -> HarmonicPoly {
        let (alpha, beta) = map.as_complex();
        let c_old = Complex64::new(self.center.x, self.center.y);
        let c_new = Complex64::new(center.x, center.y);
        // w_old = A w_new + B
        let a_lin = alpha * scale / self.scale;
        let b_lin = (alpha * c_new + beta - c_old) / self.scale;
        let mut out: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        // Horner over polynomials in w_new: out ← out·(A w + B) + a_k
        for &a in self.coeffs.iter().rev() {
            let mut next = vec![Complex64::new(0.0, 0.0); out.len()];
            for m in 0..out.len() {
                next[m] += out[m] * b_lin;
                if m + 1 < out.len() {
                    next[m + 1] += out[m] * a_lin;
                }
            }
            next[0] += a;
            out = next;
        }
        HarmonicPoly {
            center,
            scale,
            coeffs: out,
        }
    }
}

/// The 2ℓ+1 scaled harmonic monomials on the reference square of diameter `h_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledHarmonicMonomials {
    pub degree: usize,
    pub h_ref: f64,
}

pub fn build_monomials(degree: usize, h_ref: f64) -> Result<ScaledHarmonicMonomials, BasisError> {
    if degree == 0 || !(h_ref > 0.0) || !h_ref.is_finite() {
        return Err(BasisError::InvalidParameters(format!(
            "need degree >= 1 and positive reference diameter, got {degree}, {h_ref}"
        )));
    }
    Ok(ScaledHarmonicMonomials { degree, h_ref })
}

impl ScaledHarmonicMonomials {
    pub fn len(&self) -> usize {
        2 * self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Monomial values at `p` via the recurrence on (x + iy)/s.
    pub fn values(&self, p: Point2, out: &mut [f64]) {
        let w = Complex64::new(p.x / self.h_ref, p.y / self.h_ref);
        let mut pw = Complex64::new(1.0, 0.0);
        out[0] = 1.0;
        for k in 1..=self.degree {
            pw *= w;
            out[2 * k - 1] = pw.re;
            out[2 * k] = pw.im;
        }
    }

    /// Monomial gradients: ∂ₓ wᵏ = k wᵏ⁻¹/s, ∂ᵧ wᵏ = i k wᵏ⁻¹/s.
    pub fn gradients(&self, p: Point2, dx: &mut [f64], dy: &mut [f64]) {
        let w = Complex64::new(p.x / self.h_ref, p.y / self.h_ref);
        let mut prev = Complex64::new(1.0, 0.0);
        dx[0] = 0.0;
        dy[0] = 0.0;
        for k in 1..=self.degree {
            let d = prev * (k as f64 / self.h_ref);
            dx[2 * k - 1] = d.re;
            dx[2 * k] = d.im;
            dy[2 * k - 1] = -d.im;
            dy[2 * k] = d.re;
            prev *= w;
        }
    }

    /// Monomial α as a complex-coefficient harmonic polynomial.
    pub fn as_poly(&self, alpha: usize) -> HarmonicPoly {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.degree + 1];
        if alpha == 0 {
            coeffs[0] = Complex64::new(1.0, 0.0);
        } else {
            let k = alpha.div_ceil(2);
            coeffs[k] = if alpha % 2 == 1 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0)
            };
        }
        HarmonicPoly {
            center: Point2::ORIGIN,
            scale: self.h_ref,
            coeffs,
        }
    }
}

/// Half side length of the reference square with the given diameter.
pub fn reference_half_side(h_ref: f64) -> f64 {
    h_ref / (2.0 * std::f64::consts::SQRT_2)
}

/// Uniform (n+1)² lattice over S̃ and its equal cell weights (summing to |S̃|).
pub fn reference_lattice(h_ref: f64, lattice_n: usize) -> (Vec<Point2>, f64) {
    let a = reference_half_side(h_ref);
    let step = 2.0 * a / lattice_n as f64;
    let mut pts = Vec::with_capacity((lattice_n + 1) * (lattice_n + 1));
    for j in 0..=lattice_n {
        for i in 0..=lattice_n {
            pts.push(Point2::new(-a + step * i as f64, -a + step * j as f64));
        }
    }
    let weight = 4.0 * a * a / pts.len() as f64;
    (pts, weight)
}

/// Orthonormal basis {p̃_β} of H_ℓ(S̃): `p̃_β = Σ_α C[β,α] m_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicBasis {
    monomials: ScaledHarmonicMonomials,
    lattice_n: usize,
    /// Row-major (2ℓ+1)×(2ℓ+1), lower triangular.
    change_of_basis: Vec<f64>,
    polys: Vec<HarmonicPoly>,
}

/// One modified Gram–Schmidt sweep over the columns of `q`, returning R.
fn mgs(q: &mut DMatrix<f64>) -> DMatrix<f64> {
    let d = q.ncols();
    let mut r = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..j {
            let rij = q.column(i).dot(&q.column(j));
            r[(i, j)] = rij;
            let qi = q.column(i).clone_owned();
            q.column_mut(j).axpy(-rij, &qi, 1.0);
        }
        let norm = q.column(j).norm();
        r[(j, j)] = norm;
        if norm > 0.0 {
            q.column_mut(j).unscale_mut(norm);
        }
    }
    r
}

/// Orthonormalises the monomials on the lattice by applying modified Gram–Schmidt twice.
pub fn orthonormalize(mono: ScaledHarmonicMonomials, lattice_n: usize) -> Result<HarmonicBasis, BasisError> {
    let d = mono.len();
    if (lattice_n + 1) * (lattice_n + 1) < 4 * d || lattice_n == 0 {
        return Err(BasisError::InvalidParameters(format!(
            "lattice of {lattice_n} cells per side is too coarse for {d} functions"
        )));
    }
    let (pts, weight) = reference_lattice(mono.h_ref, lattice_n);
    let sw = weight.sqrt();
    let mut q = DMatrix::zeros(pts.len(), d);
    let mut row = vec![0.0; d];
    for (i, &p) in pts.iter().enumerate() {
        mono.values(p, &mut row);
        for (a, v) in row.iter().enumerate() {
            q[(i, a)] = sw * v;
        }
    }
    let r1 = mgs(&mut q);
    let r2 = mgs(&mut q);
    let r = r2 * r1;
    let sv = r.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= 1e12) {
        return Err(BasisError::Degenerate(condition));
    }
    // Back substitution for R⁻¹ (upper triangular); C = (R⁻¹)ᵀ.
    let mut rinv = DMatrix::<f64>::zeros(d, d);
    for col in 0..d {
        for i in (0..=col).rev() {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in i + 1..=col {
                s -= r[(i, k)] * rinv[(k, col)];
            }
            rinv[(i, col)] = s / r[(i, i)];
        }
    }
    let mut c = vec![0.0; d * d];
    for beta in 0..d {
        for alpha in 0..d {
            c[beta * d + alpha] = rinv[(alpha, beta)];
        }
    }
    HarmonicBasis::from_parts(mono.degree, mono.h_ref, lattice_n, c)
}

impl HarmonicBasis {
    /// Rebuilds a basis from a stored change-of-basis matrix without recomputing it.
    pub fn from_parts(degree: usize, h_ref: f64, lattice_n: usize, change_of_basis: Vec<f64>) -> Result<Self, BasisError> {
        let monomials = build_monomials(degree, h_ref)?;
        let d = monomials.len();
        if change_of_basis.len() != d * d || change_of_basis.iter().any(|v| !v.is_finite()) {
            return Err(BasisError::InvalidParameters(format!(
                "change-of-basis matrix must hold {} finite entries",
                d * d
            )));
        }
        let polys = (0..d)
            .map(|beta| {
                let mut coeffs = vec![Complex64::new(0.0, 0.0); degree + 1];
                coeffs[0].re = change_of_basis[beta * d];
                for k in 1..=degree {
                    coeffs[k] = Complex64::new(change_of_basis[beta * d + 2 * k - 1], -change_of_basis[beta * d + 2 * k]);
                }
                HarmonicPoly {
                    center: Point2::ORIGIN,
                    scale: h_ref,
                    coeffs,
                }
            })
            .collect();
        Ok(Self {
            monomials,
            lattice_n,
            change_of_basis,
            polys,
        })
    }

    pub fn degree(&self) -> usize {
        self.monomials.degree
    }

    pub fn h_ref(&self) -> f64 {
        self.monomials.h_ref
    }

    pub fn lattice_n(&self) -> usize {
        self.lattice_n
    }

    pub fn dim(&self) -> usize {
        self.monomials.len()
    }

    pub fn monomials(&self) -> ScaledHarmonicMonomials {
        self.monomials
    }

    pub fn change_of_basis(&self) -> &[f64] {
        &self.change_of_basis
    }

    /// p̃_β as a harmonic polynomial.
    pub fn poly(&self, beta: usize) -> &HarmonicPoly {
        &self.polys[beta]
    }

    /// Σ_β c_β p̃_β.
    pub fn combine(&self, c: &[f64]) -> HarmonicPoly {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.degree() + 1];
        for (cb, p) in c.iter().zip(&self.polys) {
            for (acc, a) in coeffs.iter_mut().zip(&p.coeffs) {
                *acc += a * cb;
            }
        }
        HarmonicPoly {
            center: Point2::ORIGIN,
            scale: self.h_ref(),
            coeffs,
        }
    }

    /// Whether a polygon lies inside S̃.
    pub fn contains(&self, e: &Polygon) -> bool {
        let a = reference_half_side(self.h_ref()) * (1.0 + 1e-12);
        e.vertices().iter().all(|p| p.x.abs() <= a && p.y.abs() <= a)
    }

    fn apply_change(&self, m: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for beta in 0..d {
            // Lower triangular.
            out[beta] = (0..=beta).map(|a| self.change_of_basis[beta * d + a] * m[a]).sum();
        }
    }

    /// Values of all p̃_β at `p`.
    pub fn values_at(&self, p: Point2, out: &mut [f64]) {
        let mut m = vec![0.0; self.dim()];
        self.monomials.values(p, &mut m);
        self.apply_change(&m, out);
    }

    /// Gradients of all p̃_β at `p`.
    pub fn gradients_at(&self, p: Point2, dx: &mut [f64], dy: &mut [f64]) {
        let d = self.dim();
        let (mut mx, mut my) = (vec![0.0; d], vec![0.0; d]);
        self.monomials.gradients(p, &mut mx, &mut my);
        self.apply_change(&mx, dx);
        self.apply_change(&my, dy);
    }

    /// V[i, β] = p̃_β(x_i).
    pub fn evaluate(&self, points: &[Point2]) -> DMatrix<f64> {
        let d = self.dim();
        let mut v = DMatrix::zeros(points.len(), d);
        let mut row = vec![0.0; d];
        for (i, &p) in points.iter().enumerate() {
            self.values_at(p, &mut row);
            for b in 0..d {
                v[(i, b)] = row[b];
            }
        }
        v
    }

    /// (∂ₓp̃_β(x_i), ∂ᵧp̃_β(x_i)).
    pub fn evaluate_gradient(&self, points: &[Point2]) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dim();
        let mut gx = DMatrix::zeros(points.len(), d);
        let mut gy = DMatrix::zeros(points.len(), d);
        let (mut rx, mut ry) = (vec![0.0; d], vec![0.0; d]);
        for (i, &p) in points.iter().enumerate() {
            self.gradients_at(p, &mut rx, &mut ry);
            for b in 0..d {
                gx[(i, b)] = rx[b];
                gy[(i, b)] = ry[b];
            }
        }
        (gx, gy)
    }

    /// Weighted Gram matrix of the basis on its construction lattice.
    pub fn lattice_gram(&self) -> DMatrix<f64> {
        let (pts, w) = reference_lattice(self.h_ref(), self.lattice_n);
        let v = self.evaluate(&pts);
        v.transpose() * &v * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(ell: usize) -> HarmonicBasis {
        orthonormalize(build_monomials(ell, 6.0).unwrap(), 40).unwrap()
    }

    #[test]
    fn dimensions() {
        assert_eq!(build_monomials(1, 6.0).unwrap().len(), 3);
        assert_eq!(build_monomials(5, 6.0).unwrap().len(), 11);
        assert!(build_monomials(0, 6.0).is_err());
        assert!(build_monomials(2, -1.0).is_err());
    }

    #[test]
    fn degree_two_monomials_closed_form() {
        let m = build_monomials(2, 2.0).unwrap();
        let mut v = vec![0.0; 5];
        m.values(Point2::new(0.6, -0.4), &mut v);
        let (x, y) = (0.3, -0.2);
        let expect = [1.0, x, y, x * x - y * y, 2.0 * x * y];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        for (re, im) in complex_power_parts(6) {
            assert!(re.laplacian().is_zero() && im.laplacian().is_zero());
        }
    }

    #[test]
    fn gram_is_identity_and_c_lower_triangular() {
        let b = basis(5);
        let g = b.lattice_gram();
        let err = (g - DMatrix::identity(11, 11)).abs().max();
        assert!(err < 1e-10, "{err}");
        let c = b.change_of_basis();
        for i in 0..11 {
            for j in i + 1..11 {
                assert_eq!(c[i * 11 + j], 0.0);
            }
        }
    }

    #[test]
    fn linear_members_decouple_from_constant() {
        let b = basis(1);
        let c = b.change_of_basis();
        // p̃₂ ∝ x and p̃₃ ∝ y on a symmetric lattice.
        assert!(c[3].abs() < 1e-12);
        assert!(c[6].abs() < 1e-12 && c[7].abs() < 1e-12);
        let mut v1 = [0.0; 3];
        let mut v2 = [0.0; 3];
        b.values_at(Point2::new(0.4, 0.3), &mut v1);
        b.values_at(Point2::new(-0.4, 0.3), &mut v2);
        assert!((v1[1] + v2[1]).abs() < 1e-14);
        assert!((v1[0] - v2[0]).abs() < 1e-14);
    }

    #[test]
    fn poly_form_matches_direct_evaluation() {
        let b = basis(5);
        let p = Point2::new(0.7, -1.1);
        let mut v = vec![0.0; 11];
        let (mut dx, mut dy) = (vec![0.0; 11], vec![0.0; 11]);
        b.values_at(p, &mut v);
        b.gradients_at(p, &mut dx, &mut dy);
        for beta in 0..11 {
            let (val, g) = b.poly(beta).value_and_gradient(p);
            assert!((val - v[beta]).abs() < 1e-13);
            assert!((g.x - dx[beta]).abs() < 1e-13 && (g.y - dy[beta]).abs() < 1e-13);
        }
        let constant = b.poly(0).gradient(p);
        assert_eq!(constant, Point2::ORIGIN);
    }

    #[test]
    fn composition_with_similarity() {
        let b = basis(5);
        let c: Vec<f64> = (0..11).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = b.combine(&c);
        let map = SimilarityMap::from_cos_sin(0.8, -0.6, 3.0, Point2::new(0.2, -0.1));
        let g = f.compose(&map, Point2::new(0.1, 0.05), 0.3);
        for p in [Point2::new(0.0, 0.0), Point2::new(0.3, -0.2), Point2::new(-0.15, 0.25)] {
            let (v1, g1) = g.value_and_gradient(p);
            let (v2, g2) = f.value_and_gradient(map.apply(p));
            let g2 = map.pull_back_gradient(g2);
            assert!((v1 - v2).abs() < 1e-12);
            assert!(g1.distance(g2) < 1e-11);
        }
        assert!(g.laplacian_coefficients().iter().all(|&v| v == 0.0));
    }
}
